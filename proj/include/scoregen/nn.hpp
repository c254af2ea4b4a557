// Minimal transformer backbone shared by the genre tagger and the generator.
// Dense math is delegated to Eigen; everything else (attention masking,
// layer norm, losses, reverse-mode gradients, the optimizer, checkpoints)
// is written out explicitly so runs are deterministic and debuggable.
#ifndef SCOREGEN_NN_HPP
#define SCOREGEN_NN_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "scoregen/errors.hpp"
#include "scoregen/rng.hpp"

namespace scoregen {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Col = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 256;
    int n_layers = 4;
    int n_heads = 4;
    int d_ff = 1024;
    int max_seq_len = 1024;
    double dropout_rate = 0.0;
    bool causal = true;
    /// Dimension of the external conditioning vector; 0 disables the
    /// conditioning projection entirely.
    int d_cond = 0;
    /// Number of multi-label output heads; 0 disables the classifier head.
    int n_classes = 0;
    /// Kernelized feature-map attention instead of softmax attention.
    bool linear_attention = false;

    void validate() const {
        if (vocab_size < 2) throw InvalidConfig("vocab_size must be >= 2");
        if (d_model < 2 || d_model % 2 != 0)
            throw InvalidConfig("d_model must be even and >= 2");
        if (n_heads < 1 || d_model % n_heads != 0)
            throw InvalidConfig("d_model must be divisible by n_heads");
        if (n_layers < 1) throw InvalidConfig("n_layers must be >= 1");
        if (d_ff < 1) throw InvalidConfig("d_ff must be >= 1");
        if (max_seq_len < 1) throw InvalidConfig("max_seq_len must be >= 1");
        if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
            throw InvalidConfig("dropout_rate must be in [0, 1)");
        if (d_cond < 0) throw InvalidConfig("d_cond must be >= 0");
        if (n_classes < 0) throw InvalidConfig("n_classes must be >= 0");
    }
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
    return nlohmann::json{{"vocab_size", c.vocab_size},
                          {"d_model", c.d_model},
                          {"n_layers", c.n_layers},
                          {"n_heads", c.n_heads},
                          {"d_ff", c.d_ff},
                          {"max_seq_len", c.max_seq_len},
                          {"dropout_rate", c.dropout_rate},
                          {"causal", c.causal},
                          {"d_cond", c.d_cond},
                          {"n_classes", c.n_classes},
                          {"linear_attention", c.linear_attention}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.causal = j.at("causal").get<bool>();
    c.d_cond = j.value("d_cond", 0);
    c.n_classes = j.value("n_classes", 0);
    c.linear_attention = j.value("linear_attention", false);
    c.validate();
    return c;
}

enum class Objective { next_token_ce, multilabel_bce };

/// One training example. `cond` is empty when the sequence is unconditioned;
/// `labels` (one per class, 0/1) is only read by the multilabel objective.
struct Sequence {
    std::vector<int> ids;
    std::vector<float> cond;
    std::vector<float> labels;
};
using Batch = std::vector<Sequence>;

/// Attention / layer-norm health counters collected during a forward pass.
struct ForwardStats {
    double max_softmax_row_err = 0.0;  // max |sum(row) - 1| over attention rows
    double max_ln_mean = 0.0;          // max |mean| of normalized rows pre-affine
    double max_ln_var_err = 0.0;       // max |var - 1| of normalized rows pre-affine
};

namespace detail {

inline double gelu_fwd(double x) {
    const double c = 0.7978845608028654;  // sqrt(2/pi)
    const double u = c * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_bwd(double x) {
    const double c = 0.7978845608028654;
    const double u = c * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

// elu(x)+1, the positive feature map used by kernelized attention.
inline double feature_map(double x) { return x > 0.0 ? x + 1.0 : std::exp(x); }
inline double feature_map_bwd(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

}  // namespace detail

template <class S>
class Model {
public:
    struct Param {
        std::string name;
        Mat<S> w;
    };
    using Gradients = std::vector<Mat<S>>;

    Model(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        build_params(seed);
        build_positional_table();
    }

    const ModelConfig& config() const { return cfg_; }
    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }
    const Mat<S>& positional_table() const { return pe_; }

    int param_index(std::string_view name) const {
        for (std::size_t i = 0; i < params_.size(); ++i)
            if (params_[i].name == name) return static_cast<int>(i);
        return -1;
    }

    Gradients zero_gradients() const {
        Gradients g;
        g.reserve(params_.size());
        for (const auto& p : params_)
            g.push_back(Mat<S>::Zero(p.w.rows(), p.w.cols()));
        return g;
    }

    /// Per-position logits, shape len(ids) x vocab_size.
    Mat<S> logits(const std::vector<int>& ids, const std::vector<float>& cond = {},
                  ForwardStats* stats = nullptr) const {
        check_sequence(ids, false);
        Trace tr;
        forward_seq(ids, cond, tr, nullptr, nullptr, stats);
        return tr.x_f * params_[layout_.lm_head].w;
    }

    /// Pooled classifier logits, shape 1 x n_classes. Trailing pads are
    /// excluded from the pool (and, being masked keys, from attention too).
    Mat<S> class_logits(const std::vector<int>& ids, ForwardStats* stats = nullptr) const {
        if (cfg_.n_classes == 0) throw InvalidConfig("model has no classifier head");
        std::vector<int> trimmed = strip_trailing_pads(ids);
        check_sequence(trimmed, true);
        Mat<S> pooled = Mat<S>::Zero(1, cfg_.d_model);
        if (!trimmed.empty()) {
            Trace tr;
            forward_seq(trimmed, {}, tr, nullptr, nullptr, stats);
            pooled = tr.x_f.colwise().mean();
        }
        return pooled * params_[layout_.cls_w].w + params_[layout_.cls_b].w;
    }

    double loss(const Batch& batch, Objective objective) const {
        return run_batch(batch, objective, nullptr, nullptr);
    }

    /// Mean loss over the batch plus parameter gradients. `dropout_rng`
    /// enables (inverted) dropout; leave null for deterministic evaluation.
    double loss_and_grad(const Batch& batch, Objective objective, Gradients& grads,
                         Rng* dropout_rng = nullptr) const {
        return run_batch(batch, objective, &grads, dropout_rng);
    }

private:
    template <class T>
    friend class Decoder;

    struct Layout {
        int tok_emb = -1, cond_proj = -1, lnf_g = -1, lnf_b = -1, lm_head = -1;
        int cls_w = -1, cls_b = -1;
        struct Layer {
            int ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
            int ln2_g, ln2_b, w1, b1, w2, b2;
        };
        std::vector<Layer> layers;
    };

    struct LayerTrace {
        Mat<S> x_in;               // block input
        Mat<S> n1;                 // LN1 output
        Col<S> mean1, rstd1;
        Mat<S> q, k, v;            // post-bias projections
        std::vector<Mat<S>> att;   // per head, normalized weights (T x T)
        std::vector<Col<S>> kernel_norm;  // per head, raw-score row sums (linear attention)
        Mat<S> ctx;                // concatenated head outputs, pre out-projection
        Mat<S> drop_attn;          // dropout mask on the attention branch (may be empty)
        Mat<S> x_mid;              // after attention residual
        Mat<S> n2;
        Col<S> mean2, rstd2;
        Mat<S> h_pre;              // pre-GELU hidden
        Mat<S> h_act;              // post-GELU hidden
        Mat<S> drop_ff;            // dropout mask on the feed-forward branch
    };

    struct Trace {
        std::vector<int> ids;
        Mat<S> x0;
        std::vector<LayerTrace> layers;
        Mat<S> x_f_in;  // input of the final layer norm
        Col<S> mean_f, rstd_f;
        Mat<S> x_f;     // final layer norm output
    };

    ModelConfig cfg_;
    std::vector<Param> params_;
    Layout layout_;
    Mat<S> pe_;

    int add_param(const std::string& name, int rows, int cols) {
        params_.push_back({name, Mat<S>::Zero(rows, cols)});
        return static_cast<int>(params_.size() - 1);
    }

    void build_params(std::uint64_t seed) {
        const int d = cfg_.d_model;
        layout_.tok_emb = add_param("tok_emb", cfg_.vocab_size, d);
        if (cfg_.d_cond > 0) layout_.cond_proj = add_param("cond_proj", cfg_.d_cond, d);
        layout_.layers.resize(cfg_.n_layers);
        for (int l = 0; l < cfg_.n_layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            auto& L = layout_.layers[l];
            L.ln1_g = add_param(p + "ln1.gamma", 1, d);
            L.ln1_b = add_param(p + "ln1.beta", 1, d);
            L.wq = add_param(p + "attn.wq", d, d);
            L.bq = add_param(p + "attn.bq", 1, d);
            L.wk = add_param(p + "attn.wk", d, d);
            L.bk = add_param(p + "attn.bk", 1, d);
            L.wv = add_param(p + "attn.wv", d, d);
            L.bv = add_param(p + "attn.bv", 1, d);
            L.wo = add_param(p + "attn.wo", d, d);
            L.bo = add_param(p + "attn.bo", 1, d);
            L.ln2_g = add_param(p + "ln2.gamma", 1, d);
            L.ln2_b = add_param(p + "ln2.beta", 1, d);
            L.w1 = add_param(p + "ff.w1", d, cfg_.d_ff);
            L.b1 = add_param(p + "ff.b1", 1, cfg_.d_ff);
            L.w2 = add_param(p + "ff.w2", cfg_.d_ff, d);
            L.b2 = add_param(p + "ff.b2", 1, d);
        }
        layout_.lnf_g = add_param("ln_f.gamma", 1, d);
        layout_.lnf_b = add_param("ln_f.beta", 1, d);
        layout_.lm_head = add_param("lm_head", d, cfg_.vocab_size);
        if (cfg_.n_classes > 0) {
            layout_.cls_w = add_param("cls.w", d, cfg_.n_classes);
            layout_.cls_b = add_param("cls.b", 1, cfg_.n_classes);
        }

        Rng rng(seed);
        for (auto& p : params_) {
            if (p.name.ends_with("gamma")) {
                p.w.setOnes();
            } else if (p.name == "cond_proj" || p.w.rows() == 1) {
                // biases and the conditioning projection start at zero, so
                // conditioning begins as an exact no-op
                p.w.setZero();
            } else {
                for (Eigen::Index i = 0; i < p.w.size(); ++i)
                    p.w.data()[i] = static_cast<S>(rng.normal(0.0, 0.02));
            }
        }
    }

    void build_positional_table() {
        const int d = cfg_.d_model;
        pe_.resize(cfg_.max_seq_len, d);
        for (int t = 0; t < cfg_.max_seq_len; ++t) {
            for (int i = 0; i < d / 2; ++i) {
                const double freq = std::pow(10000.0, -2.0 * i / d);
                pe_(t, 2 * i) = static_cast<S>(std::sin(t * freq));
                pe_(t, 2 * i + 1) = static_cast<S>(std::cos(t * freq));
            }
        }
    }

    static std::vector<int> strip_trailing_pads(const std::vector<int>& ids) {
        std::size_t n = ids.size();
        while (n > 0 && ids[n - 1] == 0) --n;
        return std::vector<int>(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n));
    }

    void check_sequence(const std::vector<int>& ids, bool allow_empty) const {
        if (!allow_empty && ids.empty()) throw OutOfRangeField("sequence_length", 0);
        if (ids.size() > static_cast<std::size_t>(cfg_.max_seq_len))
            throw SequenceTooLong(ids.size(), cfg_.max_seq_len);
        for (int id : ids)
            if (id < 0 || id >= cfg_.vocab_size) throw OutOfRangeField("token_id", id);
    }

    Mat<S> project_conditioning(const std::vector<float>& cond) const {
        if (cond.empty()) return Mat<S>();
        if (cfg_.d_cond == 0) throw ConditioningDimMismatch(cond.size(), 0);
        if (cond.size() != static_cast<std::size_t>(cfg_.d_cond))
            throw ConditioningDimMismatch(cond.size(), cfg_.d_cond);
        Mat<S> c(1, cfg_.d_cond);
        for (int i = 0; i < cfg_.d_cond; ++i) c(0, i) = static_cast<S>(cond[i]);
        Mat<S> proj = c * params_[layout_.cond_proj].w;
        if ((proj.array() == S(0)).all()) return Mat<S>();  // exact no-op, skip the add
        return proj;
    }

    // y = gamma .* (x - mean) * rstd + beta, per row; mean/rstd returned for backward.
    void layer_norm(const Mat<S>& x, int gi, int bi, Mat<S>& y, Col<S>& mean, Col<S>& rstd,
                    ForwardStats* stats) const {
        const auto& gamma = params_[gi].w;
        const auto& beta = params_[bi].w;
        const Eigen::Index T = x.rows(), d = x.cols();
        y.resize(T, d);
        mean.resize(T);
        rstd.resize(T);
        for (Eigen::Index i = 0; i < T; ++i) {
            const S m = x.row(i).mean();
            const S var = (x.row(i).array() - m).square().mean();
            const S r = S(1) / std::sqrt(var + S(1e-5));
            mean(i) = m;
            rstd(i) = r;
            y.row(i) = ((x.row(i).array() - m) * r) * gamma.array() + beta.array();
            if (stats) {
                const double nm = static_cast<double>(((x.row(i).array() - m) * r).mean());
                const double nv =
                    static_cast<double>((((x.row(i).array() - m) * r) - S(nm)).square().mean());
                stats->max_ln_mean = std::max(stats->max_ln_mean, std::abs(nm));
                stats->max_ln_var_err = std::max(stats->max_ln_var_err, std::abs(nv - 1.0));
            }
        }
    }

    // dy -> dx; accumulates dgamma/dbeta. x, mean, rstd are the forward values.
    void layer_norm_backward(const Mat<S>& x, const Col<S>& mean, const Col<S>& rstd, int gi,
                             int bi, const Mat<S>& dy, Mat<S>& dx, Gradients& g) const {
        const auto& gamma = params_[gi].w;
        const Eigen::Index T = x.rows(), d = x.cols();
        dx.resize(T, d);
        for (Eigen::Index i = 0; i < T; ++i) {
            const auto xhat = ((x.row(i).array() - mean(i)) * rstd(i)).eval();
            g[gi].row(0).array() += dy.row(i).array() * xhat;
            g[bi].row(0).array() += dy.row(i).array();
            const auto dxhat = (dy.row(i).array() * gamma.array()).eval();
            const S m1 = dxhat.mean();
            const S m2 = (dxhat * xhat).mean();
            dx.row(i).array() = rstd(i) * (dxhat - m1 - xhat * m2);
        }
        (void)d;
    }

    // Normalize attention scores in place. Row i may attend to j < limit(i)
    // (limit = i+1 in causal mode) where key_ok[j]; everything else gets
    // exactly zero weight. Softmax mode exponentiates; linear mode divides by
    // the row sum of the (positive) kernel scores, saved in `norm`.
    void normalize_scores(Mat<S>& scores, const std::vector<unsigned char>& key_ok, bool linear,
                          Col<S>* norm, ForwardStats* stats) const {
        const Eigen::Index T = scores.rows();
        if (norm) norm->resize(T);
        for (Eigen::Index i = 0; i < T; ++i) {
            const Eigen::Index jmax = cfg_.causal ? i + 1 : T;
            S* row = &scores(i, 0);
            if (linear) {
                S sum = 0;
                for (Eigen::Index j = 0; j < jmax; ++j)
                    if (key_ok[static_cast<std::size_t>(j)]) sum += row[j];
                (*norm)(i) = sum;
                const S inv = sum > S(0) ? S(1) / sum : S(0);
                for (Eigen::Index j = 0; j < scores.cols(); ++j)
                    row[j] = (j < jmax && key_ok[static_cast<std::size_t>(j)]) ? row[j] * inv : S(0);
            } else {
                S mx = std::numeric_limits<S>::lowest();
                for (Eigen::Index j = 0; j < jmax; ++j)
                    if (key_ok[static_cast<std::size_t>(j)]) mx = std::max(mx, row[j]);
                if (mx == std::numeric_limits<S>::lowest()) {
                    for (Eigen::Index j = 0; j < scores.cols(); ++j) row[j] = S(0);
                    continue;
                }
                S sum = 0;
                for (Eigen::Index j = 0; j < jmax; ++j) {
                    if (key_ok[static_cast<std::size_t>(j)]) {
                        row[j] = std::exp(row[j] - mx);
                        sum += row[j];
                    } else {
                        row[j] = S(0);
                    }
                }
                for (Eigen::Index j = jmax; j < scores.cols(); ++j) row[j] = S(0);
                const S inv = S(1) / sum;
                for (Eigen::Index j = 0; j < jmax; ++j) row[j] *= inv;
            }
            if (stats) {
                double rs = 0;
                bool any = false;
                for (Eigen::Index j = 0; j < scores.cols(); ++j) {
                    rs += static_cast<double>(row[j]);
                    any = any || row[j] != S(0);
                }
                if (any)
                    stats->max_softmax_row_err =
                        std::max(stats->max_softmax_row_err, std::abs(rs - 1.0));
            }
        }
    }

    Mat<S> make_dropout_mask(Eigen::Index rows, Eigen::Index cols, Rng* rng) const {
        if (!rng || cfg_.dropout_rate <= 0.0) return Mat<S>();
        Mat<S> m(rows, cols);
        const S keep_inv = static_cast<S>(1.0 / (1.0 - cfg_.dropout_rate));
        for (Eigen::Index i = 0; i < m.size(); ++i)
            m.data()[i] = rng->uniform() < cfg_.dropout_rate ? S(0) : keep_inv;
        return m;
    }

    void forward_seq(const std::vector<int>& ids, const std::vector<float>& cond, Trace& tr,
                     const Mat<S>* cond_proj_row, Rng* dropout_rng,
                     ForwardStats* stats) const {
        const int T = static_cast<int>(ids.size());
        const int d = cfg_.d_model;
        const int h = cfg_.n_heads;
        const int dh = d / h;
        const S inv_sqrt_dh = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

        tr.ids = ids;
        tr.x0.resize(T, d);
        const auto& emb = params_[layout_.tok_emb].w;
        for (int t = 0; t < T; ++t) tr.x0.row(t) = emb.row(ids[static_cast<std::size_t>(t)]);
        Mat<S> proj = cond_proj_row ? *cond_proj_row : project_conditioning(cond);
        if (proj.size() > 0) tr.x0.rowwise() += proj.row(0);
        tr.x0 += pe_.topRows(T);

        std::vector<unsigned char> key_ok(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t)
            key_ok[static_cast<std::size_t>(t)] = ids[static_cast<std::size_t>(t)] != 0;

        tr.layers.resize(static_cast<std::size_t>(cfg_.n_layers));
        Mat<S> x = tr.x0;
        for (int l = 0; l < cfg_.n_layers; ++l) {
            auto& L = layout_.layers[static_cast<std::size_t>(l)];
            auto& lt = tr.layers[static_cast<std::size_t>(l)];
            lt.x_in = x;
            layer_norm(lt.x_in, L.ln1_g, L.ln1_b, lt.n1, lt.mean1, lt.rstd1, stats);
            lt.q.noalias() = lt.n1 * params_[L.wq].w;
            lt.q.rowwise() += params_[L.bq].w.row(0);
            lt.k.noalias() = lt.n1 * params_[L.wk].w;
            lt.k.rowwise() += params_[L.bk].w.row(0);
            lt.v.noalias() = lt.n1 * params_[L.wv].w;
            lt.v.rowwise() += params_[L.bv].w.row(0);

            lt.att.resize(static_cast<std::size_t>(h));
            if (cfg_.linear_attention) lt.kernel_norm.resize(static_cast<std::size_t>(h));
            lt.ctx.resize(T, d);
            for (int hd = 0; hd < h; ++hd) {
                const auto Qh = lt.q.middleCols(hd * dh, dh);
                const auto Kh = lt.k.middleCols(hd * dh, dh);
                const auto Vh = lt.v.middleCols(hd * dh, dh);
                Mat<S>& P = lt.att[static_cast<std::size_t>(hd)];
                if (cfg_.linear_attention) {
                    Mat<S> fq = Qh.unaryExpr([](S x0) {
                        return static_cast<S>(detail::feature_map(static_cast<double>(x0)));
                    });
                    Mat<S> fk = Kh.unaryExpr([](S x0) {
                        return static_cast<S>(detail::feature_map(static_cast<double>(x0)));
                    });
                    P.noalias() = fq * fk.transpose();
                    normalize_scores(P, key_ok, true,
                                     &lt.kernel_norm[static_cast<std::size_t>(hd)], stats);
                } else {
                    P.noalias() = Qh * Kh.transpose() * inv_sqrt_dh;
                    normalize_scores(P, key_ok, false, nullptr, stats);
                }
                lt.ctx.middleCols(hd * dh, dh).noalias() = P * Vh;
            }
            Mat<S> attn_out = lt.ctx * params_[L.wo].w;
            attn_out.rowwise() += params_[L.bo].w.row(0);
            lt.drop_attn = make_dropout_mask(T, d, dropout_rng);
            if (lt.drop_attn.size() > 0) attn_out.array() *= lt.drop_attn.array();
            lt.x_mid = lt.x_in + attn_out;

            layer_norm(lt.x_mid, L.ln2_g, L.ln2_b, lt.n2, lt.mean2, lt.rstd2, stats);
            lt.h_pre.noalias() = lt.n2 * params_[L.w1].w;
            lt.h_pre.rowwise() += params_[L.b1].w.row(0);
            lt.h_act = lt.h_pre.unaryExpr([](S x0) {
                return static_cast<S>(detail::gelu_fwd(static_cast<double>(x0)));
            });
            Mat<S> ff_out = lt.h_act * params_[L.w2].w;
            ff_out.rowwise() += params_[L.b2].w.row(0);
            lt.drop_ff = make_dropout_mask(T, d, dropout_rng);
            if (lt.drop_ff.size() > 0) ff_out.array() *= lt.drop_ff.array();
            x = lt.x_mid + ff_out;
        }
        tr.x_f_in = x;
        layer_norm(tr.x_f_in, layout_.lnf_g, layout_.lnf_b, tr.x_f, tr.mean_f, tr.rstd_f, stats);
    }

    // Backward from d(x_f) through every block into parameter gradients.
    // `cond` is needed to route gradient into the conditioning projection.
    void backward_seq(const Trace& tr, const std::vector<float>& cond, Mat<S> dx_f,
                      Gradients& g) const {
        const int T = static_cast<int>(tr.ids.size());
        const int d = cfg_.d_model;
        const int h = cfg_.n_heads;
        const int dh = d / h;
        const S inv_sqrt_dh = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

        Mat<S> dx;
        layer_norm_backward(tr.x_f_in, tr.mean_f, tr.rstd_f, layout_.lnf_g, layout_.lnf_b, dx_f,
                            dx, g);

        for (int l = cfg_.n_layers - 1; l >= 0; --l) {
            auto& L = layout_.layers[static_cast<std::size_t>(l)];
            const auto& lt = tr.layers[static_cast<std::size_t>(l)];

            // feed-forward branch
            Mat<S> dff = dx;
            if (lt.drop_ff.size() > 0) dff.array() *= lt.drop_ff.array();
            g[L.b2].row(0) += dff.colwise().sum();
            g[L.w2].noalias() += lt.h_act.transpose() * dff;
            Mat<S> dh_act = dff * params_[L.w2].w.transpose();
            Mat<S> dh_pre = lt.h_pre.binaryExpr(dh_act, [](S x0, S dy) {
                return static_cast<S>(detail::gelu_bwd(static_cast<double>(x0)) *
                                      static_cast<double>(dy));
            });
            g[L.b1].row(0) += dh_pre.colwise().sum();
            g[L.w1].noalias() += lt.n2.transpose() * dh_pre;
            Mat<S> dn2 = dh_pre * params_[L.w1].w.transpose();
            Mat<S> dx_mid;
            layer_norm_backward(lt.x_mid, lt.mean2, lt.rstd2, L.ln2_g, L.ln2_b, dn2, dx_mid, g);
            dx_mid += dx;  // residual

            // attention branch
            Mat<S> dattn = dx_mid;
            if (lt.drop_attn.size() > 0) dattn.array() *= lt.drop_attn.array();
            g[L.bo].row(0) += dattn.colwise().sum();
            g[L.wo].noalias() += lt.ctx.transpose() * dattn;
            Mat<S> dctx = dattn * params_[L.wo].w.transpose();

            Mat<S> dq = Mat<S>::Zero(T, d), dk = Mat<S>::Zero(T, d), dv = Mat<S>::Zero(T, d);
            for (int hd = 0; hd < h; ++hd) {
                const auto Qh = lt.q.middleCols(hd * dh, dh);
                const auto Kh = lt.k.middleCols(hd * dh, dh);
                const auto Vh = lt.v.middleCols(hd * dh, dh);
                const Mat<S>& P = lt.att[static_cast<std::size_t>(hd)];
                const auto dctx_h = dctx.middleCols(hd * dh, dh);
                Mat<S> dP = dctx_h * Vh.transpose();
                dv.middleCols(hd * dh, dh).noalias() += P.transpose() * dctx_h;
                // normalization backward: masked entries have P == 0 and get 0.
                Mat<S> dS(T, T);
                for (int i = 0; i < T; ++i) {
                    S dot = 0;
                    for (int j = 0; j < T; ++j) dot += dP(i, j) * P(i, j);
                    if (cfg_.linear_attention) {
                        const S norm = lt.kernel_norm[static_cast<std::size_t>(hd)](i);
                        const S inv = norm > S(0) ? S(1) / norm : S(0);
                        for (int j = 0; j < T; ++j)
                            dS(i, j) = P(i, j) != S(0) ? (dP(i, j) - dot) * inv : S(0);
                    } else {
                        for (int j = 0; j < T; ++j) dS(i, j) = P(i, j) * (dP(i, j) - dot);
                    }
                }
                if (cfg_.linear_attention) {
                    Mat<S> fq = Qh.unaryExpr([](S x0) {
                        return static_cast<S>(detail::feature_map(static_cast<double>(x0)));
                    });
                    Mat<S> fk = Kh.unaryExpr([](S x0) {
                        return static_cast<S>(detail::feature_map(static_cast<double>(x0)));
                    });
                    Mat<S> dfq = dS * fk;
                    Mat<S> dfk = dS.transpose() * fq;
                    dq.middleCols(hd * dh, dh).noalias() +=
                        dfq.binaryExpr(Qh.eval(), [](S dy, S x0) {
                            return static_cast<S>(static_cast<double>(dy) *
                                                  detail::feature_map_bwd(static_cast<double>(x0)));
                        });
                    dk.middleCols(hd * dh, dh).noalias() +=
                        dfk.binaryExpr(Kh.eval(), [](S dy, S x0) {
                            return static_cast<S>(static_cast<double>(dy) *
                                                  detail::feature_map_bwd(static_cast<double>(x0)));
                        });
                } else {
                    dq.middleCols(hd * dh, dh).noalias() += dS * Kh * inv_sqrt_dh;
                    dk.middleCols(hd * dh, dh).noalias() += dS.transpose() * Qh * inv_sqrt_dh;
                }
            }

            g[L.bq].row(0) += dq.colwise().sum();
            g[L.bk].row(0) += dk.colwise().sum();
            g[L.bv].row(0) += dv.colwise().sum();
            g[L.wq].noalias() += lt.n1.transpose() * dq;
            g[L.wk].noalias() += lt.n1.transpose() * dk;
            g[L.wv].noalias() += lt.n1.transpose() * dv;
            Mat<S> dn1 = dq * params_[L.wq].w.transpose();
            dn1.noalias() += dk * params_[L.wk].w.transpose();
            dn1.noalias() += dv * params_[L.wv].w.transpose();
            Mat<S> dx_in;
            layer_norm_backward(lt.x_in, lt.mean1, lt.rstd1, L.ln1_g, L.ln1_b, dn1, dx_in, g);
            dx = dx_mid + dx_in;
        }

        // embedding + conditioning projection
        auto& demb = g[layout_.tok_emb];
        for (int t = 0; t < T; ++t) demb.row(tr.ids[static_cast<std::size_t>(t)]) += dx.row(t);
        if (!cond.empty() && layout_.cond_proj >= 0) {
            Mat<S> dsum = dx.colwise().sum();  // projection row is added at every position
            auto& dproj = g[layout_.cond_proj];
            for (int i = 0; i < cfg_.d_cond; ++i)
                dproj.row(i) += dsum.row(0) * static_cast<S>(cond[static_cast<std::size_t>(i)]);
        }
    }

    double run_batch(const Batch& batch, Objective objective, Gradients* grads,
                     Rng* dropout_rng) const {
        if (batch.empty()) throw EmptyBatch();
        if (objective == Objective::multilabel_bce && cfg_.n_classes == 0)
            throw InvalidConfig("multilabel objective requires n_classes > 0");
        if (grads) {
            if (grads->size() != params_.size()) {
                *grads = zero_gradients();
            } else {
                for (auto& g : *grads) g.setZero();
            }
        }

        // Trim pads up front; predicted-position count is known before any
        // forward pass, so per-sequence gradients can be scaled globally.
        std::vector<std::vector<int>> trimmed(batch.size());
        std::size_t n_pred = 0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            trimmed[b] = strip_trailing_pads(batch[b].ids);
            check_sequence(trimmed[b], objective == Objective::multilabel_bce);
            if (objective == Objective::next_token_ce) {
                for (std::size_t t = 0; t + 1 < trimmed[b].size(); ++t)
                    if (trimmed[b][t + 1] != 0) ++n_pred;
            } else {
                if (batch[b].labels.size() != static_cast<std::size_t>(cfg_.n_classes))
                    throw OutOfRangeField("labels_size",
                                          static_cast<long long>(batch[b].labels.size()));
            }
        }
        if (objective == Objective::next_token_ce && n_pred == 0)
            throw OutOfRangeField("predicted_positions", 0);

        double total = 0.0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const auto& ids = trimmed[b];
            Trace tr;
            forward_seq(ids, batch[b].cond, tr, nullptr, dropout_rng, nullptr);
            const int T = static_cast<int>(ids.size());

            if (objective == Objective::next_token_ce) {
                Mat<S> logit_rows = tr.x_f * params_[layout_.lm_head].w;
                Mat<S> dlogits;
                if (grads) dlogits = Mat<S>::Zero(T, cfg_.vocab_size);
                for (int t = 0; t + 1 < T; ++t) {
                    const int target = ids[static_cast<std::size_t>(t) + 1];
                    if (target == 0) continue;
                    const auto row = logit_rows.row(t);
                    const S mx = row.maxCoeff();
                    double sum = 0.0;
                    for (int vtok = 0; vtok < cfg_.vocab_size; ++vtok)
                        sum += std::exp(static_cast<double>(row(vtok) - mx));
                    const double lse = std::log(sum) + static_cast<double>(mx);
                    total += (lse - static_cast<double>(row(target))) / static_cast<double>(n_pred);
                    if (grads) {
                        for (int vtok = 0; vtok < cfg_.vocab_size; ++vtok)
                            dlogits(t, vtok) = static_cast<S>(
                                std::exp(static_cast<double>(row(vtok) - mx)) / sum /
                                static_cast<double>(n_pred));
                        dlogits(t, target) -= static_cast<S>(1.0 / static_cast<double>(n_pred));
                    }
                }
                if (grads) {
                    (*grads)[layout_.lm_head].noalias() += tr.x_f.transpose() * dlogits;
                    Mat<S> dx_f = dlogits * params_[layout_.lm_head].w.transpose();
                    backward_seq(tr, batch[b].cond, std::move(dx_f), *grads);
                }
            } else {
                Mat<S> pooled = T > 0 ? Mat<S>(tr.x_f.colwise().mean())
                                      : Mat<S>(Mat<S>::Zero(1, cfg_.d_model));
                Mat<S> z = pooled * params_[layout_.cls_w].w + params_[layout_.cls_b].w;
                const double denom =
                    static_cast<double>(cfg_.n_classes) * static_cast<double>(batch.size());
                Mat<S> dz(1, cfg_.n_classes);
                for (int c = 0; c < cfg_.n_classes; ++c) {
                    const double zc = static_cast<double>(z(0, c));
                    const double y = static_cast<double>(batch[b].labels[static_cast<std::size_t>(c)]);
                    total += (std::max(zc, 0.0) - zc * y + std::log1p(std::exp(-std::abs(zc)))) /
                             denom;
                    const double sig = 1.0 / (1.0 + std::exp(-zc));
                    dz(0, c) = static_cast<S>((sig - y) / denom);
                }
                if (grads) {
                    (*grads)[layout_.cls_w].noalias() += pooled.transpose() * dz;
                    (*grads)[layout_.cls_b] += dz;
                    if (T > 0) {
                        Mat<S> dpooled = dz * params_[layout_.cls_w].w.transpose();
                        Mat<S> dx_f(T, cfg_.d_model);
                        const S inv_t = static_cast<S>(1.0 / static_cast<double>(T));
                        for (int t = 0; t < T; ++t) dx_f.row(t) = dpooled.row(0) * inv_t;
                        backward_seq(tr, batch[b].cond, std::move(dx_f), *grads);
                    }
                }
            }
        }
        return total;
    }
};

/// Incremental decoder over a causal model: feed one token at a time, get
/// next-token logits back. Keys/values are cached per layer so each step is
/// O(T) instead of O(T^2).
template <class S>
class Decoder {
public:
    explicit Decoder(const Model<S>& model, const std::vector<float>& cond = {})
        : m_(model) {
        if (!m_.cfg_.causal) throw InvalidConfig("incremental decoding requires a causal model");
        cond_proj_ = m_.project_conditioning(cond);
        const int d = m_.cfg_.d_model;
        k_.resize(static_cast<std::size_t>(m_.cfg_.n_layers));
        v_.resize(static_cast<std::size_t>(m_.cfg_.n_layers));
        for (auto& k : k_) k.resize(m_.cfg_.max_seq_len, d);
        for (auto& v : v_) v.resize(m_.cfg_.max_seq_len, d);
    }

    int size() const { return t_; }

    /// Appends `token` and returns the logits row predicting position t_+1.
    Mat<S> step(int token) {
        if (t_ >= m_.cfg_.max_seq_len)
            throw SequenceTooLong(static_cast<std::size_t>(t_) + 1, m_.cfg_.max_seq_len);
        if (token < 0 || token >= m_.cfg_.vocab_size) throw OutOfRangeField("token_id", token);
        const auto& lay = m_.layout_;
        const int d = m_.cfg_.d_model;
        const int h = m_.cfg_.n_heads;
        const int dh = d / h;
        const S inv_sqrt_dh = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

        Mat<S> x = m_.params_[lay.tok_emb].w.row(token);
        if (cond_proj_.size() > 0) x += cond_proj_;
        x += m_.pe_.row(t_);

        for (int l = 0; l < m_.cfg_.n_layers; ++l) {
            const auto& L = lay.layers[static_cast<std::size_t>(l)];
            Mat<S> n1 = row_norm(x, L.ln1_g, L.ln1_b);
            Mat<S> q = n1 * m_.params_[L.wq].w + m_.params_[L.bq].w;
            k_[static_cast<std::size_t>(l)].row(t_) =
                n1 * m_.params_[L.wk].w + m_.params_[L.bk].w;
            v_[static_cast<std::size_t>(l)].row(t_) =
                n1 * m_.params_[L.wv].w + m_.params_[L.bv].w;

            Mat<S> ctx(1, d);
            const auto& K = k_[static_cast<std::size_t>(l)];
            const auto& V = v_[static_cast<std::size_t>(l)];
            for (int hd = 0; hd < h; ++hd) {
                const auto qh = q.middleCols(hd * dh, dh);
                const auto Kh = K.block(0, hd * dh, t_ + 1, dh);
                const auto Vh = V.block(0, hd * dh, t_ + 1, dh);
                Mat<S> scores;
                if (m_.cfg_.linear_attention) {
                    Mat<S> fq = qh.unaryExpr([](S x0) {
                        return static_cast<S>(detail::feature_map(static_cast<double>(x0)));
                    });
                    Mat<S> fk = Kh.unaryExpr([](S x0) {
                        return static_cast<S>(detail::feature_map(static_cast<double>(x0)));
                    });
                    scores = fq * fk.transpose();
                    S sum = scores.sum();
                    scores *= sum > S(0) ? S(1) / sum : S(0);
                } else {
                    scores = qh * Kh.transpose() * inv_sqrt_dh;
                    const S mx = scores.maxCoeff();
                    scores = (scores.array() - mx).exp().matrix();
                    scores *= S(1) / scores.sum();
                }
                ctx.middleCols(hd * dh, dh).noalias() = scores * Vh;
            }
            Mat<S> attn_out = ctx * m_.params_[L.wo].w + m_.params_[L.bo].w;
            x += attn_out;

            Mat<S> n2 = row_norm(x, L.ln2_g, L.ln2_b);
            Mat<S> h1 = n2 * m_.params_[L.w1].w + m_.params_[L.b1].w;
            h1 = h1.unaryExpr([](S x0) {
                return static_cast<S>(detail::gelu_fwd(static_cast<double>(x0)));
            });
            Mat<S> ff = h1 * m_.params_[L.w2].w + m_.params_[L.b2].w;
            x += ff;
        }
        Mat<S> xf = row_norm(x, lay.lnf_g, lay.lnf_b);
        ++t_;
        return xf * m_.params_[lay.lm_head].w;
    }

private:
    Mat<S> row_norm(const Mat<S>& x, int gi, int bi) const {
        const S m = x.row(0).mean();
        const S var = (x.row(0).array() - m).square().mean();
        const S r = S(1) / std::sqrt(var + S(1e-5));
        Mat<S> y(1, x.cols());
        y.row(0) = ((x.row(0).array() - m) * r) * m_.params_[gi].w.array() +
                   m_.params_[bi].w.array();
        return y;
    }

    const Model<S>& m_;
    Mat<S> cond_proj_;
    std::vector<Mat<S>> k_, v_;
    int t_ = 0;
};

// ---------------------------------------------------------------------------
// Optimizer and training loop
// ---------------------------------------------------------------------------

template <class S>
struct AdamState {
    long step = 0;
    std::vector<Mat<S>> m, v;
};

struct TrainConfig {
    int steps = 0;
    int batch_size = 8;
    double lr = 3e-4;
    int warmup_steps = 100;
    double clip_norm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    Objective objective = Objective::next_token_ce;
};

template <class S>
void adam_step(Model<S>& model, typename Model<S>::Gradients& grads, AdamState<S>& st,
               const TrainConfig& tc) {
    auto& params = model.params();
    if (st.m.empty()) {
        st.m.reserve(params.size());
        st.v.reserve(params.size());
        for (const auto& p : params) {
            st.m.push_back(Mat<S>::Zero(p.w.rows(), p.w.cols()));
            st.v.push_back(Mat<S>::Zero(p.w.rows(), p.w.cols()));
        }
    }
    double sq = 0.0;
    for (const auto& g : grads) sq += static_cast<double>(g.template cast<double>().squaredNorm());
    const double norm = std::sqrt(sq);
    if (tc.clip_norm > 0.0 && norm > tc.clip_norm) {
        const S scale = static_cast<S>(tc.clip_norm / norm);
        for (auto& g : grads) g *= scale;
    }
    const long t = ++st.step;
    const double warm = tc.warmup_steps > 0
                            ? std::min(1.0, static_cast<double>(t) / tc.warmup_steps)
                            : 1.0;
    const double lr_t = tc.lr * warm;
    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = st.m[i];
        auto& v = st.v[i];
        const auto& g = grads[i];
        m = static_cast<S>(tc.beta1) * m + static_cast<S>(1.0 - tc.beta1) * g;
        v = static_cast<S>(tc.beta2) * v + static_cast<S>(1.0 - tc.beta2) * g.cwiseProduct(g);
        params[i].w.array() -=
            static_cast<S>(lr_t) * (m.array() / static_cast<S>(bc1)) /
            ((v.array() / static_cast<S>(bc2)).sqrt() + static_cast<S>(tc.eps));
    }
}

/// Minibatch training loop: per step, `batch_size` examples are drawn (with
/// replacement) from `data` using the seeded RNG, so loss curves are
/// bit-reproducible for a fixed seed in single-threaded mode.
template <class S>
std::vector<double> train(Model<S>& model, const std::vector<Sequence>& data,
                          const TrainConfig& tc, AdamState<S>* state = nullptr) {
    if (data.empty()) throw EmptyBatch();
    AdamState<S> local;
    AdamState<S>& st = state ? *state : local;
    Rng rng(tc.seed);
    std::vector<double> curve;
    curve.reserve(static_cast<std::size_t>(std::max(tc.steps, 0)));
    auto grads = model.zero_gradients();
    for (int step = 0; step < tc.steps; ++step) {
        Batch batch;
        batch.reserve(static_cast<std::size_t>(tc.batch_size));
        for (int b = 0; b < tc.batch_size; ++b)
            batch.push_back(data[static_cast<std::size_t>(rng.below(data.size()))]);
        for (auto& g : grads) g.setZero();
        const double loss = model.loss_and_grad(
            batch, tc.objective, grads, model.config().dropout_rate > 0.0 ? &rng : nullptr);
        adam_step(model, grads, st, tc);
        curve.push_back(loss);
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O: "SGCK" magic, u32 version, u32 meta length, meta JSON,
// u32 tensor count, then named tensors as 32-bit little-endian floats.
// Optimizer moments ride along as tensors named adam.m.* / adam.v.*.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class CheckpointReader {
public:
    explicit CheckpointReader(std::string bytes) : b_(std::move(bytes)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i)
            v = (v << 8) | static_cast<unsigned char>(b_[pos_ + static_cast<std::size_t>(i)]);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == b_.size(); }

private:
    void need(std::size_t n) {
        if (pos_ + n > b_.size()) throw BadCheckpoint("truncated file");
    }
    std::string b_;
    std::size_t pos_ = 0;
};

template <class S>
void put_tensor(std::string& out, const std::string& name, const Mat<S>& w) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(w.rows()));
    put_u32(out, static_cast<std::uint32_t>(w.cols()));
    for (Eigen::Index i = 0; i < w.size(); ++i)
        put_f32(out, static_cast<float>(w.data()[i]));
}

}  // namespace detail

template <class S>
void save_checkpoint(const std::string& path, const Model<S>& model,
                     const std::string& vocab_hash, std::uint64_t rng_seed,
                     const AdamState<S>* opt = nullptr) {
    nlohmann::json meta{{"config", model_config_to_json(model.config())},
                        {"vocab_hash", vocab_hash},
                        {"rng_seed", rng_seed}};
    if (opt) meta["adam_step"] = opt->step;
    const std::string meta_str = meta.dump();

    std::string out;
    out += "SGCK";
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<std::uint32_t>(meta_str.size()));
    out += meta_str;
    const auto& params = model.params();
    std::uint32_t count = static_cast<std::uint32_t>(params.size());
    if (opt) count += 2 * static_cast<std::uint32_t>(params.size());
    detail::put_u32(out, count);
    for (const auto& p : params) detail::put_tensor(out, p.name, p.w);
    if (opt) {
        for (std::size_t i = 0; i < params.size(); ++i)
            detail::put_tensor(out, "adam.m." + params[i].name, opt->m[i]);
        for (std::size_t i = 0; i < params.size(); ++i)
            detail::put_tensor(out, "adam.v." + params[i].name, opt->v[i]);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw BadCheckpoint("cannot write " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw BadCheckpoint("short write to " + path);
}

template <class S>
struct LoadedModel {
    Model<S> model;
    std::string vocab_hash;
    std::uint64_t rng_seed = 0;
    bool has_optimizer = false;
    AdamState<S> opt;
};

template <class S = float>
LoadedModel<S> load_checkpoint(const std::string& path,
                               const std::string& expected_vocab_hash = "") {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw BadCheckpoint("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    detail::CheckpointReader r(std::move(bytes));
    if (r.str(4) != "SGCK") throw BadCheckpoint("bad magic");
    const std::uint32_t version = r.u32();
    if (version != 1) throw BadCheckpoint("unsupported version " + std::to_string(version));
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(r.str(r.u32()));
    } catch (const nlohmann::json::exception& e) {
        throw BadCheckpoint(std::string("meta json: ") + e.what());
    }
    ModelConfig cfg;
    std::string vocab_hash;
    std::uint64_t rng_seed = 0;
    long adam_step = -1;
    try {
        cfg = model_config_from_json(meta.at("config"));
        vocab_hash = meta.at("vocab_hash").get<std::string>();
        rng_seed = meta.at("rng_seed").get<std::uint64_t>();
        if (meta.contains("adam_step")) adam_step = meta["adam_step"].get<long>();
    } catch (const nlohmann::json::exception& e) {
        throw BadCheckpoint(std::string("meta fields: ") + e.what());
    }
    if (!expected_vocab_hash.empty() && vocab_hash != expected_vocab_hash)
        throw VocabMismatch("checkpoint was trained with vocabulary hash " + vocab_hash +
                            ", expected " + expected_vocab_hash);

    LoadedModel<S> out{Model<S>(cfg, 0), vocab_hash, rng_seed, adam_step >= 0, {}};
    auto& params = out.model.params();
    std::vector<bool> seen(params.size(), false);
    if (out.has_optimizer) {
        out.opt.step = adam_step;
        for (const auto& p : params) {
            out.opt.m.push_back(Mat<S>::Zero(p.w.rows(), p.w.cols()));
            out.opt.v.push_back(Mat<S>::Zero(p.w.rows(), p.w.cols()));
        }
    }
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str(r.u32());
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        Mat<S>* dst = nullptr;
        bool is_param = false;
        std::string base = name;
        int which = 0;  // 0 weight, 1 adam m, 2 adam v
        if (name.rfind("adam.m.", 0) == 0) {
            base = name.substr(7);
            which = 1;
        } else if (name.rfind("adam.v.", 0) == 0) {
            base = name.substr(7);
            which = 2;
        }
        const int idx = out.model.param_index(base);
        if (idx < 0) throw BadCheckpoint("unknown tensor " + name);
        if (which == 0) {
            dst = &params[static_cast<std::size_t>(idx)].w;
            is_param = true;
        } else if (out.has_optimizer) {
            dst = which == 1 ? &out.opt.m[static_cast<std::size_t>(idx)]
                             : &out.opt.v[static_cast<std::size_t>(idx)];
        }
        if (dst) {
            if (static_cast<Eigen::Index>(rows) != dst->rows() ||
                static_cast<Eigen::Index>(cols) != dst->cols())
                throw BadCheckpoint("tensor " + name + " has shape " + std::to_string(rows) +
                                    "x" + std::to_string(cols));
            for (Eigen::Index j = 0; j < dst->size(); ++j)
                dst->data()[j] = static_cast<S>(r.f32());
            if (is_param) seen[static_cast<std::size_t>(idx)] = true;
        } else {
            for (std::uint32_t j = 0; j < rows * cols; ++j) r.f32();
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!seen[i]) throw BadCheckpoint("missing tensor " + params[i].name);
    if (!r.at_end()) throw BadCheckpoint("trailing bytes");
    return out;
}

}  // namespace scoregen

#endif  // SCOREGEN_NN_HPP
