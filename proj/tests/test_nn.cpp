#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "scoregen/nn.hpp"
#include "scoregen/rng.hpp"

#include "gradcheck.hpp"

using namespace scoregen;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.vocab_size = 23;
    c.d_model = 8;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_ff = 16;
    c.max_seq_len = 16;
    return c;
}

std::vector<int> random_ids(Rng& rng, int len, int vocab) {
    std::vector<int> ids(static_cast<std::size_t>(len));
    for (auto& t : ids) t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab - 1)));
    return ids;
}

std::vector<float> random_cond(Rng& rng, int d) {
    std::vector<float> c(static_cast<std::size_t>(d));
    for (auto& x : c) x = static_cast<float>(rng.uniform() * 2.0 - 1.0);
    return c;
}

void randomize_param(Model<double>& m, const char* name, double std_dev, std::uint64_t seed) {
    const int idx = m.param_index(name);
    REQUIRE(idx >= 0);
    Rng rng(seed);
    auto& w = m.params()[static_cast<std::size_t>(idx)].w;
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, std_dev);
}

struct TempFile {
    std::string path;
    explicit TempFile(const char* stem)
        : path((std::filesystem::temp_directory_path() / stem).string()) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("model config validation") {
    ModelConfig c = tiny_config();
    REQUIRE_NOTHROW(c.validate());
    auto bad = [](auto mutate) {
        ModelConfig b = tiny_config();
        mutate(b);
        REQUIRE_THROWS_AS(b.validate(), InvalidConfig);
    };
    bad([](ModelConfig& b) { b.vocab_size = 1; });
    bad([](ModelConfig& b) { b.d_model = 7; });  // odd
    bad([](ModelConfig& b) { b.n_heads = 3; });  // 8 % 3 != 0
    bad([](ModelConfig& b) { b.n_layers = 0; });
    bad([](ModelConfig& b) { b.d_ff = 0; });
    bad([](ModelConfig& b) { b.max_seq_len = 0; });
    bad([](ModelConfig& b) { b.dropout_rate = 1.0; });
    bad([](ModelConfig& b) { b.d_cond = -1; });

    const auto j = model_config_to_json(c);
    const ModelConfig back = model_config_from_json(j);
    REQUIRE(model_config_to_json(back) == j);
}

TEST_CASE("gradient check: causal LM with conditioning (softmax attention)") {
    ModelConfig c = tiny_config();
    c.d_cond = 5;
    Model<double> m(c, 42);
    // start the conditioning projection away from zero so its gradient path is live
    randomize_param(m, "cond_proj", 0.05, 7);

    Rng rng(11);
    Batch batch;
    batch.push_back({random_ids(rng, 7, c.vocab_size), random_cond(rng, 5), {}});
    batch.push_back({random_ids(rng, 5, c.vocab_size), {}, {}});
    auto padded = random_ids(rng, 6, c.vocab_size);
    padded.push_back(0);
    padded.push_back(0);  // trailing pads must not affect anything
    batch.push_back({padded, random_cond(rng, 5), {}});
    auto interior = random_ids(rng, 6, c.vocab_size);
    interior[3] = 0;  // pad target inside the sequence is skipped by the loss
    batch.push_back({interior, {}, {}});

    const auto report =
        scoregen::testing::gradient_check(m, batch, Objective::next_token_ce, 250, 99);
    INFO("worst: " << report.worst_param << "[" << report.worst_index << "] rel "
                   << report.max_rel_err << " over " << report.checked << " params");
    REQUIRE(report.checked >= 200);
    REQUIRE(report.max_rel_err < 1e-4);
}

TEST_CASE("gradient check: mask-free classifier (multilabel BCE)") {
    ModelConfig c = tiny_config();
    c.causal = false;
    c.n_classes = 4;
    Model<double> m(c, 13);

    Rng rng(21);
    Batch batch;
    batch.push_back({random_ids(rng, 9, c.vocab_size), {}, {1.f, 0.f, 0.f, 1.f}});
    auto padded = random_ids(rng, 4, c.vocab_size);
    padded.resize(8, 0);
    batch.push_back({padded, {}, {0.f, 1.f, 0.f, 0.f}});

    const auto report =
        scoregen::testing::gradient_check(m, batch, Objective::multilabel_bce, 250, 5);
    INFO("worst: " << report.worst_param << " rel " << report.max_rel_err);
    REQUIRE(report.checked >= 200);
    REQUIRE(report.max_rel_err < 1e-4);
}

TEST_CASE("gradient check: kernelized (linear) attention") {
    ModelConfig c = tiny_config();
    c.linear_attention = true;
    Model<double> m(c, 77);

    Rng rng(31);
    Batch batch;
    batch.push_back({random_ids(rng, 8, c.vocab_size), {}, {}});
    batch.push_back({random_ids(rng, 6, c.vocab_size), {}, {}});

    const auto report =
        scoregen::testing::gradient_check(m, batch, Objective::next_token_ce, 250, 17);
    INFO("worst: " << report.worst_param << " rel " << report.max_rel_err);
    REQUIRE(report.checked >= 200);
    REQUIRE(report.max_rel_err < 1e-4);
}

TEST_CASE("uniform logits give cross-entropy ln(V)") {
    ModelConfig c = tiny_config();
    Model<double> m(c, 3);
    auto& head = m.params()[static_cast<std::size_t>(m.param_index("lm_head"))].w;
    head.setZero();  // every logit row becomes all-zero -> uniform distribution

    Rng rng(1);
    Batch batch{{random_ids(rng, 9, c.vocab_size), {}, {}},
                {random_ids(rng, 4, c.vocab_size), {}, {}}};
    const double loss = m.loss(batch, Objective::next_token_ce);
    REQUIRE(loss == Catch::Approx(std::log(23.0)).margin(1e-12));
}

TEST_CASE("multilabel BCE is stationary when targets equal the model's sigmoids") {
    ModelConfig c = tiny_config();
    c.causal = false;
    c.n_classes = 4;
    Model<double> m(c, 8);

    Rng rng(2);
    const auto ids = random_ids(rng, 7, c.vocab_size);
    const Mat<double> z = m.class_logits(ids);
    std::vector<float> labels;
    for (int k = 0; k < c.n_classes; ++k)
        labels.push_back(static_cast<float>(1.0 / (1.0 + std::exp(-z(0, k)))));

    Batch batch{{ids, {}, labels}};
    auto grads = m.zero_gradients();
    m.loss_and_grad(batch, Objective::multilabel_bce, grads);
    const auto& gw = grads[static_cast<std::size_t>(m.param_index("cls.w"))];
    const auto& gb = grads[static_cast<std::size_t>(m.param_index("cls.b"))];
    // float-precision labels round the fixed point; gradients stay at that scale
    REQUIRE(gw.cwiseAbs().maxCoeff() < 1e-7);
    REQUIRE(gb.cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("causal forward: suffix perturbation never touches prefix logits") {
    ModelConfig c;
    c.vocab_size = 40;
    c.d_model = 16;
    c.n_layers = 2;
    c.n_heads = 4;
    c.d_ff = 32;
    c.max_seq_len = 32;
    Model<float> m(c, 4);

    Rng rng(44);
    for (int trial = 0; trial < 100; ++trial) {
        const int len = 4 + static_cast<int>(rng.below(20));
        const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(len - 1)));
        auto a = random_ids(rng, len, c.vocab_size);
        auto b = a;
        for (std::size_t t = static_cast<std::size_t>(k); t < b.size(); ++t)
            b[t] = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(c.vocab_size - 1)));
        const Mat<float> la = m.logits(a);
        const Mat<float> lb = m.logits(b);
        REQUIRE(la.topRows(k) == lb.topRows(k));
    }
}

TEST_CASE("zero-initialized conditioning projection is an exact no-op") {
    ModelConfig c = tiny_config();
    c.d_cond = 6;
    Model<float> m(c, 19);  // cond_proj is zero right after construction

    Rng rng(5);
    const auto ids = random_ids(rng, 10, c.vocab_size);
    const Mat<float> plain = m.logits(ids);
    for (int trial = 0; trial < 5; ++trial) {
        const Mat<float> conditioned = m.logits(ids, random_cond(rng, 6));
        REQUIRE(conditioned == plain);
    }

    SECTION("and becomes live once the projection is nonzero") {
        auto& proj = m.params()[static_cast<std::size_t>(m.param_index("cond_proj"))].w;
        Rng prng(6);
        for (Eigen::Index i = 0; i < proj.size(); ++i)
            proj.data()[i] = static_cast<float>(prng.normal(0.0, 0.1));
        const Mat<float> c1 = m.logits(ids, random_cond(rng, 6));
        const Mat<float> c2 = m.logits(ids, random_cond(rng, 6));
        REQUIRE(c1.allFinite());
        REQUIRE(c2.allFinite());
        REQUIRE(c1 != c2);
        REQUIRE(c1 != plain);
    }
}

TEST_CASE("attention rows are distributions; layer norm is normalized pre-affine") {
    ModelConfig c;
    c.vocab_size = 60;
    c.d_model = 32;
    c.n_layers = 3;
    c.n_heads = 4;
    c.d_ff = 64;
    c.max_seq_len = 64;
    Model<float> m(c, 23);

    Rng rng(9);
    for (bool causal : {true, false}) {
        ModelConfig cc = c;
        cc.causal = causal;
        Model<float> mm(cc, 23);
        ForwardStats stats;
        mm.logits(random_ids(rng, 40, c.vocab_size), {}, &stats);
        CAPTURE(causal, stats.max_softmax_row_err, stats.max_ln_mean, stats.max_ln_var_err);
        REQUIRE(stats.max_softmax_row_err < 1e-6);
        REQUIRE(stats.max_ln_mean < 1e-6);
        REQUIRE(stats.max_ln_var_err < 1e-4);
    }
}

TEST_CASE("pad tokens are masked out of attention keys") {
    ModelConfig c = tiny_config();
    c.causal = false;
    Model<float> m(c, 31);

    const std::vector<int> ids{5, 0, 7, 12, 0, 3};
    const Mat<float> before = m.logits(ids);
    auto& emb = m.params()[static_cast<std::size_t>(m.param_index("tok_emb"))].w;
    emb.row(0).array() += 1.0f;  // rewrite the pad embedding
    const Mat<float> after = m.logits(ids);
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] != 0) {
            REQUIRE(before.row(static_cast<Eigen::Index>(t)) ==
                    after.row(static_cast<Eigen::Index>(t)));
        } else {
            // the pad's own row does change (it is still a query)...
            REQUIRE(before.row(static_cast<Eigen::Index>(t)) !=
                    after.row(static_cast<Eigen::Index>(t)));
        }
    }
}

TEST_CASE("trailing pads do not change pooled logits or the LM loss") {
    ModelConfig c = tiny_config();
    c.causal = false;
    c.n_classes = 3;
    Model<float> m(c, 57);

    Rng rng(12);
    const auto ids = random_ids(rng, 9, c.vocab_size);
    auto padded = ids;
    padded.resize(14, 0);
    REQUIRE(m.class_logits(ids) == m.class_logits(padded));

    ModelConfig lm = tiny_config();
    Model<float> g(lm, 58);
    Batch stripped{{ids, {}, {}}};
    Batch with_pads{{padded, {}, {}}};
    REQUIRE(g.loss(stripped, Objective::next_token_ce) ==
            g.loss(with_pads, Objective::next_token_ce));
}

TEST_CASE("input validation errors") {
    ModelConfig c = tiny_config();
    c.d_cond = 4;
    Model<float> m(c, 61);

    Rng rng(3);
    REQUIRE_THROWS_AS(m.logits(random_ids(rng, 17, c.vocab_size)), SequenceTooLong);
    REQUIRE_THROWS_AS(m.logits({1, 2, 23}), OutOfRangeField);   // id == vocab_size
    REQUIRE_THROWS_AS(m.logits({1, -1, 2}), OutOfRangeField);
    REQUIRE_THROWS_AS(m.logits({}), OutOfRangeField);
    REQUIRE_THROWS_AS(m.logits({1, 2}, {0.1f, 0.2f}), ConditioningDimMismatch);
    Model<float> plain(tiny_config(), 61);
    REQUIRE_THROWS_AS(plain.logits({1, 2}, {0.1f}), ConditioningDimMismatch);
    REQUIRE_THROWS_AS(m.loss({}, Objective::next_token_ce), EmptyBatch);
    REQUIRE_THROWS_AS(plain.class_logits({1, 2}), InvalidConfig);
    Batch b{{{1, 2, 3}, {}, {}}};
    REQUIRE_THROWS_AS(plain.loss(b, Objective::multilabel_bce), InvalidConfig);
}

TEST_CASE("incremental decoding matches the full forward pass") {
    Rng rng(71);
    for (bool linear : {false, true}) {
        ModelConfig c;
        c.vocab_size = 50;
        c.d_model = 32;
        c.n_layers = 2;
        c.n_heads = 4;
        c.d_ff = 64;
        c.max_seq_len = 32;
        c.d_cond = 5;
        c.linear_attention = linear;
        Model<float> m(c, 83);
        // make conditioning matter so the decoder's cached projection is exercised
        auto& proj = m.params()[static_cast<std::size_t>(m.param_index("cond_proj"))].w;
        Rng prng(84);
        for (Eigen::Index i = 0; i < proj.size(); ++i)
            proj.data()[i] = static_cast<float>(prng.normal(0.0, 0.1));

        for (const bool with_cond : {false, true}) {
            const auto cond = with_cond ? random_cond(rng, 5) : std::vector<float>{};
            const auto ids = random_ids(rng, 20, c.vocab_size);
            const Mat<float> full = m.logits(ids, cond);
            Decoder<float> dec(m, cond);
            for (std::size_t t = 0; t < ids.size(); ++t) {
                const Mat<float> row = dec.step(ids[t]);
                CAPTURE(linear, with_cond, t);
                REQUIRE((row - full.row(static_cast<Eigen::Index>(t))).cwiseAbs().maxCoeff() <
                        2e-4f);
            }
            REQUIRE(dec.size() == 20);
        }
    }

    SECTION("decoder enforces limits") {
        ModelConfig c = tiny_config();
        c.max_seq_len = 3;
        Model<float> m(c, 1);
        Decoder<float> dec(m);
        dec.step(1);
        dec.step(2);
        dec.step(3);
        REQUIRE_THROWS_AS(dec.step(4), SequenceTooLong);
        REQUIRE_THROWS_AS(Decoder<float>(m, {0.1f}), ConditioningDimMismatch);
        ModelConfig nc = tiny_config();
        nc.causal = false;
        Model<float> enc(nc, 1);
        REQUIRE_THROWS_AS(Decoder<float>(enc), InvalidConfig);
    }
}

TEST_CASE("training: zero steps is the identity; fixed seed reproduces the curve") {
    ModelConfig c = tiny_config();
    Rng rng(81);
    std::vector<Sequence> data;
    for (int i = 0; i < 6; ++i) data.push_back({random_ids(rng, 10, c.vocab_size), {}, {}});

    Model<float> a(c, 100);
    const Mat<float> before = a.params()[0].w;
    TrainConfig tc;
    tc.steps = 0;
    REQUIRE(train(a, data, tc).empty());
    REQUIRE(a.params()[0].w == before);

    tc.steps = 30;
    tc.batch_size = 3;
    tc.seed = 9;
    Model<float> m1(c, 100), m2(c, 100);
    const auto c1 = train(m1, data, tc);
    const auto c2 = train(m2, data, tc);
    REQUIRE(c1 == c2);
    for (std::size_t i = 0; i < m1.params().size(); ++i)
        REQUIRE(m1.params()[i].w == m2.params()[i].w);

    REQUIRE_THROWS_AS(train(m1, {}, tc), EmptyBatch);
}

TEST_CASE("training: short run overfits a repeated sequence") {
    ModelConfig c;
    c.vocab_size = 30;
    c.d_model = 32;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_ff = 64;
    c.max_seq_len = 16;
    Rng rng(91);
    std::vector<Sequence> data{{random_ids(rng, 12, c.vocab_size), {}, {}}};

    Model<float> m(c, 7);
    TrainConfig tc;
    tc.steps = 400;
    tc.batch_size = 2;
    tc.warmup_steps = 20;
    tc.seed = 3;
    const auto curve = train(m, data, tc);
    REQUIRE(curve.front() > 0.0);
    REQUIRE(curve.back() < 0.3 * curve.front());
}

TEST_CASE("checkpoint round trip is bit-identical, with optimizer state") {
    ModelConfig c = tiny_config();
    c.d_cond = 4;
    c.n_classes = 3;
    c.causal = false;
    Model<float> m(c, 202);

    Rng rng(14);
    std::vector<Sequence> data;
    for (int i = 0; i < 4; ++i) {
        std::vector<float> labels{0.f, 1.f, 0.f};
        data.push_back({random_ids(rng, 8, c.vocab_size), {}, labels});
    }
    TrainConfig tc;
    tc.steps = 12;
    tc.batch_size = 2;
    tc.seed = 77;
    tc.objective = Objective::multilabel_bce;
    AdamState<float> opt;
    train(m, data, tc, &opt);

    TempFile ckpt("scoregen-nn-roundtrip.bin");
    save_checkpoint(ckpt.path, m, "cafef00dcafef00d", 4242, &opt);
    auto loaded = load_checkpoint<float>(ckpt.path);
    REQUIRE(loaded.vocab_hash == "cafef00dcafef00d");
    REQUIRE(loaded.rng_seed == 4242);
    REQUIRE(loaded.has_optimizer);
    REQUIRE(loaded.opt.step == 12);
    REQUIRE(loaded.model.params().size() == m.params().size());
    for (std::size_t i = 0; i < m.params().size(); ++i) {
        REQUIRE(loaded.model.params()[i].name == m.params()[i].name);
        REQUIRE(loaded.model.params()[i].w == m.params()[i].w);
        REQUIRE(loaded.opt.m[i] == opt.m[i]);
        REQUIRE(loaded.opt.v[i] == opt.v[i]);
    }
    const auto ids = random_ids(rng, 9, c.vocab_size);
    REQUIRE(loaded.model.class_logits(ids) == m.class_logits(ids));

    SECTION("vocab hash is enforced when requested") {
        REQUIRE_NOTHROW(load_checkpoint<float>(ckpt.path, "cafef00dcafef00d"));
        REQUIRE_THROWS_AS(load_checkpoint<float>(ckpt.path, "0000000000000000"), VocabMismatch);
    }

    SECTION("saving without optimizer omits it") {
        TempFile bare("scoregen-nn-bare.bin");
        save_checkpoint(bare.path, m, "cafef00dcafef00d", 1);
        auto plain = load_checkpoint<float>(bare.path);
        REQUIRE_FALSE(plain.has_optimizer);
    }
}

TEST_CASE("checkpoint corruption is detected") {
    ModelConfig c = tiny_config();
    Model<float> m(c, 5);
    TempFile ckpt("scoregen-nn-corrupt.bin");
    save_checkpoint(ckpt.path, m, "hash", 0);

    std::ifstream in(ckpt.path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    auto write_bytes = [&](const std::string& b) {
        std::ofstream out(ckpt.path, std::ios::binary | std::ios::trunc);
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
    };

    SECTION("bad magic") {
        std::string b = bytes;
        b[0] = 'X';
        write_bytes(b);
        REQUIRE_THROWS_AS(load_checkpoint<float>(ckpt.path), BadCheckpoint);
    }
    SECTION("truncation") {
        write_bytes(bytes.substr(0, bytes.size() / 2));
        REQUIRE_THROWS_AS(load_checkpoint<float>(ckpt.path), BadCheckpoint);
    }
    SECTION("trailing garbage") {
        write_bytes(bytes + "extra");
        REQUIRE_THROWS_AS(load_checkpoint<float>(ckpt.path), BadCheckpoint);
    }
    SECTION("missing file") {
        REQUIRE_THROWS_AS(load_checkpoint<float>("/nonexistent/nope.bin"), BadCheckpoint);
    }
}
