// Multi-label genre tagger: a mask-free encoder is fed an instrument prefix
// plus a fixed 1023-token view of the note stream; mean-pooled states feed
// per-class sigmoid heads whose decision thresholds are tuned on validation
// F1 over a fixed grid.
#ifndef SCOREGEN_TAGGER_HPP
#define SCOREGEN_TAGGER_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "scoregen/errors.hpp"
#include "scoregen/nn.hpp"
#include "scoregen/score.hpp"
#include "scoregen/tokenizer.hpp"
#include "scoregen/vocab.hpp"

namespace scoregen {

struct TaggerOutput {
    std::vector<double> probabilities;  // one per genre class
    std::vector<int> predicted;         // class indices with p >= threshold
};

struct ThresholdSet {
    std::vector<double> thresholds;
    /// Classes that had no validation positives and kept the 0.5 default.
    std::vector<unsigned char> defaulted;
};

/// The 19-point decision grid {0.05, 0.10, ..., 0.95}.
inline std::vector<double> threshold_grid() {
    std::vector<double> g;
    for (int i = 1; i <= 19; ++i) g.push_back(0.05 * i);
    return g;
}

inline ThresholdSet default_thresholds(std::size_t n_classes) {
    return {std::vector<double>(n_classes, 0.5), std::vector<unsigned char>(n_classes, 0)};
}

/// Classifier input: [SOI, sorted instrument tags (or the none filler), SON]
/// followed by exactly 1023 note-region tokens (see segment_for_tagger).
/// The score is canonicalized first, so note order never matters.
inline TokenSequence tagger_input(const Score& score, const VocabSpec& v) {
    const Score canon = canonicalize(score);
    TokenSequence out;
    out.push_back(v.soi);
    const std::vector<int> programs = programs_of(canon);
    if (programs.empty()) {
        out.push_back(v.tag_instrument_none);
    } else {
        for (int p : programs) out.push_back(v.instrument_tag_token(p));
    }
    out.push_back(v.son);
    const TokenSequence notes = note_tokens(canon, v);
    const TokenSequence segment = segment_for_tagger(notes);
    out.insert(out.end(), segment.begin(), segment.end());
    return out;
}

/// Multi-hot label row over the vocabulary's genre classes.
inline std::vector<float> genre_multi_hot(const std::vector<std::string>& genres,
                                          const VocabSpec& v) {
    std::vector<float> y(v.genres.size(), 0.0f);
    for (const auto& g : genres) {
        auto it = v.genre_index.find(g);
        if (it == v.genre_index.end()) throw UnknownGenre(g);
        y[static_cast<std::size_t>(it->second)] = 1.0f;
    }
    return y;
}

/// Training example for the tagger: tokenized input plus multi-hot labels.
inline Sequence tagger_training_sequence(const Score& score,
                                         const std::vector<std::string>& genres,
                                         const VocabSpec& v) {
    return Sequence{tagger_input(score, v), {}, genre_multi_hot(genres, v)};
}

template <class S>
void check_tagger_model(const Model<S>& model, const VocabSpec& v) {
    if (model.config().vocab_size != v.vocab_size)
        throw VocabMismatch("model vocab size " + std::to_string(model.config().vocab_size) +
                            " does not match vocabulary size " + std::to_string(v.vocab_size));
    if (model.config().n_classes != static_cast<int>(v.genres.size()))
        throw VocabMismatch("model has " + std::to_string(model.config().n_classes) +
                            " classes, vocabulary has " + std::to_string(v.genres.size()) +
                            " genres");
}

template <class S>
std::vector<double> predict_probs(const Model<S>& model, const Score& score,
                                  const VocabSpec& v) {
    check_tagger_model(model, v);
    const Mat<S> z = model.class_logits(tagger_input(score, v));
    std::vector<double> p(static_cast<std::size_t>(z.cols()));
    for (Eigen::Index c = 0; c < z.cols(); ++c)
        p[static_cast<std::size_t>(c)] = 1.0 / (1.0 + std::exp(-static_cast<double>(z(0, c))));
    return p;
}

template <class S>
TaggerOutput predict(const Model<S>& model, const ThresholdSet& th, const Score& score,
                     const VocabSpec& v) {
    TaggerOutput out;
    out.probabilities = predict_probs(model, score, v);
    if (th.thresholds.size() != out.probabilities.size())
        throw OutOfRangeField("threshold_count", static_cast<long long>(th.thresholds.size()));
    for (std::size_t c = 0; c < out.probabilities.size(); ++c)
        if (out.probabilities[c] >= th.thresholds[c]) out.predicted.push_back(static_cast<int>(c));
    return out;
}

/// Probabilities and 0/1 targets for one validation example, class-aligned.
struct ClassProbs {
    std::vector<double> probs;
    std::vector<int> labels;
};

namespace detail {

inline double binary_f1(long tp, long fp, long fn) {
    const long denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace detail

/// Per-class threshold from the fixed grid maximizing that class's F1 on the
/// validation set; ties break toward the lower threshold. Classes with no
/// positive examples keep 0.5 and are flagged.
inline ThresholdSet tune_thresholds(const std::vector<ClassProbs>& validation) {
    if (validation.empty()) throw EmptyValidationSet();
    const std::size_t n_classes = validation.front().probs.size();
    for (const auto& ex : validation)
        if (ex.probs.size() != n_classes || ex.labels.size() != n_classes)
            throw OutOfRangeField("class_count", static_cast<long long>(ex.probs.size()));

    ThresholdSet out = default_thresholds(n_classes);
    const std::vector<double> grid = threshold_grid();
    for (std::size_t c = 0; c < n_classes; ++c) {
        long positives = 0;
        for (const auto& ex : validation) positives += ex.labels[c] != 0;
        if (positives == 0) {
            out.defaulted[c] = 1;
            continue;
        }
        double best_f1 = -1.0;
        double best_t = 0.5;
        for (double t : grid) {
            long tp = 0, fp = 0, fn = 0;
            for (const auto& ex : validation) {
                const bool pred = ex.probs[c] >= t;
                const bool truth = ex.labels[c] != 0;
                tp += pred && truth;
                fp += pred && !truth;
                fn += !pred && truth;
            }
            const double f1 = detail::binary_f1(tp, fp, fn);
            if (f1 > best_f1) {
                best_f1 = f1;
                best_t = t;
            }
        }
        out.thresholds[c] = best_t;
    }
    return out;
}

struct MicroScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long tp = 0, fp = 0, fn = 0;
};

/// Micro-averaged precision/recall/F1 over all (example, class) pairs.
/// `predicted` and `labels` are 0/1 indicator rows of equal width.
inline MicroScores evaluate_predictions(const std::vector<std::vector<int>>& predicted,
                                        const std::vector<std::vector<int>>& labels) {
    if (predicted.size() != labels.size())
        throw OutOfRangeField("example_count", static_cast<long long>(predicted.size()));
    MicroScores s;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i].size() != labels[i].size())
            throw OutOfRangeField("class_count", static_cast<long long>(predicted[i].size()));
        for (std::size_t c = 0; c < predicted[i].size(); ++c) {
            const bool pred = predicted[i][c] != 0;
            const bool truth = labels[i][c] != 0;
            s.tp += pred && truth;
            s.fp += pred && !truth;
            s.fn += !pred && truth;
        }
    }
    s.precision = (s.tp + s.fp) == 0 ? 0.0
                                     : static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp);
    s.recall =
        (s.tp + s.fn) == 0 ? 0.0 : static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn);
    s.f1 = (s.precision + s.recall) == 0.0
               ? 0.0
               : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

template <class S>
MicroScores evaluate_tagger(const Model<S>& model, const ThresholdSet& th,
                            const std::vector<Score>& scores,
                            const std::vector<std::vector<std::string>>& genre_labels,
                            const VocabSpec& v) {
    if (scores.size() != genre_labels.size())
        throw OutOfRangeField("example_count", static_cast<long long>(scores.size()));
    std::vector<std::vector<int>> pred_rows, label_rows;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const TaggerOutput out = predict(model, th, scores[i], v);
        std::vector<int> row(v.genres.size(), 0);
        for (int c : out.predicted) row[static_cast<std::size_t>(c)] = 1;
        pred_rows.push_back(std::move(row));
        const auto y = genre_multi_hot(genre_labels[i], v);
        std::vector<int> yrow(y.size());
        for (std::size_t c = 0; c < y.size(); ++c) yrow[c] = y[c] != 0.0f ? 1 : 0;
        label_rows.push_back(std::move(yrow));
    }
    return evaluate_predictions(pred_rows, label_rows);
}

}  // namespace scoregen

#endif  // SCOREGEN_TAGGER_HPP
