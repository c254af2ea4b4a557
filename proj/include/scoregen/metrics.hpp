#ifndef SCOREGEN_METRICS_HPP
#define SCOREGEN_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scoregen/errors.hpp"
#include "scoregen/score.hpp"

namespace scoregen {

/// Shannon entropy (base 2) of the pitch-class histogram over non-drum
/// notes. 0 for a single class, log2(12) for a uniform chromatic spread.
inline double pitch_class_entropy(const Score& s) {
    long hist[12] = {};
    long total = 0;
    for (const auto& n : s.notes) {
        if (n.is_drum()) continue;
        ++hist[n.pitch % 12];
        ++total;
    }
    if (total == 0) throw MetricUndefined("pitch_class_entropy", "no pitched notes");
    double h = 0.0;
    for (const long count : hist) {
        if (count == 0) continue;
        const double p = static_cast<double>(count) / static_cast<double>(total);
        h -= p * std::log2(p);
    }
    return h;
}

namespace metrics_detail {

/// 24 pitch-class sets as 12-bit masks: major and harmonic minor on each root.
inline const std::vector<std::uint16_t>& scale_masks() {
    static const std::vector<std::uint16_t> masks = [] {
        const int major[7] = {0, 2, 4, 5, 7, 9, 11};
        const int harmonic_minor[7] = {0, 2, 3, 5, 7, 8, 11};
        std::vector<std::uint16_t> out;
        for (int root = 0; root < 12; ++root) {
            std::uint16_t ma = 0, mi = 0;
            for (int k = 0; k < 7; ++k) {
                ma |= static_cast<std::uint16_t>(1u << ((root + major[k]) % 12));
                mi |= static_cast<std::uint16_t>(1u << ((root + harmonic_minor[k]) % 12));
            }
            out.push_back(ma);
            out.push_back(mi);
        }
        return out;
    }();
    return masks;
}

}  // namespace metrics_detail

/// Largest fraction of non-drum notes whose pitch class fits one scale,
/// maximized over 12 major and 12 harmonic-minor scales.
inline double scale_consistency(const Score& s) {
    long class_counts[12] = {};
    long total = 0;
    for (const auto& n : s.notes) {
        if (n.is_drum()) continue;
        ++class_counts[n.pitch % 12];
        ++total;
    }
    if (total == 0) throw MetricUndefined("scale_consistency", "no pitched notes");
    long best = 0;
    for (const std::uint16_t mask : metrics_detail::scale_masks()) {
        long inside = 0;
        for (int pc = 0; pc < 12; ++pc)
            if (mask & (1u << pc)) inside += class_counts[pc];
        best = std::max(best, inside);
    }
    return static_cast<double>(best) / static_cast<double>(total);
}

/// Mean similarity of consecutive bars' binary onset vectors: with T bars
/// padded to the longest bar's slot count Q, returns
/// 1 - (1/(T-1)) * sum_i hamming(g_i, g_{i+1}) / Q. All notes count,
/// drums included. Bars before the first onset are skipped so the value is
/// invariant to shifting a piece by whole bars; undefined with fewer than
/// two bars from the first onset on.
inline double groove_consistency(const Score& s) {
    const std::vector<Bar> bars = bars_of(s);

    int q_max = 0;
    for (const auto& bar : bars) q_max = std::max(q_max, bar.beat_count * kResolution);

    std::vector<std::vector<std::uint8_t>> grids(bars.size(),
                                                 std::vector<std::uint8_t>(q_max, 0));
    for (const auto& n : s.notes) {
        auto it = std::upper_bound(bars.begin(), bars.end(), n.beat,
                                   [](int beat, const Bar& b) { return beat < b.start_beat; });
        if (it == bars.begin()) continue;
        const std::size_t idx = static_cast<std::size_t>(it - bars.begin()) - 1;
        const Bar& bar = bars[idx];
        if (n.beat >= bar.start_beat + bar.beat_count) continue;
        grids[idx][(n.beat - bar.start_beat) * kResolution + n.position] = 1;
    }

    std::size_t first = 0;
    while (first < grids.size() &&
           std::find(grids[first].begin(), grids[first].end(), 1) == grids[first].end())
        ++first;
    const std::size_t count = grids.size() - first;
    if (count < 2) throw MetricUndefined("groove_consistency", "fewer than two bars");

    double acc = 0.0;
    for (std::size_t i = first; i + 1 < grids.size(); ++i) {
        int hamming = 0;
        for (int q = 0; q < q_max; ++q) hamming += grids[i][q] != grids[i + 1][q];
        acc += static_cast<double>(hamming) / static_cast<double>(q_max);
    }
    return 1.0 - acc / static_cast<double>(count - 1);
}

struct MetricReport {
    std::optional<double> pitch_class_entropy;
    std::optional<double> scale_consistency;
    std::optional<double> groove_consistency;
};

inline MetricReport compute_metrics(const Score& s) {
    MetricReport r;
    try {
        r.pitch_class_entropy = pitch_class_entropy(s);
    } catch (const MetricUndefined&) {
    }
    try {
        r.scale_consistency = scale_consistency(s);
    } catch (const MetricUndefined&) {
    }
    try {
        r.groove_consistency = groove_consistency(s);
    } catch (const MetricUndefined&) {
    }
    return r;
}

struct MetricSummary {
    double mean = 0.0;
    double ci95 = 0.0;  // 1.96 * sample standard deviation / sqrt(n)
    long n = 0;
    long n_undefined = 0;
};

struct AggregateReport {
    MetricSummary pitch_class_entropy;
    MetricSummary scale_consistency;
    MetricSummary groove_consistency;
};

namespace metrics_detail {

inline MetricSummary summarize(const std::vector<double>& values, long n_undefined,
                               const char* metric) {
    if (values.size() < 2) throw InsufficientData(metric);
    MetricSummary out;
    out.n = static_cast<long>(values.size());
    out.n_undefined = n_undefined;
    double sum = 0.0;
    for (const double v : values) sum += v;
    out.mean = sum / static_cast<double>(out.n);
    double ss = 0.0;
    for (const double v : values) ss += (v - out.mean) * (v - out.mean);
    const double sample_sd = std::sqrt(ss / static_cast<double>(out.n - 1));
    out.ci95 = 1.96 * sample_sd / std::sqrt(static_cast<double>(out.n));
    return out;
}

}  // namespace metrics_detail

/// Per-metric mean and 95% confidence half-width over the defined values;
/// undefined values are excluded and counted. Requires >= 2 defined values
/// per metric.
inline AggregateReport aggregate(const std::vector<MetricReport>& reports) {
    std::vector<double> pce, sc, gc;
    long und_pce = 0, und_sc = 0, und_gc = 0;
    for (const auto& r : reports) {
        if (r.pitch_class_entropy) pce.push_back(*r.pitch_class_entropy); else ++und_pce;
        if (r.scale_consistency) sc.push_back(*r.scale_consistency); else ++und_sc;
        if (r.groove_consistency) gc.push_back(*r.groove_consistency); else ++und_gc;
    }
    AggregateReport out;
    out.pitch_class_entropy = metrics_detail::summarize(pce, und_pce, "pitch_class_entropy");
    out.scale_consistency = metrics_detail::summarize(sc, und_sc, "scale_consistency");
    out.groove_consistency = metrics_detail::summarize(gc, und_gc, "groove_consistency");
    return out;
}

}  // namespace scoregen

#endif  // SCOREGEN_METRICS_HPP
