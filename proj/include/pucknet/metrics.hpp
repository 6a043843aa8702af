// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "pucknet/common.hpp"

namespace pucknet {

// roc_auc / pr_auc need at least one positive and one negative label.
struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void check_binary_labels(const std::vector<double>& scores,
                                const std::vector<double>& labels) {
    if (scores.size() != labels.size())
        fail_contract("metric: ", scores.size(), " scores vs ", labels.size(), " labels");
    if (scores.empty()) fail_contract("metric on empty input");
    std::size_t pos = 0;
    for (double c : labels) {
        if (c != 0.0 && c != 1.0) fail_contract("metric label must be 0 or 1, got ", c);
        if (c == 1.0) ++pos;
    }
    if (pos == 0 || pos == labels.size())
        throw UndefinedMetricError("metric undefined: labels contain a single class");
}

// Indices sorted by ascending score, scanning tie groups together.
inline std::vector<std::size_t> sorted_by_score(const std::vector<double>& scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    return idx;
}

} // namespace detail

// Probability that a random positive outscores a random negative, counting
// ties as one half (the Mann-Whitney statistic). Monotone transforms of the
// scores leave the value unchanged, so logits and probabilities both work.
inline double roc_auc(const std::vector<double>& scores, const std::vector<double>& labels) {
    detail::check_binary_labels(scores, labels);
    const auto idx = detail::sorted_by_score(scores);
    const std::size_t n = scores.size();
    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        // ranks i+1 .. j averaged over the tie group
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]] == 1.0) {
                rank_sum_pos += avg_rank;
                ++n_pos;
            }
        i = j;
    }
    const double p = static_cast<double>(n_pos);
    const double q = static_cast<double>(n - n_pos);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q);
}

// Step-interpolated area under the precision-recall curve: thresholds sweep
// the distinct scores from high to low and each recall increment is weighted
// by the precision at that threshold.
inline double pr_auc(const std::vector<double>& scores, const std::vector<double>& labels) {
    detail::check_binary_labels(scores, labels);
    auto idx = detail::sorted_by_score(scores); // ascending; walk from the top
    const std::size_t n = scores.size();
    double total_pos = 0.0;
    for (double c : labels) total_pos += c;

    double tp = 0.0, fp = 0.0, area = 0.0, prev_recall = 0.0;
    std::size_t i = n;
    while (i > 0) {
        std::size_t j = i;
        while (j > 0 && scores[idx[j - 1]] == scores[idx[i - 1]]) --j;
        for (std::size_t k = j; k < i; ++k) {
            if (labels[idx[k]] == 1.0)
                tp += 1.0;
            else
                fp += 1.0;
        }
        const double recall = tp / total_pos;
        const double precision = tp / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return area;
}

inline double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size())
        fail_contract("mae: size mismatch ", pred.size(), " vs ", truth.size());
    if (pred.empty()) fail_contract("mae on empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - truth[i]);
    return acc / static_cast<double>(pred.size());
}

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double tpr() const { return tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0; }
    double fpr() const { return fp + tn ? static_cast<double>(fp) / static_cast<double>(fp + tn) : 0.0; }
    double precision() const {
        return tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    }
    double recall() const { return tpr(); }
};

inline Confusion confusion_at(const std::vector<double>& scores,
                              const std::vector<double>& labels, double threshold) {
    if (scores.size() != labels.size())
        fail_contract("confusion_at: ", scores.size(), " scores vs ", labels.size(), " labels");
    Confusion c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        const bool truth = labels[i] == 1.0;
        if (pred && truth) ++c.tp;
        else if (pred && !truth) ++c.fp;
        else if (!pred && truth) ++c.fn;
        else ++c.tn;
    }
    return c;
}

} // namespace pucknet
