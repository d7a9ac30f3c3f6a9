#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace synic {

struct ConfusionCounts {
    size_t tp = 0, fp = 0, tn = 0, fn = 0;
    size_t total() const { return tp + fp + tn + fn; }
};

// Rank-based area under the ROC curve, equal to the Mann-Whitney statistic
// P(score_pos > score_neg) + 0.5 * P(tie). Throws UndefinedMetricError unless
// both classes are present.
double roc_auc(std::span<const double> scores, std::span<const uint8_t> labels);

// Area under the precision-recall step curve (right-continuous steps, no
// linear interpolation), i.e. average precision. Requires >= 1 positive.
double pr_auc(std::span<const double> scores, std::span<const uint8_t> labels);

ConfusionCounts confusion(std::span<const double> scores, std::span<const uint8_t> labels,
                          double threshold);

// Mean of 1-based ranks; throws UndefinedMetricError on empty input.
double mean_rank(std::span<const size_t> ranks);

// Classification metrics at a fixed decision threshold (pred = score >= t).
// precision is reported as 0 with `degenerate_precision` set when nothing is
// predicted positive; recall and f1 are 0 when their denominators vanish.
struct MetricsReport {
    double roc_auc = 0.0;
    double pr_auc = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    bool degenerate_precision = false;
    ConfusionCounts counts;
    size_t n = 0, positives = 0, negatives = 0;
    std::optional<double> mean_rank;  // only for retrieval evaluations

    nlohmann::json to_json() const;
};

MetricsReport compute_metrics(std::span<const double> scores, std::span<const uint8_t> labels,
                              double threshold = 0.5);

}  // namespace synic
