#include "synic/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "synic/errors.hpp"

namespace synic {

namespace {

void check_sizes(std::span<const double> scores, std::span<const uint8_t> labels) {
    if (scores.size() != labels.size())
        throw ContractError("metrics: scores and labels differ in length");
    if (scores.empty()) throw UndefinedMetricError("metrics: empty input");
}

std::pair<size_t, size_t> class_counts(std::span<const uint8_t> labels) {
    size_t pos = 0;
    for (uint8_t y : labels) pos += (y != 0);
    return {pos, labels.size() - pos};
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const uint8_t> labels) {
    check_sizes(scores, labels);
    const auto [n_pos, n_neg] = class_counts(labels);
    if (n_pos == 0 || n_neg == 0)
        throw UndefinedMetricError("roc_auc: needs both a positive and a negative sample");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Rank-sum with average ranks over tied scores.
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
        for (size_t k = i; k < j; ++k)
            if (labels[order[k]] != 0) pos_rank_sum += avg_rank;
        i = j;
    }
    const double n_pos_d = static_cast<double>(n_pos);
    return (pos_rank_sum - n_pos_d * (n_pos_d + 1.0) / 2.0) /
           (n_pos_d * static_cast<double>(n_neg));
}

double pr_auc(std::span<const double> scores, std::span<const uint8_t> labels) {
    check_sizes(scores, labels);
    const auto [n_pos, n_neg] = class_counts(labels);
    (void)n_neg;
    if (n_pos == 0) throw UndefinedMetricError("pr_auc: needs at least one positive sample");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    // Sweep distinct thresholds from high to low; area accumulates as
    // sum(delta_recall * precision) over the step curve.
    double area = 0.0, prev_recall = 0.0;
    size_t tp = 0, pred_pos = 0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        for (size_t k = i; k < j; ++k) tp += (labels[order[k]] != 0);
        pred_pos += j - i;
        const double precision = static_cast<double>(tp) / static_cast<double>(pred_pos);
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return area;
}

ConfusionCounts confusion(std::span<const double> scores, std::span<const uint8_t> labels,
                          double threshold) {
    check_sizes(scores, labels);
    ConfusionCounts c;
    for (size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        const bool truth = labels[i] != 0;
        if (pred && truth) ++c.tp;
        else if (pred && !truth) ++c.fp;
        else if (!pred && truth) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double mean_rank(std::span<const size_t> ranks) {
    if (ranks.empty()) throw UndefinedMetricError("mean_rank: empty input");
    double sum = 0.0;
    for (size_t r : ranks) sum += static_cast<double>(r);
    return sum / static_cast<double>(ranks.size());
}

MetricsReport compute_metrics(std::span<const double> scores, std::span<const uint8_t> labels,
                              double threshold) {
    check_sizes(scores, labels);
    MetricsReport r;
    r.n = scores.size();
    std::tie(r.positives, r.negatives) = class_counts(labels);
    r.roc_auc = roc_auc(scores, labels);
    r.pr_auc = pr_auc(scores, labels);
    r.counts = confusion(scores, labels, threshold);
    const auto& c = r.counts;
    if (c.tp + c.fp == 0) {
        r.precision = 0.0;
        r.degenerate_precision = true;
    } else {
        r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    }
    r.recall = (c.tp + c.fn == 0) ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    r.f1 = (2 * c.tp + c.fp + c.fn == 0)
               ? 0.0
               : 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
    r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    return r;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j{{"roc_auc", roc_auc},
                     {"pr_auc", pr_auc},
                     {"precision", precision},
                     {"recall", recall},
                     {"f1", f1},
                     {"accuracy", accuracy},
                     {"degenerate_precision", degenerate_precision},
                     {"tp", counts.tp},
                     {"fp", counts.fp},
                     {"tn", counts.tn},
                     {"fn", counts.fn},
                     {"n", n},
                     {"positives", positives},
                     {"negatives", negatives}};
    if (mean_rank) j["mean_rank"] = *mean_rank;
    return j;
}

}  // namespace synic
