#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lossyrbm/dataset.hpp"

namespace lossyrbm {

/// sqrt(mean squared error) over paired entries. Empty input is refused.
double rmse(std::span<const double> truth, std::span<const double> imputed);

/// Pooled binary AUC: P(score_pos > score_neg), ties counted 1/2.
/// Throws UndefinedMetric unless both classes are present.
double micro_auc(std::span<const double> scores, std::span<const std::uint8_t> truth);

/// Fraction of positions where prediction equals truth.
double hamming_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

/// Macro average of one-vs-rest AUCs. `scores` is n_instances x n_classes,
/// `truth` holds the true class index per instance. Classes without
/// instances are skipped; fewer than two present classes is undefined.
double averaged_auc(const Matrix& scores, std::span<const std::size_t> truth);

/// Fraction of instances whose first-argmax class equals the true class.
double accuracy_multiclass(const Matrix& scores, std::span<const std::size_t> truth);

/// Metric name -> value for one run; missing entries are undefined for that run.
struct MetricsReport {
    std::optional<double> rmse;
    std::optional<double> rmse_standardized;
    std::optional<double> micro_auc;
    std::optional<double> hamming_accuracy;
    std::optional<double> averaged_auc;
    std::optional<double> accuracy;
    std::optional<double> threshold;

    std::size_t n_repeats = 1;
    // Present after aggregation over more than one repeat.
    std::optional<double> rmse_std;
    std::optional<double> micro_auc_std;
    std::optional<double> hamming_accuracy_std;
    std::optional<double> averaged_auc_std;
    std::optional<double> accuracy_std;

    /// Human-readable reasons a metric could not be computed.
    std::vector<std::string> notes;
};

/// Per-metric sample mean and (n > 1) sample standard deviation. A metric is
/// aggregated over the reports that define it.
MetricsReport aggregate(std::span<const MetricsReport> reports);

/// What to score: which cells were hidden and what the model filled in.
struct ScoringInput {
    const IncompleteDataset& dataset;  // ground truth + the mask that was applied
    const Matrix& imputed;             // same shape, stored units
    std::optional<double> threshold;   // for multi-label decoding; 0.5 when absent
    bool score_features = true;
};

/// Scores masked feature cells (RMSE, original units) and masked labels: the
/// micro-AUC/Hamming pair over free label entries and the averaged-AUC/accuracy
/// pair over instances with a masked class group. Undefined metrics are left
/// empty with a note.
MetricsReport score(const ScoringInput& input);

/// Names and accessors used by the report writers.
struct MetricColumn {
    const char* name;
    std::optional<double> MetricsReport::*value;
    std::optional<double> MetricsReport::*stddev;
};
std::span<const MetricColumn> metric_columns();

}  // namespace lossyrbm
