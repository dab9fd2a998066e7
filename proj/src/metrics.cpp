#include "lossyrbm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lossyrbm/mean_field.hpp"

namespace lossyrbm {

double rmse(std::span<const double> truth, std::span<const double> imputed) {
    if (truth.size() != imputed.size()) throw ShapeError("rmse: length mismatch");
    if (truth.empty()) throw UndefinedMetric("rmse: no masked feature entries");
    double ss = 0.0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        const double d = truth[k] - imputed[k];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(truth.size()));
}

double micro_auc(std::span<const double> scores, std::span<const std::uint8_t> truth) {
    if (scores.size() != truth.size()) throw ShapeError("auc: length mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Mann-Whitney U with mid-ranks for ties.
    double positive_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t start = 0; start < order.size();) {
        std::size_t end = start + 1;
        while (end < order.size() && scores[order[end]] == scores[order[start]]) ++end;
        const double mid_rank = 0.5 * static_cast<double>(start + 1 + end);
        for (std::size_t k = start; k < end; ++k) {
            if (truth[order[k]]) {
                positive_rank_sum += mid_rank;
                ++n_pos;
            }
        }
        start = end;
    }
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw UndefinedMetric("auc: pool has a single class");
    const double np = static_cast<double>(n_pos);
    const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

double hamming_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
    if (predicted.size() != truth.size()) throw ShapeError("hamming_accuracy: length mismatch");
    if (truth.empty()) throw UndefinedMetric("hamming_accuracy: no masked label entries");
    std::size_t hits = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) hits += (predicted[k] != 0) == (truth[k] != 0) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double averaged_auc(const Matrix& scores, std::span<const std::size_t> truth) {
    if (static_cast<std::size_t>(scores.rows()) != truth.size()) throw ShapeError("averaged_auc: row count mismatch");
    const auto n_classes = static_cast<std::size_t>(scores.cols());
    std::vector<std::size_t> counts(n_classes, 0);
    for (std::size_t t : truth) {
        if (t >= n_classes) throw ShapeError("averaged_auc: class index out of range");
        ++counts[t];
    }
    const auto present = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
    if (present < 2) throw UndefinedMetric("averaged_auc: fewer than two classes among scored instances");

    double total = 0.0;
    std::vector<double> column(truth.size());
    std::vector<std::uint8_t> positive(truth.size());
    for (std::size_t k = 0; k < n_classes; ++k) {
        if (counts[k] == 0) continue;
        for (std::size_t r = 0; r < truth.size(); ++r) {
            column[r] = scores(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k));
            positive[r] = truth[r] == k ? 1 : 0;
        }
        total += micro_auc(column, positive);
    }
    return total / static_cast<double>(present);
}

double accuracy_multiclass(const Matrix& scores, std::span<const std::size_t> truth) {
    if (static_cast<std::size_t>(scores.rows()) != truth.size()) throw ShapeError("accuracy: row count mismatch");
    if (truth.empty()) throw UndefinedMetric("accuracy: no masked instances");
    std::size_t hits = 0;
    for (std::size_t r = 0; r < truth.size(); ++r) {
        const auto row = scores.row(static_cast<Eigen::Index>(r));
        hits += argmax_first(std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))) == truth[r];
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------

namespace {

constexpr MetricColumn kColumns[] = {
    {"rmse", &MetricsReport::rmse, &MetricsReport::rmse_std},
    {"micro_auc", &MetricsReport::micro_auc, &MetricsReport::micro_auc_std},
    {"hamming_accuracy", &MetricsReport::hamming_accuracy, &MetricsReport::hamming_accuracy_std},
    {"averaged_auc", &MetricsReport::averaged_auc, &MetricsReport::averaged_auc_std},
    {"accuracy", &MetricsReport::accuracy, &MetricsReport::accuracy_std},
    {"rmse_standardized", &MetricsReport::rmse_standardized, nullptr},
    {"threshold", &MetricsReport::threshold, nullptr},
};

template <typename Fn>
void guarded(MetricsReport& report, Fn&& fn) {
    try {
        fn();
    } catch (const UndefinedMetric& e) {
        report.notes.emplace_back(e.what());
    }
}

}  // namespace

std::span<const MetricColumn> metric_columns() { return kColumns; }

MetricsReport aggregate(std::span<const MetricsReport> reports) {
    MetricsReport out;
    out.n_repeats = reports.size();
    for (const auto& col : kColumns) {
        std::vector<double> xs;
        for (const auto& r : reports) {
            if (r.*col.value) xs.push_back(*(r.*col.value));
        }
        if (xs.empty()) continue;
        const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
        out.*col.value = mean;
        if (col.stddev && xs.size() > 1) {
            double ss = 0.0;
            for (double x : xs) ss += (x - mean) * (x - mean);
            out.*col.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
        }
    }
    for (const auto& r : reports) {
        for (const auto& note : r.notes) {
            if (std::find(out.notes.begin(), out.notes.end(), note) == out.notes.end()) out.notes.push_back(note);
        }
    }
    return out;
}

MetricsReport score(const ScoringInput& input) {
    const IncompleteDataset& ds = input.dataset;
    const Matrix& truth = ds.ground_truth();
    const MaskMatrix& observed = ds.observed();
    if (input.imputed.rows() != truth.rows() || input.imputed.cols() != truth.cols()) {
        throw ShapeError("score: imputed matrix shape does not match the dataset");
    }
    const auto& layout = ds.layout();
    MetricsReport report;
    report.threshold = input.threshold;

    if (input.score_features) {
        std::vector<double> t_orig, i_orig, t_std, i_std;
        for (Eigen::Index r = 0; r < truth.rows(); ++r) {
            for (std::size_t f : layout.features) {
                const auto c = static_cast<Eigen::Index>(f);
                if (observed(r, c)) continue;
                t_std.push_back(truth(r, c));
                i_std.push_back(input.imputed(r, c));
                t_orig.push_back(ds.stats().to_original(f, truth(r, c)));
                i_orig.push_back(ds.stats().to_original(f, input.imputed(r, c)));
            }
        }
        guarded(report, [&] {
            report.rmse = rmse(t_orig, i_orig);
            report.rmse_standardized = rmse(t_std, i_std);
        });
    }

    const auto free = layout.free_labels();
    if (!free.empty()) {
        std::vector<double> scores;
        std::vector<std::uint8_t> labels, predicted;
        const double t = input.threshold.value_or(0.5);
        for (Eigen::Index r = 0; r < truth.rows(); ++r) {
            for (std::size_t l : free) {
                const auto c = static_cast<Eigen::Index>(l);
                if (observed(r, c)) continue;
                scores.push_back(input.imputed(r, c));
                labels.push_back(truth(r, c) != 0.0 ? 1 : 0);
                predicted.push_back(input.imputed(r, c) > t ? 1 : 0);
            }
        }
        guarded(report, [&] { report.micro_auc = micro_auc(scores, labels); });
        guarded(report, [&] { report.hamming_accuracy = hamming_accuracy(predicted, labels); });
    }

    std::vector<double> group_auc, group_acc;
    for (const auto& group : layout.class_groups) {
        std::vector<std::size_t> rows;
        for (Eigen::Index r = 0; r < truth.rows(); ++r) {
            if (!observed(r, static_cast<Eigen::Index>(group.front()))) rows.push_back(static_cast<std::size_t>(r));
        }
        Matrix scores(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(group.size()));
        std::vector<std::size_t> classes(rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const auto r = static_cast<Eigen::Index>(rows[k]);
            std::size_t cls = 0;
            for (std::size_t g = 0; g < group.size(); ++g) {
                const auto c = static_cast<Eigen::Index>(group[g]);
                scores(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(g)) = input.imputed(r, c);
                if (truth(r, c) != 0.0) cls = g;
            }
            classes[k] = cls;
        }
        guarded(report, [&] { group_auc.push_back(averaged_auc(scores, classes)); });
        guarded(report, [&] { group_acc.push_back(accuracy_multiclass(scores, classes)); });
    }
    auto mean_of = [](const std::vector<double>& xs) {
        return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    };
    if (!group_auc.empty()) report.averaged_auc = mean_of(group_auc);
    if (!group_acc.empty()) report.accuracy = mean_of(group_acc);
    return report;
}

}  // namespace lossyrbm
