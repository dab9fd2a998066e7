#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lossyrbm/dataset.hpp"
#include "lossyrbm/lossy_training.hpp"
#include "lossyrbm/mean_field.hpp"
#include "lossyrbm/metrics.hpp"

namespace lossyrbm {

enum class ExperimentMode { Transductive, Inductive };

struct ExperimentConfig {
    std::string dataset;  // CSV file, or IDX images file when format == "mnist"
    std::string labels;   // IDX labels file (mnist only)
    std::string schema;   // CSV schema file
    std::string format = "csv";
    ExperimentMode mode = ExperimentMode::Transductive;
    std::vector<double> q_fea{0.5};
    std::vector<double> q_label{0.3};
    TrainConfig train;
    ImputationConfig imputation;
    std::size_t n_repeats = 10;
    std::uint64_t base_seed = 0;
    std::string out_dir;
    std::size_t limit = 0;  // 0 = all rows
    double train_fraction = 0.7;
    /// Mean-field restarts and row cap used when evaluating the stopping metric.
    std::size_t stop_restarts = 3;
    std::size_t stop_max_rows = 2000;  // 0 = all rows with masked labels

    void validate() const;
};

/// Sets one key from a config file or CLI flag. Throws ConfigError on unknown keys or bad values.
void set_config_key(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Flat `key = value` lines, `#` comments.
void parse_config(std::istream& in, ExperimentConfig& config);
void load_config_file(const std::string& path, ExperimentConfig& config);

/// Loads the configured dataset and applies `limit`.
IncompleteDataset load_dataset(const ExperimentConfig& config);

/// Stable per-(cell, repeat) seed.
std::uint64_t cell_seed(std::uint64_t base_seed, double q_fea, double q_label, std::size_t repeat);

struct RepeatResult {
    std::size_t repeat = 0;
    std::uint64_t seed = 0;
    MetricsReport metrics;
    std::optional<RbmModel> model;
    std::vector<TrainLogRecord> log;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    MaskMatrix train_mask;
    MaskMatrix test_mask;                // inductive only
    std::vector<std::size_t> test_rows;  // inductive only, original row indices
    std::string failure;                 // empty on success
};

struct CellResult {
    double q_fea = 0.0;
    double q_label = 0.0;
    std::vector<RepeatResult> repeats;
    MetricsReport summary;
    bool failed() const;
};

struct ExperimentGrid {
    ExperimentMode mode = ExperimentMode::Transductive;
    std::vector<CellResult> cells;
};

/// Transductive stopping metric: label AUC on `masked`'s hidden labels
/// (micro-AUC for free labels, averaged AUC for class groups, mean of both when mixed).
StoppingMetric transductive_auc_metric(const IncompleteDataset& masked, const ImputationConfig& imputation,
                                       std::size_t max_rows, std::uint64_t seed);

/// Label probabilities predicted for rows with their labels unpinned; used to
/// fit the multi-label threshold against labels that were observed.
ThresholdFit fit_threshold(const RbmModel& model, const ObservedData& data, const ImputationConfig& imputation,
                           std::uint64_t seed);

/// Optional progress sink; receives one line per finished repeat.
using ProgressFn = std::function<void(const std::string&)>;

ExperimentGrid run_transductive(const ExperimentConfig& config, const IncompleteDataset& dataset,
                                const ProgressFn& progress = {});
ExperimentGrid run_inductive(const ExperimentConfig& config, const IncompleteDataset& dataset,
                             const ProgressFn& progress = {});

/// One CSV row per cell: q_fea, q_label, n_ok, then mean/std per metric.
void write_aggregate_csv(std::ostream& out, const ExperimentGrid& grid);
/// One CSV row per (cell, repeat).
void write_repeats_csv(std::ostream& out, const CellResult& cell);
/// Metric x q_label table, one row per q_fea.
void write_markdown_table(std::ostream& out, const ExperimentGrid& grid);

/// Writes aggregate.csv, aggregate.md, and per cell a directory with
/// repeats.csv plus per repeat the training log, model and masks.
void emit_report(const ExperimentGrid& grid, const std::filesystem::path& out_dir);

/// Throws ConfigError when `out_dir` cannot be created or written.
void prepare_output_dir(const std::filesystem::path& out_dir);

}  // namespace lossyrbm
