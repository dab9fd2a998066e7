#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lossyrbm/experiment.hpp"

using namespace lossyrbm;

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kNumeric = 3 };

struct Options {
    std::string config_path;
    std::map<std::string, std::string> overrides;
    std::vector<std::string> sets;
    std::string model_path;
    std::string mask_path;
};

// Flag name -> config key. Values are passed through set_config_key after the
// config file so flags always win.
const std::vector<std::pair<std::string, std::string>> kFlags = {
    {"--dataset", "dataset"},   {"--labels", "labels"},     {"--schema", "schema"},
    {"--format", "format"},     {"--q-fea", "q_fea"},       {"--q-label", "q_label"},
    {"--repeats", "repeats"},   {"--seed", "seed"},         {"--out", "out"},
    {"--mode", "mode"},         {"--epochs", "epochs"},     {"--patience", "patience"},
    {"--limit", "limit"},       {"--hidden", "hidden"},     {"--lr", "learning_rate"},
    {"--k", "k"},               {"--minibatch", "minibatch"}, {"--restarts", "restarts"},
    {"--iterations", "iterations"}, {"--eval-every", "eval_every"},
};

void add_common(CLI::App* sub, Options& opt) {
    sub->add_option("--config", opt.config_path, "key = value config file");
    for (const auto& [flag, key] : kFlags) {
        sub->add_option_function<std::string>(
            flag, [&opt, key = key](const std::string& v) { opt.overrides[key] = v; }, "sets '" + key + "'");
    }
    sub->add_option("--set", opt.sets, "extra config entry key=value (repeatable)");
}

ExperimentConfig build_config(const Options& opt) {
    ExperimentConfig config;
    if (!opt.config_path.empty()) load_config_file(opt.config_path, config);
    for (const auto& [key, value] : opt.overrides) set_config_key(config, key, value);
    for (const auto& kv : opt.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_key(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    config.validate();
    if (config.out_dir.empty()) throw ConfigError("no output directory given (--out)");
    return config;
}

void print_progress(const std::string& line) { std::cerr << line << std::endl; }

// Mask for the single-model subcommands: an explicit mask file, or the first
// grid cell's masking rates.
IncompleteDataset masked_for(const ExperimentConfig& config, const IncompleteDataset& ds, const Options& opt) {
    if (!opt.mask_path.empty()) {
        std::ifstream in(opt.mask_path);
        if (!in) throw DataError("cannot open mask " + opt.mask_path);
        IncompleteDataset out = ds;
        out.set_mask(import_mask(in, ds.n_rows(), ds.n_visible()));
        return out;
    }
    const double qf = config.q_fea.front(), ql = config.q_label.front();
    return apply_mask(ds, {qf, ql, derive_seed(cell_seed(config.base_seed, qf, ql, 0), {21})});
}

std::optional<double> threshold_for(const RbmModel& model, const ObservedData& view, const ExperimentConfig& config) {
    if (view.layout.free_labels().empty()) return std::nullopt;
    try {
        return fit_threshold(model, view, config.imputation, derive_seed(config.base_seed, {24})).threshold;
    } catch (const UndefinedMetric&) {
        return std::nullopt;
    }
}

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + p.string());
    return f;
}

int run_grid(const Options& opt, ExperimentMode mode) {
    ExperimentConfig config = build_config(opt);
    config.mode = mode;
    prepare_output_dir(config.out_dir);
    const IncompleteDataset ds = load_dataset(config);
    std::cerr << "loaded " << ds.n_rows() << " x " << ds.n_visible() << '\n';
    const ExperimentGrid grid = mode == ExperimentMode::Transductive ? run_transductive(config, ds, print_progress)
                                                                      : run_inductive(config, ds, print_progress);
    emit_report(grid, config.out_dir);
    write_markdown_table(std::cout, grid);
    return kOk;
}

int run_train(const Options& opt) {
    const ExperimentConfig config = build_config(opt);
    prepare_output_dir(config.out_dir);
    const IncompleteDataset masked = masked_for(config, load_dataset(config), opt);
    const ObservedData view = masked.observed_view();
    TrainConfig tc = config.train;
    tc.seed = derive_seed(config.base_seed, {22});
    StoppingMetric stopper;
    try {
        ImputationConfig stop_cfg = config.imputation;
        stop_cfg.n_restarts = config.stop_restarts;
        stopper = transductive_auc_metric(masked, stop_cfg, config.stop_max_rows, derive_seed(config.base_seed, {23}));
    } catch (const UndefinedMetric&) {
        std::cerr << "no masked labels: training without early stopping\n";
    }
    const TrainResult result = train(view, tc, stopper, [](std::size_t epoch, const RbmModel& m) {
        if (epoch % 50 == 0) std::cerr << "epoch " << epoch << " norm " << m.parameter_norm() << '\n';
    });
    const std::filesystem::path out = config.out_dir;
    result.model.save((out / "model.bin").string());
    auto log = open_out(out / "train_log.csv");
    write_training_log(log, result.log);
    auto mask = open_out(out / "mask.csv");
    export_mask(mask, masked.observed());
    std::cout << "best_epoch " << result.best_epoch << " epochs_run " << result.epochs_run << '\n';
    return kOk;
}

int run_impute(const Options& opt, bool with_scores) {
    if (opt.model_path.empty()) throw ConfigError("--model is required");
    const ExperimentConfig config = build_config(opt);
    prepare_output_dir(config.out_dir);
    const RbmModel model = RbmModel::load(opt.model_path);
    const IncompleteDataset masked = masked_for(config, load_dataset(config), opt);
    const ObservedData view = masked.observed_view();
    if (model.n_visible() != view.n_visible()) throw DataError("model and dataset disagree on the visible layer size");
    const auto threshold = threshold_for(model, view, config);
    const Matrix imputed = impute_all(model, view, config.imputation, derive_seed(config.base_seed, {25}));
    const std::filesystem::path out = config.out_dir;
    auto f = open_out(out / "imputations.csv");
    write_imputation_csv(f, view, imputed, threshold);
    if (with_scores) {
        const MetricsReport report = score({masked, imputed, threshold, true});
        auto m = open_out(out / "metrics.csv");
        m << "metric,value\n";
        for (const auto& col : metric_columns()) {
            if (!(report.*col.value)) continue;
            m << col.name << ',' << *(report.*col.value) << '\n';
            std::cout << col.name << ' ' << *(report.*col.value) << '\n';
        }
        for (const auto& n : report.notes) std::cerr << "note: " << n << '\n';
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RBM training and imputation on data with missing features and labels"};
    app.require_subcommand(1);
    Options opt;

    auto* trans = app.add_subcommand("transductive", "mask, train and reconstruct the same dataset over a grid");
    auto* induc = app.add_subcommand("inductive", "70/30 split, predict fully hidden test labels over a grid");
    auto* train_cmd = app.add_subcommand("train", "train one model on a masked dataset");
    auto* impute_cmd = app.add_subcommand("impute", "fill in the masked entries with a saved model");
    auto* eval_cmd = app.add_subcommand("eval", "impute with a saved model and score against ground truth");
    for (auto* sub : {trans, induc, train_cmd, impute_cmd, eval_cmd}) add_common(sub, opt);
    for (auto* sub : {train_cmd, impute_cmd, eval_cmd}) sub->add_option("--mask", opt.mask_path, "mask CSV (row,column)");
    for (auto* sub : {impute_cmd, eval_cmd}) sub->add_option("--model", opt.model_path, "saved model")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*trans) return run_grid(opt, ExperimentMode::Transductive);
        if (*induc) return run_grid(opt, ExperimentMode::Inductive);
        if (*train_cmd) return run_train(opt);
        if (*impute_cmd) return run_impute(opt, false);
        if (*eval_cmd) return run_impute(opt, true);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const BudgetExceeded& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    }
    return kOk;
}
