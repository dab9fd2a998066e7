#include "lossyrbm/experiment.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace lossyrbm {

namespace {

constexpr std::uint64_t kTagMask = 21;
constexpr std::uint64_t kTagTrain = 22;
constexpr std::uint64_t kTagStop = 23;
constexpr std::uint64_t kTagThreshold = 24;
constexpr std::uint64_t kTagImpute = 25;
constexpr std::uint64_t kTagSplit = 26;
constexpr std::uint64_t kTagStopRows = 27;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, std::string s) {
    s = trim(s);
    bool percent = false;
    if (!s.empty() && s.back() == '%') {
        percent = true;
        s.pop_back();
    }
    double x = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
    }
    return percent ? x / 100.0 : x;
}

std::uint64_t to_u64(const std::string& key, std::string s) {
    s = trim(s);
    std::uint64_t x = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + s + "'");
    }
    return x;
}

std::vector<double> to_list(const std::string& key, const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!trim(item).empty()) out.push_back(to_double(key, item));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

bool has_masked_label(const IncompleteDataset& ds, std::size_t r) {
    for (std::size_t l : ds.layout().labels) {
        if (!ds.observed()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(l))) return true;
    }
    return false;
}

std::vector<std::size_t> rows_with_missing(const ObservedData& data) {
    std::vector<std::size_t> rows;
    for (Eigen::Index r = 0; r < data.observed.rows(); ++r) {
        if ((data.observed.row(r).array() == 0).any()) rows.push_back(static_cast<std::size_t>(r));
    }
    return rows;
}

std::string format_number(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
}

std::string percent_label(double q) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g%%", q * 100.0);
    return buf;
}

std::string cell_dir_name(const CellResult& cell) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "qfea%g_qlabel%g", cell.q_fea, cell.q_label);
    return buf;
}

template <typename Body>
ExperimentGrid run_grid(const ExperimentConfig& config, ExperimentMode mode, const ProgressFn& progress, Body&& body) {
    config.validate();
    ExperimentGrid grid;
    grid.mode = mode;
    for (double qf : config.q_fea) {
        for (double ql : config.q_label) {
            CellResult cell;
            cell.q_fea = qf;
            cell.q_label = ql;
            std::vector<MetricsReport> ok;
            for (std::size_t r = 0; r < config.n_repeats; ++r) {
                RepeatResult rep;
                rep.repeat = r;
                rep.seed = cell_seed(config.base_seed, qf, ql, r);
                try {
                    body(qf, ql, rep);
                    ok.push_back(rep.metrics);
                } catch (const std::exception& e) {
                    rep.failure = e.what();
                }
                if (progress) {
                    std::ostringstream line;
                    line << "q_fea=" << qf << " q_label=" << ql << " repeat=" << r;
                    if (!rep.failure.empty()) {
                        line << " FAILED: " << rep.failure;
                    } else {
                        line << " epochs=" << rep.epochs_run << " best_epoch=" << rep.best_epoch;
                        for (const auto& col : metric_columns()) {
                            if (rep.metrics.*col.value) line << ' ' << col.name << '=' << *(rep.metrics.*col.value);
                        }
                    }
                    progress(line.str());
                }
                cell.repeats.push_back(std::move(rep));
            }
            cell.summary = aggregate(ok);
            grid.cells.push_back(std::move(cell));
        }
    }
    return grid;
}

std::optional<double> maybe_threshold(const RbmModel& model, const ObservedData& view, const ExperimentConfig& config,
                                      std::uint64_t seed, MetricsReport& report) {
    if (view.layout.free_labels().empty()) return std::nullopt;
    try {
        return fit_threshold(model, view, config.imputation, seed).threshold;
    } catch (const UndefinedMetric& e) {
        report.notes.emplace_back(std::string("threshold: ") + e.what());
        return std::nullopt;
    }
}

StoppingMetric stopper_for(const IncompleteDataset& masked, const ExperimentConfig& config, std::uint64_t seed) {
    bool any = false;
    for (std::size_t r = 0; r < masked.n_rows() && !any; ++r) any = has_masked_label(masked, r);
    if (!any) return {};
    ImputationConfig stop_cfg = config.imputation;
    stop_cfg.n_restarts = config.stop_restarts;
    return transductive_auc_metric(masked, stop_cfg, config.stop_max_rows, derive_seed(seed, {kTagStop}));
}

}  // namespace

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
    if (q_fea.empty() || q_label.empty()) throw ConfigError("masking grids must be nonempty");
    for (double q : q_fea) {
        if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("q_fea values must be in [0,1]");
    }
    for (double q : q_label) {
        if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("q_label values must be in [0,1]");
    }
    if (n_repeats < 1) throw ConfigError("repeats must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0,1)");
    if (stop_restarts < 1) throw ConfigError("stop_restarts must be >= 1");
    train.validate();
    imputation.validate();
}

void set_config_key(ExperimentConfig& c, const std::string& raw_key, const std::string& raw_value) {
    std::string key = trim(raw_key);
    std::replace(key.begin(), key.end(), '-', '_');
    const std::string value = trim(raw_value);
    if (key == "dataset") c.dataset = value;
    else if (key == "labels") c.labels = value;
    else if (key == "schema") c.schema = value;
    else if (key == "format") {
        if (value != "csv" && value != "mnist") throw ConfigError("format must be csv or mnist");
        c.format = value;
    } else if (key == "experiment" || key == "experiment_mode") {
        if (value == "transductive") c.mode = ExperimentMode::Transductive;
        else if (value == "inductive") c.mode = ExperimentMode::Inductive;
        else throw ConfigError("experiment must be transductive or inductive");
    } else if (key == "q_fea") c.q_fea = to_list(key, value);
    else if (key == "q_label") c.q_label = to_list(key, value);
    else if (key == "repeats") c.n_repeats = to_u64(key, value);
    else if (key == "seed") c.base_seed = to_u64(key, value);
    else if (key == "out") c.out_dir = value;
    else if (key == "limit") c.limit = to_u64(key, value);
    else if (key == "train_fraction") c.train_fraction = to_double(key, value);
    else if (key == "mode" || key == "negative_phase") {
        if (value == "cd") c.train.negative_phase = NegativePhase::CD;
        else if (value == "pcd") c.train.negative_phase = NegativePhase::PCD;
        else throw ConfigError("mode must be cd or pcd");
    } else if (key == "epochs") c.train.max_epochs = to_u64(key, value);
    else if (key == "patience") c.train.patience_epochs = to_u64(key, value);
    else if (key == "eval_every") c.train.eval_every = to_u64(key, value);
    else if (key == "learning_rate") c.train.learning_rate = to_double(key, value);
    else if (key == "minibatch") c.train.minibatch_size = to_u64(key, value);
    else if (key == "k") c.train.k_gibbs = to_u64(key, value);
    else if (key == "hidden") c.train.n_hidden = to_u64(key, value);
    else if (key == "chains") c.train.n_negative_chains = to_u64(key, value);
    else if (key == "momentum") c.train.momentum = to_double(key, value);
    else if (key == "weight_decay") c.train.weight_decay = to_double(key, value);
    else if (key == "init_stddev") c.train.init_weight_stddev = to_double(key, value);
    else if (key == "restarts") c.imputation.n_restarts = to_u64(key, value);
    else if (key == "iterations") c.imputation.n_iterations = to_u64(key, value);
    else if (key == "damping") c.imputation.damping = to_double(key, value);
    else if (key == "stop_restarts") c.stop_restarts = to_u64(key, value);
    else if (key == "stop_max_rows") c.stop_max_rows = to_u64(key, value);
    else throw ConfigError("unknown config key '" + raw_key + "'");
}

void parse_config(std::istream& in, ExperimentConfig& config) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        set_config_key(config, line.substr(0, eq), line.substr(eq + 1));
    }
}

void load_config_file(const std::string& path, ExperimentConfig& config) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    parse_config(in, config);
}

IncompleteDataset load_dataset(const ExperimentConfig& config) {
    if (config.dataset.empty()) throw ConfigError("no dataset given");
    IncompleteDataset ds;
    if (config.format == "mnist") {
        if (config.labels.empty()) throw ConfigError("mnist format needs a labels file");
        ds = load_mnist_idx(config.dataset, config.labels);
    } else {
        if (config.schema.empty()) throw ConfigError("csv format needs a schema file");
        ds = load_csv(config.dataset, CsvSchema::load(config.schema));
    }
    if (config.limit > 0) ds = subsample(ds, config.limit, config.base_seed);
    return ds;
}

std::uint64_t cell_seed(std::uint64_t base_seed, double q_fea, double q_label, std::size_t repeat) {
    return derive_seed(base_seed, {std::bit_cast<std::uint64_t>(q_fea), std::bit_cast<std::uint64_t>(q_label), repeat});
}

bool CellResult::failed() const {
    return std::any_of(repeats.begin(), repeats.end(), [](const RepeatResult& r) { return !r.failure.empty(); });
}

StoppingMetric transductive_auc_metric(const IncompleteDataset& masked, const ImputationConfig& imputation,
                                       std::size_t max_rows, std::uint64_t seed) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < masked.n_rows(); ++r) {
        if (has_masked_label(masked, r)) rows.push_back(r);
    }
    if (rows.empty()) throw UndefinedMetric("stopping metric: no masked labels");
    if (max_rows > 0 && rows.size() > max_rows) {
        Rng rng(derive_seed(seed, {kTagStopRows}));
        std::shuffle(rows.begin(), rows.end(), rng);
        rows.resize(max_rows);
        std::sort(rows.begin(), rows.end());
    }
    auto subset = std::make_shared<IncompleteDataset>(masked.select_rows(rows));
    auto view = std::make_shared<ObservedData>(subset->observed_view());
    return [subset, view, imputation, seed](const RbmModel& model) {
        const Matrix imputed = impute_all(model, *view, imputation, seed);
        const MetricsReport rep = score({*subset, imputed, std::nullopt, false});
        if (rep.micro_auc && rep.averaged_auc) return 0.5 * (*rep.micro_auc + *rep.averaged_auc);
        if (rep.micro_auc) return *rep.micro_auc;
        if (rep.averaged_auc) return *rep.averaged_auc;
        throw UndefinedMetric("stopping metric: label AUC undefined on the masked labels");
    };
}

ThresholdFit fit_threshold(const RbmModel& model, const ObservedData& data, const ImputationConfig& imputation,
                           std::uint64_t seed) {
    const auto free = data.layout.free_labels();
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < data.n_rows(); ++r) {
        for (std::size_t l : free) {
            if (data.observed(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(l))) {
                rows.push_back(r);
                break;
            }
        }
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto nl = static_cast<Eigen::Index>(free.size());
    Matrix probs(n, nl), labels(n, nl);
    MaskMatrix observed(n, nl);
    PartialVisible row;
    for (Eigen::Index k = 0; k < n; ++k) {
        const std::size_t r = rows[static_cast<std::size_t>(k)];
        const MaskedRow src = data.row(r);
        row.values.assign(src.values.begin(), src.values.end());
        row.observed.assign(src.observed.begin(), src.observed.end());
        for (std::size_t l : data.layout.labels) row.observed[l] = 0;
        Rng rng(derive_seed(seed, {r}));
        const Imputation imp = impute(model, row.view(), imputation, rng);
        for (Eigen::Index c = 0; c < nl; ++c) {
            const std::size_t l = free[static_cast<std::size_t>(c)];
            probs(k, c) = imp.visible(static_cast<Eigen::Index>(l));
            observed(k, c) = src.observed[l];
            labels(k, c) = src.observed[l] ? src.values[l] : 0.0;
        }
    }
    return learn_threshold(probs, labels, observed);
}

ExperimentGrid run_transductive(const ExperimentConfig& config, const IncompleteDataset& dataset,
                                const ProgressFn& progress) {
    return run_grid(config, ExperimentMode::Transductive, progress, [&](double qf, double ql, RepeatResult& rep) {
        const IncompleteDataset masked = apply_mask(dataset, {qf, ql, derive_seed(rep.seed, {kTagMask})});
        rep.train_mask = masked.observed();
        const ObservedData view = masked.observed_view();

        TrainConfig tc = config.train;
        tc.seed = derive_seed(rep.seed, {kTagTrain});
        TrainResult trained = train(view, tc, stopper_for(masked, config, rep.seed));
        rep.log = trained.log;
        rep.best_epoch = trained.best_epoch;
        rep.epochs_run = trained.epochs_run;

        MetricsReport notes;
        const auto threshold =
            maybe_threshold(trained.model, view, config, derive_seed(rep.seed, {kTagThreshold}), notes);
        const Matrix imputed = impute_rows(trained.model, view, rows_with_missing(view), config.imputation,
                                           derive_seed(rep.seed, {kTagImpute}));
        rep.metrics = score({masked, imputed, threshold, true});
        rep.metrics.notes.insert(rep.metrics.notes.end(), notes.notes.begin(), notes.notes.end());
        rep.model = std::move(trained.model);
    });
}

ExperimentGrid run_inductive(const ExperimentConfig& config, const IncompleteDataset& dataset,
                             const ProgressFn& progress) {
    return run_grid(config, ExperimentMode::Inductive, progress, [&](double qf, double ql, RepeatResult& rep) {
        InductiveSplit split =
            split_inductive(dataset, config.train_fraction, qf, derive_seed(rep.seed, {kTagSplit}));
        const IncompleteDataset train_set = apply_mask(split.train, {qf, ql, derive_seed(rep.seed, {kTagMask})});
        rep.train_mask = train_set.observed();
        rep.test_mask = split.test.observed();
        rep.test_rows = split.test_rows;
        const ObservedData view = train_set.observed_view();

        TrainConfig tc = config.train;
        tc.seed = derive_seed(rep.seed, {kTagTrain});
        TrainResult trained = train(view, tc, stopper_for(train_set, config, rep.seed));
        rep.log = trained.log;
        rep.best_epoch = trained.best_epoch;
        rep.epochs_run = trained.epochs_run;

        MetricsReport notes;
        const auto threshold =
            maybe_threshold(trained.model, view, config, derive_seed(rep.seed, {kTagThreshold}), notes);
        const Matrix imputed = impute_all(trained.model, split.test.observed_view(), config.imputation,
                                          derive_seed(rep.seed, {kTagImpute}));
        rep.metrics = score({split.test, imputed, threshold, false});
        rep.metrics.notes.insert(rep.metrics.notes.end(), notes.notes.begin(), notes.notes.end());
        rep.model = std::move(trained.model);
    });
}

// ---------------------------------------------------------------------------

void write_aggregate_csv(std::ostream& out, const ExperimentGrid& grid) {
    out << "q_fea,q_label,n_repeats,n_failed";
    for (const auto& col : metric_columns()) out << ',' << col.name << "_mean," << col.name << "_std";
    out << '\n';
    for (const auto& cell : grid.cells) {
        const auto failed = std::count_if(cell.repeats.begin(), cell.repeats.end(),
                                          [](const RepeatResult& r) { return !r.failure.empty(); });
        out << format_number(cell.q_fea) << ',' << format_number(cell.q_label) << ',' << cell.repeats.size() << ','
            << failed;
        for (const auto& col : metric_columns()) {
            out << ',';
            if (cell.summary.*col.value) out << format_number(*(cell.summary.*col.value));
            out << ',';
            if (col.stddev && cell.summary.*col.stddev) out << format_number(*(cell.summary.*col.stddev));
        }
        out << '\n';
    }
}

void write_repeats_csv(std::ostream& out, const CellResult& cell) {
    out << "repeat,seed,best_epoch,epochs_run,failure";
    for (const auto& col : metric_columns()) out << ',' << col.name;
    out << '\n';
    for (const auto& rep : cell.repeats) {
        std::string failure = rep.failure;
        std::replace(failure.begin(), failure.end(), ',', ';');
        std::replace(failure.begin(), failure.end(), '\n', ' ');
        out << rep.repeat << ',' << rep.seed << ',' << rep.best_epoch << ',' << rep.epochs_run << ',' << failure;
        for (const auto& col : metric_columns()) {
            out << ',';
            if (rep.failure.empty() && rep.metrics.*col.value) out << format_number(*(rep.metrics.*col.value));
        }
        out << '\n';
    }
}

void write_markdown_table(std::ostream& out, const ExperimentGrid& grid) {
    std::vector<double> q_labels, q_feas;
    for (const auto& c : grid.cells) {
        if (std::find(q_labels.begin(), q_labels.end(), c.q_label) == q_labels.end()) q_labels.push_back(c.q_label);
        if (std::find(q_feas.begin(), q_feas.end(), c.q_fea) == q_feas.end()) q_feas.push_back(c.q_fea);
    }
    std::vector<const MetricColumn*> shown;
    for (const auto& col : metric_columns()) {
        if (!col.stddev) continue;
        const bool any = std::any_of(grid.cells.begin(), grid.cells.end(),
                                     [&](const CellResult& c) { return (c.summary.*col.value).has_value(); });
        if (any) shown.push_back(&col);
    }
    out << "| Model |";
    for (const auto* col : shown) {
        for (double ql : q_labels) out << ' ' << col->name << " (q_label " << percent_label(ql) << ") |";
    }
    out << "\n|---|";
    for (std::size_t k = 0; k < shown.size() * q_labels.size(); ++k) out << "---|";
    out << '\n';
    for (double qf : q_feas) {
        out << "| RBM-MO (q_fea " << percent_label(qf) << ") |";
        for (const auto* col : shown) {
            for (double ql : q_labels) {
                const auto it = std::find_if(grid.cells.begin(), grid.cells.end(),
                                             [&](const CellResult& c) { return c.q_fea == qf && c.q_label == ql; });
                out << ' ';
                if (it != grid.cells.end() && it->summary.*col->value) {
                    char buf[64];
                    std::snprintf(buf, sizeof buf, "%.3f", *(it->summary.*col->value));
                    out << buf;
                    if (it->summary.*col->stddev) {
                        std::snprintf(buf, sizeof buf, " ± %.3f", *(it->summary.*col->stddev));
                        out << buf;
                    }
                } else {
                    out << "n/a";
                }
                out << " |";
            }
        }
        out << '\n';
    }
}

void prepare_output_dir(const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    const auto probe = out_dir / ".write_probe";
    {
        std::ofstream f(probe);
        if (!f) throw ConfigError("output directory " + out_dir.string() + " is not writable");
    }
    std::filesystem::remove(probe, ec);
}

void emit_report(const ExperimentGrid& grid, const std::filesystem::path& out_dir) {
    prepare_output_dir(out_dir);
    auto open = [](const std::filesystem::path& p) {
        std::ofstream f(p, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + p.string());
        return f;
    };
    {
        auto f = open(out_dir / "aggregate.csv");
        write_aggregate_csv(f, grid);
    }
    {
        auto f = open(out_dir / "aggregate.md");
        write_markdown_table(f, grid);
    }
    for (const auto& cell : grid.cells) {
        const auto dir = out_dir / cell_dir_name(cell);
        std::filesystem::create_directories(dir);
        {
            auto f = open(dir / "repeats.csv");
            write_repeats_csv(f, cell);
        }
        for (const auto& rep : cell.repeats) {
            const auto rdir = dir / ("repeat_" + std::to_string(rep.repeat));
            std::filesystem::create_directories(rdir);
            {
                auto f = open(rdir / "train_log.csv");
                write_training_log(f, rep.log);
            }
            if (rep.model) rep.model->save((rdir / "model.bin").string());
            if (rep.train_mask.size() > 0) {
                auto f = open(rdir / "mask_train.csv");
                export_mask(f, rep.train_mask);
            }
            if (rep.test_mask.size() > 0) {
                auto f = open(rdir / "mask_test.csv");
                export_mask(f, rep.test_mask);
                auto g = open(rdir / "test_rows.csv");
                g << "row\n";
                for (std::size_t r : rep.test_rows) g << r << '\n';
            }
            if (!rep.metrics.notes.empty() || !rep.failure.empty()) {
                auto f = open(rdir / "notes.txt");
                if (!rep.failure.empty()) f << "failure: " << rep.failure << '\n';
                for (const auto& n : rep.metrics.notes) f << n << '\n';
            }
        }
    }
}

}  // namespace lossyrbm
