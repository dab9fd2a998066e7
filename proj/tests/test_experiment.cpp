#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "lossyrbm/experiment.hpp"

using namespace lossyrbm;
namespace fs = std::filesystem;

namespace {

// Rows drawn from two prototypes so labels are predictable from features.
IncompleteDataset toy(std::size_t n, bool with_class, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> noise(0.0, 0.3);
    const std::size_t nf = 4, nl = 2, nc = with_class ? 2 : 0;
    Matrix v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nf + nl + nc));
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const int k = static_cast<int>(g() & 1);
        for (Eigen::Index f = 0; f < 4; ++f) v(r, f) = (k ? 1.0 : -1.0) * (f % 2 ? 1.0 : 0.5) + noise(g);
        v(r, 4) = k;
        v(r, 5) = 1 - k;
        if (with_class) {
            v(r, 6) = k;
            v(r, 7) = 1 - k;
        }
    }
    std::vector<VisibleUnitSpec> units(nf, VisibleUnitSpec::gaussian());
    units.resize(nf + nl + nc, VisibleUnitSpec::binary());
    VisibleLayout layout{{0, 1, 2, 3}, {4, 5}, {}};
    if (with_class) {
        layout.labels = {4, 5, 6, 7};
        layout.class_groups = {{6, 7}};
    }
    return IncompleteDataset(v, units, layout, FeatureStats::identity(v.cols()));
}

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.q_fea = {0.3};
    c.q_label = {0.3};
    c.n_repeats = 2;
    c.base_seed = 5;
    c.train.n_hidden = 6;
    c.train.learning_rate = 0.05;
    c.train.max_epochs = 6;
    c.train.eval_every = 2;
    c.train.patience_epochs = 4;
    c.imputation.n_restarts = 3;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "lossyrbm_tests" / name;
    fs::remove_all(d);
    return d;
}

}  // namespace

TEST_CASE("config parsing") {
    ExperimentConfig c;
    std::istringstream in(
        "# comment\n"
        "dataset = data.csv\n"
        "q_fea = 50%, 80%   # trailing comment\n"
        "q_label = 0.3,0.5,0.8\n"
        "repeats = 3\n"
        "mode = pcd\n"
        "learning-rate = 0.01\n"
        "experiment = inductive\n");
    parse_config(in, c);
    CHECK(c.dataset == "data.csv");
    CHECK(c.q_fea == std::vector<double>{0.5, 0.8});
    CHECK(c.q_label.size() == 3);
    CHECK(c.n_repeats == 3);
    CHECK(c.train.negative_phase == NegativePhase::PCD);
    CHECK(c.train.learning_rate == 0.01);
    CHECK(c.mode == ExperimentMode::Inductive);

    CHECK_THROWS_AS(set_config_key(c, "nonsense", "1"), ConfigError);
    CHECK_THROWS_AS(set_config_key(c, "repeats", "many"), ConfigError);
    CHECK_THROWS_AS(set_config_key(c, "mode", "sgd"), ConfigError);
    std::istringstream no_eq("dataset data.csv\n");
    CHECK_THROWS_AS(parse_config(no_eq, c), ConfigError);

    c.n_repeats = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.n_repeats = 1;
    c.q_label.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("cell seeds are stable and distinct") {
    CHECK(cell_seed(1, 0.5, 0.3, 0) == cell_seed(1, 0.5, 0.3, 0));
    CHECK(cell_seed(1, 0.5, 0.3, 0) != cell_seed(1, 0.5, 0.3, 1));
    CHECK(cell_seed(1, 0.5, 0.3, 0) != cell_seed(1, 0.3, 0.5, 0));
    CHECK(cell_seed(1, 0.5, 0.3, 0) != cell_seed(2, 0.5, 0.3, 0));
}

TEST_CASE("empty masks leave every metric undefined") {
    ExperimentConfig c = small_config();
    c.q_fea = {0.0};
    c.q_label = {0.0};
    c.n_repeats = 1;
    const ExperimentGrid g = run_transductive(c, toy(30, true, 1));
    REQUIRE(g.cells.size() == 1);
    const auto& s = g.cells[0].summary;
    CHECK_FALSE(s.rmse.has_value());
    CHECK_FALSE(s.micro_auc.has_value());
    CHECK_FALSE(s.averaged_auc.has_value());
    CHECK_FALSE(s.notes.empty());
    CHECK_FALSE(g.cells[0].failed());
}

TEST_CASE("transductive grid is deterministic and learns the toy structure") {
    ExperimentConfig c = small_config();
    c.q_label = {0.3, 0.5};
    c.train.max_epochs = 300;
    c.train.patience_epochs = 300;
    c.train.eval_every = 20;
    const IncompleteDataset ds = toy(80, true, 2);
    const ExperimentGrid a = run_transductive(c, ds);
    const ExperimentGrid b = run_transductive(c, ds);
    std::ostringstream ca, cb;
    write_aggregate_csv(ca, a);
    write_aggregate_csv(cb, b);
    CHECK(ca.str() == cb.str());
    REQUIRE(a.cells.size() == 2);
    for (const auto& cell : a.cells) {
        CHECK_FALSE(cell.failed());
        CHECK(cell.summary.n_repeats == 2);
        CHECK(cell.summary.rmse.has_value());
        CHECK(cell.summary.rmse_std.has_value());
        CHECK(*cell.summary.micro_auc > 0.8);
        CHECK(*cell.summary.accuracy > 0.7);
        for (const auto& rep : cell.repeats) {
            REQUIRE(rep.model.has_value());
            CHECK(rep.best_epoch >= 1);
        }
    }
    CHECK(a.cells[0].repeats[0].seed != a.cells[0].repeats[1].seed);
}

TEST_CASE("inductive scoring covers labels only") {
    ExperimentConfig c = small_config();
    c.n_repeats = 1;
    c.train.max_epochs = 20;
    const IncompleteDataset ds = toy(60, true, 3);
    const ExperimentGrid a = run_inductive(c, ds);
    const ExperimentGrid b = run_inductive(c, ds);
    REQUIRE(a.cells.size() == 1);
    const auto& rep = a.cells[0].repeats[0];
    CHECK(rep.failure.empty());
    CHECK_FALSE(rep.metrics.rmse.has_value());
    CHECK(rep.metrics.micro_auc.has_value());
    CHECK(rep.metrics.accuracy.has_value());
    CHECK(rep.metrics.threshold.has_value());
    CHECK(rep.test_rows.size() == 18);
    CHECK(*rep.metrics.accuracy == *b.cells[0].repeats[0].metrics.accuracy);
    CHECK(*rep.metrics.micro_auc == *b.cells[0].repeats[0].metrics.micro_auc);
}

TEST_CASE("stage failures mark the cell and the run continues") {
    ExperimentConfig c = small_config();
    c.n_repeats = 1;
    c.q_fea = {0.3, 0.5};
    c.train.learning_rate = 1e308;
    const ExperimentGrid g = run_transductive(c, toy(20, false, 4));
    REQUIRE(g.cells.size() == 2);
    for (const auto& cell : g.cells) {
        CHECK(cell.failed());
        CHECK(cell.summary.n_repeats == 0);
    }
}

TEST_CASE("reports") {
    const fs::path empty_dir = fresh_dir("empty_report");
    emit_report(ExperimentGrid{}, empty_dir);
    const std::string agg = slurp(empty_dir / "aggregate.csv");
    CHECK(agg.rfind("q_fea,q_label,n_repeats,n_failed,rmse_mean,", 0) == 0);
    CHECK(std::count(agg.begin(), agg.end(), '\n') == 1);
    const std::string md = slurp(empty_dir / "aggregate.md");
    CHECK(std::count(md.begin(), md.end(), '\n') == 2);

    ExperimentConfig c = small_config();
    c.n_repeats = 1;
    const ExperimentGrid g = run_transductive(c, toy(30, false, 5));
    const fs::path dir = fresh_dir("one_cell");
    emit_report(g, dir);
    const std::string agg1 = slurp(dir / "aggregate.csv");
    CHECK(std::count(agg1.begin(), agg1.end(), '\n') == 2);
    const std::string md1 = slurp(dir / "aggregate.md");
    CHECK(std::count(md1.begin(), md1.end(), '\n') == 3);
    CHECK(md1.find("RBM-MO (q_fea 30%)") != std::string::npos);
    const fs::path rep = dir / "qfea0.3_qlabel0.3" / "repeat_0";
    CHECK(fs::exists(rep / "model.bin"));
    CHECK(fs::exists(rep / "train_log.csv"));
    CHECK(fs::exists(dir / "qfea0.3_qlabel0.3" / "repeats.csv"));

    // the stored mask replays the exact cells
    std::ifstream mf(rep / "mask_train.csv");
    CHECK(import_mask(mf, 30, 6) == g.cells[0].repeats[0].train_mask);
    const RbmModel back = RbmModel::load((rep / "model.bin").string());
    CHECK(back == *g.cells[0].repeats[0].model);

    const fs::path blocker = fresh_dir("blocker");
    fs::create_directories(blocker.parent_path());
    std::ofstream(blocker) << "x";
    CHECK_THROWS_AS(prepare_output_dir(blocker / "sub"), ConfigError);
}
