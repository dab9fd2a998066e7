#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "lossyrbm/exact_oracle.hpp"
#include "lossyrbm/lossy_training.hpp"
#include "support.hpp"

using namespace lossyrbm;

namespace {

ObservedData observed_from(const Matrix& values, const MaskMatrix& mask, double fill) {
    ObservedData d;
    d.values = values;
    d.observed = mask;
    for (Eigen::Index r = 0; r < values.rows(); ++r)
        for (Eigen::Index c = 0; c < values.cols(); ++c)
            if (!mask(r, c)) d.values(r, c) = fill;
    d.units.assign(static_cast<std::size_t>(values.cols()), VisibleUnitSpec::binary());
    d.layout = VisibleLayout::features_only(static_cast<std::size_t>(values.cols()));
    return d;
}

Matrix random_binary_rows(Eigen::Index n, Eigen::Index nv, std::mt19937_64& g) {
    std::bernoulli_distribution coin(0.4);
    Matrix m(n, nv);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = coin(g) ? 1.0 : 0.0;
    return m;
}

}  // namespace

TEST_CASE("pinned hidden bias") {
    RbmModel m = RbmModel::binary(1, 1);
    m.hidden_bias() << -1.0;
    m.weights() << 2.0;
    CHECK(pinned_hidden_bias(m, testing::nothing_observed(1)) == m.hidden_bias());
    CHECK(pinned_hidden_bias(m, PartialVisible({1.0}, {1}))(0) == doctest::Approx(1.0));

    std::mt19937_64 g(21);
    const RbmModel r = testing::random_binary_model(3, 2, g);
    const Vector full = pinned_hidden_bias(r, PartialVisible::complete(Vector::Ones(3)));
    CHECK((full - (r.hidden_bias() + r.weights().colwise().sum().transpose())).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("positive term on a complete row is v q^T") {
    std::mt19937_64 g(22);
    const RbmModel m = testing::random_binary_model(3, 2, g);
    const Vector v = (Vector(3) << 0, 1, 1).finished();
    Rng rng(1);
    const Moments p = positive_term(m, PartialVisible::complete(v), 1, rng);
    const Vector q = hidden_conditional(m, v);
    CHECK(p.vh == v * q.transpose());
    CHECK(p.v == v);
    CHECK(p.h == q);
}

TEST_CASE("positive term resamples a strongly biased missing unit") {
    RbmModel m = RbmModel::binary(2, 2);
    m.visible_bias() << 0.0, 10.0;
    Rng rng(2);
    double s = 0.0;
    const int n = 100000;
    for (int t = 0; t < n; ++t) s += positive_term(m, PartialVisible({1.0, 0.0}, {1, 0}), 1, rng).v(1);
    CHECK(s / n >= 0.9999);
}

TEST_CASE("positive term averages to the exact conditional moment") {
    std::mt19937_64 g(23);
    const RbmModel m = testing::random_binary_model(3, 2, g);
    const PartialVisible o({1.0, 0.0, 0.0}, {1, 0, 1});
    const Matrix ref = testing::naive_vh(m, o);
    Rng rng(3);
    Moments acc = Moments::zero(3, 2);
    const int n = 100000;
    for (int t = 0; t < n; ++t) acc += positive_term(m, o, 50, rng);
    acc *= 1.0 / n;
    CHECK((acc.vh - ref).cwiseAbs().maxCoeff() <= 0.01);
}

TEST_CASE("CD negative term") {
    Rng rng(4);
    const RbmModel zero = RbmModel::binary(2, 2);
    Moments acc = Moments::zero(2, 2);
    const int n = 20000;
    for (int t = 0; t < n; ++t) acc += negative_term_cd(zero, 1, rng, random_visible(zero, rng));
    acc *= 1.0 / n;
    CHECK((acc.vh.array() - 0.25).abs().maxCoeff() <= 0.01);

    RbmModel sat = RbmModel::binary(2, 2);
    sat.visible_bias().setConstant(20.0);
    sat.hidden_bias().setConstant(20.0);
    const Moments s = negative_term_cd(sat, 1, rng, Vector::Zero(2));
    CHECK((s.vh.array() - 1.0).abs().maxCoeff() <= 1e-6);
}

TEST_CASE("long CD chains reach the model moments") {
    std::mt19937_64 g(24);
    const RbmModel m = testing::random_binary_model(3, 2, g);
    const Matrix ref = oracle::model_moments(m).vh;
    Rng rng(5);
    Moments acc = Moments::zero(3, 2);
    const int chains = 10000;
    for (int t = 0; t < chains; ++t) acc += negative_term_cd(m, 1000, rng, random_visible(m, rng));
    acc *= 1.0 / chains;
    CHECK((acc.vh - ref).cwiseAbs().maxCoeff() <= 0.02);
}

TEST_CASE("PCD negative term") {
    std::mt19937_64 g(25);
    const RbmModel m = testing::random_binary_model(3, 2, g);
    const Matrix ref = oracle::model_moments(m).vh;
    Rng rng(6);
    PersistentChains chains = PersistentChains::random(m, 200, rng);
    for (int t = 0; t < 20; ++t) negative_term_pcd(chains, m, 5, rng);
    Moments acc = Moments::zero(3, 2);
    const int calls = 500;
    for (int t = 0; t < calls; ++t) acc += negative_term_pcd(chains, m, 1, rng);
    acc *= 1.0 / calls;
    CHECK((acc.vh - ref).cwiseAbs().maxCoeff() <= 0.02);

    const RbmModel zero = RbmModel::binary(2, 2);
    PersistentChains zc = PersistentChains::random(zero, 100, rng);
    Moments z = Moments::zero(2, 2);
    for (int t = 0; t < 200; ++t) z += negative_term_pcd(zc, zero, 1, rng);
    z *= 1.0 / 200;
    CHECK((z.vh.array() - 0.25).abs().maxCoeff() <= 0.01);

    const GibbsChain before = zc[0];
    CHECK_THROWS_AS(negative_term_pcd(zc, zero, 0, rng), ConfigError);
    CHECK(zc[0].v == before.v);
}

TEST_CASE("lossy and vanilla CD coincide on complete data") {
    std::mt19937_64 g(26);
    const Matrix rows = random_binary_rows(40, 6, g);
    const ObservedData data = observed_from(rows, MaskMatrix::Ones(40, 6), 0.0);
    for (NegativePhase phase : {NegativePhase::CD, NegativePhase::PCD}) {
        TrainConfig cfg;
        cfg.n_hidden = 4;
        cfg.learning_rate = 0.1;
        cfg.k_gibbs = 2;
        cfg.negative_phase = phase;
        cfg.momentum = 0.5;
        cfg.seed = 77;
        RbmModel a = initialize_model(data.units, data.layout, cfg);
        RbmModel b = a;
        TrainerState sa, sb;
        std::vector<std::size_t> batch(10);
        for (std::uint64_t step = 0; step < 100; ++step) {
            std::iota(batch.begin(), batch.end(), (step * 10) % 40);
            lossy_cd_update(a, data, batch, cfg, {step / 4, step % 4}, sa);
            vanilla_cd_update(b, rows, batch, cfg, {step / 4, step % 4}, sb);
        }
        CHECK(a == b);
        CHECK(a.parameter_norm() > 0.0);
    }
}

TEST_CASE("training never reads masked cells") {
    std::mt19937_64 g(27);
    const Matrix rows = random_binary_rows(30, 5, g);
    MaskMatrix mask(30, 5);
    std::bernoulli_distribution keep(0.6);
    for (Eigen::Index k = 0; k < mask.size(); ++k) mask.data()[k] = keep(g) ? 1 : 0;
    TrainConfig cfg;
    cfg.n_hidden = 3;
    cfg.learning_rate = 0.05;
    cfg.max_epochs = 5;
    cfg.seed = 9;
    const auto a = train(observed_from(rows, mask, std::numeric_limits<double>::quiet_NaN()), cfg);
    const auto b = train(observed_from(rows, mask, 1e300), cfg);
    CHECK(a.model == b.model);
    CHECK(a.model.is_finite());
}

TEST_CASE("toy likelihood improves under lossy training") {
    Matrix rows(4, 2);
    rows << 1, 0, 0, 1, 1, 0, 0, 1;
    MaskMatrix mask = MaskMatrix::Ones(4, 2);
    mask(1, 0) = 0;
    mask(2, 1) = 0;  // 2 of 8 cells hidden (round(0.3 * 8))
    const ObservedData data = observed_from(rows, mask, 0.0);
    std::vector<PartialVisible> obs;
    for (std::size_t r = 0; r < 4; ++r) {
        const MaskedRow mr = data.row(r);
        obs.emplace_back(std::vector<double>(mr.values.begin(), mr.values.end()),
                         std::vector<std::uint8_t>(mr.observed.begin(), mr.observed.end()));
    }
    std::vector<MaskedRow> views(obs.begin(), obs.end());
    TrainConfig cfg;
    cfg.n_hidden = 2;
    cfg.learning_rate = 0.05;
    cfg.minibatch_size = 2;
    cfg.max_epochs = 200;
    cfg.seed = 3;
    std::vector<double> trace;
    const RbmModel init = initialize_model(data.units, data.layout, cfg);
    trace.push_back(oracle::mean_log_likelihood(init, views));
    train(data, cfg, {}, [&](std::size_t, const RbmModel& m) { trace.push_back(oracle::mean_log_likelihood(m, views)); });
    CHECK(trace.size() == 201);
    const auto window = [&](std::size_t from) {
        return std::accumulate(trace.begin() + static_cast<long>(from), trace.begin() + static_cast<long>(from + 50), 0.0) / 50.0;
    };
    MESSAGE("mean log-likelihood, epochs 0-49 / 50-99 / 150-199: " << window(0) << " / " << window(50) << " / "
                                                                  << window(151));
    CHECK(trace.back() > trace.front());
    CHECK(window(151) > window(0));
}

TEST_CASE("patience stops training and keeps the best snapshot") {
    std::mt19937_64 g(28);
    const ObservedData data = observed_from(random_binary_rows(20, 4, g), MaskMatrix::Ones(20, 4), 0.0);
    TrainConfig cfg;
    cfg.n_hidden = 3;
    cfg.learning_rate = 0.1;
    cfg.max_epochs = 100;
    cfg.patience_epochs = 7;
    cfg.eval_every = 1;
    std::size_t calls = 0;
    RbmModel first;
    const auto result = train(
        data, cfg, [&](const RbmModel&) { return calls++ == 0 ? 1.0 : 0.5; },
        [&](std::size_t epoch, const RbmModel& m) {
            if (epoch == 1) first = m;
        });
    CHECK(result.best_epoch == 1);
    CHECK(result.epochs_run == 8);
    CHECK(result.model == first);
    CHECK(result.log.size() == 8);

    std::ostringstream csv;
    write_training_log(csv, result.log);
    CHECK(csv.str().rfind("epoch,metric,parameter_norm,wall_seconds\n", 0) == 0);
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.k_gibbs = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.minibatch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("divergence is reported as a numeric failure") {
    std::mt19937_64 g(29);
    ObservedData data = observed_from(random_binary_rows(10, 3, g), MaskMatrix::Ones(10, 3), 0.0);
    data.units.assign(3, VisibleUnitSpec::gaussian());
    TrainConfig cfg;
    cfg.n_hidden = 2;
    cfg.learning_rate = 1e308;
    cfg.max_epochs = 50;
    CHECK_THROWS_AS(train(data, cfg), NumericError);
}
