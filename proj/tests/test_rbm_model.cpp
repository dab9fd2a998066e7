#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "lossyrbm/exact_oracle.hpp"
#include "lossyrbm/rbm_model.hpp"
#include "support.hpp"

using namespace lossyrbm;

TEST_CASE("energy of the zero configuration is zero") {
    std::mt19937_64 g(1);
    const RbmModel m = testing::random_binary_model(3, 2, g);
    CHECK(energy(m, Vector::Zero(3), Vector::Zero(2)) == 0.0);
}

TEST_CASE("energy hand expansion") {
    RbmModel m = RbmModel::binary(2, 1);
    m.weights() << 2, 3;
    m.visible_bias() << 0.5, 0.5;
    m.hidden_bias() << -1;
    CHECK(energy(m, Vector::Ones(2), Vector::Ones(1)) == -5.0);
}

TEST_CASE("energy differences match log-ratios of Boltzmann weights") {
    std::mt19937_64 g(2);
    for (int t = 0; t < 20; ++t) {
        const RbmModel m = testing::random_binary_model(3, 2, g);
        for (std::uint64_t a = 0; a < 32; ++a) {
            const auto va = testing::bits(a & 7, 3), ha = testing::bits(a >> 3, 2);
            const auto vb = testing::bits((a * 5 + 1) & 7, 3), hb = testing::bits(((a * 5 + 1) >> 3) & 3, 2);
            const double lr = std::log(std::exp(-testing::naive_energy(m, va, ha)) /
                                       std::exp(-testing::naive_energy(m, vb, hb)));
            const double de = energy(m, Eigen::Map<const Vector>(vb.data(), 3), Eigen::Map<const Vector>(hb.data(), 2)) -
                              energy(m, Eigen::Map<const Vector>(va.data(), 3), Eigen::Map<const Vector>(ha.data(), 2));
            CHECK(std::abs(lr - de) <= 1e-12);
        }
    }
}

TEST_CASE("hidden conditional") {
    RbmModel m = RbmModel::binary(3, 2);
    CHECK(hidden_conditional(m, Vector::Ones(3)).isApprox(Vector::Constant(2, 0.5)));
    m.hidden_bias().setConstant(10.0);
    CHECK(hidden_conditional(m, Vector::Zero(3))(0) == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))));

    std::mt19937_64 g(3);
    for (int t = 0; t < 20; ++t) {
        const RbmModel r = testing::random_binary_model(3, 2, g);
        for (std::uint64_t c = 0; c < 8; ++c) {
            const auto v = testing::bits(c, 3);
            const Vector vv = Eigen::Map<const Vector>(v.data(), 3);
            const Vector q = hidden_conditional(r, vv);
            const Vector ref = oracle::hidden_posterior(r, vv);
            CHECK((q - ref).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("visible conditional") {
    RbmModel m = RbmModel::binary(2, 1);
    CHECK(visible_conditional(m, Vector::Ones(1)).mean.isApprox(Vector::Constant(2, 0.5)));

    RbmModel gm({VisibleUnitSpec::gaussian(1.0)}, VisibleLayout::features_only(1), 1);
    gm.visible_bias() << 0.7;
    const auto c = visible_conditional(gm, Vector::Zero(1));
    CHECK(c.mean(0) == doctest::Approx(0.7));
    CHECK(c.variance(0) == doctest::Approx(1.0));

    RbmModel g2({VisibleUnitSpec::gaussian(2.0)}, VisibleLayout::features_only(1), 1);
    g2.visible_bias() << 0.5;
    g2.weights() << 1.0;
    const auto c2 = visible_conditional(g2, Vector::Ones(1));
    CHECK(c2.mean(0) == doctest::Approx(3.0));
    CHECK(c2.variance(0) == doctest::Approx(2.0));

    std::mt19937_64 g(4);
    for (int t = 0; t < 20; ++t) {
        const RbmModel r = testing::random_binary_model(3, 2, g);
        for (std::uint64_t c = 0; c < 4; ++c) {
            const auto h = testing::bits(c, 2);
            const Vector hh = Eigen::Map<const Vector>(h.data(), 2);
            CHECK((visible_conditional(r, hh).mean - oracle::visible_posterior(r, hh)).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("sampling extremes and concentration") {
    Rng rng(5);
    for (int t = 0; t < 1000; ++t) {
        CHECK(sample_hidden(Vector::Ones(3), rng) == Vector::Ones(3));
        CHECK(sample_hidden(Vector::Zero(3), rng) == Vector::Zero(3));
    }
    double s = 0.0;
    const int n = 100000;
    for (int t = 0; t < n; ++t) s += sample_hidden(Vector::Constant(1, 0.5), rng)(0);
    CHECK(s / n >= 0.49);
    CHECK(s / n <= 0.51);
}

TEST_CASE("layout validation") {
    const std::vector<VisibleUnitSpec> units(4, VisibleUnitSpec::binary());
    VisibleLayout ok{{0, 1}, {2, 3}, {{2, 3}}};
    CHECK_NOTHROW(ok.validate(4, units));
    VisibleLayout overlap{{0, 1, 2}, {2, 3}, {}};
    CHECK_THROWS_AS(overlap.validate(4, units), ShapeError);
    VisibleLayout missing{{0}, {2, 3}, {}};
    CHECK_THROWS_AS(missing.validate(4, units), ShapeError);
    VisibleLayout stray_group{{0, 1}, {2, 3}, {{1, 2}}};
    CHECK_THROWS_AS(stray_group.validate(4, units), ShapeError);
    std::vector<VisibleUnitSpec> gauss_label = units;
    gauss_label[3] = VisibleUnitSpec::gaussian();
    CHECK_THROWS_AS(ok.validate(4, gauss_label), ShapeError);
    CHECK(ok.free_labels().empty());
}

TEST_CASE("non-finite parameters are named") {
    RbmModel m = RbmModel::binary(2, 2);
    CHECK_NOTHROW(m.check_finite());
    m.hidden_bias()(1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(m.check_finite(), NumericError);
    CHECK_FALSE(m.is_finite());
}

TEST_CASE("model serialization round trip is bit exact") {
    std::mt19937_64 g(6);
    std::vector<VisibleUnitSpec> units{VisibleUnitSpec::gaussian(0.5), VisibleUnitSpec::binary(),
                                       VisibleUnitSpec::binary(), VisibleUnitSpec::binary()};
    RbmModel m(units, VisibleLayout{{0, 1}, {2, 3}, {{2, 3}}}, 3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (Eigen::Index k = 0; k < m.weights().size(); ++k) m.weights().data()[k] = n(g);
    m.visible_bias().setConstant(1.0 / 3.0);
    m.hidden_bias()(2) = -0.0;
    std::stringstream ss;
    m.save(ss);
    const RbmModel back = RbmModel::load(ss);
    CHECK(back == m);
    CHECK(std::signbit(back.hidden_bias()(2)));
    CHECK(back.layout() == m.layout());
    CHECK(back.unit(0).sigma_sq == 0.5);

    std::string bytes;
    {
        std::stringstream s2;
        m.save(s2);
        bytes = s2.str();
    }
    std::stringstream truncated(bytes.substr(0, bytes.size() - 4));
    CHECK_THROWS_AS(RbmModel::load(truncated), DataError);
    std::stringstream bad("NOTAMODELxxxxxxxxxxxxxxxx");
    CHECK_THROWS_AS(RbmModel::load(bad), DataError);
}
