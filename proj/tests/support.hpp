#pragma once

// Test-side reference code. Everything here is written from the model
// definition with plain loops and shares nothing with the library beyond the
// parameter containers.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "lossyrbm/observation.hpp"
#include "lossyrbm/rbm_model.hpp"

namespace testing {

using lossyrbm::Matrix;
using lossyrbm::PartialVisible;
using lossyrbm::RbmModel;
using lossyrbm::Vector;

inline RbmModel random_binary_model(std::size_t nv, std::size_t nh, std::mt19937_64& rng, double scale = 1.0) {
    RbmModel m = RbmModel::binary(nv, nh);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (Eigen::Index i = 0; i < m.weights().rows(); ++i)
        for (Eigen::Index j = 0; j < m.weights().cols(); ++j) m.weights()(i, j) = u(rng);
    for (Eigen::Index i = 0; i < m.visible_bias().size(); ++i) m.visible_bias()(i) = u(rng);
    for (Eigen::Index j = 0; j < m.hidden_bias().size(); ++j) m.hidden_bias()(j) = u(rng);
    return m;
}

inline double naive_energy(const RbmModel& m, const std::vector<double>& v, const std::vector<double>& h) {
    double e = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        for (std::size_t j = 0; j < h.size(); ++j) {
            e -= v[i] * m.weights()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * h[j];
        }
        e -= m.visible_bias()(static_cast<Eigen::Index>(i)) * v[i];
    }
    for (std::size_t j = 0; j < h.size(); ++j) e -= m.hidden_bias()(static_cast<Eigen::Index>(j)) * h[j];
    return e;
}

inline std::vector<double> bits(std::uint64_t code, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = static_cast<double>((code >> k) & 1U);
    return out;
}

inline bool agrees(const std::vector<double>& v, const PartialVisible& o) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (o.observed[i] && v[i] != o.values[i]) return false;
    }
    return true;
}

/// Sum of Boltzmann weights over binary states compatible with `o`
/// (pass an all-unobserved row for Z).
inline double weight_sum(const RbmModel& m, const PartialVisible& o) {
    const std::size_t nv = m.n_visible(), nh = m.n_hidden();
    double z = 0.0;
    for (std::uint64_t vc = 0; vc < (1ULL << nv); ++vc) {
        const auto v = bits(vc, nv);
        if (!agrees(v, o)) continue;
        for (std::uint64_t hc = 0; hc < (1ULL << nh); ++hc) z += std::exp(-naive_energy(m, v, bits(hc, nh)));
    }
    return z;
}

inline PartialVisible nothing_observed(std::size_t nv) {
    return PartialVisible(std::vector<double>(nv, 0.0), std::vector<std::uint8_t>(nv, 0));
}

inline double naive_log_prob(const RbmModel& m, const PartialVisible& o) {
    return std::log(weight_sum(m, o)) - std::log(weight_sum(m, nothing_observed(m.n_visible())));
}

/// P(v_i = 1 | o) by direct summation.
inline std::vector<double> naive_marginals(const RbmModel& m, const PartialVisible& o) {
    const std::size_t nv = m.n_visible(), nh = m.n_hidden();
    std::vector<double> acc(nv, 0.0);
    double z = 0.0;
    for (std::uint64_t vc = 0; vc < (1ULL << nv); ++vc) {
        const auto v = bits(vc, nv);
        if (!agrees(v, o)) continue;
        for (std::uint64_t hc = 0; hc < (1ULL << nh); ++hc) {
            const double w = std::exp(-naive_energy(m, v, bits(hc, nh)));
            z += w;
            for (std::size_t i = 0; i < nv; ++i) acc[i] += w * v[i];
        }
    }
    for (auto& a : acc) a /= z;
    return acc;
}

/// E[v_i h_j | o] by direct summation.
inline Matrix naive_vh(const RbmModel& m, const PartialVisible& o) {
    const std::size_t nv = m.n_visible(), nh = m.n_hidden();
    Matrix acc = Matrix::Zero(static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(nh));
    double z = 0.0;
    for (std::uint64_t vc = 0; vc < (1ULL << nv); ++vc) {
        const auto v = bits(vc, nv);
        if (!agrees(v, o)) continue;
        for (std::uint64_t hc = 0; hc < (1ULL << nh); ++hc) {
            const auto h = bits(hc, nh);
            const double w = std::exp(-naive_energy(m, v, h));
            z += w;
            for (std::size_t i = 0; i < nv; ++i)
                for (std::size_t j = 0; j < nh; ++j)
                    acc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += w * v[i] * h[j];
        }
    }
    return acc / z;
}

/// Central finite differences of log P(o) in the order (W row-major, a, b).
inline std::vector<double> fd_gradient(const RbmModel& m, const PartialVisible& o, double step = 1e-5) {
    std::vector<double> g;
    RbmModel x = m;
    auto probe = [&](double& p) {
        const double keep = p;
        p = keep + step;
        const double up = naive_log_prob(x, o);
        p = keep - step;
        const double down = naive_log_prob(x, o);
        p = keep;
        g.push_back((up - down) / (2.0 * step));
    };
    for (Eigen::Index i = 0; i < x.weights().rows(); ++i)
        for (Eigen::Index j = 0; j < x.weights().cols(); ++j) probe(x.weights()(i, j));
    for (Eigen::Index i = 0; i < x.visible_bias().size(); ++i) probe(x.visible_bias()(i));
    for (Eigen::Index j = 0; j < x.hidden_bias().size(); ++j) probe(x.hidden_bias()(j));
    return g;
}

inline PartialVisible random_observation(std::size_t nv, std::mt19937_64& rng) {
    PartialVisible o{std::vector<double>(nv), std::vector<std::uint8_t>(nv)};
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < nv; ++i) {
        o.values[i] = coin(rng) ? 1.0 : 0.0;
        o.observed[i] = coin(rng) ? 1 : 0;
    }
    return o;
}

/// P(score_pos > score_neg) + 1/2 P(tie) by explicit pair counting.
inline double pair_count_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t p = 0; p < s.size(); ++p) {
        if (!y[p]) continue;
        for (std::size_t n = 0; n < s.size(); ++n) {
            if (y[n]) continue;
            pairs += 1.0;
            if (s[p] > s[n]) wins += 1.0;
            else if (s[p] == s[n]) wins += 0.5;
        }
    }
    return wins / pairs;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    return ab / std::sqrt(aa * bb);
}

}  // namespace testing
