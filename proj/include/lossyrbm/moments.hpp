#pragma once

#include <algorithm>

#include "lossyrbm/common.hpp"

namespace lossyrbm {

/// Sufficient statistics <v_i h_j>, <v_i>, <h_j> of one phase. The difference of a
/// positive and a negative Moments is a log-likelihood gradient over (W, a, b).
struct Moments {
    Matrix vh;
    Vector v;
    Vector h;

    static Moments zero(std::size_t n_visible, std::size_t n_hidden) {
        const auto nv = static_cast<Eigen::Index>(n_visible);
        const auto nh = static_cast<Eigen::Index>(n_hidden);
        return {Matrix::Zero(nv, nh), Vector::Zero(nv), Vector::Zero(nh)};
    }

    /// v q^T with q the (Rao-Blackwellized) hidden activation.
    static Moments outer(const Vector& v, const Vector& q) { return {v * q.transpose(), v, q}; }

    Moments& operator+=(const Moments& o) {
        vh += o.vh;
        v += o.v;
        h += o.h;
        return *this;
    }
    Moments& operator-=(const Moments& o) {
        vh -= o.vh;
        v -= o.v;
        h -= o.h;
        return *this;
    }
    Moments& operator*=(double s) {
        vh *= s;
        v *= s;
        h *= s;
        return *this;
    }
    friend Moments operator-(Moments a, const Moments& b) { return a -= b; }
    friend Moments operator+(Moments a, const Moments& b) { return a += b; }

    /// Flattened (W row-major, a, b).
    Vector flatten() const {
        Vector out(vh.size() + v.size() + h.size());
        out.head(vh.size()) = Eigen::Map<const Vector>(vh.data(), vh.size());
        out.segment(vh.size(), v.size()) = v;
        out.tail(h.size()) = h;
        return out;
    }

    double max_abs_diff(const Moments& o) const {
        return std::max({(vh - o.vh).cwiseAbs().maxCoeff(), (v - o.v).cwiseAbs().maxCoeff(),
                         (h - o.h).cwiseAbs().maxCoeff()});
    }
};

inline double cosine_similarity(const Vector& x, const Vector& y) {
    const double d = x.norm() * y.norm();
    return d > 0.0 ? x.dot(y) / d : 0.0;
}

}  // namespace lossyrbm
