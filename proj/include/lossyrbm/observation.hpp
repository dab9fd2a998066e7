#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lossyrbm/common.hpp"
#include "lossyrbm/rbm_model.hpp"

namespace lossyrbm {

/// Non-owning view of one partially observed visible configuration.
/// `values[i]` may only be read where `observed[i] != 0`.
struct MaskedRow {
    std::span<const double> values;
    std::span<const std::uint8_t> observed;

    std::size_t size() const { return values.size(); }
    bool is_observed(std::size_t i) const { return observed[i] != 0; }
};

/// Owning counterpart of MaskedRow, mostly for tests and single-instance calls.
struct PartialVisible {
    std::vector<double> values;
    std::vector<std::uint8_t> observed;

    PartialVisible() = default;
    PartialVisible(std::vector<double> v, std::vector<std::uint8_t> o) : values(std::move(v)), observed(std::move(o)) {
        if (values.size() != observed.size()) throw ShapeError("PartialVisible: values/mask length mismatch");
    }

    static PartialVisible complete(const Vector& v) {
        return PartialVisible(std::vector<double>(v.data(), v.data() + v.size()),
                              std::vector<std::uint8_t>(static_cast<std::size_t>(v.size()), 1));
    }

    MaskedRow view() const { return {values, observed}; }
    operator MaskedRow() const { return view(); }
};

/// What training and imputation are allowed to see of a dataset: the observed
/// entries only. Unobserved cells hold NaN, so any accidental read poisons the
/// computation instead of leaking ground truth.
struct ObservedData {
    Matrix values;
    MaskMatrix observed;
    std::vector<VisibleUnitSpec> units;
    VisibleLayout layout;

    std::size_t n_rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t n_visible() const { return static_cast<std::size_t>(values.cols()); }

    MaskedRow row(std::size_t r) const {
        const auto n = n_visible();
        const auto ri = static_cast<Eigen::Index>(r);
        return {std::span<const double>(values.row(ri).data(), n),
                std::span<const std::uint8_t>(observed.row(ri).data(), n)};
    }

    bool fully_observed() const { return (observed.array() != 0).all(); }
};

}  // namespace lossyrbm
