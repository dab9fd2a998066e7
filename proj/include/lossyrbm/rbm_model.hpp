#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "lossyrbm/common.hpp"

namespace lossyrbm {

enum class UnitKind : std::uint8_t { Binary = 0, Gaussian = 1 };

/// Prior attached to one visible unit. `sigma_sq` is only meaningful for Gaussian units.
struct VisibleUnitSpec {
    UnitKind kind = UnitKind::Binary;
    double sigma_sq = 1.0;

    static VisibleUnitSpec binary() { return {UnitKind::Binary, 1.0}; }
    static VisibleUnitSpec gaussian(double sigma_sq = 1.0) { return {UnitKind::Gaussian, sigma_sq}; }

    bool is_binary() const { return kind == UnitKind::Binary; }
    bool operator==(const VisibleUnitSpec&) const = default;
};

/// Split of the visible layer into feature units and label units. Label units
/// may additionally be grouped into one-hot class blocks.
struct VisibleLayout {
    std::vector<std::size_t> features;
    std::vector<std::size_t> labels;
    std::vector<std::vector<std::size_t>> class_groups;

    std::size_t size() const { return features.size() + labels.size(); }

    /// Label units that are not part of any class group (multi-label outputs).
    std::vector<std::size_t> free_labels() const;

    /// Throws ShapeError unless features/labels partition [0, n_visible),
    /// class groups are disjoint subsets of labels, and all labels are binary.
    void validate(std::size_t n_visible, const std::vector<VisibleUnitSpec>& units) const;

    /// All units are features.
    static VisibleLayout features_only(std::size_t n_visible);

    bool operator==(const VisibleLayout&) const = default;
};

class RbmModel {
public:
    RbmModel() = default;
    /// Zero-initialized model with `units.size()` visible units.
    RbmModel(std::vector<VisibleUnitSpec> units, VisibleLayout layout, std::size_t n_hidden);

    /// All-binary, all-feature model; convenient for tiny enumerable models.
    static RbmModel binary(std::size_t n_visible, std::size_t n_hidden);

    std::size_t n_visible() const { return static_cast<std::size_t>(weights_.rows()); }
    std::size_t n_hidden() const { return static_cast<std::size_t>(weights_.cols()); }

    Matrix& weights() { return weights_; }
    const Matrix& weights() const { return weights_; }
    Vector& visible_bias() { return visible_bias_; }
    const Vector& visible_bias() const { return visible_bias_; }
    Vector& hidden_bias() { return hidden_bias_; }
    const Vector& hidden_bias() const { return hidden_bias_; }

    const std::vector<VisibleUnitSpec>& units() const { return units_; }
    const VisibleUnitSpec& unit(std::size_t i) const { return units_[i]; }
    const VisibleLayout& layout() const { return layout_; }

    bool all_binary() const;

    /// Throws NumericError naming the first NaN/Inf parameter.
    void check_finite() const;
    bool is_finite() const;

    /// Frobenius norm over all parameters.
    double parameter_norm() const;

    bool operator==(const RbmModel& other) const;

    /// Binary container: magic, version, shapes, unit specs, layout, float64 parameters.
    void save(std::ostream& out) const;
    static RbmModel load(std::istream& in);
    void save(const std::string& path) const;
    static RbmModel load(const std::string& path);

private:
    Matrix weights_;
    Vector visible_bias_;
    Vector hidden_bias_;
    std::vector<VisibleUnitSpec> units_;
    VisibleLayout layout_;
};

/// E(v,h) = -v^T W h - a^T v - b^T h. Priors are not part of the energy.
double energy(const RbmModel& model, const Vector& v, const Vector& h);

/// Pre-activations W^T v + b.
Vector hidden_field(const RbmModel& model, const Vector& v);
/// Pre-activations W h + a.
Vector visible_field(const RbmModel& model, const Vector& h);

/// q_j = sigma(sum_i v_i w_ij + b_j).
Vector hidden_conditional(const RbmModel& model, const Vector& v);

/// Per-unit distribution of v given h. For binary units `mean` is the
/// activation probability; for Gaussian units it is the normal mean
/// (W h + a)_i * sigma_sq and the variance is sigma_sq.
struct VisibleConditional {
    Vector mean;
    Vector variance;  // zero for binary units
};

VisibleConditional visible_conditional(const RbmModel& model, const Vector& h);

Vector sample_hidden(const Vector& activation, Rng& rng);
Vector sample_visible(const RbmModel& model, const VisibleConditional& conditional, Rng& rng);

}  // namespace lossyrbm
