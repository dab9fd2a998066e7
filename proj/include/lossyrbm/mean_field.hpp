#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "lossyrbm/observation.hpp"
#include "lossyrbm/rbm_model.hpp"

namespace lossyrbm {

/// First-order mean-field state. `visible` holds the marginal expectation m_i
/// for feature units and the activation probability p_i for label units, in
/// visible-index order; `hidden` holds q_j.
struct MeanFieldState {
    Vector visible;
    Vector hidden;

    Vector features(const VisibleLayout& layout) const;
    Vector labels(const VisibleLayout& layout) const;
};

struct ImputationConfig {
    std::size_t n_restarts = 10;
    std::size_t n_iterations = 10;
    double damping = 0.0;

    void validate() const;
};

/// Fresh state with observed coordinates pinned and the rest random:
/// uniform [0,1] for binary units and q, N(0, sigma^2) for Gaussian units.
MeanFieldState random_state(const RbmModel& model, MaskedRow pinned, Rng& rng);

/// One Gauss-Seidel sweep: q from the current visible state, then every
/// unpinned visible unit from the fresh q. Pinned units are copied from the
/// observation. With damping d the new value is (1-d) * update + d * old.
MeanFieldState mean_field_step(const RbmModel& model, const MeanFieldState& state, MaskedRow pinned,
                               double damping = 0.0);

/// Largest violation of the fixed-point equations over unpinned units and q.
double mean_field_residual(const RbmModel& model, const MeanFieldState& state, MaskedRow pinned);

/// Iterates until the residual drops below `tolerance` or `max_iterations` is hit.
/// Returns the number of sweeps performed.
std::size_t iterate_to_convergence(const RbmModel& model, MeanFieldState& state, MaskedRow pinned,
                                   double tolerance, std::size_t max_iterations, double damping = 0.0);

/// Averaged result of several mean-field restarts. `visible` equals the
/// observation on observed coordinates.
struct Imputation {
    Vector visible;
    Vector hidden;
};

Imputation impute(const RbmModel& model, MaskedRow sample, const ImputationConfig& config, Rng& rng);

/// Imputes every row; row r uses a stream derived from (seed, r). Result is n_rows x n_visible.
Matrix impute_all(const RbmModel& model, const ObservedData& data, const ImputationConfig& config,
                  std::uint64_t seed);

/// Same, restricted to `rows`; rows not listed are left as the observed data (NaN where masked).
Matrix impute_rows(const RbmModel& model, const ObservedData& data, std::span<const std::size_t> rows,
                   const ImputationConfig& config, std::uint64_t seed);

/// Label i is on iff p_i > threshold.
std::vector<std::uint8_t> decode_multilabel(std::span<const double> probabilities, double threshold);

/// One-hot vector at the first maximal coordinate.
std::vector<std::uint8_t> decode_multiclass(std::span<const double> probabilities);
std::size_t argmax_first(std::span<const double> probabilities);

/// Candidate thresholds {0.01, 0.02, ..., 0.99}.
std::vector<double> threshold_grid();

struct ThresholdFit {
    double threshold = 0.5;
    double accuracy = 0.0;
};

/// Picks the grid threshold maximizing the fraction of observed label entries
/// reproduced by (p > t); ties go to the smallest t. `probabilities`, `labels`
/// and `observed` are n_instances x n_labels.
ThresholdFit learn_threshold(const Matrix& probabilities, const Matrix& labels, const MaskMatrix& observed);

/// Hamming accuracy of (p > t) over observed entries; the objective of learn_threshold.
double thresholded_accuracy(const Matrix& probabilities, const Matrix& labels, const MaskMatrix& observed,
                            double threshold);

/// Batch imputation CSV: one row per instance with the imputed value of every
/// masked feature cell, each label probability and each decoded label.
void write_imputation_csv(std::ostream& out, const ObservedData& data, const Matrix& imputed,
                          std::optional<double> threshold);

}  // namespace lossyrbm
