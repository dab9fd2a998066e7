#pragma once

// Brute-force reference computations over tiny all-binary RBMs. Every quantity
// here is obtained by explicit enumeration of the joint (v, h) states; nothing
// uses the closed-form conditionals. Slow by construction.

#include <cstddef>

#include "lossyrbm/moments.hpp"
#include "lossyrbm/observation.hpp"
#include "lossyrbm/rbm_model.hpp"

namespace lossyrbm::oracle {

struct EnumerationBudget {
    std::size_t max_total_binary_units = 20;
};

/// log sum_{v,h} exp(-E(v,h)).
double log_partition(const RbmModel& model, EnumerationBudget budget = {});

/// log Z_O: log-sum over all joint states agreeing with the observed coordinates of `v_o`.
double log_clamped_partition(const RbmModel& model, MaskedRow v_o, EnumerationBudget budget = {});

/// log P(v_o) = log Z_O - log Z.
double log_probability(const RbmModel& model, MaskedRow v_o, EnumerationBudget budget = {});

/// E[v h^T | v_o], E[v | v_o], E[h | v_o]. With nothing observed these are the model moments.
Moments conditional_moments(const RbmModel& model, MaskedRow v_o, EnumerationBudget budget = {});
Moments model_moments(const RbmModel& model, EnumerationBudget budget = {});

/// d log P(v_o) / d(W, a, b).
Moments lossy_gradient(const RbmModel& model, MaskedRow v_o, EnumerationBudget budget = {});

/// P(v_i = 1 | v_o) for every visible unit (observed units report their observed value).
Vector conditional_marginals(const RbmModel& model, MaskedRow v_o, EnumerationBudget budget = {});

/// P(h_j = 1 | v) for a complete v, summing over h explicitly.
Vector hidden_posterior(const RbmModel& model, const Vector& v, EnumerationBudget budget = {});

/// P(v_i = 1 | h), summing over v explicitly.
Vector visible_posterior(const RbmModel& model, const Vector& h, EnumerationBudget budget = {});

/// Mean log P(v_o) over the rows of a partially observed dataset.
double mean_log_likelihood(const RbmModel& model, std::span<const MaskedRow> rows, EnumerationBudget budget = {});

}  // namespace lossyrbm::oracle
