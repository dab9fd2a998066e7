#include "lossyrbm/exact_oracle.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace lossyrbm::oracle {

namespace {

// -1 = free, 0/1 = clamped.
struct Clamp {
    std::vector<int> visible;
    std::vector<int> hidden;
};

void check_budget(const RbmModel& model, EnumerationBudget budget) {
    if (!model.all_binary()) {
        throw BudgetExceeded("exact enumeration requires an all-binary model");
    }
    const std::size_t total = model.n_visible() + model.n_hidden();
    if (total > budget.max_total_binary_units) {
        throw BudgetExceeded("exact enumeration over " + std::to_string(total) + " units exceeds budget of " +
                             std::to_string(budget.max_total_binary_units));
    }
}

Clamp clamp_from(const RbmModel& model, MaskedRow v_o) {
    if (v_o.size() != model.n_visible()) throw ShapeError("oracle: observation length mismatch");
    Clamp c{std::vector<int>(model.n_visible(), -1), std::vector<int>(model.n_hidden(), -1)};
    for (std::size_t i = 0; i < v_o.size(); ++i) {
        if (!v_o.is_observed(i)) continue;
        const double x = v_o.values[i];
        if (x != 0.0 && x != 1.0) throw ShapeError("oracle: observed binary unit must be 0 or 1");
        c.visible[i] = static_cast<int>(x);
    }
    return c;
}

// Visits every joint state compatible with the clamp, passing its unnormalized log weight.
template <typename Fn>
void enumerate(const RbmModel& model, const Clamp& clamp, Fn&& fn) {
    std::vector<std::size_t> free_v, free_h;
    Vector v = Vector::Zero(static_cast<Eigen::Index>(model.n_visible()));
    Vector h = Vector::Zero(static_cast<Eigen::Index>(model.n_hidden()));
    for (std::size_t i = 0; i < clamp.visible.size(); ++i) {
        if (clamp.visible[i] < 0) free_v.push_back(i);
        else v(static_cast<Eigen::Index>(i)) = clamp.visible[i];
    }
    for (std::size_t j = 0; j < clamp.hidden.size(); ++j) {
        if (clamp.hidden[j] < 0) free_h.push_back(j);
        else h(static_cast<Eigen::Index>(j)) = clamp.hidden[j];
    }
    const std::uint64_t nv_states = 1ULL << free_v.size();
    const std::uint64_t nh_states = 1ULL << free_h.size();
    for (std::uint64_t sv = 0; sv < nv_states; ++sv) {
        for (std::size_t k = 0; k < free_v.size(); ++k) {
            v(static_cast<Eigen::Index>(free_v[k])) = static_cast<double>((sv >> k) & 1U);
        }
        for (std::uint64_t sh = 0; sh < nh_states; ++sh) {
            for (std::size_t k = 0; k < free_h.size(); ++k) {
                h(static_cast<Eigen::Index>(free_h[k])) = static_cast<double>((sh >> k) & 1U);
            }
            fn(v, h, -energy(model, v, h));
        }
    }
}

double log_sum_exp(const std::vector<double>& xs) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : xs) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - mx);
    return mx + std::log(s);
}

double clamped_log_z(const RbmModel& model, const Clamp& clamp) {
    std::vector<double> logw;
    enumerate(model, clamp, [&](const Vector&, const Vector&, double lw) { logw.push_back(lw); });
    return log_sum_exp(logw);
}

Moments clamped_moments(const RbmModel& model, const Clamp& clamp) {
    const double log_z = clamped_log_z(model, clamp);
    Moments m = Moments::zero(model.n_visible(), model.n_hidden());
    enumerate(model, clamp, [&](const Vector& v, const Vector& h, double lw) {
        const double p = std::exp(lw - log_z);
        m.vh.noalias() += p * (v * h.transpose());
        m.v += p * v;
        m.h += p * h;
    });
    return m;
}

}  // namespace

double log_partition(const RbmModel& model, EnumerationBudget budget) {
    check_budget(model, budget);
    return clamped_log_z(model, Clamp{std::vector<int>(model.n_visible(), -1), std::vector<int>(model.n_hidden(), -1)});
}

double log_clamped_partition(const RbmModel& model, MaskedRow v_o, EnumerationBudget budget) {
    check_budget(model, budget);
    return clamped_log_z(model, clamp_from(model, v_o));
}

double log_probability(const RbmModel& model, MaskedRow v_o, EnumerationBudget budget) {
    return log_clamped_partition(model, v_o, budget) - log_partition(model, budget);
}

Moments conditional_moments(const RbmModel& model, MaskedRow v_o, EnumerationBudget budget) {
    check_budget(model, budget);
    return clamped_moments(model, clamp_from(model, v_o));
}

Moments model_moments(const RbmModel& model, EnumerationBudget budget) {
    check_budget(model, budget);
    return clamped_moments(model,
                           Clamp{std::vector<int>(model.n_visible(), -1), std::vector<int>(model.n_hidden(), -1)});
}

Moments lossy_gradient(const RbmModel& model, MaskedRow v_o, EnumerationBudget budget) {
    return conditional_moments(model, v_o, budget) - model_moments(model, budget);
}

Vector conditional_marginals(const RbmModel& model, MaskedRow v_o, EnumerationBudget budget) {
    return conditional_moments(model, v_o, budget).v;
}

Vector hidden_posterior(const RbmModel& model, const Vector& v, EnumerationBudget budget) {
    check_budget(model, budget);
    const PartialVisible complete = PartialVisible::complete(v);
    return clamped_moments(model, clamp_from(model, complete)).h;
}

Vector visible_posterior(const RbmModel& model, const Vector& h, EnumerationBudget budget) {
    check_budget(model, budget);
    if (static_cast<std::size_t>(h.size()) != model.n_hidden()) throw ShapeError("oracle: hidden length mismatch");
    Clamp c{std::vector<int>(model.n_visible(), -1), std::vector<int>(model.n_hidden(), -1)};
    for (std::size_t j = 0; j < model.n_hidden(); ++j) {
        const double x = h(static_cast<Eigen::Index>(j));
        if (x != 0.0 && x != 1.0) throw ShapeError("oracle: hidden unit must be 0 or 1");
        c.hidden[j] = static_cast<int>(x);
    }
    return clamped_moments(model, c).v;
}

double mean_log_likelihood(const RbmModel& model, std::span<const MaskedRow> rows, EnumerationBudget budget) {
    if (rows.empty()) throw ShapeError("oracle: no rows");
    const double log_z = log_partition(model, budget);
    double total = 0.0;
    for (const auto& r : rows) total += clamped_log_z(model, clamp_from(model, r)) - log_z;
    return total / static_cast<double>(rows.size());
}

}  // namespace lossyrbm::oracle
