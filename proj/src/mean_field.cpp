#include "lossyrbm/mean_field.hpp"

#include <cmath>
#include <ostream>

namespace lossyrbm {

namespace {

void check_pinned(const RbmModel& model, MaskedRow pinned) {
    if (pinned.size() != model.n_visible()) throw ShapeError("mean field: observation length mismatch");
}

double visible_update(const VisibleUnitSpec& u, double field) {
    return u.is_binary() ? sigmoid(field) : field * u.sigma_sq;
}

Vector gather(const Vector& x, const std::vector<std::size_t>& idx) {
    Vector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = x(static_cast<Eigen::Index>(idx[k]));
    return out;
}

}  // namespace

Vector MeanFieldState::features(const VisibleLayout& layout) const { return gather(visible, layout.features); }
Vector MeanFieldState::labels(const VisibleLayout& layout) const { return gather(visible, layout.labels); }

void ImputationConfig::validate() const {
    if (n_restarts < 1) throw ConfigError("n_restarts must be >= 1");
    if (n_iterations < 1) throw ConfigError("n_iterations must be >= 1");
    if (!(damping >= 0.0 && damping < 1.0)) throw ConfigError("damping must be in [0, 1)");
}

MeanFieldState random_state(const RbmModel& model, MaskedRow pinned, Rng& rng) {
    check_pinned(model, pinned);
    MeanFieldState s{Vector(static_cast<Eigen::Index>(model.n_visible())),
                     Vector(static_cast<Eigen::Index>(model.n_hidden()))};
    std::normal_distribution<double> normal;
    for (std::size_t i = 0; i < model.n_visible(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (pinned.is_observed(i)) {
            s.visible(ii) = pinned.values[i];
        } else if (model.unit(i).is_binary()) {
            s.visible(ii) = uniform01(rng);
        } else {
            s.visible(ii) = std::sqrt(model.unit(i).sigma_sq) * normal(rng);
        }
    }
    for (Eigen::Index j = 0; j < s.hidden.size(); ++j) s.hidden(j) = uniform01(rng);
    return s;
}

MeanFieldState mean_field_step(const RbmModel& model, const MeanFieldState& state, MaskedRow pinned, double damping) {
    check_pinned(model, pinned);
    if (static_cast<std::size_t>(state.visible.size()) != model.n_visible() ||
        static_cast<std::size_t>(state.hidden.size()) != model.n_hidden()) {
        throw ShapeError("mean field: state dimensions do not match the model");
    }
    MeanFieldState next = state;
    for (std::size_t i = 0; i < pinned.size(); ++i) {
        if (pinned.is_observed(i)) next.visible(static_cast<Eigen::Index>(i)) = pinned.values[i];
    }
    Vector q = hidden_conditional(model, next.visible);
    if (damping != 0.0) q = (1.0 - damping) * q + damping * state.hidden;
    next.hidden = q;

    const Vector field = model.weights() * next.hidden + model.visible_bias();
    for (std::size_t i = 0; i < pinned.size(); ++i) {
        if (pinned.is_observed(i)) continue;
        const auto ii = static_cast<Eigen::Index>(i);
        const double update = visible_update(model.unit(i), field(ii));
        next.visible(ii) = damping != 0.0 ? (1.0 - damping) * update + damping * state.visible(ii) : update;
    }
    return next;
}

double mean_field_residual(const RbmModel& model, const MeanFieldState& state, MaskedRow pinned) {
    check_pinned(model, pinned);
    double r = (hidden_conditional(model, state.visible) - state.hidden).cwiseAbs().maxCoeff();
    const Vector field = model.weights() * state.hidden + model.visible_bias();
    for (std::size_t i = 0; i < pinned.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (pinned.is_observed(i)) {
            r = std::max(r, std::abs(state.visible(ii) - pinned.values[i]));
        } else {
            r = std::max(r, std::abs(visible_update(model.unit(i), field(ii)) - state.visible(ii)));
        }
    }
    return r;
}

std::size_t iterate_to_convergence(const RbmModel& model, MeanFieldState& state, MaskedRow pinned, double tolerance,
                                   std::size_t max_iterations, double damping) {
    for (std::size_t it = 1; it <= max_iterations; ++it) {
        state = mean_field_step(model, state, pinned, damping);
        if (mean_field_residual(model, state, pinned) <= tolerance) return it;
    }
    return max_iterations;
}

Imputation impute(const RbmModel& model, MaskedRow sample, const ImputationConfig& config, Rng& rng) {
    config.validate();
    check_pinned(model, sample);
    // All restarts of one row advance together, one state per matrix row.
    const auto n = static_cast<Eigen::Index>(config.n_restarts);
    Matrix v(n, static_cast<Eigen::Index>(model.n_visible()));
    Matrix h(n, static_cast<Eigen::Index>(model.n_hidden()));
    for (Eigen::Index r = 0; r < n; ++r) {
        MeanFieldState s = random_state(model, sample, rng);
        v.row(r) = s.visible.transpose();
        h.row(r) = s.hidden.transpose();
    }
    std::vector<Eigen::Index> free;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        if (!sample.is_observed(i)) free.push_back(static_cast<Eigen::Index>(i));
    }
    const double d = config.damping;
    for (std::size_t it = 0; it < config.n_iterations; ++it) {
        Matrix q = v * model.weights();
        q.rowwise() += model.hidden_bias().transpose();
        q = q.unaryExpr([](double x) { return sigmoid(x); });
        h = d != 0.0 ? Matrix((1.0 - d) * q + d * h) : q;
        Matrix f = h * model.weights().transpose();
        f.rowwise() += model.visible_bias().transpose();
        for (Eigen::Index r = 0; r < n; ++r) {
            for (Eigen::Index i : free) {
                const double update = visible_update(model.unit(static_cast<std::size_t>(i)), f(r, i));
                v(r, i) = d != 0.0 ? (1.0 - d) * update + d * v(r, i) : update;
            }
        }
    }
    Imputation out{v.colwise().mean().transpose(), h.colwise().mean().transpose()};
    // Averaging must not perturb observed values by rounding.
    for (std::size_t i = 0; i < sample.size(); ++i) {
        if (sample.is_observed(i)) out.visible(static_cast<Eigen::Index>(i)) = sample.values[i];
    }
    if (!out.visible.allFinite() || !out.hidden.allFinite()) {
        throw NumericError("impute: non-finite mean-field state (diverging Gaussian units?)");
    }
    return out;
}

Matrix impute_rows(const RbmModel& model, const ObservedData& data, std::span<const std::size_t> rows,
                   const ImputationConfig& config, std::uint64_t seed) {
    if (data.n_visible() != model.n_visible()) throw ShapeError("impute: dataset width does not match the model");
    Matrix out = data.values;
    for (std::size_t r : rows) {
        if (r >= data.n_rows()) throw ShapeError("impute: row index out of range");
        Rng rng(derive_seed(seed, {r}));
        out.row(static_cast<Eigen::Index>(r)) = impute(model, data.row(r), config, rng).visible.transpose();
    }
    return out;
}

Matrix impute_all(const RbmModel& model, const ObservedData& data, const ImputationConfig& config,
                  std::uint64_t seed) {
    std::vector<std::size_t> rows(data.n_rows());
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r;
    return impute_rows(model, data, rows, config, seed);
}

std::vector<std::uint8_t> decode_multilabel(std::span<const double> probabilities, double threshold) {
    std::vector<std::uint8_t> out(probabilities.size());
    for (std::size_t i = 0; i < probabilities.size(); ++i) out[i] = probabilities[i] > threshold ? 1 : 0;
    return out;
}

std::size_t argmax_first(std::span<const double> probabilities) {
    if (probabilities.empty()) throw ShapeError("argmax over an empty class group");
    std::size_t best = 0;
    for (std::size_t i = 1; i < probabilities.size(); ++i) {
        if (probabilities[i] > probabilities[best]) best = i;
    }
    return best;
}

std::vector<std::uint8_t> decode_multiclass(std::span<const double> probabilities) {
    std::vector<std::uint8_t> out(probabilities.size(), 0);
    out[argmax_first(probabilities)] = 1;
    return out;
}

std::vector<double> threshold_grid() {
    std::vector<double> grid;
    for (int k = 1; k <= 99; ++k) grid.push_back(k / 100.0);
    return grid;
}

double thresholded_accuracy(const Matrix& probabilities, const Matrix& labels, const MaskMatrix& observed,
                            double threshold) {
    if (probabilities.rows() != labels.rows() || probabilities.cols() != labels.cols() ||
        observed.rows() != labels.rows() || observed.cols() != labels.cols()) {
        throw ShapeError("thresholded_accuracy: shape mismatch");
    }
    std::size_t hits = 0, total = 0;
    for (Eigen::Index r = 0; r < labels.rows(); ++r) {
        for (Eigen::Index c = 0; c < labels.cols(); ++c) {
            if (!observed(r, c)) continue;
            ++total;
            const double predicted = probabilities(r, c) > threshold ? 1.0 : 0.0;
            if (predicted == labels(r, c)) ++hits;
        }
    }
    if (total == 0) throw UndefinedMetric("no observed label entries");
    return static_cast<double>(hits) / static_cast<double>(total);
}

ThresholdFit learn_threshold(const Matrix& probabilities, const Matrix& labels, const MaskMatrix& observed) {
    ThresholdFit best{0.0, -1.0};
    for (double t : threshold_grid()) {
        const double acc = thresholded_accuracy(probabilities, labels, observed, t);
        if (acc > best.accuracy) best = {t, acc};
    }
    return best;
}

void write_imputation_csv(std::ostream& out, const ObservedData& data, const Matrix& imputed,
                          std::optional<double> threshold) {
    if (imputed.rows() != data.values.rows() || imputed.cols() != data.values.cols()) {
        throw ShapeError("imputation csv: matrix does not match dataset");
    }
    const auto& layout = data.layout;
    const auto free = layout.free_labels();
    out << "row";
    for (std::size_t f : layout.features) out << ",f" << f;
    for (std::size_t l : layout.labels) out << ",p" << l;
    for (std::size_t l : layout.labels) out << ",y" << l;
    out << '\n';
    out.precision(17);
    for (Eigen::Index r = 0; r < imputed.rows(); ++r) {
        out << r;
        for (std::size_t f : layout.features) {
            out << ',';
            if (!data.observed(r, static_cast<Eigen::Index>(f))) out << imputed(r, static_cast<Eigen::Index>(f));
        }
        for (std::size_t l : layout.labels) out << ',' << imputed(r, static_cast<Eigen::Index>(l));
        std::vector<int> decoded(data.n_visible(), 0);
        for (const auto& g : layout.class_groups) {
            std::vector<double> p;
            for (std::size_t l : g) p.push_back(imputed(r, static_cast<Eigen::Index>(l)));
            decoded[g[argmax_first(p)]] = 1;
        }
        for (std::size_t l : free) decoded[l] = imputed(r, static_cast<Eigen::Index>(l)) > threshold.value_or(0.5) ? 1 : 0;
        for (std::size_t l : layout.labels) out << ',' << decoded[l];
        out << '\n';
    }
}

}  // namespace lossyrbm
