#include "lossyrbm/lossy_training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

namespace lossyrbm {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kTagInit = 1;
constexpr std::uint64_t kTagShuffle = 2;
constexpr std::uint64_t kTagPositive = 3;
constexpr std::uint64_t kTagNegative = 4;
constexpr std::uint64_t kTagChains = 5;

double draw_unit(const VisibleUnitSpec& u, double field, Rng& rng) {
    if (u.is_binary()) return bernoulli(rng, sigmoid(field)) ? 1.0 : 0.0;
    std::normal_distribution<double> normal(field * u.sigma_sq, std::sqrt(u.sigma_sq));
    return normal(rng);
}

double draw_prior(const VisibleUnitSpec& u, Rng& rng) {
    if (u.is_binary()) return bernoulli(rng, 0.5) ? 1.0 : 0.0;
    std::normal_distribution<double> normal(0.0, std::sqrt(u.sigma_sq));
    return normal(rng);
}

/// sigma(V W + b) for stacked visible rows.
Matrix hidden_rows(const RbmModel& model, const Matrix& v_rows) {
    Matrix q = v_rows * model.weights();
    q.rowwise() += model.hidden_bias().transpose();
    return q.unaryExpr([](double x) { return sigmoid(x); });
}

Matrix visible_field_rows(const RbmModel& model, const Matrix& h_rows) {
    Matrix f = h_rows * model.weights().transpose();
    f.rowwise() += model.visible_bias().transpose();
    return f;
}

/// k sweeps for stacked chains sharing one stream.
void sweep_rows(const RbmModel& model, Matrix& v_rows, Matrix& h_rows, std::size_t k_gibbs, Rng& rng) {
    for (std::size_t step = 0; step < k_gibbs; ++step) {
        const Matrix p = hidden_rows(model, v_rows);
        h_rows.resize(p.rows(), p.cols());
        for (Eigen::Index k = 0; k < p.size(); ++k) h_rows.data()[k] = bernoulli(rng, p.data()[k]) ? 1.0 : 0.0;
        const Matrix f = visible_field_rows(model, h_rows);
        for (Eigen::Index r = 0; r < f.rows(); ++r) {
            for (Eigen::Index i = 0; i < f.cols(); ++i)
                v_rows(r, i) = draw_unit(model.unit(static_cast<std::size_t>(i)), f(r, i), rng);
        }
    }
}

/// Positive-phase samples for several rows at once; row r draws only from rngs[r].
void positive_rows(const RbmModel& model, const std::vector<MaskedRow>& rows, std::size_t k_gibbs,
                   std::vector<Rng>& rngs, Matrix& v_rows, Matrix& q_rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    v_rows.resize(n, static_cast<Eigen::Index>(model.n_visible()));
    std::vector<std::vector<Eigen::Index>> missing(rows.size());
    bool any = false;
    for (Eigen::Index r = 0; r < n; ++r) {
        const MaskedRow& row = rows[static_cast<std::size_t>(r)];
        if (row.size() != model.n_visible()) throw ShapeError("positive_term: sample length mismatch");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (row.is_observed(i)) {
                v_rows(r, static_cast<Eigen::Index>(i)) = row.values[i];
            } else {
                missing[static_cast<std::size_t>(r)].push_back(static_cast<Eigen::Index>(i));
            }
        }
        for (Eigen::Index i : missing[static_cast<std::size_t>(r)])
            v_rows(r, i) = draw_prior(model.unit(static_cast<std::size_t>(i)), rngs[static_cast<std::size_t>(r)]);
        any = any || !missing[static_cast<std::size_t>(r)].empty();
    }
    if (any) {
        Matrix h_rows = Matrix::Zero(n, static_cast<Eigen::Index>(model.n_hidden()));
        for (std::size_t step = 0; step < k_gibbs; ++step) {
            const Matrix p = hidden_rows(model, v_rows);
            for (Eigen::Index r = 0; r < n; ++r) {
                if (missing[static_cast<std::size_t>(r)].empty()) continue;
                Rng& rng = rngs[static_cast<std::size_t>(r)];
                for (Eigen::Index j = 0; j < p.cols(); ++j) h_rows(r, j) = bernoulli(rng, p(r, j)) ? 1.0 : 0.0;
            }
            const Matrix f = visible_field_rows(model, h_rows);
            for (Eigen::Index r = 0; r < n; ++r) {
                Rng& rng = rngs[static_cast<std::size_t>(r)];
                for (Eigen::Index i : missing[static_cast<std::size_t>(r)])
                    v_rows(r, i) = draw_unit(model.unit(static_cast<std::size_t>(i)), f(r, i), rng);
            }
        }
    }
    q_rows = hidden_rows(model, v_rows);
}

/// Minibatch average of v q^T given stacked rows.
Moments batch_moments(const Matrix& v_rows, const Matrix& q_rows) {
    const double inv = 1.0 / static_cast<double>(v_rows.rows());
    Moments m;
    m.vh.noalias() = v_rows.transpose() * q_rows;
    m.vh *= inv;
    m.v = v_rows.colwise().sum().transpose() * inv;
    m.h = q_rows.colwise().sum().transpose() * inv;
    return m;
}

Moments cd_negative(const RbmModel& model, const TrainConfig& config, StepIndex step) {
    const std::size_t n = config.negative_chains();
    Matrix v_rows(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(model.n_visible()));
    Rng rng(derive_seed(config.seed, {kTagNegative, step.epoch, step.batch}));
    for (std::size_t c = 0; c < n; ++c) v_rows.row(static_cast<Eigen::Index>(c)) = random_visible(model, rng).transpose();
    Matrix h_rows;
    sweep_rows(model, v_rows, h_rows, config.k_gibbs, rng);
    return batch_moments(v_rows, hidden_rows(model, v_rows));
}

Moments negative_phase(const RbmModel& model, const TrainConfig& config, StepIndex step, TrainerState& state) {
    if (config.negative_phase == NegativePhase::CD) return cd_negative(model, config, step);
    if (state.chains.size() == 0) {
        Rng init(derive_seed(config.seed, {kTagChains}));
        state.chains = PersistentChains::random(model, config.negative_chains(), init);
    }
    Rng rng(derive_seed(config.seed, {kTagNegative, step.epoch, step.batch}));
    return negative_term_pcd(state.chains, model, config.k_gibbs, rng);
}

void apply_gradient(RbmModel& model, const Moments& grad, const TrainConfig& config, TrainerState& state) {
    Moments step = grad;
    if (config.weight_decay != 0.0) step.vh -= config.weight_decay * model.weights();
    step *= config.learning_rate;
    if (config.momentum != 0.0) {
        if (!state.velocity) state.velocity = Moments::zero(model.n_visible(), model.n_hidden());
        *state.velocity *= config.momentum;
        *state.velocity += step;
        step = *state.velocity;
    }
    model.weights() += step.vh;
    model.visible_bias() += step.v;
    model.hidden_bias() += step.h;
    model.check_finite();
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (minibatch_size < 1) throw ConfigError("minibatch_size must be >= 1");
    if (k_gibbs < 1) throw ConfigError("k_gibbs must be >= 1");
    if (n_hidden < 1) throw ConfigError("n_hidden must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (!(init_weight_stddev >= 0.0)) throw ConfigError("init_weight_stddev must be >= 0");
}

RbmModel initialize_model(std::vector<VisibleUnitSpec> units, VisibleLayout layout, const TrainConfig& config) {
    RbmModel model(std::move(units), std::move(layout), config.n_hidden);
    Rng rng(derive_seed(config.seed, {kTagInit}));
    std::normal_distribution<double> normal(0.0, config.init_weight_stddev);
    for (Eigen::Index i = 0; i < model.weights().rows(); ++i) {
        for (Eigen::Index j = 0; j < model.weights().cols(); ++j) model.weights()(i, j) = normal(rng);
    }
    return model;
}

Vector pinned_hidden_bias(const RbmModel& model, MaskedRow v_o) {
    if (v_o.size() != model.n_visible()) throw ShapeError("pinned_hidden_bias: observation length mismatch");
    Vector bias = model.hidden_bias();
    for (std::size_t i = 0; i < v_o.size(); ++i) {
        if (v_o.is_observed(i)) bias += v_o.values[i] * model.weights().row(static_cast<Eigen::Index>(i)).transpose();
    }
    return bias;
}

Vector random_visible(const RbmModel& model, Rng& rng) {
    Vector v(static_cast<Eigen::Index>(model.n_visible()));
    for (std::size_t i = 0; i < model.n_visible(); ++i) v(static_cast<Eigen::Index>(i)) = draw_prior(model.unit(i), rng);
    return v;
}

PositiveSample positive_sample(const RbmModel& model, MaskedRow sample, std::size_t k_gibbs, Rng& rng) {
    if (k_gibbs < 1) throw ConfigError("positive_term: k_gibbs must be >= 1");
    std::vector<Rng> rngs{rng};
    Matrix v_rows, q_rows;
    positive_rows(model, {sample}, k_gibbs, rngs, v_rows, q_rows);
    rng = rngs[0];
    return {v_rows.row(0).transpose(), q_rows.row(0).transpose()};
}

Moments positive_term(const RbmModel& model, MaskedRow sample, std::size_t k_gibbs, Rng& rng) {
    PositiveSample s = positive_sample(model, sample, k_gibbs, rng);
    return Moments::outer(s.v, s.q);
}

void gibbs_sweeps(const RbmModel& model, GibbsChain& chain, std::size_t k_gibbs, Rng& rng) {
    Matrix v_rows = chain.v.transpose();
    Matrix h_rows = chain.h.size() ? Matrix(chain.h.transpose()) : Matrix();
    sweep_rows(model, v_rows, h_rows, k_gibbs, rng);
    chain.v = v_rows.row(0).transpose();
    if (k_gibbs) chain.h = h_rows.row(0).transpose();
}

Moments negative_term_cd(const RbmModel& model, std::size_t k_gibbs, Rng& rng, const Vector& init) {
    if (k_gibbs < 1) throw ConfigError("negative_term_cd: k_gibbs must be >= 1");
    if (static_cast<std::size_t>(init.size()) != model.n_visible()) throw ShapeError("negative_term_cd: init length");
    GibbsChain chain{init, Vector()};
    gibbs_sweeps(model, chain, k_gibbs, rng);
    return Moments::outer(chain.v, hidden_conditional(model, chain.v));
}

PersistentChains PersistentChains::random(const RbmModel& model, std::size_t n_chains, Rng& rng) {
    if (n_chains < 1) throw ConfigError("persistent chains: need at least one chain");
    PersistentChains pc;
    pc.chains_.reserve(n_chains);
    for (std::size_t c = 0; c < n_chains; ++c) {
        Vector v = random_visible(model, rng);
        Vector h = sample_hidden(hidden_conditional(model, v), rng);
        pc.chains_.push_back({std::move(v), std::move(h)});
    }
    return pc;
}

Moments negative_term_pcd(PersistentChains& chains, const RbmModel& model, std::size_t k_gibbs, Rng& rng) {
    if (k_gibbs < 1) throw ConfigError("negative_term_pcd: k_gibbs must be >= 1");
    if (chains.size() == 0) throw ConfigError("negative_term_pcd: chains not initialized");
    const auto n = static_cast<Eigen::Index>(chains.size());
    Matrix v_rows(n, static_cast<Eigen::Index>(model.n_visible()));
    Matrix h_rows(n, static_cast<Eigen::Index>(model.n_hidden()));
    for (Eigen::Index c = 0; c < n; ++c) {
        const GibbsChain& chain = chains[static_cast<std::size_t>(c)];
        v_rows.row(c) = chain.v.transpose();
        if (chain.h.size()) h_rows.row(c) = chain.h.transpose();
    }
    sweep_rows(model, v_rows, h_rows, k_gibbs, rng);
    for (Eigen::Index c = 0; c < n; ++c) {
        GibbsChain& chain = chains.chains()[static_cast<std::size_t>(c)];
        chain.v = v_rows.row(c).transpose();
        chain.h = h_rows.row(c).transpose();
    }
    return batch_moments(v_rows, hidden_rows(model, v_rows));
}

void lossy_cd_update(RbmModel& model, const ObservedData& data, std::span<const std::size_t> batch,
                     const TrainConfig& config, StepIndex step, TrainerState& state) {
    if (batch.empty()) return;
    const auto n = static_cast<Eigen::Index>(batch.size());
    Matrix v_rows(n, static_cast<Eigen::Index>(model.n_visible()));
    Matrix q_rows(n, static_cast<Eigen::Index>(model.n_hidden()));
    // Per-sample streams keep the result independent of evaluation order.
    std::vector<MaskedRow> rows;
    std::vector<Rng> rngs;
    for (std::size_t r : batch) {
        rows.push_back(data.row(r));
        rngs.emplace_back(derive_seed(config.seed, {kTagPositive, step.epoch, step.batch, r}));
    }
    positive_rows(model, rows, config.k_gibbs, rngs, v_rows, q_rows);
    Moments grad = batch_moments(v_rows, q_rows);
    grad -= negative_phase(model, config, step, state);
    apply_gradient(model, grad, config, state);
}

void vanilla_cd_update(RbmModel& model, const Matrix& rows, std::span<const std::size_t> batch,
                       const TrainConfig& config, StepIndex step, TrainerState& state) {
    if (batch.empty()) return;
    const auto n = static_cast<Eigen::Index>(batch.size());
    Matrix v_rows(n, rows.cols());
    Matrix q_rows(n, static_cast<Eigen::Index>(model.n_hidden()));
    for (Eigen::Index s = 0; s < n; ++s)
        v_rows.row(s) = rows.row(static_cast<Eigen::Index>(batch[static_cast<std::size_t>(s)]));
    q_rows = hidden_rows(model, v_rows);
    Moments grad = batch_moments(v_rows, q_rows);
    grad -= negative_phase(model, config, step, state);
    apply_gradient(model, grad, config, state);
}

TrainResult train(const ObservedData& data, const TrainConfig& config, const StoppingMetric& stopper,
                  const EpochHook& on_epoch) {
    config.validate();
    if (data.n_rows() == 0) throw DataError("train: empty dataset");
    data.layout.validate(data.n_visible(), data.units);

    const auto start = std::chrono::steady_clock::now();
    TrainResult result;
    RbmModel model = initialize_model(data.units, data.layout, config);
    TrainerState state;
    std::vector<std::size_t> order(data.n_rows());
    std::iota(order.begin(), order.end(), std::size_t{0});

    bool have_best = false;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(config.seed, {kTagShuffle, epoch}));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        std::uint64_t batch_index = 0;
        for (std::size_t off = 0; off < order.size(); off += config.minibatch_size, ++batch_index) {
            const std::size_t len = std::min(config.minibatch_size, order.size() - off);
            lossy_cd_update(model, data, std::span<const std::size_t>(order).subspan(off, len), config,
                            StepIndex{epoch, batch_index}, state);
        }
        result.epochs_run = epoch;
        if (on_epoch) on_epoch(epoch, model);

        if (!stopper) continue;
        if (epoch != 1 && epoch % config.eval_every != 0) continue;
        const double metric = stopper(model);
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.push_back({epoch, metric, model.parameter_norm(), elapsed});
        if (!have_best || metric > result.best_metric) {
            have_best = true;
            result.best_metric = metric;
            result.best_epoch = epoch;
            result.model = model;
        }
        if (epoch - result.best_epoch >= config.patience_epochs) break;
    }
    if (!have_best) {
        result.model = std::move(model);
        result.best_epoch = result.epochs_run;
    }
    return result;
}

void write_training_log(std::ostream& out, const std::vector<TrainLogRecord>& log) {
    out << "epoch,metric,parameter_norm,wall_seconds\n";
    for (const auto& r : log) {
        out << r.epoch << ',' << r.metric << ',' << r.parameter_norm << ',' << r.wall_seconds << '\n';
    }
}

}  // namespace lossyrbm
