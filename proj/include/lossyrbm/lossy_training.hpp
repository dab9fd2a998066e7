#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "lossyrbm/moments.hpp"
#include "lossyrbm/observation.hpp"
#include "lossyrbm/rbm_model.hpp"

namespace lossyrbm {

enum class NegativePhase { CD, PCD };

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t minibatch_size = 10;
    std::size_t k_gibbs = 1;
    std::size_t n_hidden = 100;
    NegativePhase negative_phase = NegativePhase::CD;
    /// Chains averaged into one negative estimate per minibatch (CD) or kept
    /// alive across minibatches (PCD). Zero means "same as minibatch_size".
    std::size_t n_negative_chains = 0;
    std::size_t max_epochs = 5000;
    std::size_t patience_epochs = 500;
    std::size_t eval_every = 10;
    double momentum = 0.0;
    double weight_decay = 0.0;
    double init_weight_stddev = 0.01;
    std::uint64_t seed = 0;

    std::size_t negative_chains() const { return n_negative_chains == 0 ? minibatch_size : n_negative_chains; }
    /// Throws ConfigError on a violated invariant.
    void validate() const;
};

struct GibbsChain {
    Vector v;
    Vector h;
};

/// Weights ~ N(0, init_weight_stddev^2), zero biases.
RbmModel initialize_model(std::vector<VisibleUnitSpec> units, VisibleLayout layout, const TrainConfig& config);

/// b_j + sum_{i in O} w_ij v_i.
Vector pinned_hidden_bias(const RbmModel& model, MaskedRow v_o);

/// Draws every visible unit from its prior: fair coin for binary units, N(0, sigma^2) for Gaussian ones.
Vector random_visible(const RbmModel& model, Rng& rng);

/// Data-phase statistics for one partially observed row. Observed units stay
/// pinned; missing units start random and are resampled for k Gibbs sweeps.
/// Returns v q^T where q is the exact hidden activation given the final v.
Moments positive_term(const RbmModel& model, MaskedRow sample, std::size_t k_gibbs, Rng& rng);

/// The final visible state of the positive chain together with q(v); the
/// building block of `positive_term`, exposed for batched accumulation.
struct PositiveSample {
    Vector v;
    Vector q;
};
PositiveSample positive_sample(const RbmModel& model, MaskedRow sample, std::size_t k_gibbs, Rng& rng);

/// k alternating sweeps (h | v, then v | h) starting from `init`; the chain is advanced in place.
void gibbs_sweeps(const RbmModel& model, GibbsChain& chain, std::size_t k_gibbs, Rng& rng);

/// Model-phase statistics from one chain started at `init`.
Moments negative_term_cd(const RbmModel& model, std::size_t k_gibbs, Rng& rng, const Vector& init);

class PersistentChains {
public:
    PersistentChains() = default;
    static PersistentChains random(const RbmModel& model, std::size_t n_chains, Rng& rng);

    std::size_t size() const { return chains_.size(); }
    const GibbsChain& operator[](std::size_t i) const { return chains_[i]; }
    std::vector<GibbsChain>& chains() { return chains_; }

private:
    std::vector<GibbsChain> chains_;
};

/// Advances every persistent chain k sweeps and returns their averaged statistics.
Moments negative_term_pcd(PersistentChains& chains, const RbmModel& model, std::size_t k_gibbs, Rng& rng);

/// Position of a minibatch in the training schedule; all random streams are derived from it.
struct StepIndex {
    std::uint64_t epoch = 0;
    std::uint64_t batch = 0;
};

/// Mutable optimizer state carried across minibatches.
struct TrainerState {
    PersistentChains chains;
    std::optional<Moments> velocity;
};

/// One Lossy-CDk update on the rows `batch` of `data`.
void lossy_cd_update(RbmModel& model, const ObservedData& data, std::span<const std::size_t> batch,
                     const TrainConfig& config, StepIndex step, TrainerState& state);

/// Textbook CD-k update on complete rows, written without any notion of a mask.
void vanilla_cd_update(RbmModel& model, const Matrix& rows, std::span<const std::size_t> batch,
                       const TrainConfig& config, StepIndex step, TrainerState& state);

struct TrainLogRecord {
    std::size_t epoch = 0;
    double metric = 0.0;
    double parameter_norm = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    RbmModel model;  // best-metric snapshot
    std::size_t best_epoch = 0;
    double best_metric = 0.0;
    std::size_t epochs_run = 0;
    std::vector<TrainLogRecord> log;
};

/// Higher is better.
using StoppingMetric = std::function<double(const RbmModel&)>;
using EpochHook = std::function<void(std::size_t epoch, const RbmModel&)>;

/// Lossy-CDk (or its persistent variant) over shuffled minibatches. When a
/// stopping metric is supplied it is evaluated after epoch 1 and then every
/// `eval_every` epochs; training returns the best snapshot and stops once
/// `patience_epochs` pass without improvement. Without a metric the last
/// model is returned after `max_epochs`.
TrainResult train(const ObservedData& data, const TrainConfig& config, const StoppingMetric& stopper = {},
                  const EpochHook& on_epoch = {});

void write_training_log(std::ostream& out, const std::vector<TrainLogRecord>& log);

}  // namespace lossyrbm
