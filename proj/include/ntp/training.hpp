#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ntp/model.hpp"
#include "ntp/trajdata.hpp"

namespace ntp::training {

enum class Regime { joint, staged, complete_only, action_only_loss };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct TrainConfig {
    std::size_t batch = 64;
    std::size_t window = 16;  // timesteps
    std::size_t steps = 5000;
    double lr = 3e-4;
    std::size_t warmup = 100;
    double lr_floor = 0.1;  // cosine decays to lr_floor · lr
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 0.0;
    double clip_norm = 1.0;  // 0 disables clipping
    std::uint64_t seed = 0;
    Regime regime = Regime::joint;
    /// Relative source weights for minibatch sampling; empty means
    /// proportional to the number of trajectories of each source.
    std::map<data::Source, double> source_weights;
    std::size_t checkpoint_every = 0;  // 0: no intermediate checkpoints
    std::filesystem::path checkpoint_path;

    void validate(const model::ModelConfig& mcfg) const;
};

/// Learning rate at 0-based optimizer step `step`: linear warmup, then
/// cosine decay to lr_floor · lr at the final step.
double learning_rate(const TrainConfig& cfg, std::size_t step);

struct StepRecord {
    std::size_t step = 0;
    double loss = 0.0, loss_obs = 0.0, loss_act = 0.0;
    double lr = 0.0;
    bool empty_mask = false;
};

struct TrainLog {
    std::vector<StepRecord> records;
    std::optional<std::size_t> stage_boundary;
    std::vector<std::pair<std::size_t, std::map<std::string, double>>> snapshots;

    void write_csv(const std::filesystem::path& path) const;
};

/// Masked next-token loss over a batch. `total` is the mean squared error
/// over every unmasked element of the concatenated (obs, act) prediction;
/// `obs` and `act` are the same mean restricted to each modality.
struct LossParts {
    Var total;
    double obs = 0.0, act = 0.0;
    bool empty = false;  // no unmasked element: total is 0
};

LossParts batch_loss(const model::Predictions& pred, const std::vector<const data::TokenSequence*>& batch);

/// Zeroes the observation or action part of a sequence's loss mask.
void mask_out(data::TokenSequence& seq, bool obs, bool act);

class Adam {
public:
    Adam(const TrainConfig& cfg, const std::vector<Var>& params);
    /// Restores moments and step count from a checkpoint.
    void load(const model::OptimizerState& st);
    /// Applies one update from the current gradients at learning rate lr.
    void step(double lr);
    std::size_t steps_taken() const { return t_; }
    model::OptimizerState state() const;

private:
    TrainConfig cfg_;
    std::vector<Var> params_;
    std::vector<Array> m1_, m2_;
    std::size_t t_ = 0;
};

/// Rescales gradients in place to global norm ≤ max_norm; returns the
/// norm before clipping.
double clip_gradients(const std::vector<Var>& params, double max_norm);

struct TrainOptions {
    /// Continue from a checkpoint that carries optimizer state.
    std::optional<model::Checkpoint> resume;
    /// Called every `snapshot_every` steps; results land in TrainLog::snapshots.
    std::size_t snapshot_every = 0;
    std::function<std::map<std::string, double>(std::size_t, const model::ModelParams&)> snapshot;
};

struct TrainResult {
    model::ModelParams params;
    model::OptimizerState optimizer;
    TrainLog log;
};

/// Trains on raw trajectories (normalized internally with `norm`). The
/// regime decides which sources are sampled and which loss parts count.
TrainResult train(const model::ModelConfig& mcfg, const std::vector<data::Trajectory>& trajs,
                  const data::Normalization& norm, const TrainConfig& cfg, const TrainOptions& opts = {});

/// Two stages of cfg.steps/2: all sources with action losses masked, then
/// complete trajectories with the full loss. One optimizer throughout.
TrainResult train_staged(const model::ModelConfig& mcfg, const std::vector<data::Trajectory>& trajs,
                         const data::Normalization& norm, TrainConfig cfg, const TrainOptions& opts = {});

} // namespace ntp::training
