#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ntp/numcore.hpp"
#include "ntp/trajdata.hpp"

namespace ntp::model {

struct ModelConfig {
    std::size_t d = 192;
    std::size_t layers = 4;
    std::size_t heads = 4;
    std::size_t context = 16;  // timesteps
    data::TokenMode mode = data::TokenMode::concat;
    bool aligned = true;
    std::size_t m = 10;
    std::size_t n = 5;
    /// false: one LayerNorm per block, MLP residual on the post-attention
    /// tensor. true: standard pre-LN block with residuals on the
    /// un-normalized stream and a second LayerNorm.
    bool conventional_block = false;

    void validate() const;
    /// Tokens per window of `steps` timesteps.
    std::size_t tokens_for(std::size_t steps) const {
        return mode == data::TokenMode::concat ? steps : 2 * steps;
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerParams {
    Var ln_gain, ln_bias;
    Var wq, bq, wk, bk, wv, bv, wo, bo;
    Var w1, b1, w2, b2;
    Var ln2_gain, ln2_bias;  // conventional_block only
};

struct ModelParams {
    Var embed;                   // concat: d × (m+n)
    Var embed_obs, embed_act;    // separate: d × m, d × n
    Var mask_token;              // n
    Var pos;                     // tokens_for(context) × d
    std::vector<LayerParams> layers;
    Var head;                    // concat: (m+n) × d
    Var head_obs, head_act;      // separate: m × d, n × d

    /// Every tensor in a fixed canonical order, with stable names.
    std::vector<std::pair<std::string, Var>> named() const;
    std::vector<Var> list() const;
    std::size_t count() const;
    ModelParams clone() const;
};

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Closed-form parameter count for a configuration.
std::size_t param_count(const ModelConfig& cfg);

/// Predictions in the per-timestep layout of data::TokenSequence targets.
struct Predictions {
    Var obs;  // (B·len) × m
    Var act;  // (B·len) × n
};

/// Runs the transformer over a batch of equally long sequences (normalized
/// values). Throws RangeError if a sequence exceeds the context.
Predictions forward(const ModelParams& p, const ModelConfig& cfg, const std::vector<const data::TokenSequence*>& batch);
Predictions forward(const ModelParams& p, const ModelConfig& cfg, const data::TokenSequence& seq);

/// Embedded input tokens before the transformer blocks (for inspection).
Var embed_tokens(const ModelParams& p, const ModelConfig& cfg, const std::vector<const data::TokenSequence*>& batch);

// ---- checkpoints ----

struct OptimizerState {
    std::size_t step = 0;
    std::vector<Array> m1, m2;
    std::string rng_state;
};

struct Checkpoint {
    ModelConfig config;
    data::Normalization normalization;
    ModelParams params;
    std::optional<OptimizerState> optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---- closed-loop inference ----

/// Rolling buffer of the most recent `capacity` timesteps. Each entry holds
/// a raw observation and, once executed, the raw action.
class PolicyContext {
public:
    struct Entry {
        std::vector<double> obs;
        std::optional<std::vector<double>> act;
    };

    explicit PolicyContext(std::size_t capacity);

    /// Appends a timestep, dropping the oldest beyond capacity.
    void push(std::vector<double> obs, std::optional<std::vector<double>> act = std::nullopt);
    /// Records the action executed for the newest entry.
    void set_last_action(std::vector<double> act);

    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return entries_.empty(); }
    const std::deque<Entry>& entries() const { return entries_; }

private:
    std::size_t capacity_;
    std::deque<Entry> entries_;
};

/// Action for the newest timestep (raw units) from the buffered history.
///
/// Deployment pushes each observation with its action pending, asks for the
/// action, then records it with set_last_action. The model acts from the
/// completed (o, a) pairs before the pending entry:
///   aligned / concat: the action predicted at the last completed step;
///   non-aligned: the next observation is predicted from the last action
///   token, appended as a transient token, and the action head read there.
/// The pending observation itself is used only when it is the sole entry
/// (first step): its action slot holds the mask token and the action output
/// at that position is returned. If the newest entry already has its action,
/// the same rules predict the following step. Predicted observations are
/// never written into `ctx`. Throws ContractError on an empty history.
std::vector<double> predict_next_action(const ModelParams& p, const ModelConfig& cfg,
                                        const data::Normalization& norm, const PolicyContext& ctx);

} // namespace ntp::model
