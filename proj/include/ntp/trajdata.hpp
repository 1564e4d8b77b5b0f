#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ntp/numcore.hpp"

namespace ntp::data {

enum class Source { expert, actionfree, retargeted };

inline constexpr std::array<Source, 3> kAllSources{Source::expert, Source::actionfree, Source::retargeted};

std::string to_string(Source s);
Source source_from_string(const std::string& s);

/// One recorded episode: T observation rows, T action rows and a per-step
/// flag telling whether the action row is real. Missing actions are stored
/// as zero rows.
struct Trajectory {
    double dt = 0.05;
    std::array<double, 3> command{};
    Array obs;  // T × m
    Array act;  // T × n
    std::vector<bool> act_present;
    Source source = Source::expert;

    std::size_t length() const { return obs.rank() == 2 ? obs.dim(0) : 0; }
    std::size_t obs_dim() const { return obs.rank() == 2 ? obs.dim(1) : 0; }
    std::size_t act_dim() const { return act.rank() == 2 ? act.dim(1) : 0; }

    /// Throws DataError describing the first violated invariant.
    void validate() const;

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Builds an action-free trajectory: zero action rows, all flags false.
Trajectory make_action_free(double dt, std::array<double, 3> command, Array obs, std::size_t act_dim, Source source);

struct Normalization {
    std::vector<double> obs_mean, obs_std;
    std::vector<double> act_mean, act_std;

    friend bool operator==(const Normalization&, const Normalization&) = default;
};

inline constexpr double kMinStd = 1e-6;

struct DatasetManifest {
    static constexpr int kVersion = 1;

    int version = kVersion;
    std::size_t m = 0, n = 0;
    double dt = 0.0;
    std::map<std::string, std::size_t> counts;
    Normalization normalization;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Per-feature statistics over all observation rows and over action rows
/// whose flag is set. Standard deviations are floored at kMinStd.
Normalization compute_normalization(const std::vector<Trajectory>& trajs);

Trajectory normalize(const Trajectory& traj, const Normalization& norm);
std::vector<double> normalize_obs(std::span<const double> obs, const Normalization& norm);
std::vector<double> denormalize_obs(std::span<const double> obs, const Normalization& norm);
std::vector<double> normalize_act(std::span<const double> act, const Normalization& norm);
std::vector<double> denormalize_act(std::span<const double> act, const Normalization& norm);

// ---- tokenization ----

enum class TokenMode { concat, separate };

std::string to_string(TokenMode m);
TokenMode token_mode_from_string(const std::string& s);

/// Model-ready view of a trajectory window, stored per timestep.
///
/// In concat mode timestep i is the single token concat(o_i, a_i); in
/// separate mode it is the token pair (o_i, a_i), laid out o_0, a_0, o_1, …
/// by the model. `act_masked[i]` flags action slots that the model replaces
/// with its learned mask token.
///
/// Targets and loss masks share the prediction layout: row i of
/// `target_obs` / `target_act` is what the model's observation / action
/// outputs at step i should regress to.
///   aligned (concat or separate): target_obs[i] = o_{i+1}, target_act[i] = a_{i+1}
///   separate, non-aligned:        target_act[i] = a_i (predicted from o_i),
///                                  target_obs[i] = o_{i+1} (predicted from a_i)
/// Rows without a target have an all-false loss mask.
struct TokenSequence {
    TokenMode mode = TokenMode::concat;
    bool aligned = true;
    Array obs;  // len × m
    Array act;  // len × n
    std::vector<bool> act_masked;
    Array target_obs;  // len × m
    Array target_act;  // len × n
    Array loss_mask_obs;  // len × m, entries 0/1
    Array loss_mask_act;  // len × n, entries 0/1

    std::size_t length() const { return obs.rank() == 2 ? obs.dim(0) : 0; }
    /// Tokens the model sees: len (concat) or 2·len (separate).
    std::size_t token_count() const { return mode == TokenMode::concat ? length() : 2 * length(); }
    /// Concatenated (o, a) input rows, len × (m+n).
    Array concat_tokens() const;
};

struct Window {
    std::size_t start = 0;
    std::size_t len = 0;
};

TokenSequence tokenize(const Trajectory& traj, Window window, TokenMode mode, bool aligned = true);

/// Uniform start index over all windows of length `len` that fit.
Window sample_window(const Trajectory& traj, std::size_t len, std::mt19937_64& rng);

// ---- on-disk format ----

/// Writes manifest.json and one JSON-Lines file per present source.
/// Normalization statistics are computed from `trajs`.
DatasetManifest save_dataset(const std::filesystem::path& dir, const std::vector<Trajectory>& trajs);

struct Dataset {
    DatasetManifest manifest;
    std::vector<Trajectory> trajectories;

    std::vector<const Trajectory*> by_source(Source s) const;
};

Dataset load_dataset(const std::filesystem::path& dir);

std::string trajectory_to_json_line(const Trajectory& t);
Trajectory trajectory_from_json_line(const std::string& line);

} // namespace ntp::data
