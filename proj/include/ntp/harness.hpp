#pragma once

// Dataset generation and the ablation / scaling experiment runner shared by
// the command-line tool and the acceptance suite.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ntp/env.hpp"
#include "ntp/evaluation.hpp"
#include "ntp/ik.hpp"
#include "ntp/model.hpp"
#include "ntp/training.hpp"
#include "ntp/trajdata.hpp"

namespace ntp::harness {

/// Deterministic child seed for (stream, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

// ---- data generation ----

struct DataGenConfig {
    env::EnvConfig env;
    double duration = 10.0;  // s per trajectory
    double action_noise = 0.1;
    /// Forward-only v_x so that backward walking stays unseen.
    env::CommandRanges commands{{0.0, 1.0}, {-0.5, 0.5}, {-0.5, 0.5}};
    env::VariantConfig variant;
    double keypoint_noise = 0.01;      // m
    double residual_threshold = 0.05;  // m

    void validate() const;
};

void to_json(nlohmann::json& j, const DataGenConfig& c);
void from_json(const nlohmann::json& j, DataGenConfig& c);

/// Trajectory i of every generator depends only on (seed, i), so a larger
/// count extends a smaller one.
std::vector<data::Trajectory> generate_expert(std::size_t count, const DataGenConfig& cfg, std::uint64_t seed);
std::vector<data::Trajectory> generate_actionfree(std::size_t count, const DataGenConfig& cfg, std::uint64_t seed);
/// Human-chain keypoint tracks walking sampled commands; the root moves at
/// the command velocity divided by the human-to-robot length ratio.
std::vector<ik::KeypointTrajectory> generate_keypoints(std::size_t count, const DataGenConfig& cfg, std::uint64_t seed);

struct RetargetBatch {
    std::vector<data::Trajectory> kept;
    std::vector<double> residuals;  // one per input, in order
    std::size_t filtered = 0;
};

/// Retargets human-chain keypoints onto the robot chain and drops results
/// whose residual exceeds `threshold`.
RetargetBatch retarget_batch(const std::vector<ik::KeypointTrajectory>& keypoints, double threshold,
                             const ik::RetargetConfig& cfg = {});

// ---- experiments ----

enum class Experiment {
    token_layout,
    alignment,
    regime,
    loss_target,
    scale_data,
    scale_context,
    scale_model,
    actionfree_gain
};

std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);

struct DataSizes {
    std::size_t expert = 500;
    std::size_t actionfree = 500;
    std::size_t retargeted = 100;  // keypoint tracks attempted; failures are filtered

    friend bool operator==(const DataSizes&, const DataSizes&) = default;
};

struct ExperimentSpec {
    Experiment experiment = Experiment::alignment;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    DataSizes sizes;
    std::size_t complete_subset = 100;  // actionfree-gain: complete trajectories kept
    std::size_t heldout = 50;           // expert trajectories for prediction error
    model::ModelConfig model;
    training::TrainConfig train;
    DataGenConfig data;
    std::uint64_t data_seed = 0;
    std::filesystem::path out_dir;

    /// Throws ConfigError for an empty or duplicated seed list, zero sizes
    /// the experiment needs, or invalid model / training settings.
    void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentSpec& s);
/// Reads the keys present over the defaults in `s`.
void from_json(const nlohmann::json& j, ExperimentSpec& s);

/// One trained configuration of an experiment, seed not yet chosen.
struct CellSpec {
    std::string variant;
    model::ModelConfig model;
    training::TrainConfig train;
    DataSizes sizes;
};

/// The variant grid of an experiment, in output order.
std::vector<CellSpec> variants(const ExperimentSpec& spec);

struct CellResult {
    std::string variant;
    std::uint64_t seed = 0;
    std::optional<double> tracking_error, prediction_error;
    std::size_t falls = 0;
    std::string error;  // empty on success
    std::shared_ptr<const model::Checkpoint> model;

    bool ok() const { return error.empty(); }
};

struct VariantSummary {
    std::string variant;
    std::optional<double> tracking_error, prediction_error;  // means over successful seeds
    std::size_t succeeded = 0;
};

struct ExperimentResult {
    Experiment experiment = Experiment::alignment;
    std::vector<CellResult> cells;
    std::vector<VariantSummary> summary;

    bool ok() const;
    std::vector<std::string> errors() const;
    const VariantSummary& variant(const std::string& name) const;
};

/// Columns variant,seed,tracking_error,prediction_error; one row per cell
/// followed by one `mean` row per variant. Failed values are NA.
std::string results_csv(const ExperimentResult& r);
void write_results_csv(const std::filesystem::path& path, const ExperimentResult& r);

/// Trains and evaluates cells, reusing data pools and finished cells across
/// calls. Data pools are generated once per (data config, data seed).
class Runner {
public:
    using Log = std::function<void(const std::string&)>;

    explicit Runner(Log log = {});

    struct Pools {
        std::vector<data::Trajectory> expert, actionfree, retargeted, heldout;
        std::vector<std::size_t> retargeted_index;  // keypoint track behind each kept trajectory
        std::size_t retarget_attempted = 0;
    };

    /// Pools holding at least the requested counts.
    const Pools& pools(const DataGenConfig& cfg, std::uint64_t data_seed, const DataSizes& sizes, std::size_t heldout);

    /// Trains `cell` with training seed `seed` on prefixes of the pools and
    /// evaluates it on the benchmark grid and the held-out set. Failures are
    /// returned in CellResult::error, never thrown.
    CellResult run_cell(const CellSpec& cell, std::uint64_t seed, const ExperimentSpec& spec);

    /// Every variant × seed, then the per-variant summary. Writes
    /// results.csv (and errors.txt when a cell failed) under spec.out_dir
    /// when it is non-empty.
    ExperimentResult run(const ExperimentSpec& spec);

    std::size_t cells_trained() const { return trained_; }

    /// Also persist finished cells (metrics and checkpoint) under `dir` and
    /// reuse them in later processes. Entries are keyed by the full cell
    /// configuration.
    void set_cache_dir(std::filesystem::path dir);

private:
    std::optional<CellResult> load_cached(const std::string& key) const;
    void store_cached(const std::string& key, const CellResult& r) const;

    Log log_;
    std::filesystem::path cache_dir_;
    std::map<std::string, std::unique_ptr<Pools>> pools_;
    std::map<std::string, CellResult> cells_;
    std::size_t trained_ = 0;
};

/// Output root: $NTP_OUTPUT_ROOT if set, else "runs".
std::filesystem::path output_root();

} // namespace ntp::harness
