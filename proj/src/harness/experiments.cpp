#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "ntp/harness.hpp"
#include "ntp/serialize.hpp"

namespace ntp::harness {

using nlohmann::json;

namespace {

const std::vector<std::pair<Experiment, const char*>> kNames{
    {Experiment::token_layout, "ablate-token-layout"},
    {Experiment::alignment, "ablate-alignment"},
    {Experiment::regime, "ablate-regime"},
    {Experiment::loss_target, "ablate-loss-target"},
    {Experiment::scale_data, "scale-data"},
    {Experiment::scale_context, "scale-context"},
    {Experiment::scale_model, "scale-model"},
    {Experiment::actionfree_gain, "actionfree-gain"},
};

enum PoolStream : std::uint64_t { kExpertPool = 11, kActionfreePool = 12, kKeypointPool = 13, kHeldout = 14 };

std::string number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string cell_value(const std::optional<double>& v) { return v ? number(*v) : "NA"; }

json sizes_json(const DataSizes& s) {
    return {{"expert", s.expert}, {"actionfree", s.actionfree}, {"retargeted", s.retargeted}};
}

} // namespace

std::string to_string(Experiment e) {
    for (const auto& [k, name] : kNames)
        if (k == e) return name;
    throw ContractError("unknown experiment");
}

Experiment experiment_from_string(const std::string& s) {
    for (const auto& [k, name] : kNames)
        if (s == name) return k;
    std::string known;
    for (const auto& [k, name] : kNames) known += std::string(known.empty() ? "" : ", ") + name;
    throw ConfigError("unknown experiment '" + s + "' (expected one of " + known + ")");
}

std::vector<CellSpec> variants(const ExperimentSpec& spec) {
    const DataSizes all = spec.sizes;
    const DataSizes expert_only{spec.sizes.expert, 0, 0};
    auto cell = [&](std::string name, DataSizes sizes) {
        return CellSpec{std::move(name), spec.model, spec.train, sizes};
    };
    std::vector<CellSpec> out;
    switch (spec.experiment) {
    case Experiment::token_layout: {
        auto a = cell("concat", all), b = cell("separate-aligned", all);
        a.model.mode = data::TokenMode::concat;
        b.model.mode = data::TokenMode::separate;
        a.model.aligned = b.model.aligned = true;
        out = {a, b};
        break;
    }
    case Experiment::alignment: {
        auto a = cell("aligned", all), b = cell("non-aligned", all);
        a.model.mode = b.model.mode = data::TokenMode::separate;
        a.model.aligned = true;
        b.model.aligned = false;
        out = {a, b};
        break;
    }
    case Experiment::regime: {
        auto a = cell("joint", all), b = cell("staged", all);
        a.train.regime = training::Regime::joint;
        b.train.regime = training::Regime::staged;
        out = {a, b};
        break;
    }
    case Experiment::loss_target: {
        auto a = cell("state-action", expert_only), b = cell("action-only", expert_only);
        a.train.regime = training::Regime::joint;
        b.train.regime = training::Regime::action_only_loss;
        out = {a, b};
        break;
    }
    case Experiment::scale_data:
        for (std::size_t div : {8, 4, 2, 1}) {
            const std::size_t n = spec.sizes.expert / div;
            out.push_back(cell("data-" + std::to_string(n), {n, 0, 0}));
        }
        break;
    case Experiment::scale_context:
        for (std::size_t ctx : {8, 16, 32}) {
            auto c = cell("context-" + std::to_string(ctx), expert_only);
            c.model.context = ctx;
            c.train.window = ctx;
            out.push_back(c);
        }
        break;
    case Experiment::scale_model: {
        auto s = cell("small", expert_only), b = cell("base", expert_only), l = cell("large", expert_only);
        s.model.d = spec.model.d / 2;
        l.model.d = spec.model.d * 2;
        out = {s, b, l};
        break;
    }
    case Experiment::actionfree_gain: {
        auto a = cell("complete-only", {spec.complete_subset, 0, 0});
        auto b = cell("with-actionfree", {spec.complete_subset, spec.sizes.actionfree, spec.sizes.retargeted});
        a.train.regime = b.train.regime = training::Regime::joint;
        out = {a, b};
        break;
    }
    }
    return out;
}

void ExperimentSpec::validate() const {
    if (seeds.empty()) throw ConfigError("experiment needs at least one seed");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
        throw ConfigError("experiment seeds must be distinct");
    if (heldout == 0) throw ConfigError("held-out set must not be empty");
    data.validate();
    model.validate();
    train.validate(model);
    if (experiment == Experiment::scale_data && sizes.expert < 8)
        throw ConfigError("scale-data needs at least 8 expert trajectories");
    if (experiment == Experiment::actionfree_gain && complete_subset == 0)
        throw ConfigError("actionfree-gain needs complete_subset >= 1");
    for (const auto& c : variants(*this)) {
        if (c.sizes.expert == 0) throw ConfigError("variant " + c.variant + " has no expert trajectories");
        c.model.validate();
        c.train.validate(c.model);
    }
}

void to_json(json& j, const ExperimentSpec& s) {
    j = {{"experiment", to_string(s.experiment)},
         {"seeds", s.seeds},
         {"sizes", sizes_json(s.sizes)},
         {"complete_subset", s.complete_subset},
         {"heldout", s.heldout},
         {"model", s.model},
         {"train", s.train},
         {"data", s.data},
         {"data_seed", s.data_seed}};
}

void from_json(const json& j, ExperimentSpec& s) {
    check_keys(j,
               {"experiment", "seeds", "sizes", "complete_subset", "heldout", "model", "train", "data", "data_seed",
                "out_dir"},
               "experiment");
    if (j.contains("experiment")) s.experiment = experiment_from_string(j.at("experiment").get<std::string>());
    read_opt(j, "seeds", s.seeds, "experiment");
    if (j.contains("sizes")) {
        const auto& z = j.at("sizes");
        check_keys(z, {"expert", "actionfree", "retargeted"}, "experiment.sizes");
        read_opt(z, "expert", s.sizes.expert, "experiment.sizes");
        read_opt(z, "actionfree", s.sizes.actionfree, "experiment.sizes");
        read_opt(z, "retargeted", s.sizes.retargeted, "experiment.sizes");
    }
    read_opt(j, "complete_subset", s.complete_subset, "experiment");
    read_opt(j, "heldout", s.heldout, "experiment");
    if (j.contains("model")) model::from_json(j.at("model"), s.model);
    if (j.contains("train")) training::from_json(j.at("train"), s.train);
    if (j.contains("data")) from_json(j.at("data"), s.data);
    read_opt(j, "data_seed", s.data_seed, "experiment");
    if (j.contains("out_dir")) s.out_dir = j.at("out_dir").get<std::string>();
}

// ---- results ----

bool ExperimentResult::ok() const {
    return std::all_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.ok(); });
}

std::vector<std::string> ExperimentResult::errors() const {
    std::vector<std::string> out;
    for (const auto& c : cells)
        if (!c.ok()) out.push_back(c.variant + " seed " + std::to_string(c.seed) + ": " + c.error);
    return out;
}

const VariantSummary& ExperimentResult::variant(const std::string& name) const {
    for (const auto& s : summary)
        if (s.variant == name) return s;
    throw ContractError("no variant '" + name + "' in " + to_string(experiment));
}

std::string results_csv(const ExperimentResult& r) {
    std::string out = "variant,seed,tracking_error,prediction_error\n";
    for (const auto& c : r.cells)
        out += c.variant + "," + std::to_string(c.seed) + "," + cell_value(c.tracking_error) + "," +
               cell_value(c.prediction_error) + "\n";
    for (const auto& s : r.summary)
        out += s.variant + ",mean," + cell_value(s.tracking_error) + "," + cell_value(s.prediction_error) + "\n";
    return out;
}

void write_results_csv(const std::filesystem::path& path, const ExperimentResult& r) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << results_csv(r);
    if (!out) throw DataError("failed writing " + path.string());
}

// ---- runner ----

Runner::Runner(Log log) : log_(std::move(log)) {}

void Runner::set_cache_dir(std::filesystem::path dir) {
    std::filesystem::create_directories(dir);
    cache_dir_ = std::move(dir);
}

namespace {

std::string cache_stem(const std::string& key) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : key) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace

std::optional<CellResult> Runner::load_cached(const std::string& key) const {
    if (cache_dir_.empty()) return std::nullopt;
    const auto stem = cache_dir_ / cache_stem(key);
    std::ifstream in(stem.string() + ".json");
    if (!in) return std::nullopt;
    try {
        const auto j = json::parse(in);
        if (j.at("key").get<std::string>() != key) return std::nullopt;
        CellResult r;
        r.seed = j.at("seed").get<std::uint64_t>();
        r.error = j.at("error").get<std::string>();
        r.falls = j.at("falls").get<std::size_t>();
        if (r.ok()) {
            r.tracking_error = j.at("tracking_error").get<double>();
            r.prediction_error = j.at("prediction_error").get<double>();
            r.model = std::make_shared<model::Checkpoint>(model::load_checkpoint(stem.string() + ".ckpt"));
        }
        return r;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

void Runner::store_cached(const std::string& key, const CellResult& r) const {
    if (cache_dir_.empty()) return;
    const auto stem = cache_dir_ / cache_stem(key);
    json j{{"key", key}, {"seed", r.seed}, {"error", r.error}, {"falls", r.falls}};
    if (r.ok()) {
        j["tracking_error"] = *r.tracking_error;
        j["prediction_error"] = *r.prediction_error;
        model::save_checkpoint(stem.string() + ".ckpt", *r.model);
    }
    std::ofstream(stem.string() + ".json") << j.dump() << '\n';
}

const Runner::Pools& Runner::pools(const DataGenConfig& cfg, std::uint64_t data_seed, const DataSizes& sizes,
                                   std::size_t heldout) {
    const std::string key = json{{"data", cfg}, {"seed", data_seed}}.dump();
    auto& slot = pools_[key];
    if (!slot) slot = std::make_unique<Pools>();
    Pools& p = *slot;
    // Generators are prefix-stable, so growing a pool regenerates the same leading entries.
    if (p.expert.size() < sizes.expert) {
        if (log_) log_("generating " + std::to_string(sizes.expert) + " expert trajectories");
        p.expert = generate_expert(sizes.expert, cfg, derive_seed(data_seed, kExpertPool, 0));
    }
    if (p.actionfree.size() < sizes.actionfree) {
        if (log_) log_("generating " + std::to_string(sizes.actionfree) + " action-free trajectories");
        p.actionfree = generate_actionfree(sizes.actionfree, cfg, derive_seed(data_seed, kActionfreePool, 0));
    }
    if (p.heldout.size() < heldout) {
        if (log_) log_("generating " + std::to_string(heldout) + " held-out trajectories");
        p.heldout = generate_expert(heldout, cfg, derive_seed(data_seed, kHeldout, 0));
    }
    if (p.retarget_attempted < sizes.retargeted) {
        if (log_) log_("retargeting " + std::to_string(sizes.retargeted - p.retarget_attempted) + " keypoint tracks");
        const auto kps = generate_keypoints(sizes.retargeted, cfg, derive_seed(data_seed, kKeypointPool, 0));
        const std::vector<ik::KeypointTrajectory> fresh(kps.begin() + static_cast<std::ptrdiff_t>(p.retarget_attempted),
                                                        kps.end());
        auto batch = retarget_batch(fresh, cfg.residual_threshold);
        std::size_t k = 0;
        for (std::size_t i = 0; i < fresh.size(); ++i)
            if (batch.residuals[i] <= cfg.residual_threshold) {
                p.retargeted.push_back(std::move(batch.kept[k++]));
                p.retargeted_index.push_back(p.retarget_attempted + i);
            }
        p.retarget_attempted = sizes.retargeted;
        if (log_ && batch.filtered) log_(std::to_string(batch.filtered) + " retargeted tracks filtered by residual");
    }
    return p;
}

CellResult Runner::run_cell(const CellSpec& cell, std::uint64_t seed, const ExperimentSpec& spec) {
    training::TrainConfig tc = cell.train;
    tc.seed = seed;
    const std::string key = json{{"model", cell.model},
                                 {"train", tc},
                                 {"sizes", sizes_json(cell.sizes)},
                                 {"data", spec.data},
                                 {"data_seed", spec.data_seed},
                                 {"heldout", spec.heldout}}
                                .dump();
    if (auto it = cells_.find(key); it != cells_.end()) {
        CellResult r = it->second;
        r.variant = cell.variant;
        return r;
    }

    if (auto hit = load_cached(key)) {
        hit->variant = cell.variant;
        cells_[key] = *hit;
        return *hit;
    }

    CellResult res;
    res.variant = cell.variant;
    res.seed = seed;
    try {
        const Pools& p = pools(spec.data, spec.data_seed, cell.sizes, spec.heldout);
        std::vector<data::Trajectory> trajs(p.expert.begin(), p.expert.begin() + static_cast<std::ptrdiff_t>(cell.sizes.expert));
        trajs.insert(trajs.end(), p.actionfree.begin(), p.actionfree.begin() + static_cast<std::ptrdiff_t>(cell.sizes.actionfree));
        for (std::size_t i = 0; i < p.retargeted.size(); ++i)
            if (p.retargeted_index[i] < cell.sizes.retargeted) trajs.push_back(p.retargeted[i]);
        const std::vector<data::Trajectory> heldout(p.heldout.begin(), p.heldout.begin() + static_cast<std::ptrdiff_t>(spec.heldout));

        // Normalization is frozen from this cell's own training data.
        const auto norm = data::compute_normalization(trajs);
        if (log_) log_("training " + cell.variant + " seed " + std::to_string(seed));
        auto trained = tc.regime == training::Regime::staged ? training::train_staged(cell.model, trajs, norm, tc)
                                                             : training::train(cell.model, trajs, norm, tc);
        ++trained_;
        auto ck = std::make_shared<model::Checkpoint>();
        ck->config = cell.model;
        ck->normalization = norm;
        ck->params = std::move(trained.params);
        const eval::Policy policy{&ck->params, cell.model, norm};
        const auto report = eval::tracking_benchmark(policy, eval::benchmark_grid(), eval::kEpisodeSeconds, spec.data.env);
        res.tracking_error = report.tracking_error;
        res.falls = report.fall_count;
        res.prediction_error = eval::prediction_error(policy, heldout).total();
        res.model = std::move(ck);
        if (log_)
            log_(cell.variant + " seed " + std::to_string(seed) + ": tracking " + number(*res.tracking_error) +
                 " prediction " + number(*res.prediction_error) + " falls " + std::to_string(res.falls));
    } catch (const std::exception& e) {
        res.error = e.what();
        res.tracking_error.reset();
        res.prediction_error.reset();
        if (log_) log_(cell.variant + " seed " + std::to_string(seed) + " failed: " + res.error);
    }
    cells_[key] = res;
    if (res.ok()) store_cached(key, res);
    return res;
}

ExperimentResult Runner::run(const ExperimentSpec& spec) {
    spec.validate();
    ExperimentResult out;
    out.experiment = spec.experiment;
    for (const auto& cell : variants(spec)) {
        VariantSummary s;
        s.variant = cell.variant;
        double te = 0.0, pe = 0.0;
        for (auto seed : spec.seeds) {
            auto r = run_cell(cell, seed, spec);
            if (r.ok()) {
                ++s.succeeded;
                te += *r.tracking_error;
                pe += *r.prediction_error;
            }
            out.cells.push_back(std::move(r));
        }
        if (s.succeeded) {
            s.tracking_error = te / static_cast<double>(s.succeeded);
            s.prediction_error = pe / static_cast<double>(s.succeeded);
        }
        out.summary.push_back(s);
    }
    if (!spec.out_dir.empty()) {
        std::filesystem::create_directories(spec.out_dir);
        write_results_csv(spec.out_dir / "results.csv", out);
        const auto errors = out.errors();
        const auto err_path = spec.out_dir / "errors.txt";
        if (errors.empty()) {
            std::filesystem::remove(err_path);
        } else {
            std::ofstream f(err_path);
            for (const auto& e : errors) f << e << '\n';
        }
        std::ofstream(spec.out_dir / "experiment.json") << json(spec).dump(2) << '\n';
    }
    return out;
}

} // namespace ntp::harness
