// ntp: dataset generation, retargeting, training, evaluation and experiments.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ntp/evaluation.hpp"
#include "ntp/harness.hpp"
#include "ntp/ik.hpp"
#include "ntp/serialize.hpp"
#include "ntp/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ntp;

namespace {

json read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot read config " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

// Relative output paths live under the output root.
fs::path out_path(const std::string& given, const fs::path& fallback) {
    if (given.empty()) return harness::output_root() / fallback;
    const fs::path p(given);
    return p.is_relative() && std::getenv("NTP_OUTPUT_ROOT") ? harness::output_root() / p : p;
}

std::vector<data::Trajectory> load_all(const std::vector<std::string>& dirs) {
    std::vector<data::Trajectory> out;
    for (const auto& d : dirs) {
        auto ds = data::load_dataset(d);
        out.insert(out.end(), std::make_move_iterator(ds.trajectories.begin()),
                   std::make_move_iterator(ds.trajectories.end()));
    }
    return out;
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    out << text;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    return out;
}

bool parse_double(const std::string& s, double& v) {
    try {
        std::size_t used = 0;
        v = std::stod(s, &used);
        return used == s.size();
    } catch (const std::exception&) {
        return false;
    }
}

json command_rows(const std::vector<eval::CommandResult>& rows) {
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"command", r.command}, {"tracking_error", r.tracking_error}, {"fell", r.fell},
                       {"final_x", r.final_x}, {"final_y", r.final_y}});
    return out;
}

// ---- gen ----

struct GenArgs {
    std::string kind = "expert";
    std::size_t count = 500;
    std::uint64_t seed = 0;
    std::string out, config;
    double noise = -1;
};

int cmd_gen(const GenArgs& a) {
    harness::DataGenConfig cfg;
    if (!a.config.empty()) harness::from_json(read_json_file(a.config), cfg);
    if (a.count == 0) throw ConfigError("--count must be at least 1");
    const fs::path out = out_path(a.out, fs::path("data") / a.kind);
    if (a.kind == "keypoints") {
        if (a.noise >= 0) cfg.keypoint_noise = a.noise;
        const auto kps = harness::generate_keypoints(a.count, cfg, a.seed);
        for (std::size_t i = 0; i < kps.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "kp_%05zu.csv", i);
            ik::write_keypoint_csv(out / name, kps[i]);
        }
        std::cout << "wrote " << kps.size() << " keypoint tracks to " << out.string() << '\n';
        return 0;
    }
    if (a.noise >= 0) cfg.action_noise = a.noise;
    std::vector<data::Trajectory> trajs;
    if (a.kind == "expert")
        trajs = harness::generate_expert(a.count, cfg, a.seed);
    else if (a.kind == "actionfree")
        trajs = harness::generate_actionfree(a.count, cfg, a.seed);
    else
        throw ConfigError("unknown kind '" + a.kind + "' (expected expert, actionfree or keypoints)");
    data::save_dataset(out, trajs);
    std::cout << "wrote " << trajs.size() << " " << a.kind << " trajectories to " << out.string() << '\n';
    return 0;
}

// ---- retarget ----

struct RetargetArgs {
    std::string keypoints, out, chain;
    double threshold = 0.05;
};

ik::KinematicChain chain_from_json(const json& j) {
    ik::KinematicChain c = ik::human_chain();
    check_keys(j, {"link_lengths", "joint_lower", "joint_upper", "vel_limit"}, "chain");
    read_opt(j, "link_lengths", c.link_lengths, "chain");
    read_opt(j, "joint_lower", c.joint_lower, "chain");
    read_opt(j, "joint_upper", c.joint_upper, "chain");
    read_opt(j, "vel_limit", c.vel_limit, "chain");
    c.validate();
    return c;
}

int cmd_retarget(const RetargetArgs& a) {
    if (!(a.threshold >= 0)) throw ConfigError("--threshold must be non-negative");
    const ik::KinematicChain source = a.chain.empty() ? ik::human_chain() : chain_from_json(read_json_file(a.chain));
    const ik::KinematicChain robot = ik::robot_chain();
    std::vector<fs::path> files;
    if (!fs::is_directory(a.keypoints)) throw DataError("keypoint directory not found: " + a.keypoints);
    for (const auto& e : fs::directory_iterator(a.keypoints))
        if (e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no keypoint CSV files in " + a.keypoints);

    const fs::path out = out_path(a.out, "retargeted");
    std::vector<data::Trajectory> kept;
    std::string report = "file,residual,kept\n";
    for (const auto& f : files) {
        const auto r = ik::retarget(source, robot, ik::read_keypoint_csv(f));
        const bool keep = r.ik.residual <= a.threshold;
        char buf[64];
        std::snprintf(buf, sizeof buf, ",%.9g,%d\n", r.ik.residual, keep ? 1 : 0);
        report += f.filename().string() + buf;
        if (keep) kept.push_back(r.traj);
    }
    std::cout << kept.size() << " of " << files.size() << " tracks kept (residual <= " << a.threshold << " m)\n";
    write_text(out / "residuals.csv", report);
    if (kept.empty()) throw DataError("every track was filtered; no dataset written");
    data::save_dataset(out, kept);
    std::cout << "wrote " << out.string() << '\n';
    return 0;
}

// ---- train ----

struct TrainArgs {
    std::vector<std::string> data;
    std::string model_cfg, train_cfg, out, resume;
    std::optional<std::size_t> steps, batch;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr;
    std::optional<std::string> regime;
};

int cmd_train(const TrainArgs& a) {
    model::ModelConfig mcfg;
    training::TrainConfig tcfg;
    if (!a.model_cfg.empty()) model::from_json(read_json_file(a.model_cfg), mcfg);
    if (!a.train_cfg.empty()) training::from_json(read_json_file(a.train_cfg), tcfg);
    if (a.steps) tcfg.steps = *a.steps;
    if (a.batch) tcfg.batch = *a.batch;
    if (a.seed) tcfg.seed = *a.seed;
    if (a.lr) tcfg.lr = *a.lr;
    if (a.regime) tcfg.regime = training::regime_from_string(*a.regime);

    const auto trajs = load_all(a.data);
    training::TrainOptions opts;
    data::Normalization norm;
    if (!a.resume.empty()) {
        auto ck = model::load_checkpoint(a.resume);
        if (!ck.optimizer) throw ConfigError("checkpoint " + a.resume + " has no optimizer state to resume from");
        mcfg = ck.config;
        norm = ck.normalization;
        opts.resume = std::move(ck);
    } else {
        norm = data::compute_normalization(trajs);
    }
    const fs::path out = out_path(a.out, "model.ckpt");
    if (tcfg.checkpoint_every > 0 && tcfg.checkpoint_path.empty()) tcfg.checkpoint_path = out;

    auto res = tcfg.regime == training::Regime::staged ? training::train_staged(mcfg, trajs, norm, tcfg, opts)
                                                       : training::train(mcfg, trajs, norm, tcfg, opts);
    model::save_checkpoint(out, {mcfg, norm, res.params, res.optimizer});
    fs::path log = out;
    log += ".log.csv";
    res.log.write_csv(log);
    if (!res.log.records.empty())
        std::cout << "final loss " << res.log.records.back().loss << " after " << res.log.records.back().step + 1
                  << " steps\n";
    std::cout << "wrote " << out.string() << " and " << log.string() << '\n';
    return 0;
}

// ---- eval ----

struct EvalArgs {
    std::string checkpoint, suite = "tracking", out;
    std::vector<std::string> data, results;
    double vx = 0.5, omega = 0.0;
    std::size_t joint = 0;
};

int cmd_eval(const EvalArgs& a) {
    const fs::path out = out_path(a.out, fs::path("eval") / a.suite);
    fs::create_directories(out);
    if (a.suite == "correlation") {
        // One point per variant summary row of each results CSV.
        std::vector<std::pair<double, double>> pts;
        if (a.results.empty()) throw ConfigError("correlation needs --results");
        for (const auto& f : a.results) {
            std::ifstream in(f);
            if (!in) throw DataError("cannot read " + f);
            std::string line;
            std::getline(in, line);
            while (std::getline(in, line)) {
                const auto c = split_csv(line);
                double te = 0, pe = 0;
                if (c.size() == 4 && c[1] == "mean" && parse_double(c[2], te) && parse_double(c[3], pe))
                    pts.emplace_back(pe, te);
            }
        }
        const auto r = eval::correlation_study(pts);
        write_text(out / "correlation.json",
                   json{{"r", r.r}, {"degenerate", r.degenerate}, {"points", pts}}.dump(2) + "\n");
        eval::write_series_csv(out / "correlation.csv", "prediction_error,tracking_error", pts);
        std::cout << "pearson r = " << r.r << " over " << pts.size() << " variants\n";
        return 0;
    }

    if (a.checkpoint.empty()) throw ConfigError("--checkpoint is required for suite " + a.suite);
    const auto ck = model::load_checkpoint(a.checkpoint);
    const eval::Policy policy{&ck.params, ck.config, ck.normalization};
    const env::EnvConfig env_cfg;

    if (a.suite == "tracking") {
        const auto rep = eval::tracking_benchmark(policy, eval::benchmark_grid(), eval::kEpisodeSeconds, env_cfg);
        eval::write_report_json(out / "report.json", rep);
        eval::write_per_command_csv(out / "per_command.csv", rep.per_command);
        std::cout << "tracking error " << rep.tracking_error << " m, falls " << rep.fall_count << '\n';
    } else if (a.suite == "prediction") {
        if (a.data.empty()) throw ConfigError("prediction needs --data with held-out trajectories");
        const auto pe = eval::prediction_error(policy, load_all(a.data));
        eval::EvalReport rep;
        rep.prediction_error = pe.total();
        rep.prediction_error_obs = pe.obs;
        rep.prediction_error_act = pe.act;
        eval::write_report_json(out / "report.json", rep);
        std::cout << "prediction error " << pe.total() << " (obs " << pe.obs << ", act " << pe.act << ")\n";
    } else if (a.suite == "portrait") {
        const env::Command c{a.vx, 0.0, a.omega};
        const auto d = eval::deploy(policy, c, eval::kEpisodeSeconds, env_cfg);
        const auto series = eval::phase_portrait(d.traj, a.joint);
        const auto expert = eval::phase_portrait(eval::deploy_expert(c, eval::kEpisodeSeconds, env_cfg).traj, a.joint);
        eval::write_series_csv(out / "portrait.csv", "q,qdot", series);
        eval::write_series_csv(out / "portrait_expert.csv", "q,qdot", expert);
        eval::write_svg_plot(out / "portrait.svg", "phase portrait", "q [rad]", "dq/dt [rad/s]",
                             {{"model", series}, {"expert", expert}});
        std::cout << "wrote " << series.size() << " phase points" << (d.fell ? " (fell)" : "") << '\n';
    } else if (a.suite == "unseen") {
        const auto u = eval::unseen_command_test(policy, env_cfg);
        write_text(out / "unseen.json",
                   json{{"ratio", u.ratio}, {"backward", command_rows(u.backward)}, {"forward", command_rows(u.forward)}}
                           .dump(2) +
                       "\n");
        auto rows = u.backward;
        rows.insert(rows.end(), u.forward.begin(), u.forward.end());
        eval::write_per_command_csv(out / "unseen.csv", rows);
        std::cout << "backward / forward error ratio " << u.ratio << '\n';
    } else {
        throw ConfigError("unknown suite '" + a.suite + "' (expected tracking, prediction, portrait, unseen or correlation)");
    }
    std::cout << "wrote " << out.string() << '\n';
    return 0;
}

// ---- ablate ----

struct AblateArgs {
    std::string experiment, config, out;
    std::vector<std::uint64_t> seeds;
    std::optional<std::size_t> steps;
    bool quiet = false;
};

int cmd_ablate(const AblateArgs& a) {
    harness::ExperimentSpec spec;
    if (!a.config.empty()) harness::from_json(read_json_file(a.config), spec);
    if (!a.experiment.empty()) spec.experiment = harness::experiment_from_string(a.experiment);
    if (!a.seeds.empty()) spec.seeds = a.seeds;
    if (a.steps) spec.train.steps = *a.steps;
    spec.out_dir = out_path(a.out.empty() && !spec.out_dir.empty() ? spec.out_dir.string() : a.out,
                            fs::path("ablate") / harness::to_string(spec.experiment));

    harness::Runner runner(a.quiet ? harness::Runner::Log{} : [](const std::string& m) { std::cerr << m << '\n'; });
    const auto res = runner.run(spec);
    std::cout << harness::results_csv(res);
    std::cout << "wrote " << (spec.out_dir / "results.csv").string() << '\n';
    if (!res.ok()) {
        std::cerr << "failed cells:\n";
        for (const auto& e : res.errors()) std::cerr << "  " << e << '\n';
        return 1;
    }
    return 0;
}

// ---- plot ----

struct PlotArgs {
    std::vector<std::string> inputs;
    std::string out, title = "", xcol, ycol, xlabel, ylabel;
};

int cmd_plot(const PlotArgs& a) {
    std::vector<eval::PlotSeries> series;
    std::string xname, yname;
    for (const auto& f : a.inputs) {
        std::ifstream in(f);
        if (!in) throw DataError("cannot read " + f);
        std::string line;
        if (!std::getline(in, line)) throw DataError(f + " is empty");
        const auto header = split_csv(line);
        auto index = [&](const std::string& name, std::size_t fallback) {
            if (name.empty()) {
                if (fallback >= header.size()) throw DataError(f + " has fewer than two columns");
                return fallback;
            }
            const auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) throw DataError(f + " has no column '" + name + "'");
            return static_cast<std::size_t>(it - header.begin());
        };
        const std::size_t xi = index(a.xcol, 0), yi = index(a.ycol, 1);
        xname = header[xi];
        yname = header[yi];
        eval::PlotSeries s{fs::path(f).stem().string(), {}};
        while (std::getline(in, line)) {
            const auto c = split_csv(line);
            double x = 0, y = 0;
            if (c.size() > std::max(xi, yi) && parse_double(c[xi], x) && parse_double(c[yi], y))
                s.points.emplace_back(x, y);
        }
        series.push_back(std::move(s));
    }
    const fs::path out = out_path(a.out, "plot.svg");
    eval::write_svg_plot(out, a.title, a.xlabel.empty() ? xname : a.xlabel, a.ylabel.empty() ? yname : a.ylabel,
                         series);
    std::cout << "wrote " << out.string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Next-token-prediction locomotion toolkit on a planar surrogate robot"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate expert / action-free datasets or keypoint tracks");
    g->add_option("kind", gen.kind, "expert, actionfree or keypoints")->required();
    g->add_option("-n,--count", gen.count, "Number of trajectories")->capture_default_str();
    g->add_option("-s,--seed", gen.seed, "Generation seed")->capture_default_str();
    g->add_option("-o,--out", gen.out, "Output directory");
    g->add_option("-c,--config", gen.config, "Data generation JSON config");
    g->add_option("--noise", gen.noise, "Action noise (expert/actionfree) or keypoint noise (keypoints)");

    RetargetArgs rt;
    auto* r = app.add_subcommand("retarget", "Retarget keypoint CSVs onto the robot and filter by residual");
    r->add_option("keypoints", rt.keypoints, "Directory of keypoint CSV files")->required();
    r->add_option("-o,--out", rt.out, "Output dataset directory");
    r->add_option("--chain", rt.chain, "JSON source chain (link_lengths, joint_lower, joint_upper, vel_limit)");
    r->add_option("--threshold", rt.threshold, "Residual threshold in metres")->capture_default_str();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model on one or more datasets");
    t->add_option("-d,--data", tr.data, "Dataset directories")->required();
    t->add_option("--model", tr.model_cfg, "Model JSON config");
    t->add_option("--train", tr.train_cfg, "Training JSON config");
    t->add_option("-o,--out", tr.out, "Checkpoint path");
    t->add_option("--resume", tr.resume, "Resume from a checkpoint with optimizer state");
    t->add_option("--steps", tr.steps);
    t->add_option("--batch", tr.batch);
    t->add_option("--seed", tr.seed);
    t->add_option("--lr", tr.lr);
    t->add_option("--regime", tr.regime, "joint, staged, complete-only or action-only-loss");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
    e->add_option("suite", ev.suite, "tracking, prediction, portrait, unseen or correlation")->required();
    e->add_option("-m,--checkpoint", ev.checkpoint, "Checkpoint file");
    e->add_option("-d,--data", ev.data, "Held-out dataset directories (prediction)");
    e->add_option("--results", ev.results, "Experiment results CSVs (correlation)");
    e->add_option("--vx", ev.vx, "Heading command for the portrait")->capture_default_str();
    e->add_option("--omega", ev.omega, "Yaw command for the portrait")->capture_default_str();
    e->add_option("--joint", ev.joint, "Joint for the portrait")->capture_default_str();
    e->add_option("-o,--out", ev.out, "Output directory");

    AblateArgs ab;
    auto* a = app.add_subcommand("ablate", "Run an ablation or scaling experiment");
    a->add_option("experiment", ab.experiment,
                  "ablate-token-layout, ablate-alignment, ablate-regime, ablate-loss-target, scale-data, "
                  "scale-context, scale-model or actionfree-gain");
    a->add_option("-c,--config", ab.config, "Experiment JSON config");
    a->add_option("--seeds", ab.seeds, "Training seeds");
    a->add_option("--steps", ab.steps, "Training steps per cell");
    a->add_option("-o,--out", ab.out, "Output directory");
    a->add_flag("-q,--quiet", ab.quiet, "No progress on stderr");

    PlotArgs pl;
    auto* p = app.add_subcommand("plot", "Line plot of CSV columns as SVG");
    p->add_option("inputs", pl.inputs, "CSV files, one series each")->required();
    p->add_option("-o,--out", pl.out, "SVG path");
    p->add_option("--x", pl.xcol, "x column name (default: first)");
    p->add_option("--y", pl.ycol, "y column name (default: second)");
    p->add_option("--title", pl.title);
    p->add_option("--xlabel", pl.xlabel);
    p->add_option("--ylabel", pl.ylabel);

    CLI11_PARSE(app, argc, argv);
    try {
        if (g->parsed()) return cmd_gen(gen);
        if (r->parsed()) return cmd_retarget(rt);
        if (t->parsed()) return cmd_train(tr);
        if (e->parsed()) return cmd_eval(ev);
        if (a->parsed()) return cmd_ablate(ab);
        if (p->parsed()) return cmd_plot(pl);
    } catch (const ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << '\n';
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
