#include <cmath>
#include <fstream>

#include "json.hpp"
#include "ntp/trajdata.hpp"

namespace ntp::data {

using nlohmann::json;

namespace {

json matrix_to_json(const Array& a) {
    json rows = json::array();
    for (std::size_t i = 0; i < a.dim(0); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < a.dim(1); ++j) row.push_back(a.at(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Array matrix_from_json(const json& rows, const char* what) {
    if (!rows.is_array() || rows.empty()) throw DataError(std::string(what) + " must be a nonempty array of rows");
    const std::size_t r = rows.size();
    const std::size_t c = rows[0].size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (!row.is_array() || row.size() != c) throw DataError(std::string(what) + " rows have inconsistent width");
        for (const auto& v : row) data.push_back(v.get<double>());
    }
    return Array({r, c}, std::move(data));
}

} // namespace

std::string trajectory_to_json_line(const Trajectory& t) {
    json j;
    j["dt"] = t.dt;
    j["command"] = t.command;
    j["obs"] = matrix_to_json(t.obs);
    j["act"] = matrix_to_json(t.act);
    j["act_present"] = t.act_present;
    j["source"] = to_string(t.source);
    return j.dump();
}

Trajectory trajectory_from_json_line(const std::string& line) {
    const json j = json::parse(line);
    Trajectory t;
    t.dt = j.at("dt").get<double>();
    t.command = j.at("command").get<std::array<double, 3>>();
    t.obs = matrix_from_json(j.at("obs"), "obs");
    t.act = matrix_from_json(j.at("act"), "act");
    t.act_present = j.at("act_present").get<std::vector<bool>>();
    t.source = source_from_string(j.at("source").get<std::string>());
    return t;
}

std::vector<const Trajectory*> Dataset::by_source(Source s) const {
    std::vector<const Trajectory*> out;
    for (const auto& t : trajectories)
        if (t.source == s) out.push_back(&t);
    return out;
}

DatasetManifest save_dataset(const std::filesystem::path& dir, const std::vector<Trajectory>& trajs) {
    if (trajs.empty()) throw ContractError("refusing to save an empty dataset to " + dir.string());
    DatasetManifest man;
    man.m = trajs.front().obs_dim();
    man.n = trajs.front().act_dim();
    man.dt = trajs.front().dt;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        const auto& t = trajs[i];
        t.validate();
        if (t.obs_dim() != man.m || t.act_dim() != man.n || t.dt != man.dt)
            throw DataError("trajectory " + std::to_string(i) + " has (m, n, dt) = (" + std::to_string(t.obs_dim()) +
                            ", " + std::to_string(t.act_dim()) + ", " + std::to_string(t.dt) +
                            "), inconsistent with the first trajectory");
    }
    man.normalization = compute_normalization(trajs);

    std::filesystem::create_directories(dir);
    for (auto src : kAllSources) {
        std::size_t count = 0;
        for (const auto& t : trajs) count += t.source == src;
        if (count == 0) continue;
        man.counts[to_string(src)] = count;
        const auto path = dir / (to_string(src) + ".jsonl");
        std::ofstream out(path);
        if (!out) throw DataError("cannot write " + path.string());
        for (const auto& t : trajs)
            if (t.source == src) out << trajectory_to_json_line(t) << '\n';
        if (!out) throw DataError("write failed for " + path.string());
    }

    json j;
    j["version"] = man.version;
    j["m"] = man.m;
    j["n"] = man.n;
    j["dt"] = man.dt;
    j["counts"] = man.counts;
    j["normalization"] = {{"obs_mean", man.normalization.obs_mean},
                          {"obs_std", man.normalization.obs_std},
                          {"act_mean", man.normalization.act_mean},
                          {"act_std", man.normalization.act_std}};
    const auto mpath = dir / "manifest.json";
    std::ofstream out(mpath);
    if (!out) throw DataError("cannot write " + mpath.string());
    out << j.dump(2) << '\n';
    return man;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto mpath = dir / "manifest.json";
    std::ifstream in(mpath);
    if (!in) throw DataError("dataset manifest missing: " + mpath.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + mpath.string() + ": " + e.what());
    }

    Dataset ds;
    auto& man = ds.manifest;
    man.version = j.at("version").get<int>();
    if (man.version != DatasetManifest::kVersion)
        throw DataError("dataset " + dir.string() + " has version " + std::to_string(man.version) + ", expected " +
                        std::to_string(DatasetManifest::kVersion));
    man.m = j.at("m").get<std::size_t>();
    man.n = j.at("n").get<std::size_t>();
    man.dt = j.at("dt").get<double>();
    man.counts = j.at("counts").get<std::map<std::string, std::size_t>>();
    const auto& nj = j.at("normalization");
    man.normalization.obs_mean = nj.at("obs_mean").get<std::vector<double>>();
    man.normalization.obs_std = nj.at("obs_std").get<std::vector<double>>();
    man.normalization.act_mean = nj.at("act_mean").get<std::vector<double>>();
    man.normalization.act_std = nj.at("act_std").get<std::vector<double>>();
    if (man.normalization.obs_mean.size() != man.m || man.normalization.act_mean.size() != man.n)
        throw DataError("manifest normalization dims disagree with (m, n) in " + mpath.string());
    for (double s : man.normalization.obs_std)
        if (s < kMinStd) throw DataError("manifest obs std below floor in " + mpath.string());
    for (double s : man.normalization.act_std)
        if (s < kMinStd) throw DataError("manifest act std below floor in " + mpath.string());

    for (const auto& [name, count] : man.counts) source_from_string(name);
    for (auto src : kAllSources) {
        const std::string name = to_string(src);
        if (!man.counts.contains(name)) continue;
        const std::size_t count = man.counts.at(name);
        const auto path = dir / (name + ".jsonl");
        std::ifstream f(path);
        if (!f) throw DataError("dataset file missing: " + path.string());
        std::string line;
        std::size_t lineno = 0, seen = 0;
        while (std::getline(f, line)) {
            ++lineno;
            if (line.empty()) continue;
            const std::string where = path.string() + ":" + std::to_string(lineno);
            Trajectory t;
            try {
                t = trajectory_from_json_line(line);
            } catch (const json::exception& e) {
                throw DataError("malformed record " + where + ": " + e.what());
            }
            if (t.obs_dim() != man.m || t.act_dim() != man.n)
                throw DataError("record " + where + " has (m, n) = (" + std::to_string(t.obs_dim()) + ", " +
                                std::to_string(t.act_dim()) + "), manifest says (" + std::to_string(man.m) + ", " +
                                std::to_string(man.n) + ")");
            if (t.source != src) throw DataError("record " + where + " has source " + to_string(t.source));
            if (t.dt != man.dt) throw DataError("record " + where + " has dt inconsistent with manifest");
            try {
                t.validate();
            } catch (const DataError& e) {
                throw DataError("record " + where + ": " + e.what());
            }
            ds.trajectories.push_back(std::move(t));
            ++seen;
        }
        if (seen != count)
            throw DataError(path.string() + " holds " + std::to_string(seen) + " records, manifest says " +
                            std::to_string(count));
    }
    return ds;
}

} // namespace ntp::data
