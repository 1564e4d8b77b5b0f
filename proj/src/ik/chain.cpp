#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "ntp/env.hpp"
#include "ntp/ik.hpp"

namespace ntp::ik {

double KinematicChain::total_length() const {
    double s = 0.0;
    for (double l : link_lengths) s += l;
    return s;
}

void KinematicChain::validate() const {
    if (link_lengths.empty()) throw ConfigError("kinematic chain has no links");
    if (joint_lower.size() != joints() || joint_upper.size() != joints())
        throw ConfigError("kinematic chain: joint limits for " + std::to_string(joint_lower.size()) + "/" +
                          std::to_string(joint_upper.size()) + " joints, links for " + std::to_string(joints()));
    for (std::size_t i = 0; i < joints(); ++i) {
        if (!(link_lengths[i] > 0)) throw ConfigError("link " + std::to_string(i) + " has non-positive length");
        if (!(joint_lower[i] < joint_upper[i]))
            throw ConfigError("joint " + std::to_string(i) + ": lower limit is not below the upper limit");
    }
    if (!(vel_limit > 0)) throw ConfigError("velocity limit must be positive");
}

KinematicChain robot_chain() { return {{0.5, 0.5}, {-1.2, -1.2}, {1.2, 1.2}, 5.0, {}}; }

KinematicChain human_chain() { return {{0.45, 0.42}, {-1.5, -1.5}, {1.5, 1.5}, 6.0, {}}; }

std::vector<Point> fk(const KinematicChain& chain, const std::vector<double>& q) {
    if (q.size() != chain.joints())
        throw DimensionError("fk: " + std::to_string(q.size()) + " joint angles for a " +
                             std::to_string(chain.joints()) + "-joint chain");
    std::vector<Point> out;
    Point p = chain.base;
    double phi = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        phi += q[i];
        p.x += chain.link_lengths[i] * std::cos(phi);
        p.y += chain.link_lengths[i] * std::sin(phi);
        out.push_back(p);
    }
    return out;
}

void KeypointTrajectory::validate() const {
    if (points.rank() != 2 || points.dim(1) % 2 != 0 || points.dim(1) == 0)
        throw DataError("keypoints must be an N × 2K array");
    if (frames() < 2) throw DataError("keypoint trajectory needs at least 2 frames");
    if (!(dt > 0)) throw DataError("keypoint time step must be positive");
    if (!points.all_finite()) throw DataError("keypoints contain non-finite values");
    if (confidence.shape() != Shape{frames(), keypoints()})
        throw DataError("confidence shape " + shape_str(confidence.shape()) + ", expected " +
                        shape_str({frames(), keypoints()}));
    for (double c : confidence.data())
        if (!(c >= 0 && c <= 1)) throw DataError("keypoint confidence outside [0, 1]");
    if (root) {
        if (root->shape() != Shape{frames(), 3}) throw DataError("root track must be N × 3");
        if (!root->all_finite()) throw DataError("root track contains non-finite values");
    }
}

Array integrate_trapezoid(const std::vector<double>& q0, const Array& qdot, double dt) {
    const std::size_t N = qdot.dim(0), J = qdot.dim(1);
    if (q0.size() != J) throw DimensionError("integrate_trapezoid: q0 size does not match qdot columns");
    Array q({N, J});
    for (std::size_t j = 0; j < J; ++j) q.at(0, j) = q0[j];
    for (std::size_t t = 0; t + 1 < N; ++t)
        for (std::size_t j = 0; j < J; ++j) q.at(t + 1, j) = q.at(t, j) + (qdot.at(t + 1, j) + qdot.at(t, j)) * dt / 2;
    return q;
}

SyntheticKeypoints synthesize_keypoints(const KinematicChain& chain, const SyntheticMotion& m, std::uint64_t seed) {
    chain.validate();
    if (m.frames < 2 || !(m.dt > 0)) throw ConfigError("synthetic motion needs ≥ 2 frames and dt > 0");
    if (m.noise < 0) throw ConfigError("keypoint noise must be non-negative");
    const std::size_t N = m.frames, J = chain.joints();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, m.noise > 0 ? m.noise : 1.0);
    std::uniform_real_distribution<double> ph(0.0, 2 * std::numbers::pi);
    const double phase = ph(rng);

    SyntheticKeypoints out;
    auto& k = out.keypoints;
    k.dt = m.dt;
    k.points = Array({N, 2 * J});
    k.confidence = Array({N, J}, 1.0);
    k.root = Array({N, 3});
    out.q_true = Array({N, J});
    env::Pose pose;
    for (std::size_t t = 0; t < N; ++t) {
        const double arg = 2 * std::numbers::pi * m.frequency * static_cast<double>(t) * m.dt + phase;
        std::vector<double> q(J);
        for (std::size_t j = 0; j < J; ++j)
            q[j] = m.amplitude[j % 2] * std::sin(arg + (j % 2 ? std::numbers::pi / 2 : 0.0));
        for (std::size_t j = 0; j < J; ++j) out.q_true.at(t, j) = q[j];
        const auto pts = fk(chain, q);
        for (std::size_t j = 0; j < J; ++j) {
            k.points.at(t, 2 * j) = pts[j].x + (m.noise > 0 ? nd(rng) : 0.0);
            k.points.at(t, 2 * j + 1) = pts[j].y + (m.noise > 0 ? nd(rng) : 0.0);
        }
        k.root->at(t, 0) = pose.x;
        k.root->at(t, 1) = pose.y;
        k.root->at(t, 2) = pose.theta;
        // Same integrator as the surrogate base: pre-step heading.
        const double c = std::cos(pose.theta), s = std::sin(pose.theta);
        const auto& v = m.root_velocity;
        pose.x += (c * v[0] - s * v[1]) * m.dt;
        pose.y += (s * v[0] + c * v[1]) * m.dt;
        pose.theta += v[2] * m.dt;
    }
    return out;
}

void write_keypoint_csv(const std::filesystem::path& path, const KeypointTrajectory& k) {
    k.validate();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(17);
    const std::size_t K = k.keypoints();
    bool with_conf = false;
    for (double c : k.confidence.data()) with_conf = with_conf || c != 1.0;
    out << 't';
    for (std::size_t j = 1; j <= K; ++j) out << ",p" << j << "x,p" << j << 'y';
    if (with_conf)
        for (std::size_t j = 1; j <= K; ++j) out << ",c" << j;
    if (k.root) out << ",rx,ry,rtheta";
    out << '\n';
    for (std::size_t t = 0; t < k.frames(); ++t) {
        out << static_cast<double>(t) * k.dt;
        for (std::size_t c = 0; c < 2 * K; ++c) out << ',' << k.points.at(t, c);
        if (with_conf)
            for (std::size_t c = 0; c < K; ++c) out << ',' << k.confidence.at(t, c);
        if (k.root)
            for (std::size_t c = 0; c < 3; ++c) out << ',' << k.root->at(t, c);
        out << '\n';
    }
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& s, const std::filesystem::path& path, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw DataError(path.string() + ":" + std::to_string(line) + ": '" + s + "' is not a number");
}

} // namespace

KeypointTrajectory read_keypoint_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read keypoint file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty keypoint file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    if (header.empty() || header[0] != "t") throw DataError(path.string() + ": header must start with 't'");
    std::size_t K = 0;
    while (col.count("p" + std::to_string(K + 1) + "x") && col.count("p" + std::to_string(K + 1) + "y")) ++K;
    if (K == 0) throw DataError(path.string() + ": no keypoint columns p1x,p1y");
    std::size_t C = 0;
    while (col.count("c" + std::to_string(C + 1))) ++C;
    if (C != 0 && C != K)
        throw DataError(path.string() + ": " + std::to_string(C) + " confidence columns for " + std::to_string(K) +
                        " keypoints");
    const bool has_root = col.count("rx") && col.count("ry") && col.count("rtheta");
    const std::size_t expected = 1 + 2 * K + C + (has_root ? 3 : 0);
    if (header.size() != expected) throw DataError(path.string() + ": unrecognized columns in header");

    std::vector<double> ts, pts, conf, root;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
        auto num = [&](const std::string& name) { return parse_number(cells[col.at(name)], path, lineno); };
        ts.push_back(num("t"));
        for (std::size_t j = 1; j <= K; ++j) {
            pts.push_back(num("p" + std::to_string(j) + "x"));
            pts.push_back(num("p" + std::to_string(j) + "y"));
        }
        for (std::size_t j = 1; j <= K; ++j) conf.push_back(C ? num("c" + std::to_string(j)) : 1.0);
        if (has_root)
            for (const char* n : {"rx", "ry", "rtheta"}) root.push_back(num(n));
    }
    const std::size_t N = ts.size();
    if (N < 2) throw DataError(path.string() + ": need at least 2 frames");
    KeypointTrajectory k;
    // Timestamps carry round-off; the step is taken to nanosecond precision.
    k.dt = std::round((ts.back() - ts.front()) / static_cast<double>(N - 1) * 1e9) / 1e9;
    for (std::size_t i = 1; i < N; ++i)
        if (std::abs(ts[i] - ts[i - 1] - k.dt) > 1e-6 * std::max(1.0, k.dt))
            throw DataError(path.string() + ": non-uniform time step at frame " + std::to_string(i));
    k.points = Array({N, 2 * K}, std::move(pts));
    k.confidence = Array({N, K}, std::move(conf));
    if (has_root) k.root = Array({N, 3}, std::move(root));
    k.validate();
    return k;
}

} // namespace ntp::ik
