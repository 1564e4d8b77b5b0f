#include <cstring>
#include <fstream>

#include "ntp/model.hpp"
#include "ntp/serialize.hpp"

namespace ntp::model {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'N', 'T', 'P', 'C', 'K', 'P', 'T', '1'};
constexpr int kFormatVersion = 1;

void write_doubles(std::ofstream& out, std::span<const double> v) {
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::span<double> v, const std::filesystem::path& path) {
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw DataError("checkpoint " + path.string() + " is truncated");
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    const auto named = ck.params.named();
    json meta;
    meta["format_version"] = kFormatVersion;
    meta["config"] = ck.config;
    meta["normalization"] = ck.normalization;
    json tensors = json::array();
    for (const auto& [name, v] : named) tensors.push_back({{"name", name}, {"shape", v->value.shape()}});
    meta["tensors"] = tensors;
    if (ck.optimizer) {
        if (ck.optimizer->m1.size() != named.size() || ck.optimizer->m2.size() != named.size())
            throw ContractError("optimizer state does not match the parameter list");
        meta["optimizer"] = {{"step", ck.optimizer->step}, {"rng_state", ck.optimizer->rng_state}};
    }
    const std::string text = meta.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, v] : named) write_doubles(out, v->value.data());
    if (ck.optimizer) {
        for (const auto& a : ck.optimizer->m1) write_doubles(out, a.data());
        for (const auto& a : ck.optimizer->m2) write_doubles(out, a.data());
    }
    if (!out) throw DataError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint not found: " + path.string());
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw DataError(path.string() + " is not a checkpoint file");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || len > (1u << 30)) throw DataError("checkpoint " + path.string() + " has a corrupt header");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("checkpoint " + path.string() + " is truncated");

    Checkpoint ck;
    json meta;
    try {
        meta = json::parse(text);
        if (meta.at("format_version").get<int>() != kFormatVersion)
            throw DataError("checkpoint " + path.string() + " has unsupported format version " +
                            meta.at("format_version").dump());
        ck.config = meta.at("config").get<ModelConfig>();
        ck.normalization = meta.at("normalization").get<data::Normalization>();
    } catch (const json::exception& e) {
        throw DataError("malformed checkpoint metadata in " + path.string() + ": " + e.what());
    }
    ck.params = init_params(ck.config, 0);
    const auto named = ck.params.named();
    const auto& tensors = meta.at("tensors");
    if (tensors.size() != named.size())
        throw DataError("checkpoint " + path.string() + " lists " + std::to_string(tensors.size()) +
                        " tensors, config implies " + std::to_string(named.size()));
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto& [name, v] = named[i];
        if (tensors[i].at("name").get<std::string>() != name ||
            tensors[i].at("shape").get<Shape>() != v->value.shape())
            throw DataError("checkpoint tensor " + tensors[i].dump() + " does not match " + name + " " +
                            shape_str(v->value.shape()));
        read_doubles(in, v->value.data(), path);
    }
    if (meta.contains("optimizer")) {
        OptimizerState opt;
        opt.step = meta["optimizer"].at("step").get<std::size_t>();
        opt.rng_state = meta["optimizer"].at("rng_state").get<std::string>();
        for (auto* moments : {&opt.m1, &opt.m2}) {
            for (const auto& [name, v] : named) {
                Array a(v->value.shape());
                read_doubles(in, a.data(), path);
                moments->push_back(std::move(a));
            }
        }
        ck.optimizer = std::move(opt);
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw DataError("checkpoint " + path.string() + " has trailing bytes");
    return ck;
}

} // namespace ntp::model
