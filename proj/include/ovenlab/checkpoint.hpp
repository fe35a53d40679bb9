#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ovenlab/net.hpp"

namespace ovenlab {

inline constexpr int kCheckpointFormat = 1;

struct CheckpointMeta {
    NetArch arch;
    TaskKind task = TaskKind::SingleT;
    int target = 7;
    std::uint64_t seed = 0;
    long train_step = 0;
    std::string config_hash;
};

inline const char* task_name(TaskKind t) { return t == TaskKind::SingleT ? "single" : "dual"; }

inline TaskKind task_from_name(const std::string& s) {
    if (s == "single") return TaskKind::SingleT;
    if (s == "dual") return TaskKind::DualTN;
    throw std::runtime_error("unknown task: " + s);
}

namespace detail {

inline void write_f32le(std::ofstream& f, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                                static_cast<unsigned char>(u >> 16),
                                static_cast<unsigned char>(u >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

inline float read_f32le(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    const std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                            (static_cast<std::uint32_t>(b[2]) << 16) |
                            (static_cast<std::uint32_t>(b[3]) << 24);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace detail

// One UTF-8 JSON header line, then every parameter array as little-endian
// float32 in NetParams::arrays() order.
inline void save_checkpoint(const std::string& path, const NetParams<float>& params,
                            const CheckpointMeta& meta) {
    nlohmann::json header = {
        {"format", kCheckpointFormat},
        {"arch",
         {{"in_channels", params.arch.in_channels},
          {"cells", params.arch.cells},
          {"conv_channels", params.arch.conv_channels},
          {"lstm_hidden", params.arch.lstm_hidden},
          {"mlp_hidden", params.arch.mlp_hidden},
          {"actions", params.arch.actions}}},
        {"task", task_name(meta.task)},
        {"target", meta.target},
        {"seed", meta.seed},
        {"step", meta.train_step},
        {"config_hash", meta.config_hash},
    };
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    const std::string h = header.dump() + "\n";
    f.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& a : params.arrays())
        for (const float v : *a.data) detail::write_f32le(f, v);
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline CheckpointMeta read_checkpoint_meta(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("missing checkpoint header: " + path);
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", 0) != kCheckpointFormat)
        throw std::runtime_error("unsupported checkpoint format in " + path);
    CheckpointMeta meta;
    const auto& ar = header.at("arch");
    meta.arch.in_channels = ar.at("in_channels").get<int>();
    meta.arch.cells = ar.at("cells").get<int>();
    meta.arch.conv_channels = ar.at("conv_channels").get<int>();
    meta.arch.lstm_hidden = ar.at("lstm_hidden").get<int>();
    meta.arch.mlp_hidden = ar.at("mlp_hidden").get<int>();
    meta.arch.actions = ar.at("actions").get<int>();
    meta.task = task_from_name(header.at("task").get<std::string>());
    meta.target = header.at("target").get<int>();
    meta.seed = header.at("seed").get<std::uint64_t>();
    meta.train_step = header.at("step").get<long>();
    meta.config_hash = header.value("config_hash", "");
    return meta;
}

inline NetParams<float> load_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr,
                                        const NetArch* expected = nullptr) {
    const CheckpointMeta meta = read_checkpoint_meta(path);
    if (expected && !(meta.arch == *expected))
        throw std::runtime_error("checkpoint architecture mismatch: " + path);
    std::ifstream f(path, std::ios::binary);
    std::string line;
    std::getline(f, line);
    NetParams<float> params(meta.arch);
    for (auto& a : params.arrays())
        for (float& v : *a.data) v = detail::read_f32le(f);
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    if (meta_out) *meta_out = meta;
    return params;
}

}  // namespace ovenlab
