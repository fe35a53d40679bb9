#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ovenlab/env.hpp"

namespace ovenlab {

// One evaluation step as exported to CSV:
//   episode,step,trial,action,oven_timer,number_value,reward,delivery,correct_number
// Optional fields print as empty columns.
struct EvalStepRow {
    int episode = 0;
    int step = 0;  // 1..100 within the episode
    int trial = 0;
    Action action = Action::Wait;
    std::optional<int> oven_timer;
    std::optional<int> number_value;
    double reward = 0.0;
    bool delivery = false;
    std::optional<bool> correct_number;
};

struct EvalTrace {
    int episodes = 0;
    int steps_per_episode = 0;
    int hidden_size = 0;
    std::vector<EvalStepRow> rows;
    std::vector<float> hidden;  // rows.size() x hidden_size, LSTM h after each step

    const float* hidden_row(std::size_t row) const { return hidden.data() + row * hidden_size; }
};

inline std::string trace_csv_header() {
    return "episode,step,trial,action,oven_timer,number_value,reward,delivery,correct_number";
}

inline void append_trace_row(std::string& out, const EvalStepRow& r) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%s,", r.episode, r.step, r.trial, action_name(r.action));
    out += buf;
    if (r.oven_timer) out += std::to_string(*r.oven_timer);
    out += ',';
    if (r.number_value) out += std::to_string(*r.number_value);
    out += ',';
    std::snprintf(buf, sizeof(buf), "%g", r.reward);
    out += buf;
    out += ',';
    out += r.delivery ? '1' : '0';
    out += ',';
    if (r.correct_number) out += *r.correct_number ? '1' : '0';
    out += '\n';
}

inline void write_trace_csv(const EvalTrace& t, const std::string& path) {
    std::string out = trace_csv_header() + "\n";
    for (const auto& r : t.rows) append_trace_row(out, r);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline EvalTrace read_trace_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty trace: " + path);
    EvalTrace t;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 9) throw std::runtime_error("malformed trace row in " + path);
        EvalStepRow r;
        r.episode = std::stoi(fields[0]);
        r.step = std::stoi(fields[1]);
        r.trial = std::stoi(fields[2]);
        const auto a = action_from_name(fields[3]);
        if (!a) throw std::runtime_error("unknown action in " + path + ": " + fields[3]);
        r.action = *a;
        if (!fields[4].empty()) r.oven_timer = std::stoi(fields[4]);
        if (!fields[5].empty()) r.number_value = std::stoi(fields[5]);
        r.reward = std::stod(fields[6]);
        r.delivery = fields[7] == "1";
        if (!fields[8].empty()) r.correct_number = fields[8] == "1";
        t.rows.push_back(r);
        t.episodes = std::max(t.episodes, r.episode + 1);
        t.steps_per_episode = std::max(t.steps_per_episode, r.step);
    }
    return t;
}

// Hidden-state sidecar: one JSON header line, then little-endian float32
// h-vectors in row order.
inline void write_hidden_sidecar(const EvalTrace& t, const std::string& path) {
    nlohmann::json header = {
        {"episodes", t.episodes},
        {"steps", t.steps_per_episode},
        {"hidden", t.hidden_size},
        {"dtype", "f32le"},
    };
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    const std::string h = header.dump() + "\n";
    f.write(h.data(), static_cast<std::streamsize>(h.size()));
    static_assert(sizeof(float) == 4);
    f.write(reinterpret_cast<const char*>(t.hidden.data()),
            static_cast<std::streamsize>(t.hidden.size() * sizeof(float)));
}

inline void read_hidden_sidecar(EvalTrace& t, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("missing sidecar header: " + path);
    const auto header = nlohmann::json::parse(line);
    if (header.value("dtype", "") != "f32le")
        throw std::runtime_error("unsupported sidecar dtype in " + path);
    const int episodes = header.at("episodes").get<int>();
    const int steps = header.at("steps").get<int>();
    t.hidden_size = header.at("hidden").get<int>();
    t.hidden.assign(static_cast<std::size_t>(episodes) * steps * t.hidden_size, 0.0f);
    f.read(reinterpret_cast<char*>(t.hidden.data()),
           static_cast<std::streamsize>(t.hidden.size() * sizeof(float)));
    if (f.gcount() != static_cast<std::streamsize>(t.hidden.size() * sizeof(float)))
        throw std::runtime_error("truncated sidecar: " + path);
}

}  // namespace ovenlab
