#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ovenlab/behavior.hpp"
#include "ovenlab/checkpoint.hpp"
#include "ovenlab/neural.hpp"
#include "ovenlab/train.hpp"
#include "ovenlab/version.hpp"

namespace ovenlab {

inline constexpr int kEvalEpisodes = 25;
inline const int kTargets[4] = {7, 8, 9, 10};

struct RunSpec {
    TaskKind task = TaskKind::SingleT;
    int target = 7;
    std::uint64_t seed = 1;

    std::string base_name() const {
        return std::string(task_name(task)) + "_d" + std::to_string(target) + "_s" +
               std::to_string(seed);
    }
};

struct RunPaths {
    std::string checkpoint, curve, trace, hidden;
};

inline RunPaths run_paths(const std::string& dir, const RunSpec& spec) {
    const std::string base = (std::filesystem::path(dir) / spec.base_name()).string();
    return {base + ".ckpt", base + "_curve.csv", base + "_trace.csv", base + "_hidden.bin"};
}

inline TrainConfig config_for_run(TrainConfig base, const RunSpec& spec) {
    base.seed = spec.seed;
    return base;
}

// The manifest is written before any training starts; resume decisions match
// run entries against checkpoint headers by config hash.
inline void write_manifest(const std::string& dir, const std::vector<RunSpec>& specs,
                           const TrainConfig& base_config) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& spec : specs) {
        const auto paths = run_paths(dir, spec);
        runs.push_back({{"name", spec.base_name()},
                        {"task", task_name(spec.task)},
                        {"target", spec.target},
                        {"seed", spec.seed},
                        {"config_hash", config_for_run(base_config, spec).hash()},
                        {"checkpoint", std::filesystem::path(paths.checkpoint).filename().string()},
                        {"trace", std::filesystem::path(paths.trace).filename().string()}});
    }
    nlohmann::json manifest = {
        {"version", std::string(kVersion)},
        {"code_hash", code_version_hash()},
        {"config", base_config.to_json()},
        {"runs", runs},
    };
    std::filesystem::create_directories(dir);
    std::ofstream f(std::filesystem::path(dir) / "manifest.json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot write manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

inline bool checkpoint_up_to_date(const std::string& path, const RunSpec& spec,
                                  const TrainConfig& cfg) {
    if (!std::filesystem::exists(path)) return false;
    try {
        const CheckpointMeta meta = read_checkpoint_meta(path);
        return meta.task == spec.task && meta.target == spec.target && meta.seed == spec.seed &&
               meta.train_step >= cfg.total_steps && meta.config_hash == cfg.hash();
    } catch (const std::exception&) {
        return false;
    }
}

// Trains one run unless a matching checkpoint already exists. Returns the
// checkpoint path.
inline std::string ensure_trained(const std::string& dir, const RunSpec& spec,
                                  const TrainConfig& base_config) {
    const TrainConfig cfg = config_for_run(base_config, spec);
    const RunPaths paths = run_paths(dir, spec);
    if (checkpoint_up_to_date(paths.checkpoint, spec, cfg)) return paths.checkpoint;

    std::filesystem::create_directories(dir);
    Trainer trainer(spec.task, spec.target, cfg);
    const long steps = trainer.run();
    write_curve_csv(trainer.curve(), paths.curve);

    CheckpointMeta meta;
    meta.arch = trainer.params().arch;
    meta.task = spec.task;
    meta.target = spec.target;
    meta.seed = spec.seed;
    meta.train_step = steps;
    meta.config_hash = cfg.hash();
    const std::string tmp = paths.checkpoint + ".tmp";
    save_checkpoint(tmp, trainer.params(), meta);
    std::filesystem::rename(tmp, paths.checkpoint);
    return paths.checkpoint;
}

inline bool trace_exists(const std::string& dir, const RunSpec& spec) {
    const RunPaths paths = run_paths(dir, spec);
    return std::filesystem::exists(paths.trace) && std::filesystem::exists(paths.hidden);
}

inline std::string ensure_evaluated(const std::string& dir, const RunSpec& spec,
                                    int episodes = kEvalEpisodes) {
    const RunPaths paths = run_paths(dir, spec);
    if (trace_exists(dir, spec)) return paths.trace;
    CheckpointMeta meta;
    const NetParams<float> params = load_checkpoint(paths.checkpoint, &meta);
    const std::uint64_t eval_seed = derive_seed(meta.seed, Stream::Eval);
    const EvalTrace trace = evaluate(params, meta.task, meta.target, episodes, eval_seed);
    write_trace_csv(trace, paths.trace + ".tmp");
    std::filesystem::rename(paths.trace + ".tmp", paths.trace);
    write_hidden_sidecar(trace, paths.hidden + ".tmp");
    std::filesystem::rename(paths.hidden + ".tmp", paths.hidden);
    return paths.trace;
}

struct MatrixResult {
    std::vector<RunSpec> completed;
    std::vector<std::pair<RunSpec, std::string>> failed;
};

inline std::vector<RunSpec> matrix_specs(const std::vector<std::uint64_t>& seeds) {
    std::vector<RunSpec> specs;
    for (const TaskKind task : {TaskKind::SingleT, TaskKind::DualTN})
        for (const int target : kTargets)
            for (const std::uint64_t seed : seeds) specs.push_back({task, target, seed});
    return specs;
}

// Trains and evaluates the full task x duration x seed grid. Runs are
// independent; the pool only schedules. Individual failures are collected and
// the grid continues.
inline MatrixResult run_matrix(const std::string& dir, const std::vector<std::uint64_t>& seeds,
                               const TrainConfig& base_config, int workers = 1,
                               int episodes = kEvalEpisodes, bool quiet = false) {
    const std::vector<RunSpec> specs = matrix_specs(seeds);
    write_manifest(dir, specs, base_config);

    MatrixResult result;
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    workers = std::max(1, std::min<int>(workers, static_cast<int>(specs.size())));

    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= specs.size()) return;
            const RunSpec spec = specs[i];
            try {
                ensure_trained(dir, spec, base_config);
                ensure_evaluated(dir, spec, episodes);
                std::lock_guard<std::mutex> lock(mu);
                result.completed.push_back(spec);
                if (!quiet)
                    std::fprintf(stderr, "[matrix] done %s\n", spec.base_name().c_str());
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                result.failed.emplace_back(spec, e.what());
                if (!quiet)
                    std::fprintf(stderr, "[matrix] FAILED %s: %s\n", spec.base_name().c_str(),
                                 e.what());
            }
        }
    };

    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return result;
}

// --- report assembly ---

struct ReportOptions {
    std::vector<int> targets = {7, 8, 9, 10};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    TTestMode mode = TTestMode::Pooled;
};

inline void write_spectra_rows(std::ofstream& f, const char* task, int target, const Spectrum& s) {
    char buf[160];
    for (std::size_t j = 0; j < s.magnitudes.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%zu,%.6g,%.6g,%d\n", task, target, j,
                      s.frequencies[j], s.magnitudes[j],
                      static_cast<int>(j) == s.target_bin ? 1 : 0);
        f << buf;
    }
}

// Loads matched traces per duration, pools first-oven-check samples across
// seeds, and emits summary.csv, first_oven_checks.csv, spectra.csv,
// spectra_avg.csv and pca.csv. Unmatched durations are reported and skipped.
inline std::vector<ConditionReport> write_report(const std::string& dir, const ReportOptions& opt,
                                                 std::ostream& log) {
    std::vector<ConditionReport> reports;
    std::vector<std::string> peak_lines;
    const std::filesystem::path out(dir);

    std::ofstream spectra(out / "spectra.csv", std::ios::binary);
    std::ofstream spectra_avg(out / "spectra_avg.csv", std::ios::binary);
    std::ofstream pca_csv(out / "pca.csv", std::ios::binary);
    spectra << "task,target,bin,frequency,magnitude,is_target_bin\n";
    spectra_avg << "task,target,bin,frequency,magnitude,is_target_bin\n";
    pca_csv << "task,target,step,pc1,pc2,pc3,delivery_flag\n";

    for (const int target : opt.targets) {
        std::vector<EvalTrace> single_store, dual_store;
        for (const TaskKind task : {TaskKind::SingleT, TaskKind::DualTN}) {
            auto& store = task == TaskKind::SingleT ? single_store : dual_store;
            for (const std::uint64_t seed : opt.seeds) {
                const RunSpec spec{task, target, seed};
                const RunPaths paths = run_paths(dir, spec);
                if (!std::filesystem::exists(paths.trace)) continue;
                EvalTrace t = read_trace_csv(paths.trace);
                if (std::filesystem::exists(paths.hidden)) read_hidden_sidecar(t, paths.hidden);
                store.push_back(std::move(t));
            }
        }
        if (single_store.empty() || dual_store.empty()) {
            log << "warning: duration " << target << " missing "
                << (single_store.empty() ? "single" : "dual") << " traces; skipped\n";
            continue;
        }

        std::vector<const EvalTrace*> singles, duals;
        for (const auto& t : single_store) singles.push_back(&t);
        for (const auto& t : dual_store) duals.push_back(&t);
        reports.push_back(compare_conditions(singles, duals, target, opt.mode));

        // figures data from the first seed with hidden states
        for (const TaskKind task : {TaskKind::SingleT, TaskKind::DualTN}) {
            const auto& store = task == TaskKind::SingleT ? single_store : dual_store;
            const EvalTrace* first = nullptr;
            for (const auto& t : store)
                if (!t.hidden.empty()) {
                    first = &t;
                    break;
                }
            if (!first) continue;
            const SpectralReport rep = spectral_report(*first, target, 0);
            write_spectra_rows(spectra, task_name(task), target, rep.pc1_spectrum);
            if (!rep.top_peaks.empty()) {
                const double freq = rep.pc1_spectrum.frequencies[rep.top_peaks[0]];
                char line[200];
                std::snprintf(line, sizeof(line),
                              "%-6s d%-2d  PC1 peak: frequency %.3f cycles/step (period %.1f "
                              "steps), target frequency %.3f (period %d)%s\n",
                              task_name(task), target, freq, freq > 0 ? 1.0 / freq : 0.0,
                              1.0 / target, target, rep.flat ? " [flat]" : "");
                peak_lines.push_back(line);
            }

            Spectrum avg = rep.pc1_spectrum;
            for (int ep = 1; ep < first->episodes; ++ep) {
                const SpectralReport r2 = spectral_report(*first, target, ep);
                for (std::size_t j = 0; j < avg.magnitudes.size(); ++j)
                    avg.magnitudes[j] += r2.pc1_spectrum.magnitudes[j];
            }
            for (auto& m : avg.magnitudes) m /= static_cast<double>(first->episodes);
            write_spectra_rows(spectra_avg, task_name(task), target, avg);

            char buf[200];
            const int steps = std::min(kEpisodeSteps, first->steps_per_episode);
            for (int t = 0; t < steps; ++t) {
                std::snprintf(buf, sizeof(buf), "%s,%d,%d,%.6g,%.6g,%.6g,%d\n", task_name(task),
                              target, t, rep.pc_scores[t * 3], rep.pc_scores[t * 3 + 1],
                              rep.pc_scores[t * 3 + 2], rep.delivery[t] ? 1 : 0);
                pca_csv << buf;
            }
        }
    }

    write_summary_csv(reports, (out / "summary.csv").string());
    write_first_oven_checks_csv(reports, (out / "first_oven_checks.csv").string());

    log << "target  mean_T  mean_TN        t       df         p  soups_T  soups_TN  ratio\n";
    for (const auto& r : reports) {
        char buf[256];
        if (r.enough_samples) {
            std::snprintf(buf, sizeof(buf),
                          "%6d  %6.3f  %7.3f  %7.3f  %7.1f  %8.2e  %7.3f  %8.3f  %5.3f\n", r.target,
                          r.mean_single, r.mean_dual, r.t, r.df, r.p, r.soups_single, r.soups_dual,
                          r.soup_ratio);
        } else {
            std::snprintf(buf, sizeof(buf),
                          "%6d  %6.3f  %7.3f  too few first-oven-check samples (%zu vs %zu)\n",
                          r.target, r.mean_single, r.mean_dual, r.n_single, r.n_dual);
        }
        log << buf;
    }
    for (const auto& line : peak_lines) log << line;
    return reports;
}

}  // namespace ovenlab
