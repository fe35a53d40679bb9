#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ovenlab/experiment.hpp"

namespace {

std::string default_out_dir() {
    if (const char* env = std::getenv("OVENLAB_OUT")) return env;
    return "ovenlab_out";
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    std::string cur;
    for (const char c : csv + ",") {
        if (c == ',') {
            if (!cur.empty()) seeds.push_back(std::stoull(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (seeds.empty()) throw CLI::ValidationError("--seeds", "no seeds given");
    return seeds;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ovenlab: dual-task interval-timing experiments in a simplified "
                 "Overcooked gridworld"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    std::string out_dir = default_out_dir();
    app.add_option("--out", out_dir, "output directory (default $OVENLAB_OUT or ./ovenlab_out)")
        ->envname("OVENLAB_OUT");

    // train
    auto* train_cmd = app.add_subcommand("train", "train one agent");
    std::string task_str;
    int duration = 0;
    std::uint64_t seed = 1;
    long steps = 100000;
    bool allow_any_duration = false;
    train_cmd->add_option("--task", task_str, "single|dual")
        ->required()
        ->check(CLI::IsMember({"single", "dual"}));
    train_cmd->add_option("--duration", duration, "target duration in steps (7..10)")->required();
    train_cmd->add_option("--seed", seed, "run seed");
    train_cmd->add_option("--steps", steps, "total training steps");
    train_cmd->add_flag("--allow-any-duration", allow_any_duration,
                        "bypass the 7..10 duration range check");
    bool dry_run = false;
    train_cmd->add_flag("--dry-run", dry_run, "write the manifest and exit without training");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint over full episodes");
    std::string ckpt_path;
    int episodes = ovenlab::kEvalEpisodes;
    std::uint64_t eval_seed = 0;
    bool eval_seed_set = false;
    eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    eval_cmd->add_option("--episodes", episodes, "number of evaluation episodes");
    eval_cmd->add_option("--eval-seed", eval_seed, "evaluation seed")
        ->each([&](const std::string&) { eval_seed_set = true; });

    // report
    auto* report_cmd = app.add_subcommand("report", "behavioral + spectral report from traces");
    std::string targets_str = "7,8,9,10";
    std::string seeds_str = "1,2,3";
    bool welch = false;
    report_cmd->add_option("--targets", targets_str, "durations to report");
    report_cmd->add_option("--seeds", seeds_str, "seeds to pool");
    report_cmd->add_flag("--welch", welch, "Welch t-test instead of pooled");

    // matrix
    auto* matrix_cmd = app.add_subcommand("matrix", "train, evaluate and report the full grid");
    std::string m_seeds_str = "1,2,3";
    int workers = 1;
    matrix_cmd->add_option("--seeds", m_seeds_str, "comma-separated run seeds");
    matrix_cmd->add_option("--steps", steps, "total training steps per run");
    matrix_cmd->add_option("--workers", workers, "worker threads");
    matrix_cmd->add_option("--episodes", episodes, "evaluation episodes per run");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            ovenlab::RunSpec spec;
            spec.task = ovenlab::task_from_name(task_str);
            spec.target = duration;
            spec.seed = seed;
            if (!allow_any_duration && (duration < 7 || duration > 10)) {
                std::cerr << "error: --duration must be in 7..10 (or pass --allow-any-duration)\n";
                return 1;
            }
            ovenlab::TrainConfig cfg;
            cfg.total_steps = steps;
            cfg.seed = seed;
            std::filesystem::create_directories(out_dir);
            ovenlab::write_manifest(out_dir, {spec}, cfg);
            if (dry_run) {
                std::cout << "manifest: " << out_dir << "/manifest.json\n";
                return 0;
            }
            const std::string ckpt = ovenlab::ensure_trained(out_dir, spec, cfg);
            std::cout << "checkpoint: " << ckpt << "\n";
            return 0;
        }
        if (*eval_cmd) {
            ovenlab::CheckpointMeta meta;
            const auto params = ovenlab::load_checkpoint(ckpt_path, &meta);
            if (!eval_seed_set) eval_seed = ovenlab::derive_seed(meta.seed, ovenlab::Stream::Eval);
            const auto trace =
                ovenlab::evaluate(params, meta.task, meta.target, episodes, eval_seed);
            std::filesystem::create_directories(out_dir);
            const std::string base =
                (std::filesystem::path(out_dir) / std::filesystem::path(ckpt_path).stem()).string();
            ovenlab::write_trace_csv(trace, base + "_trace.csv");
            ovenlab::write_hidden_sidecar(trace, base + "_hidden.bin");
            std::cout << "trace: " << base + "_trace.csv\n";
            std::cout << "hidden: " << base + "_hidden.bin\n";
            return 0;
        }
        if (*report_cmd) {
            ovenlab::ReportOptions opt;
            opt.targets.clear();
            for (const auto s : parse_seeds(targets_str)) opt.targets.push_back(static_cast<int>(s));
            opt.seeds = parse_seeds(seeds_str);
            opt.mode = welch ? ovenlab::TTestMode::Welch : ovenlab::TTestMode::Pooled;
            const auto reports = ovenlab::write_report(out_dir, opt, std::cout);
            return reports.empty() ? 1 : 0;
        }
        if (*matrix_cmd) {
            const auto seeds = parse_seeds(m_seeds_str);
            ovenlab::TrainConfig cfg;
            cfg.total_steps = steps;
            const auto result =
                ovenlab::run_matrix(out_dir, seeds, cfg, workers, episodes);
            ovenlab::ReportOptions opt;
            opt.seeds = seeds;
            ovenlab::write_report(out_dir, opt, std::cout);
            if (!result.failed.empty()) {
                std::cerr << result.failed.size() << " run(s) failed\n";
                return 1;
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
