#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ovenlab/adam.hpp"
#include "ovenlab/env.hpp"
#include "ovenlab/net.hpp"
#include "ovenlab/rng.hpp"
#include "ovenlab/trace.hpp"
#include "ovenlab/version.hpp"

namespace ovenlab {

struct TrainConfig {
    long total_steps = 100000;
    int rollout_len = 128;
    int epochs = 10;
    int minibatches = 1;  // split on sequence boundaries when > 1
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip = 0.2;
    double ent_coef = 0.05;
    double vf_coef = 0.5;
    double lr = 3e-4;
    double max_grad_norm = 0.5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;

    nlohmann::json to_json() const {
        return {{"total_steps", total_steps},
                {"rollout_len", rollout_len},
                {"epochs", epochs},
                {"minibatches", minibatches},
                {"gamma", gamma},
                {"gae_lambda", gae_lambda},
                {"clip", clip},
                {"ent_coef", ent_coef},
                {"vf_coef", vf_coef},
                {"lr", lr},
                {"max_grad_norm", max_grad_norm},
                {"adam_beta1", adam_beta1},
                {"adam_beta2", adam_beta2},
                {"adam_eps", adam_eps},
                {"seed", seed}};
    }

    std::string hash() const {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(fnv1a64(to_json().dump())));
        return std::string(buf);
    }
};

// Per-step records for one PPO segment. Hidden snapshots are taken before the
// step so updates can re-forward from exactly the state seen at collection.
struct RolloutBuffer {
    int len = 0;
    int obs_size = 0;
    int hidden_size = 0;
    std::vector<float> obs;      // [len x obs_size]
    std::vector<int> actions;
    std::vector<float> log_probs;
    std::vector<float> values;
    std::vector<float> rewards;
    std::vector<std::uint8_t> dones;         // episode ended on this step
    std::vector<std::uint8_t> reset_before;  // hidden was zeroed before this step
    std::vector<float> h_snap, c_snap;       // [len x hidden_size]
    float bootstrap_value = 0.0f;
    bool bootstrap_done = false;

    void resize(int n, int osz, int hsz) {
        len = n;
        obs_size = osz;
        hidden_size = hsz;
        obs.assign(static_cast<std::size_t>(n) * osz, 0.0f);
        actions.assign(n, 0);
        log_probs.assign(n, 0.0f);
        values.assign(n, 0.0f);
        rewards.assign(n, 0.0f);
        dones.assign(n, 0);
        reset_before.assign(n, 0);
        h_snap.assign(static_cast<std::size_t>(n) * hsz, 0.0f);
        c_snap.assign(static_cast<std::size_t>(n) * hsz, 0.0f);
    }

    const float* obs_row(int t) const { return obs.data() + static_cast<std::size_t>(t) * obs_size; }
    const float* h_row(int t) const { return h_snap.data() + static_cast<std::size_t>(t) * hidden_size; }
    const float* c_row(int t) const { return c_snap.data() + static_cast<std::size_t>(t) * hidden_size; }
};

struct GaeResult {
    std::vector<double> advantages;  // raw; normalization happens per update
    std::vector<double> returns;
};

inline GaeResult compute_gae(const RolloutBuffer& buf, double gamma, double lambda) {
    const int n = buf.len;
    GaeResult out;
    out.advantages.assign(n, 0.0);
    out.returns.assign(n, 0.0);
    double last = 0.0;
    for (int t = n - 1; t >= 0; --t) {
        const double next_value = (t == n - 1) ? static_cast<double>(buf.bootstrap_value)
                                               : static_cast<double>(buf.values[t + 1]);
        const double nonterminal = buf.dones[t] ? 0.0 : 1.0;
        const double delta =
            buf.rewards[t] + gamma * next_value * nonterminal - static_cast<double>(buf.values[t]);
        last = delta + gamma * lambda * nonterminal * last;
        out.advantages[t] = last;
        out.returns[t] = last + static_cast<double>(buf.values[t]);
    }
    return out;
}

struct UpdateStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_frac = 0.0;
    double approx_kl = 0.0;
    double grad_norm = 0.0;             // mean pre-clip norm
    double max_ratio_err_epoch0 = 0.0;  // max |ratio - 1| re-forwarding with pristine params
};

// Clipped surrogate for one transition: returns max(-adv*ratio, -adv*clip(ratio))
// and, via `dlogp`, the loss derivative with respect to the new log-prob. The
// clipped branch is constant in the parameters, so its gradient is zero.
template <typename S>
inline S policy_surrogate(S ratio, S adv, S clip_eps, S* dlogp = nullptr) {
    const S clipped = std::clamp(ratio, S(1) - clip_eps, S(1) + clip_eps);
    const S pg1 = -adv * ratio;
    const S pg2 = -adv * clipped;
    const bool unclipped_active = pg1 >= pg2;
    if (dlogp) *dlogp = unclipped_active ? -adv * ratio : S(0);
    return unclipped_active ? pg1 : pg2;
}

struct CurveRow {
    long step = 0;
    double mean_ep_reward = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_frac = 0.0;
};

inline void write_curve_csv(const std::vector<CurveRow>& rows, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "step,mean_ep_reward,policy_loss,value_loss,entropy,clip_frac\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%ld,%.6g,%.6g,%.6g,%.6g,%.6g\n", r.step, r.mean_ep_reward,
                      r.policy_loss, r.value_loss, r.entropy, r.clip_frac);
        f << buf;
    }
}

class Trainer {
public:
    Trainer(TaskKind task, int target, TrainConfig cfg, bool unchecked_target = false)
        : cfg_(cfg),
          task_(task),
          target_(target),
          env_(task, target, unchecked_target),
          params_(init_params<float>(NetArch{}, derive_seed(cfg.seed, Stream::Init))),
          adam_(NetArch{}.param_count()),
          sample_rng_(derive_seed(cfg.seed, Stream::Sample)),
          shuffle_rng_(derive_seed(cfg.seed, Stream::Shuffle)),
          hidden_(NetArch{}.lstm_hidden) {
        adam_.lr = cfg.lr;
        adam_.beta1 = cfg.adam_beta1;
        adam_.beta2 = cfg.adam_beta2;
        adam_.eps = cfg.adam_eps;
        obs_ = env_.reset(derive_seed(cfg_.seed, Stream::Env, episode_counter_++));
        fresh_hidden_ = true;
    }

    NetParams<float>& params() { return params_; }
    const NetParams<float>& params() const { return params_; }
    long global_step() const { return global_step_; }
    const std::vector<CurveRow>& curve() const { return curve_; }

    RolloutBuffer collect_rollout(int n = -1) {
        if (n < 0) n = cfg_.rollout_len;
        const NetArch& arch = params_.arch;
        RolloutBuffer buf;
        buf.resize(n, arch.obs_size(), arch.lstm_hidden);
        for (int t = 0; t < n; ++t) {
            if (env_.done()) {
                obs_ = env_.reset(derive_seed(cfg_.seed, Stream::Env, episode_counter_++));
                hidden_.zero();
                fresh_hidden_ = true;
            }
            std::copy(obs_.begin(), obs_.end(), buf.obs.begin() + static_cast<std::size_t>(t) * buf.obs_size);
            std::copy(hidden_.h.begin(), hidden_.h.end(),
                      buf.h_snap.begin() + static_cast<std::size_t>(t) * buf.hidden_size);
            std::copy(hidden_.c.begin(), hidden_.c.end(),
                      buf.c_snap.begin() + static_cast<std::size_t>(t) * buf.hidden_size);
            buf.reset_before[t] = fresh_hidden_ ? 1 : 0;
            fresh_hidden_ = false;

            const auto out = forward<float>(params_, std::span<const float>(obs_.data(), obs_.size()),
                                            hidden_);
            const auto [action, logp] = sample_action<float>(out.logits, sample_rng_);
            const StepResult sr = env_.step(static_cast<Action>(action));

            buf.actions[t] = action;
            buf.log_probs[t] = logp;
            buf.values[t] = out.value;
            buf.rewards[t] = static_cast<float>(sr.reward);
            buf.dones[t] = sr.done ? 1 : 0;
            episode_reward_acc_ += sr.reward;
            if (sr.done) {
                recent_episode_rewards_.push_back(episode_reward_acc_);
                if (recent_episode_rewards_.size() > 10) recent_episode_rewards_.pop_front();
                episode_reward_acc_ = 0.0;
            }
            obs_ = sr.observation;
        }
        if (env_.done()) {
            buf.bootstrap_value = 0.0f;
            buf.bootstrap_done = true;
        } else {
            HiddenState<float> tmp = hidden_;
            const auto out =
                forward<float>(params_, std::span<const float>(obs_.data(), obs_.size()), tmp);
            buf.bootstrap_value = out.value;
            buf.bootstrap_done = false;
        }
        global_step_ += n;
        return buf;
    }

    UpdateStats ppo_update(const RolloutBuffer& buf) {
        const NetArch& arch = params_.arch;
        const int n = buf.len;
        const GaeResult gae = compute_gae(buf, cfg_.gamma, cfg_.gae_lambda);

        // normalize advantages over the whole update batch
        double mean = 0.0;
        for (const double a : gae.advantages) mean += a;
        mean /= n;
        double var = 0.0;
        for (const double a : gae.advantages) var += (a - mean) * (a - mean);
        const double stdev = std::sqrt(var / std::max(1, n - 1));
        std::vector<float> adv(n);
        for (int t = 0; t < n; ++t)
            adv[t] = static_cast<float>((gae.advantages[t] - mean) / (stdev + 1e-8));

        const int mb_count = cfg_.minibatches;
        const int mb_size = n / mb_count;
        if (mb_size * mb_count != n)
            throw std::invalid_argument("rollout length must be divisible by minibatch count");

        std::vector<StepTape<float>> tape(mb_size);
        std::vector<std::vector<float>> dlogits(mb_size, std::vector<float>(arch.actions, 0.0f));
        std::vector<float> dvalue(mb_size, 0.0f);
        std::vector<float> conv_all(static_cast<std::size_t>(mb_size) * arch.lstm_input());
        std::vector<float> preact_all(static_cast<std::size_t>(mb_size) * 4 * arch.lstm_hidden);
        NetParams<float> grads(arch);
        HiddenState<float> hid(arch.lstm_hidden);
        std::vector<float> probs(arch.actions);
        std::vector<int> order(mb_count);

        UpdateStats stats;
        long passes = 0, clip_hits = 0, transitions = 0;
        const float eps_clip = static_cast<float>(cfg_.clip);

        // re-forward consistency: with the pristine parameters every stored
        // transition must reproduce its collection-time log-prob
        for (int t = 0; t < n; ++t) {
            if (t == 0 || buf.reset_before[t]) {
                std::copy(buf.h_row(t), buf.h_row(t) + arch.lstm_hidden, hid.h.begin());
                std::copy(buf.c_row(t), buf.c_row(t) + arch.lstm_hidden, hid.c.begin());
            }
            const auto out = forward<float>(
                params_, std::span<const float>(buf.obs_row(t), arch.obs_size()), hid);
            const auto ev = evaluate_actions<float>(out.logits, buf.actions[t]);
            const double ratio = std::exp(static_cast<double>(ev.log_prob - buf.log_probs[t]));
            stats.max_ratio_err_epoch0 = std::max(stats.max_ratio_err_epoch0, std::abs(ratio - 1.0));
        }

        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            for (int i = 0; i < mb_count; ++i) order[i] = i;
            for (int i = mb_count - 1; i > 0; --i)
                std::swap(order[i], order[sample_index(i + 1)]);

            for (const int mb : order) {
                const int lo = mb * mb_size;
                std::copy(buf.h_row(lo), buf.h_row(lo) + arch.lstm_hidden, hid.h.begin());
                std::copy(buf.c_row(lo), buf.c_row(lo) + arch.lstm_hidden, hid.c.begin());

                // the conv stack and the input-side gate preactivations do not
                // depend on the hidden state, so they batch across the segment
                for (int k = 0; k < mb_size; ++k) {
                    conv_forward<float>(params_,
                                        std::span<const float>(buf.obs_row(lo + k), arch.obs_size()),
                                        conv_all.data() + static_cast<std::size_t>(k) * arch.lstm_input());
                    std::copy(params_.lstm_b.begin(), params_.lstm_b.end(),
                              preact_all.begin() + static_cast<std::size_t>(k) * 4 * arch.lstm_hidden);
                }
                detail::matvec_add_many(params_.lstm_wx.data(), conv_all.data(), preact_all.data(),
                                        mb_size, 4 * arch.lstm_hidden, arch.lstm_input());

                double pg_loss = 0.0, v_loss = 0.0, ent_sum = 0.0, kl_sum = 0.0;
                for (int k = 0; k < mb_size; ++k) {
                    const int t = lo + k;
                    if (buf.reset_before[t]) hid.zero();
                    const auto out = forward_cell<float>(
                        params_, std::span<const float>(buf.obs_row(t), arch.obs_size()),
                        conv_all.data() + static_cast<std::size_t>(k) * arch.lstm_input(),
                        preact_all.data() + static_cast<std::size_t>(k) * 4 * arch.lstm_hidden, hid,
                        &tape[k]);
                    tape[k].reset_before = buf.reset_before[t] != 0;

                    const auto ev = evaluate_actions<float>(out.logits, buf.actions[t]);
                    const float ratio = std::exp(ev.log_prob - buf.log_probs[t]);
                    const float a_t = adv[t];
                    float dlogp_raw = 0.0f;
                    pg_loss += policy_surrogate(ratio, a_t, eps_clip, &dlogp_raw);
                    const float vdiff = out.value - static_cast<float>(gae.returns[t]);
                    v_loss += vdiff * vdiff;
                    ent_sum += ev.entropy;
                    kl_sum += (ratio - 1.0f) - (ev.log_prob - buf.log_probs[t]);
                    if (std::abs(ratio - 1.0f) > eps_clip) clip_hits += 1;

                    // loss gradients for this step
                    softmax<float>(out.logits, std::span<float>(probs));
                    const float dlogp = dlogp_raw / static_cast<float>(mb_size);
                    const float ent_scale =
                        static_cast<float>(cfg_.ent_coef) / static_cast<float>(mb_size);
                    const float lse = log_sum_exp<float>(out.logits);
                    for (int j = 0; j < arch.actions; ++j) {
                        const float logp_j = out.logits[j] - lse;
                        const float indicator = (j == buf.actions[t]) ? 1.0f : 0.0f;
                        dlogits[k][j] = dlogp * (indicator - probs[j]) +
                                        ent_scale * probs[j] * (logp_j + ev.entropy);
                    }
                    dvalue[k] = static_cast<float>(cfg_.vf_coef) * 2.0f * vdiff /
                                static_cast<float>(mb_size);
                }

                const double loss_total = pg_loss / mb_size +
                                          cfg_.vf_coef * (v_loss / mb_size) -
                                          cfg_.ent_coef * (ent_sum / mb_size);
                if (!std::isfinite(loss_total))
                    throw std::runtime_error(
                        "non-finite loss (policy=" + std::to_string(pg_loss / mb_size) +
                        " value=" + std::to_string(v_loss / mb_size) +
                        " entropy=" + std::to_string(ent_sum / mb_size) +
                        " step=" + std::to_string(global_step_) + ")");

                grads.fill_zero();
                backward_sequence(params_, tape, dlogits, dvalue, grads);
                stats.grad_norm += clip_global_norm(grads, static_cast<float>(cfg_.max_grad_norm));
                adam_.step(params_, grads);

                stats.policy_loss += pg_loss / mb_size;
                stats.value_loss += v_loss / mb_size;
                stats.entropy += ent_sum / mb_size;
                stats.approx_kl += kl_sum / mb_size;
                transitions += mb_size;
                passes += 1;
            }
        }
        stats.policy_loss /= passes;
        stats.value_loss /= passes;
        stats.entropy /= passes;
        stats.approx_kl /= passes;
        stats.grad_norm /= passes;
        stats.clip_frac = static_cast<double>(clip_hits) / static_cast<double>(transitions);
        return stats;
    }

    double mean_recent_episode_reward() const {
        if (recent_episode_rewards_.empty()) return 0.0;
        double s = 0.0;
        for (const double r : recent_episode_rewards_) s += r;
        return s / static_cast<double>(recent_episode_rewards_.size());
    }

    // Collect/update until total_steps is reached. Returns the final step count.
    long run() {
        while (global_step_ < cfg_.total_steps) {
            const RolloutBuffer buf = collect_rollout();
            const UpdateStats st = ppo_update(buf);
            curve_.push_back({global_step_, mean_recent_episode_reward(), st.policy_loss,
                              st.value_loss, st.entropy, st.clip_frac});
        }
        return global_step_;
    }

private:
    int sample_index(int n) { return static_cast<int>(shuffle_rng_.next_u64() % n); }

    TrainConfig cfg_;
    TaskKind task_;
    int target_;
    Env env_;
    NetParams<float> params_;
    Adam<float> adam_;
    Rng sample_rng_;
    Rng shuffle_rng_;
    HiddenState<float> hidden_;
    Observation obs_{};
    bool fresh_hidden_ = true;
    std::uint64_t episode_counter_ = 0;
    double episode_reward_acc_ = 0.0;
    std::deque<double> recent_episode_rewards_;
    long global_step_ = 0;
    std::vector<CurveRow> curve_;
};

// Stochastic-policy evaluation: `n_episodes` fresh episodes with per-episode
// seeds derived from `eval_seed`, recording the trace rows and the LSTM h
// vector after every step.
inline EvalTrace evaluate(const NetParams<float>& params, TaskKind task, int target,
                          int n_episodes, std::uint64_t eval_seed) {
    const NetArch& arch = params.arch;
    EvalTrace trace;
    trace.episodes = n_episodes;
    trace.steps_per_episode = kEpisodeSteps;
    trace.hidden_size = arch.lstm_hidden;
    trace.rows.reserve(static_cast<std::size_t>(n_episodes) * kEpisodeSteps);
    trace.hidden.reserve(static_cast<std::size_t>(n_episodes) * kEpisodeSteps * arch.lstm_hidden);

    Env env(task, target, /*unchecked_target=*/true);
    for (int ep = 0; ep < n_episodes; ++ep) {
        Observation obs = env.reset(derive_seed(eval_seed, Stream::Eval, 2 * ep));
        Rng action_rng(derive_seed(eval_seed, Stream::Eval, 2 * ep + 1));
        HiddenState<float> hidden(arch.lstm_hidden);
        int step = 0;
        while (!env.done()) {
            const auto out =
                forward<float>(params, std::span<const float>(obs.data(), obs.size()), hidden);
            const auto [action, logp] = sample_action<float>(out.logits, action_rng);
            (void)logp;
            const StepResult sr = env.step(static_cast<Action>(action));
            step += 1;

            EvalStepRow row;
            row.episode = ep;
            row.step = step;
            row.trial = sr.info.trial_index;
            row.action = static_cast<Action>(action);
            row.oven_timer = sr.info.oven_timer;
            row.number_value = sr.info.number_value;
            row.reward = sr.reward;
            row.delivery = sr.info.delivery;
            row.correct_number = sr.info.correct_number;
            trace.rows.push_back(row);
            trace.hidden.insert(trace.hidden.end(), hidden.h.begin(), hidden.h.end());
            obs = sr.observation;
        }
    }
    return trace;
}

}  // namespace ovenlab
