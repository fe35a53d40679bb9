#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "ovenlab/grid.hpp"
#include "ovenlab/rng.hpp"

namespace ovenlab {

// Six actions total: five navigation actions plus one interact.
enum class Action { Wait = 0, Up, Down, Left, Right, Interact };
inline constexpr int kNumActions = 6;

inline constexpr int kEpisodeSteps = 100;
inline constexpr int kNumberWindowSteps = 4;

inline constexpr int kObsChannels = 6;
inline constexpr int kObsSize = kObsChannels * kGridCells;  // 6 x 3 x 5

using Observation = std::array<float, kObsSize>;

inline const char* action_name(Action a) {
    switch (a) {
        case Action::Wait: return "wait";
        case Action::Up: return "up";
        case Action::Down: return "down";
        case Action::Left: return "left";
        case Action::Right: return "right";
        case Action::Interact: return "interact";
    }
    return "?";
}

inline std::optional<Action> action_from_name(const std::string& s) {
    for (int i = 0; i < kNumActions; ++i) {
        const Action a = static_cast<Action>(i);
        if (s == action_name(a)) return a;
    }
    return std::nullopt;
}

enum class Carrying { Nothing, Onion, Soup };

struct OvenState {
    bool cooking = false;
    int timer = 0;  // steps elapsed since the onion was placed
};

struct NumberWindow {
    bool active = false;
    int remaining = 0;  // scored steps left, 4 at activation
    int current = 0;    // displayed number, 1..10
};

struct EnvState {
    GridLayout layout;
    TaskKind task = TaskKind::SingleT;
    int target = 7;
    Cell agent_pos = kAgentStart;
    Carrying carrying = Carrying::Nothing;
    OvenState oven;
    NumberWindow window;
    int step_count = 0;
    int trial_index = 0;
};

enum class InteractOutcome { NoOp, PickOnion, PlaceOnion, TakeSoup, Deliver };

struct StepInfo {
    // Oven timer seen by this step's action. Present only for rows relevant to
    // oven-check analysis: 0 on the placement step, and the running timer when
    // the action was an interact directed at the cooking oven.
    std::optional<int> oven_timer;
    int trial_index = 0;
    std::optional<int> number_value;     // number this step's action was scored against
    bool delivery = false;
    std::optional<bool> correct_number;  // present only on scored window steps
    InteractOutcome outcome = InteractOutcome::NoOp;
};

struct StepResult {
    Observation observation{};
    double reward = 0.0;
    bool done = false;
    StepInfo info;
};

// Classifies an interact without applying it. Priority is fixed:
// dispenser, then oven, then delivery (adjacency sets are disjoint in the
// canonical layout, so the order never actually arbitrates).
inline InteractOutcome classify_interact(const EnvState& s) {
    if (adjacent4(s.agent_pos, s.layout.dispenser) && s.carrying == Carrying::Nothing)
        return InteractOutcome::PickOnion;
    if (adjacent4(s.agent_pos, s.layout.oven)) {
        if (!s.oven.cooking && s.carrying == Carrying::Onion) return InteractOutcome::PlaceOnion;
        if (s.oven.cooking && s.oven.timer >= s.target) return InteractOutcome::TakeSoup;
    }
    if (adjacent4(s.agent_pos, s.layout.delivery) && s.carrying == Carrying::Soup)
        return InteractOutcome::Deliver;
    return InteractOutcome::NoOp;
}

inline void encode_observation(const EnvState& s, Observation& out) {
    out.fill(0.0f);
    // channel 0: static layout codes scaled to [0,1]
    out[cell_index(s.layout.dispenser)] = 1.0f / 4.0f;
    out[cell_index(s.layout.oven)] = 2.0f / 4.0f;
    out[cell_index(s.layout.delivery)] = 3.0f / 4.0f;
    if (s.layout.number_counter) out[cell_index(*s.layout.number_counter)] = 1.0f;
    // channel 1: agent position one-hot
    out[kGridCells + cell_index(s.agent_pos)] = 1.0f;
    // channel 2: oven-on flag broadcast. The timer itself is never exposed:
    // the agent gets no signal that the soup is ready.
    if (s.oven.cooking)
        for (int i = 0; i < kGridCells; ++i) out[2 * kGridCells + i] = 1.0f;
    // channels 3 and 4: carrying flags broadcast
    if (s.carrying == Carrying::Onion)
        for (int i = 0; i < kGridCells; ++i) out[3 * kGridCells + i] = 1.0f;
    if (s.carrying == Carrying::Soup)
        for (int i = 0; i < kGridCells; ++i) out[4 * kGridCells + i] = 1.0f;
    // channel 5: displayed number at the number cell while the window is active
    if (s.window.active && s.layout.number_counter)
        out[5 * kGridCells + cell_index(*s.layout.number_counter)] =
            static_cast<float>(s.window.current) / 10.0f;
}

inline Observation encode_observation(const EnvState& s) {
    Observation out;
    encode_observation(s, out);
    return out;
}

// Scores one action against the active number window and advances the window.
// Returns the earned reward. Calling with an inactive window is a contract
// violation.
inline double number_task_step(EnvState& s, Action action, Rng& rng, StepInfo& info) {
    if (!s.window.active) throw std::logic_error("number_task_step: window inactive");
    const int n = s.window.current;
    const bool correct = (n < 5 && action == Action::Interact) || (n >= 5 && action == Action::Wait);
    info.number_value = n;
    info.correct_number = correct;
    s.window.remaining -= 1;
    if (s.window.remaining > 0) {
        s.window.current = rng.uniform_int(1, 10);
    } else {
        s.window.active = false;
        s.window.current = 0;
    }
    return correct ? 1.0 : 0.0;
}

class Env {
public:
    // `unchecked_target` bypasses the 7..10 experimental range.
    Env(TaskKind task, int target_duration, bool unchecked_target = false)
        : task_(task), target_(target_duration) {
        if (!unchecked_target && (target_duration < 7 || target_duration > 10))
            throw std::invalid_argument("target duration must be in {7,8,9,10}");
        if (target_duration < 1)
            throw std::invalid_argument("target duration must be positive");
    }

    Observation reset(std::uint64_t seed) {
        rng_.reseed(seed);
        s_ = EnvState{};
        s_.layout = canonical_layout(task_);
        s_.task = task_;
        s_.target = target_;
        s_.agent_pos = kAgentStart;
        return encode_observation(s_);
    }

    StepResult step(Action action) {
        if (done()) throw std::logic_error("step() on a finished episode");
        StepResult r;
        r.info.trial_index = s_.trial_index;

        // The timer ticks once per step while cooking, before the action
        // resolves, so an interact during step k after placement sees timer k.
        if (s_.oven.cooking) s_.oven.timer += 1;

        // Score the number window against the pre-action state; a placement
        // this step activates a fresh window that is scored from the next step.
        if (s_.window.active) r.reward += number_task_step(s_, action, rng_, r.info);

        if (action == Action::Interact) {
            const InteractOutcome outcome = classify_interact(s_);
            r.info.outcome = outcome;
            switch (outcome) {
                case InteractOutcome::PickOnion:
                    s_.carrying = Carrying::Onion;
                    break;
                case InteractOutcome::PlaceOnion:
                    s_.carrying = Carrying::Nothing;
                    s_.oven.cooking = true;
                    s_.oven.timer = 0;
                    r.info.oven_timer = 0;
                    if (task_ == TaskKind::DualTN) {
                        s_.window.active = true;
                        s_.window.remaining = kNumberWindowSteps;
                        s_.window.current = rng_.uniform_int(1, 10);
                    }
                    break;
                case InteractOutcome::TakeSoup:
                    // Whatever is in hand is replaced by the soup; there is no
                    // hand precondition on taking.
                    r.info.oven_timer = s_.oven.timer;
                    s_.carrying = Carrying::Soup;
                    s_.oven = OvenState{};
                    break;
                case InteractOutcome::Deliver:
                    s_.carrying = Carrying::Nothing;
                    r.reward += 1.0;
                    r.info.delivery = true;
                    s_.trial_index += 1;
                    break;
                case InteractOutcome::NoOp:
                    // An early check: interact directed at the cooking oven.
                    if (adjacent4(s_.agent_pos, s_.layout.oven) && s_.oven.cooking)
                        r.info.oven_timer = s_.oven.timer;
                    break;
            }
        } else {
            move(action);
        }

        s_.step_count += 1;
        r.done = s_.step_count >= kEpisodeSteps;
        encode_observation(s_, r.observation);
        return r;
    }

    bool done() const { return s_.step_count >= kEpisodeSteps; }
    const EnvState& state() const { return s_; }
    TaskKind task() const { return task_; }
    int target() const { return target_; }

private:
    void move(Action action) {
        Cell next = s_.agent_pos;
        switch (action) {
            case Action::Up: next.row -= 1; break;
            case Action::Down: next.row += 1; break;
            case Action::Left: next.col -= 1; break;
            case Action::Right: next.col += 1; break;
            default: return;  // Wait never moves
        }
        if (s_.layout.is_walkable(next)) s_.agent_pos = next;
    }

    TaskKind task_;
    int target_;
    EnvState s_;
    Rng rng_;
};

}  // namespace ovenlab
