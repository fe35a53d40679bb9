#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "oracles.hpp"
#include "ovenlab/behavior.hpp"

using namespace ovenlab;

namespace {

EvalStepRow make_row(int episode, int step, int trial, Action action,
                     std::optional<int> oven_timer = std::nullopt, bool delivery = false) {
    EvalStepRow r;
    r.episode = episode;
    r.step = step;
    r.trial = trial;
    r.action = action;
    r.oven_timer = oven_timer;
    r.delivery = delivery;
    if (delivery) r.reward = 1.0;
    return r;
}

EvalTrace make_trace(std::vector<EvalStepRow> rows, int episodes = 1) {
    EvalTrace t;
    t.rows = std::move(rows);
    t.episodes = episodes;
    t.steps_per_episode = kEpisodeSteps;
    return t;
}

}  // namespace

TEST_CASE("first oven check: interact at or above the target records outright") {
    // target 7: place, wander, then one interact at timer 9
    EvalTrace t = make_trace({
        make_row(0, 5, 0, Action::Interact, 0),  // placement
        make_row(0, 6, 0, Action::Wait),
        make_row(0, 7, 0, Action::Left),
        make_row(0, 14, 0, Action::Interact, 9),  // take at 9
        make_row(0, 15, 0, Action::Right),
        make_row(0, 16, 0, Action::Interact, std::nullopt, true),  // deliver
    });
    const auto checks = extract_first_oven_checks(t, 7);
    REQUIRE(checks.size() == 1);
    CHECK(checks[0].timer_value == 9);
    CHECK(checks[0].trial == 0);
    CHECK(checks[0].target == 7);
}

TEST_CASE("first oven check: early interact qualifies via consecutive checks until the take") {
    EvalTrace t = make_trace({
        make_row(0, 3, 0, Action::Interact, 0),
        make_row(0, 8, 0, Action::Interact, 5),
        make_row(0, 9, 0, Action::Interact, 6),
        make_row(0, 10, 0, Action::Interact, 7),  // take
    });
    const auto checks = extract_first_oven_checks(t, 7);
    REQUIRE(checks.size() == 1);
    CHECK(checks[0].timer_value == 5);
}

TEST_CASE("first oven check: a broken run is disqualified, a later check can qualify") {
    EvalTrace t = make_trace({
        make_row(0, 3, 0, Action::Interact, 0),
        make_row(0, 8, 0, Action::Interact, 5),
        make_row(0, 9, 0, Action::Up),            // breaks the run at timer 6
        make_row(0, 10, 0, Action::Interact, 7),  // qualifies outright
    });
    const auto checks = extract_first_oven_checks(t, 7);
    REQUIRE(checks.size() == 1);
    CHECK(checks[0].timer_value == 7);
}

TEST_CASE("first oven check: broken early run with no later take records nothing") {
    EvalTrace t = make_trace({
        make_row(0, 3, 0, Action::Interact, 0),
        make_row(0, 7, 0, Action::Interact, 4),
        make_row(0, 8, 0, Action::Interact, 5),
        make_row(0, 9, 0, Action::Wait),
        make_row(0, 10, 0, Action::Left),
    });
    CHECK(extract_first_oven_checks(t, 7).empty());
}

TEST_CASE("first oven check: truncation by episode end records nothing") {
    EvalTrace t = make_trace({
        make_row(0, 97, 0, Action::Interact, 0),
        make_row(0, 99, 0, Action::Interact, 2),
        make_row(0, 100, 0, Action::Interact, 3),  // episode ends mid-run
    });
    CHECK(extract_first_oven_checks(t, 7).empty());
}

TEST_CASE("first oven check: never interacting with a cooking oven records nothing") {
    EvalTrace t = make_trace({
        make_row(0, 3, 0, Action::Interact, 0),
        make_row(0, 4, 0, Action::Wait),
        make_row(0, 5, 0, Action::Up),
    });
    CHECK(extract_first_oven_checks(t, 7).empty());
}

TEST_CASE("first oven check: separate trials record separately, one each") {
    EvalTrace t = make_trace({
        make_row(0, 3, 0, Action::Interact, 0),
        make_row(0, 11, 0, Action::Interact, 8),
        make_row(0, 13, 0, Action::Interact, std::nullopt, true),
        make_row(0, 20, 1, Action::Interact, 0),
        make_row(0, 27, 1, Action::Interact, 7),
        make_row(0, 29, 1, Action::Interact, std::nullopt, true),
    });
    const auto checks = extract_first_oven_checks(t, 7);
    REQUIRE(checks.size() == 2);
    CHECK(checks[0].timer_value == 8);
    CHECK(checks[0].trial == 0);
    CHECK(checks[1].timer_value == 7);
    CHECK(checks[1].trial == 1);
    for (const auto& c : checks) CHECK(c.timer_value >= 1);
}

TEST_CASE("soup counting") {
    EvalTrace empty = make_trace({make_row(0, 1, 0, Action::Wait)});
    CHECK(soups_per_episode(empty).total == 0);
    CHECK(soups_per_episode(empty).mean == 0.0);

    EvalTrace t = make_trace(
        {
            make_row(0, 10, 0, Action::Interact, std::nullopt, true),
            make_row(0, 30, 1, Action::Interact, std::nullopt, true),
            make_row(0, 50, 2, Action::Interact, std::nullopt, true),
            make_row(1, 10, 0, Action::Interact, std::nullopt, true),
        },
        2);
    const SoupCounts counts = soups_per_episode(t);
    REQUIRE(counts.per_episode.size() == 2);
    CHECK(counts.per_episode[0] == 3);
    CHECK(counts.per_episode[1] == 1);
    CHECK(counts.total == 4);
    CHECK(counts.mean == doctest::Approx(2.0));

    // bookkeeping identity: totals equal the delivery rewards in the trace
    double delivery_reward = 0.0;
    for (const auto& r : t.rows)
        if (r.delivery) delivery_reward += r.reward;
    CHECK(counts.total == doctest::Approx(delivery_reward));
}

TEST_CASE("t-test: identical samples give t=0, p=1") {
    const std::vector<double> a = {1.0, 2.0, 3.0};
    const TTestResult r = t_test(a, a);
    CHECK(r.t == 0.0);
    CHECK(r.p_two_sided == doctest::Approx(1.0).epsilon(1e-12));

    // identical constant samples hit the zero-variance path
    const std::vector<double> c = {2.0, 2.0, 2.0};
    const TTestResult rc = t_test(c, c);
    CHECK(rc.t == 0.0);
    CHECK(rc.p_two_sided == 1.0);
    CHECK(!rc.degenerate);
}

TEST_CASE("t-test: worked example") {
    const std::vector<double> a = {1.0, 2.0, 3.0};
    const std::vector<double> b = {2.0, 4.0, 6.0};
    const TTestResult r = t_test(a, b, TTestMode::Pooled);
    CHECK(r.t == doctest::Approx(-1.549193338482967).epsilon(1e-12));
    CHECK(r.df == 4.0);
    CHECK(r.mean_a == doctest::Approx(2.0));
    CHECK(r.mean_b == doctest::Approx(4.0));
    // sign convention follows the mean difference
    CHECK((r.t < 0) == (r.mean_a < r.mean_b));
}

TEST_CASE("t-test: antisymmetry") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(3 + trial % 7), b(2 + trial % 5);
        for (auto& v : a) v = rng.uniform(0.0, 10.0);
        for (auto& v : b) v = rng.uniform(0.0, 10.0);
        for (const TTestMode mode : {TTestMode::Pooled, TTestMode::Welch}) {
            const TTestResult fwd = t_test(a, b, mode);
            const TTestResult rev = t_test(b, a, mode);
            CHECK(fwd.t == doctest::Approx(-rev.t).epsilon(1e-12).scale(1.0));
            CHECK(fwd.df == doctest::Approx(rev.df).epsilon(1e-12));
            CHECK(fwd.p_two_sided == doctest::Approx(rev.p_two_sided).epsilon(1e-12).scale(1.0));
        }
    }
}

TEST_CASE("t-test agrees with the direct-formula oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> a(2 + trial % 20), b(2 + (trial * 7) % 15);
        for (auto& v : a) v = rng.normal() * 3.0 + 1.0;
        for (auto& v : b) v = rng.normal() * 2.0;
        for (const bool welch : {false, true}) {
            double to, dfo;
            oracles::t_direct(a, b, welch, &to, &dfo);
            const TTestResult r = t_test(a, b, welch ? TTestMode::Welch : TTestMode::Pooled);
            CHECK(std::abs(r.t - to) < 1e-12 * std::max(1.0, std::abs(to)));
            CHECK(std::abs(r.df - dfo) < 1e-12 * std::max(1.0, dfo));
        }
    }
}

TEST_CASE("p-values match the quadrature reference") {
    CHECK(std::abs(t_two_sided_p(2.0, 10.0) - oracles::p_two_sided_reference(2.0, 10.0)) < 1e-9);
    // the frozen reference value for t=2.0, df=10
    CHECK(t_two_sided_p(2.0, 10.0) == doctest::Approx(0.07338803).epsilon(1e-6));
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const double t = rng.uniform(-6.0, 6.0);
        const double df = rng.uniform(1.0, 60.0);
        CHECK(std::abs(t_two_sided_p(t, df) - oracles::p_two_sided_reference(t, df)) < 1e-9);
    }
}

TEST_CASE("t-test degenerate and error handling") {
    CHECK_THROWS_AS(t_test({1.0}, {1.0, 2.0}), std::invalid_argument);
    const TTestResult r = t_test({1.0, 1.0}, {2.0, 2.0});
    CHECK(r.degenerate);
    CHECK(r.p_two_sided == 0.0);
    CHECK(r.t < 0);
}

TEST_CASE("compare_conditions on identical traces") {
    EvalTrace t = make_trace({
        make_row(0, 3, 0, Action::Interact, 0),
        make_row(0, 11, 0, Action::Interact, 8),
        make_row(0, 13, 0, Action::Interact, std::nullopt, true),
        make_row(0, 20, 1, Action::Interact, 0),
        make_row(0, 29, 1, Action::Interact, 9),
        make_row(0, 31, 1, Action::Interact, std::nullopt, true),
    });
    const ConditionReport rep = compare_conditions({&t}, {&t}, 7);
    CHECK(rep.mean_single == doctest::Approx(rep.mean_dual));
    CHECK(rep.soup_ratio == doctest::Approx(1.0));
    CHECK(rep.t == doctest::Approx(0.0).scale(1.0));
    CHECK(rep.p == doctest::Approx(1.0));
    CHECK(rep.enough_samples);
}

TEST_CASE("compare_conditions end to end on hand-built traces") {
    // single: checks 7, 7, 8 and 3 deliveries; dual: checks 9, 10 and 2 deliveries
    EvalTrace single = make_trace({
        make_row(0, 3, 0, Action::Interact, 0),
        make_row(0, 10, 0, Action::Interact, 7),
        make_row(0, 12, 0, Action::Interact, std::nullopt, true),
        make_row(0, 20, 1, Action::Interact, 0),
        make_row(0, 27, 1, Action::Interact, 7),
        make_row(0, 29, 1, Action::Interact, std::nullopt, true),
        make_row(0, 40, 2, Action::Interact, 0),
        make_row(0, 48, 2, Action::Interact, 8),
        make_row(0, 50, 2, Action::Interact, std::nullopt, true),
    });
    EvalTrace dual = make_trace({
        make_row(0, 3, 0, Action::Interact, 0),
        make_row(0, 12, 0, Action::Interact, 9),
        make_row(0, 14, 0, Action::Interact, std::nullopt, true),
        make_row(0, 25, 1, Action::Interact, 0),
        make_row(0, 35, 1, Action::Interact, 10),
        make_row(0, 37, 1, Action::Interact, std::nullopt, true),
    });
    const ConditionReport rep = compare_conditions({&single}, {&dual}, 7);
    CHECK(rep.n_single == 3);
    CHECK(rep.n_dual == 2);
    CHECK(rep.mean_single == doctest::Approx(22.0 / 3.0));
    CHECK(rep.mean_dual == doctest::Approx(9.5));
    CHECK(rep.soups_single == doctest::Approx(3.0));
    CHECK(rep.soups_dual == doctest::Approx(2.0));
    CHECK(rep.soup_ratio == doctest::Approx(2.0 / 3.0));
    double to, dfo;
    oracles::t_direct({9.0, 10.0}, {7.0, 7.0, 8.0}, false, &to, &dfo);
    CHECK(rep.t == doctest::Approx(to).epsilon(1e-12));
    CHECK(rep.df == doctest::Approx(dfo));
    CHECK(rep.t > 0);  // dual overproduces in this fixture
}

TEST_CASE("post hoc: every early check is followed by an unbroken run into the take") {
    // traces from a random policy in the real environment
    Env env(TaskKind::DualTN, 7);
    Rng actions(301);
    EvalTrace trace;
    trace.episodes = 40;
    trace.steps_per_episode = kEpisodeSteps;
    for (int ep = 0; ep < trace.episodes; ++ep) {
        env.reset(5000 + ep);
        int step = 0;
        while (!env.done()) {
            const Action a = static_cast<Action>(actions.uniform_int(0, 5));
            const StepResult r = env.step(a);
            step += 1;
            EvalStepRow row;
            row.episode = ep;
            row.step = step;
            row.trial = r.info.trial_index;
            row.action = a;
            row.oven_timer = r.info.oven_timer;
            row.number_value = r.info.number_value;
            row.reward = r.reward;
            row.delivery = r.info.delivery;
            row.correct_number = r.info.correct_number;
            trace.rows.push_back(row);
        }
    }
    const auto checks = extract_first_oven_checks(trace, 7);
    for (const auto& c : checks) {
        CHECK(c.timer_value >= 1);
        if (c.timer_value >= 7) continue;
        // locate the check row and walk the run
        std::size_t i = 0;
        while (i < trace.rows.size() &&
               !(trace.rows[i].episode == c.episode && trace.rows[i].trial == c.trial &&
                 trace.rows[i].action == Action::Interact && trace.rows[i].oven_timer &&
                 *trace.rows[i].oven_timer == c.timer_value))
            ++i;
        REQUIRE(i < trace.rows.size());
        int expect = c.timer_value;
        while (expect < 7) {
            REQUIRE(i + 1 < trace.rows.size());
            const auto& next = trace.rows[i + 1];
            REQUIRE(next.action == Action::Interact);
            REQUIRE(next.oven_timer);
            REQUIRE(*next.oven_timer == expect + 1);
            ++i;
            ++expect;
        }
    }
}

TEST_CASE("compare_conditions flags too-few samples instead of fabricating") {
    EvalTrace one_check = make_trace({
        make_row(0, 3, 0, Action::Interact, 0),
        make_row(0, 11, 0, Action::Interact, 8),
    });
    EvalTrace no_check = make_trace({make_row(0, 1, 0, Action::Wait)});
    const ConditionReport rep = compare_conditions({&one_check}, {&no_check}, 7);
    CHECK(!rep.enough_samples);
    CHECK(rep.n_single == 1);
    CHECK(rep.n_dual == 0);
}
