#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ovenlab/trace.hpp"

namespace ovenlab {

struct FirstOvenCheck {
    int episode = 0;
    int trial = 0;
    int timer_value = 0;  // >= 1
    int target = 0;
};

namespace detail {

// A trace row is an oven check iff its action was an interact directed at the
// cooking oven; such rows carry the timer the interact saw. The placement row
// also carries a timer (0) and is excluded by the >= 1 test.
inline bool is_oven_check(const EvalStepRow& r) {
    return r.action == Action::Interact && r.oven_timer && *r.oven_timer >= 1;
}

}  // namespace detail

// Per trial, the first qualifying check: an interact at timer v >= target
// counts outright (the soup comes out on that step); an interact at v < target
// counts only when every following step is also an oven interact until the
// soup is taken. A broken early run disqualifies only itself; scanning
// continues within the trial. Trials cut off by the episode end record
// nothing.
inline std::vector<FirstOvenCheck> extract_first_oven_checks(const EvalTrace& trace, int target) {
    std::vector<FirstOvenCheck> checks;
    const std::size_t n = trace.rows.size();
    std::size_t i = 0;
    while (i < n) {
        const EvalStepRow& row = trace.rows[i];
        if (!detail::is_oven_check(row)) {
            ++i;
            continue;
        }
        // gather the maximal run of consecutive-step checks within this trial
        std::size_t j = i;
        while (j + 1 < n && detail::is_oven_check(trace.rows[j + 1]) &&
               trace.rows[j + 1].episode == row.episode && trace.rows[j + 1].step == trace.rows[j].step + 1 &&
               trace.rows[j + 1].trial == row.trial)
            ++j;
        const int first_timer = *row.oven_timer;
        const int last_timer = *trace.rows[j].oven_timer;
        // a run that reaches the target ends in a take; earlier broken runs do not
        if (first_timer >= target || last_timer >= target) {
            const bool same_trial = !checks.empty() && checks.back().episode == row.episode &&
                                    checks.back().trial == row.trial;
            if (!same_trial) checks.push_back({row.episode, row.trial, first_timer, target});
        }
        i = j + 1;
    }
    return checks;
}

struct SoupCounts {
    std::vector<int> per_episode;
    double mean = 0.0;
    int total = 0;
};

inline SoupCounts soups_per_episode(const EvalTrace& trace) {
    SoupCounts out;
    out.per_episode.assign(std::max(trace.episodes, 1), 0);
    for (const auto& r : trace.rows)
        if (r.delivery) {
            if (r.episode >= static_cast<int>(out.per_episode.size()))
                out.per_episode.resize(r.episode + 1, 0);
            out.per_episode[r.episode] += 1;
            out.total += 1;
        }
    double s = 0.0;
    for (const int c : out.per_episode) s += c;
    out.mean = out.per_episode.empty() ? 0.0 : s / static_cast<double>(out.per_episode.size());
    return out;
}

// --- two-sample t-test ---

enum class TTestMode { Pooled, Welch };

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p_two_sided = 1.0;
    double mean_a = 0.0, mean_b = 0.0;
    std::size_t n_a = 0, n_b = 0;
    bool degenerate = false;  // zero variance on both sides with unequal means
};

namespace detail {

inline double mean_of(const std::vector<double>& x) {
    double s = 0.0;
    for (const double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double sample_var(const std::vector<double>& x, double mean) {
    double s = 0.0;
    for (const double v : x) s += (v - mean) * (v - mean);
    return s / static_cast<double>(x.size() - 1);
}

// Regularized incomplete beta I_x(a,b) by Lentz continued fraction.
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

// Two-sided p for the Student t distribution with `df` degrees of freedom.
inline double t_two_sided_p(double t, double df) {
    if (df <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    const double x = df / (df + t * t);
    return detail::incomplete_beta(df / 2.0, 0.5, x);
}

inline TTestResult t_test(const std::vector<double>& a, const std::vector<double>& b,
                          TTestMode mode = TTestMode::Pooled) {
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("t_test: need at least 2 samples per side");
    TTestResult r;
    r.n_a = a.size();
    r.n_b = b.size();
    r.mean_a = detail::mean_of(a);
    r.mean_b = detail::mean_of(b);
    const double va = detail::sample_var(a, r.mean_a);
    const double vb = detail::sample_var(b, r.mean_b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double diff = r.mean_a - r.mean_b;

    double se2;
    if (mode == TTestMode::Pooled) {
        const double sp2 = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
        se2 = sp2 * (1.0 / na + 1.0 / nb);
        r.df = na + nb - 2.0;
    } else {
        const double ta = va / na, tb = vb / nb;
        se2 = ta + tb;
        r.df = (se2 * se2) / (ta * ta / (na - 1.0) + tb * tb / (nb - 1.0));
        if (!std::isfinite(r.df)) r.df = na + nb - 2.0;
    }

    if (se2 <= 0.0) {
        if (diff == 0.0) {
            r.t = 0.0;
            r.p_two_sided = 1.0;
        } else {
            r.degenerate = true;
            r.t = diff > 0.0 ? std::numeric_limits<double>::infinity()
                             : -std::numeric_limits<double>::infinity();
            r.p_two_sided = 0.0;
        }
        return r;
    }
    r.t = diff / std::sqrt(se2);
    r.p_two_sided = t_two_sided_p(r.t, r.df);
    return r;
}

// --- per-duration condition comparison ---

struct ConditionReport {
    int target = 0;
    double mean_single = 0.0, mean_dual = 0.0;
    double t = 0.0, df = 0.0, p = 1.0;
    double soups_single = 0.0, soups_dual = 0.0;
    double soup_ratio = 0.0;  // dual / single
    std::size_t n_single = 0, n_dual = 0;
    bool enough_samples = false;  // >= 2 first-oven-check samples per side
    std::vector<FirstOvenCheck> checks_single, checks_dual;
};

inline ConditionReport compare_conditions(const std::vector<const EvalTrace*>& single_traces,
                                          const std::vector<const EvalTrace*>& dual_traces,
                                          int target, TTestMode mode = TTestMode::Pooled) {
    ConditionReport rep;
    rep.target = target;
    std::vector<double> a, b;
    for (const EvalTrace* t : single_traces) {
        auto checks = extract_first_oven_checks(*t, target);
        for (const auto& c : checks) a.push_back(c.timer_value);
        rep.checks_single.insert(rep.checks_single.end(), checks.begin(), checks.end());
        rep.soups_single += soups_per_episode(*t).mean;
    }
    for (const EvalTrace* t : dual_traces) {
        auto checks = extract_first_oven_checks(*t, target);
        for (const auto& c : checks) b.push_back(c.timer_value);
        rep.checks_dual.insert(rep.checks_dual.end(), checks.begin(), checks.end());
        rep.soups_dual += soups_per_episode(*t).mean;
    }
    if (!single_traces.empty()) rep.soups_single /= static_cast<double>(single_traces.size());
    if (!dual_traces.empty()) rep.soups_dual /= static_cast<double>(dual_traces.size());
    rep.soup_ratio = rep.soups_single > 0.0 ? rep.soups_dual / rep.soups_single : 0.0;
    rep.n_single = a.size();
    rep.n_dual = b.size();
    if (!a.empty()) rep.mean_single = detail::mean_of(a);
    if (!b.empty()) rep.mean_dual = detail::mean_of(b);
    rep.enough_samples = a.size() >= 2 && b.size() >= 2;
    if (rep.enough_samples) {
        // report the dual-vs-single contrast so t > 0 means overproduction
        const TTestResult tt = t_test(b, a, mode);
        rep.t = tt.t;
        rep.df = tt.df;
        rep.p = tt.p_two_sided;
    }
    return rep;
}

inline void write_first_oven_checks_csv(const std::vector<ConditionReport>& reports,
                                        const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "task,target,episode,trial,value\n";
    for (const auto& rep : reports) {
        for (const auto& c : rep.checks_single)
            f << "single," << rep.target << ',' << c.episode << ',' << c.trial << ',' << c.timer_value
              << '\n';
        for (const auto& c : rep.checks_dual)
            f << "dual," << rep.target << ',' << c.episode << ',' << c.trial << ',' << c.timer_value
              << '\n';
    }
}

inline void write_summary_csv(const std::vector<ConditionReport>& reports, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "target,mean_T,mean_TN,t,df,p,soups_T,soups_TN,ratio\n";
    char buf[320];
    for (const auto& r : reports) {
        if (r.enough_samples) {
            std::snprintf(buf, sizeof(buf), "%d,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", r.target,
                          r.mean_single, r.mean_dual, r.t, r.df, r.p, r.soups_single, r.soups_dual,
                          r.soup_ratio);
        } else {
            std::snprintf(buf, sizeof(buf), "%d,%.6g,%.6g,,,,%.6g,%.6g,%.6g\n", r.target,
                          r.mean_single, r.mean_dual, r.soups_single, r.soups_dual, r.soup_ratio);
        }
        f << buf;
    }
}

}  // namespace ovenlab
