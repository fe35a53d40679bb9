#pragma once

#include <cmath>
#include <vector>

#include "ovenlab/net.hpp"

namespace ovenlab {

// Scales all gradients so their global L2 norm does not exceed `max_norm`.
// Returns the pre-clip norm.
template <typename S>
inline S clip_global_norm(NetParams<S>& grads, S max_norm) {
    double sq = 0.0;
    for (const auto& a : grads.arrays())
        for (const S v : *a.data) sq += static_cast<double>(v) * static_cast<double>(v);
    const double norm = std::sqrt(sq);
    if (norm > static_cast<double>(max_norm) && norm > 0.0) {
        const S scale = static_cast<S>(static_cast<double>(max_norm) / norm);
        for (auto& a : grads.arrays())
            for (S& v : *a.data) v *= scale;
    }
    return static_cast<S>(norm);
}

template <typename S>
struct Adam {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;
    std::vector<S> m, v;

    explicit Adam(long param_count = 0) : m(param_count, S(0)), v(param_count, S(0)) {}

    // arithmetic stays in S, matching the rest of the training math
    void step(NetParams<S>& params, const NetParams<S>& grads) {
        t += 1;
        const S bc1 = S(1) - static_cast<S>(std::pow(beta1, static_cast<double>(t)));
        const S bc2 = S(1) - static_cast<S>(std::pow(beta2, static_cast<double>(t)));
        const S b1 = static_cast<S>(beta1), b2 = static_cast<S>(beta2);
        const S one_b1 = S(1) - b1, one_b2 = S(1) - b2;
        const S lr_s = static_cast<S>(lr), eps_s = static_cast<S>(eps);
        std::size_t k = 0;
        auto ps = params.arrays();
        auto gs = grads.arrays();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            std::vector<S>& pa = *ps[i].data;
            const std::vector<S>& ga = *gs[i].data;
            S* __restrict__ mp = m.data() + k;
            S* __restrict__ vp = v.data() + k;
            S* __restrict__ pp = pa.data();
            const S* __restrict__ gp = ga.data();
            const std::size_t sz = pa.size();
            for (std::size_t j = 0; j < sz; ++j) {
                const S g = gp[j];
                mp[j] = b1 * mp[j] + one_b1 * g;
                vp[j] = b2 * vp[j] + one_b2 * g * g;
                pp[j] -= lr_s * (mp[j] / bc1) / (std::sqrt(vp[j] / bc2) + eps_s);
            }
            k += sz;
        }
    }
};

}  // namespace ovenlab
