#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "ovenlab/env.hpp"
#include "ovenlab/rng.hpp"

namespace ovenlab {

// Architecture constants are runtime values so tests can instantiate
// miniature networks; the defaults are the experiment configuration:
// 1x1 conv (6 -> 32 channels) -> LSTM(480 -> 256) -> two 64-unit MLP heads.
struct NetArch {
    int in_channels = kObsChannels;
    int cells = kGridCells;
    int conv_channels = 32;
    int lstm_hidden = 256;
    int mlp_hidden = 64;
    int actions = kNumActions;

    int obs_size() const { return in_channels * cells; }
    int lstm_input() const { return conv_channels * cells; }

    long param_count() const {
        const long oc = conv_channels, ic = in_channels, h = lstm_hidden, m = mlp_hidden,
                   a = actions, x = lstm_input();
        return oc * ic + oc + 4 * h * x + 4 * h * h + 4 * h + (m * h + m + a * m + a) +
               (m * h + m + m + 1);
    }

    bool operator==(const NetArch&) const = default;
};

namespace detail {

// 16 independent accumulator lanes; the lane loop vectorizes and the fixed
// reduction order keeps results reproducible
template <typename S>
inline S dot(const S* __restrict__ a, const S* __restrict__ b, int n) {
    S acc[16] = {};
    int i = 0;
    for (; i + 16 <= n; i += 16)
        for (int k = 0; k < 16; ++k) acc[k] += a[i + k] * b[i + k];
    S tail = S(0);
    for (; i < n; ++i) tail += a[i] * b[i];
    const S s0 = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    const S s1 =
        ((acc[8] + acc[9]) + (acc[10] + acc[11])) + ((acc[12] + acc[13]) + (acc[14] + acc[15]));
    return s0 + s1 + tail;
}

// y += W x, W row-major [m x n]; four rows share each load of x
template <typename S>
inline void matvec_add(const S* __restrict__ w, const S* __restrict__ x, S* __restrict__ y, int m,
                       int n) {
    int r = 0;
    for (; r + 4 <= m; r += 4) {
        const S* __restrict__ w0 = w + static_cast<long>(r) * n;
        const S* __restrict__ w1 = w0 + n;
        const S* __restrict__ w2 = w1 + n;
        const S* __restrict__ w3 = w2 + n;
        S a0[16] = {}, a1[16] = {}, a2[16] = {}, a3[16] = {};
        int i = 0;
        for (; i + 16 <= n; i += 16) {
            for (int k = 0; k < 16; ++k) {
                const S xv = x[i + k];
                a0[k] += w0[i + k] * xv;
                a1[k] += w1[i + k] * xv;
                a2[k] += w2[i + k] * xv;
                a3[k] += w3[i + k] * xv;
            }
        }
        const auto reduce = [](const S* a) {
            const S s0 = ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]));
            const S s1 = ((a[8] + a[9]) + (a[10] + a[11])) + ((a[12] + a[13]) + (a[14] + a[15]));
            return s0 + s1;
        };
        S t0 = reduce(a0), t1 = reduce(a1), t2 = reduce(a2), t3 = reduce(a3);
        for (; i < n; ++i) {
            const S xv = x[i];
            t0 += w0[i] * xv;
            t1 += w1[i] * xv;
            t2 += w2[i] * xv;
            t3 += w3[i] * xv;
        }
        y[r] += t0;
        y[r + 1] += t1;
        y[r + 2] += t2;
        y[r + 3] += t3;
    }
    for (; r < m; ++r) y[r] += dot(w + static_cast<long>(r) * n, x, n);
}

// y += W^T d, W row-major [m x n], d [m], y [n]; four rows per pass over y
template <typename S>
inline void matvec_t_add(const S* __restrict__ w, const S* __restrict__ d, S* __restrict__ y,
                         int m, int n) {
    int r = 0;
    for (; r + 4 <= m; r += 4) {
        const S d0 = d[r], d1 = d[r + 1], d2 = d[r + 2], d3 = d[r + 3];
        if (d0 == S(0) && d1 == S(0) && d2 == S(0) && d3 == S(0)) continue;
        const S* __restrict__ w0 = w + static_cast<long>(r) * n;
        const S* __restrict__ w1 = w0 + n;
        const S* __restrict__ w2 = w1 + n;
        const S* __restrict__ w3 = w2 + n;
        for (int j = 0; j < n; ++j) y[j] += d0 * w0[j] + d1 * w1[j] + d2 * w2[j] + d3 * w3[j];
    }
    for (; r < m; ++r) {
        const S dr = d[r];
        if (dr == S(0)) continue;
        const S* __restrict__ row = w + static_cast<long>(r) * n;
        for (int j = 0; j < n; ++j) y[j] += dr * row[j];
    }
}

// G += d x^T, G row-major [m x n]
template <typename S>
inline void outer_add(S* __restrict__ g, const S* __restrict__ d, const S* __restrict__ x, int m,
                      int n) {
    for (int r = 0; r < m; ++r) {
        const S dr = d[r];
        if (dr == S(0)) continue;
        S* __restrict__ row = g + static_cast<long>(r) * n;
        for (int j = 0; j < n; ++j) row[j] += dr * x[j];
    }
}

// G += sum_t d_t x_t^T over a whole segment; each G row makes one pass while
// the step vectors stay cache-resident
template <typename S>
inline void outer_add_many(S* __restrict__ g, const S* __restrict__ ds, const S* __restrict__ xs,
                           int steps, int m, int n) {
    for (int r = 0; r < m; ++r) {
        S* __restrict__ row = g + static_cast<long>(r) * n;
        for (int t = 0; t < steps; ++t) {
            const S dr = ds[static_cast<long>(t) * m + r];
            if (dr == S(0)) continue;
            const S* __restrict__ x = xs + static_cast<long>(t) * n;
            for (int j = 0; j < n; ++j) row[j] += dr * x[j];
        }
    }
}

// Y_t += W^T d_t for a whole segment, one pass over W
template <typename S>
inline void matvec_t_add_many(const S* __restrict__ w, const S* __restrict__ ds, S* __restrict__ ys,
                              int steps, int m, int n) {
    for (int r = 0; r < m; ++r) {
        const S* __restrict__ row = w + static_cast<long>(r) * n;
        for (int t = 0; t < steps; ++t) {
            const S dr = ds[static_cast<long>(t) * m + r];
            if (dr == S(0)) continue;
            S* __restrict__ y = ys + static_cast<long>(t) * n;
            for (int j = 0; j < n; ++j) y[j] += dr * row[j];
        }
    }
}

// P_t += W x_t for a whole segment, one pass over W
template <typename S>
inline void matvec_add_many(const S* __restrict__ w, const S* __restrict__ xs, S* __restrict__ ps,
                            int steps, int m, int n) {
    for (int r = 0; r < m; ++r) {
        const S* __restrict__ row = w + static_cast<long>(r) * n;
        for (int t = 0; t < steps; ++t)
            ps[static_cast<long>(t) * m + r] += dot(row, xs + static_cast<long>(t) * n, n);
    }
}

template <typename S>
inline S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

}  // namespace detail

template <typename S>
struct HiddenState {
    std::vector<S> h, c;

    explicit HiddenState(int size = 0) : h(size, S(0)), c(size, S(0)) {}
    void zero() {
        std::fill(h.begin(), h.end(), S(0));
        std::fill(c.begin(), c.end(), S(0));
    }
};

template <typename S>
struct NetParams {
    NetArch arch;
    std::vector<S> conv_w, conv_b;            // [oc x ic], [oc]
    std::vector<S> lstm_wx, lstm_wh, lstm_b;  // gate order i|f|g|o
    std::vector<S> pol_w1, pol_b1, pol_w2, pol_b2;
    std::vector<S> val_w1, val_b1, val_w2, val_b2;

    explicit NetParams(NetArch a = {}) : arch(a) {
        const int oc = a.conv_channels, ic = a.in_channels, h = a.lstm_hidden, m = a.mlp_hidden,
                  act = a.actions, x = a.lstm_input();
        conv_w.assign(static_cast<std::size_t>(oc) * ic, S(0));
        conv_b.assign(oc, S(0));
        lstm_wx.assign(static_cast<std::size_t>(4) * h * x, S(0));
        lstm_wh.assign(static_cast<std::size_t>(4) * h * h, S(0));
        lstm_b.assign(static_cast<std::size_t>(4) * h, S(0));
        pol_w1.assign(static_cast<std::size_t>(m) * h, S(0));
        pol_b1.assign(m, S(0));
        pol_w2.assign(static_cast<std::size_t>(act) * m, S(0));
        pol_b2.assign(act, S(0));
        val_w1.assign(static_cast<std::size_t>(m) * h, S(0));
        val_b1.assign(m, S(0));
        val_w2.assign(m, S(0));
        val_b2.assign(1, S(0));
    }

    struct ArrayRef {
        std::string_view name;
        std::vector<S>* data;
    };
    struct ConstArrayRef {
        std::string_view name;
        const std::vector<S>* data;
    };

    // Fixed order; also the checkpoint serialization order.
    std::vector<ArrayRef> arrays() {
        return {{"conv_w", &conv_w}, {"conv_b", &conv_b}, {"lstm_wx", &lstm_wx},
                {"lstm_wh", &lstm_wh}, {"lstm_b", &lstm_b}, {"pol_w1", &pol_w1},
                {"pol_b1", &pol_b1}, {"pol_w2", &pol_w2}, {"pol_b2", &pol_b2},
                {"val_w1", &val_w1}, {"val_b1", &val_b1}, {"val_w2", &val_w2},
                {"val_b2", &val_b2}};
    }
    std::vector<ConstArrayRef> arrays() const {
        return {{"conv_w", &conv_w}, {"conv_b", &conv_b}, {"lstm_wx", &lstm_wx},
                {"lstm_wh", &lstm_wh}, {"lstm_b", &lstm_b}, {"pol_w1", &pol_w1},
                {"pol_b1", &pol_b1}, {"pol_w2", &pol_w2}, {"pol_b2", &pol_b2},
                {"val_w1", &val_w1}, {"val_b1", &val_b1}, {"val_w2", &val_w2},
                {"val_b2", &val_b2}};
    }

    void fill_zero() {
        for (auto& a : arrays()) std::fill(a.data->begin(), a.data->end(), S(0));
    }

    template <typename T>
    NetParams<T> cast() const {
        NetParams<T> out(arch);
        auto src = arrays();
        auto dst = out.arrays();
        for (std::size_t i = 0; i < src.size(); ++i)
            for (std::size_t j = 0; j < src[i].data->size(); ++j)
                (*dst[i].data)[j] = static_cast<T>((*src[i].data)[j]);
        return out;
    }
};

// Everything the backward pass needs from one forward step.
template <typename S>
struct StepTape {
    std::vector<S> obs;
    std::vector<S> conv_out;  // post-ReLU LSTM input
    std::vector<S> h_prev, c_prev;
    std::vector<S> gi, gf, gg, go;
    std::vector<S> c_new, tanh_c, h_new;
    std::vector<S> pol_hid, val_hid;
    std::vector<S> logits;
    S value = S(0);
    bool reset_before = false;  // hidden state was zeroed before this step

    void resize(const NetArch& a) {
        obs.resize(a.obs_size());
        conv_out.resize(a.lstm_input());
        h_prev.resize(a.lstm_hidden);
        c_prev.resize(a.lstm_hidden);
        gi.resize(a.lstm_hidden);
        gf.resize(a.lstm_hidden);
        gg.resize(a.lstm_hidden);
        go.resize(a.lstm_hidden);
        c_new.resize(a.lstm_hidden);
        tanh_c.resize(a.lstm_hidden);
        h_new.resize(a.lstm_hidden);
        pol_hid.resize(a.mlp_hidden);
        val_hid.resize(a.mlp_hidden);
        logits.resize(a.actions);
    }
};

template <typename S>
struct ForwardOut {
    std::vector<S> logits;
    S value = S(0);
};

// 1x1 conv + ReLU; observation layout is channel-major [ch][cell]. Rejects
// non-finite input.
template <typename S>
inline void conv_forward(const NetParams<S>& p, std::span<const S> obs, S* x_out) {
    const NetArch& a = p.arch;
    if (static_cast<int>(obs.size()) != a.obs_size())
        throw std::invalid_argument("forward: observation size mismatch");
    for (const S v : obs)
        if (!std::isfinite(static_cast<double>(v)))
            throw std::invalid_argument("forward: non-finite observation");
    const int cells = a.cells, ic = a.in_channels, oc = a.conv_channels;
    for (int o = 0; o < oc; ++o) {
        for (int cell = 0; cell < cells; ++cell) {
            S pre = p.conv_b[o];
            for (int i = 0; i < ic; ++i) pre += p.conv_w[o * ic + i] * obs[i * cells + cell];
            x_out[o * cells + cell] = pre > S(0) ? pre : S(0);
        }
    }
}

// LSTM cell + heads given the conv output and the input-side gate
// preactivation (lstm_b + Wx x). `hidden` is updated in place; when `tape` is
// non-null all intermediates for backward_sequence are recorded.
template <typename S>
inline ForwardOut<S> forward_cell(const NetParams<S>& p, std::span<const S> obs, const S* conv_out,
                                  const S* input_preact, HiddenState<S>& hidden,
                                  StepTape<S>* tape = nullptr) {
    const NetArch& a = p.arch;
    const int h = a.lstm_hidden, m = a.mlp_hidden, act = a.actions, x = a.lstm_input();

    if (tape) {
        tape->resize(a);
        std::copy(obs.begin(), obs.end(), tape->obs.begin());
        std::copy(conv_out, conv_out + x, tape->conv_out.begin());
        tape->h_prev = hidden.h;
        tape->c_prev = hidden.c;
    }

    // gate order i|f|g|o
    std::vector<S> pre(input_preact, input_preact + 4 * h);
    detail::matvec_add(p.lstm_wh.data(), hidden.h.data(), pre.data(), 4 * h, h);
    std::vector<S> gi(h), gf(h), gg(h), go(h), c_new(h), tanh_c(h);
    for (int j = 0; j < h; ++j) {
        gi[j] = detail::sigmoid(pre[j]);
        gf[j] = detail::sigmoid(pre[h + j]);
        gg[j] = std::tanh(pre[2 * h + j]);
        go[j] = detail::sigmoid(pre[3 * h + j]);
        c_new[j] = gf[j] * hidden.c[j] + gi[j] * gg[j];
        tanh_c[j] = std::tanh(c_new[j]);
        hidden.h[j] = go[j] * tanh_c[j];
    }
    hidden.c = c_new;

    ForwardOut<S> out;
    out.logits.assign(act, S(0));
    std::vector<S> ph(p.pol_b1), vh(p.val_b1);
    detail::matvec_add(p.pol_w1.data(), hidden.h.data(), ph.data(), m, h);
    detail::matvec_add(p.val_w1.data(), hidden.h.data(), vh.data(), m, h);
    for (int j = 0; j < m; ++j) {
        ph[j] = std::tanh(ph[j]);
        vh[j] = std::tanh(vh[j]);
    }
    for (int j = 0; j < act; ++j)
        out.logits[j] = p.pol_b2[j] + detail::dot(p.pol_w2.data() + j * m, ph.data(), m);
    out.value = p.val_b2[0] + detail::dot(p.val_w2.data(), vh.data(), m);

    if (tape) {
        tape->gi = std::move(gi);
        tape->gf = std::move(gf);
        tape->gg = std::move(gg);
        tape->go = std::move(go);
        tape->c_new = hidden.c;
        tape->tanh_c = std::move(tanh_c);
        tape->h_new = hidden.h;
        tape->pol_hid = std::move(ph);
        tape->val_hid = std::move(vh);
        tape->logits = out.logits;
        tape->value = out.value;
    }
    return out;
}

// One forward step. `hidden` is updated in place; when `tape` is non-null all
// intermediates are recorded for backward_sequence.
template <typename S>
inline ForwardOut<S> forward(const NetParams<S>& p, std::span<const S> obs, HiddenState<S>& hidden,
                             StepTape<S>* tape = nullptr) {
    const NetArch& a = p.arch;
    std::vector<S> conv(static_cast<std::size_t>(a.lstm_input()));
    conv_forward(p, obs, conv.data());
    std::vector<S> pre(p.lstm_b);
    detail::matvec_add(p.lstm_wx.data(), conv.data(), pre.data(), 4 * a.lstm_hidden,
                       a.lstm_input());
    return forward_cell(p, obs, conv.data(), pre.data(), hidden, tape);
}

// Backpropagation through time over a recorded segment. `dlogits[t]` and
// `dvalue[t]` are the loss gradients at step t. Gradients accumulate into
// `grads`; recurrent gradients stop at the segment start and are zeroed
// across episode resets (tape[t].reset_before).
//
// The time-sequential pass only propagates activation gradients; the large
// weight-gradient accumulations are batched over the whole segment afterwards
// so each gradient matrix is walked once.
template <typename S>
inline void backward_sequence(const NetParams<S>& p, const std::vector<StepTape<S>>& tape,
                              const std::vector<std::vector<S>>& dlogits,
                              const std::vector<S>& dvalue, NetParams<S>& grads) {
    const NetArch& a = p.arch;
    if (grads.arch != a) throw std::invalid_argument("backward_sequence: grads/params mismatch");
    if (tape.size() != dlogits.size() || tape.size() != dvalue.size())
        throw std::invalid_argument("backward_sequence: tape/grads length mismatch");
    const int cells = a.cells, ic = a.in_channels, oc = a.conv_channels, h = a.lstm_hidden,
              m = a.mlp_hidden, act = a.actions, x = a.lstm_input();
    const int T = static_cast<int>(tape.size());

    std::vector<S> dh_carry(h, S(0)), dc_carry(h, S(0));
    std::vector<S> dh(h), dc(h);
    std::vector<S> dz_all(static_cast<std::size_t>(T) * 4 * h, S(0));
    std::vector<S> dph_all(static_cast<std::size_t>(T) * m, S(0));
    std::vector<S> dvh_all(static_cast<std::size_t>(T) * m, S(0));

    for (int t = T - 1; t >= 0; --t) {
        const StepTape<S>& s = tape[t];
        dh = dh_carry;
        dc = dc_carry;
        S* dph = dph_all.data() + static_cast<std::size_t>(t) * m;
        S* dvh = dvh_all.data() + static_cast<std::size_t>(t) * m;
        S* dz = dz_all.data() + static_cast<std::size_t>(t) * 4 * h;

        // value head
        const S dv = dvalue[t];
        if (dv != S(0)) {
            for (int j = 0; j < m; ++j)
                dvh[j] = dv * p.val_w2[j] * (S(1) - s.val_hid[j] * s.val_hid[j]);
            detail::matvec_t_add(p.val_w1.data(), dvh, dh.data(), m, h);
        }

        // policy head
        const std::vector<S>& dl = dlogits[t];
        detail::matvec_t_add(p.pol_w2.data(), dl.data(), dph, act, m);
        for (int j = 0; j < m; ++j) dph[j] *= (S(1) - s.pol_hid[j] * s.pol_hid[j]);
        detail::matvec_t_add(p.pol_w1.data(), dph, dh.data(), m, h);

        // LSTM cell
        for (int j = 0; j < h; ++j) {
            const S dtc = dh[j] * s.go[j];
            const S dct = dc[j] + dtc * (S(1) - s.tanh_c[j] * s.tanh_c[j]);
            const S dgo = dh[j] * s.tanh_c[j];
            const S dgf = dct * s.c_prev[j];
            const S dgi = dct * s.gg[j];
            const S dgg = dct * s.gi[j];
            dc[j] = dct * s.gf[j];  // becomes dc_prev
            dz[j] = dgi * s.gi[j] * (S(1) - s.gi[j]);
            dz[h + j] = dgf * s.gf[j] * (S(1) - s.gf[j]);
            dz[2 * h + j] = dgg * (S(1) - s.gg[j] * s.gg[j]);
            dz[3 * h + j] = dgo * s.go[j] * (S(1) - s.go[j]);
        }
        std::fill(dh_carry.begin(), dh_carry.end(), S(0));
        detail::matvec_t_add(p.lstm_wh.data(), dz, dh_carry.data(), 4 * h, h);
        dc_carry = dc;

        if (s.reset_before) {
            std::fill(dh_carry.begin(), dh_carry.end(), S(0));
            std::fill(dc_carry.begin(), dc_carry.end(), S(0));
        }
    }

    // batched weight gradients: contiguous step vectors for the big matrices
    std::vector<S> conv_all(static_cast<std::size_t>(T) * x), hprev_all(static_cast<std::size_t>(T) * h),
        hnew_all(static_cast<std::size_t>(T) * h);
    for (int t = 0; t < T; ++t) {
        std::copy(tape[t].conv_out.begin(), tape[t].conv_out.end(),
                  conv_all.begin() + static_cast<std::size_t>(t) * x);
        std::copy(tape[t].h_prev.begin(), tape[t].h_prev.end(),
                  hprev_all.begin() + static_cast<std::size_t>(t) * h);
        std::copy(tape[t].h_new.begin(), tape[t].h_new.end(),
                  hnew_all.begin() + static_cast<std::size_t>(t) * h);
    }

    detail::outer_add_many(grads.lstm_wx.data(), dz_all.data(), conv_all.data(), T, 4 * h, x);
    detail::outer_add_many(grads.lstm_wh.data(), dz_all.data(), hprev_all.data(), T, 4 * h, h);
    detail::outer_add_many(grads.pol_w1.data(), dph_all.data(), hnew_all.data(), T, m, h);
    detail::outer_add_many(grads.val_w1.data(), dvh_all.data(), hnew_all.data(), T, m, h);
    for (int t = 0; t < T; ++t) {
        const StepTape<S>& s = tape[t];
        const S* dz = dz_all.data() + static_cast<std::size_t>(t) * 4 * h;
        const S* dph = dph_all.data() + static_cast<std::size_t>(t) * m;
        const S* dvh = dvh_all.data() + static_cast<std::size_t>(t) * m;
        for (int j = 0; j < 4 * h; ++j) grads.lstm_b[j] += dz[j];
        for (int j = 0; j < m; ++j) grads.pol_b1[j] += dph[j];
        for (int j = 0; j < m; ++j) grads.val_b1[j] += dvh[j];
        detail::outer_add(grads.pol_w2.data(), dlogits[t].data(), s.pol_hid.data(), act, m);
        for (int j = 0; j < act; ++j) grads.pol_b2[j] += dlogits[t][j];
        const S dv = dvalue[t];
        if (dv != S(0)) {
            for (int j = 0; j < m; ++j) grads.val_w2[j] += dv * s.val_hid[j];
            grads.val_b2[0] += dv;
        }
    }

    // conv gradients through the ReLU masks; the input gets no gradient
    std::vector<S> dx_all(static_cast<std::size_t>(T) * x, S(0));
    detail::matvec_t_add_many(p.lstm_wx.data(), dz_all.data(), dx_all.data(), T, 4 * h, x);
    for (int t = 0; t < T; ++t) {
        const StepTape<S>& s = tape[t];
        const S* dx = dx_all.data() + static_cast<std::size_t>(t) * x;
        for (int o = 0; o < oc; ++o) {
            S db = S(0);
            for (int cell = 0; cell < cells; ++cell) {
                const int idx = o * cells + cell;
                if (s.conv_out[idx] <= S(0)) continue;
                const S dpre = dx[idx];
                db += dpre;
                for (int i = 0; i < ic; ++i)
                    grads.conv_w[o * ic + i] += dpre * s.obs[i * cells + cell];
            }
            grads.conv_b[o] += db;
        }
    }
}

// --- categorical policy utilities ---

template <typename S>
inline void softmax(std::span<const S> logits, std::span<S> probs) {
    S mx = logits[0];
    for (const S v : logits)
        if (v > mx) mx = v;
    S sum = S(0);
    for (std::size_t j = 0; j < logits.size(); ++j) {
        probs[j] = std::exp(logits[j] - mx);
        sum += probs[j];
    }
    for (std::size_t j = 0; j < logits.size(); ++j) probs[j] /= sum;
}

template <typename S>
inline S log_sum_exp(std::span<const S> logits) {
    S mx = logits[0];
    for (const S v : logits)
        if (v > mx) mx = v;
    S sum = S(0);
    for (const S v : logits) sum += std::exp(v - mx);
    return mx + std::log(sum);
}

template <typename S>
inline std::pair<int, S> sample_action(std::span<const S> logits, Rng& rng) {
    const int n = static_cast<int>(logits.size());
    std::vector<S> probs(n);
    softmax(logits, std::span<S>(probs));
    const double u = rng.uniform();
    double acc = 0.0;
    int action = n - 1;
    for (int j = 0; j < n; ++j) {
        acc += static_cast<double>(probs[j]);
        if (u < acc) {
            action = j;
            break;
        }
    }
    const S logp = logits[action] - log_sum_exp(logits);
    return {action, logp};
}

template <typename S>
struct ActionEval {
    S log_prob;
    S entropy;
};

template <typename S>
inline ActionEval<S> evaluate_actions(std::span<const S> logits, int action) {
    const S lse = log_sum_exp(logits);
    S entropy = S(0);
    for (const S z : logits) {
        const S logp = z - lse;
        entropy -= std::exp(logp) * logp;
    }
    return {logits[action] - lse, entropy};
}

// --- initialization ---

namespace detail {

// Semi-orthogonal matrix [rows x cols] scaled by `gain`; modified Gram-Schmidt
// on the tall orientation, computed in double.
inline std::vector<double> orthogonal(int rows, int cols, double gain, Rng& rng) {
    const int tall = std::max(rows, cols), narrow = std::min(rows, cols);
    std::vector<double> a(static_cast<std::size_t>(tall) * narrow);
    for (auto& v : a) v = rng.normal();
    auto col = [&](int j) { return a.data() + static_cast<std::size_t>(j) * tall; };
    for (int j = 0; j < narrow; ++j) {
        for (int pass = 0; pass < 2; ++pass) {
            for (int k = 0; k < j; ++k) {
                const double r = dot(col(k), col(j), tall);
                for (int i = 0; i < tall; ++i) col(j)[i] -= r * col(k)[i];
            }
        }
        const double nrm = std::sqrt(dot(col(j), col(j), tall));
        for (int i = 0; i < tall; ++i) col(j)[i] /= nrm;
    }
    std::vector<double> w(static_cast<std::size_t>(rows) * cols);
    if (rows >= cols) {
        // columns of a are orthonormal; a is stored column-major [tall x narrow]
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) w[static_cast<std::size_t>(r) * cols + c] = gain * col(c)[r];
    } else {
        // W = A^T: orthonormal rows
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) w[static_cast<std::size_t>(r) * cols + c] = gain * col(r)[c];
    }
    return w;
}

template <typename S>
inline void assign(std::vector<S>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<S>(src[i]);
}

}  // namespace detail

// Orthogonal initialization: gain sqrt(2) for the conv and MLP trunks, 0.01
// for the policy head, 1.0 for the value head; LSTM blocks orthogonal per
// gate with zero biases except the forget gate bias at +1.
template <typename S>
inline NetParams<S> init_params(NetArch arch, std::uint64_t seed) {
    NetParams<S> p(arch);
    Rng rng(seed);
    const int oc = arch.conv_channels, ic = arch.in_channels, h = arch.lstm_hidden,
              m = arch.mlp_hidden, act = arch.actions, x = arch.lstm_input();
    const double root2 = std::sqrt(2.0);

    detail::assign(p.conv_w, detail::orthogonal(oc, ic, root2, rng));

    std::vector<double> wx(static_cast<std::size_t>(4) * h * x), wh(static_cast<std::size_t>(4) * h * h);
    for (int gate = 0; gate < 4; ++gate) {
        const auto bx = detail::orthogonal(h, x, 1.0, rng);
        const auto bh = detail::orthogonal(h, h, 1.0, rng);
        std::copy(bx.begin(), bx.end(), wx.begin() + static_cast<std::size_t>(gate) * h * x);
        std::copy(bh.begin(), bh.end(), wh.begin() + static_cast<std::size_t>(gate) * h * h);
    }
    detail::assign(p.lstm_wx, wx);
    detail::assign(p.lstm_wh, wh);
    for (int j = 0; j < h; ++j) p.lstm_b[h + j] = S(1);  // forget gate

    detail::assign(p.pol_w1, detail::orthogonal(m, h, root2, rng));
    detail::assign(p.pol_w2, detail::orthogonal(act, m, 0.01, rng));
    detail::assign(p.val_w1, detail::orthogonal(m, h, root2, rng));
    detail::assign(p.val_w2, detail::orthogonal(1, m, 1.0, rng));
    return p;
}

}  // namespace ovenlab
