#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ovenlab/trace.hpp"

namespace ovenlab {

// --- principal component analysis ---

struct PcaResult {
    int n_samples = 0;
    int n_features = 0;
    int k = 0;
    std::vector<double> components;  // [k x n_features], orthonormal rows
    std::vector<double> scores;      // [n_samples x k]
    std::vector<double> explained_variance_ratio;
    std::vector<double> singular_values;
    std::vector<double> column_means;
    bool degenerate = false;  // zero total variance

    const double* component(int j) const { return components.data() + static_cast<std::size_t>(j) * n_features; }
};

// SVD of the column-centered data matrix by one-sided Jacobi rotations.
// Components are the right singular vectors; each is sign-fixed so its
// largest-magnitude entry is positive.
inline PcaResult pca(const std::vector<double>& matrix, int n_samples, int n_features, int k) {
    if (n_samples < 1 || n_features < 1 ||
        matrix.size() != static_cast<std::size_t>(n_samples) * n_features)
        throw std::invalid_argument("pca: bad matrix shape");
    if (k < 1 || k > std::min(n_samples, n_features))
        throw std::invalid_argument("pca: k out of range");

    PcaResult out;
    out.n_samples = n_samples;
    out.n_features = n_features;
    out.k = k;
    out.column_means.assign(n_features, 0.0);

    // column-major working copy of the centered matrix
    std::vector<double> a(static_cast<std::size_t>(n_samples) * n_features);
    for (int j = 0; j < n_features; ++j) {
        double m = 0.0;
        for (int i = 0; i < n_samples; ++i) m += matrix[static_cast<std::size_t>(i) * n_features + j];
        m /= n_samples;
        out.column_means[j] = m;
        for (int i = 0; i < n_samples; ++i)
            a[static_cast<std::size_t>(j) * n_samples + i] =
                matrix[static_cast<std::size_t>(i) * n_features + j] - m;
    }
    auto col = [&](int j) { return a.data() + static_cast<std::size_t>(j) * n_samples; };

    std::vector<double> v(static_cast<std::size_t>(n_features) * n_features, 0.0);
    for (int j = 0; j < n_features; ++j) v[static_cast<std::size_t>(j) * n_features + j] = 1.0;
    auto vcol = [&](int j) { return v.data() + static_cast<std::size_t>(j) * n_features; };

    constexpr double kTol = 1e-14;
    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < n_features - 1; ++p) {
            for (int q = p + 1; q < n_features; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                const double* cp = col(p);
                const double* cq = col(q);
                for (int i = 0; i < n_samples; ++i) {
                    app += cp[i] * cp[i];
                    aqq += cq[i] * cq[i];
                    apq += cp[i] * cq[i];
                }
                if (std::abs(apq) <= kTol * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                double* mp = col(p);
                double* mq = col(q);
                for (int i = 0; i < n_samples; ++i) {
                    const double tp = mp[i];
                    mp[i] = c * tp - s * mq[i];
                    mq[i] = s * tp + c * mq[i];
                }
                double* vp = vcol(p);
                double* vq = vcol(q);
                for (int i = 0; i < n_features; ++i) {
                    const double tp = vp[i];
                    vp[i] = c * tp - s * vq[i];
                    vq[i] = s * tp + c * vq[i];
                }
            }
        }
        if (!rotated) break;
    }

    // singular values and descending order
    std::vector<double> sigma(n_features);
    for (int j = 0; j < n_features; ++j) {
        double s = 0.0;
        const double* cj = col(j);
        for (int i = 0; i < n_samples; ++i) s += cj[i] * cj[i];
        sigma[j] = std::sqrt(s);
    }
    std::vector<int> idx(n_features);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) { return sigma[x] > sigma[y]; });

    const double denom = n_samples > 1 ? static_cast<double>(n_samples - 1) : 1.0;
    double total_var = 0.0;
    for (int j = 0; j < n_features; ++j) total_var += sigma[j] * sigma[j] / denom;
    out.degenerate = total_var <= 0.0;

    out.components.assign(static_cast<std::size_t>(k) * n_features, 0.0);
    out.scores.assign(static_cast<std::size_t>(n_samples) * k, 0.0);
    out.explained_variance_ratio.assign(k, 0.0);
    out.singular_values.assign(k, 0.0);
    for (int r = 0; r < k; ++r) {
        const int j = idx[r];
        out.singular_values[r] = sigma[j];
        if (!out.degenerate)
            out.explained_variance_ratio[r] = (sigma[j] * sigma[j] / denom) / total_var;
        // sign convention: largest-magnitude component entry positive
        const double* vj = vcol(j);
        int arg = 0;
        for (int i = 1; i < n_features; ++i)
            if (std::abs(vj[i]) > std::abs(vj[arg])) arg = i;
        const double flip = vj[arg] < 0.0 ? -1.0 : 1.0;
        for (int i = 0; i < n_features; ++i)
            out.components[static_cast<std::size_t>(r) * n_features + i] = flip * vj[i];
        const double* cj = col(j);
        for (int i = 0; i < n_samples; ++i)
            out.scores[static_cast<std::size_t>(i) * k + r] = flip * cj[i];
    }
    return out;
}

// --- discrete Fourier transform ---

namespace detail {

inline constexpr double kPi = 3.14159265358979323846;

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// iterative radix-2 Cooley-Tukey, in place; n must be a power of two
inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (!is_pow2(n)) throw std::invalid_argument("fft_radix2: size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> t = a[i + j + len / 2] * w;
                a[i + j] = u + t;
                a[i + j + len / 2] = u - t;
                w *= wlen;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= static_cast<double>(n);
}

}  // namespace detail

// Full complex DFT of a real series of arbitrary length: radix-2 directly for
// powers of two, otherwise Bluestein's chirp-z reduction to a padded radix-2
// convolution.
inline std::vector<std::complex<double>> dft_complex(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n == 0) return {};
    if (detail::is_pow2(n)) {
        std::vector<std::complex<double>> a(n);
        for (std::size_t i = 0; i < n; ++i) a[i] = {x[i], 0.0};
        detail::fft_radix2(a, false);
        return a;
    }
    // chirp: w[t] = exp(-i pi t^2 / n)
    std::vector<std::complex<double>> chirp(n);
    for (std::size_t t = 0; t < n; ++t) {
        // reduce t^2 mod 2n to keep the angle well conditioned
        const std::size_t t2 = (t * t) % (2 * n);
        const double ang = -detail::kPi * static_cast<double>(t2) / static_cast<double>(n);
        chirp[t] = {std::cos(ang), std::sin(ang)};
    }
    std::size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;
    std::vector<std::complex<double>> fa(m, {0.0, 0.0}), fb(m, {0.0, 0.0});
    for (std::size_t t = 0; t < n; ++t) fa[t] = x[t] * chirp[t];
    for (std::size_t t = 0; t < n; ++t) {
        const std::complex<double> b = std::conj(chirp[t]);
        fb[t] = b;
        if (t != 0) fb[m - t] = b;
    }
    detail::fft_radix2(fa, false);
    detail::fft_radix2(fb, false);
    for (std::size_t i = 0; i < m; ++i) fa[i] *= fb[i];
    detail::fft_radix2(fa, true);
    std::vector<std::complex<double>> out(n);
    for (std::size_t j = 0; j < n; ++j) out[j] = fa[j] * chirp[j];
    return out;
}

// Magnitude spectrum of a real series at bins 0..floor(N/2); the frequency of
// bin j is j/N cycles per step.
struct Spectrum {
    std::vector<double> frequencies;
    std::vector<double> magnitudes;
    double target_frequency = 0.0;  // 1 / target duration, set by the caller
    int target_bin = -1;
};

inline Spectrum dft_magnitude(const std::vector<double>& x) {
    if (x.size() < 2) throw std::invalid_argument("dft_magnitude: need at least 2 samples");
    const std::size_t n = x.size();
    const auto full = dft_complex(x);
    Spectrum s;
    const std::size_t bins = n / 2 + 1;
    s.frequencies.resize(bins);
    s.magnitudes.resize(bins);
    for (std::size_t j = 0; j < bins; ++j) {
        s.frequencies[j] = static_cast<double>(j) / static_cast<double>(n);
        s.magnitudes[j] = std::abs(full[j]);
    }
    return s;
}

// --- spectral report over an evaluation trace ---

struct SpectralReport {
    int target = 0;
    int episode = 0;
    Spectrum pc1_spectrum;
    std::vector<int> top_peaks;        // up to 3 non-DC bins, largest magnitude first
    bool flat = false;                 // no peak above 3x the non-DC median
    std::vector<double> pc_scores;     // [steps x 3]
    std::vector<std::uint8_t> delivery;  // per step
    double jump_ratio = 0.0;  // mean |dPC1| at delivery transitions / elsewhere
    bool jump_ratio_valid = false;
    PcaResult pca_result;
};

namespace detail {

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double hi = v[mid];
    if (v.size() % 2 == 0) {
        const double lo = *std::max_element(v.begin(), v.begin() + mid);
        return (lo + hi) / 2.0;
    }
    return hi;
}

}  // namespace detail

// Builds the hidden-state matrix from the first `steps` rows of one episode,
// runs a k=3 PCA and the PC1 spectrum with the 1/target marker.
inline SpectralReport spectral_report(const EvalTrace& trace, int target, int episode = 0,
                                      int steps = kEpisodeSteps) {
    if (trace.hidden_size <= 0 || trace.hidden.empty())
        throw std::invalid_argument("spectral_report: trace has no hidden states");
    if (episode < 0 || episode >= trace.episodes)
        throw std::invalid_argument("spectral_report: episode out of range");
    const int h = trace.hidden_size;
    steps = std::min(steps, trace.steps_per_episode);

    SpectralReport rep;
    rep.target = target;
    rep.episode = episode;
    std::vector<double> mat(static_cast<std::size_t>(steps) * h);
    const std::size_t base = static_cast<std::size_t>(episode) * trace.steps_per_episode;
    for (int t = 0; t < steps; ++t) {
        const float* row = trace.hidden_row(base + t);
        for (int j = 0; j < h; ++j) mat[static_cast<std::size_t>(t) * h + j] = row[j];
    }
    const int k = std::min(3, std::min(steps, h));
    rep.pca_result = pca(mat, steps, h, k);

    rep.pc_scores.assign(static_cast<std::size_t>(steps) * 3, 0.0);
    rep.delivery.assign(steps, 0);
    for (int t = 0; t < steps; ++t) {
        for (int j = 0; j < k; ++j)
            rep.pc_scores[static_cast<std::size_t>(t) * 3 + j] =
                rep.pca_result.scores[static_cast<std::size_t>(t) * k + j];
        rep.delivery[t] = trace.rows[base + t].delivery ? 1 : 0;
    }

    std::vector<double> pc1(steps);
    for (int t = 0; t < steps; ++t) pc1[t] = rep.pc_scores[static_cast<std::size_t>(t) * 3];
    rep.pc1_spectrum = dft_magnitude(pc1);
    rep.pc1_spectrum.target_frequency = 1.0 / static_cast<double>(target);
    rep.pc1_spectrum.target_bin = static_cast<int>(
        std::llround(static_cast<double>(steps) / static_cast<double>(target)));

    // top non-DC peaks and flatness against 3x the non-DC median
    const auto& mag = rep.pc1_spectrum.magnitudes;
    std::vector<int> bins(mag.size() > 1 ? mag.size() - 1 : 0);
    std::iota(bins.begin(), bins.end(), 1);
    std::stable_sort(bins.begin(), bins.end(), [&](int a, int b) { return mag[a] > mag[b]; });
    for (std::size_t i = 0; i < bins.size() && i < 3; ++i) rep.top_peaks.push_back(bins[i]);
    const double med = detail::median_of(std::vector<double>(mag.begin() + 1, mag.end()));
    rep.flat = bins.empty() || mag[bins[0]] <= 3.0 * med;

    // PC1 discontinuity at trial resets: transition t -> t+1 after a delivery
    double deliver_sum = 0.0, other_sum = 0.0;
    int deliver_n = 0, other_n = 0;
    for (int t = 0; t + 1 < steps; ++t) {
        const double jump = std::abs(pc1[t + 1] - pc1[t]);
        if (rep.delivery[t]) {
            deliver_sum += jump;
            deliver_n += 1;
        } else {
            other_sum += jump;
            other_n += 1;
        }
    }
    if (deliver_n > 0 && other_n > 0 && other_sum > 0.0) {
        rep.jump_ratio = (deliver_sum / deliver_n) / (other_sum / other_n);
        rep.jump_ratio_valid = true;
    }
    return rep;
}

}  // namespace ovenlab
