#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "splatmap/image.hpp"

namespace splatmap {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;  // on [0,1] range
inline constexpr double kSsimC2 = 0.03 * 0.03;

namespace detail {

inline const std::array<double, kSsimWindow>& ssim_kernel() {
    static const std::array<double, kSsimWindow> kernel = [] {
        std::array<double, kSsimWindow> k{};
        const int r = kSsimWindow / 2;
        double sum = 0.0;
        for (int i = 0; i < kSsimWindow; ++i) {
            k[i] = std::exp(-0.5 * sqr((i - r) / kSsimSigma));
            sum += k[i];
        }
        for (auto& v : k) v /= sum;
        return k;
    }();
    return kernel;
}

// Symmetric reflection: ...2,1,0 | 0,1,2... (edge sample repeated).
inline int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -1 - i;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

using Plane = std::vector<double>;

// Separable Gaussian window with reflective borders (horizontal then vertical).
inline Plane gauss_blur(const Plane& in, int w, int h) {
    const auto& kern = ssim_kernel();
    const int r = kSsimWindow / 2;
    Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k) {
                acc += kern[k + r] * in[static_cast<size_t>(y) * w + reflect_index(x + k, w)];
            }
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k) {
                acc += kern[k + r] * tmp[static_cast<size_t>(reflect_index(y + k, h)) * w + x];
            }
            out[static_cast<size_t>(y) * w + x] = acc;
        }
    }
    return out;
}

// Exact adjoint of gauss_blur (scatter form; reflection folds weights at the
// borders, so this is not the same operator as gauss_blur there).
inline Plane gauss_blur_adjoint(const Plane& in, int w, int h) {
    const auto& kern = ssim_kernel();
    const int r = kSsimWindow / 2;
    Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = in[static_cast<size_t>(y) * w + x];
            if (v == 0.0) continue;
            for (int k = -r; k <= r; ++k) {
                tmp[static_cast<size_t>(reflect_index(y + k, h)) * w + x] += kern[k + r] * v;
            }
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = tmp[static_cast<size_t>(y) * w + x];
            if (v == 0.0) continue;
            for (int k = -r; k <= r; ++k) {
                out[static_cast<size_t>(y) * w + reflect_index(x + k, w)] += kern[k + r] * v;
            }
        }
    }
    return out;
}

inline Plane extract_channel(const Image& img, int c) {
    Plane p(static_cast<size_t>(img.width) * img.height);
    for (size_t i = 0; i < p.size(); ++i) p[i] = img.data[3 * i + c];
    return p;
}

struct SsimChannel {
    Plane value;             // per-pixel SSIM
    Plane d_mu_a, d_var_a, d_cov;  // partials w.r.t. mu_a, sigma_a^2, sigma_ab
    Plane mu_a, mu_b;
};

inline SsimChannel ssim_channel(const Plane& a, const Plane& b, int w, int h,
                                bool with_partials) {
    SsimChannel out;
    out.mu_a = gauss_blur(a, w, h);
    out.mu_b = gauss_blur(b, w, h);

    const size_t count = a.size();
    Plane a2(count), b2(count), ab(count);
    for (size_t i = 0; i < count; ++i) {
        a2[i] = a[i] * a[i];
        b2[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const Plane m_a2 = gauss_blur(a2, w, h);
    const Plane m_b2 = gauss_blur(b2, w, h);
    const Plane m_ab = gauss_blur(ab, w, h);

    out.value.resize(count);
    if (with_partials) {
        out.d_mu_a.resize(count);
        out.d_var_a.resize(count);
        out.d_cov.resize(count);
    }
    for (size_t i = 0; i < count; ++i) {
        const double mu_a = out.mu_a[i], mu_b = out.mu_b[i];
        const double var_a = m_a2[i] - mu_a * mu_a;
        const double var_b = m_b2[i] - mu_b * mu_b;
        const double cov = m_ab[i] - mu_a * mu_b;
        const double m1 = 2.0 * mu_a * mu_b + kSsimC1;
        const double m2 = 2.0 * cov + kSsimC2;
        const double d1 = mu_a * mu_a + mu_b * mu_b + kSsimC1;
        const double d2 = var_a + var_b + kSsimC2;
        const double s = (m1 * m2) / (d1 * d2);
        out.value[i] = s;
        if (with_partials) {
            out.d_mu_a[i] = 2.0 * mu_b * m2 / (d1 * d2) - 2.0 * mu_a * s / d1;
            out.d_var_a[i] = -s / d2;
            out.d_cov[i] = 2.0 * m1 / (d1 * d2);
        }
    }
    return out;
}

}  // namespace detail

// Per-pixel SSIM averaged over channels (11x11 Gaussian window, sigma 1.5,
// reflective borders). Values lie in [-1, 1].
inline ScalarImage ssim_map(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw dimension_mismatch("ssim_map: image shapes differ");
    ScalarImage out(a.width, a.height);
    for (int c = 0; c < 3; ++c) {
        const auto ch = detail::ssim_channel(detail::extract_channel(a, c),
                                             detail::extract_channel(b, c), a.width, a.height,
                                             /*with_partials=*/false);
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += ch.value[i] / 3.0;
    }
    return out;
}

// Mean absolute error over all elements.
inline double mae(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw dimension_mismatch("mae: image shapes differ");
    double sum = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) sum += std::abs(a.data[i] - b.data[i]);
    return a.data.empty() ? 0.0 : sum / static_cast<double>(a.data.size());
}

// 10*log10(1/MSE) in dB for unit-range images, capped for exact matches.
inline double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw dimension_mismatch("psnr: image shapes differ");
    double sum = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) sum += sqr(a.data[i] - b.data[i]);
    const double mse = a.data.empty() ? 0.0 : sum / static_cast<double>(a.data.size());
    if (mse < 1e-12) return kPsnrCap;
    return 10.0 * std::log10(1.0 / mse);
}

struct LossResult {
    double loss = 0.0;
    double l1 = 0.0;         // also the frame MAE used by view selection
    double mean_ssim = 0.0;
    Image grad;              // d(loss)/d(rendered), exact
};

// loss = (1 - lambda) * L1 + lambda * (1 - meanSSIM), both on [0,1] images.
inline LossResult photometric_loss(const Image& rendered, const Image& observed,
                                   double lambda_ssim = 0.2) {
    if (!rendered.same_shape(observed)) {
        throw dimension_mismatch("photometric_loss: image shapes differ");
    }
    const int w = rendered.width, h = rendered.height;
    const size_t elems = rendered.data.size();
    const size_t pixels = static_cast<size_t>(w) * h;

    LossResult out;
    out.grad = Image(w, h);

    double l1_sum = 0.0;
    for (size_t i = 0; i < elems; ++i) {
        const double diff = rendered.data[i] - observed.data[i];
        l1_sum += std::abs(diff);
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        out.grad.data[i] = (1.0 - lambda_ssim) * sign / static_cast<double>(elems);
    }
    out.l1 = l1_sum / static_cast<double>(elems);

    if (lambda_ssim != 0.0) {
        double ssim_sum = 0.0;
        const double norm = 1.0 / (3.0 * static_cast<double>(pixels));
        for (int c = 0; c < 3; ++c) {
            const auto a = detail::extract_channel(rendered, c);
            const auto b = detail::extract_channel(observed, c);
            const auto ch = detail::ssim_channel(a, b, w, h, /*with_partials=*/true);
            for (const double v : ch.value) ssim_sum += v;

            // d(meanSSIM)/da = adj(A) + 2 a adj(B) - 2 adj(B mu_a)
            //                + b adj(G) - adj(G mu_b), per channel.
            detail::Plane b_mu_a(pixels), g_mu_b(pixels);
            for (size_t i = 0; i < pixels; ++i) {
                b_mu_a[i] = ch.d_var_a[i] * ch.mu_a[i];
                g_mu_b[i] = ch.d_cov[i] * ch.mu_b[i];
            }
            const auto adj_a = detail::gauss_blur_adjoint(ch.d_mu_a, w, h);
            const auto adj_b = detail::gauss_blur_adjoint(ch.d_var_a, w, h);
            const auto adj_b_mu = detail::gauss_blur_adjoint(b_mu_a, w, h);
            const auto adj_g = detail::gauss_blur_adjoint(ch.d_cov, w, h);
            const auto adj_g_mu = detail::gauss_blur_adjoint(g_mu_b, w, h);

            for (size_t i = 0; i < pixels; ++i) {
                const double d_ssim = adj_a[i] + 2.0 * a[i] * adj_b[i] - 2.0 * adj_b_mu[i] +
                                      b[i] * adj_g[i] - adj_g_mu[i];
                // loss carries -lambda * meanSSIM.
                out.grad.data[3 * i + c] -= lambda_ssim * norm * d_ssim;
            }
        }
        out.mean_ssim = ssim_sum * norm;
    } else {
        out.mean_ssim = 0.0;
    }

    out.loss = (1.0 - lambda_ssim) * out.l1 + lambda_ssim * (1.0 - out.mean_ssim);
    return out;
}

// Mean of ssim_map; the SSIM figure reported by evaluation.
inline double mean_ssim(const Image& a, const Image& b) {
    const ScalarImage map = ssim_map(a, b);
    double sum = 0.0;
    for (const double v : map.data) sum += v;
    return map.data.empty() ? 0.0 : sum / static_cast<double>(map.data.size());
}

}  // namespace splatmap
