#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "splatmap/gaussian.hpp"
#include "splatmap/image.hpp"
#include "splatmap/threading.hpp"

namespace splatmap {

// Radius covering 99% of a 2D Gaussian's mass: sqrt(2 ln 100).
inline constexpr double kEllipseRadius99 = 3.0348542587702925;

struct RenderSettings {
    double alpha_max = 0.999;
    double t_stop = 1e-4;
    double cov_floor = 0.3;  // px^2, added to the cov2d diagonal
    int threads = 0;         // 0 = mapper_threads()

    int resolved_threads() const { return threads > 0 ? threads : mapper_threads(); }
};

struct Splat2D {
    Vec2 mean2d;
    Mat2 cov2d;  // regularized: positive definite by the diagonal floor
    double depth = 0.0;
    Vec3 color;
    double opacity = 0.0;  // decoded
    int gaussian_index = -1;
};

// EWA projection of one Gaussian. nullopt = culled (behind camera, or the
// 99%-mass ellipse misses the image).
inline std::optional<Splat2D> project_gaussian(const Gaussian& g, const Pose& pose,
                                               const Intrinsics& k,
                                               double cov_floor = 0.3) {
    const Vec3 t = pose.apply(g.position);
    const double z = t.z();
    if (z <= kDepthEpsilon) return std::nullopt;

    const Vec2 mean2d(k.fx * t.x() / z + k.cx, k.fy * t.y() / z + k.cy);

    Eigen::Matrix<double, 2, 3> jac;
    jac << k.fx / z, 0.0, -k.fx * t.x() / (z * z),
           0.0, k.fy / z, -k.fy * t.y() / (z * z);
    const Eigen::Matrix<double, 2, 3> m = jac * pose.rotation_matrix();
    Mat2 cov2d = m * g.covariance() * m.transpose();
    cov2d(0, 0) += cov_floor;
    cov2d(1, 1) += cov_floor;

    // Largest eigenvalue of the symmetric 2x2.
    const double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
    const double det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(1, 0);
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    const double radius = kEllipseRadius99 * std::sqrt(lambda_max);

    if (mean2d.x() + radius < 0.0 || mean2d.x() - radius > k.width - 1 ||
        mean2d.y() + radius < 0.0 || mean2d.y() - radius > k.height - 1) {
        return std::nullopt;
    }

    return Splat2D{mean2d, cov2d, z, g.color, g.opacity(), -1};
}

struct Contribution {
    std::uint32_t splat;  // index into RenderOutput::splats
    double alpha;
};

struct RenderOutput {
    Image image;
    std::vector<double> final_transmittance;  // one per pixel
    // Per-pixel contributor ranges (CSR), contributors in front-to-back order.
    std::vector<std::uint32_t> contrib_offsets;  // size width*height + 1
    std::vector<Contribution> contribs;
    std::vector<Splat2D> splats;  // visible splats, sorted front-to-back
    int width = 0, height = 0;

    std::uint32_t contrib_begin(int pixel) const { return contrib_offsets[pixel]; }
    std::uint32_t contrib_end(int pixel) const { return contrib_offsets[pixel + 1]; }
};

namespace detail {

// Flat per-splat data for the raster loops.
struct RasterSplat {
    double mx, my;
    double ia, ib, ic;  // inverse covariance [[ia, ib], [ib, ic]]
    double opacity;
    double r, g, b;
    int x0, x1, y0, y1;  // inclusive pixel bbox, clipped to the image
};

inline bool raster_bbox(const Splat2D& s, int width, int height, RasterSplat* out) {
    const double det = s.cov2d(0, 0) * s.cov2d(1, 1) - s.cov2d(0, 1) * s.cov2d(1, 0);
    if (det <= 0.0) return false;
    const double mid = 0.5 * (s.cov2d(0, 0) + s.cov2d(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    const double radius = kEllipseRadius99 * std::sqrt(lambda_max);

    out->x0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.x() - radius)));
    out->x1 = std::min(width - 1, static_cast<int>(std::floor(s.mean2d.x() + radius)));
    out->y0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.y() - radius)));
    out->y1 = std::min(height - 1, static_cast<int>(std::floor(s.mean2d.y() + radius)));
    if (out->x0 > out->x1 || out->y0 > out->y1) return false;

    const double inv_det = 1.0 / det;
    out->mx = s.mean2d.x();
    out->my = s.mean2d.y();
    out->ia = s.cov2d(1, 1) * inv_det;
    out->ib = -s.cov2d(0, 1) * inv_det;
    out->ic = s.cov2d(0, 0) * inv_det;
    out->opacity = s.opacity;
    out->r = s.color.x();
    out->g = s.color.y();
    out->b = s.color.z();
    return true;
}

// Visible splats sorted by depth, ties broken by insertion index so rendering
// is reproducible for a fixed map and camera.
inline std::vector<Splat2D> project_and_sort(const GaussianMap& map, const Pose& pose,
                                             const Intrinsics& k, double cov_floor) {
    std::vector<Splat2D> splats;
    splats.reserve(map.size());
    for (size_t i = 0; i < map.size(); ++i) {
        if (auto s = project_gaussian(map.gaussians[i], pose, k, cov_floor)) {
            s->gaussian_index = static_cast<int>(i);
            splats.push_back(*s);
        }
    }
    std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.gaussian_index < b.gaussian_index;
    });
    return splats;
}

inline std::vector<std::vector<std::uint32_t>> build_row_lists(
    const std::vector<RasterSplat>& rs, const std::vector<char>& active, int height) {
    std::vector<std::vector<std::uint32_t>> rows(height);
    for (std::uint32_t s = 0; s < rs.size(); ++s) {
        if (!active[s]) continue;
        for (int y = rs[s].y0; y <= rs[s].y1; ++y) rows[y].push_back(s);
    }
    return rows;
}

}  // namespace detail

// Front-to-back alpha compositing over depth-sorted splats. Per pixel:
// C = sum_i c_i a_i T_i + background * T_final, T_i = prod_{k<i} (1 - a_k),
// a_i = opacity_i * exp(-0.5 d^T cov2d^-1 d) clamped to alpha_max. Compositing
// stops once T < t_stop; the remaining transmittance weights the background.
inline RenderOutput render(const GaussianMap& map, const Pose& pose, const Intrinsics& k,
                           const Vec3& background, const RenderSettings& settings = {}) {
    RenderOutput out;
    out.width = k.width;
    out.height = k.height;
    out.image = Image(k.width, k.height);
    out.final_transmittance.assign(static_cast<size_t>(k.width) * k.height, 1.0);
    out.splats = detail::project_and_sort(map, pose, k, settings.cov_floor);

    const int n = static_cast<int>(out.splats.size());
    std::vector<detail::RasterSplat> rs(n);
    std::vector<char> active(n, 0);
    for (int s = 0; s < n; ++s) {
        active[s] = detail::raster_bbox(out.splats[s], k.width, k.height, &rs[s]) ? 1 : 0;
    }
    const auto rows = detail::build_row_lists(rs, active, k.height);

    std::vector<std::vector<Contribution>> row_contribs(k.height);
    std::vector<std::uint32_t> pixel_counts(static_cast<size_t>(k.width) * k.height, 0);

    parallel_chunks(k.height, settings.resolved_threads(), [&](int, int y_begin, int y_end) {
        for (int y = y_begin; y < y_end; ++y) {
            auto& contribs = row_contribs[y];
            contribs.reserve(rows[y].size());
            for (int x = 0; x < k.width; ++x) {
                double t = 1.0;
                double cr = 0.0, cg = 0.0, cb = 0.0;
                std::uint32_t count = 0;
                for (const std::uint32_t s : rows[y]) {
                    const auto& sp = rs[s];
                    if (x < sp.x0 || x > sp.x1) continue;
                    const double dx = x - sp.mx;
                    const double dy = y - sp.my;
                    const double e =
                        -0.5 * (sp.ia * dx * dx + 2.0 * sp.ib * dx * dy + sp.ic * dy * dy);
                    if (e < -700.0) continue;  // exp underflow, zero contribution
                    const double alpha = std::min(settings.alpha_max, sp.opacity * std::exp(e));
                    if (alpha <= 0.0) continue;
                    contribs.push_back({s, alpha});
                    ++count;
                    cr += t * alpha * sp.r;
                    cg += t * alpha * sp.g;
                    cb += t * alpha * sp.b;
                    t *= 1.0 - alpha;
                    if (t < settings.t_stop) break;
                }
                const size_t pix = static_cast<size_t>(y) * k.width + x;
                out.image.at(x, y, 0) = cr + t * background.x();
                out.image.at(x, y, 1) = cg + t * background.y();
                out.image.at(x, y, 2) = cb + t * background.z();
                out.final_transmittance[pix] = t;
                pixel_counts[pix] = count;
            }
        }
    });

    out.contrib_offsets.resize(pixel_counts.size() + 1);
    out.contrib_offsets[0] = 0;
    std::partial_sum(pixel_counts.begin(), pixel_counts.end(), out.contrib_offsets.begin() + 1);
    out.contribs.resize(out.contrib_offsets.back());
    size_t cursor = 0;
    for (int y = 0; y < k.height; ++y) {
        std::copy(row_contribs[y].begin(), row_contribs[y].end(), out.contribs.begin() + cursor);
        cursor += row_contribs[y].size();
    }
    return out;
}

struct MapGradients {
    // Per-Gaussian raw-parameter gradients (pack_params layout). Exactly zero
    // for Gaussians culled from the view.
    std::vector<ParamVec> gaussians;
    // Gradient w.r.t. a left-multiplied twist at the render pose:
    // pose(eps) = se3_exp(eps) * pose.
    Vec6 pose_twist = Vec6::Zero();
};

namespace detail {

// Pixel-level accumulator layout per splat.
struct SplatAccum {
    double d_mx = 0.0, d_my = 0.0;
    double d_ia = 0.0, d_ib = 0.0, d_ic = 0.0;  // grads w.r.t. inverse-cov entries
    double d_op = 0.0;
    double d_r = 0.0, d_g = 0.0, d_b = 0.0;

    bool nonzero() const {
        return d_mx != 0.0 || d_my != 0.0 || d_ia != 0.0 || d_ib != 0.0 || d_ic != 0.0 ||
               d_op != 0.0 || d_r != 0.0 || d_g != 0.0 || d_b != 0.0;
    }
};

// dL/dq for R(q) built from a unit quaternion (w,x,y,z), given dL/dR.
inline Eigen::Vector4d rotation_matrix_grad_to_quat(const Mat3& g, const Quat& q) {
    const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
    Eigen::Vector4d dq;
    dq(0) = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) +
                   x * g(2, 1));
    dq(1) = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) +
                   z * g(2, 0) + w * g(2, 1) - 2.0 * x * g(2, 2));
    dq(2) = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                   w * g(2, 0) + z * g(2, 1) - 2.0 * y * g(2, 2));
    dq(3) = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) -
                   2.0 * z * g(1, 1) + y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    return dq;
}

}  // namespace detail

// Exact analytic gradient of the compositing equation. The forward output for
// the same (map, pose, k, settings) supplies the contributor lists; callers
// must not mutate the map in between.
inline MapGradients render_backward(const GaussianMap& map, const Pose& pose,
                                    const Intrinsics& k, const Vec3& background,
                                    const Image& grad_image, const RenderOutput& forward,
                                    const RenderSettings& settings = {}) {
    MapGradients grads;
    grads.gaussians.assign(map.size(), ParamVec::Zero());
    const int n = static_cast<int>(forward.splats.size());
    if (n == 0) return grads;

    const int workers = std::max(1, std::min(settings.resolved_threads(), k.height));
    std::vector<std::vector<detail::SplatAccum>> worker_accums(
        workers, std::vector<detail::SplatAccum>(n));

    // Pixel pass: accumulate gradients at the 2D-splat level.
    parallel_chunks(k.height, workers, [&](int w, int y_begin, int y_end) {
        auto& accum = worker_accums[w];
        std::vector<double> t_list;
        for (int y = y_begin; y < y_end; ++y) {
            for (int x = 0; x < k.width; ++x) {
                const int pix = y * k.width + x;
                const std::uint32_t begin = forward.contrib_begin(pix);
                const std::uint32_t end = forward.contrib_end(pix);
                if (begin == end) continue;
                const Vec3 gp = grad_image.pixel(x, y);
                if (gp.isZero(0.0)) continue;

                // Recover per-contributor transmittance front-to-back.
                t_list.clear();
                double t = 1.0;
                for (std::uint32_t c = begin; c < end; ++c) {
                    t_list.push_back(t);
                    t *= 1.0 - forward.contribs[c].alpha;
                }

                // Suffix radiance behind each contributor, background included.
                Vec3 suffix = t * background;
                for (std::uint32_t c = end; c-- > begin;) {
                    const auto& contrib = forward.contribs[c];
                    const auto& sp = forward.splats[contrib.splat];
                    const double alpha = contrib.alpha;
                    const double t_i = t_list[c - begin];
                    auto& acc = accum[contrib.splat];

                    acc.d_r += gp.x() * alpha * t_i;
                    acc.d_g += gp.y() * alpha * t_i;
                    acc.d_b += gp.z() * alpha * t_i;

                    const double d_alpha =
                        gp.dot(sp.color * t_i - suffix / (1.0 - alpha));
                    suffix += alpha * t_i * sp.color;

                    if (alpha >= settings.alpha_max) continue;  // clamp blocks d(alpha)
                    const double gauss = alpha / sp.opacity;
                    acc.d_op += d_alpha * gauss;
                    const double d_exponent = d_alpha * alpha;  // d(alpha)/d(e) = alpha

                    const double det =
                        sp.cov2d(0, 0) * sp.cov2d(1, 1) - sp.cov2d(0, 1) * sp.cov2d(1, 0);
                    const double ia = sp.cov2d(1, 1) / det;
                    const double ib = -sp.cov2d(0, 1) / det;
                    const double ic = sp.cov2d(0, 0) / det;
                    const double dx = x - sp.mean2d.x();
                    const double dy = y - sp.mean2d.y();

                    acc.d_mx += d_exponent * (ia * dx + ib * dy);
                    acc.d_my += d_exponent * (ib * dx + ic * dy);
                    acc.d_ia += d_exponent * (-0.5 * dx * dx);
                    acc.d_ib += d_exponent * (-dx * dy);
                    acc.d_ic += d_exponent * (-0.5 * dy * dy);
                }
            }
        }
    });

    // Reduce worker buffers in fixed order.
    auto& accum = worker_accums[0];
    for (int w = 1; w < workers; ++w) {
        for (int s = 0; s < n; ++s) {
            const auto& a = worker_accums[w][s];
            accum[s].d_mx += a.d_mx;
            accum[s].d_my += a.d_my;
            accum[s].d_ia += a.d_ia;
            accum[s].d_ib += a.d_ib;
            accum[s].d_ic += a.d_ic;
            accum[s].d_op += a.d_op;
            accum[s].d_r += a.d_r;
            accum[s].d_g += a.d_g;
            accum[s].d_b += a.d_b;
        }
    }

    // Splat pass: chain 2D gradients through projection to Gaussian parameters
    // and the camera twist.
    const Mat3 rot_cw = pose.rotation_matrix();
    std::vector<Vec6> worker_pose(workers, Vec6::Zero());
    parallel_chunks(n, workers, [&](int w, int s_begin, int s_end) {
        Vec6& pose_acc = worker_pose[w];
        for (int s = s_begin; s < s_end; ++s) {
            const auto& acc = accum[s];
            if (!acc.nonzero()) continue;
            const auto& sp = forward.splats[s];
            const int gi = sp.gaussian_index;
            const Gaussian& g = map.gaussians[gi];
            ParamVec& pg = grads.gaussians[gi];

            pg(11) += acc.d_r;
            pg(12) += acc.d_g;
            pg(13) += acc.d_b;

            const double op = sp.opacity;
            pg(10) += acc.d_op * op * (1.0 - op);

            const Vec3 t = pose.apply(g.position);
            const double z = t.z();
            Eigen::Matrix<double, 2, 3> jac;
            jac << k.fx / z, 0.0, -k.fx * t.x() / (z * z),
                   0.0, k.fy / z, -k.fy * t.y() / (z * z);
            const Eigen::Matrix<double, 2, 3> m = jac * rot_cw;

            const Mat3 rot_g = g.rotation.toRotationMatrix();
            const Vec3 scale = g.scale();
            const Mat3 sigma3 =
                rot_g * scale.array().square().matrix().asDiagonal() * rot_g.transpose();

            // Full-matrix gradient w.r.t. the inverse covariance, then through
            // the inversion: G_sigma = -A G_A A.
            Mat2 g_a;
            g_a << acc.d_ia, 0.5 * acc.d_ib, 0.5 * acc.d_ib, acc.d_ic;
            const Mat2 cov_inv = sp.cov2d.inverse();
            const Mat2 g_sigma = -cov_inv * g_a * cov_inv;

            const Eigen::Matrix<double, 2, 3> g_m = 2.0 * g_sigma * m * sigma3;
            const Mat3 g_sigma3 = m.transpose() * g_sigma * m;
            const Eigen::Matrix<double, 2, 3> g_jac = g_m * rot_cw.transpose();
            const Mat3 g_w = jac.transpose() * g_m;

            // Scale: Sigma3 = R diag(s^2) R^T.
            const Mat3 rt_g_r = rot_g.transpose() * g_sigma3 * rot_g;
            for (int axis = 0; axis < 3; ++axis) {
                pg(3 + axis) += 2.0 * scale(axis) * scale(axis) * rt_g_r(axis, axis);
            }

            // Rotation: gradient w.r.t. raw quaternion through normalization.
            const Mat3 g_rot =
                2.0 * g_sigma3 * rot_g * scale.array().square().matrix().asDiagonal();
            Eigen::Vector4d dq = detail::rotation_matrix_grad_to_quat(g_rot, g.rotation);
            const Eigen::Vector4d q_vec(g.rotation.w(), g.rotation.x(), g.rotation.y(),
                                        g.rotation.z());
            dq -= q_vec.dot(dq) * q_vec;
            pg.segment<4>(6) += dq;

            // Camera-frame point: mean term plus the Jacobian's own dependence.
            const Vec2 d_mean(acc.d_mx, acc.d_my);
            Vec3 d_t = jac.transpose() * d_mean;
            const double z2 = z * z;
            const double z3 = z2 * z;
            d_t.x() += g_jac(0, 2) * (-k.fx / z2);
            d_t.y() += g_jac(1, 2) * (-k.fy / z2);
            d_t.z() += g_jac(0, 0) * (-k.fx / z2) + g_jac(1, 1) * (-k.fy / z2) +
                       g_jac(0, 2) * (2.0 * k.fx * t.x() / z3) +
                       g_jac(1, 2) * (2.0 * k.fy * t.y() / z3);

            pg.segment<3>(0) += rot_cw.transpose() * d_t;

            // Twist: translation part is d_t directly; rotation part combines
            // the point term t x d_t with the W-dependence of the covariance.
            pose_acc.tail<3>() += d_t;
            Vec3 d_omega = t.cross(d_t);
            d_omega.x() += -g_w.row(1).dot(rot_cw.row(2)) + g_w.row(2).dot(rot_cw.row(1));
            d_omega.y() += g_w.row(0).dot(rot_cw.row(2)) - g_w.row(2).dot(rot_cw.row(0));
            d_omega.z() += -g_w.row(0).dot(rot_cw.row(1)) + g_w.row(1).dot(rot_cw.row(0));
            pose_acc.head<3>() += d_omega;
        }
    });
    for (int w = 0; w < workers; ++w) grads.pose_twist += worker_pose[w];
    return grads;
}

}  // namespace splatmap
