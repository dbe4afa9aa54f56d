#pragma once

#include <vector>

#include "splatmap/gaussian.hpp"
#include "splatmap/renderer.hpp"
#include "splatmap/rng.hpp"

namespace splatmap::testing {

// Scalar objective for gradient checks: <grad_image, render(...)>. Its exact
// derivative w.r.t. any parameter is what render_backward reports for that
// grad_image.
inline double render_objective(const GaussianMap& map, const Pose& pose, const Intrinsics& k,
                               const Vec3& background, const Image& grad_image,
                               const RenderSettings& settings) {
    const RenderOutput out = render(map, pose, k, background, settings);
    double obj = 0.0;
    for (size_t i = 0; i < out.image.data.size(); ++i) {
        obj += out.image.data[i] * grad_image.data[i];
    }
    return obj;
}

// Randomized scene for derivative checks. Construction keeps the scene away
// from the renderer's non-smooth boundaries: splats project inside the image
// with margin, depths are pairwise separated (no sort flips under the FD
// step), and opacities stay below the alpha_max clamp and above early-stop
// territory.
inline GaussianMap random_scene(Rng& rng, int count, const Pose& pose, const Intrinsics& k) {
    const Pose cam_from_world = pose;
    GaussianMap map;
    std::vector<double> depths;
    for (int i = 0; i < count; ++i) {
        double depth = 0.0;
        for (int attempt = 0; attempt < 100; ++attempt) {
            depth = rng.uniform(1.5, 3.5);
            bool separated = true;
            for (const double d : depths) {
                if (std::abs(d - depth) < 0.02) {
                    separated = false;
                    break;
                }
            }
            if (separated) break;
        }
        depths.push_back(depth);

        const double u = rng.uniform(0.3 * k.width, 0.7 * k.width);
        const double v = rng.uniform(0.3 * k.height, 0.7 * k.height);
        Gaussian g;
        g.position = backproject_pixel(cam_from_world, k, Vec2(u, v), depth);
        const double sigma_px = rng.uniform(1.0, 3.0);
        const double sigma_world = sigma_px * depth / k.fx;
        for (int axis = 0; axis < 3; ++axis) {
            g.log_scale(axis) = std::log(sigma_world) + rng.uniform(-0.3, 0.3);
        }
        g.rotation = Quat(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
        g.logit_opacity = rng.uniform(-2.5, 0.0);
        g.color = Vec3(rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95));
        map.insert({&g, 1});
    }
    return map;
}

inline Image random_image(Rng& rng, int w, int h, double lo = -1.0, double hi = 1.0) {
    Image img(w, h);
    for (auto& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

struct GradCheckStats {
    double worst_rel = 0.0;
    double worst_abs = 0.0;
    int checked = 0;
};

// Central finite differences against render_backward for every Gaussian
// parameter and the pose twist. rel tolerance applies where the gradient
// magnitude exceeds `magnitude_floor`; below it the comparison is absolute.
inline GradCheckStats check_render_gradients(const GaussianMap& map, const Pose& pose,
                                             const Intrinsics& k, const Vec3& background,
                                             const Image& grad_image,
                                             const RenderSettings& settings, double h,
                                             double rel_tol, double abs_tol,
                                             double magnitude_floor, bool* ok) {
    GradCheckStats stats;
    *ok = true;
    const RenderOutput forward = render(map, pose, k, background, settings);
    const MapGradients analytic =
        render_backward(map, pose, k, background, grad_image, forward, settings);

    auto compare = [&](double a, double fd) {
        ++stats.checked;
        const double mag = std::max(std::abs(a), std::abs(fd));
        if (mag < magnitude_floor) {
            stats.worst_abs = std::max(stats.worst_abs, std::abs(a - fd));
            if (std::abs(a - fd) > abs_tol) *ok = false;
        } else {
            const double rel = std::abs(a - fd) / mag;
            stats.worst_rel = std::max(stats.worst_rel, rel);
            if (rel > rel_tol) *ok = false;
        }
    };

    for (size_t gi = 0; gi < map.size(); ++gi) {
        for (int p = 0; p < kGaussianParamCount; ++p) {
            GaussianMap plus = map, minus = map;
            ParamVec params = pack_params(map.gaussians[gi]);
            ParamVec bump = ParamVec::Zero();
            bump(p) = h;
            plus.gaussians[gi] = unpack_params(params + bump);
            minus.gaussians[gi] = unpack_params(params - bump);
            const double fd = (render_objective(plus, pose, k, background, grad_image, settings) -
                               render_objective(minus, pose, k, background, grad_image, settings)) /
                              (2.0 * h);
            compare(analytic.gaussians[gi](p), fd);
        }
    }

    for (int p = 0; p < 6; ++p) {
        Vec6 twist = Vec6::Zero();
        twist(p) = h;
        const Pose plus = se3_exp(twist).compose(pose);
        twist(p) = -h;
        const Pose minus = se3_exp(twist).compose(pose);
        const double fd = (render_objective(map, plus, k, background, grad_image, settings) -
                           render_objective(map, minus, k, background, grad_image, settings)) /
                          (2.0 * h);
        compare(analytic.pose_twist(p), fd);
    }
    return stats;
}

}  // namespace splatmap::testing
