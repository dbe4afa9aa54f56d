#pragma once

#include <span>
#include <vector>

#include "splatmap/geometry.hpp"

namespace splatmap {

// Anisotropic 3D splat primitive. Scale is stored as log so the optimizer is
// unconstrained; opacity as logit for the same reason. Color is plain RGB
// (no view dependence).
struct Gaussian {
    Vec3 position{0.0, 0.0, 0.0};
    Vec3 log_scale{0.0, 0.0, 0.0};
    Quat rotation{1.0, 0.0, 0.0, 0.0};
    double logit_opacity = 0.0;
    Vec3 color{0.0, 0.0, 0.0};

    Vec3 scale() const { return log_scale.array().exp(); }
    double opacity() const { return sigmoid(logit_opacity); }

    // Sigma = R diag(s^2) R^T.
    Mat3 covariance() const {
        const Mat3 rot = rotation.toRotationMatrix();
        const Vec3 s2 = scale().array().square();
        return rot * s2.asDiagonal() * rot.transpose();
    }
};

// Flattened parameter layout used by gradients and the optimizer:
// position(0..2) log_scale(3..5) rotation wxyz(6..9) logit_opacity(10) color(11..13)
inline constexpr int kGaussianParamCount = 14;
using ParamVec = Eigen::Matrix<double, kGaussianParamCount, 1>;

inline ParamVec pack_params(const Gaussian& g) {
    ParamVec p;
    p.segment<3>(0) = g.position;
    p.segment<3>(3) = g.log_scale;
    p(6) = g.rotation.w();
    p(7) = g.rotation.x();
    p(8) = g.rotation.y();
    p(9) = g.rotation.z();
    p(10) = g.logit_opacity;
    p.segment<3>(11) = g.color;
    return p;
}

// Inverse of pack_params; renormalizes the quaternion so Gaussian invariants
// hold structurally after any raw-parameter update.
inline Gaussian unpack_params(const ParamVec& p) {
    Gaussian g;
    g.position = p.segment<3>(0);
    g.log_scale = p.segment<3>(3);
    g.rotation = Quat(p(6), p(7), p(8), p(9)).normalized();
    g.logit_opacity = p(10);
    g.color = p.segment<3>(11);
    return g;
}

// Adam accumulators for one Gaussian (per-parameter first/second moments).
struct AdamState {
    ParamVec m = ParamVec::Zero();
    ParamVec v = ParamVec::Zero();
    long long step = 0;
};

// The growing scene. Gaussians and their optimizer moments stay parallel;
// the count only decreases through prune().
struct GaussianMap {
    std::vector<Gaussian> gaussians;
    std::vector<AdamState> adam;

    size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }

    // Appends a batch; moments for new entries are zero-initialized.
    // Returns the new count.
    size_t insert(std::span<const Gaussian> batch) {
        gaussians.insert(gaussians.end(), batch.begin(), batch.end());
        adam.resize(gaussians.size());
        return gaussians.size();
    }

    // Removes entries whose keep flag is false, preserving order.
    size_t prune(const std::vector<char>& keep) {
        size_t out = 0;
        for (size_t i = 0; i < gaussians.size(); ++i) {
            if (!keep[i]) continue;
            if (out != i) {
                gaussians[out] = gaussians[i];
                adam[out] = adam[i];
            }
            ++out;
        }
        gaussians.resize(out);
        adam.resize(out);
        return out;
    }
};

}  // namespace splatmap
