#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <optional>

#include "splatmap/common.hpp"

namespace splatmap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Quat = Eigen::Quaterniond;

inline Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return m;
}

// Rigid transform storing camera-from-world: apply() maps world points into
// the camera frame. Trackers report world-from-camera; invert on ingest.
struct Pose {
    Quat rotation{1.0, 0.0, 0.0, 0.0};
    Vec3 translation{0.0, 0.0, 0.0};

    static Pose identity() { return Pose{}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

    Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }

    Pose inverse() const {
        Quat qi = rotation.conjugate();
        return Pose{qi, -(qi * translation)};
    }

    // this ∘ other: apply other first, then this.
    Pose compose(const Pose& other) const {
        return Pose{(rotation * other.rotation).normalized(),
                    rotation * other.translation + translation};
    }

    void renormalize() { rotation.normalize(); }

    bool is_normalized(double tol = 1e-9) const {
        return std::abs(rotation.norm() - 1.0) <= tol;
    }
};

// Exponential map of a twist [omega; v] (rotation first). Total function.
inline Pose se3_exp(const Vec6& twist) {
    const Vec3 omega = twist.head<3>();
    const Vec3 v = twist.tail<3>();
    const double theta = omega.norm();
    const Mat3 omega_hat = skew(omega);

    Mat3 rot, vmat;
    if (theta < 1e-10) {
        rot = Mat3::Identity() + omega_hat + 0.5 * omega_hat * omega_hat;
        vmat = Mat3::Identity() + 0.5 * omega_hat + (1.0 / 6.0) * omega_hat * omega_hat;
    } else {
        const double t2 = theta * theta;
        const double a = std::sin(theta) / theta;
        const double b = (1.0 - std::cos(theta)) / t2;
        const double c = (theta - std::sin(theta)) / (t2 * theta);
        rot = Mat3::Identity() + a * omega_hat + b * omega_hat * omega_hat;
        vmat = Mat3::Identity() + b * omega_hat + c * omega_hat * omega_hat;
    }
    Pose out;
    out.rotation = Quat(rot).normalized();
    out.translation = vmat * v;
    return out;
}

// Inverse of se3_exp; valid for rotation angles strictly below pi.
inline Vec6 se3_log(const Pose& pose) {
    const Mat3 rot = pose.rotation_matrix();
    const double cos_theta = std::min(1.0, std::max(-1.0, (rot.trace() - 1.0) * 0.5));
    const double theta = std::acos(cos_theta);

    Vec3 omega;
    if (theta < 1e-10) {
        omega = 0.5 * Vec3(rot(2, 1) - rot(1, 2), rot(0, 2) - rot(2, 0), rot(1, 0) - rot(0, 1));
    } else {
        omega = theta / (2.0 * std::sin(theta)) *
                Vec3(rot(2, 1) - rot(1, 2), rot(0, 2) - rot(2, 0), rot(1, 0) - rot(0, 1));
    }

    const Mat3 omega_hat = skew(omega);
    Mat3 vinv;
    if (theta < 1e-10) {
        vinv = Mat3::Identity() - 0.5 * omega_hat + (1.0 / 12.0) * omega_hat * omega_hat;
    } else {
        const double half = 0.5 * theta;
        const double cot_half = std::cos(half) / std::sin(half);
        vinv = Mat3::Identity() - 0.5 * omega_hat +
               (1.0 - half * cot_half) / (theta * theta) * omega_hat * omega_hat;
    }

    Vec6 twist;
    twist.head<3>() = omega;
    twist.tail<3>() = vinv * pose.translation;
    return twist;
}

struct Intrinsics {
    double fx = 0.0, fy = 0.0;
    double cx = 0.0, cy = 0.0;
    int width = 0, height = 0;

    bool valid() const {
        return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 &&
               cx >= 0.0 && cx < width && cy >= 0.0 && cy < height;
    }
};

struct Projection {
    Vec2 pixel;
    double depth;
};

// Pinhole projection of a world point. nullopt = behind camera (z <= kDepthEpsilon).
inline std::optional<Projection> project_point(const Pose& pose, const Intrinsics& k,
                                               const Vec3& world_point) {
    const Vec3 pc = pose.apply(world_point);
    if (pc.z() <= kDepthEpsilon) return std::nullopt;
    return Projection{Vec2(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy),
                      pc.z()};
}

// Inverse of project_point at a given depth.
inline Vec3 backproject_pixel(const Pose& pose, const Intrinsics& k, const Vec2& pixel,
                              double depth) {
    const Vec3 pc(depth * (pixel.x() - k.cx) / k.fx, depth * (pixel.y() - k.cy) / k.fy, depth);
    return pose.inverse().apply(pc);
}

}  // namespace splatmap
