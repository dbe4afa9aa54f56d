#include <gtest/gtest.h>

#include "splatmap/geometry.hpp"
#include "splatmap/rng.hpp"

using namespace splatmap;

namespace {

// Independent Rodrigues-formula oracle for rotating a vector by an axis-angle.
Vec3 rodrigues_rotate(const Vec3& axis_angle, const Vec3& v) {
    const double theta = axis_angle.norm();
    if (theta < 1e-14) return v;
    const Vec3 axis = axis_angle / theta;
    return v * std::cos(theta) + axis.cross(v) * std::sin(theta) +
           axis * axis.dot(v) * (1.0 - std::cos(theta));
}

Pose random_pose(Rng& rng, double rot_scale = 2.0, double trans_scale = 2.0) {
    Vec6 twist;
    for (int i = 0; i < 3; ++i) twist(i) = rng.uniform(-rot_scale, rot_scale);
    for (int i = 3; i < 6; ++i) twist(i) = rng.uniform(-trans_scale, trans_scale);
    return se3_exp(twist);
}

}  // namespace

TEST(Se3Exp, ZeroTwistIsIdentity) {
    const Pose p = se3_exp(Vec6::Zero());
    EXPECT_NEAR(p.rotation.w(), 1.0, 1e-15);
    EXPECT_NEAR(p.translation.norm(), 0.0, 1e-15);
}

TEST(Se3Exp, PureTranslation) {
    Vec6 twist = Vec6::Zero();
    twist.tail<3>() = Vec3(1.0, 2.0, 3.0);
    const Pose p = se3_exp(twist);
    EXPECT_NEAR(std::abs(p.rotation.w()), 1.0, 1e-15);
    EXPECT_NEAR((p.translation - Vec3(1.0, 2.0, 3.0)).norm(), 0.0, 1e-15);
}

TEST(Se3Exp, QuarterTurnAboutZ) {
    Vec6 twist = Vec6::Zero();
    twist(2) = M_PI / 2.0;
    const Pose p = se3_exp(twist);
    EXPECT_NEAR(p.translation.norm(), 0.0, 1e-15);

    const Vec3 rotated = p.apply(Vec3(1.0, 0.0, 0.0));
    const Vec3 expected = rodrigues_rotate(twist.head<3>(), Vec3(1.0, 0.0, 0.0));
    EXPECT_NEAR((rotated - expected).norm(), 0.0, 1e-12);
    EXPECT_NEAR((rotated - Vec3(0.0, 1.0, 0.0)).norm(), 0.0, 1e-12);
}

TEST(Se3Exp, MatchesRodriguesOnRandomTwists) {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        Vec6 twist;
        for (int i = 0; i < 6; ++i) twist(i) = rng.uniform(-2.0, 2.0);
        const Pose p = se3_exp(twist);
        const Vec3 v(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        const Vec3 expected = rodrigues_rotate(twist.head<3>(), v);
        EXPECT_NEAR((p.rotation * v - expected).norm(), 0.0, 1e-12);
    }
}

TEST(Se3Log, RoundTripsBelowPi) {
    Rng rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        Vec3 omega(rng.normal(), rng.normal(), rng.normal());
        const double angle = rng.uniform(0.0, M_PI - 0.1);
        if (omega.norm() > 1e-12) omega = omega.normalized() * angle;
        Vec6 twist;
        twist.head<3>() = omega;
        twist.tail<3>() = Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        const Vec6 back = se3_log(se3_exp(twist));
        EXPECT_NEAR((back - twist).norm(), 0.0, 1e-7);
    }
}

TEST(Pose, InverseComposesToIdentity) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const Pose p = random_pose(rng);
        const Pose id = p.compose(p.inverse());
        EXPECT_NEAR(std::abs(id.rotation.w()), 1.0, 1e-9);
        EXPECT_NEAR(id.rotation.vec().norm(), 0.0, 1e-9);
        EXPECT_NEAR(id.translation.norm(), 0.0, 1e-9);
    }
}

TEST(Pose, CompositionAssociativeOnRandomTriples) {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
        const Pose left = a.compose(b).compose(c);
        const Pose right = a.compose(b.compose(c));
        const Vec3 probe(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
        EXPECT_NEAR((left.apply(probe) - right.apply(probe)).norm(), 0.0, 1e-9);
    }
}

TEST(Pose, QuaternionStaysNormalized) {
    Rng rng(13);
    Pose p = random_pose(rng);
    for (int i = 0; i < 1000; ++i) {
        p = random_pose(rng).compose(p);
        EXPECT_TRUE(p.is_normalized(1e-9));
    }
}

TEST(ProjectPoint, OpticalAxis) {
    Intrinsics k{100.0, 100.0, 50.0, 50.0, 100, 100};
    const auto proj = project_point(Pose::identity(), k, Vec3(0.0, 0.0, 2.0));
    ASSERT_TRUE(proj.has_value());
    EXPECT_NEAR(proj->pixel.x(), 50.0, 1e-12);
    EXPECT_NEAR(proj->pixel.y(), 50.0, 1e-12);
    EXPECT_NEAR(proj->depth, 2.0, 1e-12);
}

TEST(ProjectPoint, OffAxisHandEvaluation) {
    // fx*x/z + cx = 100*1/2 + 50 = 100.
    Intrinsics k{100.0, 100.0, 50.0, 50.0, 200, 200};
    const auto proj = project_point(Pose::identity(), k, Vec3(1.0, 0.0, 2.0));
    ASSERT_TRUE(proj.has_value());
    EXPECT_NEAR(proj->pixel.x(), 100.0, 1e-12);
    EXPECT_NEAR(proj->pixel.y(), 50.0, 1e-12);
}

TEST(ProjectPoint, BehindCamera) {
    Intrinsics k{100.0, 100.0, 50.0, 50.0, 100, 100};
    EXPECT_FALSE(project_point(Pose::identity(), k, Vec3(0.0, 0.0, -1.0)).has_value());
    EXPECT_FALSE(project_point(Pose::identity(), k, Vec3(0.0, 0.0, 0.0)).has_value());
}

TEST(ProjectPoint, ScaleConsistency) {
    // Doubling fx doubles (pixel.x - cx) exactly.
    Intrinsics k1{100.0, 100.0, 50.0, 50.0, 4000, 4000};
    Intrinsics k2 = k1;
    k2.fx = 200.0;
    const Vec3 p(0.7, -0.3, 1.9);
    const auto a = project_point(Pose::identity(), k1, p);
    const auto b = project_point(Pose::identity(), k2, p);
    ASSERT_TRUE(a && b);
    EXPECT_DOUBLE_EQ(2.0 * (a->pixel.x() - k1.cx), b->pixel.x() - k2.cx);
}

TEST(ProjectPoint, BackprojectRoundTrip) {
    Rng rng(17);
    Intrinsics k{120.0, 115.0, 64.0, 60.0, 128, 120};
    for (int trial = 0; trial < 100; ++trial) {
        const Pose pose = random_pose(rng, 1.0, 1.0);
        const Vec2 pixel(rng.uniform(0, 127), rng.uniform(0, 119));
        const double depth = rng.uniform(0.5, 5.0);
        const Vec3 world = backproject_pixel(pose, k, pixel, depth);
        const auto proj = project_point(pose, k, world);
        ASSERT_TRUE(proj.has_value());
        EXPECT_NEAR((proj->pixel - pixel).norm(), 0.0, 1e-9);
        EXPECT_NEAR(proj->depth, depth, 1e-9);
    }
}
