#pragma once

#include <vector>

#include "splatmap/geometry.hpp"
#include "splatmap/image.hpp"

namespace splatmap {

// One sparse world point from the tracker, with its observation in the frame.
struct TrackedPoint {
    Vec3 world;
    Vec2 pixel;
    double depth = 0.0;  // camera-frame depth, meters
};

// Per-frame tracker output: pose, intrinsics, observed image, sparse points.
struct FrameInput {
    int index = 0;
    Pose pose;  // camera-from-world
    Intrinsics intrinsics;
    Image image;
    std::vector<TrackedPoint> tracked_points;
};

}  // namespace splatmap
