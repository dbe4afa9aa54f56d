#pragma once

#include <algorithm>
#include <vector>

#include "splatmap/common.hpp"
#include "splatmap/geometry.hpp"

namespace splatmap {

// Row-major RGB image, values in [0,1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // size width*height*3

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.0) {}

    static Image constant(int w, int h, const Vec3& rgb) {
        Image img(w, h);
        for (int i = 0; i < w * h; ++i) {
            img.data[3 * i + 0] = rgb.x();
            img.data[3 * i + 1] = rgb.y();
            img.data[3 * i + 2] = rgb.z();
        }
        return img;
    }

    double& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * 3 + c];
    }

    Vec3 pixel(int x, int y) const { return Vec3(at(x, y, 0), at(x, y, 1), at(x, y, 2)); }

    void set_pixel(int x, int y, const Vec3& rgb) {
        at(x, y, 0) = rgb.x();
        at(x, y, 1) = rgb.y();
        at(x, y, 2) = rgb.z();
    }

    bool same_shape(const Image& other) const {
        return width == other.width && height == other.height;
    }

    // Bilinear sample at a real-valued pixel position; sample points sit on
    // integer coordinates, border clamped.
    Vec3 sample_bilinear(double u, double v) const {
        const double uc = std::clamp(u, 0.0, static_cast<double>(width - 1));
        const double vc = std::clamp(v, 0.0, static_cast<double>(height - 1));
        const int x0 = static_cast<int>(std::floor(uc));
        const int y0 = static_cast<int>(std::floor(vc));
        const int x1 = std::min(x0 + 1, width - 1);
        const int y1 = std::min(y0 + 1, height - 1);
        const double ax = uc - x0;
        const double ay = vc - y0;
        return (1.0 - ay) * ((1.0 - ax) * pixel(x0, y0) + ax * pixel(x1, y0)) +
               ay * ((1.0 - ax) * pixel(x0, y1) + ax * pixel(x1, y1));
    }
};

// Single-channel scalar raster (SSIM maps, depth maps).
struct ScalarImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    ScalarImage() = default;
    ScalarImage(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
};

}  // namespace splatmap
