#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace splatmap {

// Points with camera-frame depth below this count as behind the camera.
inline constexpr double kDepthEpsilon = 1e-6;

// PSNR reported for an exact match (MSE < 1e-12).
inline constexpr double kPsnrCap = 120.0;

class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

class dimension_mismatch : public error {
public:
    explicit dimension_mismatch(const std::string& msg) : error(msg) {}
};

class level_out_of_range : public error {
public:
    explicit level_out_of_range(const std::string& msg) : error(msg) {}
};

class non_positive_scale : public error {
public:
    explicit non_positive_scale(const std::string& msg) : error(msg) {}
};

class non_positive_input : public error {
public:
    explicit non_positive_input(const std::string& msg) : error(msg) {}
};

class no_tracked_points : public error {
public:
    explicit no_tracked_points(const std::string& msg) : error(msg) {}
};

class empty_keyframe_set : public error {
public:
    explicit empty_keyframe_set(const std::string& msg) : error(msg) {}
};

class no_keyframes : public error {
public:
    explicit no_keyframes(const std::string& msg) : error(msg) {}
};

class parse_error : public error {
public:
    parse_error(const std::string& file, int line, const std::string& msg)
        : error(file + ":" + std::to_string(line) + ": " + msg), line_number(line) {}
    int line_number;
};

class missing_image : public error {
public:
    explicit missing_image(const std::string& msg) : error(msg) {}
};

class invariant_violation : public error {
public:
    explicit invariant_violation(const std::string& msg) : error(msg) {}
};

class io_error : public error {
public:
    explicit io_error(const std::string& msg) : error(msg) {}
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Inverse of sigmoid; p must lie strictly inside (0,1).
inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double sqr(double x) { return x * x; }

}  // namespace splatmap
