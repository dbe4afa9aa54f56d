#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "splatmap/frame.hpp"
#include "splatmap/gaussian.hpp"
#include "splatmap/metrics.hpp"
#include "splatmap/mohv.hpp"
#include "splatmap/renderer.hpp"

namespace splatmap {

struct ManagementConfig {
    double scale_eps = 1e-4;      // epsilon added to d/f, meters
    double ssim_threshold = 0.5;  // pixels below this SSIM are compensated
    int error_comp_pixels = 200;  // k: compensation pixels per keyframe
    double opacity_init = 0.5;
    bool error_comp_enabled = true;
    bool mohv_enabled = true;
};

// World-space size of the Gaussian matching one pixel at depth d: d/f + eps.
inline double gaussian_scale(double depth, double focal, double eps) {
    if (depth < 0.0) throw non_positive_input("gaussian_scale: negative depth");
    if (focal <= 0.0) throw non_positive_input("gaussian_scale: focal must be > 0");
    if (eps < 0.0) throw non_positive_input("gaussian_scale: negative eps");
    return depth / focal + eps;
}

// Median Gaussian scale over the frame's tracked points (lower median for
// even counts, so the result is deterministic and permutation-invariant).
inline double camera_scale(const FrameInput& frame, double eps) {
    if (frame.tracked_points.empty()) {
        throw no_tracked_points("camera_scale: frame has no tracked points");
    }
    std::vector<double> scales;
    scales.reserve(frame.tracked_points.size());
    for (const auto& tp : frame.tracked_points) {
        scales.push_back(gaussian_scale(tp.depth, frame.intrinsics.fx, eps));
    }
    const size_t mid = (scales.size() - 1) / 2;
    std::nth_element(scales.begin(), scales.begin() + mid, scales.end());
    return scales[mid];
}

struct SeedCandidate {
    enum class Source { feature, error_comp };
    Vec3 world;
    Source source = Source::feature;
    Vec2 pixel;
    double depth = 0.0;
    Vec3 color;
};

// Sparse depth for compensation pixels. Implementations must return strictly
// positive finite depths or nothing.
class DepthProvider {
public:
    virtual ~DepthProvider() = default;
    virtual std::optional<double> depth_at(const FrameInput& frame, const Vec2& pixel) const = 0;
};

// Exact depth lookup for synthetic scenes.
class GroundTruthDepthProvider : public DepthProvider {
public:
    explicit GroundTruthDepthProvider(ScalarImage depth_map) : depth_(std::move(depth_map)) {}

    std::optional<double> depth_at(const FrameInput&, const Vec2& pixel) const override {
        const int x = static_cast<int>(std::lround(pixel.x()));
        const int y = static_cast<int>(std::lround(pixel.y()));
        if (x < 0 || x >= depth_.width || y < 0 || y >= depth_.height) return std::nullopt;
        const double d = depth_.at(x, y);
        if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
        return d;
    }

private:
    ScalarImage depth_;
};

// Fallback for real data: depth of the nearest tracked point within a pixel
// radius, no estimate beyond it.
class NearestPointDepthProvider : public DepthProvider {
public:
    explicit NearestPointDepthProvider(double radius_px = 40.0) : radius_(radius_px) {}

    std::optional<double> depth_at(const FrameInput& frame, const Vec2& pixel) const override {
        double best_sq = radius_ * radius_;
        std::optional<double> best;
        for (const auto& tp : frame.tracked_points) {
            const double d_sq = (tp.pixel - pixel).squaredNorm();
            if (d_sq < best_sq) {
                best_sq = d_sq;
                best = tp.depth;
            }
        }
        return best;
    }

private:
    double radius_;
};

// One candidate per tracked point; color sampled bilinearly at the pixel.
inline std::vector<SeedCandidate> seed_from_features(const FrameInput& frame) {
    std::vector<SeedCandidate> out;
    out.reserve(frame.tracked_points.size());
    for (const auto& tp : frame.tracked_points) {
        SeedCandidate c;
        c.world = tp.world;
        c.source = SeedCandidate::Source::feature;
        c.pixel = tp.pixel;
        c.depth = tp.depth;
        c.color = frame.image.sample_bilinear(tp.pixel.x(), tp.pixel.y());
        out.push_back(c);
    }
    return out;
}

namespace detail {

// Stratified pick over low-SSIM pixels: image divided into a 16x16 cell grid,
// eligible pixels ranked by ascending SSIM, at most ceil(k / eligible-cell
// count) accepted per cell.
inline std::vector<size_t> select_compensation_pixels(const ScalarImage& ssim, double eps_e,
                                                      int k) {
    struct Entry {
        double ssim;
        size_t pixel;
        int cell;
    };
    constexpr int kGrid = 16;
    const int cell_w = std::max(1, (ssim.width + kGrid - 1) / kGrid);
    const int cell_h = std::max(1, (ssim.height + kGrid - 1) / kGrid);

    std::vector<Entry> eligible;
    std::vector<char> cell_seen(kGrid * kGrid, 0);
    for (int y = 0; y < ssim.height; ++y) {
        for (int x = 0; x < ssim.width; ++x) {
            const double v = ssim.at(x, y);
            if (v >= eps_e) continue;
            const int cell = (y / cell_h) * kGrid + (x / cell_w);
            eligible.push_back({v, static_cast<size_t>(y) * ssim.width + x, cell});
            cell_seen[cell] = 1;
        }
    }
    if (eligible.empty() || k <= 0) return {};

    int eligible_cells = 0;
    for (const char s : cell_seen) eligible_cells += s;
    const int per_cell = (k + eligible_cells - 1) / eligible_cells;

    std::sort(eligible.begin(), eligible.end(), [](const Entry& a, const Entry& b) {
        if (a.ssim != b.ssim) return a.ssim < b.ssim;
        return a.pixel < b.pixel;  // deterministic tie-break
    });

    std::vector<int> cell_count(kGrid * kGrid, 0);
    std::vector<size_t> selected;
    for (const auto& e : eligible) {
        if (static_cast<int>(selected.size()) >= k) break;
        if (cell_count[e.cell] >= per_cell) continue;
        ++cell_count[e.cell];
        selected.push_back(e.pixel);
    }
    return selected;
}

}  // namespace detail

// Seeds candidates at pixels where the rendering disagrees with the observed
// image (per-pixel SSIM below eps_e). Depths come from the provider; pixels
// without an estimate are dropped, so fewer than k candidates may return.
inline std::vector<SeedCandidate> error_compensation(const FrameInput& frame,
                                                     const RenderOutput& rendered, int k,
                                                     double eps_e, const DepthProvider& dp) {
    if (!rendered.image.same_shape(frame.image)) {
        throw dimension_mismatch("error_compensation: render and frame shapes differ");
    }
    const ScalarImage ssim = ssim_map(rendered.image, frame.image);
    const auto pixels = detail::select_compensation_pixels(ssim, eps_e, k);

    std::vector<SeedCandidate> out;
    out.reserve(pixels.size());
    for (const size_t pix : pixels) {
        const int x = static_cast<int>(pix % frame.image.width);
        const int y = static_cast<int>(pix / frame.image.width);
        const Vec2 pixel(static_cast<double>(x), static_cast<double>(y));
        const auto depth = dp.depth_at(frame, pixel);
        if (!depth) continue;
        SeedCandidate c;
        c.world = backproject_pixel(frame.pose, frame.intrinsics, pixel, *depth);
        c.source = SeedCandidate::Source::error_comp;
        c.pixel = pixel;
        c.depth = *depth;
        c.color = frame.image.pixel(x, y);
        out.push_back(c);
    }
    return out;
}

// MOHV-filtered insertion at the keyframe's camera-scale level. Feature
// candidates are visited before error-compensation ones. Kept candidates
// become isotropic Gaussians with scale from gaussian_scale at their depth.
// Returns the number inserted.
inline size_t densify(GaussianMap& map, Mohv& mohv, const FrameInput& frame,
                      std::vector<SeedCandidate> candidates, const ManagementConfig& cfg) {
    if (candidates.empty()) return 0;

    std::stable_partition(candidates.begin(), candidates.end(), [](const SeedCandidate& c) {
        return c.source == SeedCandidate::Source::feature;
    });

    std::vector<size_t> kept;
    if (cfg.mohv_enabled) {
        const double cam_scale = camera_scale(frame, cfg.scale_eps);
        const int level = mohv.level_for_scale(cam_scale);
        std::vector<Vec3> positions;
        positions.reserve(candidates.size());
        for (const auto& c : candidates) positions.push_back(c.world);
        kept = mohv.filter_candidates(positions, level);
    } else {
        kept.resize(candidates.size());
        for (size_t i = 0; i < kept.size(); ++i) kept[i] = i;
    }

    std::vector<Gaussian> batch;
    batch.reserve(kept.size());
    const double logit_opacity = logit(cfg.opacity_init);
    for (const size_t i : kept) {
        const auto& c = candidates[i];
        Gaussian g;
        g.position = c.world;
        const double s = gaussian_scale(c.depth, frame.intrinsics.fx, cfg.scale_eps);
        g.log_scale = Vec3::Constant(std::log(s));
        g.rotation = Quat::Identity();
        g.logit_opacity = logit_opacity;
        g.color = c.color;
        batch.push_back(g);
    }
    map.insert(batch);
    return batch.size();
}

}  // namespace splatmap
