#pragma once

#include <deque>
#include <limits>
#include <vector>

#include "splatmap/frame.hpp"
#include "splatmap/gaussian.hpp"
#include "splatmap/metrics.hpp"
#include "splatmap/renderer.hpp"
#include "splatmap/rng.hpp"

namespace splatmap {

struct SelectionConfig {
    double covis_threshold = 0.85;
    int keyframe_interval = 15;  // t_k: force a keyframe after this many frames
    int n_local = 1;
    int local_bank_size = 5;     // max bank entries
    int local_bank_interval = 3; // admit every this many frames
    int n_global = 2;
    double sigma_recency = 0.05; // sigma1, per frame index; > 0 favors recent keyframes
    double sigma_error = 10.0;   // sigma2, per unit MAE; > 0 favors under-optimized ones
    int iters_per_keyframe = 60;
    double err_init = 1.0;       // max possible MAE on [0,1] images
    bool pose_refinement = true;
};

struct OptimizerConfig {
    double lr_position = 1.6e-4;  // multiplied by scene_extent
    double lr_log_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_opacity = 5e-2;
    double lr_color = 2.5e-3;
    double lr_pose_rotation = 1e-3;
    double lr_pose_translation = 1e-3;
    double prune_opacity = 0.005;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double scene_extent = 1.0;  // meters; pipelines track this from the data
};

// A frame admitted for persistent optimization. pose is the refinable copy;
// err is the MAE of this frame's latest rendering, updated whenever the frame
// participates in an optimization step.
struct Keyframe {
    FrameInput frame;
    Pose pose;
    double err = 1.0;
    long long last_optimized = -1;
    // Adam state for the pose twist.
    Vec6 pose_m = Vec6::Zero();
    Vec6 pose_v = Vec6::Zero();
    long long pose_step = 0;
};

class KeyframeStore {
public:
    bool empty() const { return kfs_.empty(); }
    size_t size() const { return kfs_.size(); }
    Keyframe& operator[](size_t i) { return kfs_[i]; }
    const Keyframe& operator[](size_t i) const { return kfs_[i]; }
    const std::vector<Keyframe>& all() const { return kfs_; }
    Keyframe& back() { return kfs_.back(); }
    const Keyframe& back() const { return kfs_.back(); }

    void add(const FrameInput& frame, double err_init) {
        Keyframe kf;
        kf.frame = frame;
        kf.pose = frame.pose;
        kf.err = err_init;
        kfs_.push_back(std::move(kf));
    }

    // Store position of the keyframe with the given frame index, or -1.
    int find(int frame_index) const {
        for (size_t i = 0; i < kfs_.size(); ++i) {
            if (kfs_[i].frame.index == frame_index) return static_cast<int>(i);
        }
        return -1;
    }

    long long next_step() { return step_counter_++; }

private:
    std::vector<Keyframe> kfs_;
    long long step_counter_ = 0;
};

// Fraction of a's tracked points that fall inside b's frustum (positive depth
// and pixel within bounds). Uses tracked points rather than Gaussians.
inline double covisibility(const FrameInput& a, const FrameInput& b) {
    if (a.tracked_points.empty()) {
        throw no_tracked_points("covisibility: frame has no tracked points");
    }
    int inside = 0;
    for (const auto& tp : a.tracked_points) {
        const auto proj = project_point(b.pose, b.intrinsics, tp.world);
        if (!proj) continue;
        if (proj->pixel.x() >= 0.0 && proj->pixel.x() < b.intrinsics.width &&
            proj->pixel.y() >= 0.0 && proj->pixel.y() < b.intrinsics.height) {
            ++inside;
        }
    }
    return static_cast<double>(inside) / static_cast<double>(a.tracked_points.size());
}

// First frame is always a keyframe; afterwards a frame is admitted when its
// overlap with the previous keyframe drops below the threshold or
// keyframe_interval frames have elapsed. Fresh keyframes start at err_init so
// global sampling visits them until first optimized.
inline bool maybe_add_keyframe(KeyframeStore& store, const FrameInput& frame,
                               const SelectionConfig& cfg) {
    bool admit;
    if (store.empty()) {
        admit = true;
    } else {
        const Keyframe& last = store.back();
        const bool elapsed = frame.index - last.frame.index >= cfg.keyframe_interval;
        admit = elapsed || covisibility(frame, last.frame) < cfg.covis_threshold;
    }
    if (admit) store.add(frame, cfg.err_init);
    return admit;
}

// FIFO of recent frames feeding local view selection. observe() is called
// once per mapped frame and admits every local_bank_interval-th one; the
// oldest entry is discarded once the bank exceeds its size.
class LocalBank {
public:
    LocalBank(int max_size, int interval)
        : max_size_(max_size), interval_(std::max(1, interval)) {}

    void observe(const FrameInput& frame) {
        if (counter_++ % interval_ == 0 && max_size_ > 0) {
            frames_.push_back(frame);
            if (static_cast<int>(frames_.size()) > max_size_) frames_.pop_front();
        }
    }

    const std::deque<FrameInput>& frames() const { return frames_; }
    size_t size() const { return frames_.size(); }

private:
    int max_size_;
    int interval_;
    long long counter_ = 0;
    std::deque<FrameInput> frames_;
};

// The n_local bank frames with the largest overlap with the current view,
// ties broken toward newer frames. Pointers are valid until the bank mutates.
inline std::vector<const FrameInput*> select_local_views(const LocalBank& bank,
                                                         const FrameInput& current,
                                                         int n_local) {
    struct Scored {
        double covis;
        const FrameInput* frame;
    };
    std::vector<Scored> scored;
    for (const auto& f : bank.frames()) {
        if (f.index == current.index) continue;
        scored.push_back({covisibility(current, f), &f});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.covis != b.covis) return a.covis > b.covis;
        return a.frame->index > b.frame->index;
    });
    std::vector<const FrameInput*> out;
    for (size_t i = 0; i < scored.size() && static_cast<int>(out.size()) < n_local; ++i) {
        out.push_back(scored[i].frame);
    }
    return out;
}

// Sampling weights over keyframes for the current frame index:
// prob[j] = normalize(exp(sigma1 * (j - i)) * exp(sigma2 * err(j))),
// computed in log space with max subtraction.
inline std::vector<double> global_sampling_probs(const KeyframeStore& store, int current_index,
                                                 double sigma_recency, double sigma_error) {
    if (store.empty()) throw empty_keyframe_set("global_sampling_probs: no keyframes");
    std::vector<double> log_w(store.size());
    double max_log = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < store.size(); ++j) {
        log_w[j] = sigma_recency * (store[j].frame.index - current_index) +
                   sigma_error * store[j].err;
        max_log = std::max(max_log, log_w[j]);
    }
    double sum = 0.0;
    for (auto& w : log_w) {
        w = std::exp(w - max_log);
        sum += w;
    }
    for (auto& w : log_w) w /= sum;
    return log_w;
}

// n_global draws without replacement (renormalizing after each draw),
// skipping excluded frame indices. Returns store positions in draw order;
// returns all candidates when n_global covers them.
inline std::vector<size_t> sample_global_views(const KeyframeStore& store, int current_index,
                                               int n_global, Rng& rng,
                                               const std::vector<int>& excluded_frame_indices,
                                               double sigma_recency, double sigma_error) {
    std::vector<size_t> candidates;
    for (size_t j = 0; j < store.size(); ++j) {
        bool excluded = false;
        for (const int e : excluded_frame_indices) {
            if (store[j].frame.index == e) {
                excluded = true;
                break;
            }
        }
        if (!excluded) candidates.push_back(j);
    }
    if (static_cast<int>(candidates.size()) <= n_global) return candidates;

    std::vector<double> log_w(candidates.size());
    for (size_t c = 0; c < candidates.size(); ++c) {
        const Keyframe& kf = store[candidates[c]];
        log_w[c] = sigma_recency * (kf.frame.index - current_index) + sigma_error * kf.err;
    }

    std::vector<size_t> out;
    while (static_cast<int>(out.size()) < n_global && !candidates.empty()) {
        double max_log = -std::numeric_limits<double>::infinity();
        for (const double lw : log_w) max_log = std::max(max_log, lw);
        std::vector<double> w(candidates.size());
        double sum = 0.0;
        for (size_t c = 0; c < candidates.size(); ++c) {
            w[c] = std::exp(log_w[c] - max_log);
            sum += w[c];
        }
        const double u = rng.uniform() * sum;
        double acc = 0.0;
        size_t pick = candidates.size() - 1;
        for (size_t c = 0; c < candidates.size(); ++c) {
            acc += w[c];
            if (u < acc) {
                pick = c;
                break;
            }
        }
        out.push_back(candidates[pick]);
        candidates.erase(candidates.begin() + pick);
        log_w.erase(log_w.begin() + pick);
    }
    return out;
}

namespace detail {

inline ParamVec adam_direction(AdamState& st, const ParamVec& grad, const OptimizerConfig& opt) {
    ++st.step;
    st.m = opt.beta1 * st.m + (1.0 - opt.beta1) * grad;
    st.v = opt.beta2 * st.v.array() + (1.0 - opt.beta2) * grad.array().square();
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(st.step));
    return (st.m / bc1).array() / ((st.v / bc2).array().sqrt() + opt.adam_eps);
}

inline ParamVec learning_rates(const OptimizerConfig& opt) {
    ParamVec lr;
    lr.segment<3>(0).setConstant(opt.lr_position * opt.scene_extent);
    lr.segment<3>(3).setConstant(opt.lr_log_scale);
    lr.segment<4>(6).setConstant(opt.lr_rotation);
    lr(10) = opt.lr_opacity;
    lr.segment<3>(11).setConstant(opt.lr_color);
    return lr;
}

}  // namespace detail

// One Adam step on every Gaussian (zero gradients still decay the moments,
// matching a dense optimizer over the whole map).
inline void apply_gaussian_step(GaussianMap& map, const std::vector<ParamVec>& grads,
                                const OptimizerConfig& opt) {
    const ParamVec lr = detail::learning_rates(opt);
    for (size_t i = 0; i < map.size(); ++i) {
        const ParamVec dir = detail::adam_direction(map.adam[i], grads[i], opt);
        ParamVec params = pack_params(map.gaussians[i]);
        params -= lr.cwiseProduct(dir);
        map.gaussians[i] = unpack_params(params);  // renormalizes rotation
    }
}

// pose <- se3_exp(-lr .* adam(twist_grad)) o pose, quaternion renormalized.
inline void refine_pose(Keyframe& kf, const Vec6& twist_grad, const OptimizerConfig& opt) {
    ++kf.pose_step;
    kf.pose_m = opt.beta1 * kf.pose_m + (1.0 - opt.beta1) * twist_grad;
    kf.pose_v = opt.beta2 * kf.pose_v.array() + (1.0 - opt.beta2) * twist_grad.array().square();
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(kf.pose_step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(kf.pose_step));
    const Vec6 dir =
        (kf.pose_m / bc1).array() / ((kf.pose_v / bc2).array().sqrt() + opt.adam_eps);
    Vec6 step;
    step.head<3>() = -opt.lr_pose_rotation * dir.head<3>();
    step.tail<3>() = -opt.lr_pose_translation * dir.tail<3>();
    kf.pose = se3_exp(step).compose(kf.pose);
    kf.pose.renormalize();
}

// Removes Gaussians whose decoded opacity dropped below the threshold. MOHV
// bits are intentionally left set (the structure is monotone). Returns the
// number removed.
inline size_t prune_low_opacity(GaussianMap& map, double threshold) {
    std::vector<char> keep(map.size(), 1);
    size_t removed = 0;
    for (size_t i = 0; i < map.size(); ++i) {
        if (map.gaussians[i].opacity() < threshold) {
            keep[i] = 0;
            ++removed;
        }
    }
    if (removed > 0) map.prune(keep);
    return removed;
}

struct StepReport {
    int iterations = 0;
    std::vector<double> losses;               // mean view loss per iteration
    std::vector<std::vector<int>> view_indices;  // frame indices used per iteration
    std::vector<std::pair<int, double>> err_updates;  // (frame index, latest err)
};

namespace detail {

struct ViewSpec {
    const FrameInput* frame;
    int kf_index;     // store position, -1 for non-keyframe views
    bool refinable;
};

// One joint optimization iteration over the given views: renders each view,
// accumulates photometric gradients into the Gaussians (mean over views) and
// each refinable view's pose, applies one Adam step to both, and refreshes
// err for keyframe views. Returns the mean view loss.
inline double optimize_views_once(GaussianMap& map, KeyframeStore& store,
                                  const std::vector<ViewSpec>& views,
                                  const SelectionConfig& sel, const OptimizerConfig& opt,
                                  const RenderSettings& rs, double lambda_ssim,
                                  const Vec3& background, StepReport* report) {
    const double inv_views = 1.0 / static_cast<double>(views.size());
    std::vector<ParamVec> grads(map.size(), ParamVec::Zero());
    std::vector<std::pair<int, Vec6>> pose_grads;  // (kf store index, twist)
    const long long step_id = store.next_step();

    double loss_sum = 0.0;
    for (const auto& view : views) {
        const Pose pose = view.kf_index >= 0 ? store[view.kf_index].pose : view.frame->pose;
        const RenderOutput rendered = render(map, pose, view.frame->intrinsics, background, rs);
        const LossResult loss =
            photometric_loss(rendered.image, view.frame->image, lambda_ssim);
        loss_sum += loss.loss;

        const MapGradients mg = render_backward(map, pose, view.frame->intrinsics, background,
                                                loss.grad, rendered, rs);
        for (size_t i = 0; i < map.size(); ++i) grads[i] += inv_views * mg.gaussians[i];
        if (view.refinable && sel.pose_refinement) {
            pose_grads.emplace_back(view.kf_index, (inv_views * mg.pose_twist).eval());
        }
        if (view.kf_index >= 0) {
            store[view.kf_index].err = loss.l1;  // MAE of this view's latest rendering
            store[view.kf_index].last_optimized = step_id;
            if (report) report->err_updates.emplace_back(view.frame->index, loss.l1);
        }
    }

    apply_gaussian_step(map, grads, opt);
    for (const auto& [kf_index, twist] : pose_grads) {
        refine_pose(store[kf_index], twist, opt);
    }
    return loss_sum * inv_views;
}

}  // namespace detail

// Joint optimization for one admitted keyframe: iters_per_keyframe iterations
// over the current view, the best-overlap local views, and freshly sampled
// global views (re-sampled every iteration). The current frame's tracker pose
// is held fixed during its own step; other participating keyframes' poses are
// refined.
inline StepReport map_update_step(GaussianMap& map, KeyframeStore& store, const LocalBank& bank,
                                  const FrameInput& current, const SelectionConfig& sel,
                                  const OptimizerConfig& opt, const RenderSettings& rs,
                                  double lambda_ssim, const Vec3& background, Rng& rng) {
    const int current_kf = store.find(current.index);
    if (current_kf < 0) throw no_keyframes("map_update_step: current frame is not a keyframe");

    StepReport report;
    const auto locals = select_local_views(bank, current, sel.n_local);
    std::vector<int> excluded{current.index};
    for (const auto* f : locals) excluded.push_back(f->index);

    for (int iter = 0; iter < sel.iters_per_keyframe; ++iter) {
        std::vector<detail::ViewSpec> views;
        views.push_back({&store[current_kf].frame, current_kf, /*refinable=*/false});
        for (const auto* f : locals) {
            const int kf_index = store.find(f->index);
            views.push_back({f, kf_index, /*refinable=*/kf_index >= 0});
        }
        const auto globals = sample_global_views(store, current.index, sel.n_global, rng,
                                                 excluded, sel.sigma_recency, sel.sigma_error);
        for (const size_t kf_index : globals) {
            views.push_back({&store[kf_index].frame, static_cast<int>(kf_index),
                             /*refinable=*/true});
        }

        std::vector<int> used;
        for (const auto& v : views) used.push_back(v.frame->index);
        report.view_indices.push_back(std::move(used));

        report.losses.push_back(detail::optimize_views_once(
            map, store, views, sel, opt, rs, lambda_ssim, background, &report));
        ++report.iterations;
    }
    return report;
}

// Post-refinement after the sequence: `steps` iterations sampling views over
// all keyframes with the recency term disabled (sigma1 = 0), poses still
// refinable. Low-opacity Gaussians are pruned once at the end.
inline void post_refine(GaussianMap& map, KeyframeStore& store, int steps,
                        const SelectionConfig& sel, const OptimizerConfig& opt,
                        const RenderSettings& rs, double lambda_ssim, const Vec3& background,
                        Rng& rng) {
    if (store.empty() || steps <= 0) return;
    const int views_per_step = 1 + sel.n_local + sel.n_global;
    for (int s = 0; s < steps; ++s) {
        const auto picks = sample_global_views(store, /*current_index=*/0, views_per_step, rng,
                                               {}, /*sigma_recency=*/0.0, sel.sigma_error);
        std::vector<detail::ViewSpec> views;
        for (const size_t kf_index : picks) {
            views.push_back({&store[kf_index].frame, static_cast<int>(kf_index),
                             /*refinable=*/true});
        }
        detail::optimize_views_once(map, store, views, sel, opt, rs, lambda_ssim, background,
                                    nullptr);
    }
    prune_low_opacity(map, opt.prune_opacity);
}

}  // namespace splatmap
