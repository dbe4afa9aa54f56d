#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "splatmap/common.hpp"
#include "splatmap/geometry.hpp"

namespace splatmap {

struct MohvConfig {
    int levels = 7;        // L; level 0 is the coarsest
    double s_init = 0.64;  // coarsest voxel edge length, meters
    int n = 64;            // voxels per dimension; n^3 hash slots per level

    // Level l has voxel edge s_init / 2^l; the finest resolution is
    // s_init / 2^(L-1).
    double voxel_size(int level) const { return s_init / static_cast<double>(1ll << level); }
};

using VoxelCoord = std::array<std::int64_t, 3>;

// Spatial hash over integer voxel coordinates, wrapping 64-bit arithmetic.
inline std::uint64_t hash_slot(const VoxelCoord& coord, int n) {
    constexpr std::uint64_t p1 = 1ull;
    constexpr std::uint64_t p2 = 2654435761ull;
    constexpr std::uint64_t p3 = 805459861ull;
    const std::uint64_t h = static_cast<std::uint64_t>(coord[0]) * p1 ^
                            static_cast<std::uint64_t>(coord[1]) * p2 ^
                            static_cast<std::uint64_t>(coord[2]) * p3;
    const std::uint64_t slots =
        static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n);
    return h % slots;
}

// Multi-level occupancy hash voxels. update() marks levels coarsest..l so
// finer levels stay unaffected; query() ANDs occupancy over levels
// coarsest..l. Bits are never cleared. Hash collisions only create false
// "occupied" answers, which conservatively over-prune; exact mode stores the
// integer coordinates themselves and exists as a test oracle.
class Mohv {
public:
    enum class Mode { hashed, exact };

    explicit Mohv(const MohvConfig& config, Mode mode = Mode::hashed)
        : config_(config), mode_(mode) {
        if (config.levels < 1) throw invariant_violation("Mohv: levels must be >= 1");
        if (config.s_init <= 0.0) throw invariant_violation("Mohv: s_init must be > 0");
        if (config.n < 2) throw invariant_violation("Mohv: n must be >= 2");
        if (mode_ == Mode::hashed) {
            const std::uint64_t slots = static_cast<std::uint64_t>(config.n) * config.n * config.n;
            bits_.assign(config.levels, std::vector<std::uint64_t>((slots + 63) / 64, 0));
        } else {
            exact_.resize(config.levels);
        }
    }

    const MohvConfig& config() const { return config_; }
    Mode mode() const { return mode_; }

    VoxelCoord voxel_coord(const Vec3& p, int level) const {
        check_level(level);
        const double size = config_.voxel_size(level);
        return {static_cast<std::int64_t>(std::floor(p.x() / size)),
                static_cast<std::int64_t>(std::floor(p.y() / size)),
                static_cast<std::int64_t>(std::floor(p.z() / size))};
    }

    // Marks the voxel of p at every level in [0, level].
    void update(const Vec3& p, int level) {
        check_level(level);
        for (int l = 0; l <= level; ++l) {
            const VoxelCoord c = voxel_coord(p, l);
            if (mode_ == Mode::hashed) {
                set_bit(l, hash_slot(c, config_.n));
            } else {
                exact_[l].insert(c);
            }
        }
    }

    // AND over occupancy at levels [0, level].
    bool query(const Vec3& p, int level) const {
        check_level(level);
        for (int l = 0; l <= level; ++l) {
            const VoxelCoord c = voxel_coord(p, l);
            const bool occupied = mode_ == Mode::hashed
                                      ? get_bit(l, hash_slot(c, config_.n))
                                      : exact_[l].count(c) > 0;
            if (!occupied) return false;
        }
        return true;
    }

    // Sequential scan in input order: a point is kept iff unoccupied when
    // visited and is immediately marked, so later duplicates in the same
    // batch are rejected.
    std::vector<size_t> filter_candidates(const std::vector<Vec3>& points, int level) {
        check_level(level);
        std::vector<size_t> kept;
        kept.reserve(points.size());
        for (size_t i = 0; i < points.size(); ++i) {
            if (query(points[i], level)) continue;
            update(points[i], level);
            kept.push_back(i);
        }
        return kept;
    }

    // Level whose voxel size best matches a world-space scale:
    // clamp(floor(log2(s_init / scale)), 0, L-1).
    int level_for_scale(double scale) const {
        if (!(scale > 0.0)) throw non_positive_scale("level_for_scale: scale must be > 0");
        const double raw = std::floor(std::log2(config_.s_init / scale));
        if (raw < 0.0) return 0;
        if (raw > config_.levels - 1) return config_.levels - 1;
        return static_cast<int>(raw);
    }

    // Hashed-mode occupancy storage in bits: exactly L * n^3.
    std::uint64_t storage_bits() const {
        const std::uint64_t slots = static_cast<std::uint64_t>(config_.n) * config_.n * config_.n;
        return static_cast<std::uint64_t>(config_.levels) * slots;
    }

private:
    void check_level(int level) const {
        if (level < 0 || level >= config_.levels) {
            throw level_out_of_range("Mohv: level " + std::to_string(level) +
                                     " outside [0, " + std::to_string(config_.levels - 1) + "]");
        }
    }

    void set_bit(int level, std::uint64_t slot) {
        bits_[level][slot >> 6] |= 1ull << (slot & 63);
    }
    bool get_bit(int level, std::uint64_t slot) const {
        return (bits_[level][slot >> 6] >> (slot & 63)) & 1ull;
    }

    MohvConfig config_;
    Mode mode_;
    std::vector<std::vector<std::uint64_t>> bits_;  // hashed mode
    std::vector<std::set<VoxelCoord>> exact_;       // exact mode (oracle)
};

}  // namespace splatmap
