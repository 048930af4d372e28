#pragma once

#include "homlab/types.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace homlab {

enum class PerforationKind { None, PeriodicDiscs, ShiftedPeriodicDiscs, RandomRectangles };

std::string to_string(PerforationKind k);
PerforationKind parse_perforation_kind(const std::string& name);

/// Axis-aligned rectangle given by its center and full width/height.
struct Rect {
    double cx = 0.0;
    double cy = 0.0;
    double width = 0.0;
    double height = 0.0;
};

struct PerforationSpec {
    PerforationKind kind = PerforationKind::None;
    /// Disc lattice period and radius / period.
    double epsilon = 0.1;
    double radius_factor = 0.2;
    /// Extra lattice shift applied on top of the kind's own placement.
    Vec2 shift = Vec2::Zero();
    /// Random rectangles: count, size ranges (uniform) and seed.
    std::size_t count = 100;
    double width_min = 0.02;
    double width_max = 0.05;
    double height_min = 0.02;
    double height_max = 0.05;
    std::uint64_t seed = 1;
};

/// Perforations B_eps inside D = (0,1)^2. Unshifted discs are centered at
/// ((i + 1/2) eps, (j + 1/2) eps); the shifted kind moves them by eps/2 onto
/// the lattice points (i eps, j eps).
class PerforationSet {
public:
    PerforationSet() = default;
    explicit PerforationSet(const PerforationSpec& spec);

    const PerforationSpec& spec() const { return spec_; }
    PerforationKind kind() const { return spec_.kind; }
    double radius() const { return radius_; }
    const Vec2& center_offset() const { return offset_; }
    const std::vector<Rect>& rects() const { return rects_; }

    /// Open-set membership test for B_eps.
    bool contains(double x, double y) const;

    /// Diagnostics for perforations narrower than min_cells fine cells of size h.
    std::vector<std::string> resolution_warnings(double h, double min_cells = 4.0) const;

    std::string describe() const;

private:
    PerforationSpec spec_;
    double radius_ = 0.0;
    Vec2 offset_ = Vec2::Zero();
    std::vector<Rect> rects_;
    // Bucket grid over D for rectangle lookups.
    int buckets_ = 0;
    std::vector<std::vector<std::size_t>> bucket_rects_;
};

/// Throws GeometryError when the perforations cover D.
PerforationSet build_perforations(const PerforationSpec& spec);

using Source = std::function<double(double, double)>;

/// "one" (f = 1) or "sine" (f = sin(pi x / 2) sin(pi y / 2)).
Source named_source(const std::string& name);

}  // namespace homlab
