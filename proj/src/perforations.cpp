#include "homlab/perforations.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace homlab {

std::string to_string(PerforationKind k) {
    switch (k) {
        case PerforationKind::None: return "none";
        case PerforationKind::PeriodicDiscs: return "periodic-discs";
        case PerforationKind::ShiftedPeriodicDiscs: return "shifted-periodic-discs";
        case PerforationKind::RandomRectangles: return "random-rectangles";
    }
    return "?";
}

PerforationKind parse_perforation_kind(const std::string& name) {
    if (name == "none") return PerforationKind::None;
    if (name == "periodic-discs") return PerforationKind::PeriodicDiscs;
    if (name == "shifted-periodic-discs") return PerforationKind::ShiftedPeriodicDiscs;
    if (name == "random-rectangles") return PerforationKind::RandomRectangles;
    throw ParameterError("unknown perforation kind '" + name + "'");
}

PerforationSet::PerforationSet(const PerforationSpec& spec) : spec_(spec) {
    switch (spec.kind) {
        case PerforationKind::None: break;
        case PerforationKind::PeriodicDiscs:
        case PerforationKind::ShiftedPeriodicDiscs: {
            if (!(spec.epsilon > 0.0)) throw ParameterError("disc period epsilon must be positive");
            if (!(spec.radius_factor > 0.0)) throw ParameterError("disc radius factor must be positive");
            radius_ = spec.radius_factor * spec.epsilon;
            const double base = spec.kind == PerforationKind::PeriodicDiscs ? 0.5 * spec.epsilon : 0.0;
            offset_ = Vec2(base, base) + spec.shift;
            break;
        }
        case PerforationKind::RandomRectangles: {
            if (spec.width_min <= 0.0 || spec.width_max < spec.width_min || spec.height_min <= 0.0 ||
                spec.height_max < spec.height_min)
                throw ParameterError("rectangle size ranges must be positive and ordered");
            std::mt19937_64 engine(spec.seed);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            rects_.reserve(spec.count);
            for (std::size_t i = 0; i < spec.count; ++i) {
                Rect r;
                r.cx = unit(engine);
                r.cy = unit(engine);
                r.width = spec.width_min + (spec.width_max - spec.width_min) * unit(engine);
                r.height = spec.height_min + (spec.height_max - spec.height_min) * unit(engine);
                rects_.push_back(r);
            }
            buckets_ = 32;
            bucket_rects_.assign(static_cast<std::size_t>(buckets_) * buckets_, {});
            for (std::size_t k = 0; k < rects_.size(); ++k) {
                const Rect& r = rects_[k];
                auto cell = [&](double v) { return std::clamp(static_cast<int>(std::floor(v * buckets_)), 0, buckets_ - 1); };
                const int i0 = cell(r.cx - 0.5 * r.width), i1 = cell(r.cx + 0.5 * r.width);
                const int j0 = cell(r.cy - 0.5 * r.height), j1 = cell(r.cy + 0.5 * r.height);
                for (int j = j0; j <= j1; ++j)
                    for (int i = i0; i <= i1; ++i) bucket_rects_[static_cast<std::size_t>(j) * buckets_ + i].push_back(k);
            }
            break;
        }
    }
}

bool PerforationSet::contains(double x, double y) const {
    switch (spec_.kind) {
        case PerforationKind::None: return false;
        case PerforationKind::PeriodicDiscs:
        case PerforationKind::ShiftedPeriodicDiscs: {
            const double eps = spec_.epsilon;
            double dx = x - offset_.x();
            double dy = y - offset_.y();
            dx -= eps * std::round(dx / eps);
            dy -= eps * std::round(dy / eps);
            return dx * dx + dy * dy < radius_ * radius_;
        }
        case PerforationKind::RandomRectangles: {
            const int i = std::clamp(static_cast<int>(std::floor(x * buckets_)), 0, buckets_ - 1);
            const int j = std::clamp(static_cast<int>(std::floor(y * buckets_)), 0, buckets_ - 1);
            for (auto k : bucket_rects_[static_cast<std::size_t>(j) * buckets_ + i]) {
                const Rect& r = rects_[k];
                if (std::abs(x - r.cx) < 0.5 * r.width && std::abs(y - r.cy) < 0.5 * r.height) return true;
            }
            return false;
        }
    }
    return false;
}

std::vector<std::string> PerforationSet::resolution_warnings(double h, double min_cells) const {
    std::vector<std::string> out;
    std::ostringstream os;
    switch (spec_.kind) {
        case PerforationKind::None: break;
        case PerforationKind::PeriodicDiscs:
        case PerforationKind::ShiftedPeriodicDiscs:
            if (2.0 * radius_ / h < min_cells) {
                os << to_string(spec_.kind) << " disc of radius " << radius_ << " spans " << 2.0 * radius_ / h
                   << " fine cells across (< " << min_cells << ")";
                out.push_back(os.str());
            }
            break;
        case PerforationKind::RandomRectangles:
            for (std::size_t k = 0; k < rects_.size(); ++k) {
                const Rect& r = rects_[k];
                const double cells = std::min(r.width, r.height) / h;
                if (cells < min_cells) {
                    std::ostringstream w;
                    w << "rectangle #" << k << " (" << r.width << " x " << r.height << " at " << r.cx << ", "
                      << r.cy << ") spans " << cells << " fine cells across (< " << min_cells << ")";
                    out.push_back(w.str());
                }
            }
            break;
    }
    return out;
}

std::string PerforationSet::describe() const {
    std::ostringstream os;
    os << to_string(spec_.kind);
    switch (spec_.kind) {
        case PerforationKind::None: break;
        case PerforationKind::PeriodicDiscs:
        case PerforationKind::ShiftedPeriodicDiscs:
            os << "(eps=" << spec_.epsilon << ",radius=" << radius_ << ")";
            break;
        case PerforationKind::RandomRectangles:
            os << "(count=" << spec_.count << ",seed=" << spec_.seed << ")";
            break;
    }
    return os.str();
}

PerforationSet build_perforations(const PerforationSpec& spec) {
    PerforationSet set(spec);
    if (spec.kind == PerforationKind::PeriodicDiscs || spec.kind == PerforationKind::ShiftedPeriodicDiscs) {
        if (set.radius() >= spec.epsilon / std::numbers::sqrt2)
            throw GeometryError("discs of radius " + std::to_string(set.radius()) + " cover the whole domain");
    }
    if (spec.kind != PerforationKind::None) {
        constexpr int probes = 256;
        bool any_free = false;
        for (int j = 0; j < probes && !any_free; ++j)
            for (int i = 0; i < probes && !any_free; ++i)
                any_free = !set.contains((i + 0.5) / probes, (j + 0.5) / probes);
        if (!any_free) throw GeometryError("perforations cover the whole domain");
    }
    return set;
}

Source named_source(const std::string& name) {
    if (name == "one") return [](double, double) { return 1.0; };
    if (name == "zero") return [](double, double) { return 0.0; };
    if (name == "sine")
        return [](double x, double y) {
            return std::sin(0.5 * std::numbers::pi * x) * std::sin(0.5 * std::numbers::pi * y);
        };
    throw ParameterError("unknown right-hand side '" + name + "'");
}

}  // namespace homlab
