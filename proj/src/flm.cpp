#include "hmdface/flm.hpp"

#include <algorithm>
#include <string>

#include "hmdface/error.hpp"

namespace hmdface {

std::size_t mirror_index(std::size_t i) {
    static const std::array<std::size_t, kLandmarkCount> table = [] {
        std::array<std::size_t, kLandmarkCount> t{};
        for (std::size_t k = 0; k < kLandmarkCount; ++k) t[k] = k;
        auto pair = [&t](std::size_t a, std::size_t b) {
            t[a] = b;
            t[b] = a;
        };
        for (std::size_t k = 0; k < 8; ++k) pair(k, 16 - k);
        for (std::size_t k = 0; k < 5; ++k) pair(17 + k, 26 - k);
        pair(31, 35);
        pair(32, 34);
        pair(36, 45);
        pair(37, 44);
        pair(38, 43);
        pair(39, 42);
        pair(40, 47);
        pair(41, 46);
        pair(48, 54);
        pair(49, 53);
        pair(50, 52);
        pair(55, 59);
        pair(56, 58);
        pair(60, 64);
        pair(61, 63);
        pair(65, 67);
        pair(68, 69);
        return t;
    }();
    return table.at(i);
}

FacialLandmarkSet make_landmark_set(std::span<const Point2> points, Resolution resolution) {
    if (points.size() != kLandmarkCount) {
        throw StructuralError("landmark set needs exactly 70 points, got " +
                              std::to_string(points.size()));
    }
    if (resolution.width <= 0 || resolution.height <= 0) {
        throw ValidationError("landmark set resolution must be positive");
    }
    FacialLandmarkSet s;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        if (!std::isfinite(points[i].x) || !std::isfinite(points[i].y)) {
            throw ValidationError("landmark " + std::to_string(i) + " has a non-finite coordinate");
        }
        s.points_[i] = points[i];
    }
    s.resolution_ = resolution;
    return s;
}

FacialLandmarkSet landmark_set_from_flat(std::span<const double> xy, Resolution resolution) {
    if (xy.size() != 2 * kLandmarkCount) {
        throw StructuralError("flat landmark list needs 140 numbers, got " +
                              std::to_string(xy.size()));
    }
    std::array<Point2, kLandmarkCount> pts;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) pts[i] = {xy[2 * i], xy[2 * i + 1]};
    return make_landmark_set(pts, resolution);
}

std::vector<double> FacialLandmarkSet::flat() const {
    std::vector<double> out;
    out.reserve(2 * kLandmarkCount);
    for (const auto& p : points_) {
        out.push_back(p.x);
        out.push_back(p.y);
    }
    return out;
}

FacialLandmarkSet FacialLandmarkSet::rescaled(Resolution target) const {
    if (target == resolution_) return *this;
    const double sx = static_cast<double>(target.width) / resolution_.width;
    const double sy = static_cast<double>(target.height) / resolution_.height;
    Points pts;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) pts[i] = {points_[i].x * sx, points_[i].y * sy};
    return make_landmark_set(pts, target);
}

FacialLandmarkSet FacialLandmarkSet::rounded() const {
    FacialLandmarkSet s = *this;
    for (auto& p : s.points_) {
        p.x = static_cast<double>(round_coord(p.x));
        p.y = static_cast<double>(round_coord(p.y));
    }
    return s;
}

FacialLandmarkSet FacialLandmarkSet::with_point(std::size_t i, Point2 p) const {
    Points pts = points_;
    pts.at(i) = p;
    return make_landmark_set(pts, resolution_);
}

bool operator==(const LandmarkMap& a, const LandmarkMap& b) {
    if (a.pixels.size() != b.pixels.size() || a.pixels.type() != b.pixels.type()) return false;
    if (a.pixels.empty()) return true;
    return cv::countNonZero(a.pixels != b.pixels) == 0;
}

LandmarkMap rasterize(const FacialLandmarkSet& flm) {
    const auto res = flm.resolution();
    LandmarkMap map{cv::Mat::zeros(res.height, res.width, CV_8UC1)};
    static constexpr int kStamp[5][2] = {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (const auto& p : flm.points()) {
        const long cx = round_coord(p.x);
        const long cy = round_coord(p.y);
        for (const auto& d : kStamp) {
            const long x = cx + d[0];
            const long y = cy + d[1];
            if (x < 0 || y < 0 || x >= res.width || y >= res.height) continue;
            map.pixels.at<std::uint8_t>(static_cast<int>(y), static_cast<int>(x)) = 1;
        }
    }
    return map;
}

LandmarkBounds LandmarkBounds::rescaled(Resolution target) const {
    if (target == resolution) return *this;
    const double sx = static_cast<double>(target.width) / resolution.width;
    const double sy = static_cast<double>(target.height) / resolution.height;
    LandmarkBounds out;
    out.resolution = target;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        const auto& e = entries[i];
        out.entries[i] = {e.x_min * sx, e.x_max * sx, e.y_min * sy, e.y_max * sy};
    }
    return out;
}

FacialLandmarkSet clamp_landmarks(const FacialLandmarkSet& flm, const LandmarkBounds& bounds) {
    const LandmarkBounds b = bounds.rescaled(flm.resolution());
    FacialLandmarkSet::Points pts;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        const auto& e = b.entries[i];
        pts[i] = {std::clamp(flm[i].x, e.x_min, e.x_max), std::clamp(flm[i].y, e.y_min, e.y_max)};
    }
    return make_landmark_set(pts, flm.resolution());
}

LandmarkBounds bounds_from_dataset(std::span<const FacialLandmarkSet> flms) {
    if (flms.empty()) throw StructuralError("cannot derive landmark bounds from an empty dataset");
    LandmarkBounds b;
    b.resolution = flms.front().resolution();
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        const Point2 p = flms.front()[i];
        b.entries[i] = {p.x, p.x, p.y, p.y};
    }
    for (const auto& f : flms) {
        const FacialLandmarkSet s = f.rescaled(b.resolution);
        for (std::size_t i = 0; i < kLandmarkCount; ++i) {
            auto& e = b.entries[i];
            e.x_min = std::min(e.x_min, s[i].x);
            e.x_max = std::max(e.x_max, s[i].x);
            e.y_min = std::min(e.y_min, s[i].y);
            e.y_max = std::max(e.y_max, s[i].y);
        }
    }
    return b;
}

bool within_bounds(const FacialLandmarkSet& flm, const LandmarkBounds& bounds) {
    const LandmarkBounds b = bounds.rescaled(flm.resolution());
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        const auto& e = b.entries[i];
        if (flm[i].x < e.x_min || flm[i].x > e.x_max || flm[i].y < e.y_min || flm[i].y > e.y_max)
            return false;
    }
    return true;
}

}  // namespace hmdface
