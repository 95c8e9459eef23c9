#pragma once

// Facial landmark data model: the 70-point landmark set, its binary
// rasterization (the landmark map fed to the generator) and per-landmark
// clamping envelopes.
//
// Index layout:
//   0-16  jaw line, image-left to image-right
//   17-21 left brow, 22-26 right brow
//   27-30 nose bridge (30 = nose tip), 31-35 nostril row
//   36-41 left eye, 42-47 right eye
//   48-59 outer lip, 60-67 inner lip
//   68    left iris centre, 69 right iris centre
// "Left" always means image-left.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <opencv2/core.hpp>

namespace hmdface {

inline constexpr std::size_t kLandmarkCount = 70;
inline constexpr int kReferenceSize = 256;

namespace lm {
inline constexpr std::size_t kJawBegin = 0, kJawEnd = 17;
inline constexpr std::size_t kBrowLeftBegin = 17, kBrowLeftEnd = 22;
inline constexpr std::size_t kBrowRightBegin = 22, kBrowRightEnd = 27;
inline constexpr std::size_t kNoseTip = 30;
inline constexpr std::size_t kEyeLeftBegin = 36, kEyeLeftEnd = 42;
inline constexpr std::size_t kEyeRightBegin = 42, kEyeRightEnd = 48;
inline constexpr std::size_t kMouthLeftCorner = 48, kMouthRightCorner = 54;
inline constexpr std::size_t kInnerLipTop = 62, kInnerLipBottom = 66;
inline constexpr std::size_t kIrisLeft = 68, kIrisRight = 69;
}  // namespace lm

// Index of the landmark that lands on `i` under a horizontal flip.
std::size_t mirror_index(std::size_t i);

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

struct Resolution {
    int width = kReferenceSize;
    int height = kReferenceSize;
    friend bool operator==(const Resolution&, const Resolution&) = default;
};

// Nearest-integer rounding used for rasterization and wire encoding.
inline long round_coord(double v) { return static_cast<long>(std::floor(v + 0.5)); }

class FacialLandmarkSet {
public:
    using Points = std::array<Point2, kLandmarkCount>;

    FacialLandmarkSet() = default;

    const Points& points() const noexcept { return points_; }
    const Point2& operator[](std::size_t i) const { return points_.at(i); }
    Resolution resolution() const noexcept { return resolution_; }

    // Row order [x0, y0, ..., x69, y69].
    std::vector<double> flat() const;

    // Coordinates scaled to another resolution (independently per axis).
    FacialLandmarkSet rescaled(Resolution target) const;
    FacialLandmarkSet rounded() const;
    FacialLandmarkSet with_point(std::size_t i, Point2 p) const;

    friend bool operator==(const FacialLandmarkSet&, const FacialLandmarkSet&) = default;

private:
    friend FacialLandmarkSet make_landmark_set(std::span<const Point2>, Resolution);
    Points points_{};
    Resolution resolution_{};
};

// Throws StructuralError on a count other than 70, ValidationError on a
// non-finite coordinate or non-positive resolution. Out-of-image coordinates
// are legal.
FacialLandmarkSet make_landmark_set(std::span<const Point2> points,
                                    Resolution resolution = {});
FacialLandmarkSet landmark_set_from_flat(std::span<const double> xy,
                                         Resolution resolution = {});

// Binary single-channel image, CV_8UC1 with values in {0, 1}.
struct LandmarkMap {
    cv::Mat pixels;

    Resolution resolution() const { return {pixels.cols, pixels.rows}; }
    int count() const { return cv::countNonZero(pixels); }
    friend bool operator==(const LandmarkMap& a, const LandmarkMap& b);
};

// Each landmark stamped as a 3x3 plus (centre and 4-neighbours), clipped at
// the border, OR-combined.
LandmarkMap rasterize(const FacialLandmarkSet& flm);

struct CoordinateBound {
    double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
    friend bool operator==(const CoordinateBound&, const CoordinateBound&) = default;
};

struct LandmarkBounds {
    std::array<CoordinateBound, kLandmarkCount> entries{};
    Resolution resolution{};

    LandmarkBounds rescaled(Resolution target) const;
    friend bool operator==(const LandmarkBounds&, const LandmarkBounds&) = default;
};

FacialLandmarkSet clamp_landmarks(const FacialLandmarkSet& flm, const LandmarkBounds& bounds);

// Per-landmark min/max envelope. Throws StructuralError on an empty input.
LandmarkBounds bounds_from_dataset(std::span<const FacialLandmarkSet> flms);

bool within_bounds(const FacialLandmarkSet& flm, const LandmarkBounds& bounds);

}  // namespace hmdface
