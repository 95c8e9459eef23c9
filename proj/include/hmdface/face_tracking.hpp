#pragma once

// Partial landmark sources standing in for the head-mounted cameras.
// The learned lower-face regressor lives in lowerface_cnn.hpp; this header
// holds the report type and the non-learned trackers.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "hmdface/flm.hpp"
#include "hmdface/synthetic_face.hpp"

namespace hmdface {

enum class Source : int { LowerFace = 0, BrowLeft = 1, BrowRight = 2, EyeLeft = 3, EyeRight = 4 };
inline constexpr std::size_t kSourceCount = 5;

std::string to_string(Source s);
Source source_from_string(const std::string& s);

struct PartialLandmarkReport {
    Source source = Source::LowerFace;
    std::vector<std::size_t> indices;  // empty means tracking lost
    std::vector<Point2> points;        // 256 reference space, parallel to indices
    std::optional<double> eye_open;
    std::optional<std::array<double, 2>> gaze;
    std::uint64_t timestamp_us = 0;

    bool tracking_lost() const { return indices.empty(); }
    // Throws StructuralError when indices/points disagree or an index is >= 70.
    void validate() const;
};

// pixel < threshold -> 1, else 0.  CV_8UC1 in, CV_8UC1 out.
cv::Mat binarize(const cv::Mat& gray, int threshold);

// Eyebrow tracker. `side` 0 is the image-left brow (17-21), 1 the right
// (22-26).
struct BrowTrackState {
    int side = 0;
    int threshold = 128;
    int band_begin = 40;         // search columns [band_begin, band_end)
    int band_end = 88;
    double baseline_row = 0.0;   // neutral brow row in view pixels
    double gain = 1.0;           // reference pixels per view pixel, vertical
    std::array<Point2, 5> anchors{};  // neutral brow landmarks, reference space

    void validate(cv::Size view) const;
};

// Median over the band of the topmost background->brow transition row, or
// nullopt when at least half of the columns have none.
std::optional<double> brow_row(const cv::Mat& gray, const BrowTrackState& state);

PartialLandmarkReport track_brow(const cv::Mat& gray, const BrowTrackState& state, std::uint64_t timestamp_us = 0);

// Build a tracker state from a neutral view. Throws CalibrationError when no
// brow is visible at `threshold`.
BrowTrackState calibrate_brow(const cv::Mat& neutral_view, int side, int threshold,
                              const FacialLandmarkSet& neutral_reference);

// Threshold halfway between the brow level and the darkest lit skin of the
// identity.
int suggested_brow_threshold(const IdentitySpec& identity);

// Eye geometry measured once from the neutral reference set; openness and
// gaze are then mapped linearly onto lids and iris.
struct EyeGeometry {
    struct Eye {
        std::array<Point2, 2> corners{};  // 36/39 or 42/45
        double centre_x = 0.0, line_y = 0.0, half_width = 0.0;
        double upper_gap = 0.0, lower_gap = 0.0;  // lid offsets at full openness
        std::array<double, 2> lid_x{};            // x of the two lid landmarks
    };
    std::array<Eye, 2> eyes{};
    static EyeGeometry from_neutral(const FacialLandmarkSet& neutral_reference);
};

struct GazeSignals {
    double eye_open_left = 1.0;
    double eye_open_right = 1.0;
    double gaze_x = 0.0;
    double gaze_y = 0.0;
    static GazeSignals from_params(const ExpressionParams& p) {
        return {p.eye_open_left, p.eye_open_right, p.gaze_x, p.gaze_y};
    }
};

// Returns {eye-left report (36-41, 68), eye-right report (42-47, 69)}.
std::array<PartialLandmarkReport, 2> gaze_source(const EyeGeometry& geometry, const GazeSignals& signals,
                                                 std::uint64_t timestamp_us = 0);

}  // namespace hmdface
