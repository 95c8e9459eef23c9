#include "hmdface/face_tracking.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgproc.hpp>

#include "hmdface/error.hpp"

namespace hmdface {

std::string to_string(Source s) {
    switch (s) {
        case Source::LowerFace: return "lower-face";
        case Source::BrowLeft: return "brow-left";
        case Source::BrowRight: return "brow-right";
        case Source::EyeLeft: return "eye-left";
        case Source::EyeRight: return "eye-right";
    }
    return "?";
}

Source source_from_string(const std::string& s) {
    for (int i = 0; i < static_cast<int>(kSourceCount); ++i) {
        if (to_string(static_cast<Source>(i)) == s) return static_cast<Source>(i);
    }
    throw ValidationError("unknown source tag: " + s);
}

void PartialLandmarkReport::validate() const {
    if (indices.size() != points.size()) throw StructuralError("report indices and points differ in length");
    for (std::size_t i : indices) {
        if (i >= kLandmarkCount) throw StructuralError("report index " + std::to_string(i) + " out of range");
    }
}

cv::Mat binarize(const cv::Mat& gray, int threshold) {
    if (gray.type() != CV_8UC1) throw ShapeError("binarize expects an 8-bit single-channel image");
    cv::Mat out;
    // THRESH_BINARY_INV with thresh t maps v > t to 0, so t-1 gives v < t -> 1.
    cv::threshold(gray, out, threshold - 1, 1, cv::THRESH_BINARY_INV);
    return out;
}

void BrowTrackState::validate(cv::Size view) const {
    if (side != 0 && side != 1) throw ValidationError("brow side must be 0 or 1");
    if (threshold < 1 || threshold > 254) throw ValidationError("brow threshold must lie in [1, 254]");
    if (band_begin < 0 || band_end > view.width || band_begin >= band_end) {
        throw ValidationError("brow search band outside the view");
    }
}

std::optional<double> brow_row(const cv::Mat& gray, const BrowTrackState& state) {
    state.validate(gray.size());
    const cv::Mat bin = binarize(gray, state.threshold);
    std::vector<int> rows;
    for (int x = state.band_begin; x < state.band_end; ++x) {
        for (int y = 1; y < bin.rows; ++y) {
            if (bin.at<std::uint8_t>(y - 1, x) == 0 && bin.at<std::uint8_t>(y, x) == 1) {
                rows.push_back(y);
                break;
            }
        }
    }
    const auto columns = static_cast<std::size_t>(state.band_end - state.band_begin);
    if (2 * rows.size() <= columns) return std::nullopt;
    std::sort(rows.begin(), rows.end());
    const std::size_t n = rows.size();
    return n % 2 ? rows[n / 2] : 0.5 * (rows[n / 2 - 1] + rows[n / 2]);
}

PartialLandmarkReport track_brow(const cv::Mat& gray, const BrowTrackState& state, std::uint64_t timestamp_us) {
    PartialLandmarkReport r;
    r.source = state.side == 0 ? Source::BrowLeft : Source::BrowRight;
    r.timestamp_us = timestamp_us;
    const auto row = brow_row(gray, state);
    if (!row) return r;
    const double dy = state.gain * (*row - state.baseline_row);
    const std::size_t first = state.side == 0 ? lm::kBrowLeftBegin : lm::kBrowRightBegin;
    for (std::size_t k = 0; k < 5; ++k) {
        r.indices.push_back(first + k);
        r.points.push_back({state.anchors[k].x, state.anchors[k].y + dy});
    }
    return r;
}

BrowTrackState calibrate_brow(const cv::Mat& neutral_view, int side, int threshold,
                              const FacialLandmarkSet& neutral_reference) {
    BrowTrackState s;
    s.side = side;
    s.threshold = threshold;
    const cv::Matx23d& m = side == 0 ? hmc_geometry().left_eye : hmc_geometry().right_eye;
    s.gain = 1.0 / m(1, 1);
    const FacialLandmarkSet ref = neutral_reference.rescaled({kReferenceSize, kReferenceSize});
    const std::size_t first = side == 0 ? lm::kBrowLeftBegin : lm::kBrowRightBegin;
    for (std::size_t k = 0; k < 5; ++k) s.anchors[k] = ref[first + k];
    const auto row = brow_row(neutral_view, s);
    if (!row) throw CalibrationError("no brow transition visible at threshold " + std::to_string(threshold));
    s.baseline_row = *row;
    return s;
}

int suggested_brow_threshold(const IdentitySpec& identity) {
    const double skin_floor = 0.85 * identity.skin_ir;
    const double brow = skin_floor - identity.brow_contrast;
    return std::clamp(static_cast<int>(std::lround(0.5 * (skin_floor + brow))), 1, 254);
}

EyeGeometry EyeGeometry::from_neutral(const FacialLandmarkSet& neutral_reference) {
    const FacialLandmarkSet ref = neutral_reference.rescaled({kReferenceSize, kReferenceSize});
    EyeGeometry g;
    for (int side = 0; side < 2; ++side) {
        const std::size_t b = side == 0 ? lm::kEyeLeftBegin : lm::kEyeRightBegin;
        Eye& e = g.eyes[side];
        e.corners[0] = ref[b];
        e.corners[1] = ref[b + 3];
        e.centre_x = 0.5 * (ref[b].x + ref[b + 3].x);
        e.line_y = 0.5 * (ref[b].y + ref[b + 3].y);
        e.half_width = 0.5 * (ref[b + 3].x - ref[b].x);
        e.upper_gap = e.line_y - 0.5 * (ref[b + 1].y + ref[b + 2].y);
        e.lower_gap = 0.5 * (ref[b + 4].y + ref[b + 5].y) - e.line_y;
        e.lid_x = {ref[b + 1].x, ref[b + 2].x};
    }
    return g;
}

namespace {
// Iris travel as fractions of the eye half-width and of the upper lid gap.
constexpr double kIrisTravelX = 0.5;
constexpr double kIrisTravelY = 0.35;

void check_signal(double v, double lo, double hi, const char* name) {
    if (!std::isfinite(v) || v < lo || v > hi) {
        throw ValidationError(std::string("gaze signal ") + name + " outside [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
    }
}
}  // namespace

std::array<PartialLandmarkReport, 2> gaze_source(const EyeGeometry& geometry, const GazeSignals& s,
                                                 std::uint64_t timestamp_us) {
    check_signal(s.eye_open_left, 0.0, 1.0, "eye_open_left");
    check_signal(s.eye_open_right, 0.0, 1.0, "eye_open_right");
    check_signal(s.gaze_x, -1.0, 1.0, "gaze_x");
    check_signal(s.gaze_y, -1.0, 1.0, "gaze_y");

    std::array<PartialLandmarkReport, 2> out;
    for (int side = 0; side < 2; ++side) {
        const auto& e = geometry.eyes[side];
        const double open = side == 0 ? s.eye_open_left : s.eye_open_right;
        const std::size_t b = side == 0 ? lm::kEyeLeftBegin : lm::kEyeRightBegin;
        auto& r = out[side];
        r.source = side == 0 ? Source::EyeLeft : Source::EyeRight;
        r.timestamp_us = timestamp_us;
        r.eye_open = open;
        r.gaze = std::array<double, 2>{s.gaze_x, s.gaze_y};
        const double up = e.line_y - open * e.upper_gap;
        const double down = e.line_y + open * e.lower_gap;
        const Point2 pts[6] = {e.corners[0], {e.lid_x[0], up}, {e.lid_x[1], up},
                               e.corners[1], {e.lid_x[1], down}, {e.lid_x[0], down}};
        for (std::size_t k = 0; k < 6; ++k) {
            r.indices.push_back(b + k);
            r.points.push_back(pts[k]);
        }
        r.indices.push_back(side == 0 ? lm::kIrisLeft : lm::kIrisRight);
        r.points.push_back({e.centre_x + s.gaze_x * kIrisTravelX * e.half_width,
                            e.line_y + s.gaze_y * kIrisTravelY * e.upper_gap});
    }
    return out;
}

}  // namespace hmdface
