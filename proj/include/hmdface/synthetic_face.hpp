#pragma once

// Procedural 2.5-D face oracle. Stands in for the capture rig and the head
// mounted cameras: renders an RGBD face, gives exact landmarks for it, and
// produces the grayscale IR views seen by the lower-face and brow cameras.
//
// All geometry is analytic in normalised face coordinates, so every output is
// a deterministic function of (identity, expression, resolution).

#include <cstdint>

#include <opencv2/core.hpp>

#include "hmdface/flm.hpp"

namespace hmdface {

struct ExpressionParams {
    double mouth_open = 0.0;        // [0, 1]
    double smile = 0.0;             // [-1, 1]
    double brow_raise_left = 0.0;   // [-1, 1]
    double brow_raise_right = 0.0;  // [-1, 1]
    double eye_open_left = 1.0;     // [0, 1]
    double eye_open_right = 1.0;    // [0, 1]
    double gaze_x = 0.0;            // [-1, 1], +1 looks image-right
    double gaze_y = 0.0;            // [-1, 1], +1 looks down
    double jaw_shift = 0.0;         // [-1, 1]

    static ExpressionParams neutral() { return {}; }
    // Throws ValidationError naming the first out-of-range field.
    void validate() const;
    ExpressionParams clamped() const;
    friend bool operator==(const ExpressionParams&, const ExpressionParams&) = default;
};

struct IdentitySpec {
    std::uint64_t seed = 0;
    double face_width = 0.32;      // ellipse semi-axis, fraction of image width
    double face_height = 0.42;     // ellipse semi-axis, fraction of image height
    double eye_height = 0.42;      // eye line
    double eye_spacing = 0.14;     // half distance between eye centres
    double nose_length = 0.17;     // eye line to nose tip
    double mouth_width = 0.09;     // mouth half-width
    double brow_thickness = 0.022;
    double skin_tone = 0.3;        // 0 light .. 1 dark
    double skin_ir = 180.0;        // IR gray level of lit skin
    double brow_contrast = 60.0;   // IR gray levels between shaded skin floor and brow
    double iris_hue = 0.0;         // 0 brown .. 1 blue

    // Deterministic draw of the shape scalars. `min_contrast` is the floor on
    // brow_contrast.
    static IdentitySpec from_seed(std::uint64_t seed, double min_contrast = 40.0);
    void validate() const;
    friend bool operator==(const IdentitySpec&, const IdentitySpec&) = default;
};

struct DepthRange {
    double near_mm = 400.0;
    double far_mm = 700.0;

    double mm_per_code() const { return (far_mm - near_mm) / 255.0; }
    double code_to_mm(double code) const { return near_mm + code * mm_per_code(); }
    double mm_to_code(double mm) const { return (mm - near_mm) / mm_per_code(); }
    friend bool operator==(const DepthRange&, const DepthRange&) = default;
};

// RGB texture + quantised depth. `rgb` is CV_8UC3 in R,G,B channel order,
// `depth` is CV_8UC1.
struct RgbdFrame {
    cv::Mat rgb;
    cv::Mat depth;
    DepthRange depth_range{};
    std::uint8_t background_code = 0;

    Resolution resolution() const { return {depth.cols, depth.rows}; }
    cv::Mat valid_mask() const { return depth != background_code; }
    RgbdFrame clone() const { return {rgb.clone(), depth.clone(), depth_range, background_code}; }
    friend bool operator==(const RgbdFrame& a, const RgbdFrame& b);
};

// Reference-space landmarks of the face.
FacialLandmarkSet landmarks_of(const IdentitySpec& identity, const ExpressionParams& params,
                               Resolution resolution = {});

RgbdFrame render_face(const IdentitySpec& identity, const ExpressionParams& params,
                      Resolution resolution = {});

// Colours the renderer uses, exposed for probes in tests.
struct FacePalette {
    cv::Vec3b skin;
    cv::Vec3b brow;
    cv::Vec3b iris;
    cv::Vec3b lip;
    cv::Vec3b mouth;
    cv::Vec3b sclera;
};
FacePalette palette_of(const IdentitySpec& identity);

// Face outline (closed polygon) in pixel coordinates of `resolution`.
std::vector<cv::Point2d> face_outline(const IdentitySpec& identity, const ExpressionParams& params,
                                      Resolution resolution = {});

// Fixed virtual head-mounted camera poses, as affine maps from 256 reference
// space into each view's pixel grid.
struct HmcGeometry {
    cv::Matx23d lower_face;
    cv::Matx23d left_eye;
    cv::Matx23d right_eye;
    cv::Size lower_size{256, 256};
    cv::Size eye_size{128, 128};
};
const HmcGeometry& hmc_geometry();

struct HmcViews {
    cv::Mat lower_face_ir;  // CV_8UC1, hmc_geometry().lower_size
    cv::Mat left_eye_ir;    // CV_8UC1, hmc_geometry().eye_size
    cv::Mat right_eye_ir;
};

HmcViews render_hmc_views(const IdentitySpec& identity, const ExpressionParams& params);

// Reference-resolution IR rendering the views are warped from.
cv::Mat render_face_ir(const IdentitySpec& identity, const ExpressionParams& params,
                       Resolution resolution = {});

// Apply a 2x3 affine to a point.
inline Point2 apply_affine(const cv::Matx23d& m, Point2 p) {
    return {m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2), m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)};
}
cv::Matx23d invert_affine(const cv::Matx23d& m);
cv::Matx23d compose_affine(const cv::Matx23d& outer, const cv::Matx23d& inner);

}  // namespace hmdface
