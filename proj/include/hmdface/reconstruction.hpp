#pragma once

// RGBD postprocessing, point-cloud unprojection and z-buffered point
// splatting.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <opencv2/core.hpp>

#include "hmdface/synthetic_face.hpp"

namespace hmdface {

struct PostprocessParams {
    int erode_radius = 2;
    int clip_near = 1;    // inclusive depth codes kept
    int clip_far = 254;

    void validate() const;
};

// Clip range from a dataset's face depth codes, widened by `margin` codes.
PostprocessParams default_postprocess(std::pair<int, int> face_code_range, int margin = 4);

// Disc structuring element: offsets with dx^2 + dy^2 <= r^2.
cv::Mat disc_kernel(int radius);

// Codes outside [clip_near, clip_far] become background, then the valid mask
// is eroded with a disc (pixels outside the image count as invalid). RGB is
// left untouched.
RgbdFrame postprocess(const RgbdFrame& frame, const PostprocessParams& params);

struct Intrinsics {
    double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
};

// Camera-to-world rigid transform: p_world = R * p_cam + t.
struct Pose {
    cv::Matx33d R = cv::Matx33d::eye();
    cv::Vec3d t{0, 0, 0};
};

struct CameraModel {
    Intrinsics intrinsics;
    Pose pose;
    cv::Size viewport{256, 256};

    // Throws ValidationError on non-positive focal lengths or viewport, or a
    // rotation that is not orthonormal within 1e-6.
    void validate() const;
    cv::Vec3d to_camera(const cv::Vec3d& world) const;
    // Pixel coordinates of a camera-space point (z > 0).
    cv::Point2d project(const cv::Vec3d& cam) const;
};

// The virtual camera the oracle's frames are captured from, at `resolution`.
CameraModel capture_camera(Resolution resolution = {});

// Horizontal pair around `centre`, eyes at -baseline/2 and +baseline/2
// along the camera x axis.
std::pair<CameraModel, CameraModel> stereo_pair(const CameraModel& centre, double baseline_mm);

struct PointCloud {
    std::vector<cv::Vec3f> xyz;  // millimetres, world frame
    std::vector<cv::Vec3b> rgb;  // R,G,B

    std::size_t size() const { return xyz.size(); }
};

PointCloud unproject(const RgbdFrame& frame, const CameraModel& camera);

// Text export, one "x y z r g b" line per point.
void write_point_cloud(const PointCloud& cloud, const std::filesystem::path& path);

struct RenderedImage {
    cv::Mat rgb;               // CV_8UC3 R,G,B, black where nothing landed
    cv::Mat_<float> zbuffer;   // camera z in mm, +inf where empty
    cv::Mat_<int> index;       // winning point index, -1 where empty
};

// Square splats of side 2k-1 centred on the rounded projection; smaller z
// wins; on equal z the splat centred nearer the pixel wins, so the result
// does not depend on point order.
RenderedImage rasterize_view(const PointCloud& cloud, const CameraModel& camera, int splat_radius = 1);

struct StereoRender {
    RenderedImage left, right;
    double left_ms = 0.0, right_ms = 0.0;
};

StereoRender render_stereo(const PointCloud& cloud, const CameraModel& left, const CameraModel& right,
                           int splat_radius = 1);

}  // namespace hmdface
