#include "hmdface/reconstruction.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include <opencv2/imgproc.hpp>

#include "hmdface/error.hpp"

namespace hmdface {

// Same constants as the oracle: the face sits ~500 mm away and one
// normalised unit spans 235 mm there.
namespace {
constexpr double kCaptureDistanceMm = 500.0;
constexpr double kCaptureSpanMm = 235.0;

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}
}  // namespace

void PostprocessParams::validate() const {
    if (erode_radius < 0) throw ValidationError("erode radius must be non-negative");
    if (clip_near < 0 || clip_far > 255 || clip_near >= clip_far) {
        throw ValidationError("clip range must satisfy 0 <= near < far <= 255");
    }
}

PostprocessParams default_postprocess(std::pair<int, int> face_code_range, int margin) {
    PostprocessParams p;
    p.clip_near = std::clamp(face_code_range.first - margin, 1, 254);
    p.clip_far = std::clamp(face_code_range.second + margin, p.clip_near + 1, 255);
    return p;
}

cv::Mat disc_kernel(int radius) {
    cv::Mat k = cv::Mat::zeros(2 * radius + 1, 2 * radius + 1, CV_8UC1);
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dx * dx + dy * dy <= radius * radius) k.at<std::uint8_t>(dy + radius, dx + radius) = 1;
        }
    }
    return k;
}

RgbdFrame postprocess(const RgbdFrame& frame, const PostprocessParams& params) {
    params.validate();
    RgbdFrame out = frame.clone();
    cv::Mat valid = (out.depth != out.background_code) & (out.depth >= params.clip_near) &
                    (out.depth <= params.clip_far);
    if (params.erode_radius > 0) {
        cv::erode(valid, valid, disc_kernel(params.erode_radius), cv::Point(-1, -1), 1, cv::BORDER_CONSTANT,
                  cv::Scalar(0));
    }
    out.depth.setTo(cv::Scalar(out.background_code), valid == 0);
    return out;
}

void CameraModel::validate() const {
    if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0)) throw ValidationError("focal lengths must be positive");
    if (viewport.width <= 0 || viewport.height <= 0) throw ValidationError("viewport must be non-empty");
    const cv::Matx33d e = pose.R.t() * pose.R - cv::Matx33d::eye();
    for (int i = 0; i < 9; ++i) {
        if (std::abs(e.val[i]) > 1e-6) throw ValidationError("camera rotation is not orthonormal");
    }
}

cv::Vec3d CameraModel::to_camera(const cv::Vec3d& world) const { return pose.R.t() * (world - pose.t); }

cv::Point2d CameraModel::project(const cv::Vec3d& c) const {
    return {intrinsics.fx * c[0] / c[2] + intrinsics.cx, intrinsics.fy * c[1] / c[2] + intrinsics.cy};
}

CameraModel capture_camera(Resolution res) {
    CameraModel cam;
    cam.intrinsics.fx = res.width * kCaptureDistanceMm / kCaptureSpanMm;
    cam.intrinsics.fy = res.height * kCaptureDistanceMm / kCaptureSpanMm;
    cam.intrinsics.cx = 0.5 * (res.width - 1);
    cam.intrinsics.cy = 0.5 * (res.height - 1);
    cam.viewport = {res.width, res.height};
    return cam;
}

std::pair<CameraModel, CameraModel> stereo_pair(const CameraModel& centre, double baseline_mm) {
    const cv::Vec3d axis = centre.pose.R * cv::Vec3d(1, 0, 0);
    CameraModel l = centre, r = centre;
    l.pose.t = centre.pose.t - 0.5 * baseline_mm * axis;
    r.pose.t = centre.pose.t + 0.5 * baseline_mm * axis;
    return {l, r};
}

PointCloud unproject(const RgbdFrame& frame, const CameraModel& camera) {
    camera.validate();
    const auto& k = camera.intrinsics;
    PointCloud cloud;
    cloud.xyz.reserve(static_cast<std::size_t>(frame.depth.total()));
    cloud.rgb.reserve(static_cast<std::size_t>(frame.depth.total()));
    for (int v = 0; v < frame.depth.rows; ++v) {
        const auto* d = frame.depth.ptr<std::uint8_t>(v);
        const auto* c = frame.rgb.ptr<cv::Vec3b>(v);
        for (int u = 0; u < frame.depth.cols; ++u) {
            if (d[u] == frame.background_code) continue;
            const double z = frame.depth_range.code_to_mm(d[u]);
            const cv::Vec3d pc((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z);
            const cv::Vec3d pw = camera.pose.R * pc + camera.pose.t;
            cloud.xyz.emplace_back(static_cast<float>(pw[0]), static_cast<float>(pw[1]), static_cast<float>(pw[2]));
            cloud.rgb.push_back(c[u]);
        }
    }
    return cloud;
}

void write_point_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.xyz[i];
        const auto& c = cloud.rgb[i];
        out << p[0] << ' ' << p[1] << ' ' << p[2] << ' ' << int(c[0]) << ' ' << int(c[1]) << ' ' << int(c[2])
            << '\n';
    }
}

RenderedImage rasterize_view(const PointCloud& cloud, const CameraModel& camera, int splat_radius) {
    camera.validate();
    if (splat_radius < 1) throw ValidationError("splat radius must be at least 1");
    const int w = camera.viewport.width, h = camera.viewport.height;
    RenderedImage img;
    img.rgb = cv::Mat::zeros(h, w, CV_8UC3);
    img.zbuffer = cv::Mat_<float>(h, w, std::numeric_limits<float>::infinity());
    img.index = cv::Mat_<int>(h, w, -1);
    const cv::Matx33d Rt = camera.pose.R.t();
    const int reach = splat_radius - 1;
    std::vector<cv::Point2d> proj(cloud.size());
    // Depth ties go to the splat whose centre is nearer the pixel, then to
    // the point with the smaller (v, u, colour); the index only separates
    // exact duplicates, so the image does not depend on point order.
    auto wins = [&](std::size_t a, std::size_t b, long x, long y) {
        const double da = std::hypot(proj[a].x - double(x), proj[a].y - double(y));
        const double db = std::hypot(proj[b].x - double(x), proj[b].y - double(y));
        if (da != db) return da < db;
        if (proj[a].y != proj[b].y) return proj[a].y < proj[b].y;
        if (proj[a].x != proj[b].x) return proj[a].x < proj[b].x;
        const cv::Vec3b& ca = cloud.rgb[a];
        const cv::Vec3b& cb = cloud.rgb[b];
        if (ca != cb) return std::lexicographical_compare(ca.val, ca.val + 3, cb.val, cb.val + 3);
        return a < b;
    };
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const cv::Vec3d pc = Rt * (cv::Vec3d(cloud.xyz[i]) - camera.pose.t);
        if (!(pc[2] > 0.0)) continue;
        const cv::Point2d uv = camera.project(pc);
        proj[i] = uv;
        const long cu = round_coord(uv.x), cv_ = round_coord(uv.y);
        const float z = static_cast<float>(pc[2]);
        const int idx = static_cast<int>(i);
        for (long y = cv_ - reach; y <= cv_ + reach; ++y) {
            if (y < 0 || y >= h) continue;
            for (long x = cu - reach; x <= cu + reach; ++x) {
                if (x < 0 || x >= w) continue;
                float& zb = img.zbuffer(static_cast<int>(y), static_cast<int>(x));
                int& ib = img.index(static_cast<int>(y), static_cast<int>(x));
                if (z < zb || (z == zb && wins(i, static_cast<std::size_t>(ib), x, y))) {
                    zb = z;
                    ib = idx;
                }
            }
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int ib = img.index(y, x);
            if (ib >= 0) img.rgb.at<cv::Vec3b>(y, x) = cloud.rgb[static_cast<std::size_t>(ib)];
        }
    }
    return img;
}

StereoRender render_stereo(const PointCloud& cloud, const CameraModel& left, const CameraModel& right,
                           int splat_radius) {
    StereoRender s;
    auto t0 = std::chrono::steady_clock::now();
    s.left = rasterize_view(cloud, left, splat_radius);
    s.left_ms = ms_since(t0);
    t0 = std::chrono::steady_clock::now();
    s.right = rasterize_view(cloud, right, splat_radius);
    s.right_ms = ms_since(t0);
    return s;
}

}  // namespace hmdface
