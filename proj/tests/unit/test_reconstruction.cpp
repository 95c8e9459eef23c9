#include <doctest.h>

#include <algorithm>
#include <random>

#include "hmdface/error.hpp"
#include "hmdface/reconstruction.hpp"

using namespace hmdface;

namespace {

RgbdFrame blank(int size = 32, std::uint8_t bg = 0) {
    return {cv::Mat(size, size, CV_8UC3, cv::Scalar(10, 20, 30)), cv::Mat(size, size, CV_8UC1, cv::Scalar(bg)),
            DepthRange{}, bg};
}

// Erosion by enumeration: a pixel survives when every disc offset lands on a
// valid in-image pixel.
cv::Mat brute_erode(const cv::Mat& valid, int r) {
    cv::Mat out = cv::Mat::zeros(valid.size(), CV_8UC1);
    for (int y = 0; y < valid.rows; ++y) {
        for (int x = 0; x < valid.cols; ++x) {
            bool keep = true;
            for (int dy = -r; dy <= r && keep; ++dy) {
                for (int dx = -r; dx <= r && keep; ++dx) {
                    if (dx * dx + dy * dy > r * r) continue;
                    const int xx = x + dx, yy = y + dy;
                    keep = xx >= 0 && yy >= 0 && xx < valid.cols && yy < valid.rows && valid.at<std::uint8_t>(yy, xx);
                }
            }
            if (keep) out.at<std::uint8_t>(y, x) = 255;
        }
    }
    return out;
}

}  // namespace

TEST_SUITE("reconstruction") {

TEST_CASE("empty frame passes through unchanged") {
    const RgbdFrame f = blank();
    CHECK(postprocess(f, PostprocessParams{}) == f);
}

TEST_CASE("clipping removes codes outside the range") {
    RgbdFrame f = blank();
    f.depth(cv::Rect(4, 4, 20, 20)).setTo(100);
    f.depth(cv::Rect(10, 10, 4, 4)).setTo(250);
    const RgbdFrame p = postprocess(f, PostprocessParams{0, 10, 240});
    CHECK(cv::countNonZero(p.depth == 250) == 0);
    CHECK(cv::countNonZero(p.valid_mask()) == 400 - 16);
    CHECK(cv::countNonZero(p.rgb.reshape(1) != f.rgb.reshape(1)) == 0);
}

TEST_CASE("radius 2 erosion turns a 10x10 square into 6x6") {
    RgbdFrame f = blank();
    f.depth(cv::Rect(8, 8, 10, 10)).setTo(90);
    const RgbdFrame p = postprocess(f, PostprocessParams{2, 1, 254});
    CHECK(cv::countNonZero(p.valid_mask()) == 36);
    CHECK(cv::countNonZero(p.valid_mask() != brute_erode(f.valid_mask(), 2)) == 0);
    CHECK(cv::countNonZero(p.valid_mask()(cv::Rect(10, 10, 6, 6))) == 36);
}

TEST_CASE("erosion matches enumeration on random masks, and never grows the mask") {
    std::mt19937_64 rng(3);
    for (int r = 0; r <= 4; ++r) {
        RgbdFrame f = blank(40);
        cv::Mat noise(40, 40, CV_8UC1);
        cv::randu(noise, 0, 255);
        f.depth.setTo(120, noise > 40);
        const RgbdFrame p = postprocess(f, PostprocessParams{r, 1, 254});
        CHECK(cv::countNonZero(p.valid_mask() != brute_erode(f.valid_mask(), r)) == 0);
        CHECK(cv::countNonZero(p.valid_mask() & ~f.valid_mask()) == 0);
    }
}

TEST_CASE("disc kernel and parameter validation") {
    CHECK(cv::countNonZero(disc_kernel(0)) == 1);
    CHECK(cv::countNonZero(disc_kernel(1)) == 5);
    CHECK(cv::countNonZero(disc_kernel(2)) == 13);
    CHECK_THROWS_AS((PostprocessParams{-1, 1, 254}.validate()), ValidationError);
    CHECK_THROWS_AS((PostprocessParams{2, 200, 100}.validate()), ValidationError);
    const PostprocessParams d = default_postprocess({60, 140});
    CHECK(d.clip_near == 56);
    CHECK(d.clip_far == 144);
    CHECK(d.erode_radius == 2);
}

TEST_CASE("plane unprojects to a single depth; principal point maps to the axis") {
    RgbdFrame f = blank(64);
    f.depth.setTo(128);
    const CameraModel cam = capture_camera({64, 64});
    const PointCloud c = unproject(f, cam);
    CHECK(c.size() == 64u * 64u);
    const double z = f.depth_range.code_to_mm(128);
    for (const auto& p : c.xyz) {
        const cv::Vec3d q = cam.to_camera(cv::Vec3d(p[0], p[1], p[2]));
        CHECK(q[2] == doctest::Approx(z).epsilon(1e-5));
    }

    const CameraModel odd = capture_camera({65, 65});
    RgbdFrame one = blank(65);
    const int cx = int(odd.intrinsics.cx), cy = int(odd.intrinsics.cy);
    REQUIRE(odd.intrinsics.cx == cx);
    one.depth.at<std::uint8_t>(cy, cx) = 50;
    const PointCloud pc = unproject(one, odd);
    REQUIRE(pc.size() == 1);
    const cv::Vec3d q = odd.to_camera(cv::Vec3d(pc.xyz[0][0], pc.xyz[0][1], pc.xyz[0][2]));
    CHECK(q[0] == doctest::Approx(0.0).epsilon(1e-4));
    CHECK(q[1] == doctest::Approx(0.0).epsilon(1e-4));
    CHECK(q[2] == doctest::Approx(one.depth_range.code_to_mm(50)).epsilon(1e-5));
}

TEST_CASE("postprocessed points stay inside the depth range") {
    const RgbdFrame f = render_face(IdentitySpec::from_seed(2), ExpressionParams{0.5, 0.5});
    const PointCloud c = unproject(postprocess(f, PostprocessParams{}), capture_camera());
    const CameraModel cam = capture_camera();
    for (const auto& p : c.xyz) {
        const double z = cam.to_camera(cv::Vec3d(p[0], p[1], p[2]))[2];
        CHECK(z >= f.depth_range.near_mm - 1e-3);
        CHECK(z <= f.depth_range.far_mm + 1e-3);
    }
}

TEST_CASE("unproject then reproject returns the pixel") {
    const RgbdFrame f = postprocess(render_face(IdentitySpec::from_seed(7), ExpressionParams{}), PostprocessParams{});
    const CameraModel cam = capture_camera();
    const PointCloud c = unproject(f, cam);
    std::vector<cv::Point> valid;
    cv::findNonZero(f.valid_mask(), valid);
    REQUIRE(valid.size() == c.size());
    for (std::size_t k = 0; k < c.size(); k += 37) {
        const cv::Point2d q = cam.project(cam.to_camera(cv::Vec3d(c.xyz[k][0], c.xyz[k][1], c.xyz[k][2])));
        CHECK(std::abs(q.x - valid[k].x) <= 0.5);
        CHECK(std::abs(q.y - valid[k].y) <= 0.5);
    }
}

TEST_CASE("splatting: empty cloud, permutation invariance, identity view") {
    const CameraModel cam = capture_camera();
    const RenderedImage empty = rasterize_view(PointCloud{}, cam);
    CHECK(cv::countNonZero(empty.rgb.reshape(1)) == 0);
    CHECK(cv::countNonZero(empty.index >= 0) == 0);

    const RgbdFrame f = postprocess(render_face(IdentitySpec::from_seed(7), ExpressionParams{0.3}), PostprocessParams{});
    const PointCloud c = unproject(f, cam);
    PointCloud shuffled = c;
    std::vector<std::size_t> perm(c.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
    for (std::size_t i = 0; i < perm.size(); ++i) {
        shuffled.xyz[i] = c.xyz[perm[i]];
        shuffled.rgb[i] = c.rgb[perm[i]];
    }
    for (int r : {1, 2, 3}) {
        const RenderedImage a = rasterize_view(c, cam, r), b = rasterize_view(shuffled, cam, r);
        CHECK(cv::countNonZero(a.rgb.reshape(1) != b.rgb.reshape(1)) == 0);
    }

    const RenderedImage img = rasterize_view(c, cam, 1);
    const cv::Mat mask = f.valid_mask();
    std::size_t agree = 0, total = 0;
    for (int y = 0; y < f.rgb.rows; ++y) {
        for (int x = 0; x < f.rgb.cols; ++x) {
            if (!mask.at<std::uint8_t>(y, x)) continue;
            ++total;
            if (img.rgb.at<cv::Vec3b>(y, x) == f.rgb.at<cv::Vec3b>(y, x)) ++agree;
        }
    }
    CHECK(double(agree) / double(total) >= 0.99);
}

TEST_CASE("splat size grows with the radius") {
    PointCloud c;
    const CameraModel cam = capture_camera();
    c.xyz.push_back(cv::Vec3f(0, 0, 500));
    c.rgb.push_back(cv::Vec3b(255, 255, 255));
    CHECK(cv::countNonZero(rasterize_view(c, cam, 1).index >= 0) == 1);
    CHECK(cv::countNonZero(rasterize_view(c, cam, 2).index >= 0) == 9);
    CHECK(cv::countNonZero(rasterize_view(c, cam, 3).index >= 0) == 25);
}

TEST_CASE("stereo: zero baseline gives identical eyes, plane disparity is fx*b/z") {
    const CameraModel cam = capture_camera();
    const PointCloud face = unproject(render_face(IdentitySpec::from_seed(7), ExpressionParams{}), cam);
    const auto [l0, r0] = stereo_pair(cam, 0.0);
    const StereoRender same = render_stereo(face, l0, r0);
    CHECK(cv::countNonZero(same.left.rgb.reshape(1) != same.right.rgb.reshape(1)) == 0);
    CHECK(same.left_ms >= 0.0);
    CHECK(same.right_ms >= 0.0);

    RgbdFrame plane = blank(256);
    plane.depth.setTo(200);
    const PointCloud pc = unproject(plane, cam);
    const double z = plane.depth_range.code_to_mm(200);
    const auto [l, r] = stereo_pair(cam, 65.0);
    const StereoRender st = render_stereo(pc, l, r);
    std::vector<int> right_x(pc.size(), -1);
    for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x)
            if (st.right.index(y, x) >= 0) right_x[std::size_t(st.right.index(y, x))] = x;
    const double expected = cam.intrinsics.fx * 65.0 / z;
    int matched = 0;
    for (int y = 0; y < 256; ++y) {
        for (int x = 0; x < 256; ++x) {
            const int i = st.left.index(y, x);
            if (i < 0 || right_x[std::size_t(i)] < 0) continue;
            ++matched;
            CHECK(std::abs((x - right_x[std::size_t(i)]) - expected) <= 1.0);
        }
    }
    CHECK(matched > 1000);
}

TEST_CASE("camera validation") {
    CameraModel c = capture_camera();
    CHECK_NOTHROW(c.validate());
    c.intrinsics.fx = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = capture_camera();
    c.pose.R(0, 0) = 2.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
}

}
