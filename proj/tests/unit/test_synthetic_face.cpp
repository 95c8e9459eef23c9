#include <doctest.h>

#include <opencv2/imgproc.hpp>

#include "hmdface/error.hpp"
#include "hmdface/synthetic_face.hpp"

using namespace hmdface;

TEST_SUITE("synthetic_face") {

TEST_CASE("identity draw is deterministic and keeps the contrast floor") {
    CHECK(IdentitySpec::from_seed(12) == IdentitySpec::from_seed(12));
    CHECK_FALSE(IdentitySpec::from_seed(12) == IdentitySpec::from_seed(13));
    for (std::uint64_t s = 0; s < 40; ++s) CHECK(IdentitySpec::from_seed(s, 55.0).brow_contrast >= 55.0);
}

TEST_CASE("parameter validation") {
    ExpressionParams p;
    p.mouth_open = 1.5;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    CHECK_THROWS_AS(landmarks_of(IdentitySpec::from_seed(1), p), ValidationError);
    CHECK_THROWS_AS(render_face(IdentitySpec::from_seed(1), p), ValidationError);
    CHECK(p.clamped().mouth_open == 1.0);
    CHECK_NOTHROW(p.clamped().validate());
}

TEST_CASE("neutral brows are mirror symmetric for a symmetric identity") {
    const auto s = landmarks_of(IdentitySpec::from_seed(7), ExpressionParams::neutral());
    for (std::size_t i = lm::kBrowLeftBegin; i < lm::kBrowLeftEnd; ++i) {
        CHECK(s[i].y == doctest::Approx(s[mirror_index(i)].y).epsilon(1e-9));
        CHECK(s[i].x - 128.0 == doctest::Approx(128.0 - s[mirror_index(i)].x).epsilon(1e-9));
    }
}

TEST_CASE("closed mouth has no inner-lip gap and opening is monotone") {
    const auto id = IdentitySpec::from_seed(7);
    auto gap = [&](double open) {
        ExpressionParams p;
        p.mouth_open = open;
        const auto s = landmarks_of(id, p);
        return s[lm::kInnerLipBottom].y - s[lm::kInnerLipTop].y;
    };
    CHECK(gap(0.0) == doctest::Approx(0.0));
    double prev = gap(0.0);
    for (int k = 1; k <= 10; ++k) {
        const double g = gap(k / 10.0);
        CHECK(g > prev);
        prev = g;
    }
}

TEST_CASE("rendering is deterministic and well formed") {
    const auto id = IdentitySpec::from_seed(4);
    const ExpressionParams p{0.4, 0.2, 0.1, -0.3, 0.9, 0.7, 0.3, -0.2, 0.1};
    const RgbdFrame a = render_face(id, p), b = render_face(id, p);
    CHECK(a == b);
    CHECK(a.rgb.type() == CV_8UC3);
    CHECK(a.depth.type() == CV_8UC1);
    CHECK(a.resolution() == Resolution{256, 256});
    CHECK(cv::countNonZero(a.valid_mask()) > 0);
    CHECK(a.depth.at<std::uint8_t>(0, 0) == a.background_code);
    const RgbdFrame small = render_face(id, p, {128, 128});
    CHECK(small.resolution() == Resolution{128, 128});
}

TEST_CASE("closed left eye shows no iris colour inside the eye contour") {
    const auto id = IdentitySpec::from_seed(7);
    const FacePalette pal = palette_of(id);
    auto iris_pixels = [&](double open) {
        ExpressionParams p;
        p.eye_open_left = open;
        const RgbdFrame f = render_face(id, p);
        const auto neutral = landmarks_of(id, ExpressionParams::neutral());
        std::vector<cv::Point> poly;
        for (std::size_t i = lm::kEyeLeftBegin; i < lm::kEyeLeftEnd; ++i) {
            poly.emplace_back(int(std::lround(neutral[i].x)), int(std::lround(neutral[i].y)));
        }
        cv::Mat mask = cv::Mat::zeros(f.rgb.size(), CV_8UC1);
        cv::fillConvexPoly(mask, poly, 255);
        cv::Mat iris;
        cv::inRange(f.rgb, pal.iris, pal.iris, iris);
        return cv::countNonZero(iris & mask);
    };
    CHECK(iris_pixels(1.0) > 0);
    CHECK(iris_pixels(0.0) == 0);
}

TEST_CASE("raising the left brow moves it up in the left eye view only") {
    const auto id = IdentitySpec::from_seed(7);
    auto brow_row = [&](double raise, bool left) {
        ExpressionParams p;
        p.brow_raise_left = raise;
        const HmcViews v = render_hmc_views(id, p);
        const cv::Mat& img = left ? v.left_eye_ir : v.right_eye_ir;
        cv::Mat dark = img < 90;
        const cv::Moments m = cv::moments(dark, true);
        return m.m01 / m.m00;
    };
    double prev = brow_row(-1.0, true);
    for (double r = -0.75; r <= 1.0; r += 0.25) {
        const double row = brow_row(r, true);
        CHECK(row < prev);
        prev = row;
    }
    CHECK(brow_row(1.0, false) == doctest::Approx(brow_row(-1.0, false)));
}

TEST_CASE("HMC views are deterministic and see the mouth") {
    const auto id = IdentitySpec::from_seed(7);
    ExpressionParams open;
    open.mouth_open = 1.0;
    const HmcViews a = render_hmc_views(id, ExpressionParams::neutral());
    const HmcViews b = render_hmc_views(id, ExpressionParams::neutral());
    const HmcViews c = render_hmc_views(id, open);
    CHECK(cv::countNonZero(a.lower_face_ir != b.lower_face_ir) == 0);
    CHECK(cv::countNonZero(a.left_eye_ir != b.left_eye_ir) == 0);
    CHECK(cv::countNonZero(a.lower_face_ir != c.lower_face_ir) > 100);
    CHECK(a.lower_face_ir.size() == hmc_geometry().lower_size);
    CHECK(a.left_eye_ir.size() == hmc_geometry().eye_size);
}

TEST_CASE("affine helpers invert and compose") {
    const cv::Matx23d m(1.2, 0.1, 5, -0.2, 0.9, -3);
    const cv::Matx23d inv = invert_affine(m);
    const Point2 p{17.5, -4.0};
    const Point2 q = apply_affine(inv, apply_affine(m, p));
    CHECK(q.x == doctest::Approx(p.x));
    CHECK(q.y == doctest::Approx(p.y));
    const Point2 r = apply_affine(compose_affine(inv, m), p);
    CHECK(r.x == doctest::Approx(p.x));
}

TEST_CASE("depth code mapping is linear") {
    const DepthRange d;
    CHECK(d.code_to_mm(0) == 400.0);
    CHECK(d.code_to_mm(255) == doctest::Approx(700.0));
    CHECK(d.mm_to_code(d.code_to_mm(77)) == doctest::Approx(77));
    CHECK(d.mm_per_code() * 2 == doctest::Approx(2.3529).epsilon(1e-4));
}

}
