#include <doctest.h>

#include "hmdface/error.hpp"
#include "hmdface/face_tracking.hpp"

using namespace hmdface;

namespace {

const IdentitySpec& ident() {
    static const IdentitySpec id = IdentitySpec::from_seed(7);
    return id;
}

const FacialLandmarkSet& neutral() {
    static const FacialLandmarkSet n = landmarks_of(ident(), ExpressionParams::neutral());
    return n;
}

BrowTrackState calibrated(int side) {
    const HmcViews v = render_hmc_views(ident(), ExpressionParams::neutral());
    return calibrate_brow(side == 0 ? v.left_eye_ir : v.right_eye_ir, side, suggested_brow_threshold(ident()),
                          neutral());
}

double brow_dy(const ExpressionParams& p, int side) {
    const HmcViews v = render_hmc_views(ident(), p);
    const BrowTrackState s = calibrated(side);
    const auto r = track_brow(side == 0 ? v.left_eye_ir : v.right_eye_ir, s);
    REQUIRE_FALSE(r.tracking_lost());
    return r.points[0].y - s.anchors[0].y;
}

}  // namespace

TEST_SUITE("face_tracking") {

TEST_CASE("binarize on uniform and gradient images") {
    CHECK(cv::countNonZero(binarize(cv::Mat(8, 8, CV_8UC1, cv::Scalar(100)), 128)) == 64);
    CHECK(cv::countNonZero(binarize(cv::Mat(8, 8, CV_8UC1, cv::Scalar(200)), 128)) == 0);

    // Rows get darker downwards: value 255 - 2y. The 0 -> 1 transition sits
    // at the first row with 255 - 2y < t.
    cv::Mat grad(128, 16, CV_8UC1);
    for (int y = 0; y < grad.rows; ++y) grad.row(y).setTo(255 - 2 * y);
    const int t = 101;
    const cv::Mat b = binarize(grad, t);
    const int crossing = (255 - t) / 2 + 1;
    for (int x = 0; x < grad.cols; ++x) {
        int transitions = 0, at = -1;
        for (int y = 1; y < b.rows; ++y) {
            if (b.at<std::uint8_t>(y - 1, x) == 0 && b.at<std::uint8_t>(y, x) == 1) {
                ++transitions;
                at = y;
            }
        }
        CHECK(transitions == 1);
        CHECK(at == crossing);
    }
}

TEST_CASE("binarize is monotone in the threshold") {
    const cv::Mat img = render_hmc_views(ident(), ExpressionParams{0.3, 0.2, 0.5}).left_eye_ir;
    cv::Mat prev = binarize(img, 0);
    CHECK(cv::countNonZero(prev) == 0);
    for (int t = 8; t <= 256; t += 8) {
        const cv::Mat cur = binarize(img, t);
        CHECK(cv::countNonZero(prev & ~cur) == 0);
        prev = cur;
    }
    CHECK(cv::countNonZero(binarize(img, 256)) == img.rows * img.cols);
}

TEST_CASE("neutral brow reports zero displacement") {
    for (int side : {0, 1}) {
        const auto s = calibrated(side);
        const HmcViews v = render_hmc_views(ident(), ExpressionParams::neutral());
        const auto r = track_brow(side == 0 ? v.left_eye_ir : v.right_eye_ir, s, 42);
        REQUIRE(r.indices.size() == 5);
        CHECK(r.indices[0] == (side == 0 ? 17u : 22u));
        CHECK(r.timestamp_us == 42);
        for (std::size_t k = 0; k < 5; ++k) CHECK(r.points[k] == neutral()[r.indices[k]]);
    }
}

TEST_CASE("raised left brow moves only the left side up") {
    ExpressionParams p;
    p.brow_raise_left = 1.0;
    CHECK(brow_dy(p, 0) < 0.0);
    CHECK(brow_dy(p, 1) == 0.0);
}

TEST_CASE("brow displacement is monotone in brow raise") {
    double prev = 1e9;
    for (double r = -1.0; r <= 1.0001; r += 0.25) {
        ExpressionParams p;
        p.brow_raise_right = r;
        const double dy = brow_dy(p, 1);
        CHECK(dy <= prev);
        prev = dy;
    }
    ExpressionParams lo, hi;
    lo.brow_raise_right = -1.0;
    hi.brow_raise_right = 1.0;
    CHECK(brow_dy(hi, 1) < brow_dy(lo, 1));
}

TEST_CASE("an all-bright view loses tracking and calibration refuses it") {
    const cv::Mat bright(hmc_geometry().eye_size, CV_8UC1, cv::Scalar(255));
    const auto s = calibrated(0);
    const auto r = track_brow(bright, s);
    CHECK(r.tracking_lost());
    CHECK(r.source == Source::BrowLeft);
    CHECK_THROWS_AS(calibrate_brow(bright, 0, 128, neutral()), CalibrationError);
}

TEST_CASE("tracking is deterministic") {
    const HmcViews v = render_hmc_views(ident(), ExpressionParams{0.0, 0.0, 0.4});
    const auto s = calibrated(0);
    const auto a = track_brow(v.left_eye_ir, s), b = track_brow(v.left_eye_ir, s);
    CHECK(a.points == b.points);
}

TEST_CASE("tracker state validation") {
    BrowTrackState s = calibrated(0);
    s.threshold = 0;
    CHECK_THROWS_AS(s.validate(hmc_geometry().eye_size), ValidationError);
    s = calibrated(0);
    s.band_end = 500;
    CHECK_THROWS_AS(s.validate(hmc_geometry().eye_size), ValidationError);
}

TEST_CASE("report validation") {
    PartialLandmarkReport r;
    r.indices = {1, 2};
    r.points = {{0, 0}};
    CHECK_THROWS_AS(r.validate(), StructuralError);
    r.points.push_back({1, 1});
    CHECK_NOTHROW(r.validate());
    r.indices[1] = 70;
    CHECK_THROWS_AS(r.validate(), StructuralError);
}

TEST_CASE("gaze source: closed eyes, centred and extreme gaze") {
    const EyeGeometry g = EyeGeometry::from_neutral(neutral());
    GazeSignals s;
    s.eye_open_left = 0.0;
    const auto r = gaze_source(g, s);
    CHECK(r[0].source == Source::EyeLeft);
    CHECK(r[0].indices.size() == 7);
    CHECK(r[0].points[1].y == r[0].points[5].y);  // 37 vs 41
    CHECK(r[0].points[2].y == r[0].points[4].y);  // 38 vs 40
    CHECK(r[1].points[1].y < r[1].points[5].y);

    const auto centred = gaze_source(g, GazeSignals{});
    for (int side = 0; side < 2; ++side) {
        const auto& e = g.eyes[side];
        CHECK(centred[side].points[6].x == doctest::Approx(0.5 * (e.corners[0].x + e.corners[1].x)));
    }

    // Oracle round trip: the linear map reproduces the oracle's iris positions.
    for (double gx : {-1.0, -0.5, 0.5, 1.0}) {
        ExpressionParams p;
        p.gaze_x = gx;
        p.gaze_y = 0.5 * gx;
        const auto truth = landmarks_of(ident(), p);
        const auto rep = gaze_source(g, GazeSignals::from_params(p));
        CHECK(std::abs(rep[0].points[6].x - truth[lm::kIrisLeft].x) <= 1.0);
        CHECK(std::abs(rep[1].points[6].x - truth[lm::kIrisRight].x) <= 1.0);
        CHECK(std::abs(rep[0].points[6].y - truth[lm::kIrisLeft].y) <= 1.0);
    }

    GazeSignals bad;
    bad.gaze_x = 1.5;
    CHECK_THROWS_AS(gaze_source(g, bad), ValidationError);
}

TEST_CASE("source names round trip") {
    for (int s = 0; s < int(kSourceCount); ++s) {
        CHECK(source_from_string(to_string(static_cast<Source>(s))) == static_cast<Source>(s));
    }
}

}
