#include "hmdface/synthetic_face.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <opencv2/imgproc.hpp>

#include "hmdface/error.hpp"

namespace hmdface {
namespace {

constexpr double kPi = std::numbers::pi;

// Eye shape in normalised units.
constexpr double kEyeHalfWidth = 0.055;
constexpr double kLidUpper = 0.022;
constexpr double kLidLower = 0.016;
constexpr double kIrisRadius = 0.018;
constexpr double kIrisTravelX = 0.5;   // fraction of eye half-width at |gaze_x| = 1
constexpr double kIrisTravelY = 0.35;  // fraction of upper lid height at |gaze_y| = 1

constexpr double kBrowRaise = 0.035;
constexpr double kMouthGap = 0.08;
constexpr double kUpperLip = 0.020;
constexpr double kLowerLip = 0.025;
constexpr double kInnerCorner = 0.85;
constexpr double kJawShift = 0.025;

constexpr double kFaceDistanceMm = 500.0;
constexpr double kDomeMm = 70.0;
constexpr double kNoseMm = 24.0;
constexpr double kMmPerUnit = 235.0;  // physical size of one normalised unit

double unit_draw(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double lerp(double a, double b, double t) { return a + (b - a) * t; }

cv::Vec3b lerp_color(cv::Vec3d a, cv::Vec3d b, double t) {
    cv::Vec3b out;
    for (int c = 0; c < 3; ++c) out[c] = cv::saturate_cast<std::uint8_t>(lerp(a[c], b[c], t));
    return out;
}

void check_range(double v, double lo, double hi, const char* name) {
    if (!std::isfinite(v) || v < lo || v > hi) {
        throw ValidationError(std::string("expression field ") + name + " = " + std::to_string(v) +
                              " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
}

// Face geometry for one (identity, expression) in normalised coordinates.
class FaceModel {
public:
    FaceModel(const IdentitySpec& id, const ExpressionParams& p) : id_(id), p_(p) {
        gap_ = kMouthGap * p.mouth_open;
        tip_ = {0.5, id.eye_height + id.nose_length};
        mouth_y_ = tip_.y + 0.105;
        corner_y_ = mouth_y_ - 0.022 * p.smile;
        mouth_half_ = id.mouth_width * (1.0 + 0.12 * p.smile);
        jaw_dx_ = kJawShift * p.jaw_shift;
    }

    const IdentitySpec& identity() const { return id_; }
    const ExpressionParams& params() const { return p_; }
    double gap() const { return gap_; }
    Point2 nose_tip() const { return tip_; }
    double mouth_y() const { return mouth_y_; }
    double mouth_half() const { return mouth_half_; }

    // Face contour, theta in [0, 2pi). Lower half deforms with jaw opening
    // and shift; jaw landmarks sample the same curve.
    Point2 contour(double theta) const {
        const double s = std::sin(theta);
        const double w = s > 0.0 ? s * s : 0.0;
        return {0.5 - id_.face_width * std::cos(theta) + jaw_dx_ * w,
                0.5 + id_.face_height * s + 0.7 * gap_ * w};
    }

    static double jaw_theta(std::size_t k) { return -0.06 * kPi + 1.12 * kPi * static_cast<double>(k) / 16.0; }

    double eye_cx(int side) const { return 0.5 + (side == 0 ? -1.0 : 1.0) * id_.eye_spacing; }
    double eye_open(int side) const { return side == 0 ? p_.eye_open_left : p_.eye_open_right; }

    // Upper/lower lid curves at normalised eye abscissa xn in [-1, 1].
    double upper_lid(int side, double xn) const {
        return id_.eye_height - eye_open(side) * kLidUpper * (1.0 - xn * xn) * 9.0 / 8.0;
    }
    double lower_lid(int side, double xn) const {
        return id_.eye_height + eye_open(side) * kLidLower * (1.0 - xn * xn) * 9.0 / 8.0;
    }
    Point2 iris(int side) const {
        return {eye_cx(side) + p_.gaze_x * kIrisTravelX * kEyeHalfWidth,
                id_.eye_height + p_.gaze_y * kIrisTravelY * kLidUpper};
    }

    // Brow centre line, t in [0, 1] from the outer end to the inner end.
    Point2 brow(int side, double t) const {
        const double raise = side == 0 ? p_.brow_raise_left : p_.brow_raise_right;
        const double dir = side == 0 ? 1.0 : -1.0;  // outer -> inner direction in x
        const double x = eye_cx(side) + dir * (-0.07 + 0.125 * t);
        const double y = id_.eye_height - 0.07 - 0.014 * std::sin(kPi * (0.15 + 0.7 * t)) - kBrowRaise * raise;
        return {x, y};
    }

    double lip_base(double xn) const { return mouth_y_ + (corner_y_ - mouth_y_) * xn * xn; }
    double inner_open(double xn) const {
        const double r = xn / kInnerCorner;
        return gap_ * std::sqrt(std::max(0.0, 1.0 - r * r));
    }
    double outer_round(double xn) const { return std::sqrt(std::max(0.0, 1.0 - xn * xn)); }

    Point2 upper_outer(double xn) const {
        return {0.5 + xn * mouth_half_, lip_base(xn) - kUpperLip * outer_round(xn) - 0.12 * inner_open(xn)};
    }
    Point2 lower_outer(double xn) const {
        const double w = 1.0 - 0.5 * xn * xn;
        return {0.5 + xn * mouth_half_ + jaw_dx_ * w,
                lip_base(xn) + inner_open(xn) + kLowerLip * outer_round(xn)};
    }
    Point2 upper_inner(double xn) const {
        return {0.5 + xn * mouth_half_, lip_base(xn) - 0.12 * inner_open(xn)};
    }
    Point2 lower_inner(double xn) const {
        const double w = 1.0 - 0.5 * xn * xn;
        return {0.5 + xn * mouth_half_ + jaw_dx_ * w, lip_base(xn) + inner_open(xn)};
    }

    std::array<Point2, kLandmarkCount> landmarks() const {
        std::array<Point2, kLandmarkCount> L{};
        for (std::size_t k = 0; k < 17; ++k) L[k] = contour(jaw_theta(k));
        for (std::size_t k = 0; k < 5; ++k) {
            L[17 + k] = brow(0, k / 4.0);
            L[26 - k] = brow(1, k / 4.0);
        }
        const double eye_y = id_.eye_height;
        const double bridge[4] = {0.06, 0.37, 0.68, 1.0};
        for (std::size_t k = 0; k < 4; ++k) L[27 + k] = {0.5, eye_y + id_.nose_length * bridge[k]};
        const double nx[5] = {-0.042, -0.021, 0.0, 0.021, 0.042};
        const double ny[5] = {0.0, 0.002, 0.004, 0.002, 0.0};
        for (std::size_t k = 0; k < 5; ++k) L[31 + k] = {0.5 + nx[k], tip_.y + 0.03 + ny[k]};

        for (int side = 0; side < 2; ++side) {
            const double cx = eye_cx(side);
            const double hw = kEyeHalfWidth;
            const std::size_t b = side == 0 ? 36 : 42;
            const double third = 1.0 / 3.0;
            L[b + 0] = {cx - hw, eye_y};
            L[b + 1] = {cx - hw * third, upper_lid(side, -third)};
            L[b + 2] = {cx + hw * third, upper_lid(side, third)};
            L[b + 3] = {cx + hw, eye_y};
            L[b + 4] = {cx + hw * third, lower_lid(side, third)};
            L[b + 5] = {cx - hw * third, lower_lid(side, -third)};
        }

        L[48] = upper_outer(-1.0);
        L[54] = upper_outer(1.0);
        const double up[5] = {-0.6, -0.25, 0.0, 0.25, 0.6};
        for (std::size_t k = 0; k < 5; ++k) L[49 + k] = upper_outer(up[k]);
        for (std::size_t k = 0; k < 5; ++k) L[55 + k] = lower_outer(-up[k]);
        L[60] = upper_inner(-kInnerCorner);
        L[64] = upper_inner(kInnerCorner);
        const double in[3] = {-0.4, 0.0, 0.4};
        for (std::size_t k = 0; k < 3; ++k) L[61 + k] = upper_inner(in[k]);
        for (std::size_t k = 0; k < 3; ++k) L[65 + k] = lower_inner(-in[k]);

        L[68] = iris(0);
        L[69] = iris(1);
        return L;
    }

    double depth_mm(double u, double v) const {
        const double du = u - tip_.x;
        const double dv = v - tip_.y;
        double z = kFaceDistanceMm + kDomeMm * (du * du / (id_.face_width * id_.face_width) +
                                                dv * dv / (id_.face_height * id_.face_height));
        z -= kNoseMm * std::exp(-0.5 * (du * du / (0.035 * 0.035) + dv * dv / (0.055 * 0.055)));
        for (int side = 0; side < 2; ++side) {
            const double ex = u - eye_cx(side);
            const double ey = v - id_.eye_height;
            z += 7.0 * std::exp(-0.5 * (ex * ex + ey * ey) / (0.045 * 0.045));
        }
        const double lu = (u - 0.5) / mouth_half_;
        const double lv = (v - mouth_y_ - 0.5 * gap_) / 0.035;
        z -= 4.0 * std::exp(-0.5 * (lu * lu + lv * lv));
        const double cu = (u - 0.5 - jaw_dx_) / 0.05;
        const double cv_ = (v - (0.5 + id_.face_height + 0.7 * gap_ - 0.06)) / 0.05;
        z -= 3.0 * std::exp(-0.5 * (cu * cu + cv_ * cv_));
        return z;
    }

private:
    IdentitySpec id_;
    ExpressionParams p_;
    double gap_ = 0.0;
    Point2 tip_{};
    double mouth_y_ = 0.0;
    double corner_y_ = 0.0;
    double mouth_half_ = 0.0;
    double jaw_dx_ = 0.0;
};

constexpr int kShift = 8;  // fixed-point bits for sub-pixel polygon fill

cv::Point to_fixed(Point2 p, Resolution res) {
    const double s = static_cast<double>(1 << kShift);
    return {static_cast<int>(std::lround(p.x * res.width * s)),
            static_cast<int>(std::lround(p.y * res.height * s))};
}

cv::Mat fill_mask(const std::vector<Point2>& poly, Resolution res) {
    cv::Mat m = cv::Mat::zeros(res.height, res.width, CV_8UC1);
    std::vector<cv::Point> pts;
    pts.reserve(poly.size());
    for (const auto& p : poly) pts.push_back(to_fixed(p, res));
    const cv::Point* data = pts.data();
    const int n = static_cast<int>(pts.size());
    cv::fillPoly(m, &data, &n, 1, cv::Scalar(255), cv::LINE_8, kShift);
    return m;
}

cv::Mat disc_mask(Point2 c, double r, Resolution res) {
    cv::Mat m = cv::Mat::zeros(res.height, res.width, CV_8UC1);
    const double s = static_cast<double>(1 << kShift);
    cv::circle(m, to_fixed(c, res), static_cast<int>(std::lround(r * res.width * s)), cv::Scalar(255),
               cv::FILLED, cv::LINE_8, kShift);
    return m;
}

struct FeatureMasks {
    cv::Mat face, lips, mouth, brows, nostrils;
    std::array<cv::Mat, 2> eye, iris, pupil;
    std::array<bool, 2> eye_drawn{};
};

FeatureMasks build_masks(const FaceModel& f, Resolution res) {
    FeatureMasks m;
    std::vector<Point2> poly;
    constexpr int kOutline = 720;
    for (int i = 0; i < kOutline; ++i) poly.push_back(f.contour(2.0 * kPi * i / kOutline));
    m.face = fill_mask(poly, res);

    constexpr int kLip = 40;
    poly.clear();
    for (int i = 0; i <= kLip; ++i) poly.push_back(f.upper_outer(-1.0 + 2.0 * i / kLip));
    for (int i = kLip; i >= 0; --i) poly.push_back(f.lower_outer(-1.0 + 2.0 * i / kLip));
    m.lips = fill_mask(poly, res);

    if (f.gap() > 1e-4) {
        poly.clear();
        for (int i = 0; i <= kLip; ++i) poly.push_back(f.upper_inner(kInnerCorner * (-1.0 + 2.0 * i / kLip)));
        for (int i = kLip; i >= 0; --i) poly.push_back(f.lower_inner(kInnerCorner * (-1.0 + 2.0 * i / kLip)));
        m.mouth = fill_mask(poly, res);
    } else {
        m.mouth = cv::Mat::zeros(res.height, res.width, CV_8UC1);
    }

    m.brows = cv::Mat::zeros(res.height, res.width, CV_8UC1);
    constexpr int kBrow = 24;
    for (int side = 0; side < 2; ++side) {
        std::vector<Point2> upper, lower;
        for (int i = 0; i <= kBrow; ++i) {
            const double t = static_cast<double>(i) / kBrow;
            const Point2 c = f.brow(side, t);
            const double half = 0.5 * f.identity().brow_thickness * (0.6 + 0.4 * std::sin(kPi * t));
            upper.push_back({c.x, c.y - half});
            lower.push_back({c.x, c.y + half});
        }
        poly = upper;
        poly.insert(poly.end(), lower.rbegin(), lower.rend());
        m.brows |= fill_mask(poly, res);
    }

    m.nostrils = cv::Mat::zeros(res.height, res.width, CV_8UC1);
    const auto L = f.landmarks();
    for (std::size_t k : {32u, 34u}) {
        const double s = 1 << kShift;
        cv::ellipse(m.nostrils, to_fixed({L[k].x, L[k].y - 0.004}, res),
                    cv::Size(static_cast<int>(0.011 * res.width * s), static_cast<int>(0.006 * res.height * s)),
                    0.0, 0.0, 360.0, cv::Scalar(255), cv::FILLED, cv::LINE_8, kShift);
    }

    for (int side = 0; side < 2; ++side) {
        m.eye_drawn[side] = f.eye_open(side) > 0.02;
        if (!m.eye_drawn[side]) {
            m.eye[side] = m.iris[side] = m.pupil[side] = cv::Mat::zeros(res.height, res.width, CV_8UC1);
            continue;
        }
        poly.clear();
        constexpr int kLid = 24;
        const double cx = f.eye_cx(side);
        for (int i = 0; i <= kLid; ++i) {
            const double xn = -1.0 + 2.0 * i / kLid;
            poly.push_back({cx + xn * kEyeHalfWidth, f.upper_lid(side, xn)});
        }
        for (int i = kLid - 1; i > 0; --i) {
            const double xn = -1.0 + 2.0 * i / kLid;
            poly.push_back({cx + xn * kEyeHalfWidth, f.lower_lid(side, xn)});
        }
        m.eye[side] = fill_mask(poly, res);
        m.iris[side] = disc_mask(f.iris(side), kIrisRadius, res) & m.eye[side];
        m.pupil[side] = disc_mask(f.iris(side), 0.45 * kIrisRadius, res) & m.eye[side];
    }
    return m;
}

struct SurfaceMaps {
    cv::Mat_<float> depth_mm;
    cv::Mat_<float> lambert;
};

SurfaceMaps build_surface(const FaceModel& f, const FeatureMasks& m, Resolution res) {
    SurfaceMaps s;
    s.depth_mm.create(res.height, res.width);
    for (int y = 0; y < res.height; ++y) {
        const double v = (y + 0.0) / res.height;
        float* row = s.depth_mm[y];
        const std::uint8_t* mouth = m.mouth.ptr<std::uint8_t>(y);
        for (int x = 0; x < res.width; ++x) {
            const double u = (x + 0.0) / res.width;
            double z = f.depth_mm(u, v);
            if (mouth[x]) z += 14.0;
            row[x] = static_cast<float>(z);
        }
    }
    // Outward normal (dz/dx, dz/dy, -1) with gradients in mm per mm.
    const double mm_per_px_x = kMmPerUnit / res.width;
    const double mm_per_px_y = kMmPerUnit / res.height;
    const cv::Vec3d light = cv::normalize(cv::Vec3d(-0.4, -0.5, -1.0));
    s.lambert.create(res.height, res.width);
    for (int y = 0; y < res.height; ++y) {
        const int y0 = std::max(0, y - 1), y1 = std::min(res.height - 1, y + 1);
        for (int x = 0; x < res.width; ++x) {
            const int x0 = std::max(0, x - 1), x1 = std::min(res.width - 1, x + 1);
            const double gx = (s.depth_mm(y, x1) - s.depth_mm(y, x0)) / ((x1 - x0) * mm_per_px_x);
            const double gy = (s.depth_mm(y1, x) - s.depth_mm(y0, x)) / ((y1 - y0) * mm_per_px_y);
            const cv::Vec3d n = cv::normalize(cv::Vec3d(gx, gy, -1.0));
            s.lambert(y, x) = static_cast<float>(std::max(0.0, n.dot(light)));
        }
    }
    return s;
}

cv::Vec3b scale_color(cv::Vec3b c, double k) {
    return {cv::saturate_cast<std::uint8_t>(c[0] * k), cv::saturate_cast<std::uint8_t>(c[1] * k),
            cv::saturate_cast<std::uint8_t>(c[2] * k)};
}

cv::Matx23d view_affine(Point2 centre_ref, double scale, double angle_deg, Point2 centre_view) {
    const double a = angle_deg * kPi / 180.0;
    const double c = std::cos(a) * scale, s = std::sin(a) * scale;
    return {c, -s, centre_view.x - (c * centre_ref.x - s * centre_ref.y),
            s, c, centre_view.y - (s * centre_ref.x + c * centre_ref.y)};
}

}  // namespace

void ExpressionParams::validate() const {
    check_range(mouth_open, 0.0, 1.0, "mouth_open");
    check_range(smile, -1.0, 1.0, "smile");
    check_range(brow_raise_left, -1.0, 1.0, "brow_raise_left");
    check_range(brow_raise_right, -1.0, 1.0, "brow_raise_right");
    check_range(eye_open_left, 0.0, 1.0, "eye_open_left");
    check_range(eye_open_right, 0.0, 1.0, "eye_open_right");
    check_range(gaze_x, -1.0, 1.0, "gaze_x");
    check_range(gaze_y, -1.0, 1.0, "gaze_y");
    check_range(jaw_shift, -1.0, 1.0, "jaw_shift");
}

ExpressionParams ExpressionParams::clamped() const {
    ExpressionParams p = *this;
    p.mouth_open = std::clamp(p.mouth_open, 0.0, 1.0);
    p.smile = std::clamp(p.smile, -1.0, 1.0);
    p.brow_raise_left = std::clamp(p.brow_raise_left, -1.0, 1.0);
    p.brow_raise_right = std::clamp(p.brow_raise_right, -1.0, 1.0);
    p.eye_open_left = std::clamp(p.eye_open_left, 0.0, 1.0);
    p.eye_open_right = std::clamp(p.eye_open_right, 0.0, 1.0);
    p.gaze_x = std::clamp(p.gaze_x, -1.0, 1.0);
    p.gaze_y = std::clamp(p.gaze_y, -1.0, 1.0);
    p.jaw_shift = std::clamp(p.jaw_shift, -1.0, 1.0);
    return p;
}

IdentitySpec IdentitySpec::from_seed(std::uint64_t seed, double min_contrast) {
    std::mt19937_64 rng(seed);
    IdentitySpec id;
    id.seed = seed;
    id.face_width = lerp(0.30, 0.34, unit_draw(rng));
    id.face_height = lerp(0.40, 0.44, unit_draw(rng));
    id.eye_height = lerp(0.40, 0.43, unit_draw(rng));
    id.eye_spacing = lerp(0.13, 0.15, unit_draw(rng));
    id.nose_length = lerp(0.16, 0.18, unit_draw(rng));
    id.mouth_width = lerp(0.08, 0.10, unit_draw(rng));
    id.brow_thickness = lerp(0.018, 0.026, unit_draw(rng));
    id.skin_tone = unit_draw(rng);
    id.skin_ir = lerp(150.0, 210.0, unit_draw(rng));
    id.brow_contrast = lerp(min_contrast, min_contrast + 40.0, unit_draw(rng));
    id.iris_hue = unit_draw(rng);
    id.validate();
    return id;
}

void IdentitySpec::validate() const {
    auto need = [](double v, double lo, double hi, const char* name) {
        if (!std::isfinite(v) || v < lo || v > hi)
            throw ValidationError(std::string("identity field ") + name + " out of range");
    };
    need(face_width, 0.2, 0.4, "face_width");
    need(face_height, 0.3, 0.46, "face_height");
    need(eye_height, 0.35, 0.48, "eye_height");
    need(eye_spacing, 0.1, 0.18, "eye_spacing");
    need(nose_length, 0.12, 0.2, "nose_length");
    need(mouth_width, 0.06, 0.12, "mouth_width");
    need(brow_thickness, 0.01, 0.04, "brow_thickness");
    need(skin_tone, 0.0, 1.0, "skin_tone");
    need(skin_ir, 60.0, 250.0, "skin_ir");
    need(brow_contrast, 10.0, 0.85 * skin_ir - 10.0, "brow_contrast");
    need(iris_hue, 0.0, 1.0, "iris_hue");
}

bool operator==(const RgbdFrame& a, const RgbdFrame& b) {
    auto same = [](const cv::Mat& x, const cv::Mat& y) {
        if (x.size() != y.size() || x.type() != y.type()) return false;
        if (x.empty()) return true;
        cv::Mat diff;
        cv::absdiff(x, y, diff);
        return cv::countNonZero(diff.reshape(1)) == 0;
    };
    return a.depth_range == b.depth_range && a.background_code == b.background_code && same(a.rgb, b.rgb) &&
           same(a.depth, b.depth);
}

FacePalette palette_of(const IdentitySpec& id) {
    FacePalette p;
    p.skin = lerp_color({236, 200, 178}, {150, 100, 75}, id.skin_tone);
    p.brow = scale_color(p.skin, 0.32);
    p.iris = lerp_color({105, 70, 40}, {70, 120, 170}, id.iris_hue);
    p.lip = {cv::saturate_cast<std::uint8_t>(p.skin[0] * 0.85 + 25), cv::saturate_cast<std::uint8_t>(p.skin[1] * 0.6),
             cv::saturate_cast<std::uint8_t>(p.skin[2] * 0.62)};
    p.mouth = {70, 25, 30};
    p.sclera = {238, 236, 230};
    return p;
}

FacialLandmarkSet landmarks_of(const IdentitySpec& identity, const ExpressionParams& params, Resolution res) {
    params.validate();
    const FaceModel f(identity, params);
    auto L = f.landmarks();
    for (auto& p : L) p = {p.x * res.width, p.y * res.height};
    return make_landmark_set(L, res);
}

std::vector<cv::Point2d> face_outline(const IdentitySpec& identity, const ExpressionParams& params,
                                      Resolution res) {
    params.validate();
    const FaceModel f(identity, params);
    std::vector<cv::Point2d> out;
    constexpr int kOutline = 720;
    for (int i = 0; i < kOutline; ++i) {
        const Point2 p = f.contour(2.0 * kPi * i / kOutline);
        out.emplace_back(p.x * res.width, p.y * res.height);
    }
    return out;
}

RgbdFrame render_face(const IdentitySpec& identity, const ExpressionParams& params, Resolution res) {
    params.validate();
    const FaceModel f(identity, params);
    const FeatureMasks m = build_masks(f, res);
    const SurfaceMaps s = build_surface(f, m, res);
    const FacePalette pal = palette_of(identity);

    RgbdFrame frame;
    frame.rgb = cv::Mat::zeros(res.height, res.width, CV_8UC3);
    frame.depth = cv::Mat(res.height, res.width, CV_8UC1, cv::Scalar(frame.background_code));
    for (int y = 0; y < res.height; ++y) {
        for (int x = 0; x < res.width; ++x) {
            if (!m.face.at<std::uint8_t>(y, x)) continue;
            const double shade = 0.35 + 0.65 * s.lambert(y, x);
            cv::Vec3b c = scale_color(pal.skin, shade);
            if (m.lips.at<std::uint8_t>(y, x)) c = scale_color(pal.lip, shade);
            if (m.nostrils.at<std::uint8_t>(y, x)) c = scale_color(pal.skin, 0.45 * shade);
            if (m.mouth.at<std::uint8_t>(y, x)) c = pal.mouth;
            for (int side = 0; side < 2; ++side) {
                if (!m.eye_drawn[side]) continue;
                if (m.eye[side].at<std::uint8_t>(y, x)) c = pal.sclera;
                if (m.iris[side].at<std::uint8_t>(y, x)) c = pal.iris;
                if (m.pupil[side].at<std::uint8_t>(y, x)) c = {18, 16, 16};
            }
            if (m.brows.at<std::uint8_t>(y, x)) c = pal.brow;
            frame.rgb.at<cv::Vec3b>(y, x) = c;
            const double code = std::round(frame.depth_range.mm_to_code(s.depth_mm(y, x)));
            frame.depth.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::clamp(code, 1.0, 254.0));
        }
    }
    return frame;
}

cv::Mat render_face_ir(const IdentitySpec& identity, const ExpressionParams& params, Resolution res) {
    params.validate();
    const FaceModel f(identity, params);
    const FeatureMasks m = build_masks(f, res);
    const SurfaceMaps s = build_surface(f, m, res);
    const double skin = identity.skin_ir;
    const double brow = 0.85 * skin - identity.brow_contrast;

    cv::Mat ir(res.height, res.width, CV_8UC1, cv::Scalar(8));
    for (int y = 0; y < res.height; ++y) {
        for (int x = 0; x < res.width; ++x) {
            if (!m.face.at<std::uint8_t>(y, x)) continue;
            double g = skin * (0.85 + 0.15 * s.lambert(y, x));
            if (m.lips.at<std::uint8_t>(y, x)) g *= 0.88;
            if (m.nostrils.at<std::uint8_t>(y, x)) g = 60.0;
            if (m.mouth.at<std::uint8_t>(y, x)) g = 40.0;
            for (int side = 0; side < 2; ++side) {
                if (!m.eye_drawn[side]) continue;
                if (m.eye[side].at<std::uint8_t>(y, x)) g = 215.0;
                if (m.iris[side].at<std::uint8_t>(y, x)) g = 90.0;
                if (m.pupil[side].at<std::uint8_t>(y, x)) g = 25.0;
            }
            if (m.brows.at<std::uint8_t>(y, x)) g = brow;
            ir.at<std::uint8_t>(y, x) = cv::saturate_cast<std::uint8_t>(g);
        }
    }
    return ir;
}

const HmcGeometry& hmc_geometry() {
    static const HmcGeometry g = [] {
        HmcGeometry h;
        // Lower camera sits below the mouth looking up: mild horizontal
        // magnification, vertical foreshortening.
        h.lower_face = {1.05, 0.0, 128.0 - 1.05 * 128.0, 0.0, 0.85, 96.0 - 0.85 * 141.0};
        const double s = kReferenceSize;
        h.left_eye = view_affine({0.36 * s, 0.355 * s}, 2.2, 6.0, {64.0, 60.0});
        h.right_eye = view_affine({0.64 * s, 0.355 * s}, 2.2, -6.0, {64.0, 60.0});
        return h;
    }();
    return g;
}

HmcViews render_hmc_views(const IdentitySpec& identity, const ExpressionParams& params) {
    const cv::Mat ir = render_face_ir(identity, params, {kReferenceSize, kReferenceSize});
    const HmcGeometry& g = hmc_geometry();
    HmcViews v;
    cv::warpAffine(ir, v.lower_face_ir, cv::Mat(g.lower_face), g.lower_size, cv::INTER_LINEAR,
                   cv::BORDER_CONSTANT, cv::Scalar(8));
    cv::warpAffine(ir, v.left_eye_ir, cv::Mat(g.left_eye), g.eye_size, cv::INTER_LINEAR, cv::BORDER_CONSTANT,
                   cv::Scalar(8));
    cv::warpAffine(ir, v.right_eye_ir, cv::Mat(g.right_eye), g.eye_size, cv::INTER_LINEAR, cv::BORDER_CONSTANT,
                   cv::Scalar(8));
    return v;
}

cv::Matx23d invert_affine(const cv::Matx23d& m) {
    cv::Matx23d out;
    cv::invertAffineTransform(m, out);
    return out;
}

cv::Matx23d compose_affine(const cv::Matx23d& outer, const cv::Matx23d& inner) {
    const cv::Matx33d a(outer(0, 0), outer(0, 1), outer(0, 2), outer(1, 0), outer(1, 1), outer(1, 2), 0, 0, 1);
    const cv::Matx33d b(inner(0, 0), inner(0, 1), inner(0, 2), inner(1, 0), inner(1, 1), inner(1, 2), 0, 0, 1);
    const cv::Matx33d c = a * b;
    return {c(0, 0), c(0, 1), c(0, 2), c(1, 0), c(1, 1), c(1, 2)};
}

}  // namespace hmdface
