#include "hmdface/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <opencv2/imgproc.hpp>

#include "hmdface/error.hpp"

namespace hmdface {

namespace {
constexpr double kC1 = (0.01 * 255) * (0.01 * 255);
constexpr double kC2 = (0.03 * 255) * (0.03 * 255);

cv::Mat blur(const cv::Mat& m) {
    cv::Mat out;
    cv::GaussianBlur(m, out, cv::Size(11, 11), 1.5, 1.5, cv::BORDER_REFLECT);
    return out;
}

void require_mask(const FaceMask& mask, cv::Size size) {
    if (mask.empty() || mask.type() != CV_8UC1 || mask.size() != size) {
        throw ValidationError("face mask must be 8-bit single-channel and match the image size");
    }
    if (cv::countNonZero(mask) == 0) throw ValidationError("face mask is empty");
}
}  // namespace

FaceMask face_mask(const RgbdFrame& reference) {
    cv::Mat m = reference.depth != reference.background_code;
    return m / 255;
}

cv::Mat ssim_map(const cv::Mat& a, const cv::Mat& b) {
    if (a.size() != b.size() || a.type() != b.type()) throw ValidationError("SSIM inputs differ in shape");
    std::vector<cv::Mat> ca, cb;
    cv::split(a, ca);
    cv::split(b, cb);
    cv::Mat acc = cv::Mat::zeros(a.size(), CV_64FC1);
    for (std::size_t c = 0; c < ca.size(); ++c) {
        cv::Mat x, y;
        ca[c].convertTo(x, CV_64F);
        cb[c].convertTo(y, CV_64F);
        const cv::Mat mx = blur(x), my = blur(y);
        const cv::Mat sxx = blur(x.mul(x)) - mx.mul(mx);
        const cv::Mat syy = blur(y.mul(y)) - my.mul(my);
        const cv::Mat sxy = blur(x.mul(y)) - mx.mul(my);
        const cv::Mat num = (2 * mx.mul(my) + kC1).mul(2 * sxy + kC2);
        const cv::Mat den = (mx.mul(mx) + my.mul(my) + kC1).mul(sxx + syy + kC2);
        cv::Mat s;
        cv::divide(num, den, s);
        acc += s;
    }
    return acc / static_cast<double>(ca.size());
}

double masked_ssim(const cv::Mat& a, const cv::Mat& b, const FaceMask& mask) {
    require_mask(mask, a.size());
    if (a.size() != b.size() || a.type() != b.type()) throw ValidationError("SSIM inputs differ in shape");
    std::vector<cv::Mat> ca, cb;
    cv::split(a, ca);
    cv::split(b, cb);
    double total = 0.0;
    for (std::size_t c = 0; c < ca.size(); ++c) {
        const cv::Mat s = ssim_map(ca[c], cb[c]);
        total += cv::mean(s, mask)[0];
    }
    return total / static_cast<double>(ca.size());
}

DepthStats depth_stats(const RgbdFrame& generated, const RgbdFrame& reference, const FaceMask& mask) {
    require_mask(mask, reference.depth.size());
    if (generated.depth.size() != reference.depth.size()) throw ValidationError("depth maps differ in size");
    std::vector<double> diffs;
    std::size_t invalid = 0;
    for (int y = 0; y < mask.rows; ++y) {
        const auto* m = mask.ptr<std::uint8_t>(y);
        const auto* g = generated.depth.ptr<std::uint8_t>(y);
        const auto* r = reference.depth.ptr<std::uint8_t>(y);
        for (int x = 0; x < mask.cols; ++x) {
            if (!m[x]) continue;
            if (g[x] == generated.background_code) ++invalid;
            double d;
            if (generated.depth_range == reference.depth_range) {
                d = std::abs(static_cast<double>(g[x]) - static_cast<double>(r[x])) *
                    reference.depth_range.mm_per_code();
            } else {
                d = std::abs(generated.depth_range.code_to_mm(g[x]) - reference.depth_range.code_to_mm(r[x]));
            }
            diffs.push_back(d);
        }
    }
    DepthStats s;
    s.pixels = diffs.size();
    double sum = 0.0;
    std::size_t within = 0;
    for (double d : diffs) {
        sum += d;
        if (d <= 5.0) ++within;
    }
    const std::size_t n = diffs.size();
    s.mean_mm = sum / static_cast<double>(n);
    s.fraction_within_5mm = static_cast<double>(within) / static_cast<double>(n);
    s.fraction_generated_invalid = static_cast<double>(invalid) / static_cast<double>(n);
    std::sort(diffs.begin(), diffs.end());
    s.median_mm = n % 2 ? diffs[n / 2] : 0.5 * (diffs[n / 2 - 1] + diffs[n / 2]);
    return s;
}

cv::Mat difference_image(const RgbdFrame& generated, const RgbdFrame& reference, const FaceMask& mask) {
    cv::Mat diff;
    cv::absdiff(generated.rgb, reference.rgb, diff);
    std::vector<cv::Mat> ch;
    cv::split(diff, ch);
    cv::Mat sum;
    cv::add(ch[0], ch[1], sum, cv::noArray(), CV_32F);
    cv::add(sum, ch[2], sum, cv::noArray(), CV_32F);
    cv::Mat out;
    sum.convertTo(out, CV_8U, -1.0 / 3.0, 255.0);
    out.setTo(0, mask == 0);
    return out;
}

}  // namespace hmdface
