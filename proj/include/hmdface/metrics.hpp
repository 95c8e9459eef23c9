#pragma once

// Evaluation metrics over the face area: masked SSIM and depth differences.

#include <opencv2/core.hpp>

#include "hmdface/synthetic_face.hpp"

namespace hmdface {

// CV_8UC1, 1 inside the face area (valid reference depth), else 0.
using FaceMask = cv::Mat;

FaceMask face_mask(const RgbdFrame& reference);

// SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// L = 255. The SSIM map is averaged over mask pixels, then over channels.
// Throws ValidationError on an empty mask or mismatched shapes.
double masked_ssim(const cv::Mat& a, const cv::Mat& b, const FaceMask& mask);

// Per-pixel SSIM map (CV_64FC1), channel-averaged.
cv::Mat ssim_map(const cv::Mat& a, const cv::Mat& b);

struct DepthStats {
    double median_mm = 0.0;
    double mean_mm = 0.0;
    double fraction_within_5mm = 0.0;
    double fraction_generated_invalid = 0.0;  // masked pixels the generator left empty
    std::size_t pixels = 0;
};

// |dz| in mm over the mask, from raw codes with no smoothing.
DepthStats depth_stats(const RgbdFrame& generated, const RgbdFrame& reference, const FaceMask& mask);

// Grayscale difference image: white where equal, darker with larger RGB
// difference. Outside the mask is black.
cv::Mat difference_image(const RgbdFrame& generated, const RgbdFrame& reference, const FaceMask& mask);

}  // namespace hmdface
