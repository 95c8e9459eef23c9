#pragma once

// Lower-face landmark regressor: a 128x128 IR crop in, 2 * |subset|
// coordinates out. Torch-free header; the network sits behind pimpl.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include <opencv2/core.hpp>

#include "hmdface/dataset.hpp"
#include "hmdface/face_tracking.hpp"

namespace hmdface {

struct CnnConfig {
    int epochs = 15;
    int batch_size = 8;
    double learning_rate = 0.001;
    std::vector<int> widths{16, 32, 64, 128};  // four stride-2 conv blocks
    int hidden = 256;
    std::uint64_t seed = 5;

    static CnnConfig desk();
    // Wider blocks (32/64/128/256).
    static CnnConfig full();
    void validate() const;
    std::uint64_t hash() const;
};

struct LowerFaceWeights {
    std::vector<std::size_t> subset_indices;
    cv::Size input_size{128, 128};
    std::vector<int> widths;
    int hidden = 256;
    cv::Matx23d crop_geometry;        // reference space -> crop
    cv::Rect crop_window;             // inside the lower HMC view
    std::vector<float> parameters;
    std::uint64_t config_hash = 0;
    std::uint64_t dataset_seed = 0;
    friend bool operator==(const LowerFaceWeights& a, const LowerFaceWeights& b);
};

struct CnnEpochLog {
    int epoch = 0;
    double train_mse = 0.0;
    double test_mse = 0.0;
    double wall_s = 0.0;
};

struct CnnTrainReport {
    std::vector<CnnEpochLog> epochs;
    double test_mean_error_px = 0.0;      // 256 reference scale
    double baseline_mean_error_px = 0.0;  // predicting the mean training label
    double test_mse = 0.0;                // normalised label units
    double baseline_mse = 0.0;
    std::size_t test_items = 0;
};

// Throws StructuralError on an empty split or inconsistent label lengths.
std::pair<LowerFaceWeights, CnnTrainReport> train_lowerface_cnn(
    const LowerFaceDataset& dataset, const CnnConfig& config,
    const std::function<void(const CnnEpochLog&)>& on_epoch = {});

class LowerFaceTracker {
public:
    explicit LowerFaceTracker(const LowerFaceWeights& weights);
    ~LowerFaceTracker();
    LowerFaceTracker(LowerFaceTracker&&) noexcept;
    LowerFaceTracker& operator=(LowerFaceTracker&&) noexcept;

    // Crop-space predictions for a batch of crops of input_size.
    std::vector<std::vector<Point2>> predict_crops(const std::vector<cv::Mat>& crops) const;

    // Full lower HMC view in, reference-space report out. Throws ShapeError
    // when the view is not hmc_geometry().lower_size.
    PartialLandmarkReport track(const cv::Mat& lower_view, std::uint64_t timestamp_us = 0) const;

    const LowerFaceWeights& weights() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

PartialLandmarkReport track_lowerface(const LowerFaceWeights& weights, const cv::Mat& lower_view,
                                      std::uint64_t timestamp_us = 0);

// Mean reference-space error of `tracker` over the given dataset items.
double mean_reference_error(const LowerFaceTracker& tracker, const LowerFaceDataset& dataset,
                            const std::vector<std::size_t>& indices);

void export_lowerface_weights(const LowerFaceWeights& weights, const std::filesystem::path& path);
LowerFaceWeights import_lowerface_weights(const std::filesystem::path& path);

}  // namespace hmdface
