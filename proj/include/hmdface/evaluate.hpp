#pragma once

// Held-out evaluation of a trained generator against the capture ground
// truth: masked SSIM on RGB and raw depth differences over the face area.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hmdface/avatar_gan.hpp"
#include "hmdface/dataset.hpp"
#include "hmdface/metrics.hpp"
#include "hmdface/reconstruction.hpp"

namespace hmdface {

struct EvalItem {
    std::size_t index = 0;
    double ssim = 0.0;
    DepthStats depth;
};

struct EvalReport {
    std::vector<EvalItem> items;
    double mean_ssim = 0.0;
    double min_ssim = 0.0;
    double mean_depth_mm = 0.0;            // mean of per-item means
    double median_item_median_mm = 0.0;    // median of per-item medians
    double pooled_median_mm = 0.0;         // median over every masked pixel of every item
    double pooled_fraction_within_5mm = 0.0;
    std::size_t pooled_pixels = 0;
    PostprocessParams postprocess;
    std::uint64_t config_hash = 0;
    std::uint64_t dataset_hash = 0;
    std::uint64_t weights_hash = 0;

    std::size_t item_count() const { return items.size(); }
    std::string to_json() const;
    // Fixed-width aggregate table for terminals.
    std::string table() const;
};

struct EvalOptions {
    // Unset: clip range from the weights' provenance, widened by 4 codes.
    std::optional<PostprocessParams> postprocess;
    // Non-empty: one difference PNG per item written here as diff_<index>.png.
    std::filesystem::path difference_dir;
};

// Throws ValidationError on an out-of-range index or an empty split,
// ShapeError when the dataset and generator resolutions differ.
EvalReport evaluate(const Generator& generator, const PairedDataset& dataset, const std::vector<std::size_t>& split,
                    const EvalOptions& options = {});

std::uint64_t weights_hash(const GeneratorWeights& weights);

}  // namespace hmdface
