#include "hmdface/evaluate.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

#include <opencv2/imgcodecs.hpp>

#include "hmdface/error.hpp"
#include "hmdface/hashing.hpp"
#include "json_io.hpp"

namespace hmdface {

namespace {

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Median of a histogram of absolute code differences, in codes.
double histogram_median(const std::array<std::size_t, 256>& h, std::size_t total) {
    auto nth = [&](std::size_t k) {
        std::size_t acc = 0;
        for (int c = 0; c < 256; ++c) {
            acc += h[c];
            if (acc > k) return c;
        }
        return 255;
    };
    if (total == 0) return 0.0;
    return total % 2 ? nth(total / 2) : 0.5 * (nth(total / 2 - 1) + nth(total / 2));
}

}  // namespace

std::uint64_t weights_hash(const GeneratorWeights& w) {
    Fnv1a h;
    h.update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(w.parameters.data()),
                                           w.parameters.size() * sizeof(float)));
    return h.digest();
}

EvalReport evaluate(const Generator& generator, const PairedDataset& ds, const std::vector<std::size_t>& split,
                    const EvalOptions& options) {
    if (split.empty()) throw ValidationError("evaluation split is empty");
    for (auto i : split) {
        if (i >= ds.items.size()) throw ValidationError("evaluation index " + std::to_string(i) + " out of range");
    }
    const auto& gw = generator.weights();
    if (gw.architecture.resolution != ds.resolution.width || gw.architecture.resolution != ds.resolution.height) {
        throw ShapeError("generator resolution " + std::to_string(gw.architecture.resolution) +
                         " differs from dataset resolution " + std::to_string(ds.resolution.width));
    }

    EvalReport r;
    r.postprocess = options.postprocess.value_or(
        default_postprocess({gw.provenance.face_code_min, gw.provenance.face_code_max}));
    r.postprocess.validate();
    r.config_hash = gw.provenance.config_hash;
    r.dataset_hash = ds.content_hash();
    r.weights_hash = weights_hash(gw);
    if (!options.difference_dir.empty()) std::filesystem::create_directories(options.difference_dir);

    std::array<std::size_t, 256> hist{};
    std::size_t pooled = 0;
    std::vector<double> medians;
    double sum_ssim = 0.0, sum_mean = 0.0;
    r.min_ssim = 1.0;
    for (auto i : split) {
        const auto& ref = ds.items[i].frame;
        const RgbdFrame out = postprocess(generator.generate(ds.items[i].flm_map), r.postprocess);
        const FaceMask mask = face_mask(ref);
        EvalItem item;
        item.index = i;
        item.ssim = masked_ssim(out.rgb, ref.rgb, mask);
        item.depth = depth_stats(out, ref, mask);
        for (int y = 0; y < mask.rows; ++y) {
            const auto* m = mask.ptr<std::uint8_t>(y);
            const auto* g = out.depth.ptr<std::uint8_t>(y);
            const auto* d = ref.depth.ptr<std::uint8_t>(y);
            for (int x = 0; x < mask.cols; ++x) {
                if (m[x]) ++hist[static_cast<std::size_t>(std::abs(int(g[x]) - int(d[x])))];
            }
        }
        pooled += item.depth.pixels;
        if (!options.difference_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof name, "diff_%06zu.png", i);
            const auto path = options.difference_dir / name;
            if (!cv::imwrite(path.string(), difference_image(out, ref, mask))) throw IoError("cannot write " + path.string());
        }
        sum_ssim += item.ssim;
        sum_mean += item.depth.mean_mm;
        r.min_ssim = std::min(r.min_ssim, item.ssim);
        medians.push_back(item.depth.median_mm);
        r.items.push_back(item);
    }
    const double n = static_cast<double>(r.items.size());
    const double mm = ds.depth_range.mm_per_code();
    r.mean_ssim = sum_ssim / n;
    r.mean_depth_mm = sum_mean / n;
    r.median_item_median_mm = median_of(medians);
    r.pooled_pixels = pooled;
    r.pooled_median_mm = histogram_median(hist, pooled) * mm;
    std::size_t within = 0;
    for (int c = 0; c < 256; ++c) {
        if (c * mm <= 5.0) within += hist[static_cast<std::size_t>(c)];
    }
    r.pooled_fraction_within_5mm = pooled ? static_cast<double>(within) / static_cast<double>(pooled) : 0.0;
    return r;
}

std::string EvalReport::to_json() const {
    json items_json = json::array();
    for (const auto& it : items) {
        items_json.push_back({{"index", it.index},
                              {"ssim", it.ssim},
                              {"depth_median_mm", it.depth.median_mm},
                              {"depth_mean_mm", it.depth.mean_mm},
                              {"fraction_within_5mm", it.depth.fraction_within_5mm},
                              {"fraction_generated_invalid", it.depth.fraction_generated_invalid},
                              {"pixels", it.depth.pixels}});
    }
    const json j = {{"item_count", items.size()},
                    {"mean_ssim", mean_ssim},
                    {"min_ssim", min_ssim},
                    {"mean_depth_mm", mean_depth_mm},
                    {"median_item_median_mm", median_item_median_mm},
                    {"pooled_median_mm", pooled_median_mm},
                    {"pooled_fraction_within_5mm", pooled_fraction_within_5mm},
                    {"pooled_pixels", pooled_pixels},
                    {"postprocess",
                     {{"erode", postprocess.erode_radius},
                      {"clip_near", postprocess.clip_near},
                      {"clip_far", postprocess.clip_far}}},
                    {"config_hash", hex64(config_hash)},
                    {"dataset_hash", hex64(dataset_hash)},
                    {"weights_hash", hex64(weights_hash)},
                    {"items", items_json}};
    return j.dump(2);
}

std::string EvalReport::table() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "items                 %zu\n"
                  "mean masked SSIM      %.4f (min %.4f)\n"
                  "pooled median |dz|    %.3f mm\n"
                  "median item median    %.3f mm\n"
                  "mean |dz|             %.3f mm\n"
                  "fraction <= 5 mm      %.4f\n",
                  items.size(), mean_ssim, min_ssim, pooled_median_mm, median_item_median_mm, mean_depth_mm,
                  pooled_fraction_within_5mm);
    return buf;
}

}  // namespace hmdface
