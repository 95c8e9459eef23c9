#pragma once

// Paired training corpora built from the face oracle, and their on-disk form.
//
//  * CaptureScript       ordered expression parameters for one capture session
//  * PairedDataset       (landmark map, RGBD frame) pairs for the avatar GAN
//  * LowerFaceDataset    cropped lower-face IR images + landmark labels for the
//                        lower-face CNN, augmented and split 70:30
//
// On disk a dataset is one directory: manifest.json plus zero padded PNG
// files (rgb_000123.png, depth_000123.png, flm_000123.png for paired data,
// img_000123.png for lower-face data).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "hmdface/flm.hpp"
#include "hmdface/synthetic_face.hpp"

namespace hmdface {

enum class Segment { ExpressionPose, Sentence, FreeTalk };

std::string to_string(Segment s);
Segment segment_from_string(const std::string& s);

struct CaptureFrame {
    ExpressionParams params;
    Segment segment = Segment::ExpressionPose;
    friend bool operator==(const CaptureFrame&, const CaptureFrame&) = default;
};

struct CaptureConfig {
    int expression_repeats = 4;
    int sentences = 20;
    int frames_per_sentence = 15;
    int talk_frames = 195;
    std::uint64_t seed = 7;

    // 1 neutral + 26 * repeats + sentences * frames_per_sentence + talk_frames
    std::size_t total_frames() const;
};

struct CaptureScript {
    std::vector<CaptureFrame> frames;
    std::size_t neutral_index = 0;
    friend bool operator==(const CaptureScript&, const CaptureScript&) = default;
};

// The fixed table of 26 capture poses.
const std::vector<ExpressionParams>& canonical_expressions();

CaptureScript build_capture_script(const CaptureConfig& config);

struct PairedItem {
    LandmarkMap flm_map;
    RgbdFrame frame;
    FacialLandmarkSet landmarks;
    Segment segment = Segment::ExpressionPose;
    ExpressionParams params;
};

struct PairedDataset {
    std::vector<PairedItem> items;
    IdentitySpec identity;
    Resolution resolution{};
    DepthRange depth_range{};
    std::uint8_t background_code = 0;
    LandmarkBounds bounds;
    std::size_t neutral_index = 0;

    const FacialLandmarkSet& neutral_reference() const { return items.at(neutral_index).landmarks; }
    std::vector<FacialLandmarkSet> landmark_sets() const;
    // Hash over landmarks and image content; used as training provenance.
    std::uint64_t content_hash() const;
    // Inclusive range of depth codes that occur on the face over all items.
    std::pair<int, int> face_depth_code_range() const;
};

bool operator==(const PairedDataset& a, const PairedDataset& b);

PairedDataset build_paired_dataset(const CaptureScript& script, const IdentitySpec& identity,
                                   Resolution resolution = {});

// Deterministic split of `count` item indices: every `stride`-th item (offset
// by `phase`) goes to the held-out side.
struct IndexSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> held_out;
};
IndexSplit holdout_split(std::size_t count, std::size_t stride = 10, std::size_t phase = 5);

// ---------------------------------------------------------------------------
// Lower-face CNN corpus

struct AugmentParams {
    double angle_deg = 0.0;
    double jitter_x = 0.0;
    double jitter_y = 0.0;
    bool flip = false;
};

struct AugmentationConfig {
    std::size_t target_count = 10000;
    double crop_jitter_px = 8.0;
    double rotation_deg = 10.0;
    bool flip = true;
    double train_fraction = 0.7;
    std::uint64_t seed = 11;
};

struct LowerFaceItem {
    cv::Mat image;                 // CV_8UC1 crop
    std::vector<Point2> label;     // crop-space coordinates, one per subset index
    cv::Matx23d ref_to_sample;     // 256 reference space -> this sample's pixels
    bool flipped = false;
    std::size_t source_frame = 0;
};

struct LowerFaceDataset {
    std::vector<LowerFaceItem> items;
    std::vector<std::size_t> subset_indices;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    cv::Matx23d crop_geometry;     // 256 reference space -> unaugmented crop
    cv::Size crop_size{128, 128};
    std::uint64_t seed = 0;
    IdentitySpec identity;
};

bool operator==(const LowerFaceDataset& a, const LowerFaceDataset& b);

// Crop window inside the lower-face HMC view (view pixels).
cv::Rect lowerface_crop_window();
// Affine from 256 reference space to the unaugmented crop.
cv::Matx23d lowerface_crop_geometry();

// Landmarks whose neutral position lies inside the crop (with a small
// margin). The set is closed under mirror_index().
std::vector<std::size_t> lowerface_subset(const FacialLandmarkSet& neutral_reference);

// Geometric augmentation in crop space: rotation about the crop centre,
// translation, optional horizontal flip (labels swap to their mirror slots).
cv::Matx23d augmentation_affine(const AugmentParams& a, cv::Size crop);
std::vector<Point2> flip_labels(const std::vector<Point2>& label, const std::vector<std::size_t>& subset,
                                int width);

LowerFaceDataset build_lowerface_dataset(const CaptureScript& script, const IdentitySpec& identity,
                                         const AugmentationConfig& config);

// ---------------------------------------------------------------------------
// Persistence. Load errors name the offending file.

void save_dataset(const PairedDataset& dataset, const std::filesystem::path& dir);
PairedDataset load_paired_dataset(const std::filesystem::path& dir);

void save_dataset(const LowerFaceDataset& dataset, const std::filesystem::path& dir);
LowerFaceDataset load_lowerface_dataset(const std::filesystem::path& dir);

// "paired" or "lowerface", read from the manifest.
std::string dataset_kind(const std::filesystem::path& dir);

}  // namespace hmdface
