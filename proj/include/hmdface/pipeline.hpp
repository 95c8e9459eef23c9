#pragma once

// The live loop: HMC views -> partial trackers -> merger -> wire frame ->
// landmark map -> generator -> postprocess -> point cloud -> stereo render,
// with per-stage wall-clock accounting.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hmdface/avatar_gan.hpp"
#include "hmdface/face_tracking.hpp"
#include "hmdface/landmark_merger.hpp"
#include "hmdface/lowerface_cnn.hpp"
#include "hmdface/reconstruction.hpp"
#include "hmdface/synthetic_face.hpp"
#include "hmdface/wire_protocol.hpp"

namespace hmdface {

struct PipelineConfig {
    std::filesystem::path dataset_dir;
    std::filesystem::path gan_weights;
    std::filesystem::path cnn_weights;
    double tracking_hz = 30.0;
    double render_hz = 90.0;
    std::optional<PostprocessParams> postprocess;  // unset: from generator provenance
    int splat_radius = 1;
    double stereo_baseline_mm = 64.0;
    std::array<std::optional<int>, 2> brow_threshold{};  // unset: suggested per identity
    int calibration_frames = kDefaultCalibrationFrames;
    std::uint64_t source_deadline_us = 100'000;
    std::uint64_t seed = 1;

    // Throws ConfigError on non-positive rates, a negative splat radius or
    // baseline, or fewer than one calibration frame.
    void validate() const;
};

// Everything the loop needs from training: the identity being tracked, its
// envelope and neutral pose, and both networks.
struct LiveAssets {
    IdentitySpec identity;
    LandmarkBounds bounds;
    FacialLandmarkSet neutral_reference;
    DepthRange depth_range{};
    std::uint8_t background_code = 0;
    GeneratorWeights generator;
    LowerFaceWeights lowerface;

    static LiveAssets load(const PipelineConfig& config);
};

// Per-stage statistics in milliseconds, in first-seen stage order.
class LatencyTable {
public:
    void add(const std::string& stage, double ms);
    void add_frame(double ms);
    void clear();

    struct Row {
        std::string stage;
        std::size_t count = 0;
        double mean_ms = 0.0, p50_ms = 0.0, p95_ms = 0.0, max_ms = 0.0;
    };
    std::vector<Row> rows() const;
    Row frame_row() const;
    double sum_of_stage_means() const;
    std::string format() const;
    std::string to_json() const;

private:
    static Row summarise(const std::string& name, std::vector<double> v);
    std::vector<std::string> order_;
    std::map<std::string, std::vector<double>> samples_;
    std::vector<double> frames_;
};

struct StageTime {
    std::string stage;
    double ms = 0.0;
};

struct LiveFrame {
    std::uint64_t sequence = 0;
    std::uint64_t timestamp_us = 0;
    ReportSet reports;
    HmcViews views;                    // tracker input, empty for wire input
    std::array<int, 2> brow_thresholds{};
    FacialLandmarkSet flm;      // merged, 256 reference space
    WireFrame wire;             // what went over the wire
    RgbdFrame rgbd;             // postprocessed generator output
    StereoRender stereo;
    std::array<SourceStatus, kSourceCount> status{};
    std::vector<StageTime> stages;
    double total_ms = 0.0;
};

// Owner of the trackers, the merger and the generator. The tracking half
// (calibrate, set_threshold, track, merge) and the render half
// (set_postprocess, render) touch disjoint state, so each may live on its own
// thread; step() runs both on the caller's thread.
class LivePipeline {
public:
    LivePipeline(LiveAssets assets, PipelineConfig config);

    // Re-anchors both brow trackers on the HMC views of `neutral`.
    void anchor_brows(const ExpressionParams& neutral = ExpressionParams::neutral());
    // Offsets from neutral report sets collected after anchor_brows().
    void calibrate_from(std::span<const ReportSet> neutral_reports);
    // anchor_brows, then `frames` (0: config value) tracked neutral frames.
    void calibrate(const ExpressionParams& neutral = ExpressionParams::neutral(), int frames = 0);
    bool calibrated() const { return calib_.calibrated; }
    const CalibrationState& calibration() const { return calib_; }

    // Re-anchors the brow tracker on the stored neutral view at the new
    // threshold. Returns false when the brow is not visible there; the
    // threshold is kept and the source then reports tracking lost.
    bool set_threshold(int side, int value);
    int threshold(int side) const;
    bool brow_tracking(int side) const { return brow_ok_.at(static_cast<std::size_t>(side)); }
    void set_postprocess(const PostprocessParams& p);
    const PostprocessParams& postprocess_params() const { return post_; }

    // Tracker reports from simulated HMC views of `params`.
    ReportSet track(const ExpressionParams& params, std::uint64_t timestamp_us, std::vector<StageTime>* stages = nullptr,
                    HmcViews* views = nullptr);
    // Tracking and merging; fills reports, flm, status and their stage times.
    // Throws StateError before calibration.
    LiveFrame merge(const ExpressionParams& params, std::uint64_t timestamp_us);
    // Wire round trip, landmark map, generator, postprocess, point cloud and
    // stereo render of f.flm.
    void render(LiveFrame& f);

    // merge + render, recorded in latency().
    LiveFrame step(const ExpressionParams& params, std::uint64_t timestamp_us);

    const LatencyTable& latency() const { return latency_; }
    LatencyTable& latency() { return latency_; }
    const LiveAssets& assets() const { return assets_; }
    const PipelineConfig& config() const { return config_; }
    Resolution generator_resolution() const;
    // Binarized brow view (0/255) at the current threshold.
    cv::Mat brow_preview(const ExpressionParams& params, int side) const;

private:
    LiveAssets assets_;
    PipelineConfig config_;
    Generator generator_;
    LowerFaceTracker lowerface_;
    EyeGeometry eyes_;
    std::array<BrowTrackState, 2> brows_{};
    std::array<bool, 2> brow_ok_{};
    HmcViews neutral_views_;
    CalibrationState calib_;
    MergerState merger_;
    PostprocessParams post_;
    CameraModel camera_;
    std::pair<CameraModel, CameraModel> eyes_cameras_;
    std::uint32_t sequence_ = 0;
    LatencyTable latency_;
};

// Expression trajectory used by the benchmark and the oracle-driven serve
// mode: the free-talk part of the default capture script, looped.
std::vector<ExpressionParams> bench_trajectory(std::uint64_t seed, std::size_t frames);

struct BenchResult {
    std::size_t frames = 0;
    double wall_s = 0.0;
    double sustained_hz = 0.0;
    LatencyTable latency;
};

// Runs `frames` consecutive unpaced steps after calibration.
BenchResult run_bench(LivePipeline& pipeline, std::size_t frames, std::uint64_t seed = 1);

}  // namespace hmdface
