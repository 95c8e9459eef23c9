#include "hmdface/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>

#include "hmdface/dataset.hpp"
#include "hmdface/error.hpp"
#include "json_io.hpp"

namespace hmdface {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Times a callable and appends it to the stage list.
template <typename F>
auto timed(std::vector<StageTime>* stages, const char* name, F&& f) {
    const auto t0 = Clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
        f();
        if (stages) stages->push_back({name, ms_since(t0)});
    } else {
        auto r = f();
        if (stages) stages->push_back({name, ms_since(t0)});
        return r;
    }
}

}  // namespace

void PipelineConfig::validate() const {
    if (!(tracking_hz > 0) || !(render_hz > 0)) throw ConfigError("tracking and render rates must be positive");
    if (splat_radius < 1) throw ConfigError("splat radius must be at least 1");
    if (stereo_baseline_mm < 0) throw ConfigError("stereo baseline must be non-negative");
    if (calibration_frames < 1) throw ConfigError("calibration needs at least one frame");
    for (const auto& t : brow_threshold) {
        if (t && (*t < 1 || *t > 254)) throw ConfigError("brow threshold must lie in [1, 254]");
    }
    if (postprocess) postprocess->validate();
}

LiveAssets LiveAssets::load(const PipelineConfig& config) {
    const PairedDataset ds = load_paired_dataset(config.dataset_dir);
    LiveAssets a;
    a.identity = ds.identity;
    a.bounds = ds.bounds;
    a.neutral_reference = ds.neutral_reference();
    a.depth_range = ds.depth_range;
    a.background_code = ds.background_code;
    a.generator = import_weights(config.gan_weights);
    a.lowerface = import_lowerface_weights(config.cnn_weights);
    return a;
}

// ---------------------------------------------------------------------------

void LatencyTable::add(const std::string& stage, double ms) {
    auto [it, fresh] = samples_.try_emplace(stage);
    if (fresh) order_.push_back(stage);
    it->second.push_back(ms);
}

void LatencyTable::add_frame(double ms) { frames_.push_back(ms); }

void LatencyTable::clear() {
    order_.clear();
    samples_.clear();
    frames_.clear();
}

LatencyTable::Row LatencyTable::summarise(const std::string& name, std::vector<double> v) {
    Row r;
    r.stage = name;
    r.count = v.size();
    if (v.empty()) return r;
    std::sort(v.begin(), v.end());
    auto pct = [&](double q) { return v[std::min(v.size() - 1, static_cast<std::size_t>(q * (v.size() - 1) + 0.5))]; };
    r.mean_ms = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    r.p50_ms = pct(0.5);
    r.p95_ms = pct(0.95);
    r.max_ms = v.back();
    return r;
}

std::vector<LatencyTable::Row> LatencyTable::rows() const {
    std::vector<Row> out;
    for (const auto& s : order_) out.push_back(summarise(s, samples_.at(s)));
    return out;
}

LatencyTable::Row LatencyTable::frame_row() const { return summarise("frame", frames_); }

double LatencyTable::sum_of_stage_means() const {
    double s = 0.0;
    for (const auto& r : rows()) s += r.mean_ms;
    return s;
}

std::string LatencyTable::format() const {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-16s %7s %9s %9s %9s %9s\n", "stage", "count", "mean_ms", "p50_ms", "p95_ms",
                  "max_ms");
    out += line;
    auto put = [&](const Row& r) {
        std::snprintf(line, sizeof line, "%-16s %7zu %9.3f %9.3f %9.3f %9.3f\n", r.stage.c_str(), r.count, r.mean_ms,
                      r.p50_ms, r.p95_ms, r.max_ms);
        out += line;
    };
    for (const auto& r : rows()) put(r);
    put(frame_row());
    return out;
}

std::string LatencyTable::to_json() const {
    json stages = json::array();
    auto row_json = [](const Row& r) {
        return json{{"stage", r.stage}, {"count", r.count}, {"mean_ms", r.mean_ms},
                    {"p50_ms", r.p50_ms}, {"p95_ms", r.p95_ms}, {"max_ms", r.max_ms}};
    };
    for (const auto& r : rows()) stages.push_back(row_json(r));
    return json{{"stages", stages}, {"frame", row_json(frame_row())}, {"sum_of_stage_means_ms", sum_of_stage_means()}}
        .dump();
}

// ---------------------------------------------------------------------------

LivePipeline::LivePipeline(LiveAssets assets, PipelineConfig config)
    : assets_(std::move(assets)),
      config_(std::move(config)),
      generator_(assets_.generator),
      lowerface_(assets_.lowerface),
      eyes_(EyeGeometry::from_neutral(assets_.neutral_reference)),
      merger_(config_.source_deadline_us) {
    config_.validate();
    const Resolution res = generator_resolution();
    if (assets_.neutral_reference.resolution() != res) {
        throw ShapeError("dataset resolution differs from the generator resolution");
    }
    calib_ = CalibrationState::from_training(assets_.bounds, assets_.neutral_reference);
    post_ = config_.postprocess.value_or(default_postprocess(
        {assets_.generator.provenance.face_code_min, assets_.generator.provenance.face_code_max}));
    camera_ = capture_camera(res);
    eyes_cameras_ = stereo_pair(camera_, config_.stereo_baseline_mm);
    neutral_views_ = render_hmc_views(assets_.identity, ExpressionParams::neutral());
    for (int side = 0; side < 2; ++side) {
        brows_[side].side = side;
        brows_[side].threshold = config_.brow_threshold[side].value_or(suggested_brow_threshold(assets_.identity));
        set_threshold(side, brows_[side].threshold);
    }
}

Resolution LivePipeline::generator_resolution() const {
    return {assets_.generator.architecture.resolution, assets_.generator.architecture.resolution};
}

void LivePipeline::anchor_brows(const ExpressionParams& neutral) {
    neutral_views_ = render_hmc_views(assets_.identity, neutral);
    for (int side = 0; side < 2; ++side) set_threshold(side, brows_[side].threshold);
}

void LivePipeline::calibrate_from(std::span<const ReportSet> neutral_reports) {
    calib_ = hmdface::calibrate(neutral_reports,
                                CalibrationState::from_training(assets_.bounds, assets_.neutral_reference));
    merger_ = MergerState(config_.source_deadline_us);
}

void LivePipeline::calibrate(const ExpressionParams& neutral, int frames) {
    if (frames <= 0) frames = config_.calibration_frames;
    anchor_brows(neutral);
    std::vector<ReportSet> sets;
    const std::uint64_t t0 = monotonic_us();
    for (int i = 0; i < frames; ++i) sets.push_back(track(neutral, t0 + static_cast<std::uint64_t>(i)));
    calibrate_from(sets);
}

bool LivePipeline::set_threshold(int side, int value) {
    if (side < 0 || side > 1) throw ValidationError("brow side must be 0 or 1");
    if (value < 1 || value > 254) throw ValidationError("brow threshold must lie in [1, 254]");
    const cv::Mat& view = side == 0 ? neutral_views_.left_eye_ir : neutral_views_.right_eye_ir;
    try {
        brows_[side] = calibrate_brow(view, side, value, assets_.neutral_reference);
        brow_ok_[side] = true;
    } catch (const CalibrationError&) {
        brows_[side].threshold = value;
        brow_ok_[side] = false;
    }
    return brow_ok_[side];
}

int LivePipeline::threshold(int side) const { return brows_.at(static_cast<std::size_t>(side)).threshold; }

void LivePipeline::set_postprocess(const PostprocessParams& p) {
    p.validate();
    post_ = p;
}

cv::Mat LivePipeline::brow_preview(const ExpressionParams& params, int side) const {
    const HmcViews v = render_hmc_views(assets_.identity, params);
    return binarize(side == 0 ? v.left_eye_ir : v.right_eye_ir, threshold(side)) * 255;
}

ReportSet LivePipeline::track(const ExpressionParams& params, std::uint64_t t, std::vector<StageTime>* stages,
                              HmcViews* views_out) {
    const HmcViews views = timed(stages, "hmc-capture", [&] { return render_hmc_views(assets_.identity, params); });
    if (views_out) *views_out = views;
    ReportSet out;
    out.push_back(timed(stages, "lower-face-cnn", [&] { return lowerface_.track(views.lower_face_ir, t); }));
    timed(stages, "brow-tracking", [&] {
        for (int side = 0; side < 2; ++side) {
            const cv::Mat& v = side == 0 ? views.left_eye_ir : views.right_eye_ir;
            if (brow_ok_[side]) {
                out.push_back(track_brow(v, brows_[side], t));
            } else {
                PartialLandmarkReport lost;
                lost.source = side == 0 ? Source::BrowLeft : Source::BrowRight;
                lost.timestamp_us = t;
                out.push_back(lost);
            }
        }
    });
    timed(stages, "eye-gaze", [&] {
        for (auto& r : gaze_source(eyes_, GazeSignals::from_params(params), t)) out.push_back(r);
    });
    return out;
}

LiveFrame LivePipeline::merge(const ExpressionParams& params, std::uint64_t t) {
    if (!calib_.calibrated) throw StateError("pipeline is not calibrated");
    LiveFrame f;
    f.timestamp_us = t;
    f.reports = track(params, t, &f.stages, &f.views);
    f.brow_thresholds = {brows_[0].threshold, brows_[1].threshold};
    f.flm = timed(&f.stages, "merge", [&] { return merge_step(f.reports, calib_, merger_, t); });
    f.status = merger_.status;
    return f;
}

LiveFrame LivePipeline::step(const ExpressionParams& params, std::uint64_t t) {
    const auto t0 = Clock::now();
    LiveFrame f = merge(params, t);
    render(f);
    f.total_ms = ms_since(t0);
    for (const auto& s : f.stages) latency_.add(s.stage, s.ms);
    latency_.add_frame(f.total_ms);
    return f;
}

void LivePipeline::render(LiveFrame& f) {
    f.flm = f.flm.rescaled({kReferenceSize, kReferenceSize});
    f.sequence = sequence_;
    f.wire = timed(&f.stages, "wire-codec", [&] {
        const WireBytes bytes = encode_frame(f.flm, sequence_++, f.timestamp_us);
        return decode_frame(bytes);
    });
    const LandmarkMap map =
        timed(&f.stages, "flm-raster", [&] { return rasterize(f.wire.landmarks.rescaled(generator_resolution())); });
    const RgbdFrame raw = timed(&f.stages, "generator", [&] { return generator_.generate(map); });
    f.rgbd = timed(&f.stages, "postprocess", [&] { return postprocess(raw, post_); });
    const PointCloud cloud = timed(&f.stages, "unproject", [&] { return unproject(f.rgbd, camera_); });
    f.stereo = timed(&f.stages, "stereo-render", [&] {
        return render_stereo(cloud, eyes_cameras_.first, eyes_cameras_.second, config_.splat_radius);
    });
}

// ---------------------------------------------------------------------------

std::vector<ExpressionParams> bench_trajectory(std::uint64_t seed, std::size_t frames) {
    CaptureConfig cc;
    cc.seed = seed;
    const CaptureScript script = build_capture_script(cc);
    std::vector<ExpressionParams> talk;
    for (const auto& f : script.frames) {
        if (f.segment == Segment::FreeTalk) talk.push_back(f.params);
    }
    if (talk.empty()) throw ConfigError("capture script has no free-talk segment");
    std::vector<ExpressionParams> out;
    out.reserve(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        // Ping-pong so the loop has no jump at the wrap.
        const std::size_t period = 2 * talk.size() - 1;
        const std::size_t k = i % period;
        out.push_back(talk[k < talk.size() ? k : period - k]);
    }
    return out;
}

BenchResult run_bench(LivePipeline& pipeline, std::size_t frames, std::uint64_t seed) {
    if (frames == 0) throw ConfigError("bench needs at least one frame");
    if (!pipeline.calibrated()) pipeline.calibrate();
    const auto traj = bench_trajectory(seed, frames);
    // One warm-up frame outside the measured window.
    pipeline.step(traj.front(), monotonic_us());
    pipeline.latency().clear();
    const auto t0 = Clock::now();
    for (const auto& p : traj) pipeline.step(p, monotonic_us());
    BenchResult r;
    r.frames = frames;
    r.wall_s = std::chrono::duration<double>(Clock::now() - t0).count();
    r.sustained_hz = static_cast<double>(frames) / r.wall_s;
    r.latency = pipeline.latency();
    return r;
}

}  // namespace hmdface
