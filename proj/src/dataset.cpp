#include "hmdface/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "hmdface/error.hpp"
#include "hmdface/hashing.hpp"
#include "json_io.hpp"

namespace hmdface {
namespace fs = std::filesystem;
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kFormatVersion = 1;

double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit_draw(rng); }

// Sum of a few random sinusoids; `t` in frames, frequencies in cycles/frame.
struct SmoothSignal {
    double centre = 0.0;
    std::vector<std::array<double, 3>> parts;  // amplitude, frequency, phase

    static SmoothSignal random(std::mt19937_64& rng, double centre, double amp_total, double f_lo, double f_hi,
                               int components = 3) {
        SmoothSignal s;
        s.centre = centre;
        for (int k = 0; k < components; ++k) {
            s.parts.push_back({amp_total / components * uniform(rng, 0.5, 1.0), uniform(rng, f_lo, f_hi),
                               uniform(rng, 0.0, kTwoPi)});
        }
        return s;
    }
    double operator()(double t) const {
        double v = centre;
        for (const auto& p : parts) v += p[0] * std::sin(kTwoPi * p[1] * t + p[2]);
        return v;
    }
};

std::string frame_name(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%06zu.png", prefix, i);
    return buf;
}

std::vector<std::uint8_t> encode_png(const cv::Mat& m) {
    std::vector<std::uint8_t> buf;
    if (!cv::imencode(".png", m, buf)) throw IoError("PNG encoding failed");
    return buf;
}

std::uint32_t write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
    return crc32_of(bytes);
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("missing or unreadable file: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

cv::Mat read_png(const fs::path& path, std::uint32_t expected_crc, cv::Size expected_size, int expected_type) {
    const auto bytes = read_file(path);
    cv::Mat m = cv::imdecode(bytes, cv::IMREAD_UNCHANGED);
    if (m.empty()) throw IoError("undecodable image: " + path.string());
    if (m.size() != expected_size || m.type() != expected_type) {
        throw ShapeError("shape mismatch in " + path.string() + ": expected " + std::to_string(expected_size.width) +
                         "x" + std::to_string(expected_size.height) + ", found " + std::to_string(m.cols) + "x" +
                         std::to_string(m.rows));
    }
    if (crc32_of(bytes) != expected_crc) throw IoError("checksum mismatch: " + path.string());
    return m;
}

void write_manifest(const fs::path& dir, const json& manifest) {
    const fs::path tmp = dir / "manifest.json.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << manifest.dump(1) << '\n';
    }
    fs::rename(tmp, dir / "manifest.json");
}

json read_manifest(const fs::path& dir) {
    const fs::path p = dir / "manifest.json";
    if (!fs::exists(p)) throw IoError("missing manifest: " + p.string());
    std::ifstream in(p);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("malformed manifest " + p.string() + ": " + e.what());
    }
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(unit_draw(rng) * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
    }
    return idx;
}

}  // namespace

std::string to_string(Segment s) {
    switch (s) {
        case Segment::ExpressionPose: return "expression-pose";
        case Segment::Sentence: return "sentence";
        case Segment::FreeTalk: return "free-talk";
    }
    return "?";
}

Segment segment_from_string(const std::string& s) {
    if (s == "expression-pose") return Segment::ExpressionPose;
    if (s == "sentence") return Segment::Sentence;
    if (s == "free-talk") return Segment::FreeTalk;
    throw ValidationError("unknown segment label: " + s);
}

std::size_t CaptureConfig::total_frames() const {
    return 1 + 26 * static_cast<std::size_t>(expression_repeats) +
           static_cast<std::size_t>(sentences) * static_cast<std::size_t>(frames_per_sentence) +
           static_cast<std::size_t>(talk_frames);
}

const std::vector<ExpressionParams>& canonical_expressions() {
    static const std::vector<ExpressionParams> table = [] {
        auto e = [](auto&& setup) {
            ExpressionParams p;
            setup(p);
            return p;
        };
        return std::vector<ExpressionParams>{
            e([](auto& p) { p.mouth_open = 1.0; }),
            e([](auto& p) { p.mouth_open = 0.5; }),
            e([](auto& p) { p.smile = 1.0; }),
            e([](auto& p) { p.smile = 0.8; p.mouth_open = 0.6; }),
            e([](auto& p) { p.smile = -1.0; }),
            e([](auto& p) { p.smile = -0.7; p.mouth_open = 0.4; }),
            e([](auto& p) { p.brow_raise_left = p.brow_raise_right = 1.0; }),
            e([](auto& p) { p.brow_raise_left = p.brow_raise_right = -1.0; }),
            e([](auto& p) { p.brow_raise_left = 1.0; }),
            e([](auto& p) { p.brow_raise_right = 1.0; }),
            e([](auto& p) { p.brow_raise_left = p.brow_raise_right = 1.0; p.mouth_open = 0.8; }),
            e([](auto& p) { p.brow_raise_left = p.brow_raise_right = -1.0; p.smile = -0.6; }),
            e([](auto& p) { p.eye_open_left = p.eye_open_right = 0.0; }),
            e([](auto& p) { p.eye_open_left = 0.0; p.smile = 0.5; }),
            e([](auto& p) { p.eye_open_right = 0.0; p.smile = 0.5; }),
            e([](auto& p) { p.eye_open_left = p.eye_open_right = 0.4; p.smile = 0.3; }),
            e([](auto& p) { p.gaze_x = -1.0; }),
            e([](auto& p) { p.gaze_x = 1.0; }),
            e([](auto& p) { p.gaze_y = -1.0; }),
            e([](auto& p) { p.gaze_y = 1.0; }),
            e([](auto& p) { p.jaw_shift = -1.0; p.mouth_open = 0.3; }),
            e([](auto& p) { p.jaw_shift = 1.0; p.mouth_open = 0.3; }),
            e([](auto& p) { p.mouth_open = 0.7; p.smile = -0.4; }),
            e([](auto& p) { p.smile = 1.0; p.brow_raise_left = p.brow_raise_right = 0.6; p.mouth_open = 0.3; }),
            e([](auto& p) { p.brow_raise_left = 1.0; p.brow_raise_right = -0.5; p.smile = -0.3; }),
            e([](auto& p) {
                p.smile = -1.0;
                p.brow_raise_left = p.brow_raise_right = 0.4;
                p.eye_open_left = p.eye_open_right = 0.7;
            }),
        };
    }();
    return table;
}

CaptureScript build_capture_script(const CaptureConfig& config) {
    if (config.expression_repeats < 0 || config.sentences < 0 || config.frames_per_sentence < 0 ||
        config.talk_frames < 0) {
        throw ConfigError("capture counts must be non-negative");
    }
    std::mt19937_64 rng(config.seed);
    CaptureScript script;
    script.frames.push_back({ExpressionParams::neutral(), Segment::ExpressionPose});
    script.neutral_index = 0;

    // Repeats after the first get a small jitter on every field.
    for (int r = 0; r < config.expression_repeats; ++r) {
        for (const auto& base : canonical_expressions()) {
            ExpressionParams p = base;
            if (r > 0) {
                for (double* f : {&p.mouth_open, &p.smile, &p.brow_raise_left, &p.brow_raise_right,
                                  &p.eye_open_left, &p.eye_open_right, &p.gaze_x, &p.gaze_y, &p.jaw_shift}) {
                    *f += uniform(rng, -0.05, 0.05);
                }
                p = p.clamped();
            }
            script.frames.push_back({p, Segment::ExpressionPose});
        }
    }

    for (int s = 0; s < config.sentences; ++s) {
        const double n = std::max(1, config.frames_per_sentence);
        const auto mouth = SmoothSignal::random(rng, 0.35, 0.55, 1.5 / n, 4.0 / n);
        const auto smile = SmoothSignal::random(rng, uniform(rng, -0.2, 0.3), 0.25, 0.5 / n, 1.5 / n, 2);
        const auto jaw = SmoothSignal::random(rng, 0.0, 0.25, 0.5 / n, 2.0 / n, 2);
        for (int f = 0; f < config.frames_per_sentence; ++f) {
            ExpressionParams p;
            p.mouth_open = mouth(f);
            p.smile = smile(f);
            p.jaw_shift = jaw(f);
            script.frames.push_back({p.clamped(), Segment::Sentence});
        }
    }

    if (config.talk_frames > 0) {
        // Frequencies in cycles per frame at a 30 Hz capture rate.
        const double lo = 0.1 / 30.0, hi = 1.2 / 30.0;
        const auto mouth = SmoothSignal::random(rng, 0.35, 0.6, lo, 2.0 * hi);
        const auto smile = SmoothSignal::random(rng, 0.1, 0.8, lo, hi);
        const auto brow_l = SmoothSignal::random(rng, 0.0, 0.9, lo, hi);
        const auto brow_common = SmoothSignal::random(rng, 0.0, 0.5, lo, hi);
        const auto eye = SmoothSignal::random(rng, 0.8, 0.5, lo, hi);
        const auto gx = SmoothSignal::random(rng, 0.0, 1.0, lo, hi);
        const auto gy = SmoothSignal::random(rng, 0.0, 0.8, lo, hi);
        const auto jaw = SmoothSignal::random(rng, 0.0, 0.5, lo, hi);
        const auto wink = SmoothSignal::random(rng, 0.0, 0.3, lo, hi, 2);
        for (int f = 0; f < config.talk_frames; ++f) {
            ExpressionParams p;
            p.mouth_open = mouth(f);
            p.smile = smile(f);
            p.brow_raise_left = brow_common(f) + 0.5 * brow_l(f);
            p.brow_raise_right = brow_common(f) - 0.5 * brow_l(f);
            p.eye_open_left = eye(f) + wink(f);
            p.eye_open_right = eye(f) - wink(f);
            p.gaze_x = gx(f);
            p.gaze_y = gy(f);
            p.jaw_shift = jaw(f);
            script.frames.push_back({p.clamped(), Segment::FreeTalk});
        }
    }
    return script;
}

std::vector<FacialLandmarkSet> PairedDataset::landmark_sets() const {
    std::vector<FacialLandmarkSet> out;
    out.reserve(items.size());
    for (const auto& it : items) out.push_back(it.landmarks);
    return out;
}

std::uint64_t PairedDataset::content_hash() const {
    Fnv1a h;
    h.update_value(resolution.width).update_value(resolution.height).update_value(identity.seed);
    for (const auto& it : items) {
        for (double v : it.landmarks.flat()) h.update_value(v);
        for (const cv::Mat* m : {&it.frame.rgb, &it.frame.depth}) {
            const cv::Mat c = m->isContinuous() ? *m : m->clone();
            h.update(std::span<const std::uint8_t>(c.data, c.total() * c.elemSize()));
        }
    }
    return h.digest();
}

std::pair<int, int> PairedDataset::face_depth_code_range() const {
    int lo = 255, hi = 0;
    for (const auto& it : items) {
        double mn = 0, mx = 0;
        const cv::Mat valid = it.frame.valid_mask();
        if (cv::countNonZero(valid) == 0) continue;
        cv::minMaxLoc(it.frame.depth, &mn, &mx, nullptr, nullptr, valid);
        lo = std::min(lo, static_cast<int>(mn));
        hi = std::max(hi, static_cast<int>(mx));
    }
    if (lo > hi) return {0, 0};
    return {lo, hi};
}

bool operator==(const PairedDataset& a, const PairedDataset& b) {
    if (a.items.size() != b.items.size() || !(a.identity == b.identity) || !(a.resolution == b.resolution) ||
        !(a.depth_range == b.depth_range) || a.background_code != b.background_code || !(a.bounds == b.bounds) ||
        a.neutral_index != b.neutral_index) {
        return false;
    }
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        const auto& x = a.items[i];
        const auto& y = b.items[i];
        if (!(x.flm_map == y.flm_map) || !(x.frame == y.frame) || !(x.landmarks == y.landmarks) ||
            x.segment != y.segment || !(x.params == y.params)) {
            return false;
        }
    }
    return true;
}

PairedDataset build_paired_dataset(const CaptureScript& script, const IdentitySpec& identity, Resolution resolution) {
    if (script.frames.empty()) throw StructuralError("capture script is empty");
    if (script.neutral_index >= script.frames.size()) throw StructuralError("neutral index outside the script");
    identity.validate();

    PairedDataset ds;
    ds.identity = identity;
    ds.resolution = resolution;
    ds.neutral_index = script.neutral_index;
    ds.items.reserve(script.frames.size());
    for (const auto& cf : script.frames) {
        PairedItem item;
        item.params = cf.params;
        item.segment = cf.segment;
        item.landmarks = landmarks_of(identity, cf.params, resolution);
        item.frame = render_face(identity, cf.params, resolution);
        // Face-area clip: anything without valid depth is background.
        item.frame.rgb.setTo(cv::Scalar::all(0), item.frame.depth == item.frame.background_code);
        item.flm_map = rasterize(item.landmarks);
        ds.items.push_back(std::move(item));
    }
    ds.depth_range = ds.items.front().frame.depth_range;
    ds.background_code = ds.items.front().frame.background_code;
    const auto sets = ds.landmark_sets();
    ds.bounds = bounds_from_dataset(sets);
    return ds;
}

IndexSplit holdout_split(std::size_t count, std::size_t stride, std::size_t phase) {
    if (stride == 0) throw ConfigError("holdout stride must be positive");
    IndexSplit s;
    for (std::size_t i = 0; i < count; ++i) {
        (i % stride == phase % stride ? s.held_out : s.train).push_back(i);
    }
    return s;
}

// ---------------------------------------------------------------------------

cv::Rect lowerface_crop_window() { return {64, 96, 128, 128}; }

cv::Matx23d lowerface_crop_geometry() {
    const cv::Rect w = lowerface_crop_window();
    const cv::Matx23d crop(1, 0, -w.x, 0, 1, -w.y);
    return compose_affine(crop, hmc_geometry().lower_face);
}

std::vector<std::size_t> lowerface_subset(const FacialLandmarkSet& neutral_reference) {
    constexpr double kMargin = 3.0;
    const FacialLandmarkSet ref = neutral_reference.rescaled({kReferenceSize, kReferenceSize});
    const cv::Matx23d g = lowerface_crop_geometry();
    const cv::Rect w = lowerface_crop_window();
    auto inside = [&](std::size_t i) {
        const Point2 p = apply_affine(g, ref[i]);
        return p.x >= kMargin && p.y >= kMargin && p.x <= w.width - 1 - kMargin && p.y <= w.height - 1 - kMargin;
    };
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        if (inside(i) && inside(mirror_index(i))) subset.push_back(i);
    }
    return subset;
}

cv::Matx23d augmentation_affine(const AugmentParams& a, cv::Size crop) {
    const double cx = 0.5 * (crop.width - 1), cy = 0.5 * (crop.height - 1);
    const double t = a.angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(t), s = std::sin(t);
    // Rotate about the centre, then translate.
    cv::Matx23d m(c, -s, cx - c * cx + s * cy + a.jitter_x, s, c, cy - s * cx - c * cy + a.jitter_y);
    if (a.flip) m = compose_affine(cv::Matx23d(-1, 0, crop.width - 1, 0, 1, 0), m);
    return m;
}

std::vector<Point2> flip_labels(const std::vector<Point2>& label, const std::vector<std::size_t>& subset, int width) {
    if (label.size() != subset.size()) throw StructuralError("label/subset size mismatch");
    std::vector<Point2> out(label.size());
    for (std::size_t k = 0; k < subset.size(); ++k) {
        const auto it = std::find(subset.begin(), subset.end(), mirror_index(subset[k]));
        if (it == subset.end()) throw StructuralError("subset is not closed under mirroring");
        const Point2 src = label[static_cast<std::size_t>(it - subset.begin())];
        out[k] = {(width - 1) - src.x, src.y};
    }
    return out;
}

bool operator==(const LowerFaceDataset& a, const LowerFaceDataset& b) {
    if (a.items.size() != b.items.size() || a.subset_indices != b.subset_indices || a.train != b.train ||
        a.test != b.test || a.crop_geometry != b.crop_geometry || a.crop_size != b.crop_size || a.seed != b.seed ||
        !(a.identity == b.identity)) {
        return false;
    }
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        const auto& x = a.items[i];
        const auto& y = b.items[i];
        if (x.label != y.label || x.ref_to_sample != y.ref_to_sample || x.flipped != y.flipped ||
            x.source_frame != y.source_frame || x.image.size() != y.image.size() ||
            cv::countNonZero(x.image != y.image) != 0) {
            return false;
        }
    }
    return true;
}

LowerFaceDataset build_lowerface_dataset(const CaptureScript& script, const IdentitySpec& identity,
                                         const AugmentationConfig& config) {
    if (script.frames.empty()) throw StructuralError("capture script is empty");
    if (config.target_count < script.frames.size()) {
        throw ConfigError("augmentation target " + std::to_string(config.target_count) +
                          " is smaller than the script length " + std::to_string(script.frames.size()));
    }
    if (config.train_fraction <= 0.0 || config.train_fraction >= 1.0) {
        throw ConfigError("train fraction must lie in (0, 1)");
    }

    LowerFaceDataset ds;
    ds.seed = config.seed;
    ds.identity = identity;
    ds.crop_geometry = lowerface_crop_geometry();
    ds.crop_size = lowerface_crop_window().size();
    ds.subset_indices = lowerface_subset(landmarks_of(identity, script.frames.at(script.neutral_index).params));

    std::vector<cv::Mat> views;
    std::vector<FacialLandmarkSet> refs;
    views.reserve(script.frames.size());
    for (const auto& cf : script.frames) {
        views.push_back(render_hmc_views(identity, cf.params).lower_face_ir);
        refs.push_back(landmarks_of(identity, cf.params));
    }

    const cv::Rect win = lowerface_crop_window();
    const cv::Matx23d crop_from_view(1, 0, -win.x, 0, 1, -win.y);
    std::mt19937_64 rng(config.seed);
    ds.items.reserve(config.target_count);
    for (std::size_t i = 0; i < config.target_count; ++i) {
        std::size_t frame = i;
        AugmentParams aug;
        if (i >= script.frames.size()) {
            frame = std::min(script.frames.size() - 1,
                             static_cast<std::size_t>(unit_draw(rng) * static_cast<double>(script.frames.size())));
            aug.angle_deg = uniform(rng, -config.rotation_deg, config.rotation_deg);
            aug.jitter_x = uniform(rng, -config.crop_jitter_px, config.crop_jitter_px);
            aug.jitter_y = uniform(rng, -config.crop_jitter_px, config.crop_jitter_px);
            aug.flip = config.flip && unit_draw(rng) < 0.5;
        }
        const cv::Matx23d sample_from_view = compose_affine(augmentation_affine(aug, ds.crop_size), crop_from_view);
        LowerFaceItem item;
        item.source_frame = frame;
        item.flipped = aug.flip;
        item.ref_to_sample = compose_affine(sample_from_view, hmc_geometry().lower_face);
        cv::warpAffine(views[frame], item.image, cv::Mat(sample_from_view), ds.crop_size, cv::INTER_LINEAR,
                       cv::BORDER_CONSTANT, cv::Scalar(8));
        for (std::size_t k : ds.subset_indices) {
            const std::size_t src = aug.flip ? mirror_index(k) : k;
            item.label.push_back(apply_affine(item.ref_to_sample, refs[frame][src]));
        }
        ds.items.push_back(std::move(item));
    }

    const auto order = shuffled_indices(ds.items.size(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(config.train_fraction * ds.items.size()));
    ds.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    ds.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(ds.train.begin(), ds.train.end());
    std::sort(ds.test.begin(), ds.test.end());
    return ds;
}

// ---------------------------------------------------------------------------

void save_dataset(const PairedDataset& ds, const fs::path& dir) {
    fs::create_directories(dir);
    json files = json::array();
    json landmarks = json::array();
    json segments = json::array();
    json expressions = json::array();
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        const auto& it = ds.items[i];
        cv::Mat bgr;
        cv::cvtColor(it.frame.rgb, bgr, cv::COLOR_RGB2BGR);
        const std::string rgb = frame_name("rgb", i), depth = frame_name("depth", i), flm = frame_name("flm", i);
        json f;
        f["rgb"] = rgb;
        f["rgb_crc32"] = write_file(dir / rgb, encode_png(bgr));
        f["depth"] = depth;
        f["depth_crc32"] = write_file(dir / depth, encode_png(it.frame.depth));
        f["flm"] = flm;
        f["flm_crc32"] = write_file(dir / flm, encode_png(it.flm_map.pixels * 255));
        files.push_back(f);
        landmarks.push_back(to_json_value(it.landmarks));
        segments.push_back(to_string(it.segment));
        expressions.push_back(to_json_value(it.params));
    }
    json m;
    m["kind"] = "paired";
    m["format_version"] = kFormatVersion;
    m["resolution"] = {ds.resolution.width, ds.resolution.height};
    m["depth_range_mm"] = {ds.depth_range.near_mm, ds.depth_range.far_mm};
    m["background_code"] = ds.background_code;
    m["seed"] = ds.identity.seed;
    m["identity"] = to_json_value(ds.identity);
    m["landmarks"] = landmarks;
    m["bounds"] = to_json_value(ds.bounds);
    m["neutral_index"] = ds.neutral_index;
    m["subset_indices"] = ds.items.empty() ? std::vector<std::size_t>{} : lowerface_subset(ds.neutral_reference());
    m["segments"] = segments;
    m["expressions"] = expressions;
    m["files"] = files;
    write_manifest(dir, m);
}

PairedDataset load_paired_dataset(const fs::path& dir) {
    const json m = read_manifest(dir);
    if (m.value("kind", "") != "paired") throw IoError("not a paired dataset: " + (dir / "manifest.json").string());
    try {
        PairedDataset ds;
        ds.resolution = {m.at("resolution").at(0).get<int>(), m.at("resolution").at(1).get<int>()};
        ds.depth_range = {m.at("depth_range_mm").at(0).get<double>(), m.at("depth_range_mm").at(1).get<double>()};
        ds.background_code = m.at("background_code").get<std::uint8_t>();
        ds.identity = identity_from_json(m.at("identity"));
        ds.bounds = bounds_from_json(m.at("bounds"));
        ds.neutral_index = m.at("neutral_index").get<std::size_t>();
        const json& files = m.at("files");
        const json& landmarks = m.at("landmarks");
        if (files.size() != landmarks.size()) throw IoError("manifest file/landmark count mismatch in " + dir.string());
        const cv::Size size(ds.resolution.width, ds.resolution.height);
        for (std::size_t i = 0; i < files.size(); ++i) {
            const json& f = files[i];
            PairedItem it;
            const auto flat = landmarks[i].get<std::vector<double>>();
            it.landmarks = landmark_set_from_flat(flat, ds.resolution);
            it.segment = segment_from_string(m.at("segments").at(i).get<std::string>());
            it.params = expression_from_json(m.at("expressions").at(i));
            cv::Mat bgr = read_png(dir / f.at("rgb").get<std::string>(), f.at("rgb_crc32").get<std::uint32_t>(), size,
                                   CV_8UC3);
            cv::cvtColor(bgr, it.frame.rgb, cv::COLOR_BGR2RGB);
            it.frame.depth = read_png(dir / f.at("depth").get<std::string>(), f.at("depth_crc32").get<std::uint32_t>(),
                                      size, CV_8UC1);
            it.frame.depth_range = ds.depth_range;
            it.frame.background_code = ds.background_code;
            const fs::path flm_path = dir / f.at("flm").get<std::string>();
            cv::Mat flm = read_png(flm_path, f.at("flm_crc32").get<std::uint32_t>(), size, CV_8UC1);
            it.flm_map.pixels = flm / 255;
            if (!(it.flm_map == rasterize(it.landmarks))) {
                throw IoError("landmark map does not match its landmarks: " + flm_path.string());
            }
            ds.items.push_back(std::move(it));
        }
        if (ds.neutral_index >= ds.items.size()) throw IoError("neutral index out of range in " + dir.string());
        return ds;
    } catch (const json::exception& e) {
        throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
    }
}

void save_dataset(const LowerFaceDataset& ds, const fs::path& dir) {
    fs::create_directories(dir);
    json files = json::array(), labels = json::array(), transforms = json::array(), flipped = json::array(),
         sources = json::array();
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        const auto& it = ds.items[i];
        const std::string name = frame_name("img", i);
        files.push_back({{"img", name}, {"img_crc32", write_file(dir / name, encode_png(it.image))}});
        json l = json::array();
        for (const auto& p : it.label) {
            l.push_back(p.x);
            l.push_back(p.y);
        }
        labels.push_back(l);
        transforms.push_back(to_json_value(it.ref_to_sample));
        flipped.push_back(it.flipped);
        sources.push_back(it.source_frame);
    }
    json m;
    m["kind"] = "lowerface";
    m["format_version"] = kFormatVersion;
    m["resolution"] = {ds.crop_size.width, ds.crop_size.height};
    m["seed"] = ds.seed;
    m["identity"] = to_json_value(ds.identity);
    m["subset_indices"] = ds.subset_indices;
    m["crop_geometry"] = to_json_value(ds.crop_geometry);
    m["split"] = {{"train", ds.train}, {"test", ds.test}};
    m["labels"] = labels;
    m["transforms"] = transforms;
    m["flipped"] = flipped;
    m["source_frames"] = sources;
    m["files"] = files;
    write_manifest(dir, m);
}

LowerFaceDataset load_lowerface_dataset(const fs::path& dir) {
    const json m = read_manifest(dir);
    if (m.value("kind", "") != "lowerface") {
        throw IoError("not a lower-face dataset: " + (dir / "manifest.json").string());
    }
    try {
        LowerFaceDataset ds;
        ds.crop_size = {m.at("resolution").at(0).get<int>(), m.at("resolution").at(1).get<int>()};
        ds.seed = m.at("seed").get<std::uint64_t>();
        ds.identity = identity_from_json(m.at("identity"));
        ds.subset_indices = m.at("subset_indices").get<std::vector<std::size_t>>();
        ds.crop_geometry = affine_from_json(m.at("crop_geometry"));
        ds.train = m.at("split").at("train").get<std::vector<std::size_t>>();
        ds.test = m.at("split").at("test").get<std::vector<std::size_t>>();
        const json& files = m.at("files");
        for (std::size_t i = 0; i < files.size(); ++i) {
            LowerFaceItem it;
            it.image = read_png(dir / files[i].at("img").get<std::string>(),
                                files[i].at("img_crc32").get<std::uint32_t>(), ds.crop_size, CV_8UC1);
            const auto l = m.at("labels").at(i).get<std::vector<double>>();
            if (l.size() != 2 * ds.subset_indices.size()) throw IoError("label length mismatch in " + dir.string());
            for (std::size_t k = 0; k < ds.subset_indices.size(); ++k) it.label.push_back({l[2 * k], l[2 * k + 1]});
            it.ref_to_sample = affine_from_json(m.at("transforms").at(i));
            it.flipped = m.at("flipped").at(i).get<bool>();
            it.source_frame = m.at("source_frames").at(i).get<std::size_t>();
            ds.items.push_back(std::move(it));
        }
        return ds;
    } catch (const json::exception& e) {
        throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
    }
}

std::string dataset_kind(const fs::path& dir) { return read_manifest(dir).value("kind", ""); }

}  // namespace hmdface
