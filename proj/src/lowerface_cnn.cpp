#include "hmdface/lowerface_cnn.hpp"

#include <chrono>
#include <mutex>
#include <random>

#include "hmdface/error.hpp"
#include "hmdface/hashing.hpp"
#include "nn_common.hpp"

namespace hmdface {

namespace {

constexpr std::array<char, 4> kCnnMagic = {'H', 'M', 'L', 'C'};

struct RegressorImpl : torch::nn::Module {
    torch::nn::Sequential features;
    torch::nn::Linear fc1{nullptr}, fc2{nullptr};

    RegressorImpl(const std::vector<int>& widths, int hidden, cv::Size input, std::size_t outputs) {
        int in = 1;
        int h = input.height, w = input.width;
        for (int c : widths) {
            features->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, c, 3).stride(2).padding(1).bias(false)));
            features->push_back(torch::nn::BatchNorm2d(c));
            features->push_back(torch::nn::ReLU());
            in = c;
            h = (h + 1) / 2;
            w = (w + 1) / 2;
        }
        register_module("features", features);
        fc1 = register_module("fc1", torch::nn::Linear(in * h * w, hidden));
        fc2 = register_module("fc2", torch::nn::Linear(hidden, static_cast<int64_t>(outputs)));
    }

    torch::Tensor forward(torch::Tensor x) {
        x = features->forward(x).flatten(1);
        return fc2->forward(torch::relu(fc1->forward(x)));
    }
};
TORCH_MODULE(Regressor);

// Labels are regressed in [-1, 1] crop units.
double label_centre(cv::Size s) { return 0.5 * (s.width - 1); }

torch::Tensor images_tensor(const std::vector<cv::Mat>& crops) {
    const auto n = static_cast<int64_t>(crops.size());
    const int h = crops.front().rows, w = crops.front().cols;
    auto t = torch::empty({n, 1, h, w}, torch::kUInt8);
    for (int64_t i = 0; i < n; ++i) {
        const cv::Mat c = crops[static_cast<std::size_t>(i)].isContinuous() ? crops[static_cast<std::size_t>(i)]
                                                                              : crops[static_cast<std::size_t>(i)].clone();
        std::memcpy(t[i].data_ptr<std::uint8_t>(), c.data, static_cast<std::size_t>(h * w));
    }
    return t;
}

torch::Tensor to_input(const torch::Tensor& u8) { return u8.to(torch::kFloat32).div_(127.5).sub_(1.0); }

std::vector<std::vector<Point2>> decode_labels(const torch::Tensor& out, double centre) {
    const auto c = out.to(torch::kFloat64).contiguous();
    const auto n = c.size(0), k = c.size(1) / 2;
    const double* p = c.data_ptr<double>();
    std::vector<std::vector<Point2>> res(static_cast<std::size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < k; ++j) {
            res[static_cast<std::size_t>(i)].push_back(
                {centre + centre * p[i * 2 * k + 2 * j], centre + centre * p[i * 2 * k + 2 * j + 1]});
        }
    }
    return res;
}

double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Mean reference-space distance between predicted and true crop labels.
double reference_error(const std::vector<std::vector<Point2>>& pred, const LowerFaceDataset& ds,
                       const std::vector<std::size_t>& idx) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < idx.size(); ++n) {
        const auto& item = ds.items[idx[n]];
        const cv::Matx23d back = invert_affine(item.ref_to_sample);
        for (std::size_t k = 0; k < item.label.size(); ++k) {
            sum += distance(apply_affine(back, pred[n][k]), apply_affine(back, item.label[k]));
            ++count;
        }
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace

bool operator==(const LowerFaceWeights& a, const LowerFaceWeights& b) {
    return a.subset_indices == b.subset_indices && a.input_size == b.input_size && a.widths == b.widths &&
           a.hidden == b.hidden && a.crop_geometry == b.crop_geometry && a.crop_window == b.crop_window &&
           a.parameters == b.parameters && a.config_hash == b.config_hash && a.dataset_seed == b.dataset_seed;
}

CnnConfig CnnConfig::desk() { return {}; }

CnnConfig CnnConfig::full() {
    CnnConfig c;
    c.widths = {32, 64, 128, 256};
    return c;
}

void CnnConfig::validate() const {
    if (epochs <= 0 || batch_size <= 0 || !(learning_rate > 0) || hidden <= 0 || widths.empty()) {
        throw ConfigError("CNN epochs, batch size, learning rate and widths must be positive");
    }
    for (int w : widths) {
        if (w <= 0) throw ConfigError("CNN widths must be positive");
    }
}

std::uint64_t CnnConfig::hash() const {
    Fnv1a h;
    h.update_value(epochs).update_value(batch_size).update_value(learning_rate).update_value(hidden).update_value(seed);
    for (int w : widths) h.update_value(w);
    return h.digest();
}

std::pair<LowerFaceWeights, CnnTrainReport> train_lowerface_cnn(const LowerFaceDataset& ds, const CnnConfig& config,
                                                                const std::function<void(const CnnEpochLog&)>& on_epoch) {
    config.validate();
    if (ds.train.empty() || ds.test.empty()) throw StructuralError("lower-face dataset needs both train and test items");
    const std::size_t k = ds.subset_indices.size();
    for (const auto& it : ds.items) {
        if (it.label.size() != k) throw StructuralError("label length differs from the subset size");
        if (it.image.size() != ds.crop_size) throw ShapeError("crop size differs from the dataset crop size");
    }

    nn::seed_everything(config.seed);
    Regressor net(config.widths, config.hidden, ds.crop_size, 2 * k);
    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(config.learning_rate));

    const double centre = label_centre(ds.crop_size);
    std::vector<cv::Mat> crops;
    crops.reserve(ds.items.size());
    for (const auto& it : ds.items) crops.push_back(it.image);
    const auto images = images_tensor(crops);
    auto labels = torch::empty({static_cast<int64_t>(ds.items.size()), static_cast<int64_t>(2 * k)}, torch::kFloat32);
    {
        auto acc = labels.accessor<float, 2>();
        for (std::size_t i = 0; i < ds.items.size(); ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                acc[static_cast<int64_t>(i)][static_cast<int64_t>(2 * j)] =
                    static_cast<float>((ds.items[i].label[j].x - centre) / centre);
                acc[static_cast<int64_t>(i)][static_cast<int64_t>(2 * j + 1)] =
                    static_cast<float>((ds.items[i].label[j].y - centre) / centre);
            }
        }
    }
    auto index_tensor = [](const std::vector<std::size_t>& v) {
        std::vector<int64_t> tmp(v.begin(), v.end());
        return torch::tensor(tmp, torch::kInt64);
    };
    const auto test_idx = index_tensor(ds.test);

    auto predict = [&](const torch::Tensor& idx) {
        torch::NoGradGuard guard;
        net->eval();
        std::vector<torch::Tensor> outs;
        for (int64_t b = 0; b < idx.size(0); b += 256) {
            const auto sel = idx.slice(0, b, std::min<int64_t>(idx.size(0), b + 256));
            outs.push_back(net->forward(to_input(images.index_select(0, sel))));
        }
        return torch::cat(outs);
    };

    std::mt19937_64 rng(config.seed);
    CnnTrainReport report;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order = ds.train;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        net->train();
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_size)) {
            const std::vector<std::size_t> part(order.begin() + static_cast<std::ptrdiff_t>(b),
                                                order.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                                    order.size(), b + config.batch_size)));
            const auto sel = index_tensor(part);
            opt.zero_grad();
            const auto loss =
                torch::mse_loss(net->forward(to_input(images.index_select(0, sel))), labels.index_select(0, sel));
            loss.backward();
            opt.step();
            sum += loss.item<double>();
            ++batches;
        }
        CnnEpochLog e;
        e.epoch = epoch;
        e.train_mse = sum / static_cast<double>(batches);
        e.test_mse = torch::mse_loss(predict(test_idx), labels.index_select(0, test_idx)).item<double>();
        e.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.epochs.push_back(e);
        if (on_epoch) on_epoch(e);
    }

    const auto pred = predict(test_idx);
    const auto truth = labels.index_select(0, test_idx);
    report.test_items = ds.test.size();
    report.test_mse = torch::mse_loss(pred, truth).item<double>();
    const auto mean_label = labels.index_select(0, index_tensor(ds.train)).mean(0, true);
    const auto baseline = mean_label.expand_as(truth);
    report.baseline_mse = torch::mse_loss(baseline, truth).item<double>();
    report.test_mean_error_px = reference_error(decode_labels(pred, centre), ds, ds.test);
    report.baseline_mean_error_px = reference_error(decode_labels(baseline, centre), ds, ds.test);

    LowerFaceWeights w;
    w.subset_indices = ds.subset_indices;
    w.input_size = ds.crop_size;
    w.widths = config.widths;
    w.hidden = config.hidden;
    w.crop_geometry = ds.crop_geometry;
    w.crop_window = lowerface_crop_window();
    w.parameters = nn::flatten_parameters(*net);
    w.config_hash = config.hash();
    w.dataset_seed = ds.seed;
    return {std::move(w), std::move(report)};
}

// ---------------------------------------------------------------------------

struct LowerFaceTracker::Impl {
    LowerFaceWeights weights;
    Regressor net{nullptr};
    cv::Matx23d crop_to_ref;
    std::mutex mu;
};

LowerFaceTracker::LowerFaceTracker(const LowerFaceWeights& weights) : impl_(std::make_unique<Impl>()) {
    impl_->weights = weights;
    impl_->net = Regressor(weights.widths, weights.hidden, weights.input_size, 2 * weights.subset_indices.size());
    nn::load_parameters(*impl_->net, weights.parameters);
    impl_->net->eval();
    impl_->crop_to_ref = invert_affine(weights.crop_geometry);
}

LowerFaceTracker::~LowerFaceTracker() = default;
LowerFaceTracker::LowerFaceTracker(LowerFaceTracker&&) noexcept = default;
LowerFaceTracker& LowerFaceTracker::operator=(LowerFaceTracker&&) noexcept = default;

const LowerFaceWeights& LowerFaceTracker::weights() const { return impl_->weights; }

std::vector<std::vector<Point2>> LowerFaceTracker::predict_crops(const std::vector<cv::Mat>& crops) const {
    if (crops.empty()) return {};
    for (const auto& c : crops) {
        if (c.size() != impl_->weights.input_size || c.type() != CV_8UC1) {
            throw ShapeError("crop must be 8-bit single-channel " + std::to_string(impl_->weights.input_size.width) +
                             "x" + std::to_string(impl_->weights.input_size.height));
        }
    }
    std::lock_guard lock(impl_->mu);
    torch::NoGradGuard guard;
    const auto out = impl_->net->forward(to_input(images_tensor(crops)));
    return decode_labels(out, label_centre(impl_->weights.input_size));
}

PartialLandmarkReport LowerFaceTracker::track(const cv::Mat& lower_view, std::uint64_t timestamp_us) const {
    const cv::Size expected = hmc_geometry().lower_size;
    if (lower_view.size() != expected || lower_view.type() != CV_8UC1) {
        throw ShapeError("lower-face view must be 8-bit single-channel " + std::to_string(expected.width) + "x" +
                         std::to_string(expected.height));
    }
    const auto pred = predict_crops({lower_view(impl_->weights.crop_window).clone()}).front();
    PartialLandmarkReport r;
    r.source = Source::LowerFace;
    r.timestamp_us = timestamp_us;
    r.indices = impl_->weights.subset_indices;
    for (const auto& p : pred) r.points.push_back(apply_affine(impl_->crop_to_ref, p));
    return r;
}

PartialLandmarkReport track_lowerface(const LowerFaceWeights& weights, const cv::Mat& lower_view,
                                      std::uint64_t timestamp_us) {
    return LowerFaceTracker(weights).track(lower_view, timestamp_us);
}

double mean_reference_error(const LowerFaceTracker& tracker, const LowerFaceDataset& ds,
                            const std::vector<std::size_t>& indices) {
    std::vector<std::vector<Point2>> pred;
    for (std::size_t b = 0; b < indices.size(); b += 256) {
        std::vector<cv::Mat> crops;
        for (std::size_t i = b; i < std::min(indices.size(), b + 256); ++i) crops.push_back(ds.items[indices[i]].image);
        auto part = tracker.predict_crops(crops);
        pred.insert(pred.end(), part.begin(), part.end());
    }
    return reference_error(pred, ds, indices);
}

void export_lowerface_weights(const LowerFaceWeights& w, const std::filesystem::path& path) {
    const json header = {{"kind", "lowerface-regressor"},
                         {"subset_indices", w.subset_indices},
                         {"input_size", {w.input_size.width, w.input_size.height}},
                         {"widths", w.widths},
                         {"hidden", w.hidden},
                         {"crop_geometry", to_json_value(w.crop_geometry)},
                         {"crop_window", {w.crop_window.x, w.crop_window.y, w.crop_window.width, w.crop_window.height}},
                         {"config_hash", hex64(w.config_hash)},
                         {"dataset_seed", w.dataset_seed}};
    nn::write_weights_file(path, kCnnMagic, header, w.parameters);
}

LowerFaceWeights import_lowerface_weights(const std::filesystem::path& path) {
    auto [h, values] = nn::read_weights_file(path, kCnnMagic);
    LowerFaceWeights w;
    try {
        if (h.at("kind") != "lowerface-regressor") throw IoError("not a lower-face weights file: " + path.string());
        w.subset_indices = h.at("subset_indices").get<std::vector<std::size_t>>();
        w.input_size = {h.at("input_size").at(0).get<int>(), h.at("input_size").at(1).get<int>()};
        w.widths = h.at("widths").get<std::vector<int>>();
        w.hidden = h.at("hidden");
        w.crop_geometry = affine_from_json(h.at("crop_geometry"));
        const auto& r = h.at("crop_window");
        w.crop_window = {r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(), r.at(3).get<int>()};
        w.config_hash = std::stoull(h.at("config_hash").get<std::string>(), nullptr, 16);
        w.dataset_seed = h.at("dataset_seed");
    } catch (const json::exception& e) {
        throw IoError("corrupt header in " + path.string() + ": " + e.what());
    }
    w.parameters = std::move(values);
    // Constructing the network checks the parameter count.
    LowerFaceTracker probe(w);
    return w;
}

}  // namespace hmdface
