#include "hmdface/avatar_gan.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "hmdface/error.hpp"
#include "hmdface/hashing.hpp"
#include "nn_common.hpp"

namespace hmdface {

namespace F = torch::nn::functional;

namespace {

constexpr std::array<char, 4> kGanMagic = {'H', 'M', 'G', 'W'};

torch::nn::InstanceNorm2d instance_norm(int c) {
    return torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(c).affine(false).track_running_stats(false));
}

torch::nn::Conv2d down_conv(int in, int out) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 4).stride(2).padding(1));
}

torch::nn::ConvTranspose2d up_conv(int in, int out) {
    return torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
}

// Encoder-decoder with skip connections between mirrored levels.
struct UNetImpl : torch::nn::Module {
    std::vector<torch::nn::Sequential> down, up;

    explicit UNetImpl(const GanArchitecture& a) {
        const int d = a.depth();
        std::vector<int> ch(d);
        for (int i = 0; i < d; ++i) ch[i] = a.ngf * std::min(1 << i, 8);
        for (int i = 0; i < d; ++i) {
            torch::nn::Sequential s;
            if (i == 0) {
                s->push_back(down_conv(a.in_channels, ch[0]));
            } else {
                s->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
                s->push_back(down_conv(ch[i - 1], ch[i]));
                if (i != d - 1) s->push_back(instance_norm(ch[i]));
            }
            down.push_back(register_module("down" + std::to_string(i), s));
        }
        up.resize(d);
        for (int i = d - 1; i >= 0; --i) {
            torch::nn::Sequential s;
            s->push_back(torch::nn::ReLU());
            const int in = i == d - 1 ? ch[i] : 2 * ch[i];
            if (i == 0) {
                s->push_back(up_conv(in, a.out_channels));
                s->push_back(torch::nn::Tanh());
            } else {
                s->push_back(up_conv(in, ch[i - 1]));
                s->push_back(instance_norm(ch[i - 1]));
                if (a.dropout && i >= d - 4 && i <= d - 2) s->push_back(torch::nn::Dropout(0.5));
            }
            up[i] = register_module("up" + std::to_string(i), s);
        }
    }

    torch::Tensor forward(torch::Tensor x) {
        std::vector<torch::Tensor> skips;
        for (auto& d : down) {
            x = d->forward(x);
            skips.push_back(x);
        }
        const int n = static_cast<int>(down.size());
        torch::Tensor y = up[n - 1]->forward(skips[n - 1]);
        for (int i = n - 2; i >= 0; --i) y = up[i]->forward(torch::cat({skips[i], y}, 1));
        return y;
    }
};
TORCH_MODULE(UNet);

struct PatchDiscriminatorImpl : torch::nn::Module {
    torch::nn::Sequential net;

    explicit PatchDiscriminatorImpl(const GanArchitecture& a) {
        auto lrelu = [] { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)); };
        net->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(a.disc_in_channels, a.ndf, 4).stride(2).padding(1)));
        net->push_back(lrelu());
        int c = a.ndf;
        for (int n = 1; n <= a.disc_layers; ++n) {
            const int next = a.ndf * std::min(1 << n, 8);
            const int stride = n == a.disc_layers ? 1 : 2;
            net->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(c, next, 4).stride(stride).padding(1)));
            net->push_back(instance_norm(next));
            net->push_back(lrelu());
            c = next;
        }
        net->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(c, 1, 4).stride(1).padding(1)));
        register_module("net", net);
    }

    torch::Tensor forward(const torch::Tensor& x) { return net->forward(x); }
};
TORCH_MODULE(PatchDiscriminator);

int first_conv_in_channels(torch::nn::Module& m) {
    for (auto& sub : m.modules(false)) {
        if (auto* c = sub->as<torch::nn::Conv2d>()) return static_cast<int>(c->weight.size(1));
    }
    return -1;
}

json to_json(const GanArchitecture& a) {
    return {{"resolution", a.resolution}, {"ngf", a.ngf},
            {"ndf", a.ndf},               {"in_channels", a.in_channels},
            {"out_channels", a.out_channels}, {"disc_in_channels", a.disc_in_channels},
            {"disc_layers", a.disc_layers},   {"dropout", a.dropout},
            {"norm", a.norm},             {"objective", a.objective}};
}

GanArchitecture architecture_from_json(const json& j) {
    GanArchitecture a;
    a.resolution = j.at("resolution");
    a.ngf = j.at("ngf");
    a.ndf = j.at("ndf");
    a.in_channels = j.at("in_channels");
    a.out_channels = j.at("out_channels");
    a.disc_in_channels = j.at("disc_in_channels");
    a.disc_layers = j.at("disc_layers");
    a.dropout = j.at("dropout");
    a.norm = j.at("norm").get<std::string>();
    a.objective = j.at("objective").get<std::string>();
    a.validate();
    return a;
}

json to_json(const GanProvenance& p) {
    return {{"config_hash", hex64(p.config_hash)},
            {"dataset_hash", hex64(p.dataset_hash)},
            {"epochs", p.epochs},
            {"seed", p.seed},
            {"depth_range_mm", {p.depth_range.near_mm, p.depth_range.far_mm}},
            {"background_code", p.background_code},
            {"face_code_range", {p.face_code_min, p.face_code_max}}};
}

GanProvenance provenance_from_json(const json& j) {
    GanProvenance p;
    p.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    p.dataset_hash = std::stoull(j.at("dataset_hash").get<std::string>(), nullptr, 16);
    p.epochs = j.at("epochs");
    p.seed = j.at("seed");
    p.depth_range = {j.at("depth_range_mm").at(0).get<double>(), j.at("depth_range_mm").at(1).get<double>()};
    p.background_code = j.at("background_code");
    p.face_code_min = j.at("face_code_range").at(0);
    p.face_code_max = j.at("face_code_range").at(1);
    return p;
}

// Landmark map and RGBD target as network tensors in [-1, 1].
struct PairTensors {
    torch::Tensor flm;     // [1, R, R]
    torch::Tensor target;  // [4, R, R]
};

PairTensors to_tensors(const PairedItem& item) {
    PairTensors t;
    const cv::Mat m = item.flm_map.pixels.clone();
    t.flm = torch::from_blob(m.data, {1, m.rows, m.cols}, torch::kUInt8).to(torch::kFloat32).mul(2.0).sub(1.0);
    t.target = torch::cat({nn::image_to_tensor(item.frame.rgb), nn::image_to_tensor(item.frame.depth)}, 0);
    return t;
}

// Random translation: pad by 30/256 of the resolution with edge replication,
// then crop back at a random offset, identically for map and target. Scale
// stays as at inference time.
PairTensors jitter(const PairTensors& p, int res, std::mt19937_64& rng) {
    const int margin = static_cast<int>(std::lround(res * 30.0 / 256.0));
    const int lo = margin / 2;
    auto pad = [&](const torch::Tensor& t) {
        return F::pad(t.unsqueeze(0), F::PadFuncOptions({lo, margin - lo, lo, margin - lo}).mode(torch::kReplicate))
            .squeeze(0);
    };
    std::uniform_int_distribution<int> off(0, margin);
    const int ox = off(rng), oy = off(rng);
    auto crop = [&](const torch::Tensor& t) { return pad(t).slice(1, oy, oy + res).slice(2, ox, ox + res); };
    return {crop(p.flm).contiguous(), crop(p.target).contiguous()};
}

}  // namespace

// ---------------------------------------------------------------------------

int GanArchitecture::depth() const {
    int d = 0;
    while ((1 << d) < resolution) ++d;
    return d;
}

void GanArchitecture::validate() const {
    if (resolution < 16 || (resolution & (resolution - 1)) != 0) {
        throw ConfigError("generator resolution must be a power of two >= 16");
    }
    if (ngf <= 0 || ndf <= 0 || disc_layers < 1) throw ConfigError("network widths must be positive");
    if (in_channels != 1 || out_channels != 4 || disc_in_channels != in_channels + out_channels) {
        throw ConfigError("generator maps 1 channel to 4; the discriminator sees 5");
    }
    if (objective != "vanilla" && objective != "lsgan") {
        throw ConfigError("adversarial objective must be vanilla or lsgan, got '" + objective + "'");
    }
}

GanConfig GanConfig::full() { return {}; }

GanConfig GanConfig::desk() {
    GanConfig c;
    c.resolution = 128;
    c.ngf = 16;
    c.ndf = 16;
    c.epochs_total = 60;
    c.epochs_const_lr = 30;
    c.checkpoint_every = 10;
    c.objective = "lsgan";
    return c;
}

GanConfig GanConfig::preset(const std::string& name) {
    if (name == "full") return full();
    if (name == "desk") return desk();
    throw ConfigError("unknown GAN preset '" + name + "' (expected desk or full)");
}

GanArchitecture GanConfig::architecture() const {
    GanArchitecture a;
    a.resolution = resolution;
    a.ngf = ngf;
    a.ndf = ndf;
    a.dropout = dropout;
    a.objective = objective;
    return a;
}

void GanConfig::validate() const {
    if (epochs_total <= 0 || epochs_const_lr < 0 || epochs_const_lr > epochs_total) {
        throw ConfigError("need 0 <= epochs_const_lr <= epochs_total and epochs_total > 0");
    }
    if (!(learning_rate > 0) || !(init_std > 0) || !(l1_weight >= 0) || batch_size <= 0) {
        throw ConfigError("learning rate, init std and batch size must be positive");
    }
    if (mirror) throw ConfigError("mirroring is not supported: landmark maps are not mirror-symmetric");
    architecture().validate();
}

std::string GanConfig::to_json() const {
    const json j = {{"epochs_total", epochs_total},
                    {"epochs_const_lr", epochs_const_lr},
                    {"learning_rate", learning_rate},
                    {"beta1", beta1},
                    {"beta2", beta2},
                    {"batch_size", batch_size},
                    {"init_mean", init_mean},
                    {"init_std", init_std},
                    {"l1_weight", l1_weight},
                    {"jitter", jitter},
                    {"mirror", mirror},
                    {"resolution", resolution},
                    {"ngf", ngf},
                    {"ndf", ndf},
                    {"dropout", dropout},
                    {"objective", objective},
                    {"seed", seed}};
    return j.dump();
}

std::uint64_t GanConfig::hash() const { return Fnv1a().update(to_json()).digest(); }

double lr_at_epoch(const GanConfig& c, int epoch) {
    if (epoch <= c.epochs_const_lr || c.epochs_total == c.epochs_const_lr) return c.learning_rate;
    const double frac = static_cast<double>(c.epochs_total - epoch) / (c.epochs_total - c.epochs_const_lr);
    return c.learning_rate * std::min(1.0, std::max(0.0, frac));
}

std::size_t generator_parameter_count(const GanArchitecture& arch) {
    arch.validate();
    UNet g(arch);
    return nn::parameter_count(*g);
}

void TrainingLog::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,g_adv,g_l1,d_loss,lr,wall_s\n";
    out.precision(9);
    for (const auto& e : epochs) {
        out << e.epoch << ',' << e.g_adv << ',' << e.g_l1 << ',' << e.d_loss << ',' << e.lr << ',' << e.wall_s << '\n';
    }
}

TrainingLog TrainingLog::read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    TrainingLog log;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        EpochLog e;
        ss >> e.epoch >> e.g_adv >> e.g_l1 >> e.d_loss >> e.lr >> e.wall_s;
        if (!ss) throw IoError("malformed training log line in " + path.string());
        log.epochs.push_back(e);
    }
    return log;
}

std::pair<GeneratorWeights, TrainingLog> train_gan(const PairedDataset& dataset, const GanConfig& config,
                                                   const GanTrainOptions& options) {
    config.validate();
    if (dataset.items.empty()) throw StructuralError("cannot train on an empty dataset");
    if (dataset.resolution.width != config.resolution || dataset.resolution.height != config.resolution) {
        throw ConfigError("dataset resolution " + std::to_string(dataset.resolution.width) +
                          " does not match the configured " + std::to_string(config.resolution));
    }
    std::vector<std::size_t> indices = options.train_indices;
    if (indices.empty()) {
        for (std::size_t i = 0; i < dataset.items.size(); ++i) indices.push_back(i);
    }
    for (std::size_t i : indices) {
        if (i >= dataset.items.size()) throw StructuralError("training index out of range");
    }

    nn::seed_everything(config.seed);
    const GanArchitecture arch = config.architecture();
    UNet gen(arch);
    PatchDiscriminator disc(arch);
    nn::init_normal(*gen, config.init_mean, config.init_std);
    nn::init_normal(*disc, config.init_mean, config.init_std);
    gen->train();
    disc->train();

    auto adam = [&](torch::nn::Module& m) {
        return torch::optim::Adam(m.parameters(), torch::optim::AdamOptions(config.learning_rate)
                                                      .betas({config.beta1, config.beta2}));
    };
    auto opt_g = adam(*gen);
    auto opt_d = adam(*disc);
    auto set_lr = [](torch::optim::Adam& opt, double lr) {
        for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    };

    std::vector<PairTensors> data;
    data.reserve(indices.size());
    for (std::size_t i : indices) data.push_back(to_tensors(dataset.items[i]));

    const auto [code_lo, code_hi] = dataset.face_depth_code_range();
    const GanProvenance provenance{config.hash(), dataset.content_hash(), config.epochs_total, config.seed,
                                   dataset.depth_range, dataset.background_code, code_lo, code_hi};

    const bool least_squares = config.objective == "lsgan";
    auto adversarial = [least_squares](const torch::Tensor& logits, bool real) {
        const auto label = real ? torch::ones_like(logits) : torch::zeros_like(logits);
        return least_squares ? F::mse_loss(logits, label) : F::binary_cross_entropy_with_logits(logits, label);
    };

    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    TrainingLog log;
    const auto t_start = std::chrono::steady_clock::now();
    for (int epoch = 1; epoch <= config.epochs_total; ++epoch) {
        const double lr = lr_at_epoch(config, epoch);
        set_lr(opt_g, lr);
        set_lr(opt_d, lr);
        std::vector<std::size_t> order(data.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);

        double sum_adv = 0, sum_l1 = 0, sum_d = 0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_size)) {
            std::vector<torch::Tensor> flms, targets;
            for (std::size_t k = b; k < std::min(order.size(), b + config.batch_size); ++k) {
                const PairTensors p = config.jitter ? jitter(data[order[k]], config.resolution, rng) : data[order[k]];
                flms.push_back(p.flm);
                targets.push_back(p.target);
            }
            const auto flm = torch::stack(flms);
            const auto target = torch::stack(targets);

            const auto fake = gen->forward(flm);

            opt_d.zero_grad();
            const auto d_real = disc->forward(torch::cat({target, flm}, 1));
            const auto d_fake = disc->forward(torch::cat({fake.detach(), flm}, 1));
            const auto loss_d = 0.5 * (adversarial(d_real, true) + adversarial(d_fake, false));
            loss_d.backward();
            opt_d.step();

            opt_g.zero_grad();
            const auto d_gen = disc->forward(torch::cat({fake, flm}, 1));
            const auto g_adv = adversarial(d_gen, true);
            const auto g_l1 = F::l1_loss(fake, target);
            const auto loss_g = g_adv + config.l1_weight * g_l1;
            loss_g.backward();
            opt_g.step();

            sum_adv += g_adv.item<double>();
            sum_l1 += g_l1.item<double>();
            sum_d += loss_d.item<double>();
            ++batches;
        }
        EpochLog e;
        e.epoch = epoch;
        e.g_adv = sum_adv / batches;
        e.g_l1 = sum_l1 / batches;
        e.d_loss = sum_d / batches;
        e.lr = lr;
        e.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        log.epochs.push_back(e);
        if (options.on_epoch) options.on_epoch(e);

        if (!options.checkpoint_dir.empty() && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 &&
            epoch != config.epochs_total) {
            GeneratorWeights ck;
            ck.architecture = arch;
            ck.provenance = provenance;
            ck.provenance.epochs = epoch;
            ck.parameters = nn::flatten_parameters(*gen);
            std::filesystem::create_directories(options.checkpoint_dir);
            char name[32];
            std::snprintf(name, sizeof(name), "checkpoint_%04d.hmgw", epoch);
            export_weights(ck, options.checkpoint_dir / name);
        }
    }

    GeneratorWeights w;
    w.architecture = arch;
    w.provenance = provenance;
    w.parameters = nn::flatten_parameters(*gen);
    return {std::move(w), std::move(log)};
}

// ---------------------------------------------------------------------------

struct Generator::Impl {
    GeneratorWeights weights;
    UNet net{nullptr};
    std::mutex mu;
};

Generator::Generator(const GeneratorWeights& weights) : impl_(std::make_unique<Impl>()) {
    weights.architecture.validate();
    impl_->weights = weights;
    impl_->net = UNet(weights.architecture);
    nn::load_parameters(*impl_->net, weights.parameters);
    impl_->net->eval();
}

Generator::~Generator() = default;
Generator::Generator(Generator&&) noexcept = default;
Generator& Generator::operator=(Generator&&) noexcept = default;

const GeneratorWeights& Generator::weights() const { return impl_->weights; }

RgbdFrame Generator::generate(const LandmarkMap& flm_map) const {
    const int res = impl_->weights.architecture.resolution;
    if (flm_map.pixels.rows != res || flm_map.pixels.cols != res || flm_map.pixels.type() != CV_8UC1) {
        throw ShapeError("landmark map is " + std::to_string(flm_map.pixels.cols) + "x" +
                         std::to_string(flm_map.pixels.rows) + ", generator expects " + std::to_string(res) + "x" +
                         std::to_string(res));
    }
    std::lock_guard lock(impl_->mu);
    torch::NoGradGuard guard;
    cv::Mat m = flm_map.pixels.isContinuous() ? flm_map.pixels : flm_map.pixels.clone();
    const auto x = torch::from_blob(m.data, {1, 1, res, res}, torch::kUInt8).to(torch::kFloat32).mul(2.0).sub(1.0);
    const auto y = impl_->net->forward(x);
    const auto codes =
        y.squeeze(0).add(1.0).mul(127.5).round().clamp(0, 255).to(torch::kUInt8).permute({1, 2, 0}).contiguous();

    RgbdFrame out;
    cv::Mat all(res, res, CV_8UC4, codes.data_ptr<std::uint8_t>());
    std::vector<cv::Mat> ch;
    cv::split(all, ch);
    cv::merge(std::vector<cv::Mat>{ch[0], ch[1], ch[2]}, out.rgb);
    out.depth = ch[3].clone();
    out.depth_range = impl_->weights.provenance.depth_range;
    out.background_code = impl_->weights.provenance.background_code;
    return out;
}

RgbdFrame generate(const GeneratorWeights& weights, const LandmarkMap& flm_map) {
    return Generator(weights).generate(flm_map);
}

void export_weights(const GeneratorWeights& w, const std::filesystem::path& path) {
    const json header = {{"kind", "avatar-generator"},
                         {"architecture", to_json(w.architecture)},
                         {"provenance", to_json(w.provenance)}};
    nn::write_weights_file(path, kGanMagic, header, w.parameters);
}

GeneratorWeights import_weights(const std::filesystem::path& path) {
    auto [header, values] = nn::read_weights_file(path, kGanMagic);
    GeneratorWeights w;
    try {
        if (header.at("kind") != "avatar-generator") throw IoError("not a generator weights file: " + path.string());
        w.architecture = architecture_from_json(header.at("architecture"));
        w.provenance = provenance_from_json(header.at("provenance"));
    } catch (const json::exception& e) {
        throw IoError("corrupt header in " + path.string() + ": " + e.what());
    }
    if (values.size() != generator_parameter_count(w.architecture)) {
        throw IoError("parameter count in " + path.string() + " does not match its architecture");
    }
    w.parameters = std::move(values);
    return w;
}

GanChannelCounts probe_channel_counts(const GanArchitecture& arch) {
    arch.validate();
    UNet g(arch);
    PatchDiscriminator d(arch);
    torch::NoGradGuard guard;
    g->eval();
    GanChannelCounts c;
    c.generator_in = first_conv_in_channels(*g);
    c.generator_out = static_cast<int>(g->forward(torch::zeros({1, arch.in_channels, arch.resolution, arch.resolution}))
                                           .size(1));
    c.discriminator_in = first_conv_in_channels(*d);
    if (c.generator_in != 1 || c.generator_out != 4 || c.discriminator_in != 5) {
        throw StructuralError("GAN channel layout is not 1 -> 4 with a 5-channel discriminator");
    }
    return c;
}

double initial_conv_weight_std(const GanConfig& config) {
    nn::seed_everything(config.seed);
    const GanArchitecture arch = config.architecture();
    UNet g(arch);
    PatchDiscriminator d(arch);
    nn::init_normal(*g, config.init_mean, config.init_std);
    nn::init_normal(*d, config.init_mean, config.init_std);
    std::vector<torch::Tensor> kernels;
    for (torch::nn::Module* m : {static_cast<torch::nn::Module*>(g.get()), static_cast<torch::nn::Module*>(d.get())}) {
        for (auto& sub : m->modules(false)) {
            if (auto* c = sub->as<torch::nn::Conv2d>()) kernels.push_back(c->weight.detach().flatten());
            if (auto* t = sub->as<torch::nn::ConvTranspose2d>()) kernels.push_back(t->weight.detach().flatten());
        }
    }
    return torch::cat(kernels).std().item<double>();
}

}  // namespace hmdface
