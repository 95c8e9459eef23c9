// hmdface: one subcommand per pipeline stage.
//
//   synth-capture  oracle capture session -> paired dataset directory
//   build-dataset  capture directory -> augmented lower-face dataset
//   train-gan      paired dataset -> generator weights + log
//   train-cnn      lower-face dataset -> regressor weights + log
//   evaluate       generator vs held-out ground truth
//   infer          one landmark set -> RGBD, point cloud, stereo views
//   serve          live service (HTTP control + /live stream)
//   stream-send    oracle landmarks over the wire protocol
//   stream-recv    receive and account a landmark stream
//   bench          unpaced live loop with a per-stage latency table
//
// Failures print one line "error: <kind>: <message>" and exit 1; usage
// errors exit 2.

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "hmdface/avatar_gan.hpp"
#include "hmdface/dataset.hpp"
#include "hmdface/error.hpp"
#include "hmdface/evaluate.hpp"
#include "hmdface/hashing.hpp"
#include "hmdface/lowerface_cnn.hpp"
#include "hmdface/pipeline.hpp"
#include "hmdface/service.hpp"
#include "hmdface/wire_protocol.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hmdface;

namespace {

constexpr const char* kGeneratorFile = "generator.hmgw";
constexpr const char* kRegressorFile = "lowerface.hmlc";

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

void install_signal_handlers() {
    struct sigaction sa {};
    sa.sa_handler = on_signal;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGINT, &sa, nullptr);
    sigaction(SIGTERM, &sa, nullptr);
}

// A weights argument may name the file or the directory train-* wrote.
fs::path resolve(const fs::path& p, const char* file) { return fs::is_directory(p) ? p / file : p; }

void write_text(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << text;
    }
    fs::rename(tmp, path);
}

void write_rgb(const fs::path& path, const cv::Mat& rgb) {
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path.string(), bgr)) throw IoError("cannot write " + path.string());
}

CaptureScript script_of(const PairedDataset& ds) {
    CaptureScript s;
    s.neutral_index = ds.neutral_index;
    for (const auto& it : ds.items) s.frames.push_back({it.params, it.segment});
    return s;
}

std::vector<std::size_t> split_indices(const PairedDataset& ds, const std::string& which, std::size_t stride,
                                       std::size_t phase) {
    const IndexSplit split = holdout_split(ds.items.size(), stride, phase);
    if (which == "heldout") return split.held_out;
    if (which == "train") return split.train;
    std::vector<std::size_t> all(ds.items.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::uint64_t seed = 7;
    std::uint64_t identity_seed = 7;
    int resolution = 128;
    CaptureConfig capture;
    fs::path out;
};

int cmd_synth(const SynthArgs& a) {
    CaptureConfig cc = a.capture;
    cc.seed = a.seed;
    const auto script = build_capture_script(cc);
    const auto ds = build_paired_dataset(script, IdentitySpec::from_seed(a.identity_seed), {a.resolution, a.resolution});
    save_dataset(ds, a.out);
    std::printf("frames %zu resolution %d content_hash %s\n", ds.items.size(), a.resolution,
                hex64(ds.content_hash()).c_str());
    return 0;
}

struct BuildArgs {
    fs::path capture, out;
    std::size_t count = 10000;
    double train_fraction = 0.7;
    std::uint64_t seed = 11;
    bool flip = true;
};

int cmd_build(const BuildArgs& a) {
    const auto cap = load_paired_dataset(a.capture);
    AugmentationConfig ac;
    ac.target_count = a.count;
    ac.train_fraction = a.train_fraction;
    ac.seed = a.seed;
    ac.flip = a.flip;
    const auto ds = build_lowerface_dataset(script_of(cap), cap.identity, ac);
    save_dataset(ds, a.out);
    std::printf("items %zu train %zu test %zu subset %zu\n", ds.items.size(), ds.train.size(), ds.test.size(),
                ds.subset_indices.size());
    return 0;
}

struct GanArgs {
    std::string preset = "desk";
    fs::path data, out;
    int epochs = 0;
    std::optional<int> epochs_const_lr, batch_size, resolution, ngf, ndf, checkpoint_every;
    std::optional<double> lr, beta1, beta2, init_mean, init_std, l1_weight;
    std::optional<bool> jitter, mirror, dropout;
    std::optional<std::string> objective;
    std::optional<std::uint64_t> seed;
    std::size_t stride = 10, phase = 5;
    bool all_items = false;
};

int cmd_train_gan(const GanArgs& a) {
    GanConfig c = GanConfig::preset(a.preset);
    if (a.epochs > 0) {
        c.epochs_const_lr = std::max(1, c.epochs_const_lr * a.epochs / c.epochs_total);
        c.epochs_total = a.epochs;
    }
    auto put = [](auto& field, const auto& value) {
        if (value) field = *value;
    };
    put(c.epochs_const_lr, a.epochs_const_lr);
    put(c.batch_size, a.batch_size);
    put(c.resolution, a.resolution);
    put(c.ngf, a.ngf);
    put(c.ndf, a.ndf);
    put(c.checkpoint_every, a.checkpoint_every);
    put(c.learning_rate, a.lr);
    put(c.beta1, a.beta1);
    put(c.beta2, a.beta2);
    put(c.init_mean, a.init_mean);
    put(c.init_std, a.init_std);
    put(c.l1_weight, a.l1_weight);
    put(c.jitter, a.jitter);
    put(c.mirror, a.mirror);
    put(c.dropout, a.dropout);
    put(c.objective, a.objective);
    put(c.seed, a.seed);
    c.validate();
    const auto ds = load_paired_dataset(a.data);
    fs::create_directories(a.out);
    GanTrainOptions o;
    if (!a.all_items) o.train_indices = holdout_split(ds.items.size(), a.stride, a.phase).train;
    if (c.checkpoint_every > 0) o.checkpoint_dir = a.out / "checkpoints";
    o.on_epoch = [](const EpochLog& e) {
        std::printf("epoch %d g_adv %.4f g_l1 %.4f d %.4f lr %.6f wall %.1fs\n", e.epoch, e.g_adv, e.g_l1, e.d_loss,
                    e.lr, e.wall_s);
        std::fflush(stdout);
    };
    auto [w, log] = train_gan(ds, c, o);
    export_weights(w, a.out / kGeneratorFile);
    log.write_csv(a.out / "train_log.csv");
    write_text(a.out / "config.json", c.to_json());
    return 0;
}

struct CnnArgs {
    std::string preset = "desk";
    fs::path data, out;
    int epochs = 0;
    std::optional<std::uint64_t> seed;
};

int cmd_train_cnn(const CnnArgs& a) {
    CnnConfig c = a.preset == "full" ? CnnConfig::full() : CnnConfig::desk();
    if (a.preset != "full" && a.preset != "desk") throw ConfigError("unknown preset " + a.preset);
    if (a.epochs > 0) c.epochs = a.epochs;
    if (a.seed) c.seed = *a.seed;
    const auto ds = load_lowerface_dataset(a.data);
    fs::create_directories(a.out);
    std::ofstream log(a.out / "train_log.csv", std::ios::trunc);
    log << "epoch,train_mse,test_mse,wall_s\n";
    auto [w, report] = train_lowerface_cnn(ds, c, [&](const CnnEpochLog& e) {
        std::printf("epoch %d train_mse %.6f test_mse %.6f wall %.1fs\n", e.epoch, e.train_mse, e.test_mse, e.wall_s);
        std::fflush(stdout);
        log << e.epoch << ',' << e.train_mse << ',' << e.test_mse << ',' << e.wall_s << '\n';
    });
    export_lowerface_weights(w, a.out / kRegressorFile);
    const json r = {{"test_mean_error_px", report.test_mean_error_px},
                    {"baseline_mean_error_px", report.baseline_mean_error_px},
                    {"test_mse", report.test_mse},
                    {"baseline_mse", report.baseline_mse},
                    {"test_items", report.test_items}};
    write_text(a.out / "report.json", r.dump(2));
    std::printf("held-out mean error %.3f px (mean-label baseline %.3f px)\n", report.test_mean_error_px,
                report.baseline_mean_error_px);
    return 0;
}

struct EvalArgs {
    fs::path weights, data, out;
    std::string split = "heldout";
    std::size_t stride = 10, phase = 5;
};

int cmd_evaluate(const EvalArgs& a) {
    const auto ds = load_paired_dataset(a.data);
    const Generator g(import_weights(resolve(a.weights, kGeneratorFile)));
    EvalOptions o;
    if (!a.out.empty()) o.difference_dir = a.out / "diff";
    const auto r = evaluate(g, ds, split_indices(ds, a.split, a.stride, a.phase), o);
    if (!a.out.empty()) write_text(a.out / "report.json", r.to_json());
    std::fputs(r.table().c_str(), stdout);
    return 0;
}

struct InferArgs {
    fs::path weights, data, out;
    std::optional<std::size_t> index;
    std::string params;
    std::uint64_t identity_seed = 7;
    double baseline = 64.0;
    int splat = 1;
};

int cmd_infer(const InferArgs& a) {
    const GeneratorWeights w = import_weights(resolve(a.weights, kGeneratorFile));
    const Resolution res{w.architecture.resolution, w.architecture.resolution};
    FacialLandmarkSet flm;
    if (a.index) {
        if (a.data.empty()) throw ConfigError("--index needs --data");
        const auto ds = load_paired_dataset(a.data);
        if (*a.index >= ds.items.size()) throw ValidationError("index out of range");
        flm = ds.items[*a.index].landmarks;
    } else {
        IdentitySpec id = IdentitySpec::from_seed(a.identity_seed);
        ExpressionParams p;
        if (!a.params.empty()) {
            const json j = json::parse(a.params);
            for (const auto& [k, v] : j.items()) {
                static const std::map<std::string, double ExpressionParams::*> fields = {
                    {"mouth_open", &ExpressionParams::mouth_open},
                    {"smile", &ExpressionParams::smile},
                    {"brow_raise_left", &ExpressionParams::brow_raise_left},
                    {"brow_raise_right", &ExpressionParams::brow_raise_right},
                    {"eye_open_left", &ExpressionParams::eye_open_left},
                    {"eye_open_right", &ExpressionParams::eye_open_right},
                    {"gaze_x", &ExpressionParams::gaze_x},
                    {"gaze_y", &ExpressionParams::gaze_y},
                    {"jaw_shift", &ExpressionParams::jaw_shift}};
                const auto f = fields.find(k);
                if (f == fields.end()) throw ValidationError("unknown expression field " + k);
                p.*(f->second) = v.get<double>();
            }
            p.validate();
        }
        flm = landmarks_of(id, p, res);
    }
    const RgbdFrame raw = generate(w, rasterize(flm.rescaled(res)));
    const RgbdFrame out = postprocess(raw, default_postprocess({w.provenance.face_code_min, w.provenance.face_code_max}));
    fs::create_directories(a.out);
    write_rgb(a.out / "rgb.png", out.rgb);
    if (!cv::imwrite((a.out / "depth.png").string(), out.depth)) throw IoError("cannot write depth.png");
    const CameraModel cam = capture_camera(res);
    const PointCloud cloud = unproject(out, cam);
    write_point_cloud(cloud, a.out / "cloud.txt");
    const auto [l, r] = stereo_pair(cam, a.baseline);
    const StereoRender st = render_stereo(cloud, l, r, a.splat);
    write_rgb(a.out / "left.png", st.left.rgb);
    write_rgb(a.out / "right.png", st.right.rgb);
    std::printf("points %zu left %.2f ms right %.2f ms\n", cloud.size(), st.left_ms, st.right_ms);
    return 0;
}

struct LiveArgs {
    fs::path data, weights, cnn;
    int brow_left = 0, brow_right = 0;
    int splat = 1;
    double tracking_hz = 30.0;
    std::uint64_t seed = 1;
};

PipelineConfig pipeline_config(const LiveArgs& a) {
    PipelineConfig pc;
    pc.dataset_dir = a.data;
    pc.gan_weights = resolve(a.weights, kGeneratorFile);
    pc.cnn_weights = resolve(a.cnn, kRegressorFile);
    pc.tracking_hz = a.tracking_hz;
    pc.splat_radius = a.splat;
    pc.seed = a.seed;
    if (a.brow_left > 0) pc.brow_threshold[0] = a.brow_left;
    if (a.brow_right > 0) pc.brow_threshold[1] = a.brow_right;
    pc.validate();
    return pc;
}

struct ServeArgs {
    LiveArgs live;
    std::string host = "127.0.0.1";
    std::uint16_t port = 8080;
    std::string wire_out, wire_in, transport = "udp";
    bool puppeteer = false;
    bool calibrate = false;
};

int cmd_serve(const ServeArgs& a) {
    const PipelineConfig pc = pipeline_config(a.live);
    ServiceOptions so;
    so.host = a.host;
    so.port = a.port;
    so.transport = transport_from_string(a.transport);
    so.oracle_driven = !a.puppeteer;
    so.seed = a.live.seed;
    if (!a.wire_out.empty()) so.wire_out = Endpoint::parse(a.wire_out);
    if (!a.wire_in.empty()) so.wire_in = Endpoint::parse(a.wire_in);
    Service svc(LivePipeline(LiveAssets::load(pc), pc), so);
    install_signal_handlers();
    const auto port = svc.start();
    std::printf("listening %s:%u\n", a.host.c_str(), static_cast<unsigned>(port));
    std::fflush(stdout);
    if (a.calibrate) {
        httplib::Client cli(a.host, port);
        cli.Post("/calibrate", "{}", "application/json");
    }
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    svc.stop();
    std::printf("stopped\n");
    return 0;
}

struct SendArgs {
    std::string to, transport = "udp";
    double rate = 30.0;
    std::uint64_t frames = 300;
    std::uint64_t seed = 1;
    std::uint64_t identity_seed = 7;
};

json stats_json(const StreamStats& s) {
    return {{"frames_sent", s.frames_sent},         {"frames_received", s.frames_received},
            {"out_of_order", s.out_of_order},       {"gaps", s.gaps},
            {"frames_missing", s.frames_missing},   {"protocol_errors", s.protocol_errors},
            {"payload_bitrate_bps", s.payload_bitrate_bps}, {"frame_rate_hz", s.frame_rate_hz}};
}

int cmd_send(const SendArgs& a) {
    const IdentitySpec id = IdentitySpec::from_seed(a.identity_seed);
    const auto traj = bench_trajectory(a.seed, 389);
    SenderConfig sc;
    sc.rate_hz = a.rate;
    sc.frames = a.frames;
    sc.transport = transport_from_string(a.transport);
    install_signal_handlers();
    const auto stats = run_sender([&](std::uint64_t i) { return landmarks_of(id, traj[i % traj.size()]); },
                                  Endpoint::parse(a.to), sc, &g_stop);
    std::printf("%s\n", stats_json(stats).dump().c_str());
    return 0;
}

struct RecvArgs {
    std::string bind = "127.0.0.1:9000", transport = "udp";
    double duration = 10.0;
};

int cmd_recv(const RecvArgs& a) {
    FrameReceiver rx(Endpoint::parse(a.bind), transport_from_string(a.transport));
    std::printf("bound %u\n", static_cast<unsigned>(rx.port()));
    std::fflush(stdout);
    install_signal_handlers();
    rx.start();
    const auto stats = run_receiver(rx, [](const WireFrame&) {}, a.duration, &g_stop);
    rx.stop();
    std::printf("%s\n", stats_json(stats).dump().c_str());
    return 0;
}

struct BenchArgs {
    LiveArgs live;
    std::size_t frames = 300;
    double min_rate = 30.0;
    fs::path json_out;
};

int cmd_bench(const BenchArgs& a) {
    const PipelineConfig pc = pipeline_config(a.live);
    LivePipeline p(LiveAssets::load(pc), pc);
    const auto r = run_bench(p, a.frames, a.live.seed);
    std::fputs(r.latency.format().c_str(), stdout);
    std::printf("frames %zu wall %.3f s sustained %.2f fps (required %.1f)\n", r.frames, r.wall_s, r.sustained_hz,
                a.min_rate);
    if (!a.json_out.empty()) {
        json j = json::parse(r.latency.to_json());
        j["frames"] = r.frames;
        j["wall_s"] = r.wall_s;
        j["sustained_hz"] = r.sustained_hz;
        write_text(a.json_out, j.dump(2));
    }
    return r.sustained_hz >= a.min_rate ? 0 : 1;
}

void add_live_flags(CLI::App* c, LiveArgs& a) {
    c->add_option("--data", a.data, "paired dataset directory")->required();
    c->add_option("--weights", a.weights, "generator weights file or train-gan output directory")->required();
    c->add_option("--cnn", a.cnn, "lower-face weights file or train-cnn output directory")->required();
    c->add_option("--brow-threshold-left", a.brow_left, "left brow binarization threshold (default per identity)");
    c->add_option("--brow-threshold-right", a.brow_right, "right brow binarization threshold (default per identity)");
    c->add_option("--splat", a.splat, "point splat radius");
    c->add_option("--tracking-hz", a.tracking_hz, "tracking rate");
    c->add_option("--seed", a.seed, "trajectory seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hmdface: landmark-driven RGBD face avatars"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth-capture", "render an oracle capture session into a paired dataset");
    c_synth->add_option("--seed", synth.seed, "capture script seed");
    c_synth->add_option("--identity-seed", synth.identity_seed, "oracle identity seed");
    c_synth->add_option("--resolution", synth.resolution, "frame size in pixels")->check(CLI::Range(16, 1024));
    c_synth->add_option("--expression-repeats", synth.capture.expression_repeats, "captures of each of the 26 poses");
    c_synth->add_option("--sentences", synth.capture.sentences, "spoken sentences");
    c_synth->add_option("--frames-per-sentence", synth.capture.frames_per_sentence, "frames per sentence");
    c_synth->add_option("--talk-frames", synth.capture.talk_frames, "free-talk frames");
    c_synth->add_option("--out", synth.out, "output directory")->required();

    BuildArgs build;
    auto* c_build = app.add_subcommand("build-dataset", "augmented lower-face dataset from a capture directory");
    c_build->add_option("--capture", build.capture, "synth-capture output directory")->required();
    c_build->add_option("--out", build.out, "output directory")->required();
    c_build->add_option("--count", build.count, "total items including the unaugmented ones");
    c_build->add_option("--train-fraction", build.train_fraction, "training share of the split");
    c_build->add_option("--seed", build.seed, "augmentation and split seed");
    c_build->add_flag("!--no-flip", build.flip, "disable horizontal flips");

    GanArgs gan;
    auto* c_gan = app.add_subcommand("train-gan", "train the RGBD generator");
    c_gan->add_option("--preset", gan.preset, "desk or full")->check(CLI::IsMember({"desk", "full"}));
    c_gan->add_option("--data", gan.data, "paired dataset directory")->required();
    c_gan->add_option("--out", gan.out, "output directory")->required();
    c_gan->add_option("--epochs", gan.epochs, "override the preset epoch count");
    c_gan->add_option("--seed", gan.seed, "training seed");
    c_gan->add_option("--holdout-stride", gan.stride, "every n-th frame is held out");
    c_gan->add_option("--holdout-phase", gan.phase, "offset of the held-out frames");
    c_gan->add_flag("--all-items", gan.all_items, "train on every frame");
    c_gan->add_option("--epochs-const-lr", gan.epochs_const_lr, "epochs at the base learning rate");
    c_gan->add_option("--lr", gan.lr, "base learning rate");
    c_gan->add_option("--beta1", gan.beta1, "Adam beta1");
    c_gan->add_option("--beta2", gan.beta2, "Adam beta2");
    c_gan->add_option("--batch-size", gan.batch_size, "batch size");
    c_gan->add_option("--init-mean", gan.init_mean, "mean of the Gaussian weight initialisation");
    c_gan->add_option("--init-std", gan.init_std, "std of the Gaussian weight initialisation");
    c_gan->add_option("--l1-weight", gan.l1_weight, "weight of the L1 reconstruction term");
    c_gan->add_option("--jitter", gan.jitter, "random resize-and-crop jitter (true/false)");
    c_gan->add_option("--mirror", gan.mirror, "horizontal mirroring (not supported; true is rejected)");
    c_gan->add_option("--resolution", gan.resolution, "training resolution (power of two)");
    c_gan->add_option("--ngf", gan.ngf, "generator base width");
    c_gan->add_option("--ndf", gan.ndf, "discriminator base width");
    c_gan->add_option("--dropout", gan.dropout, "decoder dropout (true/false)");
    c_gan->add_option("--objective", gan.objective, "adversarial loss: vanilla (BCE) or lsgan");
    c_gan->add_option("--checkpoint-every", gan.checkpoint_every, "checkpoint period in epochs, 0 disables");

    CnnArgs cnn;
    auto* c_cnn = app.add_subcommand("train-cnn", "train the lower-face landmark regressor");
    c_cnn->add_option("--preset", cnn.preset, "desk or full")->check(CLI::IsMember({"desk", "full"}));
    c_cnn->add_option("--data", cnn.data, "lower-face dataset directory")->required();
    c_cnn->add_option("--out", cnn.out, "output directory")->required();
    c_cnn->add_option("--epochs", cnn.epochs, "override the epoch count");
    c_cnn->add_option("--seed", cnn.seed, "training seed");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("evaluate", "masked SSIM and depth error against ground truth");
    c_eval->add_option("--weights", ev.weights, "generator weights")->required();
    c_eval->add_option("--data", ev.data, "paired dataset directory")->required();
    c_eval->add_option("--split", ev.split, "heldout, train or all")->check(CLI::IsMember({"heldout", "train", "all"}));
    c_eval->add_option("--holdout-stride", ev.stride, "every n-th frame is held out");
    c_eval->add_option("--holdout-phase", ev.phase, "offset of the held-out frames");
    c_eval->add_option("--out", ev.out, "report directory (report.json, diff/)");

    InferArgs inf;
    auto* c_inf = app.add_subcommand("infer", "generate, postprocess, unproject and render one frame");
    c_inf->add_option("--weights", inf.weights, "generator weights")->required();
    c_inf->add_option("--data", inf.data, "paired dataset (with --index)");
    c_inf->add_option("--index", inf.index, "dataset item whose landmarks drive the generator");
    c_inf->add_option("--params", inf.params, "expression as JSON, oracle landmarks otherwise");
    c_inf->add_option("--identity-seed", inf.identity_seed, "oracle identity for --params");
    c_inf->add_option("--baseline", inf.baseline, "stereo baseline in mm");
    c_inf->add_option("--splat", inf.splat, "point splat radius");
    c_inf->add_option("--out", inf.out, "output directory")->required();

    ServeArgs serve;
    auto* c_serve = app.add_subcommand("serve", "run the live service");
    add_live_flags(c_serve, serve.live);
    c_serve->add_option("--host", serve.host, "HTTP bind address");
    c_serve->add_option("--port", serve.port, "HTTP port (0 picks one)");
    c_serve->add_option("--wire-out", serve.wire_out, "also send merged landmarks to host:port");
    c_serve->add_option("--wire-in", serve.wire_in, "render landmark frames received on host:port");
    c_serve->add_option("--transport", serve.transport, "udp or tcp")->check(CLI::IsMember({"udp", "tcp"}));
    c_serve->add_flag("--puppeteer", serve.puppeteer, "start from neutral input instead of the scripted trajectory");
    c_serve->add_flag("--calibrate", serve.calibrate, "calibrate right after start");

    SendArgs send;
    auto* c_send = app.add_subcommand("stream-send", "send oracle landmarks over the wire protocol");
    c_send->add_option("--to", send.to, "host:port")->required();
    c_send->add_option("--rate", send.rate, "frames per second");
    c_send->add_option("--frames", send.frames, "frame count, 0 until interrupted");
    c_send->add_option("--transport", send.transport, "udp or tcp")->check(CLI::IsMember({"udp", "tcp"}));
    c_send->add_option("--seed", send.seed, "trajectory seed");
    c_send->add_option("--identity-seed", send.identity_seed, "oracle identity");

    RecvArgs recv;
    auto* c_recv = app.add_subcommand("stream-recv", "receive a landmark stream and print its statistics");
    c_recv->add_option("--bind", recv.bind, "host:port (port 0 picks one)");
    c_recv->add_option("--duration", recv.duration, "seconds");
    c_recv->add_option("--transport", recv.transport, "udp or tcp")->check(CLI::IsMember({"udp", "tcp"}));

    BenchArgs bench;
    auto* c_bench = app.add_subcommand("bench", "unpaced live loop with per-stage latency");
    add_live_flags(c_bench, bench.live);
    c_bench->add_option("--frames", bench.frames, "measured frames");
    c_bench->add_option("--min-rate", bench.min_rate, "sustained rate required for exit status 0");
    c_bench->add_option("--json", bench.json_out, "write the latency table as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    }

    try {
        if (c_synth->parsed()) return cmd_synth(synth);
        if (c_build->parsed()) return cmd_build(build);
        if (c_gan->parsed()) return cmd_train_gan(gan);
        if (c_cnn->parsed()) return cmd_train_cnn(cnn);
        if (c_eval->parsed()) return cmd_evaluate(ev);
        if (c_inf->parsed()) return cmd_infer(inf);
        if (c_serve->parsed()) return cmd_serve(serve);
        if (c_send->parsed()) return cmd_send(send);
        if (c_recv->parsed()) return cmd_recv(recv);
        if (c_bench->parsed()) return cmd_bench(bench);
    } catch (const hmdface::Error& e) {
        std::fprintf(stderr, "error: %s: %s\n", e.kind(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
    return 2;
}
