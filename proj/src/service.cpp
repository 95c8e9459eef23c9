#include "hmdface/service.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "hmdface/error.hpp"
#include "hmdface/mailbox.hpp"
#include "json_io.hpp"

namespace hmdface {

std::string to_string(SessionMode m) {
    switch (m) {
        case SessionMode::Idle: return "idle";
        case SessionMode::Capturing: return "capturing";
        case SessionMode::Calibrating: return "calibrating";
        case SessionMode::Live: return "live";
    }
    return "idle";
}

namespace {

using Clock = std::chrono::steady_clock;

std::string png_base64(const cv::Mat& image, bool rgb) {
    cv::Mat out = image;
    if (rgb) cv::cvtColor(image, out, cv::COLOR_RGB2BGR);
    std::vector<std::uint8_t> bytes;
    cv::imencode(".png", out, bytes);
    return httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end()));
}

// What the render loop hands to the /live pump and to /status.
struct Snapshot {
    std::uint64_t sequence = 0;
    std::uint64_t timestamp_us = 0;
    FacialLandmarkSet flm;
    cv::Mat preview;                   // left eye render, R,G,B
    std::array<cv::Mat, 2> brow_views; // raw IR, empty for wire input
    std::array<int, 2> thresholds{};
};

void reply_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ValidationError("body is not a JSON object");
    return j;
}

}  // namespace

struct Service::Impl {
    LivePipeline pipeline;
    ServiceOptions opt;
    httplib::Server server;
    std::atomic<bool> running{false};
    std::thread http_thread, track_thread, render_thread;
    std::unique_ptr<FrameSender> sender;
    std::unique_ptr<FrameReceiver> receiver;

    // Cross-loop hand-off.
    LatestMailbox<ExpressionParams> params_in;
    LatestMailbox<int> calibrate_req;
    std::array<LatestMailbox<int>, 2> threshold_req;
    LatestMailbox<PostprocessParams> postproc_req;
    LatestMailbox<LiveFrame> merged;
    LatestMailbox<std::shared_ptr<const Snapshot>> preview;
    std::atomic<bool> oracle{true};

    // Status, guarded by mu.
    mutable std::mutex mu;
    SessionMode mode = SessionMode::Idle;
    ExpressionParams puppet{};
    std::array<int, 2> thresholds{};
    std::array<bool, 2> brow_ok{};
    PostprocessParams post;
    std::optional<CalibrationState> calib;
    std::string last_error;
    LatencyTable latency;
    std::uint64_t frames_tracked = 0, frames_rendered = 0;
    double render_hz = 0.0;
    Clock::time_point last_render{};

    Impl(LivePipeline p, ServiceOptions o) : pipeline(std::move(p)), opt(std::move(o)) {
        oracle = opt.oracle_driven;
        thresholds = {pipeline.threshold(0), pipeline.threshold(1)};
        post = pipeline.postprocess_params();
        if (opt.wire_in) mode = SessionMode::Live;
    }

    void set_error(const std::string& e) {
        std::lock_guard lock(mu);
        last_error = e;
    }

    json status() const {
        std::lock_guard lock(mu);
        json calib_json = {{"calibrated", false}};
        if (calib) {
            double max_off = 0.0;
            json offsets = json::array();
            for (const auto& o : calib->offsets) {
                max_off = std::max({max_off, std::abs(o.x), std::abs(o.y)});
                offsets.push_back(o.x);
                offsets.push_back(o.y);
            }
            calib_json = {{"calibrated", calib->calibrated},
                          {"frames_averaged", calib->frames_averaged},
                          {"max_abs_offset_px", max_off},
                          {"offsets", offsets}};
        }
        StreamStats ws;
        if (receiver) ws = receiver->stats();
        if (sender) {
            ws.frames_sent = sender->frames_sent();
            ws.payload_bitrate_bps = payload_bitrate(pipeline.config().tracking_hz);
        }
        return {{"mode", to_string(mode)},
                {"driver", oracle ? "oracle" : "puppeteer"},
                {"params", to_json_value(puppet)},
                {"calibration", calib_json},
                {"thresholds", thresholds},
                {"brow_tracking", brow_ok},
                {"postproc", {{"erode", post.erode_radius}, {"clip_near", post.clip_near}, {"clip_far", post.clip_far}}},
                {"frames_tracked", frames_tracked},
                {"frames_rendered", frames_rendered},
                {"render_hz", render_hz},
                {"tracking_hz", pipeline.config().tracking_hz},
                {"stream",
                 {{"frames_sent", ws.frames_sent},
                  {"frames_received", ws.frames_received},
                  {"frames_missing", ws.frames_missing},
                  {"protocol_errors", ws.protocol_errors},
                  {"payload_bitrate_bps", ws.payload_bitrate_bps}}},
                {"latency", json::parse(latency.to_json())},
                {"last_error", last_error}};
    }

    // -----------------------------------------------------------------------

    void track_loop() {
        const auto period = std::chrono::duration_cast<Clock::duration>(
            std::chrono::duration<double>(1.0 / pipeline.config().tracking_hz));
        const std::vector<ExpressionParams> script = bench_trajectory(opt.seed, 389);
        std::size_t k = 0;
        ExpressionParams current{};
        std::vector<ReportSet> capture;
        int capture_target = 0;
        auto next = Clock::now();
        while (running) {
            try {
                for (int side = 0; side < 2; ++side) {
                    if (auto v = threshold_req[side].take()) {
                        const bool ok = pipeline.set_threshold(side, *v);
                        std::lock_guard lock(mu);
                        thresholds[side] = *v;
                        brow_ok[side] = ok;
                    }
                }
                if (auto n = calibrate_req.take()) {
                    pipeline.anchor_brows(ExpressionParams::neutral());
                    capture.clear();
                    capture_target = *n;
                    std::lock_guard lock(mu);
                    mode = SessionMode::Capturing;
                    brow_ok = {pipeline.brow_tracking(0), pipeline.brow_tracking(1)};
                }
                if (auto p = params_in.take()) current = *p;
                if (oracle) current = script[k++ % script.size()];

                const std::uint64_t t = monotonic_us();
                if (capture_target > 0) {
                    capture.push_back(pipeline.track(ExpressionParams::neutral(), t));
                    if (static_cast<int>(capture.size()) >= capture_target) {
                        capture_target = 0;
                        {
                            std::lock_guard lock(mu);
                            mode = SessionMode::Calibrating;
                        }
                        try {
                            pipeline.calibrate_from(capture);
                            std::lock_guard lock(mu);
                            calib = pipeline.calibration();
                            mode = SessionMode::Live;
                            last_error.clear();
                        } catch (const Error& e) {
                            std::lock_guard lock(mu);
                            mode = pipeline.calibrated() ? SessionMode::Live : SessionMode::Idle;
                            last_error = e.what();
                        }
                    }
                } else if (pipeline.calibrated()) {
                    LiveFrame f = pipeline.merge(current, t);
                    if (sender) sender->send(f.flm, t);
                    merged.publish(std::move(f));
                    std::lock_guard lock(mu);
                    ++frames_tracked;
                }
            } catch (const std::exception& e) {
                set_error(e.what());
            }
            next += period;
            const auto now = Clock::now();
            if (next < now) next = now;
            std::this_thread::sleep_until(next);
        }
    }

    void render_loop() {
        while (running) {
            std::optional<LiveFrame> f;
            if (receiver) {
                if (auto w = receiver->mailbox().wait_take(std::chrono::milliseconds(50))) {
                    f.emplace();
                    f->flm = w->landmarks;
                    f->timestamp_us = w->timestamp_us;
                }
            } else {
                f = merged.wait_take(std::chrono::milliseconds(50));
            }
            if (!f) continue;
            try {
                if (auto p = postproc_req.take()) pipeline.set_postprocess(*p);
                const auto t0 = Clock::now();
                pipeline.render(*f);
                double total = 0.0;
                for (const auto& s : f->stages) total += s.ms;
                auto snap = std::make_shared<Snapshot>();
                snap->sequence = f->sequence;
                snap->timestamp_us = f->timestamp_us;
                snap->flm = f->flm;
                snap->preview = f->stereo.left.rgb;
                snap->brow_views = {f->views.left_eye_ir, f->views.right_eye_ir};
                snap->thresholds = f->brow_thresholds;
                preview.publish(std::move(snap));
                std::lock_guard lock(mu);
                post = pipeline.postprocess_params();
                for (const auto& s : f->stages) latency.add(s.stage, s.ms);
                latency.add_frame(total);
                if (latency.frame_row().count >= 600) latency.clear();
                ++frames_rendered;
                const double dt = std::chrono::duration<double>(t0 - last_render).count();
                if (frames_rendered > 1 && dt > 0) render_hz = render_hz > 0 ? 0.9 * render_hz + 0.1 / dt : 1.0 / dt;
                last_render = t0;
            } catch (const std::exception& e) {
                set_error(e.what());
            }
        }
    }

    // -----------------------------------------------------------------------

    std::string live_message(const Snapshot& s) const {
        json flm = json::array();
        for (const auto& p : s.flm.points()) {
            flm.push_back(round_coord(p.x));
            flm.push_back(round_coord(p.y));
        }
        json brows = json::array();
        for (int side = 0; side < 2; ++side) {
            const cv::Mat& v = s.brow_views[side];
            brows.push_back(v.empty() ? std::string() : png_base64(binarize(v, s.thresholds[side]) * 255, false));
        }
        json stats;
        {
            std::lock_guard lock(mu);
            stats = {{"render_hz", render_hz},
                     {"frames_rendered", frames_rendered},
                     {"payload_bitrate_bps", payload_bitrate(pipeline.config().tracking_hz)},
                     {"mode", to_string(mode)},
                     {"latency", json::parse(latency.to_json())}};
        }
        return json{{"type", "frame"},
                    {"sequence", s.sequence},
                    {"timestamp_us", s.timestamp_us},
                    {"flm", flm},
                    {"preview_png", png_base64(s.preview, true)},
                    {"brow_png", brows},
                    {"stats", stats}}
                   .dump() +
               "\n";
    }

    void handle_params(const httplib::Request& req, httplib::Response& res) {
        const json body = parse_body(req);
        if (body.contains("driver")) {
            const auto d = body.at("driver").get<std::string>();
            if (d != "oracle" && d != "puppeteer") throw ValidationError("driver must be oracle or puppeteer");
            oracle = d == "oracle";
        }
        ExpressionParams p;
        {
            std::lock_guard lock(mu);
            p = expression_from_json(body, puppet);
        }
        p.validate();
        bool has_param = false;
        const json fields = to_json_value(p);
        for (const auto& [key, _] : fields.items()) has_param = has_param || body.contains(key);
        if (has_param) {
            if (!body.contains("driver")) oracle = false;
            std::lock_guard lock(mu);
            puppet = p;
        }
        params_in.publish(p);
        reply_json(res, 200, {{"ok", true}, {"params", to_json_value(p)}, {"driver", oracle ? "oracle" : "puppeteer"}});
    }

    void install_routes() {
        auto guarded = [this](auto fn) {
            return [this, fn](const httplib::Request& req, httplib::Response& res) {
                try {
                    fn(req, res);
                } catch (const ValidationError& e) {
                    reply_json(res, 400, {{"ok", false}, {"error", e.what()}});
                } catch (const json::exception& e) {
                    reply_json(res, 400, {{"ok", false}, {"error", e.what()}});
                } catch (const std::exception& e) {
                    reply_json(res, 500, {{"ok", false}, {"error", e.what()}});
                }
            };
        };
        server.Get("/status", guarded([this](const httplib::Request&, httplib::Response& res) {
            reply_json(res, 200, status());
        }));
        server.Post("/calibrate", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (opt.wire_in) {
                reply_json(res, 409, {{"ok", false}, {"error", "calibration happens on the sending side"}});
                return;
            }
            const json body = parse_body(req);
            const int frames = body.value("frames", pipeline.config().calibration_frames);
            if (frames < 1) throw ValidationError("frames must be positive");
            calibrate_req.publish(frames);
            reply_json(res, 202, {{"ok", true}, {"frames", frames}});
        }));
        server.Post("/threshold", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const json body = parse_body(req);
            const int side = body.at("side").get<int>();
            const int value = body.at("value").get<int>();
            if (side < 0 || side > 1) throw ValidationError("side must be 0 or 1");
            if (value < 1 || value > 254) throw ValidationError("value must lie in [1, 254]");
            threshold_req[side].publish(value);
            reply_json(res, 202, {{"ok", true}, {"side", side}, {"value", value}});
        }));
        server.Post("/params", guarded([this](const httplib::Request& req, httplib::Response& res) {
            handle_params(req, res);
        }));
        server.Post("/live", guarded([this](const httplib::Request& req, httplib::Response& res) {
            handle_params(req, res);
        }));
        server.Post("/postproc", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const json body = parse_body(req);
            PostprocessParams p;
            {
                std::lock_guard lock(mu);
                p = post;
            }
            p.erode_radius = body.value("erode", p.erode_radius);
            p.clip_near = body.value("clip_near", p.clip_near);
            p.clip_far = body.value("clip_far", p.clip_far);
            p.validate();
            postproc_req.publish(p);
            {
                std::lock_guard lock(mu);
                post = p;
            }
            reply_json(res, 200,
                       {{"ok", true}, {"erode", p.erode_radius}, {"clip_near", p.clip_near}, {"clip_far", p.clip_far}});
        }));
        server.Get("/live", [this](const httplib::Request&, httplib::Response& res) {
            auto last = std::make_shared<std::uint64_t>(0);
            auto next = std::make_shared<Clock::time_point>(Clock::now());
            res.set_chunked_content_provider("application/x-ndjson", [this, last, next](std::size_t,
                                                                                       httplib::DataSink& sink) {
                const auto period = std::chrono::duration_cast<Clock::duration>(
                    std::chrono::duration<double>(1.0 / opt.preview_hz));
                while (running) {
                    std::this_thread::sleep_until(*next);
                    const auto snap = preview.peek();
                    const auto version = preview.version();
                    if (snap && version != *last) {
                        *last = version;
                        *next = Clock::now() + period;
                        const std::string msg = live_message(**snap);
                        return sink.write(msg.data(), msg.size());
                    }
                    *next = Clock::now() + std::chrono::milliseconds(10);
                }
                sink.done();
                return true;
            });
        });
    }
};

Service::Service(LivePipeline pipeline, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(pipeline), std::move(options))) {
    if (!(impl_->opt.preview_hz > 0)) throw ConfigError("preview rate must be positive");
}

Service::~Service() { stop(); }

std::uint16_t Service::start() {
    auto& m = *impl_;
    if (m.running) throw StateError("service already running");
    m.install_routes();
    // SO_REUSEPORT (the library default) would let two services share a port.
    m.server.set_socket_options([](socket_t sock) {
        const int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    int port = m.opt.port;
    if (port == 0) {
        port = m.server.bind_to_any_port(m.opt.host);
        if (port < 0) throw NetworkError("cannot bind " + m.opt.host);
    } else if (!m.server.bind_to_port(m.opt.host, port)) {
        throw NetworkError("port " + std::to_string(port) + " on " + m.opt.host + " is in use");
    }
    if (m.opt.wire_out) m.sender = std::make_unique<FrameSender>(*m.opt.wire_out, m.opt.transport);
    if (m.opt.wire_in) {
        m.receiver = std::make_unique<FrameReceiver>(*m.opt.wire_in, m.opt.transport);
        m.receiver->start();
    }
    m.running = true;
    m.http_thread = std::thread([&m] { m.server.listen_after_bind(); });
    if (!m.opt.wire_in) m.track_thread = std::thread([&m] { m.track_loop(); });
    m.render_thread = std::thread([&m] { m.render_loop(); });
    m.server.wait_until_ready();
    return static_cast<std::uint16_t>(port);
}

void Service::stop() {
    if (!impl_) return;
    auto& m = *impl_;
    const bool was = m.running.exchange(false);
    if (!was && !m.http_thread.joinable()) return;
    m.server.stop();
    for (auto* t : {&m.http_thread, &m.track_thread, &m.render_thread}) {
        if (t->joinable()) t->join();
    }
    if (m.receiver) m.receiver->stop();
}

bool Service::running() const { return impl_->running; }

std::string Service::status_json() const { return impl_->status().dump(); }

}  // namespace hmdface
