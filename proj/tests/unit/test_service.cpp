#include <doctest.h>

#include <chrono>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "hmdface/error.hpp"
#include "hmdface/service.hpp"
#include "live_fixture.hpp"

using namespace hmdface;
using hmdface::testing::toy_assets;
using json = nlohmann::json;

namespace {

LivePipeline make_pipeline() {
    PipelineConfig cfg;
    cfg.calibration_frames = 5;
    return LivePipeline(toy_assets(), cfg);
}

ServiceOptions local_options() {
    ServiceOptions o;
    o.port = 0;
    o.preview_hz = 20;
    return o;
}

json get_status(httplib::Client& c) {
    auto r = c.Get("/status");
    REQUIRE(r);
    REQUIRE(r->status == 200);
    return json::parse(r->body);
}

int post(httplib::Client& c, const std::string& path, const json& body) {
    auto r = c.Post(path, body.dump(), "application/json");
    REQUIRE(r);
    return r->status;
}

template <typename Pred>
json wait_for(httplib::Client& c, Pred pred, double seconds = 20.0) {
    const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
    json s;
    while (std::chrono::steady_clock::now() < until) {
        s = get_status(c);
        if (pred(s)) return s;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    return s;
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("control API round trip") {
    Service svc(make_pipeline(), local_options());
    const std::uint16_t port = svc.start();
    CHECK(svc.running());
    httplib::Client c("127.0.0.1", port);

    json s = get_status(c);
    CHECK(s.at("mode") == "idle");
    CHECK(s.at("calibration").at("calibrated") == false);

    CHECK(post(c, "/calibrate", {{"frames", 5}}) == 202);
    s = wait_for(c, [](const json& j) { return j.at("calibration").at("calibrated") == true; });
    REQUIRE(s.at("calibration").at("calibrated") == true);
    CHECK(s.at("mode") == "live");
    CHECK(s.at("calibration").at("frames_averaged") == 5);

    // Oracle-exact sources (brows, eyes) calibrate to zero offset; the
    // lower-face offsets are exactly the regressor's neutral error.
    const auto offsets = s.at("calibration").at("offsets").get<std::vector<double>>();
    REQUIRE(offsets.size() == 140);
    for (std::size_t i = 17; i < 27; ++i) {
        CHECK(std::abs(offsets[2 * i]) < 1e-6);
        CHECK(std::abs(offsets[2 * i + 1]) < 1e-6);
    }
    LivePipeline probe = make_pipeline();
    probe.anchor_brows();
    const ReportSet neutral = probe.track(ExpressionParams::neutral(), 0);
    const auto ref = probe.calibration().neutral_reference;
    for (const auto& r : neutral) {
        if (r.source != Source::LowerFace) continue;
        for (std::size_t k = 0; k < r.indices.size(); ++k) {
            const std::size_t i = r.indices[k];
            bool owned_elsewhere = false;  // brow and eye sources outrank the regressor
            for (Source o : {Source::BrowLeft, Source::BrowRight, Source::EyeLeft, Source::EyeRight}) {
                owned_elsewhere = owned_elsewhere || ownership_rank(o, i) > ownership_rank(Source::LowerFace, i);
            }
            if (owned_elsewhere) continue;
            CHECK(offsets[2 * i] == doctest::Approx(ref[i].x - r.points[k].x).epsilon(1e-6));
            CHECK(offsets[2 * i + 1] == doctest::Approx(ref[i].y - r.points[k].y).epsilon(1e-6));
        }
    }

    // threshold
    CHECK(post(c, "/threshold", {{"side", 2}, {"value", 100}}) == 400);
    CHECK(post(c, "/threshold", {{"side", 0}, {"value", 0}}) == 400);
    CHECK(post(c, "/threshold", {{"side", 0}, {"value", 255}}) == 400);
    CHECK(post(c, "/threshold", {{"side", 0}, {"value", 1}}) == 202);
    s = wait_for(c, [](const json& j) { return j.at("thresholds")[0] == 1; });
    CHECK(s.at("brow_tracking")[0] == false);

    // puppeteer input
    CHECK(post(c, "/params", {{"mouth_open", 0.5}}) == 200);
    s = get_status(c);
    CHECK(s.at("driver") == "puppeteer");
    CHECK(s.at("params").at("mouth_open") == 0.5);
    CHECK(post(c, "/live", {{"mouth_open", 3.0}}) == 400);
    CHECK(post(c, "/params", {{"driver", "oracle"}}) == 200);
    CHECK(get_status(c).at("driver") == "oracle");
    CHECK(post(c, "/params", {{"driver", "ghost"}}) == 400);
    auto bad = c.Post("/params", "{not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);

    // postprocess
    CHECK(post(c, "/postproc", {{"erode", 3}}) == 200);
    CHECK(get_status(c).at("postproc").at("erode") == 3);
    CHECK(post(c, "/postproc", {{"clip_near", 200}, {"clip_far", 100}}) == 400);

    s = wait_for(c, [](const json& j) { return j.at("frames_rendered").get<int>() > 3; });
    CHECK(s.at("frames_rendered").get<int>() > 3);
    CHECK(s.at("latency").at("stages").size() >= 6);

    svc.stop();
    svc.stop();
    CHECK_FALSE(svc.running());
}

TEST_CASE("live stream delivers frame messages") {
    Service svc(make_pipeline(), local_options());
    const std::uint16_t port = svc.start();
    httplib::Client c("127.0.0.1", port);
    REQUIRE(post(c, "/calibrate", {{"frames", 3}}) == 202);

    std::string buffer;
    std::vector<json> messages;
    const auto t0 = std::chrono::steady_clock::now();
    c.set_read_timeout(10, 0);
    c.Get("/live", [&](const char* data, std::size_t n) {
        buffer.append(data, n);
        std::size_t nl;
        while ((nl = buffer.find('\n')) != std::string::npos) {
            messages.push_back(json::parse(buffer.substr(0, nl)));
            buffer.erase(0, nl + 1);
        }
        return messages.size() < 3;
    });
    const double first_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    REQUIRE(messages.size() >= 3);
    CHECK(first_s < 10.0);
    for (const auto& m : messages) {
        CHECK(m.at("type") == "frame");
        CHECK(m.at("flm").size() == 140);
        CHECK_FALSE(m.at("preview_png").get<std::string>().empty());
        CHECK(m.at("brow_png").size() == 2);
        CHECK(m.at("stats").contains("render_hz"));
    }
    CHECK(messages[2].at("sequence") > messages[0].at("sequence"));
    svc.stop();
}

TEST_CASE("occupied port is a startup error") {
    Service a(make_pipeline(), local_options());
    const std::uint16_t port = a.start();
    ServiceOptions o = local_options();
    o.port = port;
    Service b(make_pipeline(), o);
    CHECK_THROWS_AS(b.start(), NetworkError);
    CHECK_FALSE(b.running());
    a.stop();
}

TEST_CASE("merged landmarks go out over the wire and come back in") {
    FrameReceiver rx(Endpoint{"127.0.0.1", 0}, Transport::Udp);
    rx.start();
    ServiceOptions out = local_options();
    out.wire_out = Endpoint{"127.0.0.1", rx.port()};
    Service sender(make_pipeline(), out);
    const std::uint16_t port = sender.start();
    httplib::Client c("127.0.0.1", port);
    REQUIRE(post(c, "/calibrate", {{"frames", 3}}) == 202);
    const auto until = std::chrono::steady_clock::now() + std::chrono::seconds(20);
    while (rx.stats().frames_received < 10 && std::chrono::steady_clock::now() < until) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    CHECK(rx.stats().frames_received >= 10);
    CHECK(get_status(c).at("stream").at("frames_sent").get<int>() >= 10);
    sender.stop();
    rx.stop();

    // receiving side: renders what arrives, refuses local calibration
    std::uint16_t wire_port = 0;
    {
        FrameReceiver free_port(Endpoint{"127.0.0.1", 0}, Transport::Udp);
        wire_port = free_port.port();
    }
    ServiceOptions in = local_options();
    in.wire_in = Endpoint{"127.0.0.1", wire_port};
    in.oracle_driven = false;
    Service receiver(make_pipeline(), in);
    const std::uint16_t rport = receiver.start();
    httplib::Client rc("127.0.0.1", rport);
    CHECK(post(rc, "/calibrate", json::object()) == 409);
    SenderConfig sc;
    sc.rate_hz = 60;
    sc.frames = 30;
    run_sender([](std::uint64_t) { return landmarks_of(IdentitySpec::from_seed(7), ExpressionParams{0.4}); },
               Endpoint{"127.0.0.1", wire_port}, sc);
    const json s = wait_for(rc, [](const json& j) { return j.at("frames_rendered").get<int>() >= 5; });
    CHECK(s.at("frames_rendered").get<int>() >= 5);
    CHECK(s.at("stream").at("frames_received").get<int>() >= 20);
    receiver.stop();
}

}
