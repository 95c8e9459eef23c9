#pragma once

// Long-running live service. Three loops hand data to each other through
// last-value-wins mailboxes:
//
//   tracking   expression input -> trackers -> merger, at tracking_hz
//              (or landmark frames from a wire receiver)
//   render     newest merged set -> generator -> point cloud -> stereo
//   http       control API and the /live stream
//
// HTTP API (JSON bodies):
//   GET  /status      session snapshot
//   POST /calibrate   {"frames": n}            neutral calibration over n tracked frames
//   POST /threshold   {"side": 0|1, "value": t}
//   POST /params      {"mouth_open": ..., ...} puppeteer input; {"driver": "oracle"} resumes the script
//   POST /postproc    {"erode": r, "clip_near": a, "clip_far": b}
//   GET  /live        newline-delimited JSON stream of preview messages
//   POST /live        same body as /params
//
// A /live message:
//   {"type":"frame","sequence":n,"timestamp_us":t,"flm":[x0,y0,...],
//    "preview_png":"<base64>","brow_png":["<base64>","<base64>"],"stats":{...}}

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "hmdface/pipeline.hpp"
#include "hmdface/wire_protocol.hpp"

namespace hmdface {

enum class SessionMode { Idle, Capturing, Calibrating, Live };
std::string to_string(SessionMode m);

struct ServiceOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 8080;  // 0 picks a free port
    double preview_hz = 15.0;
    std::optional<Endpoint> wire_out;  // merged landmarks are also sent here
    std::optional<Endpoint> wire_in;   // render landmark frames received here instead of tracking
    Transport transport = Transport::Udp;
    bool oracle_driven = true;         // start on the scripted trajectory rather than neutral
    std::uint64_t seed = 1;
};

class Service {
public:
    Service(LivePipeline pipeline, ServiceOptions options);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds and starts every loop. Returns the bound port. Throws
    // NetworkError when the port is in use.
    std::uint16_t start();
    // Idempotent; joins every thread.
    void stop();
    bool running() const;

    // Same document GET /status returns.
    std::string status_json() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace hmdface
