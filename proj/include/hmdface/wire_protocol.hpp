#pragma once

// Landmark wire frames and their UDP/TCP transport.
//
// Frame layout, little-endian, 298 bytes:
//   0   4  magic "FLM1"
//   4   1  version (1)
//   5   1  flags
//   6   4  sequence (u32)
//   10  8  timestamp_us (u64)
//   18 280 70 x (x u16, y u16), 256 reference space, rounded to nearest

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "hmdface/flm.hpp"
#include "hmdface/mailbox.hpp"

namespace hmdface {

inline constexpr std::size_t kWireHeaderBytes = 18;
inline constexpr std::size_t kWirePayloadBytes = kLandmarkCount * 4;
inline constexpr std::size_t kWireFrameBytes = kWireHeaderBytes + kWirePayloadBytes;
inline constexpr std::array<std::uint8_t, 4> kWireMagic = {'F', 'L', 'M', '1'};
inline constexpr std::uint8_t kWireVersion = 1;

using WireBytes = std::array<std::uint8_t, kWireFrameBytes>;

struct WireFrame {
    FacialLandmarkSet landmarks;  // integer coordinates, 256 reference space
    std::uint32_t sequence = 0;
    std::uint64_t timestamp_us = 0;
    std::uint8_t flags = 0;
};

// Landmarks at other resolutions are rescaled to 256 first. Throws
// ValidationError when a rounded coordinate leaves [0, 65535].
WireBytes encode_frame(const FacialLandmarkSet& flm, std::uint32_t sequence, std::uint64_t timestamp_us,
                       std::uint8_t flags = 0);

// Throws FramingError on fewer than 298 bytes, ProtocolError on a bad magic
// or version.
WireFrame decode_frame(std::span<const std::uint8_t> bytes);

// Payload bits per second at `rate_hz`.
constexpr double payload_bitrate(double rate_hz) { return rate_hz * kWirePayloadBytes * 8.0; }

// Byte-stream reassembly with resynchronisation on the next magic after a
// bad frame.
class StreamDecoder {
public:
    std::vector<WireFrame> feed(std::span<const std::uint8_t> bytes);
    std::uint64_t protocol_errors() const { return protocol_errors_; }
    std::size_t buffered() const { return buffer_.size(); }

private:
    std::vector<std::uint8_t> buffer_;
    std::uint64_t protocol_errors_ = 0;
};

struct StreamStats {
    std::uint64_t frames_sent = 0;
    std::uint64_t frames_received = 0;
    std::uint64_t out_of_order = 0;
    std::uint64_t gaps = 0;          // places where the sequence skipped ahead
    std::uint64_t frames_missing = 0;
    std::uint64_t protocol_errors = 0;
    double payload_bitrate_bps = 0.0;
    double frame_rate_hz = 0.0;
};

// Sequence and timing bookkeeping of a receiver.
class SequenceTracker {
public:
    // Returns false for a frame that is not newer than the last accepted one.
    bool on_frame(std::uint32_t sequence, std::uint64_t arrival_us);
    void fill(StreamStats& stats) const;

private:
    std::optional<std::uint32_t> last_;
    std::uint64_t received_ = 0, out_of_order_ = 0, gaps_ = 0, missing_ = 0;
    std::uint64_t first_us_ = 0, last_us_ = 0;
};

enum class Transport { Udp, Tcp };
Transport transport_from_string(const std::string& s);
std::string to_string(Transport t);

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
    static Endpoint parse(const std::string& host_port);  // "host:port"
    std::string str() const { return host + ":" + std::to_string(port); }
};

std::uint64_t monotonic_us();

class FrameSender {
public:
    // Throws NetworkError when the endpoint cannot be resolved or (TCP)
    // connected.
    FrameSender(const Endpoint& to, Transport transport);
    ~FrameSender();
    FrameSender(const FrameSender&) = delete;
    FrameSender& operator=(const FrameSender&) = delete;

    void send(const FacialLandmarkSet& flm, std::uint64_t timestamp_us);
    std::uint32_t next_sequence() const { return sequence_; }
    std::uint64_t frames_sent() const { return sent_; }

private:
    int fd_ = -1;
    std::uint32_t sequence_ = 0;
    std::uint64_t sent_ = 0;
};

struct SenderConfig {
    double rate_hz = 30.0;
    Transport transport = Transport::Udp;
    std::uint64_t frames = 300;  // 0 runs until `stop` is set
};

// Paces `source` at the configured rate. Throws ConfigError on a rate <= 0.
StreamStats run_sender(const std::function<FacialLandmarkSet(std::uint64_t)>& source, const Endpoint& to,
                       const SenderConfig& config, const std::atomic<bool>* stop = nullptr);

class FrameReceiver {
public:
    // Binds immediately (port 0 picks a free port). Throws NetworkError.
    FrameReceiver(const Endpoint& bind_to, Transport transport);
    ~FrameReceiver();
    FrameReceiver(const FrameReceiver&) = delete;
    FrameReceiver& operator=(const FrameReceiver&) = delete;

    std::uint16_t port() const { return port_; }
    void start();
    void stop();

    LatestMailbox<WireFrame>& mailbox() { return mailbox_; }
    StreamStats stats() const;

private:
    void loop_udp();
    void loop_tcp();
    void accept_frame(const WireFrame& f);

    int fd_ = -1;
    Transport transport_;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::thread thread_;
    LatestMailbox<WireFrame> mailbox_;
    mutable std::mutex stats_mu_;
    SequenceTracker tracker_;
    std::uint64_t protocol_errors_ = 0;
};

// Delivers the latest frame to `sink` whenever one is available, until
// `stop` is set or `duration_s` elapses. A slow sink only ever sees the
// newest frame.
StreamStats run_receiver(FrameReceiver& receiver, const std::function<void(const WireFrame&)>& sink,
                         double duration_s, const std::atomic<bool>* stop = nullptr);

}  // namespace hmdface
