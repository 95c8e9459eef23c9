#include "hmdface/wire_protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "hmdface/error.hpp"

namespace hmdface {

namespace {

void put_le(std::uint8_t* p, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

sockaddr_in resolve(const Endpoint& ep) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    addrinfo* res = nullptr;
    if (getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || !res) {
        throw NetworkError("cannot resolve host " + ep.host);
    }
    sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
    freeaddrinfo(res);
    addr.sin_port = htons(ep.port);
    return addr;
}

std::string errno_text() { return std::strerror(errno); }

}  // namespace

WireBytes encode_frame(const FacialLandmarkSet& flm, std::uint32_t sequence, std::uint64_t timestamp_us,
                       std::uint8_t flags) {
    const FacialLandmarkSet ref = flm.resolution() == Resolution{kReferenceSize, kReferenceSize}
                                      ? flm
                                      : flm.rescaled({kReferenceSize, kReferenceSize});
    WireBytes out{};
    std::copy(kWireMagic.begin(), kWireMagic.end(), out.begin());
    out[4] = kWireVersion;
    out[5] = flags;
    put_le(&out[6], sequence, 4);
    put_le(&out[10], timestamp_us, 8);
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        const long x = round_coord(ref[i].x), y = round_coord(ref[i].y);
        if (x < 0 || y < 0 || x > 65535 || y > 65535) {
            throw ValidationError("landmark " + std::to_string(i) + " rounds outside [0, 65535]");
        }
        put_le(&out[kWireHeaderBytes + 4 * i], static_cast<std::uint64_t>(x), 2);
        put_le(&out[kWireHeaderBytes + 4 * i + 2], static_cast<std::uint64_t>(y), 2);
    }
    return out;
}

WireFrame decode_frame(std::span<const std::uint8_t> b) {
    if (b.size() < kWireFrameBytes) {
        throw FramingError("short frame: " + std::to_string(b.size()) + " of " + std::to_string(kWireFrameBytes) +
                           " bytes");
    }
    if (!std::equal(kWireMagic.begin(), kWireMagic.end(), b.begin())) throw ProtocolError("bad frame magic");
    if (b[4] != kWireVersion) throw ProtocolError("unsupported frame version " + std::to_string(b[4]));
    WireFrame f;
    f.flags = b[5];
    f.sequence = static_cast<std::uint32_t>(get_le(&b[6], 4));
    f.timestamp_us = get_le(&b[10], 8);
    std::array<Point2, kLandmarkCount> pts{};
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        pts[i] = {static_cast<double>(get_le(&b[kWireHeaderBytes + 4 * i], 2)),
                  static_cast<double>(get_le(&b[kWireHeaderBytes + 4 * i + 2], 2))};
    }
    f.landmarks = make_landmark_set(pts);
    return f;
}

std::vector<WireFrame> StreamDecoder::feed(std::span<const std::uint8_t> bytes) {
    buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
    std::vector<WireFrame> out;
    std::size_t pos = 0;
    while (buffer_.size() - pos >= kWireFrameBytes) {
        try {
            out.push_back(decode_frame(std::span(buffer_).subspan(pos, kWireFrameBytes)));
            pos += kWireFrameBytes;
        } catch (const ProtocolError&) {
            ++protocol_errors_;
            const auto next = std::search(buffer_.begin() + static_cast<std::ptrdiff_t>(pos + 1), buffer_.end(),
                                          kWireMagic.begin(), kWireMagic.end());
            pos = static_cast<std::size_t>(next - buffer_.begin());
        }
    }
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos));
    return out;
}

bool SequenceTracker::on_frame(std::uint32_t sequence, std::uint64_t arrival_us) {
    if (last_ && sequence <= *last_) {
        ++out_of_order_;
        return false;
    }
    if (last_ && sequence > *last_ + 1) {
        ++gaps_;
        missing_ += sequence - *last_ - 1;
    }
    if (received_ == 0) first_us_ = arrival_us;
    last_us_ = arrival_us;
    last_ = sequence;
    ++received_;
    return true;
}

void SequenceTracker::fill(StreamStats& s) const {
    s.frames_received = received_;
    s.out_of_order = out_of_order_;
    s.gaps = gaps_;
    s.frames_missing = missing_;
    if (received_ >= 2 && last_us_ > first_us_) {
        const double span_s = static_cast<double>(last_us_ - first_us_) * 1e-6;
        s.frame_rate_hz = static_cast<double>(received_ - 1) / span_s;
        s.payload_bitrate_bps = s.frame_rate_hz * kWirePayloadBytes * 8.0;
    }
}

Transport transport_from_string(const std::string& s) {
    if (s == "udp") return Transport::Udp;
    if (s == "tcp") return Transport::Tcp;
    throw ConfigError("unknown transport '" + s + "' (expected udp or tcp)");
}

std::string to_string(Transport t) { return t == Transport::Udp ? "udp" : "tcp"; }

Endpoint Endpoint::parse(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos || colon == 0) throw ConfigError("endpoint must be host:port, got '" + s + "'");
    Endpoint ep;
    ep.host = s.substr(0, colon);
    try {
        const int port = std::stoi(s.substr(colon + 1));
        if (port < 0 || port > 65535) throw std::out_of_range("port");
        ep.port = static_cast<std::uint16_t>(port);
    } catch (const std::exception&) {
        throw ConfigError("bad port in endpoint '" + s + "'");
    }
    return ep;
}

std::uint64_t monotonic_us() {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                          std::chrono::steady_clock::now().time_since_epoch())
                                          .count());
}

// ---------------------------------------------------------------------------

FrameSender::FrameSender(const Endpoint& to, Transport transport) {
    const sockaddr_in addr = resolve(to);
    fd_ = ::socket(AF_INET, transport == Transport::Udp ? SOCK_DGRAM : SOCK_STREAM, 0);
    if (fd_ < 0) throw NetworkError("socket: " + errno_text());
    if (transport == Transport::Tcp) {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    }
    if (::connect(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        const std::string why = errno_text();
        ::close(fd_);
        fd_ = -1;
        throw NetworkError("cannot reach " + to.str() + ": " + why);
    }
}

FrameSender::~FrameSender() {
    if (fd_ >= 0) ::close(fd_);
}

void FrameSender::send(const FacialLandmarkSet& flm, std::uint64_t timestamp_us) {
    const WireBytes bytes = encode_frame(flm, sequence_, timestamp_us);
    ++sequence_;
    std::size_t off = 0;
    while (off < bytes.size()) {
        const ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
        if (n < 0) {
            // Datagram loss (e.g. no listener yet) is tolerated.
            if (errno == ECONNREFUSED) return;
            throw NetworkError("send failed: " + errno_text());
        }
        off += static_cast<std::size_t>(n);
    }
    ++sent_;
}

StreamStats run_sender(const std::function<FacialLandmarkSet(std::uint64_t)>& source, const Endpoint& to,
                       const SenderConfig& config, const std::atomic<bool>* stop) {
    if (!(config.rate_hz > 0.0)) throw ConfigError("sender rate must be positive");
    FrameSender sender(to, config.transport);
    const auto period = std::chrono::duration<double>(1.0 / config.rate_hz);
    const auto t0 = std::chrono::steady_clock::now();
    std::uint64_t i = 0;
    for (; config.frames == 0 || i < config.frames; ++i) {
        if (stop && stop->load()) break;
        std::this_thread::sleep_until(t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                               period * static_cast<double>(i)));
        sender.send(source(i), monotonic_us());
    }
    StreamStats s;
    s.frames_sent = sender.frames_sent();
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (i > 1 && elapsed > 0) {
        s.frame_rate_hz = static_cast<double>(i - 1) / elapsed;
        s.payload_bitrate_bps = payload_bitrate(s.frame_rate_hz);
    }
    return s;
}

// ---------------------------------------------------------------------------

FrameReceiver::FrameReceiver(const Endpoint& bind_to, Transport transport) : transport_(transport) {
    const sockaddr_in addr = resolve(bind_to);
    fd_ = ::socket(AF_INET, transport == Transport::Udp ? SOCK_DGRAM : SOCK_STREAM, 0);
    if (fd_ < 0) throw NetworkError("socket: " + errno_text());
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        const std::string why = errno_text();
        ::close(fd_);
        fd_ = -1;
        throw NetworkError("cannot bind " + bind_to.str() + ": " + why);
    }
    if (transport == Transport::Tcp && ::listen(fd_, 1) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw NetworkError("listen failed: " + errno_text());
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
}

FrameReceiver::~FrameReceiver() {
    stop();
    if (fd_ >= 0) ::close(fd_);
}

void FrameReceiver::start() {
    if (running_.exchange(true)) return;
    thread_ = std::thread([this] { transport_ == Transport::Udp ? loop_udp() : loop_tcp(); });
}

void FrameReceiver::stop() {
    running_ = false;
    if (thread_.joinable()) thread_.join();
}

void FrameReceiver::accept_frame(const WireFrame& f) {
    bool newer;
    {
        std::lock_guard lock(stats_mu_);
        newer = tracker_.on_frame(f.sequence, monotonic_us());
    }
    if (newer) mailbox_.publish(f);
}

void FrameReceiver::loop_udp() {
    std::array<std::uint8_t, 2048> buf{};
    while (running_) {
        pollfd p{fd_, POLLIN, 0};
        if (::poll(&p, 1, 50) <= 0) continue;
        const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
        if (n <= 0) continue;
        try {
            accept_frame(decode_frame(std::span(buf.data(), static_cast<std::size_t>(n))));
        } catch (const Error&) {
            std::lock_guard lock(stats_mu_);
            ++protocol_errors_;
        }
    }
}

void FrameReceiver::loop_tcp() {
    int conn = -1;
    StreamDecoder decoder;
    std::array<std::uint8_t, 4096> buf{};
    while (running_) {
        if (conn < 0) {
            pollfd p{fd_, POLLIN, 0};
            if (::poll(&p, 1, 50) <= 0) continue;
            conn = ::accept(fd_, nullptr, nullptr);
            decoder = StreamDecoder{};
            continue;
        }
        pollfd p{conn, POLLIN, 0};
        if (::poll(&p, 1, 50) <= 0) continue;
        const ssize_t n = ::recv(conn, buf.data(), buf.size(), 0);
        if (n <= 0) {
            ::close(conn);
            conn = -1;
            continue;
        }
        const auto before = decoder.protocol_errors();
        for (const auto& f : decoder.feed(std::span(buf.data(), static_cast<std::size_t>(n)))) accept_frame(f);
        if (decoder.protocol_errors() != before) {
            std::lock_guard lock(stats_mu_);
            protocol_errors_ += decoder.protocol_errors() - before;
        }
    }
    if (conn >= 0) ::close(conn);
}

StreamStats FrameReceiver::stats() const {
    std::lock_guard lock(stats_mu_);
    StreamStats s;
    tracker_.fill(s);
    s.protocol_errors = protocol_errors_;
    return s;
}

StreamStats run_receiver(FrameReceiver& receiver, const std::function<void(const WireFrame&)>& sink,
                         double duration_s, const std::atomic<bool>* stop) {
    receiver.start();
    const auto end = std::chrono::steady_clock::now() + std::chrono::duration<double>(duration_s);
    while (std::chrono::steady_clock::now() < end && !(stop && stop->load())) {
        if (auto f = receiver.mailbox().wait_take(std::chrono::milliseconds(20))) sink(*f);
    }
    return receiver.stats();
}

}  // namespace hmdface
