#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>

namespace hmdface {

// Single-slot last-value-wins hand-off between threads. Writers never block
// on readers; an unread value is overwritten.
template <typename T>
class LatestMailbox {
public:
    void publish(T value) {
        {
            std::lock_guard lock(mu_);
            slot_ = std::move(value);
            ++version_;
            if (unread_) ++overwritten_;
            unread_ = true;
        }
        cv_.notify_all();
    }

    // Latest value, whether or not it has been read before.
    std::optional<T> peek() const {
        std::lock_guard lock(mu_);
        return slot_;
    }

    // Latest value if it has not been taken yet.
    std::optional<T> take() {
        std::lock_guard lock(mu_);
        if (!unread_) return std::nullopt;
        unread_ = false;
        return slot_;
    }

    template <typename Rep, typename Period>
    std::optional<T> wait_take(std::chrono::duration<Rep, Period> timeout) {
        std::unique_lock lock(mu_);
        if (!cv_.wait_for(lock, timeout, [this] { return unread_; })) return std::nullopt;
        unread_ = false;
        return slot_;
    }

    std::uint64_t version() const {
        std::lock_guard lock(mu_);
        return version_;
    }
    // Values replaced before anyone took them.
    std::uint64_t overwritten() const {
        std::lock_guard lock(mu_);
        return overwritten_;
    }
    // Number of values currently held (0 or 1).
    static constexpr std::size_t capacity() { return 1; }

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::optional<T> slot_;
    bool unread_ = false;
    std::uint64_t version_ = 0;
    std::uint64_t overwritten_ = 0;
};

}  // namespace hmdface
