#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace hmdface {

// 64-bit FNV-1a, used for provenance hashes (config, dataset).
class Fnv1a {
public:
    Fnv1a& update(std::span<const std::uint8_t> bytes);
    Fnv1a& update(std::string_view text);
    template <typename T>
    Fnv1a& update_value(const T& v) {
        return update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(&v), sizeof(T)));
    }
    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

// Fixed-width (16 char) lowercase hex.
std::string hex64(std::uint64_t v);

}  // namespace hmdface
