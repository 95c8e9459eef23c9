#pragma once

#include <stdexcept>
#include <string>

namespace hmdface {

// Base for every error raised by the library. Callers that only need a
// one-line diagnostic can catch this and print what().
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* kind() const noexcept { return "error"; }
};

#define HMDFACE_ERROR_KIND(Name, tag)                                   \
    class Name : public Error {                                         \
    public:                                                             \
        explicit Name(const std::string& what) : Error(what) {}         \
        const char* kind() const noexcept override { return tag; }      \
    };

HMDFACE_ERROR_KIND(StructuralError, "structural")
HMDFACE_ERROR_KIND(ValidationError, "validation")
HMDFACE_ERROR_KIND(ConfigError, "config")
HMDFACE_ERROR_KIND(IoError, "io")
HMDFACE_ERROR_KIND(ShapeError, "shape")
HMDFACE_ERROR_KIND(ProtocolError, "protocol")
HMDFACE_ERROR_KIND(FramingError, "framing")
HMDFACE_ERROR_KIND(CalibrationError, "calibration")
HMDFACE_ERROR_KIND(StateError, "state")
HMDFACE_ERROR_KIND(NetworkError, "network")

#undef HMDFACE_ERROR_KIND

}  // namespace hmdface
