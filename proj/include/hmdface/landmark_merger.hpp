#pragma once

// Fuses partial reports into the final landmark set: assemble, add the
// calibration offsets, clamp to the training envelope.
//
// Index ownership when several sources report the same landmark:
//   brow-left 17-21, brow-right 22-26, eye-left 36-41 + 68,
//   eye-right 42-47 + 69, lower-face everything it reports otherwise.
// Indices no live source covers take the neutral reference value.
//
// Everything here works in 256 reference space.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hmdface/face_tracking.hpp"
#include "hmdface/flm.hpp"

namespace hmdface {

using ReportSet = std::vector<PartialLandmarkReport>;

struct CalibrationState {
    std::array<Point2, kLandmarkCount> offsets{};
    LandmarkBounds bounds;
    FacialLandmarkSet neutral_reference;
    bool calibrated = false;
    int frames_averaged = 0;

    // Uncalibrated state from training metadata; both inputs are rescaled to
    // 256 reference space.
    static CalibrationState from_training(const LandmarkBounds& bounds, const FacialLandmarkSet& neutral_reference);
};

inline constexpr int kDefaultCalibrationFrames = 30;

// Precedence rank of `source` for landmark `index`; higher wins.
int ownership_rank(Source source, std::size_t index);

// Step 1: concatenation. Tracking-lost reports cover nothing.
FacialLandmarkSet assemble_uncalibrated(const ReportSet& reports, const FacialLandmarkSet& neutral_reference);

// Average the uncalibrated sets over all report-sets (per index, only over
// frames where some source covered it) and set offset = reference - average.
// Throws CalibrationError naming a source that was lost in every frame.
CalibrationState calibrate(std::span<const ReportSet> neutral_reports, const CalibrationState& calib);

enum class SourceStatus { Absent, Fresh, Held, Expired, Lost };
std::string to_string(SourceStatus s);

struct MergerState {
    std::array<std::optional<PartialLandmarkReport>, kSourceCount> last{};
    std::array<std::uint64_t, kSourceCount> deadline_us{};
    std::array<SourceStatus, kSourceCount> status{};
    FacialLandmarkSet output;
    std::uint64_t steps = 0;

    // Same deadline for every source.
    explicit MergerState(std::uint64_t deadline_us_all = 100'000);
};

// Steps 1-4. Incoming reports replace the slot of their source when not
// older than what it holds. Slots older than the deadline are held, older
// than 10x the deadline are dropped.
// Throws StateError when `calib` is not calibrated.
FacialLandmarkSet merge_step(const ReportSet& reports, const CalibrationState& calib, MergerState& merger,
                             std::uint64_t now_us);

}  // namespace hmdface
