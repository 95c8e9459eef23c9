#include "hmdface/landmark_merger.hpp"

#include "hmdface/error.hpp"

namespace hmdface {

CalibrationState CalibrationState::from_training(const LandmarkBounds& bounds,
                                                 const FacialLandmarkSet& neutral_reference) {
    const Resolution ref{kReferenceSize, kReferenceSize};
    CalibrationState c;
    c.bounds = bounds.rescaled(ref);
    c.neutral_reference = neutral_reference.rescaled(ref);
    return c;
}

int ownership_rank(Source source, std::size_t index) {
    using namespace lm;
    switch (source) {
        case Source::BrowLeft: return index >= kBrowLeftBegin && index < kBrowLeftEnd ? 2 : 0;
        case Source::BrowRight: return index >= kBrowRightBegin && index < kBrowRightEnd ? 2 : 0;
        case Source::EyeLeft:
            return (index >= kEyeLeftBegin && index < kEyeLeftEnd) || index == kIrisLeft ? 2 : 0;
        case Source::EyeRight:
            return (index >= kEyeRightBegin && index < kEyeRightEnd) || index == kIrisRight ? 2 : 0;
        case Source::LowerFace: return 1;
    }
    return 0;
}

namespace {

// Best-ranked point per index, or nullopt when uncovered.
std::array<std::optional<Point2>, kLandmarkCount> covered_points(const ReportSet& reports) {
    std::array<std::optional<Point2>, kLandmarkCount> pts{};
    std::array<int, kLandmarkCount> rank{};
    for (const auto& r : reports) {
        r.validate();
        for (std::size_t k = 0; k < r.indices.size(); ++k) {
            const std::size_t i = r.indices[k];
            const int rk = ownership_rank(r.source, i);
            if (rk > rank[i]) {
                rank[i] = rk;
                pts[i] = r.points[k];
            }
        }
    }
    return pts;
}

}  // namespace

FacialLandmarkSet assemble_uncalibrated(const ReportSet& reports, const FacialLandmarkSet& neutral_reference) {
    const auto pts = covered_points(reports);
    std::array<Point2, kLandmarkCount> out{};
    for (std::size_t i = 0; i < kLandmarkCount; ++i) out[i] = pts[i].value_or(neutral_reference[i]);
    return make_landmark_set(out, neutral_reference.resolution());
}

CalibrationState calibrate(std::span<const ReportSet> neutral_reports, const CalibrationState& calib) {
    if (neutral_reports.empty()) throw CalibrationError("calibration needs at least one report set");
    std::array<int, kSourceCount> seen{}, live{};
    std::array<Point2, kLandmarkCount> sum{};
    std::array<int, kLandmarkCount> count{};
    for (const auto& set : neutral_reports) {
        for (const auto& r : set) {
            ++seen[static_cast<int>(r.source)];
            if (!r.tracking_lost()) ++live[static_cast<int>(r.source)];
        }
        const auto pts = covered_points(set);
        for (std::size_t i = 0; i < kLandmarkCount; ++i) {
            if (!pts[i]) continue;
            sum[i].x += pts[i]->x;
            sum[i].y += pts[i]->y;
            ++count[i];
        }
    }
    for (std::size_t s = 0; s < kSourceCount; ++s) {
        if (seen[s] > 0 && live[s] == 0) {
            throw CalibrationError("source " + to_string(static_cast<Source>(s)) +
                                   " lost tracking in every calibration frame");
        }
    }
    CalibrationState out = calib;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        if (count[i] == 0) {
            out.offsets[i] = {0.0, 0.0};
            continue;
        }
        const Point2 avg{sum[i].x / count[i], sum[i].y / count[i]};
        out.offsets[i] = {calib.neutral_reference[i].x - avg.x, calib.neutral_reference[i].y - avg.y};
    }
    out.calibrated = true;
    out.frames_averaged = static_cast<int>(neutral_reports.size());
    return out;
}

std::string to_string(SourceStatus s) {
    switch (s) {
        case SourceStatus::Absent: return "absent";
        case SourceStatus::Fresh: return "fresh";
        case SourceStatus::Held: return "held";
        case SourceStatus::Expired: return "expired";
        case SourceStatus::Lost: return "lost";
    }
    return "?";
}

MergerState::MergerState(std::uint64_t deadline_us_all) {
    deadline_us.fill(deadline_us_all);
    status.fill(SourceStatus::Absent);
}

FacialLandmarkSet merge_step(const ReportSet& reports, const CalibrationState& calib, MergerState& merger,
                             std::uint64_t now_us) {
    if (!calib.calibrated) throw StateError("merge_step called before calibration");
    for (const auto& r : reports) {
        r.validate();
        auto& slot = merger.last[static_cast<int>(r.source)];
        if (!slot || r.timestamp_us >= slot->timestamp_us) slot = r;
    }

    ReportSet usable;
    for (std::size_t s = 0; s < kSourceCount; ++s) {
        const auto& slot = merger.last[s];
        if (!slot) {
            merger.status[s] = SourceStatus::Absent;
            continue;
        }
        const std::uint64_t age = now_us > slot->timestamp_us ? now_us - slot->timestamp_us : 0;
        if (age > 10 * merger.deadline_us[s]) {
            merger.status[s] = SourceStatus::Expired;
            continue;
        }
        if (slot->tracking_lost()) {
            merger.status[s] = SourceStatus::Lost;
            continue;
        }
        merger.status[s] = age > merger.deadline_us[s] ? SourceStatus::Held : SourceStatus::Fresh;
        usable.push_back(*slot);
    }

    const FacialLandmarkSet raw = assemble_uncalibrated(usable, calib.neutral_reference);
    std::array<Point2, kLandmarkCount> shifted{};
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        shifted[i] = {raw[i].x + calib.offsets[i].x, raw[i].y + calib.offsets[i].y};
    }
    merger.output = clamp_landmarks(make_landmark_set(shifted, raw.resolution()), calib.bounds);
    ++merger.steps;
    return merger.output;
}

}  // namespace hmdface
