#pragma once

// nlohmann::json conversions for the library's value types. Internal header.

#include <json.hpp>

#include "hmdface/flm.hpp"
#include "hmdface/synthetic_face.hpp"

namespace hmdface {

using json = nlohmann::json;

inline json to_json_value(const ExpressionParams& p) {
    return json{{"mouth_open", p.mouth_open},       {"smile", p.smile},
                {"brow_raise_left", p.brow_raise_left}, {"brow_raise_right", p.brow_raise_right},
                {"eye_open_left", p.eye_open_left},   {"eye_open_right", p.eye_open_right},
                {"gaze_x", p.gaze_x},                 {"gaze_y", p.gaze_y},
                {"jaw_shift", p.jaw_shift}};
}

// Missing fields keep their neutral value.
inline ExpressionParams expression_from_json(const json& j, ExpressionParams base = {}) {
    auto get = [&j](const char* k, double& v) {
        if (j.contains(k)) v = j.at(k).get<double>();
    };
    get("mouth_open", base.mouth_open);
    get("smile", base.smile);
    get("brow_raise_left", base.brow_raise_left);
    get("brow_raise_right", base.brow_raise_right);
    get("eye_open_left", base.eye_open_left);
    get("eye_open_right", base.eye_open_right);
    get("gaze_x", base.gaze_x);
    get("gaze_y", base.gaze_y);
    get("jaw_shift", base.jaw_shift);
    return base;
}

inline json to_json_value(const IdentitySpec& id) {
    return json{{"seed", id.seed},
                {"face_width", id.face_width},
                {"face_height", id.face_height},
                {"eye_height", id.eye_height},
                {"eye_spacing", id.eye_spacing},
                {"nose_length", id.nose_length},
                {"mouth_width", id.mouth_width},
                {"brow_thickness", id.brow_thickness},
                {"skin_tone", id.skin_tone},
                {"skin_ir", id.skin_ir},
                {"brow_contrast", id.brow_contrast},
                {"iris_hue", id.iris_hue}};
}

inline IdentitySpec identity_from_json(const json& j) {
    IdentitySpec id;
    id.seed = j.at("seed").get<std::uint64_t>();
    id.face_width = j.at("face_width").get<double>();
    id.face_height = j.at("face_height").get<double>();
    id.eye_height = j.at("eye_height").get<double>();
    id.eye_spacing = j.at("eye_spacing").get<double>();
    id.nose_length = j.at("nose_length").get<double>();
    id.mouth_width = j.at("mouth_width").get<double>();
    id.brow_thickness = j.at("brow_thickness").get<double>();
    id.skin_tone = j.at("skin_tone").get<double>();
    id.skin_ir = j.at("skin_ir").get<double>();
    id.brow_contrast = j.at("brow_contrast").get<double>();
    id.iris_hue = j.at("iris_hue").get<double>();
    id.validate();
    return id;
}

inline json to_json_value(const LandmarkBounds& b) {
    json arr = json::array();
    for (const auto& e : b.entries) arr.push_back(json::array({e.x_min, e.x_max, e.y_min, e.y_max}));
    return json{{"resolution", {b.resolution.width, b.resolution.height}}, {"entries", arr}};
}

inline LandmarkBounds bounds_from_json(const json& j) {
    LandmarkBounds b;
    b.resolution = {j.at("resolution").at(0).get<int>(), j.at("resolution").at(1).get<int>()};
    const json& arr = j.at("entries");
    if (arr.size() != kLandmarkCount) throw std::runtime_error("bounds need 70 entries");
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        b.entries[i] = {arr[i][0].get<double>(), arr[i][1].get<double>(), arr[i][2].get<double>(),
                        arr[i][3].get<double>()};
    }
    return b;
}

inline json to_json_value(const FacialLandmarkSet& s) { return json(s.flat()); }

inline json to_json_value(const cv::Matx23d& m) {
    return json::array({m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2)});
}

inline cv::Matx23d affine_from_json(const json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
            j.at(3).get<double>(), j.at(4).get<double>(), j.at(5).get<double>()};
}

}  // namespace hmdface
