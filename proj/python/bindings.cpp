// Python view of the torch-free core plus generator inference.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "hmdface/avatar_gan.hpp"
#include "hmdface/error.hpp"
#include "hmdface/flm.hpp"
#include "hmdface/landmark_merger.hpp"
#include "hmdface/metrics.hpp"
#include "hmdface/reconstruction.hpp"
#include "hmdface/synthetic_face.hpp"
#include "hmdface/wire_protocol.hpp"

namespace py = pybind11;
using namespace hmdface;

namespace {

py::array_t<std::uint8_t> to_numpy(const cv::Mat& m) {
    CV_Assert(m.depth() == CV_8U);
    std::vector<py::ssize_t> shape = {m.rows, m.cols};
    if (m.channels() > 1) shape.push_back(m.channels());
    py::array_t<std::uint8_t> out(shape);
    const cv::Mat c = m.isContinuous() ? m : m.clone();
    std::memcpy(out.mutable_data(), c.data, c.total() * c.elemSize());
    return out;
}

cv::Mat from_numpy(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() == 2) {
        return cv::Mat(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), CV_8UC1,
                       const_cast<std::uint8_t*>(a.data()))
            .clone();
    }
    if (a.ndim() == 3) {
        return cv::Mat(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                       CV_8UC(static_cast<int>(a.shape(2))), const_cast<std::uint8_t*>(a.data()))
            .clone();
    }
    throw ShapeError("expected a 2-D or 3-D uint8 array");
}

py::array_t<double> points_array(const FacialLandmarkSet& s) {
    py::array_t<double> out({static_cast<py::ssize_t>(kLandmarkCount), py::ssize_t{2}});
    auto r = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        r(i, 0) = s[i].x;
        r(i, 1) = s[i].y;
    }
    return out;
}

FacialLandmarkSet set_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                                 Resolution res) {
    if (a.ndim() != 2 || a.shape(1) != 2) throw StructuralError("expected an (n, 2) array");
    std::vector<Point2> pts;
    auto r = a.unchecked<2>();
    for (py::ssize_t i = 0; i < a.shape(0); ++i) pts.push_back({r(i, 0), r(i, 1)});
    return make_landmark_set(pts, res);
}

ExpressionParams params_from_kwargs(const py::kwargs& kw) {
    ExpressionParams p;
    for (auto item : kw) {
        const auto k = item.first.cast<std::string>();
        const double v = item.second.cast<double>();
        if (k == "mouth_open") p.mouth_open = v;
        else if (k == "smile") p.smile = v;
        else if (k == "brow_raise_left") p.brow_raise_left = v;
        else if (k == "brow_raise_right") p.brow_raise_right = v;
        else if (k == "eye_open_left") p.eye_open_left = v;
        else if (k == "eye_open_right") p.eye_open_right = v;
        else if (k == "gaze_x") p.gaze_x = v;
        else if (k == "gaze_y") p.gaze_y = v;
        else if (k == "jaw_shift") p.jaw_shift = v;
        else throw ValidationError("unknown expression field " + k);
    }
    p.validate();
    return p;
}

py::dict frame_dict(const RgbdFrame& f) {
    py::dict d;
    d["rgb"] = to_numpy(f.rgb);
    d["depth"] = to_numpy(f.depth);
    d["near_mm"] = f.depth_range.near_mm;
    d["far_mm"] = f.depth_range.far_mm;
    d["background_code"] = f.background_code;
    return d;
}

RgbdFrame frame_from(const py::array_t<std::uint8_t>& rgb, const py::array_t<std::uint8_t>& depth) {
    RgbdFrame f;
    f.rgb = from_numpy(rgb);
    f.depth = from_numpy(depth);
    return f;
}

}  // namespace

PYBIND11_MODULE(_hmdface, m) {
    m.doc() = "Landmark-driven RGBD face avatars";

    static py::exception<Error> base(m, "HmdfaceError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(base, (std::string(e.kind()) + ": " + e.what()).c_str());
        }
    });

    m.attr("LANDMARK_COUNT") = kLandmarkCount;
    m.attr("WIRE_FRAME_BYTES") = kWireFrameBytes;

    m.def("mirror_index", &mirror_index);
    m.def("payload_bitrate", &payload_bitrate, py::arg("rate_hz"));

    m.def(
        "landmarks_of",
        [](std::uint64_t identity_seed, int resolution, const py::kwargs& kw) {
            return points_array(landmarks_of(IdentitySpec::from_seed(identity_seed), params_from_kwargs(kw),
                                             {resolution, resolution}));
        },
        py::arg("identity_seed") = 7, py::arg("resolution") = 256);
    m.def(
        "render_face",
        [](std::uint64_t identity_seed, int resolution, const py::kwargs& kw) {
            return frame_dict(render_face(IdentitySpec::from_seed(identity_seed), params_from_kwargs(kw),
                                          {resolution, resolution}));
        },
        py::arg("identity_seed") = 7, py::arg("resolution") = 256);
    m.def(
        "rasterize",
        [](const py::array_t<double>& pts, int resolution) {
            return to_numpy(rasterize(set_from_array(pts, {resolution, resolution})).pixels);
        },
        py::arg("points"), py::arg("resolution") = 256);

    m.def(
        "encode_frame",
        [](const py::array_t<double>& pts, std::uint32_t seq, std::uint64_t t_us, int resolution) {
            const WireBytes b = encode_frame(set_from_array(pts, {resolution, resolution}), seq, t_us);
            return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
        },
        py::arg("points"), py::arg("sequence"), py::arg("timestamp_us") = 0, py::arg("resolution") = 256);
    m.def("decode_frame", [](const py::bytes& data) {
        const std::string s = data;
        const WireFrame f = decode_frame(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
        py::dict d;
        d["points"] = points_array(f.landmarks);
        d["sequence"] = f.sequence;
        d["timestamp_us"] = f.timestamp_us;
        return d;
    });

    m.def(
        "masked_ssim",
        [](const py::array_t<std::uint8_t>& a, const py::array_t<std::uint8_t>& b, const py::array_t<std::uint8_t>& mask) {
            return masked_ssim(from_numpy(a), from_numpy(b), from_numpy(mask));
        },
        py::arg("a"), py::arg("b"), py::arg("mask"));
    m.def(
        "depth_stats",
        [](const py::array_t<std::uint8_t>& gen_depth, const py::array_t<std::uint8_t>& ref_depth) {
            RgbdFrame g, r;
            g.depth = from_numpy(gen_depth);
            r.depth = from_numpy(ref_depth);
            const DepthStats s = depth_stats(g, r, face_mask(r));
            py::dict d;
            d["median_mm"] = s.median_mm;
            d["mean_mm"] = s.mean_mm;
            d["fraction_within_5mm"] = s.fraction_within_5mm;
            d["pixels"] = s.pixels;
            return d;
        },
        py::arg("generated_depth"), py::arg("reference_depth"));
    m.def(
        "postprocess",
        [](const py::array_t<std::uint8_t>& rgb, const py::array_t<std::uint8_t>& depth, int erode, int near, int far) {
            return frame_dict(postprocess(frame_from(rgb, depth), PostprocessParams{erode, near, far}));
        },
        py::arg("rgb"), py::arg("depth"), py::arg("erode") = 2, py::arg("clip_near") = 1, py::arg("clip_far") = 254);

    m.def(
        "generate",
        [](const std::string& weights_path, const py::array_t<double>& pts) {
            const GeneratorWeights w = import_weights(weights_path);
            const int r = w.architecture.resolution;
            const auto flm = set_from_array(pts, {kReferenceSize, kReferenceSize}).rescaled({r, r});
            return frame_dict(generate(w, rasterize(flm)));
        },
        py::arg("weights_path"), py::arg("points"),
        "Points are in 256 reference space.");
}
