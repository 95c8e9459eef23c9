#include <doctest.h>

#include <filesystem>

#include "hmdface/error.hpp"
#include "hmdface/lowerface_cnn.hpp"

using namespace hmdface;
namespace fs = std::filesystem;

namespace {

const IdentitySpec id = IdentitySpec::from_seed(7);

LowerFaceDataset small_corpus(std::size_t n) {
    CaptureConfig cc;
    cc.expression_repeats = 1;
    cc.sentences = 1;
    cc.talk_frames = 10;
    AugmentationConfig ac;
    ac.target_count = n;
    return build_lowerface_dataset(build_capture_script(cc), id, ac);
}

const LowerFaceWeights& smoke_weights() {
    static const LowerFaceWeights w = [] {
        CnnConfig c = CnnConfig::desk();
        c.epochs = 2;
        return train_lowerface_cnn(small_corpus(64), c).first;
    }();
    return w;
}

}  // namespace

TEST_SUITE("lowerface_cnn") {

TEST_CASE("presets") {
    const CnnConfig d = CnnConfig::desk();
    CHECK(d.epochs == 15);
    CHECK(d.batch_size == 8);
    CHECK(d.learning_rate == 0.001);
    CHECK(CnnConfig::full().widths == std::vector<int>{32, 64, 128, 256});
    CnnConfig bad = d;
    bad.widths = {16, 0, 64};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = d;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("two-epoch smoke run reports finite losses") {
    const LowerFaceDataset ds = small_corpus(64);
    CnnConfig c = CnnConfig::desk();
    c.epochs = 2;
    int calls = 0;
    const auto [w, rep] = train_lowerface_cnn(ds, c, [&](const CnnEpochLog&) { ++calls; });
    CHECK(calls == 2);
    REQUIRE(rep.epochs.size() == 2);
    for (const auto& e : rep.epochs) {
        CHECK(std::isfinite(e.train_mse));
        CHECK(std::isfinite(e.test_mse));
    }
    CHECK(rep.test_items == ds.test.size());
    CHECK(std::isfinite(rep.test_mean_error_px));
    CHECK(rep.baseline_mean_error_px > 0.0);
    CHECK(w.subset_indices == ds.subset_indices);
    CHECK(w.config_hash == c.hash());
}

TEST_CASE("output size follows the subset; tracking is deterministic") {
    const LowerFaceTracker t(smoke_weights());
    const HmcViews v = render_hmc_views(id, ExpressionParams{0.5, 0.2});
    const auto a = t.track(v.lower_face_ir, 7), b = t.track(v.lower_face_ir, 7);
    CHECK(a.source == Source::LowerFace);
    CHECK(a.indices == smoke_weights().subset_indices);
    CHECK(a.points == b.points);
    CHECK(a.timestamp_us == 7);
    CHECK(track_lowerface(smoke_weights(), v.lower_face_ir, 7).points == a.points);
    const auto crops = t.predict_crops({cv::Mat::zeros(128, 128, CV_8UC1)});
    REQUIRE(crops.size() == 1);
    CHECK(crops[0].size() == smoke_weights().subset_indices.size());
}

TEST_CASE("input shape errors") {
    const LowerFaceTracker t(smoke_weights());
    CHECK_THROWS_AS(t.track(cv::Mat::zeros(100, 100, CV_8UC1)), ShapeError);
    CHECK_THROWS_AS(t.predict_crops({cv::Mat::zeros(64, 64, CV_8UC1)}), ShapeError);
}

TEST_CASE("training refuses an empty split") {
    LowerFaceDataset ds = small_corpus(60);
    ds.train.clear();
    CHECK_THROWS_AS(train_lowerface_cnn(ds, CnnConfig::desk()), StructuralError);
}

TEST_CASE("weights round trip") {
    const fs::path p = fs::temp_directory_path() / "hmdface_unit_cnn.hmlc";
    export_lowerface_weights(smoke_weights(), p);
    const LowerFaceWeights back = import_lowerface_weights(p);
    CHECK(back == smoke_weights());
    const HmcViews v = render_hmc_views(id, ExpressionParams{});
    CHECK(LowerFaceTracker(back).track(v.lower_face_ir).points ==
          LowerFaceTracker(smoke_weights()).track(v.lower_face_ir).points);
    fs::resize_file(p, fs::file_size(p) / 2);
    CHECK_THROWS_AS(import_lowerface_weights(p), Error);
}

TEST_CASE("trained desk regressor finds the mouth corners") {
    const fs::path w = HMDFACE_ACCEPTANCE_WORK "/cnn/lowerface.hmlc";
    if (!fs::exists(w)) {
        MESSAGE("no trained desk weights at " << w.string());
        FAIL_CHECK("run the criterion 3 acceptance test first");
        return;
    }
    const LowerFaceTracker t(import_lowerface_weights(w));
    const auto& subset = t.weights().subset_indices;
    double worst = 0.0;
    for (const ExpressionParams& p : {ExpressionParams{}, ExpressionParams{0.7, 0.0}, ExpressionParams{0.3, 0.8},
                                      ExpressionParams{0.0, -0.6}, ExpressionParams{1.0, 0.4}}) {
        const auto truth = landmarks_of(id, p);
        const auto r = t.track(render_hmc_views(id, p).lower_face_ir);
        for (std::size_t k = 0; k < subset.size(); ++k) {
            if (subset[k] != lm::kMouthLeftCorner && subset[k] != lm::kMouthRightCorner) continue;
            worst = std::max(worst, std::hypot(r.points[k].x - truth[subset[k]].x, r.points[k].y - truth[subset[k]].y));
        }
    }
    MESSAGE("worst mouth-corner error " << worst << " px");
    CHECK(worst <= 4.0);
}

}
