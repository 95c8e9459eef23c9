#pragma once

// Small, quickly trained assets for the live-loop suites: a 32x32 generator
// and a briefly trained lower-face regressor for identity 7.

#include "hmdface/avatar_gan.hpp"
#include "hmdface/dataset.hpp"
#include "hmdface/lowerface_cnn.hpp"
#include "hmdface/pipeline.hpp"

namespace hmdface::testing {

inline const PairedDataset& toy_paired() {
    static const PairedDataset ds = [] {
        CaptureConfig cc;
        cc.expression_repeats = 0;
        cc.sentences = 0;
        cc.talk_frames = 5;
        return build_paired_dataset(build_capture_script(cc), IdentitySpec::from_seed(7), {32, 32});
    }();
    return ds;
}

inline const GeneratorWeights& toy_generator() {
    static const GeneratorWeights w = [] {
        GanConfig c;
        c.resolution = 32;
        c.ngf = 8;
        c.ndf = 8;
        c.epochs_total = 2;
        c.epochs_const_lr = 1;
        return train_gan(toy_paired(), c).first;
    }();
    return w;
}

inline const LowerFaceWeights& toy_lowerface() {
    static const LowerFaceWeights w = [] {
        CaptureConfig cc;
        cc.expression_repeats = 1;
        cc.sentences = 1;
        cc.talk_frames = 10;
        AugmentationConfig ac;
        ac.target_count = 64;
        CnnConfig c = CnnConfig::desk();
        c.epochs = 1;
        return train_lowerface_cnn(build_lowerface_dataset(build_capture_script(cc), IdentitySpec::from_seed(7), ac), c)
            .first;
    }();
    return w;
}

inline LiveAssets toy_assets() {
    LiveAssets a;
    a.identity = IdentitySpec::from_seed(7);
    std::vector<FacialLandmarkSet> sets;
    for (const auto& f : build_capture_script(CaptureConfig{}).frames) sets.push_back(landmarks_of(a.identity, f.params));
    a.bounds = bounds_from_dataset(sets);
    a.neutral_reference = landmarks_of(a.identity, ExpressionParams::neutral(), {32, 32});
    a.depth_range = toy_paired().depth_range;
    a.background_code = toy_paired().background_code;
    a.generator = toy_generator();
    a.lowerface = toy_lowerface();
    return a;
}

}  // namespace hmdface::testing
