#pragma once

// Conditional RGBD generator: landmark map (1 channel) -> RGB + depth
// (4 channels), trained adversarially against a patch discriminator that
// sees the 4 output channels stacked on the landmark map.
//
// This header is torch-free; the networks live behind Generator's pimpl and
// in train_gan().

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "hmdface/dataset.hpp"
#include "hmdface/flm.hpp"
#include "hmdface/synthetic_face.hpp"

namespace hmdface {

struct GanArchitecture {
    int resolution = 256;
    int ngf = 64;               // generator base width
    int ndf = 64;               // discriminator base width
    int in_channels = 1;        // landmark map
    int out_channels = 4;       // R, G, B, depth
    int disc_in_channels = 5;   // output channels + landmark map
    int disc_layers = 3;
    bool dropout = false;       // decoder dropout in the three innermost blocks
    std::string norm = "instance";
    std::string objective = "vanilla";  // "vanilla" (BCE) or "lsgan" (least squares)

    // Encoder depth: log2(resolution), down to 1x1.
    int depth() const;
    void validate() const;
    friend bool operator==(const GanArchitecture&, const GanArchitecture&) = default;
};

struct GanConfig {
    int epochs_total = 200;
    int epochs_const_lr = 100;
    double learning_rate = 0.0002;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int batch_size = 1;
    double init_mean = 0.0;
    double init_std = 0.02;
    double l1_weight = 100.0;
    bool jitter = true;
    bool mirror = false;
    int resolution = 256;
    int ngf = 64;
    int ndf = 64;
    bool dropout = false;
    std::string objective = "vanilla";
    int checkpoint_every = 0;  // epochs; 0 disables
    std::uint64_t seed = 1;

    static GanConfig full();
    // 128x128, base widths 16, 60 epochs (constant rate for the first 30),
    // least-squares adversarial loss.
    static GanConfig desk();
    static GanConfig preset(const std::string& name);

    GanArchitecture architecture() const;
    void validate() const;
    std::uint64_t hash() const;
    std::string to_json() const;
};

// Learning rate used during 1-based epoch `epoch`.
double lr_at_epoch(const GanConfig& config, int epoch);

struct GanProvenance {
    std::uint64_t config_hash = 0;
    std::uint64_t dataset_hash = 0;
    int epochs = 0;
    std::uint64_t seed = 0;
    DepthRange depth_range{};
    std::uint8_t background_code = 0;
    int face_code_min = 1, face_code_max = 254;
    friend bool operator==(const GanProvenance&, const GanProvenance&) = default;
};

// Generator parameters as plain floats in module registration order.
struct GeneratorWeights {
    GanArchitecture architecture;
    GanProvenance provenance;
    std::vector<float> parameters;
    friend bool operator==(const GeneratorWeights&, const GeneratorWeights&) = default;
};

std::size_t generator_parameter_count(const GanArchitecture& arch);

struct EpochLog {
    int epoch = 0;
    double g_adv = 0.0;
    double g_l1 = 0.0;
    double d_loss = 0.0;
    double lr = 0.0;
    double wall_s = 0.0;
};

struct TrainingLog {
    std::vector<EpochLog> epochs;
    void write_csv(const std::filesystem::path& path) const;
    static TrainingLog read_csv(const std::filesystem::path& path);
};

struct GanTrainOptions {
    std::vector<std::size_t> train_indices;  // empty means every item
    std::filesystem::path checkpoint_dir;    // empty disables checkpoints
    std::function<void(const EpochLog&)> on_epoch;
};

// Throws ConfigError on a resolution mismatch, StructuralError on an empty
// dataset.
std::pair<GeneratorWeights, TrainingLog> train_gan(const PairedDataset& dataset, const GanConfig& config,
                                                   const GanTrainOptions& options = {});

// Inference wrapper; calls are serialised per instance.
class Generator {
public:
    explicit Generator(const GeneratorWeights& weights);
    ~Generator();
    Generator(Generator&&) noexcept;
    Generator& operator=(Generator&&) noexcept;

    // Throws ShapeError when the map resolution differs from the
    // architecture.
    RgbdFrame generate(const LandmarkMap& flm_map) const;
    const GeneratorWeights& weights() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

RgbdFrame generate(const GeneratorWeights& weights, const LandmarkMap& flm_map);

// Binary file: "HMGW", version, 4096-byte JSON header, float32 parameters,
// CRC32 trailer. The size depends only on the architecture.
void export_weights(const GeneratorWeights& weights, const std::filesystem::path& path);
GeneratorWeights import_weights(const std::filesystem::path& path);

// Model-construction probes used by tests.
struct GanChannelCounts {
    int generator_in = 0;
    int generator_out = 0;
    int discriminator_in = 0;
};
GanChannelCounts probe_channel_counts(const GanArchitecture& arch);
// Pooled standard deviation of all convolution kernels right after
// initialisation, generator and discriminator.
double initial_conv_weight_std(const GanConfig& config);

}  // namespace hmdface
