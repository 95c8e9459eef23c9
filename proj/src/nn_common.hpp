#pragma once

// Shared torch helpers for the two learned components. Internal header.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json_io.hpp"

namespace hmdface::nn {

void seed_everything(std::uint64_t seed);

// Conv / transposed-conv kernels ~ N(mean, std), norm scales ~ N(1, std),
// biases zero.
void init_normal(torch::nn::Module& module, double mean, double std);

std::vector<float> flatten_parameters(torch::nn::Module& module);
// Throws IoError on a size mismatch.
void load_parameters(torch::nn::Module& module, const std::vector<float>& flat);
std::size_t parameter_count(torch::nn::Module& module);

// CV_8UC1 / CV_8UC3 -> float tensor [C, H, W] scaled to [-1, 1].
torch::Tensor image_to_tensor(const cv::Mat& image);

// Weights container: magic, u32 version, fixed-size JSON header, u64 count,
// float32 values, CRC32 of everything before the trailer.
inline constexpr std::size_t kHeaderBytes = 4096;
void write_weights_file(const std::filesystem::path& path, const std::array<char, 4>& magic, const json& header,
                        const std::vector<float>& values);
std::pair<json, std::vector<float>> read_weights_file(const std::filesystem::path& path,
                                                      const std::array<char, 4>& magic);

}  // namespace hmdface::nn
