#include "nn_common.hpp"

#include <cstring>
#include <fstream>

#include <opencv2/core.hpp>

#include "hmdface/error.hpp"
#include "hmdface/hashing.hpp"

namespace hmdface::nn {

namespace {
constexpr std::uint32_t kFileVersion = 1;

template <typename T>
void append(std::vector<std::uint8_t>& out, const T& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T read_at(const std::vector<std::uint8_t>& in, std::size_t off) {
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    return v;
}
}  // namespace

void seed_everything(std::uint64_t seed) {
    torch::manual_seed(seed);
}

void init_normal(torch::nn::Module& module, double mean, double std) {
    torch::NoGradGuard guard;
    for (auto& m : module.modules(/*include_self=*/true)) {
        if (auto* c = m->as<torch::nn::Conv2d>()) {
            c->weight.normal_(mean, std);
            if (c->bias.defined()) c->bias.zero_();
        } else if (auto* t = m->as<torch::nn::ConvTranspose2d>()) {
            t->weight.normal_(mean, std);
            if (t->bias.defined()) t->bias.zero_();
        } else if (auto* b = m->as<torch::nn::BatchNorm2d>()) {
            if (b->weight.defined()) b->weight.normal_(1.0, std);
            if (b->bias.defined()) b->bias.zero_();
        } else if (auto* i = m->as<torch::nn::InstanceNorm2d>()) {
            if (i->weight.defined()) i->weight.normal_(1.0, std);
            if (i->bias.defined()) i->bias.zero_();
        } else if (auto* l = m->as<torch::nn::Linear>()) {
            l->weight.normal_(mean, std);
            l->bias.zero_();
        }
    }
}

namespace {
std::vector<torch::Tensor> state_tensors(torch::nn::Module& module) {
    std::vector<torch::Tensor> out;
    for (auto& p : module.named_parameters(true)) out.push_back(p.value());
    for (auto& b : module.named_buffers(true)) {
        if (b.value().is_floating_point()) out.push_back(b.value());
    }
    return out;
}
}  // namespace

std::size_t parameter_count(torch::nn::Module& module) {
    std::size_t n = 0;
    for (auto& t : state_tensors(module)) n += static_cast<std::size_t>(t.numel());
    return n;
}

std::vector<float> flatten_parameters(torch::nn::Module& module) {
    std::vector<float> out;
    out.reserve(parameter_count(module));
    for (auto& t : state_tensors(module)) {
        const auto c = t.detach().to(torch::kFloat32).contiguous();
        const float* p = c.data_ptr<float>();
        out.insert(out.end(), p, p + c.numel());
    }
    return out;
}

void load_parameters(torch::nn::Module& module, const std::vector<float>& flat) {
    if (flat.size() != parameter_count(module)) {
        throw IoError("parameter count mismatch: file has " + std::to_string(flat.size()) + ", model needs " +
                      std::to_string(parameter_count(module)));
    }
    torch::NoGradGuard guard;
    std::size_t off = 0;
    for (auto& t : state_tensors(module)) {
        const auto n = static_cast<std::size_t>(t.numel());
        auto src = torch::from_blob(const_cast<float*>(flat.data() + off), t.sizes(), torch::kFloat32);
        t.copy_(src);
        off += n;
    }
}

torch::Tensor image_to_tensor(const cv::Mat& image) {
    CV_Assert(image.depth() == CV_8U);
    cv::Mat c = image.isContinuous() ? image : image.clone();
    auto t = torch::from_blob(c.data, {c.rows, c.cols, c.channels()}, torch::kUInt8)
                 .permute({2, 0, 1})
                 .to(torch::kFloat32)
                 .contiguous();
    return t.div_(127.5).sub_(1.0);
}

void write_weights_file(const std::filesystem::path& path, const std::array<char, 4>& magic, const json& header,
                        const std::vector<float>& values) {
    std::string text = header.dump();
    if (text.size() > kHeaderBytes) throw IoError("weights header exceeds " + std::to_string(kHeaderBytes) + " bytes");
    text.resize(kHeaderBytes, ' ');
    std::vector<std::uint8_t> bytes;
    bytes.reserve(16 + kHeaderBytes + 4 * values.size() + 4);
    bytes.insert(bytes.end(), magic.begin(), magic.end());
    append(bytes, kFileVersion);
    append(bytes, static_cast<std::uint32_t>(kHeaderBytes));
    bytes.insert(bytes.end(), text.begin(), text.end());
    append(bytes, static_cast<std::uint64_t>(values.size()));
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    bytes.insert(bytes.end(), p, p + 4 * values.size());
    append(bytes, crc32_of(bytes));

    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::pair<json, std::vector<float>> read_weights_file(const std::filesystem::path& path,
                                                      const std::array<char, 4>& magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weights file " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    const std::size_t fixed = 4 + 4 + 4 + kHeaderBytes + 8;
    if (bytes.size() < fixed + 4) throw IoError("truncated weights file " + path.string());
    if (!std::equal(magic.begin(), magic.end(), bytes.begin())) throw IoError("bad magic in " + path.string());
    if (read_at<std::uint32_t>(bytes, 4) != kFileVersion) throw IoError("unsupported version in " + path.string());
    if (read_at<std::uint32_t>(bytes, 8) != kHeaderBytes) throw IoError("bad header size in " + path.string());
    const auto count = read_at<std::uint64_t>(bytes, 12 + kHeaderBytes);
    if (bytes.size() != fixed + 4 * count + 4) throw IoError("truncated weights file " + path.string());
    const std::size_t body = bytes.size() - 4;
    if (crc32_of(std::span(bytes.data(), body)) != read_at<std::uint32_t>(bytes, body)) {
        throw IoError("checksum mismatch in " + path.string());
    }
    json header;
    try {
        header = json::parse(std::string(bytes.begin() + 12, bytes.begin() + 12 + kHeaderBytes));
    } catch (const json::exception& e) {
        throw IoError("corrupt header in " + path.string() + ": " + e.what());
    }
    std::vector<float> values(count);
    std::memcpy(values.data(), bytes.data() + fixed, 4 * count);
    return {header, values};
}

}  // namespace hmdface::nn
