#include "layernr/nn.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace lnr {

using nlohmann::json;

Tensor init_uniform(const Shape& shape, long fan_in, std::mt19937_64& rng) {
    Scalar a = std::sqrt(1.0 / (Scalar)std::max<long>(fan_in, 1));
    std::uniform_real_distribution<Scalar> dist(-a, a);
    Array v(shape_size(shape));
    for (long i = 0; i < v.size(); ++i) v[i] = dist(rng);
    return Tensor::from_array(shape, std::move(v), true);
}

Linear::Linear(int in, int out, std::mt19937_64& rng, bool zero_init) {
    if (zero_init)
        w = Tensor::zeros({in, out}, true);
    else
        w = init_uniform({in, out}, in, rng);
    b = Tensor::zeros({out}, true);
}

Tensor Linear::forward(const Tensor& x) const {
    return add_rowwise(matmul(x, w), b);
}

void Linear::collect(const std::string& prefix, ParamMap& out) const {
    out[prefix + ".w"] = w;
    out[prefix + ".b"] = b;
}

Mlp::Mlp(const std::vector<int>& widths, std::mt19937_64& rng, bool zero_init_last) {
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
        bool last = i + 2 == widths.size();
        layers.emplace_back(widths[i], widths[i + 1], rng, zero_init_last && last);
    }
}

Tensor Mlp::forward(const Tensor& x) const {
    Tensor h = x;
    for (size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].forward(h);
        if (i + 1 < layers.size()) h = relu(h);
    }
    return h;
}

void Mlp::collect(const std::string& prefix, ParamMap& out) const {
    for (size_t i = 0; i < layers.size(); ++i)
        layers[i].collect(prefix + ".l" + std::to_string(i), out);
}

Conv2dLayer::Conv2dLayer(int cin, int cout, int k, int stride_, int pad_,
                         std::mt19937_64& rng)
    : stride(stride_), pad(pad_) {
    w = init_uniform({cout, cin, k, k}, (long)cin * k * k, rng);
    b = Tensor::zeros({cout}, true);
}

Tensor Conv2dLayer::forward(const Tensor& x) const {
    return conv2d(x, w, b, stride, pad);
}

void Conv2dLayer::collect(const std::string& prefix, ParamMap& out) const {
    out[prefix + ".w"] = w;
    out[prefix + ".b"] = b;
}

ConvT2dLayer::ConvT2dLayer(int cin, int cout, int k_, std::mt19937_64& rng) : k(k_) {
    w = init_uniform({cin, cout, k, k}, cin, rng);
    b = Tensor::zeros({cout}, true);
}

Tensor ConvT2dLayer::forward(const Tensor& x) const {
    return conv_transpose2d(x, w, b, k);
}

void ConvT2dLayer::collect(const std::string& prefix, ParamMap& out) const {
    out[prefix + ".w"] = w;
    out[prefix + ".b"] = b;
}

Conv3dLayer::Conv3dLayer(int cin, int cout, int k, int stride_, int pad_,
                         std::mt19937_64& rng)
    : stride(stride_), pad(pad_) {
    w = init_uniform({cout, cin, k, k, k}, (long)cin * k * k * k, rng);
    b = Tensor::zeros({cout}, true);
}

Tensor Conv3dLayer::forward(const Tensor& x) const {
    return conv3d(x, w, b, stride, pad);
}

void Conv3dLayer::collect(const std::string& prefix, ParamMap& out) const {
    out[prefix + ".w"] = w;
    out[prefix + ".b"] = b;
}

Adam::Adam(ParamMap params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto& [name, p] : params_) {
        m_[name] = Array::Zero(p.size());
        v_[name] = Array::Zero(p.size());
    }
}

void Adam::step() {
    ++step_count_;
    Scalar bc1 = 1.0 - std::pow(cfg_.beta1, (Scalar)step_count_);
    Scalar bc2 = 1.0 - std::pow(cfg_.beta2, (Scalar)step_count_);
    for (auto& [name, p] : params_) {
        const Array& g = p.grad();
        Array& m = m_[name];
        Array& v = v_[name];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
        Array mhat = m / bc1;
        Array vhat = v / bc2;
        p.values() -= cfg_.lr * mhat / (vhat.sqrt() + cfg_.epsilon);
    }
    zero_grad();
}

void Adam::zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
}

namespace {
constexpr char kMagic[8] = {'L', 'N', 'R', 'C', 'K', 'P', 'T', '1'};
}

void save_checkpoint(const std::string& path, const ParamMap& params,
                     const std::map<std::string, Array>& extra_arrays,
                     const std::map<std::string, std::string>& meta) {
    json header;
    header["version"] = 1;
    header["dtype"] = "float64";
    header["meta"] = meta;
    json entries = json::array();
    // header order == write order
    for (const auto& [name, p] : params)
        entries.push_back({{"name", name}, {"shape", p.shape()}});
    for (const auto& [name, a] : extra_arrays)
        entries.push_back({{"name", name}, {"shape", Shape{(int)a.size()}}});
    header["entries"] = entries;
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write(kMagic, 8);
    uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hs.data(), (std::streamsize)hs.size());
    for (const auto& [name, p] : params)
        f.write(reinterpret_cast<const char*>(p.values().data()),
                (std::streamsize)(p.size() * sizeof(Scalar)));
    for (const auto& [name, a] : extra_arrays)
        f.write(reinterpret_cast<const char*>(a.data()),
                (std::streamsize)(a.size() * sizeof(Scalar)));
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    f.read(hs.data(), (std::streamsize)hlen);
    json header = json::parse(hs);
    if (header.at("dtype") != "float64")
        throw std::runtime_error("unsupported checkpoint dtype");
    Checkpoint ck;
    if (header.contains("meta"))
        ck.meta = header["meta"].get<std::map<std::string, std::string>>();
    for (const auto& e : header.at("entries")) {
        std::string name = e.at("name");
        Shape shape = e.at("shape").get<Shape>();
        Array a(shape_size(shape));
        f.read(reinterpret_cast<char*>(a.data()),
               (std::streamsize)(a.size() * sizeof(Scalar)));
        if (!f) throw std::runtime_error("truncated checkpoint: " + path);
        ck.entries[name] = {shape, std::move(a)};
    }
    return ck;
}

void restore_params(const Checkpoint& ck, ParamMap& params) {
    for (auto& [name, p] : params) {
        auto it = ck.entries.find(name);
        if (it == ck.entries.end())
            throw std::runtime_error("checkpoint missing parameter: " + name);
        if (it->second.first != p.shape())
            throw std::runtime_error("checkpoint shape mismatch for: " + name);
        p.values() = it->second.second;
    }
}

}  // namespace lnr
