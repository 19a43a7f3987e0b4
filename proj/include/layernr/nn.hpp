#pragma once

#include "layernr/ops.hpp"

#include <map>
#include <random>
#include <string>

namespace lnr {

// Named learnable parameters, ordered by name for stable serialization.
using ParamMap = std::map<std::string, Tensor>;

// Uniform fan-in init: U(-sqrt(1/fan_in), sqrt(1/fan_in)).
Tensor init_uniform(const Shape& shape, long fan_in, std::mt19937_64& rng);

struct Linear {
    Tensor w;  // [in, out]
    Tensor b;  // [out]

    Linear() = default;
    Linear(int in, int out, std::mt19937_64& rng, bool zero_init = false);
    Tensor forward(const Tensor& x) const;  // x: [N, in]
    void collect(const std::string& prefix, ParamMap& out) const;
    int in_dim() const { return w.dim(0); }
    int out_dim() const { return w.dim(1); }
};

// Fully connected stack with ReLU between layers (none after the last).
struct Mlp {
    std::vector<Linear> layers;

    Mlp() = default;
    Mlp(const std::vector<int>& widths, std::mt19937_64& rng,
        bool zero_init_last = false);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamMap& out) const;
};

struct Conv2dLayer {
    Tensor w, b;
    int stride = 1, pad = 0;

    Conv2dLayer() = default;
    Conv2dLayer(int cin, int cout, int k, int stride, int pad, std::mt19937_64& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamMap& out) const;
};

struct ConvT2dLayer {
    Tensor w, b;
    int k = 2;

    ConvT2dLayer() = default;
    ConvT2dLayer(int cin, int cout, int k, std::mt19937_64& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamMap& out) const;
};

struct Conv3dLayer {
    Tensor w, b;
    int stride = 1, pad = 0;

    Conv3dLayer() = default;
    Conv3dLayer(int cin, int cout, int k, int stride, int pad, std::mt19937_64& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamMap& out) const;
};

struct AdamConfig {
    Scalar lr = 5e-4;
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar epsilon = 1e-8;
};

// Standard Adam with bias correction; moments keyed by parameter name.
class Adam {
public:
    Adam() = default;
    Adam(ParamMap params, AdamConfig cfg);

    // Applies one update from the gradients currently stored on the
    // parameters, then zeroes them.
    void step();
    void zero_grad();

    long step_count() const { return step_count_; }
    const AdamConfig& config() const { return cfg_; }
    void set_lr(Scalar lr) { cfg_.lr = lr; }
    ParamMap& params() { return params_; }

    // Moment arrays exposed for checkpointing.
    std::map<std::string, Array>& first_moment() { return m_; }
    std::map<std::string, Array>& second_moment() { return v_; }
    void set_step_count(long n) { step_count_ = n; }

private:
    ParamMap params_;
    AdamConfig cfg_;
    std::map<std::string, Array> m_, v_;
    long step_count_ = 0;
};

// Checkpoint container: magic + JSON header (names, shapes, dtype, extras)
// followed by little-endian float64 blocks in header order.
void save_checkpoint(const std::string& path, const ParamMap& params,
                     const std::map<std::string, Array>& extra_arrays,
                     const std::map<std::string, std::string>& meta);
struct Checkpoint {
    std::map<std::string, std::pair<Shape, Array>> entries;
    std::map<std::string, std::string> meta;
};
Checkpoint load_checkpoint(const std::string& path);
// Copies values from a checkpoint into an existing parameter set; every
// parameter must be present with a matching shape.
void restore_params(const Checkpoint& ck, ParamMap& params);

}  // namespace lnr
