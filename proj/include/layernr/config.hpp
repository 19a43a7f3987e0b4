#pragma once

#include "layernr/render.hpp"
#include "layernr/synth.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace lnr {

struct TrainConfig {
    long iterations = 5000;
    int ray_batch = 128;
    double lr = 5e-4;
    double lr_final = -1;   // > 0: cosine-decay the rate to this value
    double ema_decay = -1;  // > 0: checkpoint an exponential moving average
                            // of the weights instead of the raw iterates
    double fg_fraction = -1;  // > 0: fraction of each ray batch drawn from
                              // non-black pixels instead of uniformly
    long checkpoint_every = 500;
    long log_every = 50;
    LossWeights loss;
};

// The single declarative document driving a run. Every field has a default;
// parsing rejects unknown keys anywhere in the tree.
struct RunConfig {
    std::uint64_t seed = 0;
    SynthConfig synth;
    ModelConfig model;
    TrainConfig train;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_run_config(const std::string& path);

// FNV-1a of the canonical serialization; recorded in every output artifact.
std::string config_hash(const RunConfig& cfg);

}  // namespace lnr
