#pragma once

#include "layernr/camera.hpp"
#include "layernr/nn.hpp"

namespace lnr {

// Channel widths per pyramid level; level 0 is coarsest, level T-1 is full
// resolution. Fused planes carry `fused` channels.
struct EncoderConfig {
    int coarse = 64;  // level 0, 1/4 resolution
    int mid = 32;     // level 1, 1/2 resolution
    int fine = 16;    // level 2, full resolution
    int fused = 32;
};

struct FeaturePyramid {
    std::vector<Tensor> levels;  // resolution strictly increasing with level
    int view = -1;
};

// Small strided convolutional encoder with taps at strides 4/2/1 plus the
// learned upsample-concat-mix fusion between adjacent levels.
struct ImageEncoder {
    EncoderConfig cfg;
    Conv2dLayer stem;        // 3 -> fine, stride 1
    Conv2dLayer down1;       // fine -> mid, stride 2
    Conv2dLayer down2;       // mid -> coarse, stride 2
    ConvT2dLayer up[2];      // up[l-1] lifts level l-1 to level l's extent
    Conv2dLayer mix[2];      // 1x1 mixers to cfg.fused channels

    ImageEncoder() = default;
    ImageEncoder(const EncoderConfig& cfg, std::mt19937_64& rng);

    // image: [3,H,W] in [0,1], H and W divisible by 4.
    FeaturePyramid encode(const Tensor& image) const;
    // 1 <= l <= 2; upsample level l-1, concat with level l, 1x1 mix.
    Tensor fuse_levels(const FeaturePyramid& pyr, int l) const;

    void collect(const std::string& prefix, ParamMap& out) const;
};

// Loads an 8-bit RGB(A) PNG as [3,H,W] in [0,1]; writes the same layout.
Tensor load_image_png(const std::string& path);
void save_image_png(const std::string& path, const Tensor& image);

}  // namespace lnr
