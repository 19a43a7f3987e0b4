#include "layernr/imagefeat.hpp"

#include <stdexcept>

namespace lnr {

ImageEncoder::ImageEncoder(const EncoderConfig& c, std::mt19937_64& rng) : cfg(c) {
    stem = Conv2dLayer(3, c.fine, 3, 1, 1, rng);
    down1 = Conv2dLayer(c.fine, c.mid, 3, 2, 1, rng);
    down2 = Conv2dLayer(c.mid, c.coarse, 3, 2, 1, rng);
    up[0] = ConvT2dLayer(c.coarse, c.coarse, 2, rng);  // level 0 -> level 1 extent
    up[1] = ConvT2dLayer(c.mid, c.mid, 2, rng);        // level 1 -> level 2 extent
    mix[0] = Conv2dLayer(c.coarse + c.mid, c.fused, 1, 1, 0, rng);
    mix[1] = Conv2dLayer(c.mid + c.fine, c.fused, 1, 1, 0, rng);
}

FeaturePyramid ImageEncoder::encode(const Tensor& image) const {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("encode: expected [3,H,W] RGB image");
    if (image.dim(1) % 4 != 0 || image.dim(2) % 4 != 0)
        throw std::invalid_argument("encode: extents must be divisible by 4");
    Tensor f2 = relu(stem.forward(image));   // full res
    Tensor f1 = relu(down1.forward(f2));     // 1/2
    Tensor f0 = relu(down2.forward(f1));     // 1/4
    FeaturePyramid pyr;
    pyr.levels = {f0, f1, f2};
    return pyr;
}

Tensor ImageEncoder::fuse_levels(const FeaturePyramid& pyr, int l) const {
    if (l < 1 || l >= (int)pyr.levels.size())
        throw std::invalid_argument("fuse_levels: level must be in [1, T-1]");
    Tensor lifted = up[l - 1].forward(pyr.levels[l - 1]);
    return mix[l - 1].forward(concat({lifted, pyr.levels[l]}, 0));
}

void ImageEncoder::collect(const std::string& prefix, ParamMap& out) const {
    stem.collect(prefix + ".stem", out);
    down1.collect(prefix + ".down1", out);
    down2.collect(prefix + ".down2", out);
    up[0].collect(prefix + ".up1", out);
    up[1].collect(prefix + ".up2", out);
    mix[0].collect(prefix + ".mix1", out);
    mix[1].collect(prefix + ".mix2", out);
}

}  // namespace lnr
