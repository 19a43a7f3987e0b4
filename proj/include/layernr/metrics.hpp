#pragma once

#include "layernr/tensor.hpp"

namespace lnr {

// Peak signal-to-noise ratio in dB for [0,1] images of identical shape;
// capped at 99 dB when the MSE drops below 1e-10.
double psnr(const Tensor& a, const Tensor& b);

// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), standard
// constants, channels averaged. Inputs [C,H,W] (or [H,W]) in [0,1].
double ssim(const Tensor& a, const Tensor& b);

}  // namespace lnr
