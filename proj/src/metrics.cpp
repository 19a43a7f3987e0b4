#include "layernr/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace lnr {

double psnr(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("psnr: shape mismatch");
    double mse = (a.values() - b.values()).square().mean();
    if (mse < 1e-10) return 99.0;
    return -10.0 * std::log10(mse);
}

namespace {

std::vector<double> gaussian_window(int half, double sigma) {
    int n = 2 * half + 1;
    std::vector<double> w(n);
    double sum = 0;
    for (int i = 0; i < n; ++i) {
        double d = i - half;
        w[i] = std::exp(-d * d / (2 * sigma * sigma));
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("ssim: shape mismatch");
    int C, H, W;
    if (a.ndim() == 2) {
        C = 1;
        H = a.dim(0);
        W = a.dim(1);
    } else if (a.ndim() == 3) {
        C = a.dim(0);
        H = a.dim(1);
        W = a.dim(2);
    } else {
        throw std::invalid_argument("ssim: expected [H,W] or [C,H,W]");
    }
    const int half = 5;
    if (H < 2 * half + 1 || W < 2 * half + 1)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    auto win = gaussian_window(half, 1.5);
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

    double total = 0;
    long windows = 0;
    for (int c = 0; c < C; ++c) {
        const double* pa = a.values().data() + (long)c * H * W;
        const double* pb = b.values().data() + (long)c * H * W;
        for (int y = half; y < H - half; ++y) {
            for (int x = half; x < W - half; ++x) {
                double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
                for (int dy = -half; dy <= half; ++dy) {
                    for (int dx = -half; dx <= half; ++dx) {
                        double w = win[dy + half] * win[dx + half];
                        double sa = pa[(y + dy) * W + (x + dx)];
                        double sb = pb[(y + dy) * W + (x + dx)];
                        ma += w * sa;
                        mb += w * sb;
                        va += w * sa * sa;
                        vb += w * sb * sb;
                        cov += w * sa * sb;
                    }
                }
                va -= ma * ma;
                vb -= mb * mb;
                cov -= ma * mb;
                total += (2 * ma * mb + c1) * (2 * cov + c2) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++windows;
            }
        }
    }
    return total / windows;
}

}  // namespace lnr
