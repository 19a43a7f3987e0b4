#pragma once

#include "layernr/rays.hpp"
#include "layernr/voxel.hpp"

namespace lnr {

struct FusionConfig {
    int c1 = 32;          // image-aligned feature width (fused plane channels)
    int c_anchor = 32;    // human-anchored feature width (volume channels)
    int fused = 64;       // width of the attended features
    int dk1 = 16;         // self/cross attention key width
    int dk2 = 16;         // rgb attention key width
    int sigma_width = 128;
    int sigma_depth = 4;
    int color_width = 64; // hidden width of both color MLPs
    int ctilde = 64;      // intermediate color feature width
    int l_dir = 4;        // positional encoding bands for view directions
    int l_rgb = 2;        // positional encoding bands for raw RGB
    bool attention = true;  // false: uniform view averaging in both stages
};

// Everything the radiance field needs about a batch of M points across B
// views. View directions are geometry, held constant for differentiation.
struct PointFeatures {
    Tensor p;     // [M,B,c1] image-aligned
    Tensor g;     // [M,B,c_anchor] human-anchored
    Tensor rgb;   // [M,B,3] raw colors in [0,1], constant
    Tensor dirs;  // [M,B,3] unit camera-to-point directions, constant
    int views = 0;
};

struct FusedFeature {
    Tensor per_view;  // [M,B,fused]
    Tensor avg;       // [M,fused]
};

// Eq.-1-form attention applied independently per point: queries (and the
// residual value path) from q_src, keys and first values from kv_src.
struct BatchedAttention {
    Linear key, query, val1, val2;
    int dk = 0;

    BatchedAttention() = default;
    BatchedAttention(int q_width, int kv_width, int dk, int out, std::mt19937_64& rng);
    // q_src: [M,B,q_width]; kv_src: [M,Bk,kv_width] -> [M,B,out].
    // uniform replaces the attention weights by a plain view average.
    Tensor forward(const Tensor& q_src, const Tensor& kv_src,
                   bool uniform = false) const;
    void collect(const std::string& prefix, ParamMap& out) const;
};

class RadianceField {
public:
    RadianceField() = default;
    RadianceField(const FusionConfig& cfg, std::mt19937_64& rng);

    // points/layers from a LayeredPointBatch; planes: per view [c1,H,W];
    // volumes: per human, per view; images: per view [3,H,W].
    PointFeatures gather_features(
        const Eigen::MatrixXd& points, const std::vector<int>& layers,
        const std::vector<Tensor>& planes,
        const std::vector<std::vector<DiffusedVolume>>& volumes,
        const std::vector<Camera>& cameras,
        const std::vector<Tensor>& images) const;

    FusedFeature fuse(const PointFeatures& pf) const;
    Tensor density(const Tensor& g_avg) const;  // [M,fused] -> [M]
    // q_dirs: per-point unit query-ray directions, [M,3] constant.
    Tensor color(const FusedFeature& ff, const PointFeatures& pf,
                 const Tensor& q_dirs) const;  // [M,3]
    // convenience for a direction shared by the whole batch
    Tensor color(const FusedFeature& ff, const PointFeatures& pf,
                 const Vec3& q) const;

    void collect(const std::string& prefix, ParamMap& out) const;
    const FusionConfig& config() const { return cfg_; }

private:
    FusionConfig cfg_;
    BatchedAttention self_attn_;   // over g (+) dir, per point
    BatchedAttention cross_attn_;  // queries ghat, keys/values p
    Mlp sigma_mlp_;
    Mlp c1_mlp_;                   // g_avg (+) enc(q) (+) mean_b p -> ctilde
    Linear rgb_query_, rgb_key_;   // 3 -> dk2 each
    Linear rgb_val_;               // ctilde + enc(rgb) -> ctilde
    Mlp c2_mlp_;                   // ctilde -> 3 (pre-sigmoid)
};

}  // namespace lnr
