#pragma once

#include "layernr/body.hpp"
#include "layernr/imagefeat.hpp"
#include "layernr/voxel.hpp"

namespace lnr {

// Row-wise self-attention over per-view features:
// mv = softmax(query(f) key(f)^T / sqrt(dk)), out = mv val1(f) + val2(f).
struct AttentionBlock {
    Linear key, query, val1, val2;
    int dk = 0;

    AttentionBlock() = default;
    AttentionBlock(int c_in, int dk, int c_out, std::mt19937_64& rng);
    Tensor forward(const Tensor& feats) const;  // [B,C] -> [B,c_out]
    void collect(const std::string& prefix, ParamMap& out) const;
};

struct AlignmentConfig {
    int steps = 2;        // L; requires a pyramid with at least steps+1 levels
    int c2 = 64;          // compact feature width
    int dk1 = 16;
    int grid_res = 16;    // diffusion grid resolution during alignment
    double grid_pad = 0.05;
    int mlp_hidden = 128;
    bool offsets_enabled = true;  // false: parameters pass through unchanged
};

// Per-view projection and sampling of vertex features; behind-camera
// vertices get zero rows. Vertex coordinates are treated as constants.
Tensor embed_vertices(const Eigen::MatrixXd& vertices, const Tensor& plane,
                      const Camera& cam);

struct AlignedHuman {
    BodyParams params;                   // after L correction steps
    Tensor vertices;                     // [V,3], differentiable via params
    std::vector<DiffusedVolume> volumes; // per view, from the final step
    int steps = 0;
    double offsets_norm = 0.0;           // accumulated |delta| for provenance
};

class AlignmentModule {
public:
    AlignmentModule() = default;
    AlignmentModule(const AlignmentConfig& cfg, const BodyTemplate& tmpl,
                    int plane_channels, std::mt19937_64& rng);

    // Scatter per-vertex plane features, query at the downsampled vertex
    // locations, reduce to a [1,c2] row.
    Tensor compact_feature(const Tensor& vertex_feats,
                           const Eigen::MatrixXd& vertices,
                           const std::vector<int>& downsampled,
                           const GridSpec& grid) const;

    // One correction step: fused [1,c2] view summary -> additive offsets.
    BodyParams correct_params(const Tensor& fused, const BodyParams& params,
                              double* offset_norm = nullptr) const;

    // Full loop over steps l = 1..L consuming fuse_levels(l).
    AlignedHuman align(const BodyTemplate& tmpl, const BodyParams& initial,
                       const ImageEncoder& enc,
                       const std::vector<FeaturePyramid>& pyramids,
                       const std::vector<Camera>& cameras) const;

    void collect(const std::string& prefix, ParamMap& out) const;

    const AlignmentConfig& config() const { return cfg_; }
    const VoxelDiffuser& diffuser() const { return diffuser_; }
    AttentionBlock& attention() { return attn_; }
    Mlp& offset_mlp() { return offset_mlp_; }

private:
    AlignmentConfig cfg_;
    std::vector<int> downsampled_;
    Linear reduce_;        // plane channels -> c2, shared across views
    VoxelDiffuser diffuser_;
    AttentionBlock attn_;
    Mlp offset_mlp_;       // [c2 + P] -> hidden -> P, zero-init last
    int param_width_ = 0;
};

// Aligned parameters plus provenance in the body-parameter JSON dialect.
nlohmann::json aligned_to_json(const AlignedHuman& human);

}  // namespace lnr
