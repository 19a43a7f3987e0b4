#pragma once

#include "layernr/alignment.hpp"
#include "layernr/fusion.hpp"
#include "layernr/rays.hpp"

namespace lnr {

struct LossWeights {
    double ph = 1.0;
    double kpts = 0.01;
    double reg = 0.001;
};

struct ModelConfig {
    EncoderConfig encoder;
    AlignmentConfig align;
    FusionConfig fusion;  // c1 and c_anchor are overwritten to encoder.fused
    int samples_per_segment = 24;
    double aabb_pad = 0.05;
    Vec3 background = Vec3::Zero();
};

// The full network: encoder, alignment loop, radiance field.
struct Model {
    ModelConfig cfg;
    BodyTemplate body;
    ImageEncoder encoder;
    AlignmentModule align;
    RadianceField field;

    Model() = default;
    Model(const ModelConfig& cfg, const BodyTemplate& body, std::mt19937_64& rng);
    ParamMap params() const;
};

// One observed multi-view frame with pre-fitted body parameters.
struct SceneFrame {
    std::vector<Camera> cameras;
    std::vector<Tensor> images;          // per view, [3,H,W] in [0,1]
    std::vector<BodyParams> humans;      // pre-fitted parameters per human
    // keypoints: [view][human] -> J x 2 pixels / J confidences
    std::vector<std::vector<Eigen::MatrixXd>> kp_uv;
    std::vector<std::vector<Eigen::VectorXd>> kp_conf;
    int num_input_views = 0;  // views [0, num_input_views) feed the network
};

// A flattened batch of sample points across many rays, ready for one fused
// radiance evaluation and segmented compositing.
struct RayBundle {
    std::vector<Ray> rays;
    Eigen::MatrixXd points;    // [M,3]
    std::vector<int> layers;   // per point
    Array z, delta;            // per point; delta per the merged-depth rule
    Array q_dirs;              // [M*3] per-point query direction
    std::vector<int> offsets;  // R+1 segment offsets into the M points
};

// Intersect each ray with every layer box, sample, merge, and compute the
// merged-sequence deltas (capped at each sample's remaining segment span).
RayBundle bundle_rays(const std::vector<Ray>& rays, const std::vector<Aabb>& boxes,
                      int samples_per_segment, bool stratified, std::uint64_t seed);

// sigma: [M]; color: [M,3]; returns rgb [R,3] and opacity [R].
struct CompositeResult {
    Tensor rgb;
    Tensor opacity;
};
CompositeResult composite_bundle(const RayBundle& bundle, const Tensor& sigma,
                                 const Tensor& color, const Vec3& background);

// Single-ray form over an already-sampled batch; throws if unsorted.
CompositeResult composite(const LayeredPointBatch& batch, const Tensor& sigma,
                          const Tensor& color, const Vec3& background);

// Per-frame forward state reused across ray batches.
struct SceneEval {
    std::vector<Camera> cameras;      // the frame's input views
    std::vector<Tensor> images;
    std::vector<FeaturePyramid> pyramids;
    std::vector<Tensor> planes;       // final-level fused plane per view
    std::vector<AlignedHuman> humans;
    std::vector<Aabb> boxes;
};
SceneEval evaluate_scene(const Model& model, const SceneFrame& frame);

// Renders a ray batch through gather -> fuse -> sigma/color -> composite.
// layered = false uses a direct single-layer path (requires one human).
CompositeResult render_rays(const Model& model, const SceneEval& scene,
                            const std::vector<Ray>& rays, bool stratified,
                            std::uint64_t seed, bool layered = true);

// Full image render in eval mode (midpoint sampling, no gradients). [3,H,W]
Tensor render_image(const Model& model, const SceneFrame& frame,
                    const Camera& query, int width, int height,
                    int ray_batch = 1024, bool layered = true);

struct LossTerms {
    Tensor total, photometric, keypoint, regularizer;
};
// pred/gt: [R,3]; keypoint terms are precomputed per human-view losses.
LossTerms compute_loss(const Tensor& pred, const Tensor& gt,
                       const std::vector<Tensor>& keypoint_terms,
                       const std::vector<BodyParams>& thetas,
                       const LossWeights& w);

}  // namespace lnr
