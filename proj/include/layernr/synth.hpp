#pragma once

#include "layernr/render.hpp"

namespace lnr {

// Analytic scene element: constant density and color inside a capsule.
struct CapsuleShape {
    Vec3 a, b;
    double radius = 0;
    double sigma = 0;
    Vec3 color = Vec3::Zero();
};

// Depth interval with constant density/color along a ray.
struct ConstInterval {
    double z0 = 0, z1 = 0;
    double sigma = 0;
    Vec3 color = Vec3::Zero();
};

// Entry/exit depths of a ray through a capsule, clipped to z > 0.
std::optional<std::pair<double, double>> ray_capsule(const Ray& ray,
                                                     const CapsuleShape& cap);

// Exact transmittance integral over possibly-overlapping constant intervals;
// overlapping densities add, colors blend density-weighted.
Vec3 integrate_piecewise(const std::vector<ConstInterval>& intervals,
                         const Vec3& background);

struct SynthConfig {
    int humans = 2;
    int views = 3;            // network input views
    int query_views = 2;      // extra training query targets
    int held_out_views = 1;   // final evaluation views
    int image_size = 64;
    double pose_noise = 0.05;   // radians, pre-fit misalignment
    double trans_noise = 0.02;  // meters
    double truth_pose_spread = 0.12;
    bool perturb = true;
};

struct SyntheticScene {
    SceneFrame frame;                                 // theta0 = perturbed truth
    std::vector<BodyParams> truth;                    // theta*
    std::vector<std::vector<CapsuleShape>> capsules;  // posed, per human
    int held_out_view = -1;                           // camera index
    SynthConfig cfg;
};

// Deterministic scene from a seed: layout, cameras on a ring (input views
// first, then query, then held-out), oracle-rendered images, keypoints.
SyntheticScene synth_scene(std::uint64_t seed, const SynthConfig& cfg,
                           const BodyTemplate& tmpl);

// Closed-form render of the analytic scene. [3,H,W]
Tensor oracle_render(const SyntheticScene& scene, const Camera& cam, int width,
                     int height, const Vec3& background);

}  // namespace lnr
