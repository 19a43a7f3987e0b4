#pragma once

#include "layernr/camera.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace lnr {

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 dir = Vec3::UnitZ();  // unit norm
    double u = 0, v = 0;       // source pixel
};

struct Aabb {
    Vec3 lo, hi;
    bool contains(const Vec3& p, double eps = 0.0) const {
        return (p.array() >= lo.array() - eps).all() &&
               (p.array() <= hi.array() + eps).all();
    }
};

struct LayerSegment {
    int layer = 0;
    double z_near = 0, z_far = 0;  // 0 < z_near < z_far
};

struct SamplePoint {
    Vec3 x;
    double z = 0;
    int layer = 0;
    double delta = 0;    // inter-sample interval of the owning segment
    double seg_far = 0;  // z_far of the owning segment, for compositing spans
};

// Sorted by depth ascending, ties broken by layer id.
struct LayeredPointBatch {
    std::vector<SamplePoint> points;
};

// One ray per (u,v) row, through that pixel position; throws on singular K.
std::vector<Ray> make_rays(const Camera& cam, const Eigen::MatrixXd& pixels);

// Componentwise vertex min/max padded by `pad` on all sides.
Aabb layer_aabb(const Eigen::MatrixXd& vertices, double pad);

// Slab intersection clipped to depths > 0; nullopt when the ray misses.
std::optional<LayerSegment> intersect(const Ray& ray, const Aabb& box, int layer);

// Per segment: stratified-uniform depths (training) or midpoint-uniform
// (eval); all segments merged, globally sorted by (z, layer).
LayeredPointBatch sample_points(const Ray& ray,
                                const std::vector<LayerSegment>& segments,
                                int samples_per_segment, bool stratified,
                                std::uint64_t seed);

}  // namespace lnr
