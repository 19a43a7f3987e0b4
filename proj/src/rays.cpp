#include "layernr/rays.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace lnr {

std::vector<Ray> make_rays(const Camera& cam, const Eigen::MatrixXd& pixels) {
    if (std::abs(cam.K.determinant()) < 1e-12)
        throw std::invalid_argument("make_rays: singular intrinsics");
    if (pixels.cols() != 2)
        throw std::invalid_argument("make_rays: pixels must be P x 2");
    Mat3 kinv = cam.K.inverse();
    Mat3 rt = cam.R.transpose();
    Vec3 center = cam.center();
    std::vector<Ray> rays(pixels.rows());
    for (long i = 0; i < pixels.rows(); ++i) {
        Ray& r = rays[i];
        r.u = pixels(i, 0);
        r.v = pixels(i, 1);
        r.origin = center;
        r.dir = (rt * (kinv * Vec3(r.u, r.v, 1.0))).normalized();
    }
    return rays;
}

Aabb layer_aabb(const Eigen::MatrixXd& vertices, double pad) {
    if (vertices.rows() == 0 || vertices.cols() != 3)
        throw std::invalid_argument("layer_aabb: need a nonempty N x 3 vertex set");
    Aabb box;
    box.lo = vertices.colwise().minCoeff().array() - pad;
    box.hi = vertices.colwise().maxCoeff().array() + pad;
    return box;
}

std::optional<LayerSegment> intersect(const Ray& ray, const Aabb& box, int layer) {
    double tmin = 0.0, tmax = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        double o = ray.origin[a], d = ray.dir[a];
        if (std::abs(d) < 1e-15) {
            if (o < box.lo[a] || o > box.hi[a]) return std::nullopt;
            continue;
        }
        double t0 = (box.lo[a] - o) / d, t1 = (box.hi[a] - o) / d;
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin >= tmax) return std::nullopt;
    }
    if (!(tmax > tmin) || tmax <= 0.0) return std::nullopt;
    LayerSegment seg;
    seg.layer = layer;
    seg.z_near = tmin;
    seg.z_far = tmax;
    return seg;
}

LayeredPointBatch sample_points(const Ray& ray,
                                const std::vector<LayerSegment>& segments,
                                int samples_per_segment, bool stratified,
                                std::uint64_t seed) {
    if (samples_per_segment < 1)
        throw std::invalid_argument("sample_points: need at least one sample");
    LayeredPointBatch batch;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(0.0, 1.0);
    for (const auto& seg : segments) {
        if (!(seg.z_near > 0.0) || !(seg.z_far > seg.z_near))
            throw std::invalid_argument("sample_points: malformed segment");
        double span = seg.z_far - seg.z_near;
        double delta = span / samples_per_segment;
        for (int i = 0; i < samples_per_segment; ++i) {
            double frac = stratified ? jitter(rng) : 0.5;
            SamplePoint p;
            p.z = seg.z_near + (i + frac) * delta;
            p.x = ray.origin + p.z * ray.dir;
            p.layer = seg.layer;
            p.delta = delta;
            p.seg_far = seg.z_far;
            batch.points.push_back(p);
        }
    }
    std::sort(batch.points.begin(), batch.points.end(),
              [](const SamplePoint& a, const SamplePoint& b) {
                  return a.z != b.z ? a.z < b.z : a.layer < b.layer;
              });
    return batch;
}

}  // namespace lnr
