#include "layernr/render.hpp"

#include <stdexcept>

namespace lnr {

Model::Model(const ModelConfig& c, const BodyTemplate& b, std::mt19937_64& rng)
    : cfg(c), body(b) {
    encoder = ImageEncoder(cfg.encoder, rng);
    align = AlignmentModule(cfg.align, body, cfg.encoder.fused, rng);
    cfg.fusion.c1 = cfg.encoder.fused;
    cfg.fusion.c_anchor = cfg.encoder.fused;
    field = RadianceField(cfg.fusion, rng);
}

ParamMap Model::params() const {
    ParamMap pm;
    encoder.collect("encoder", pm);
    align.collect("align", pm);
    field.collect("field", pm);
    return pm;
}

namespace {

// Merged-sequence deltas: distance to the next sample, capped at the sample's
// own remaining segment span; the last sample uses the remaining span.
void finalize_deltas(const std::vector<SamplePoint>& pts, Array& delta, long base) {
    long n = (long)pts.size();
    for (long i = 0; i < n; ++i) {
        double remaining = std::max(pts[i].seg_far - pts[i].z, 0.0);
        double d = i + 1 < n ? std::min(pts[i + 1].z - pts[i].z, remaining)
                             : remaining;
        delta[base + i] = d;
    }
}

}  // namespace

RayBundle bundle_rays(const std::vector<Ray>& rays, const std::vector<Aabb>& boxes,
                      int samples_per_segment, bool stratified,
                      std::uint64_t seed) {
    RayBundle bundle;
    bundle.rays = rays;
    std::vector<SamplePoint> all;
    bundle.offsets.push_back(0);
    for (size_t r = 0; r < rays.size(); ++r) {
        std::vector<LayerSegment> segs;
        for (size_t h = 0; h < boxes.size(); ++h) {
            auto seg = intersect(rays[r], boxes[h], (int)h);
            if (seg) segs.push_back(*seg);
        }
        LayeredPointBatch batch = sample_points(rays[r], segs, samples_per_segment,
                                                stratified, seed + r);
        all.insert(all.end(), batch.points.begin(), batch.points.end());
        bundle.offsets.push_back((int)all.size());
    }
    long M = (long)all.size();
    bundle.points.resize(M, 3);
    bundle.layers.resize(M);
    bundle.z.resize(M);
    bundle.delta.resize(M);
    bundle.q_dirs.resize(M * 3);
    for (long i = 0; i < M; ++i) {
        bundle.points.row(i) = all[i].x;
        bundle.layers[i] = all[i].layer;
        bundle.z[i] = all[i].z;
    }
    for (size_t r = 0; r < rays.size(); ++r) {
        long lo = bundle.offsets[r], hi = bundle.offsets[r + 1];
        std::vector<SamplePoint> span(all.begin() + lo, all.begin() + hi);
        finalize_deltas(span, bundle.delta, lo);
        for (long i = lo; i < hi; ++i)
            for (int a = 0; a < 3; ++a) bundle.q_dirs[i * 3 + a] = rays[r].dir[a];
    }
    return bundle;
}

CompositeResult composite_bundle(const RayBundle& bundle, const Tensor& sigma,
                                 const Tensor& color, const Vec3& background) {
    long M = bundle.points.rows();
    int R = (int)bundle.rays.size();
    Array bgv(3);
    for (int a = 0; a < 3; ++a) bgv[a] = background[a];
    Tensor bg = Tensor::from_array({1, 3}, bgv);
    CompositeResult out;
    if (M == 0) {
        out.rgb = concat(std::vector<Tensor>((size_t)R, bg), 0);
        out.opacity = Tensor::zeros({R});
        return out;
    }
    if (sigma.size() != M || color.dim(0) != (int)M)
        throw std::invalid_argument("composite: sample count mismatch");
    Tensor sd = sigma * Tensor::from_array({(int)M}, bundle.delta);
    Tensor alpha = 1.0 - texp(-sd);
    Tensor trans = texp(-segment_excl_cumsum(sd, bundle.offsets));
    Tensor w = trans * alpha;
    Tensor rgb = segment_sum(mul_colwise(color, w), bundle.offsets);  // [R,3]
    Tensor t_end = texp(-segment_sum(sd, bundle.offsets));            // [R]
    out.rgb = rgb + matmul(reshape(t_end, {R, 1}), bg);
    out.opacity = 1.0 - t_end;
    return out;
}

CompositeResult composite(const LayeredPointBatch& batch, const Tensor& sigma,
                          const Tensor& color, const Vec3& background) {
    long M = (long)batch.points.size();
    for (long i = 1; i < M; ++i)
        if (batch.points[i].z < batch.points[i - 1].z)
            throw std::invalid_argument("composite: batch must be depth-sorted");
    RayBundle bundle;
    bundle.rays.resize(1);
    bundle.offsets = {0, (int)M};
    bundle.points.resize(M, 3);
    bundle.z.resize(M);
    bundle.delta.resize(M);
    for (long i = 0; i < M; ++i) {
        bundle.points.row(i) = batch.points[i].x;
        bundle.z[i] = batch.points[i].z;
    }
    finalize_deltas(batch.points, bundle.delta, 0);
    return composite_bundle(bundle, sigma, color, background);
}

SceneEval evaluate_scene(const Model& model, const SceneFrame& frame) {
    if (frame.num_input_views < 1 ||
        frame.num_input_views > (int)frame.cameras.size())
        throw std::invalid_argument("evaluate_scene: bad input view count");
    SceneEval ev;
    ev.cameras.assign(frame.cameras.begin(),
                      frame.cameras.begin() + frame.num_input_views);
    ev.images.assign(frame.images.begin(),
                     frame.images.begin() + frame.num_input_views);
    for (int b = 0; b < frame.num_input_views; ++b)
        ev.pyramids.push_back(model.encoder.encode(frame.images[b]));
    for (int b = 0; b < frame.num_input_views; ++b)
        ev.planes.push_back(
            model.encoder.fuse_levels(ev.pyramids[b], model.cfg.align.steps));
    for (const auto& theta0 : frame.humans) {
        AlignedHuman h = model.align.align(model.body, theta0, model.encoder,
                                           ev.pyramids, ev.cameras);
        Eigen::MatrixXd ve = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3,
                                                            Eigen::RowMajor>>(
            h.vertices.values().data(), model.body.num_vertices(), 3);
        ev.boxes.push_back(layer_aabb(ve, model.cfg.aabb_pad));
        ev.humans.push_back(std::move(h));
    }
    return ev;
}

CompositeResult render_rays(const Model& model, const SceneEval& scene,
                            const std::vector<Ray>& rays, bool stratified,
                            std::uint64_t seed, bool layered) {
    std::vector<Aabb> boxes = scene.boxes;
    if (!layered && boxes.size() != 1)
        throw std::invalid_argument("single-layer path requires exactly one human");
    RayBundle bundle;
    if (layered) {
        bundle = bundle_rays(rays, boxes, model.cfg.samples_per_segment,
                             stratified, seed);
    } else {
        // direct path: one box, no cross-layer merge involved
        bundle = bundle_rays(rays, {boxes[0]}, model.cfg.samples_per_segment,
                             stratified, seed);
    }
    long M = bundle.points.rows();
    if (M == 0) {
        Array bgv(3);
        for (int a = 0; a < 3; ++a) bgv[a] = model.cfg.background[a];
        CompositeResult out;
        out.rgb = concat(std::vector<Tensor>((size_t)rays.size(),
                                             Tensor::from_array({1, 3}, bgv)),
                         0);
        out.opacity = Tensor::zeros({(int)rays.size()});
        return out;
    }
    std::vector<std::vector<DiffusedVolume>> volumes;
    for (const auto& h : scene.humans) volumes.push_back(h.volumes);
    PointFeatures pf = model.field.gather_features(
        bundle.points, bundle.layers, scene.planes, volumes, scene.cameras,
        scene.images);
    FusedFeature ff = model.field.fuse(pf);
    Tensor sigma = model.field.density(ff.avg);
    Tensor qd = Tensor::from_array({(int)M, 3}, bundle.q_dirs);
    Tensor rgb = model.field.color(ff, pf, qd);
    return composite_bundle(bundle, sigma, rgb, model.cfg.background);
}

Tensor render_image(const Model& model, const SceneFrame& frame,
                    const Camera& query, int width, int height, int ray_batch,
                    bool layered) {
    NoGradGuard guard;
    SceneEval scene = evaluate_scene(model, frame);
    Array out(3L * height * width);
    out.setZero();
    std::vector<std::pair<int, int>> pixels;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) pixels.push_back({x, y});
    for (size_t start = 0; start < pixels.size(); start += ray_batch) {
        size_t stop = std::min(pixels.size(), start + ray_batch);
        Eigen::MatrixXd uv(stop - start, 2);
        for (size_t i = start; i < stop; ++i) {
            uv(i - start, 0) = pixels[i].first + 0.5;
            uv(i - start, 1) = pixels[i].second + 0.5;
        }
        auto rays = make_rays(query, uv);
        CompositeResult res =
            render_rays(model, scene, rays, /*stratified=*/false, 0, layered);
        for (size_t i = start; i < stop; ++i) {
            int x = pixels[i].first, y = pixels[i].second;
            for (int c = 0; c < 3; ++c)
                out[(long)c * height * width + (long)y * width + x] =
                    res.rgb.values()[(i - start) * 3 + c];
        }
    }
    return Tensor::from_array({3, height, width}, std::move(out));
}

LossTerms compute_loss(const Tensor& pred, const Tensor& gt,
                       const std::vector<Tensor>& keypoint_terms,
                       const std::vector<BodyParams>& thetas,
                       const LossWeights& w) {
    if (pred.shape() != gt.shape())
        throw std::invalid_argument("loss: prediction/target shape mismatch");
    LossTerms t;
    Tensor diff = pred - gt.detach();
    t.photometric = mean_all(diff * diff);
    t.keypoint = Tensor::zeros({1});
    for (const auto& k : keypoint_terms) t.keypoint = t.keypoint + reshape(k, {1});
    Tensor reg_sq = Tensor::zeros({1});
    for (const auto& th : thetas) {
        Tensor flat = th.flat();
        reg_sq = reg_sq + reshape(sum_all(flat * flat), {1});
    }
    t.regularizer = tsqrt(reg_sq + 1e-24);
    t.total = reshape(t.photometric * w.ph, {1}) + t.keypoint * w.kpts +
              t.regularizer * w.reg;
    return t;
}

}  // namespace lnr
