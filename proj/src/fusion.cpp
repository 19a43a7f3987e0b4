#include "layernr/fusion.hpp"

#include <stdexcept>

namespace lnr {

namespace {

// Apply a Linear over the last axis of a [M,B,F] tensor.
Tensor apply3(const Linear& lin, const Tensor& x) {
    int m = x.dim(0), b = x.dim(1);
    Tensor flat = reshape(x, {m * b, x.dim(2)});
    return reshape(lin.forward(flat), {m, b, lin.out_dim()});
}

}  // namespace

BatchedAttention::BatchedAttention(int q_width, int kv_width, int dk_, int out,
                                   std::mt19937_64& rng)
    : key(kv_width, dk_, rng),
      query(q_width, dk_, rng),
      val1(kv_width, out, rng),
      val2(q_width, out, rng),
      dk(dk_) {}

Tensor BatchedAttention::forward(const Tensor& q_src, const Tensor& kv_src,
                                 bool uniform) const {
    Tensor q = apply3(query, q_src);
    Tensor k = apply3(key, kv_src);
    Tensor scores = bmm(q, k, /*trans_b=*/true) / std::sqrt((double)dk);
    if (uniform) scores = scores.detach() * 0.0;
    Tensor att = softmax(scores, 2);
    return bmm(att, apply3(val1, kv_src)) + apply3(val2, q_src);
}

void BatchedAttention::collect(const std::string& prefix, ParamMap& out) const {
    key.collect(prefix + ".key", out);
    query.collect(prefix + ".query", out);
    val1.collect(prefix + ".val1", out);
    val2.collect(prefix + ".val2", out);
}

RadianceField::RadianceField(const FusionConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg) {
    self_attn_ = BatchedAttention(cfg.c_anchor + 3, cfg.c_anchor + 3, cfg.dk1,
                                  cfg.fused, rng);
    cross_attn_ = BatchedAttention(cfg.fused, cfg.c1, cfg.dk1, cfg.fused, rng);
    std::vector<int> sw{cfg.fused};
    for (int i = 0; i < cfg.sigma_depth; ++i) sw.push_back(cfg.sigma_width);
    sw.push_back(1);
    sigma_mlp_ = Mlp(sw, rng);
    int enc_dir = 6 * cfg.l_dir + 3, enc_rgb = 6 * cfg.l_rgb + 3;
    c1_mlp_ = Mlp({cfg.fused + enc_dir + cfg.c1, cfg.color_width, cfg.ctilde}, rng);
    rgb_query_ = Linear(3, cfg.dk2, rng);
    rgb_key_ = Linear(3, cfg.dk2, rng);
    rgb_val_ = Linear(cfg.ctilde + enc_rgb, cfg.ctilde, rng);
    c2_mlp_ = Mlp({cfg.ctilde, cfg.color_width, 3}, rng);
}

PointFeatures RadianceField::gather_features(
    const Eigen::MatrixXd& points, const std::vector<int>& layers,
    const std::vector<Tensor>& planes,
    const std::vector<std::vector<DiffusedVolume>>& volumes,
    const std::vector<Camera>& cameras, const std::vector<Tensor>& images) const {
    long M = points.rows();
    int B = (int)cameras.size();
    if ((long)layers.size() != M)
        throw std::invalid_argument("gather_features: one layer id per point");
    if ((int)planes.size() != B || (int)images.size() != B)
        throw std::invalid_argument("gather_features: per-view input count mismatch");
    int H = (int)volumes.size();
    for (const auto& per_view : volumes)
        if ((int)per_view.size() != B)
            throw std::invalid_argument("gather_features: volumes must be per human per view");

    // group point rows by layer for batched volume queries
    std::vector<std::vector<int>> by_layer(H);
    for (long i = 0; i < M; ++i) {
        if (layers[i] < 0 || layers[i] >= H)
            throw std::invalid_argument("gather_features: layer id out of range");
        by_layer[layers[i]].push_back((int)i);
    }
    std::vector<int> order, inverse((size_t)M);
    for (const auto& rows : by_layer)
        for (int r : rows) order.push_back(r);
    for (long i = 0; i < M; ++i) inverse[order[i]] = (int)i;

    std::vector<Tensor> p_views, g_views, rgb_views, dir_views;
    for (int b = 0; b < B; ++b) {
        Eigen::MatrixXd uv(M, 2);
        Array mask(M);
        Array dirs(M * 3);
        Vec3 center = cameras[b].center();
        for (long i = 0; i < M; ++i) {
            auto pr = cameras[b].project(points.row(i));
            uv(i, 0) = pr.u;
            uv(i, 1) = pr.v;
            mask[i] = pr.in_front ? 1.0 : 0.0;
            Vec3 d = (Vec3(points.row(i)) - center).normalized();
            for (int a = 0; a < 3; ++a) dirs[i * 3 + a] = d[a];
        }
        Tensor maskc = Tensor::from_array({(int)M}, mask);
        p_views.push_back(mul_colwise(bilinear_sample(planes[b], uv), maskc));
        rgb_views.push_back(mul_colwise(bilinear_sample(images[b], uv), maskc));
        dir_views.push_back(Tensor::from_array({(int)M, 3}, dirs));

        std::vector<Tensor> chunks;
        for (int h = 0; h < H; ++h) {
            if (by_layer[h].empty()) continue;
            Eigen::MatrixXd pts(by_layer[h].size(), 3);
            for (size_t r = 0; r < by_layer[h].size(); ++r)
                pts.row(r) = points.row(by_layer[h][r]);
            chunks.push_back(query_volume(volumes[h][b], pts));
        }
        g_views.push_back(gather_rows(concat(chunks, 0), inverse));
    }
    PointFeatures pf;
    pf.p = stack(p_views, 1);
    pf.g = stack(g_views, 1);
    pf.rgb = stack(rgb_views, 1).detach();
    pf.dirs = stack(dir_views, 1);
    pf.views = B;
    return pf;
}

FusedFeature RadianceField::fuse(const PointFeatures& pf) const {
    Tensor self_in = concat({pf.g, pf.dirs}, 2);
    bool uniform = !cfg_.attention;
    Tensor ghat = self_attn_.forward(self_in, self_in, uniform);
    FusedFeature ff;
    ff.per_view = cross_attn_.forward(ghat, pf.p, uniform);
    ff.avg = mean_axis(ff.per_view, 1);
    return ff;
}

Tensor RadianceField::density(const Tensor& g_avg) const {
    return reshape(softplus(sigma_mlp_.forward(g_avg)), {g_avg.dim(0)});
}

Tensor RadianceField::color(const FusedFeature& ff, const PointFeatures& pf,
                            const Tensor& q_dirs) const {
    int M = pf.p.dim(0), B = pf.views;
    if (q_dirs.ndim() != 2 || q_dirs.dim(0) != M || q_dirs.dim(1) != 3)
        throw std::invalid_argument("color: query directions must be [M,3]");
    for (int i = 0; i < M; ++i) {
        double n = std::sqrt(q_dirs.values()[i * 3] * q_dirs.values()[i * 3] +
                             q_dirs.values()[i * 3 + 1] * q_dirs.values()[i * 3 + 1] +
                             q_dirs.values()[i * 3 + 2] * q_dirs.values()[i * 3 + 2]);
        if (std::abs(n - 1.0) > 1e-9)
            throw std::invalid_argument("color: query directions must be unit norm");
    }
    Tensor enc_rows = posenc(q_dirs, cfg_.l_dir);  // [M, 6l+3]

    Tensor p_mean = mean_axis(pf.p, 1);  // [M,c1]
    Tensor ctilde = c1_mlp_.forward(concat({ff.avg, enc_rows, p_mean}, 1));

    // attention of the query direction over the source-view directions
    Tensor qrep = reshape(rgb_query_.forward(q_dirs), {M, 1, cfg_.dk2});
    Tensor keys = apply3(rgb_key_, pf.dirs);  // [M,B,dk2]
    Tensor att = softmax(bmm(qrep, keys, true) / std::sqrt((double)cfg_.dk2), 2);

    Tensor ctilde_rep = stack(std::vector<Tensor>((size_t)B, ctilde), 1);
    Tensor chat = concat({ctilde_rep, posenc(pf.rgb, cfg_.l_rgb)}, 2);
    Tensor vals = apply3(rgb_val_, chat);              // [M,B,ctilde]
    Tensor mixed = reshape(bmm(att, vals), {M, cfg_.ctilde});
    return sigmoid(c2_mlp_.forward(mixed));
}

Tensor RadianceField::color(const FusedFeature& ff, const PointFeatures& pf,
                            const Vec3& q) const {
    if (std::abs(q.norm() - 1.0) > 1e-9)
        throw std::invalid_argument("color: query direction must be unit norm");
    int M = pf.p.dim(0);
    Array qv(3L * M);
    for (int i = 0; i < M; ++i)
        for (int a = 0; a < 3; ++a) qv[i * 3 + a] = q[a];
    return color(ff, pf, Tensor::from_array({M, 3}, std::move(qv)));
}

void RadianceField::collect(const std::string& prefix, ParamMap& out) const {
    self_attn_.collect(prefix + ".self", out);
    cross_attn_.collect(prefix + ".cross", out);
    sigma_mlp_.collect(prefix + ".sigma", out);
    c1_mlp_.collect(prefix + ".c1", out);
    rgb_query_.collect(prefix + ".rgbq", out);
    rgb_key_.collect(prefix + ".rgbk", out);
    rgb_val_.collect(prefix + ".rgbv", out);
    c2_mlp_.collect(prefix + ".c2", out);
}

}  // namespace lnr
