#include "layernr/alignment.hpp"

#include <stdexcept>

namespace lnr {

AttentionBlock::AttentionBlock(int c_in, int dk_, int c_out, std::mt19937_64& rng)
    : key(c_in, dk_, rng),
      query(c_in, dk_, rng),
      val1(c_in, c_out, rng),
      val2(c_in, c_out, rng),
      dk(dk_) {}

Tensor AttentionBlock::forward(const Tensor& feats) const {
    Tensor q = query.forward(feats);
    Tensor k = key.forward(feats);
    Tensor scores = matmul(q, transpose2d(k)) / std::sqrt((double)dk);
    Tensor mv = softmax(scores, 1);
    return matmul(mv, val1.forward(feats)) + val2.forward(feats);
}

void AttentionBlock::collect(const std::string& prefix, ParamMap& out) const {
    key.collect(prefix + ".key", out);
    query.collect(prefix + ".query", out);
    val1.collect(prefix + ".val1", out);
    val2.collect(prefix + ".val2", out);
}

Tensor embed_vertices(const Eigen::MatrixXd& vertices, const Tensor& plane,
                      const Camera& cam) {
    long V = vertices.rows();
    Eigen::MatrixXd uv(V, 2);
    Array mask(V);
    for (long i = 0; i < V; ++i) {
        auto p = cam.project(vertices.row(i));
        uv(i, 0) = p.u;
        uv(i, 1) = p.v;
        mask[i] = p.in_front ? 1.0 : 0.0;
    }
    Tensor sampled = bilinear_sample(plane, uv);
    return mul_colwise(sampled, Tensor::from_array({(int)V}, mask));
}

AlignmentModule::AlignmentModule(const AlignmentConfig& cfg,
                                 const BodyTemplate& tmpl, int plane_channels,
                                 std::mt19937_64& rng)
    : cfg_(cfg) {
    int V = tmpl.num_vertices();
    downsampled_ = downsample_indices(tmpl, default_downsample_target(V));
    reduce_ = Linear(plane_channels, cfg.c2, rng);
    diffuser_ = VoxelDiffuser(plane_channels, rng);
    attn_ = AttentionBlock(cfg.c2, cfg.dk1, cfg.c2, rng);
    param_width_ = tmpl.num_joints() * 3 + tmpl.num_shapes() + 3;
    offset_mlp_ = Mlp({cfg.c2 + param_width_, cfg.mlp_hidden, param_width_}, rng,
                      /*zero_init_last=*/true);
}

Tensor AlignmentModule::compact_feature(const Tensor& vertex_feats,
                                        const Eigen::MatrixXd& vertices,
                                        const std::vector<int>& downsampled,
                                        const GridSpec& grid) const {
    DiffusedVolume vol = diffuser_.scatter(vertices, vertex_feats, grid);
    Eigen::MatrixXd qpts(downsampled.size(), 3);
    for (size_t i = 0; i < downsampled.size(); ++i)
        qpts.row(i) = vertices.row(downsampled[i]);
    Tensor queried = query_volume(vol, qpts);          // [n, C]
    Tensor reduced = reduce_.forward(queried);         // [n, c2]
    return reshape(mean_axis(reduced, 0), {1, cfg_.c2});
}

BodyParams AlignmentModule::correct_params(const Tensor& fused,
                                           const BodyParams& params,
                                           double* offset_norm) const {
    Tensor flat = params.flat();
    if (!cfg_.offsets_enabled) {
        if (offset_norm) *offset_norm = 0.0;
        return params;
    }
    Tensor delta = offset_mlp_.forward(concat({fused, flat}, 1));
    if (!delta.values().allFinite())
        throw std::runtime_error("alignment produced non-finite offsets");
    if (offset_norm) *offset_norm = delta.values().matrix().norm();
    int joints = params.pose.dim(0), shapes = (int)params.shape.size();
    return BodyParams::from_flat(flat + delta, joints, shapes);
}

AlignedHuman AlignmentModule::align(const BodyTemplate& tmpl,
                                    const BodyParams& initial,
                                    const ImageEncoder& enc,
                                    const std::vector<FeaturePyramid>& pyramids,
                                    const std::vector<Camera>& cameras) const {
    if (pyramids.empty() || pyramids.size() != cameras.size())
        throw std::invalid_argument("align: need one pyramid per camera");
    int levels = (int)pyramids[0].levels.size();
    if (cfg_.steps < 1 || cfg_.steps > levels - 1)
        throw std::invalid_argument("align: steps must be in [1, levels-1]");

    AlignedHuman out;
    out.params = initial;
    int B = (int)cameras.size();
    std::vector<Tensor> planes(B);
    for (int l = 1; l <= cfg_.steps; ++l) {
        for (int b = 0; b < B; ++b) planes[b] = enc.fuse_levels(pyramids[b], l);
        Tensor verts = skin(tmpl, out.params);
        Eigen::MatrixXd ve = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3,
                                                            Eigen::RowMajor>>(
            verts.values().data(), tmpl.num_vertices(), 3);
        auto [lo, hi] = vertex_aabb(ve);
        GridSpec grid = GridSpec::from_aabb(lo, hi, cfg_.grid_res, cfg_.grid_pad);
        std::vector<Tensor> rows;
        for (int b = 0; b < B; ++b)
            rows.push_back(compact_feature(embed_vertices(ve, planes[b], cameras[b]),
                                           ve, downsampled_, grid));
        Tensor attended = attn_.forward(concat(rows, 0));
        Tensor vhat = reshape(mean_axis(attended, 0), {1, cfg_.c2});
        double n = 0;
        out.params = correct_params(vhat, out.params, &n);
        out.offsets_norm += n;
        ++out.steps;
    }

    out.vertices = skin(tmpl, out.params);
    Eigen::MatrixXd ve = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3,
                                                        Eigen::RowMajor>>(
        out.vertices.values().data(), tmpl.num_vertices(), 3);
    auto [lo, hi] = vertex_aabb(ve);
    GridSpec grid = GridSpec::from_aabb(lo, hi, cfg_.grid_res, cfg_.grid_pad);
    for (int b = 0; b < B; ++b)
        out.volumes.push_back(diffuser_.scatter(
            ve, embed_vertices(ve, planes[b], cameras[b]), grid));
    return out;
}

void AlignmentModule::collect(const std::string& prefix, ParamMap& out) const {
    reduce_.collect(prefix + ".reduce", out);
    diffuser_.collect(prefix + ".diffuse", out);
    attn_.collect(prefix + ".attn", out);
    offset_mlp_.collect(prefix + ".offset", out);
}

nlohmann::json aligned_to_json(const AlignedHuman& human) {
    nlohmann::json j = human.params.to_json();
    j["alignment"] = {{"steps", human.steps}, {"offsets_norm", human.offsets_norm}};
    return j;
}

}  // namespace lnr
