#include "layernr/voxel.hpp"

#include <stdexcept>

namespace lnr {

GridSpec GridSpec::from_aabb(const Vec3& lo, const Vec3& hi, int res, double pad) {
    if (res < 2) throw std::invalid_argument("grid resolution must be >= 2");
    if ((hi - lo).minCoeff() < 0) throw std::invalid_argument("empty aabb");
    Vec3 plo = lo.array() - pad, phi = hi.array() + pad;
    Vec3 extent = phi - plo;
    GridSpec g;
    g.voxel_size = extent.maxCoeff() / (res - 1);
    for (int a = 0; a < 3; ++a) {
        int n = (int)std::ceil(extent[a] / g.voxel_size) + 1;
        g.dims[a] = std::min(n, res);
        // center the cells over the padded extent along this axis
        g.origin[a] = plo[a] + 0.5 * (extent[a] - (g.dims[a] - 1) * g.voxel_size);
    }
    return g;
}

long GridSpec::flat_index_clamped(const Vec3& p) const {
    Vec3 gc = to_grid(p);
    long idx[3];
    for (int a = 0; a < 3; ++a) {
        long i = (long)std::llround(gc[a]);
        idx[a] = std::max(0L, std::min((long)dims[a] - 1, i));
    }
    return (idx[0] * dims.y() + idx[1]) * dims.z() + idx[2];
}

VoxelDiffuser::VoxelDiffuser(int channels, std::mt19937_64& rng) {
    c1 = Conv3dLayer(channels, channels, 3, 1, 1, rng);
    c2 = Conv3dLayer(channels, channels, 3, 1, 1, rng);
}

DiffusedVolume VoxelDiffuser::scatter(const Eigen::MatrixXd& vertices,
                                      const Tensor& feats,
                                      const GridSpec& spec) const {
    if (vertices.rows() != feats.dim(0) || vertices.cols() != 3)
        throw std::invalid_argument("scatter: vertex/feature count mismatch");
    std::vector<long> idx(vertices.rows());
    for (long i = 0; i < vertices.rows(); ++i)
        idx[i] = spec.flat_index_clamped(vertices.row(i));
    Tensor vol = scatter_avg(feats, idx,
                             {spec.dims.x(), spec.dims.y(), spec.dims.z()});
    DiffusedVolume out;
    out.spec = spec;
    // residual smoothing: zero conv weights leave the scatter untouched
    out.features = vol + c2.forward(relu(c1.forward(vol)));
    return out;
}

void VoxelDiffuser::collect(const std::string& prefix, ParamMap& out) const {
    c1.collect(prefix + ".c1", out);
    c2.collect(prefix + ".c2", out);
}

Tensor query_volume(const DiffusedVolume& vol, const Eigen::MatrixXd& world_pts) {
    Eigen::MatrixXd gc(world_pts.rows(), 3);
    for (long i = 0; i < world_pts.rows(); ++i)
        gc.row(i) = vol.spec.to_grid(world_pts.row(i));
    return trilinear_query(vol.features, gc);
}

std::pair<Vec3, Vec3> vertex_aabb(const Eigen::MatrixXd& vertices) {
    if (vertices.rows() == 0) throw std::invalid_argument("empty vertex set");
    return {vertices.colwise().minCoeff(), vertices.colwise().maxCoeff()};
}

}  // namespace lnr
