#pragma once

#include "layernr/camera.hpp"
#include "layernr/nn.hpp"

namespace lnr {

// Axis-aligned voxel grid. Cell (i,j,k) is centered at
// origin + voxel_size * (i,j,k).
struct GridSpec {
    Vec3 origin = Vec3::Zero();
    double voxel_size = 0.0;
    Eigen::Vector3i dims = Eigen::Vector3i::Zero();

    // Covers [lo,hi] padded on all sides; the largest padded extent maps to
    // `res` cells and the grid stays cubical in cell size.
    static GridSpec from_aabb(const Vec3& lo, const Vec3& hi, int res,
                              double pad = 0.05);

    long num_cells() const { return (long)dims.x() * dims.y() * dims.z(); }
    // World point -> continuous voxel-center coordinates.
    Vec3 to_grid(const Vec3& p) const { return (p - origin) / voxel_size; }
    // Containing cell with out-of-range points clamped to the boundary cell.
    long flat_index_clamped(const Vec3& p) const;
};

struct DiffusedVolume {
    GridSpec spec;
    Tensor features;  // [C, Dx, Dy, Dz]
};

// Count-averaging scatter followed by a learned residual 3x3x3 smoothing
// stack; the dense stand-in for sparse-convolution diffusion.
struct VoxelDiffuser {
    Conv3dLayer c1, c2;

    VoxelDiffuser() = default;
    VoxelDiffuser(int channels, std::mt19937_64& rng);

    // vertices: N x 3 world (treated as constants); feats: [N,C].
    DiffusedVolume scatter(const Eigen::MatrixXd& vertices, const Tensor& feats,
                           const GridSpec& spec) const;
    void collect(const std::string& prefix, ParamMap& out) const;
};

// Trilinear lookup at world points; zero outside the grid support. [M,C].
Tensor query_volume(const DiffusedVolume& vol, const Eigen::MatrixXd& world_pts);

// AABB of a vertex set (rows of an N x 3 matrix).
std::pair<Vec3, Vec3> vertex_aabb(const Eigen::MatrixXd& vertices);

}  // namespace lnr
