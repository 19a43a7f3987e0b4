#pragma once

#include "layernr/camera.hpp"
#include "layernr/ops.hpp"

#include <nlohmann/json.hpp>

#include <vector>

namespace lnr {

// Skinned articulated template. Fixed data shared across humans; all fields
// are constants with respect to training.
struct BodyTemplate {
    Eigen::MatrixXd rest_vertices;             // V x 3, meters
    Eigen::MatrixXd skinning_weights;          // V x J, rows sum to 1
    std::vector<int> parent;                   // per joint, root = -1
    std::vector<Eigen::MatrixXd> shape_basis;  // S entries of V x 3
    Eigen::MatrixXd joint_regressor;           // J x V, rows sum to 1

    int num_vertices() const { return (int)rest_vertices.rows(); }
    int num_joints() const { return (int)parent.size(); }
    int num_shapes() const { return (int)shape_basis.size(); }

    // Throws on malformed weights, regressor rows, or joint tree.
    void validate() const;

    nlohmann::json to_json() const;
    static BodyTemplate from_json(const nlohmann::json& j);
};

// Procedural capsule-limb humanoid: V=602, J=16, S=4 at defaults.
BodyTemplate make_humanoid_template();

// The bone segments (joint index pairs + radii) the humanoid is built from.
struct BoneSpec {
    int a, b;
    double radius;
};
const std::vector<BoneSpec>& humanoid_bones();

struct BodyParams {
    Tensor pose;         // [J,3] axis-angle, radians; norms wrapped below 2*pi
    Tensor shape;        // [S]
    Tensor translation;  // [3] meters

    static BodyParams make(int joints, int shapes);
    static BodyParams from_values(const Eigen::MatrixXd& pose,
                                  const Eigen::VectorXd& shape, const Vec3& t);
    // Concatenation [1, J*3+S+3] in (pose, shape, translation) order.
    Tensor flat() const;
    static BodyParams from_flat(const Tensor& flat, int joints, int shapes);
    BodyParams detached() const;

    nlohmann::json to_json() const;
    static BodyParams from_json(const nlohmann::json& j);
};

// Wraps each axis-angle row so its norm stays below 2*pi; throws on
// non-finite input.
Eigen::MatrixXd wrap_pose(const Eigen::MatrixXd& pose);

// Blendshapes, joint regression, forward kinematics, LBS, translation.
// Differentiable with respect to all of params. Returns [V,3].
Tensor skin(const BodyTemplate& tmpl, const BodyParams& params);

// Farthest-point-sampled vertex index set, deterministic (seed 0).
std::vector<int> downsample_indices(const BodyTemplate& tmpl, int target);

// Desk-scale default mirroring the full-size ratio 431/6480.
int default_downsample_target(int num_vertices);

struct Keypoints2D {
    Tensor uv;                 // [J,2] pixels, differentiable
    Eigen::VectorXd conf;      // in [0,1]; 0 for joints behind the camera
};

Keypoints2D keypoints2d(const BodyTemplate& tmpl, const BodyParams& params,
                        const Camera& cam);

// Confidence-weighted mean keypoint distance versus ground truth (loss term).
Tensor keypoint_loss(const Keypoints2D& pred, const Eigen::MatrixXd& gt_uv,
                     const Eigen::VectorXd& gt_conf);

}  // namespace lnr
