#include "layernr/body.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace lnr {

using nlohmann::json;

namespace {

Tensor const_tensor(const Eigen::MatrixXd& m) {
    Array v(m.rows() * m.cols());
    for (long r = 0; r < m.rows(); ++r)
        for (long c = 0; c < m.cols(); ++c) v[r * m.cols() + c] = m(r, c);
    return Tensor::from_array({(int)m.rows(), (int)m.cols()}, std::move(v));
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json j;
    j["shape"] = {m.rows(), m.cols()};
    std::vector<double> data;
    data.reserve(m.size());
    for (long r = 0; r < m.rows(); ++r)
        for (long c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    j["data"] = data;
    return j;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    auto shape = j.at("shape").get<std::vector<long>>();
    auto data = j.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || (long)data.size() != shape[0] * shape[1])
        throw std::invalid_argument("bad matrix json");
    Eigen::MatrixXd m(shape[0], shape[1]);
    for (long r = 0; r < shape[0]; ++r)
        for (long c = 0; c < shape[1]; ++c) m(r, c) = data[r * shape[1] + c];
    return m;
}

}  // namespace

void BodyTemplate::validate() const {
    int v = num_vertices(), j = num_joints();
    if (skinning_weights.rows() != v || skinning_weights.cols() != j)
        throw std::invalid_argument("skinning weight shape mismatch");
    if (joint_regressor.rows() != j || joint_regressor.cols() != v)
        throw std::invalid_argument("joint regressor shape mismatch");
    for (int r = 0; r < v; ++r) {
        double s = skinning_weights.row(r).sum();
        if (skinning_weights.row(r).minCoeff() < 0 || std::abs(s - 1.0) > 1e-6)
            throw std::invalid_argument("skinning weights must be a convex row");
    }
    for (int r = 0; r < j; ++r)
        if (std::abs(joint_regressor.row(r).sum() - 1.0) > 1e-6)
            throw std::invalid_argument("joint regressor rows must sum to 1");
    int roots = 0;
    for (int q = 0; q < j; ++q) {
        if (parent[q] < 0) {
            ++roots;
            continue;
        }
        if (parent[q] >= q)
            throw std::invalid_argument("parents must precede children");
    }
    if (roots != 1) throw std::invalid_argument("joint tree needs exactly one root");
}

json BodyTemplate::to_json() const {
    json j;
    j["rest_vertices"] = matrix_to_json(rest_vertices);
    j["skinning_weights"] = matrix_to_json(skinning_weights);
    j["parent"] = parent;
    j["joint_regressor"] = matrix_to_json(joint_regressor);
    j["shape_basis"] = json::array();
    for (const auto& b : shape_basis) j["shape_basis"].push_back(matrix_to_json(b));
    j["units"] = "meters";
    return j;
}

BodyTemplate BodyTemplate::from_json(const json& j) {
    BodyTemplate t;
    t.rest_vertices = matrix_from_json(j.at("rest_vertices"));
    t.skinning_weights = matrix_from_json(j.at("skinning_weights"));
    t.parent = j.at("parent").get<std::vector<int>>();
    t.joint_regressor = matrix_from_json(j.at("joint_regressor"));
    for (const auto& b : j.at("shape_basis")) t.shape_basis.push_back(matrix_from_json(b));
    t.validate();
    return t;
}

const std::vector<BoneSpec>& humanoid_bones() {
    static const std::vector<BoneSpec> bones{
        {0, 1, 0.10}, {1, 2, 0.11}, {2, 3, 0.07},
        {0, 4, 0.07}, {4, 5, 0.06}, {5, 6, 0.05},
        {0, 7, 0.07}, {7, 8, 0.06}, {8, 9, 0.05},
        {2, 10, 0.05}, {10, 11, 0.045}, {11, 12, 0.04},
        {2, 13, 0.05}, {13, 14, 0.045}, {14, 15, 0.04},
    };
    return bones;
}

BodyTemplate make_humanoid_template() {
    // 16-joint skeleton, parents precede children.
    // 0 pelvis 1 spine 2 chest 3 head 4 lhip 5 lknee 6 lankle
    // 7 rhip 8 rknee 9 rankle 10 lshoulder 11 lelbow 12 lwrist
    // 13 rshoulder 14 relbow 15 rwrist
    const int J = 16;
    std::vector<int> parent{-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 2, 10, 11, 2, 13, 14};
    Eigen::MatrixXd joints(J, 3);
    joints << 0.00, 0.95, 0.00,   // pelvis
              0.00, 1.15, 0.00,   // spine
              0.00, 1.35, 0.00,   // chest
              0.00, 1.58, 0.00,   // head
              0.10, 0.90, 0.00,   // lhip
              0.10, 0.50, 0.00,   // lknee
              0.10, 0.10, 0.00,   // lankle
             -0.10, 0.90, 0.00,   // rhip
             -0.10, 0.50, 0.00,   // rknee
             -0.10, 0.10, 0.00,   // rankle
              0.19, 1.42, 0.00,   // lshoulder
              0.33, 1.16, 0.00,   // lelbow
              0.43, 0.92, 0.00,   // lwrist
             -0.19, 1.42, 0.00,   // rshoulder
             -0.33, 1.16, 0.00,   // relbow
             -0.43, 0.92, 0.00;   // rwrist

    const std::vector<BoneSpec>& bones = humanoid_bones();
    // 5 rings x 8 points per bone = 40 vertices; 15 bones = 600, plus head
    // top and heel midpoint = 602.
    const int rings = 5, around = 8;
    int V = (int)bones.size() * rings * around + 2;
    Eigen::MatrixXd verts(V, 3);
    Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(V, J);
    Eigen::MatrixXd radial = Eigen::MatrixXd::Zero(V, 3);  // unit off-axis dir

    int vi = 0;
    for (const auto& bone : bones) {
        Vec3 pa = joints.row(bone.a), pb = joints.row(bone.b);
        Vec3 axis = (pb - pa).normalized();
        Vec3 ref = std::abs(axis.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
        Vec3 u = axis.cross(ref).normalized();
        Vec3 w = axis.cross(u);
        for (int r = 0; r < rings; ++r) {
            double t = (r + 0.5) / rings;
            Vec3 center = pa + t * (pb - pa);
            for (int k = 0; k < around; ++k) {
                double ang = 2.0 * M_PI * k / around;
                Vec3 dir = std::cos(ang) * u + std::sin(ang) * w;
                verts.row(vi) = center + bone.radius * dir;
                radial.row(vi) = dir;
                weights(vi, bone.a) = 1.0 - t;
                weights(vi, bone.b) = t;
                ++vi;
            }
        }
    }
    verts.row(vi) = joints.row(3) + Eigen::RowVector3d(0, 0.17, 0);  // head top
    radial.row(vi) = Vec3(0, 1, 0);
    weights(vi, 3) = 1.0;
    ++vi;
    verts.row(vi) = 0.5 * (joints.row(6) + joints.row(9)) + Eigen::RowVector3d(0, -0.08, 0);
    radial.row(vi) = Vec3(0, -1, 0);
    weights(vi, 6) = 0.5;
    weights(vi, 9) = 0.5;
    ++vi;

    BodyTemplate t;
    t.rest_vertices = verts;
    t.skinning_weights = weights;
    t.parent = parent;

    // regress each joint from its nearest vertices
    const int knn = 8;
    t.joint_regressor = Eigen::MatrixXd::Zero(J, V);
    for (int q = 0; q < J; ++q) {
        std::vector<std::pair<double, int>> d(V);
        for (int i = 0; i < V; ++i)
            d[i] = {(verts.row(i) - joints.row(q)).norm(), i};
        std::partial_sort(d.begin(), d.begin() + knn, d.end());
        for (int k = 0; k < knn; ++k) t.joint_regressor(q, d[k].second) = 1.0 / knn;
    }

    // shape directions: height, width, limb thickness, torso length
    double py = joints(0, 1);
    Eigen::MatrixXd b_height = Eigen::MatrixXd::Zero(V, 3);
    Eigen::MatrixXd b_width = Eigen::MatrixXd::Zero(V, 3);
    Eigen::MatrixXd b_thick = Eigen::MatrixXd::Zero(V, 3);
    Eigen::MatrixXd b_torso = Eigen::MatrixXd::Zero(V, 3);
    for (int i = 0; i < V; ++i) {
        b_height(i, 1) = 0.1 * (verts(i, 1) - py);
        b_width(i, 0) = 0.1 * verts(i, 0);
        b_width(i, 2) = 0.1 * verts(i, 2);
        b_thick.row(i) = 0.02 * radial.row(i);
        if (verts(i, 1) > py) b_torso(i, 1) = 0.05 * (verts(i, 1) - py);
    }
    t.shape_basis = {b_height, b_width, b_thick, b_torso};
    t.validate();
    return t;
}

Eigen::MatrixXd wrap_pose(const Eigen::MatrixXd& pose) {
    Eigen::MatrixXd out = pose;
    for (long r = 0; r < out.rows(); ++r) {
        if (!out.row(r).allFinite())
            throw std::invalid_argument("non-finite pose parameters");
        double n = out.row(r).norm();
        if (n >= 2.0 * M_PI) {
            double wrapped = std::fmod(n, 2.0 * M_PI);
            out.row(r) *= wrapped / n;
        }
    }
    return out;
}

BodyParams BodyParams::make(int joints, int shapes) {
    BodyParams p;
    p.pose = Tensor::zeros({joints, 3});
    p.shape = Tensor::zeros({shapes});
    p.translation = Tensor::zeros({3});
    return p;
}

BodyParams BodyParams::from_values(const Eigen::MatrixXd& pose,
                                   const Eigen::VectorXd& shape, const Vec3& t) {
    if (!shape.allFinite() || !t.allFinite())
        throw std::invalid_argument("non-finite body parameters");
    Eigen::MatrixXd wrapped = wrap_pose(pose);
    BodyParams p;
    Array pv(wrapped.size());
    for (long r = 0; r < wrapped.rows(); ++r)
        for (int c = 0; c < 3; ++c) pv[r * 3 + c] = wrapped(r, c);
    p.pose = Tensor::from_array({(int)wrapped.rows(), 3}, std::move(pv));
    Array sv(shape.size());
    for (long i = 0; i < shape.size(); ++i) sv[i] = shape[i];
    p.shape = Tensor::from_array({(int)shape.size()}, std::move(sv));
    p.translation = Tensor::from_vector({3}, {t.x(), t.y(), t.z()});
    return p;
}

Tensor BodyParams::flat() const {
    int jp = (int)pose.size(), sp = (int)shape.size();
    return reshape(concat({reshape(pose, {jp}), shape, translation}, 0),
                   {1, jp + sp + 3});
}

BodyParams BodyParams::from_flat(const Tensor& flat, int joints, int shapes) {
    Tensor row = reshape(flat, {(int)flat.size()});
    BodyParams p;
    p.pose = reshape(slice(row, 0, 0, joints * 3), {joints, 3});
    p.shape = slice(row, 0, joints * 3, shapes);
    p.translation = slice(row, 0, joints * 3 + shapes, 3);
    return p;
}

BodyParams BodyParams::detached() const {
    BodyParams p;
    p.pose = pose.detach();
    p.shape = shape.detach();
    p.translation = translation.detach();
    return p;
}

json BodyParams::to_json() const {
    json j;
    j["pose"] = {{"shape", {pose.dim(0), 3}},
                 {"data", std::vector<double>(pose.values().data(),
                                              pose.values().data() + pose.size())}};
    j["shape"] = std::vector<double>(shape.values().data(),
                                     shape.values().data() + shape.size());
    j["translation"] = std::vector<double>(
        translation.values().data(), translation.values().data() + 3);
    j["units"] = {{"pose", "radians"}, {"translation", "meters"}};
    return j;
}

BodyParams BodyParams::from_json(const json& j) {
    auto pshape = j.at("pose").at("shape").get<std::vector<int>>();
    auto pdata = j.at("pose").at("data").get<std::vector<double>>();
    Eigen::MatrixXd pose(pshape.at(0), 3);
    for (int r = 0; r < pshape[0]; ++r)
        for (int c = 0; c < 3; ++c) pose(r, c) = pdata.at(r * 3 + c);
    auto sdata = j.at("shape").get<std::vector<double>>();
    Eigen::VectorXd shape = Eigen::Map<Eigen::VectorXd>(sdata.data(), (long)sdata.size());
    auto tdata = j.at("translation").get<std::vector<double>>();
    return from_values(pose, shape, Vec3(tdata.at(0), tdata.at(1), tdata.at(2)));
}

namespace {

// Rotation matrix from one axis-angle row via Rodrigues; series fallback for
// tiny angles lives in rot_coef_a/b.
Tensor rodrigues_row(const Tensor& w_row) {  // [1,3] -> [3,3]
    Tensor t = sum_all(w_row * w_row);
    Tensor a = rot_coef_a(t);
    Tensor b = rot_coef_b(t);
    Tensor wx = slice(w_row, 1, 0, 1), wy = slice(w_row, 1, 1, 1),
           wz = slice(w_row, 1, 2, 1);
    Tensor zero = Tensor::zeros({1, 1});
    Tensor k = concat({concat({zero, -wz, wy}, 1), concat({wz, zero, -wx}, 1),
                       concat({-wy, wx, zero}, 1)},
                      0);
    Tensor eye = Tensor::from_vector({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    return eye + reshape(a, {1}) * k + reshape(b, {1}) * matmul(k, k);
}

}  // namespace

Tensor skin(const BodyTemplate& tmpl, const BodyParams& params) {
    if (!params.pose.values().allFinite() || !params.shape.values().allFinite() ||
        !params.translation.values().allFinite())
        throw std::invalid_argument("non-finite body parameters");
    const int V = tmpl.num_vertices(), J = tmpl.num_joints(), S = tmpl.num_shapes();
    if (params.pose.dim(0) != J || (int)params.shape.size() != S)
        throw std::invalid_argument("parameter count mismatch with template");

    Tensor shaped = const_tensor(tmpl.rest_vertices);
    for (int s = 0; s < S; ++s)
        shaped = shaped + slice(params.shape, 0, s, 1) * const_tensor(tmpl.shape_basis[s]);

    Tensor jreg = const_tensor(tmpl.joint_regressor);
    Tensor joints = matmul(jreg, shaped);  // [J,3]

    std::vector<Tensor> world_rot(J), world_pos(J);
    for (int j = 0; j < J; ++j) {
        Tensor local = rodrigues_row(slice(params.pose, 0, j, 1));
        Tensor jr = slice(joints, 0, j, 1);  // [1,3]
        int p = tmpl.parent[j];
        if (p < 0) {
            world_rot[j] = local;
            world_pos[j] = jr;
        } else {
            world_rot[j] = matmul(world_rot[p], local);
            Tensor offset = jr - slice(joints, 0, p, 1);
            world_pos[j] = world_pos[p] + matmul(offset, transpose2d(world_rot[p]));
        }
    }

    Tensor out = Tensor::zeros({V, 3});
    for (int j = 0; j < J; ++j) {
        Tensor jr3 = reshape(slice(joints, 0, j, 1), {3});
        Tensor rel = add_rowwise(shaped, -jr3);
        Tensor moved = add_rowwise(matmul(rel, transpose2d(world_rot[j])),
                                   reshape(world_pos[j], {3}));
        Eigen::VectorXd wcol = tmpl.skinning_weights.col(j);
        Array wv(V);
        for (int i = 0; i < V; ++i) wv[i] = wcol[i];
        out = out + mul_colwise(moved, Tensor::from_array({V}, std::move(wv)));
    }
    return add_rowwise(out, params.translation);
}

std::vector<int> downsample_indices(const BodyTemplate& tmpl, int target) {
    int V = tmpl.num_vertices();
    if (target > V) throw std::invalid_argument("downsample target exceeds vertex count");
    if (target == V) {
        std::vector<int> all(V);
        for (int i = 0; i < V; ++i) all[i] = i;
        return all;
    }
    std::mt19937_64 rng(0);
    int first = (int)(rng() % V);
    std::vector<int> chosen{first};
    Eigen::VectorXd dist(V);
    for (int i = 0; i < V; ++i)
        dist[i] = (tmpl.rest_vertices.row(i) - tmpl.rest_vertices.row(first)).norm();
    while ((int)chosen.size() < target) {
        int best = 0;
        for (int i = 1; i < V; ++i)
            if (dist[i] > dist[best]) best = i;
        chosen.push_back(best);
        for (int i = 0; i < V; ++i)
            dist[i] = std::min(dist[i],
                               (tmpl.rest_vertices.row(i) - tmpl.rest_vertices.row(best)).norm());
    }
    return chosen;
}

int default_downsample_target(int num_vertices) {
    if (num_vertices == 6480) return 431;
    return (int)std::ceil(0.066 * num_vertices);
}

Keypoints2D keypoints2d(const BodyTemplate& tmpl, const BodyParams& params,
                        const Camera& cam) {
    Tensor verts = skin(tmpl, params);
    Tensor joints = matmul(const_tensor(tmpl.joint_regressor), verts);  // [J,3]
    int J = tmpl.num_joints();

    Eigen::Matrix3d rt = cam.R.transpose();
    Array rv(9);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rv[r * 3 + c] = rt(r, c);
    Tensor cam_rot_t = Tensor::from_array({3, 3}, std::move(rv));
    Tensor cam_t = Tensor::from_vector({3}, {cam.t.x(), cam.t.y(), cam.t.z()});
    Tensor xc = add_rowwise(matmul(joints, cam_rot_t), cam_t);  // [J,3]

    Tensor x = slice(xc, 1, 0, 1), y = slice(xc, 1, 1, 1), z = slice(xc, 1, 2, 1);
    Eigen::VectorXd conf(J);
    Array mask(J);
    for (int j = 0; j < J; ++j) {
        bool front = z.values()[j] > 1e-6;
        conf[j] = front ? 1.0 : 0.0;
        mask[j] = front ? 1.0 : 0.0;
    }
    // behind-camera rows divide by 1 instead of z; they carry zero confidence
    Tensor maskc = Tensor::from_array({J, 1}, mask);
    Tensor z_safe = z * maskc + (1.0 - maskc);
    Tensor u = x / z_safe * cam.K(0, 0) + cam.K(0, 2);
    Tensor v = y / z_safe * cam.K(1, 1) + cam.K(1, 2);
    Keypoints2D kp;
    kp.uv = concat({u, v}, 1);
    kp.conf = conf;
    return kp;
}

Tensor keypoint_loss(const Keypoints2D& pred, const Eigen::MatrixXd& gt_uv,
                     const Eigen::VectorXd& gt_conf) {
    int J = pred.uv.dim(0);
    if (gt_uv.rows() != J || gt_conf.size() != J)
        throw std::invalid_argument("keypoint count mismatch");
    Array gv(J * 2);
    Array wv(J);
    for (int j = 0; j < J; ++j) {
        gv[j * 2] = gt_uv(j, 0);
        gv[j * 2 + 1] = gt_uv(j, 1);
        wv[j] = gt_conf[j] * pred.conf[j];
    }
    Tensor diff = pred.uv - Tensor::from_array({J, 2}, std::move(gv));
    Tensor sq = sum_axis(diff * diff, 1);  // [J]
    Tensor d = tsqrt(sq + 1e-12);
    return sum_all(d * Tensor::from_array({J}, std::move(wv))) / (Scalar)J;
}

}  // namespace lnr
