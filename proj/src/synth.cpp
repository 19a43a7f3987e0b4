#include "layernr/synth.hpp"

#include <algorithm>
#include <random>

namespace lnr {

std::optional<std::pair<double, double>> ray_capsule(const Ray& ray,
                                                     const CapsuleShape& cap) {
    Vec3 ba = cap.b - cap.a;
    double len2 = ba.squaredNorm();
    double r2 = cap.radius * cap.radius;
    std::vector<double> ts;

    auto add_sphere = [&](const Vec3& c, bool end_a) {
        Vec3 m = ray.origin - c;
        double bq = m.dot(ray.dir);
        double disc = bq * bq - (m.squaredNorm() - r2);
        if (disc < 0) return;
        double sq = std::sqrt(disc);
        for (double t : {-bq - sq, -bq + sq}) {
            double s = (ray.origin + t * ray.dir - cap.a).dot(ba);
            if (end_a ? s <= 0 : s >= len2) ts.push_back(t);
        }
    };
    if (len2 > 1e-18) {
        Vec3 n = ba / std::sqrt(len2);
        Vec3 dp = ray.dir - ray.dir.dot(n) * n;
        Vec3 mp = (ray.origin - cap.a) - (ray.origin - cap.a).dot(n) * n;
        double qa = dp.squaredNorm();
        if (qa > 1e-18) {
            double qb = dp.dot(mp);
            double disc = qb * qb - qa * (mp.squaredNorm() - r2);
            if (disc >= 0) {
                double sq = std::sqrt(disc);
                for (double t : {(-qb - sq) / qa, (-qb + sq) / qa}) {
                    double s = (ray.origin + t * ray.dir - cap.a).dot(ba);
                    if (s > 0 && s < len2) ts.push_back(t);
                }
            }
        }
    }
    add_sphere(cap.a, true);
    add_sphere(cap.b, false);
    if (ts.size() < 2) return std::nullopt;
    double t0 = *std::min_element(ts.begin(), ts.end());
    double t1 = *std::max_element(ts.begin(), ts.end());
    t0 = std::max(t0, 0.0);
    if (t1 <= t0 + 1e-12) return std::nullopt;
    return std::make_pair(t0, t1);
}

Vec3 integrate_piecewise(const std::vector<ConstInterval>& intervals,
                         const Vec3& background) {
    struct Event {
        double z;
        int idx;
        bool open;
    };
    std::vector<Event> events;
    for (int i = 0; i < (int)intervals.size(); ++i) {
        if (!(intervals[i].z1 > intervals[i].z0)) continue;
        events.push_back({intervals[i].z0, i, true});
        events.push_back({intervals[i].z1, i, false});
    }
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        return a.z != b.z ? a.z < b.z : a.open > b.open;
    });
    std::vector<char> active(intervals.size(), 0);
    double trans = 1.0, z_prev = events.empty() ? 0.0 : events.front().z;
    Vec3 rgb = Vec3::Zero();
    for (const auto& ev : events) {
        double span = ev.z - z_prev;
        if (span > 0) {
            double sig = 0;
            Vec3 col = Vec3::Zero();
            for (size_t i = 0; i < intervals.size(); ++i)
                if (active[i]) {
                    sig += intervals[i].sigma;
                    col += intervals[i].sigma * intervals[i].color;
                }
            if (sig > 0) {
                double a = 1.0 - std::exp(-sig * span);
                rgb += trans * a * (col / sig);
                trans *= std::exp(-sig * span);
            }
        }
        active[ev.idx] = ev.open ? 1 : 0;
        z_prev = ev.z;
    }
    return rgb + trans * background;
}

namespace {

Camera look_at_camera(const Vec3& pos, const Vec3& target, double focal,
                      int size) {
    Vec3 f = (target - pos).normalized();
    Vec3 right = Vec3(0, 1, 0).cross(f).normalized();
    Vec3 down = f.cross(right);
    Camera cam;
    cam.R.row(0) = right;
    cam.R.row(1) = down;
    cam.R.row(2) = f;
    cam.t = -cam.R * pos;
    cam.K << focal, 0, size / 2.0, 0, focal, size / 2.0, 0, 0, 1;
    cam.width = cam.height = size;
    return cam;
}

Eigen::MatrixXd posed_joints(const BodyTemplate& tmpl, const BodyParams& p) {
    NoGradGuard guard;
    Tensor verts = skin(tmpl, p);
    Eigen::MatrixXd ve = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3,
                                                        Eigen::RowMajor>>(
        verts.values().data(), tmpl.num_vertices(), 3);
    return tmpl.joint_regressor * ve;
}

}  // namespace

SyntheticScene synth_scene(std::uint64_t seed, const SynthConfig& cfg,
                           const BodyTemplate& tmpl) {
    if (cfg.humans < 1 || cfg.views < 1)
        throw std::invalid_argument("synth_scene: need at least one human and view");
    SyntheticScene scene;
    scene.cfg = cfg;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    int J = tmpl.num_joints(), S = tmpl.num_shapes();

    for (int h = 0; h < cfg.humans; ++h) {
        Eigen::MatrixXd pose(J, 3);
        for (int j = 0; j < J; ++j)
            for (int a = 0; a < 3; ++a)
                pose(j, a) = cfg.truth_pose_spread * gauss(rng);
        pose(0, 0) = 0;
        pose(0, 2) = 0;
        pose(0, 1) = 0.6 * (uni(rng) - 0.5);  // mild yaw only at the root
        Eigen::VectorXd shape(S);
        for (int s = 0; s < S; ++s) shape[s] = 0.3 * gauss(rng);
        Vec3 trans((h - (cfg.humans - 1) / 2.0) * 0.8 + 0.05 * gauss(rng),
                   0.0, 0.05 * gauss(rng));
        scene.truth.push_back(BodyParams::from_values(pose, shape, trans));
    }

    for (int h = 0; h < cfg.humans; ++h) {
        Eigen::MatrixXd joints = posed_joints(tmpl, scene.truth[h]);
        std::vector<CapsuleShape> caps;
        for (const auto& bone : humanoid_bones()) {
            CapsuleShape c;
            c.a = joints.row(bone.a);
            c.b = joints.row(bone.b);
            c.radius = bone.radius;
            c.sigma = 30.0 + 30.0 * uni(rng);
            c.color = Vec3(0.15 + 0.7 * uni(rng), 0.15 + 0.7 * uni(rng),
                           0.15 + 0.7 * uni(rng));
            caps.push_back(c);
        }
        scene.capsules.push_back(caps);
    }

    Vec3 target = Vec3::Zero();
    for (const auto& t : scene.truth)
        for (int a = 0; a < 3; ++a) target[a] += t.translation.values()[a];
    target /= cfg.humans;
    target += Vec3(0, 0.95, 0);

    int total_views = cfg.views + cfg.query_views + cfg.held_out_views;
    double focal = (double)cfg.image_size;
    for (int v = 0; v < total_views; ++v) {
        double ang = 2.0 * M_PI * v / total_views;
        Vec3 pos = target + Vec3(2.6 * std::sin(ang), 0.35, 2.6 * std::cos(ang));
        scene.frame.cameras.push_back(
            look_at_camera(pos, target, focal, cfg.image_size));
    }
    scene.held_out_view = total_views - 1;
    scene.frame.num_input_views = cfg.views;

    for (const auto& cam : scene.frame.cameras)
        scene.frame.images.push_back(oracle_render(
            scene, cam, cfg.image_size, cfg.image_size, Vec3::Zero()));

    for (const auto& cam : scene.frame.cameras) {
        std::vector<Eigen::MatrixXd> uv_per_human;
        std::vector<Eigen::VectorXd> conf_per_human;
        for (int h = 0; h < cfg.humans; ++h) {
            Eigen::MatrixXd joints = posed_joints(tmpl, scene.truth[h]);
            Eigen::MatrixXd uv(J, 2);
            Eigen::VectorXd conf(J);
            for (int j = 0; j < J; ++j) {
                auto pr = cam.project(joints.row(j));
                uv(j, 0) = pr.u;
                uv(j, 1) = pr.v;
                conf[j] = pr.in_front ? 1.0 : 0.0;
            }
            uv_per_human.push_back(uv);
            conf_per_human.push_back(conf);
        }
        scene.frame.kp_uv.push_back(uv_per_human);
        scene.frame.kp_conf.push_back(conf_per_human);
    }

    for (int h = 0; h < cfg.humans; ++h) {
        if (!cfg.perturb) {
            scene.frame.humans.push_back(scene.truth[h]);
            continue;
        }
        const BodyParams& t = scene.truth[h];
        Eigen::MatrixXd pose(J, 3);
        for (int j = 0; j < J; ++j)
            for (int a = 0; a < 3; ++a)
                pose(j, a) = t.pose.values()[j * 3 + a] + cfg.pose_noise * gauss(rng);
        Eigen::VectorXd shape(S);
        for (int s = 0; s < S; ++s) shape[s] = t.shape.values()[s];
        Vec3 trans(t.translation.values()[0] + cfg.trans_noise * gauss(rng),
                   t.translation.values()[1] + cfg.trans_noise * gauss(rng),
                   t.translation.values()[2] + cfg.trans_noise * gauss(rng));
        scene.frame.humans.push_back(BodyParams::from_values(pose, shape, trans));
    }
    return scene;
}

Tensor oracle_render(const SyntheticScene& scene, const Camera& cam, int width,
                     int height, const Vec3& background) {
    Array out(3L * height * width);
    std::vector<CapsuleShape> all;
    for (const auto& caps : scene.capsules)
        all.insert(all.end(), caps.begin(), caps.end());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            Eigen::MatrixXd uv(1, 2);
            uv << x + 0.5, y + 0.5;
            Ray ray = make_rays(cam, uv)[0];
            std::vector<ConstInterval> intervals;
            for (const auto& cap : all) {
                auto hit = ray_capsule(ray, cap);
                if (!hit) continue;
                intervals.push_back({hit->first, hit->second, cap.sigma, cap.color});
            }
            Vec3 rgb = integrate_piecewise(intervals, background);
            for (int c = 0; c < 3; ++c)
                out[(long)c * height * width + (long)y * width + x] =
                    std::min(1.0, std::max(0.0, rgb[c]));
        }
    }
    return Tensor::from_array({3, height, width}, std::move(out));
}

}  // namespace lnr
