#include "layernr/dataset.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

namespace lnr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json mat_flat(const Eigen::MatrixXd& m) {
    std::vector<double> v;
    v.reserve(m.size());
    for (long r = 0; r < m.rows(); ++r)
        for (long c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
    return v;
}

Eigen::MatrixXd mat_from(const json& j, long rows, long cols) {
    auto v = j.get<std::vector<double>>();
    if ((long)v.size() != rows * cols)
        throw std::runtime_error("dataset: matrix size mismatch in manifest");
    Eigen::MatrixXd m(rows, cols);
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < cols; ++c) m(r, c) = v[r * cols + c];
    return m;
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& ds) {
    fs::create_directories(fs::path(dir) / "images");
    json manifest;
    manifest["scene"] = ds.scene_id;
    manifest["held_out_view"] = ds.held_out_view;
    manifest["seed"] = ds.seed;
    manifest["version"] = 1;
    manifest["frames"] = json::array();
    for (size_t f = 0; f < ds.frames.size(); ++f) {
        const SceneFrame& frame = ds.frames[f];
        json jf;
        jf["num_input_views"] = frame.num_input_views;
        jf["humans"] = json::array();
        for (const auto& h : frame.humans) jf["humans"].push_back(h.to_json());
        jf["views"] = json::array();
        for (size_t v = 0; v < frame.cameras.size(); ++v) {
            const Camera& cam = frame.cameras[v];
            std::string rel =
                "images/f" + std::to_string(f) + "_v" + std::to_string(v) + ".png";
            save_image_png((fs::path(dir) / rel).string(), frame.images[v]);
            json jv;
            jv["K"] = mat_flat(cam.K);
            jv["R"] = mat_flat(cam.R);
            jv["t"] = std::vector<double>{cam.t.x(), cam.t.y(), cam.t.z()};
            jv["width"] = cam.width;
            jv["height"] = cam.height;
            jv["image"] = rel;
            jv["keypoints"] = json::array();
            for (size_t h = 0; h < frame.humans.size(); ++h) {
                json jk;
                jk["uv"] = mat_flat(frame.kp_uv[v][h]);
                jk["conf"] = std::vector<double>(
                    frame.kp_conf[v][h].data(),
                    frame.kp_conf[v][h].data() + frame.kp_conf[v][h].size());
                jv["keypoints"].push_back(jk);
            }
            jf["views"].push_back(jv);
        }
        manifest["frames"].push_back(jf);
    }
    std::ofstream out(fs::path(dir) / "manifest.json");
    out << manifest.dump(2) << "\n";
    if (!out) throw std::runtime_error("dataset: failed to write manifest");
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw std::runtime_error("dataset: missing manifest.json in " + dir);
    json manifest = json::parse(in);
    Dataset ds;
    ds.scene_id = manifest.at("scene").get<std::string>();
    ds.held_out_view = manifest.at("held_out_view").get<int>();
    ds.seed = manifest.value("seed", 0ull);
    for (const auto& jf : manifest.at("frames")) {
        SceneFrame frame;
        frame.num_input_views = jf.at("num_input_views").get<int>();
        for (const auto& jh : jf.at("humans"))
            frame.humans.push_back(BodyParams::from_json(jh));
        for (const auto& jv : jf.at("views")) {
            Camera cam;
            cam.K = mat_from(jv.at("K"), 3, 3);
            cam.R = mat_from(jv.at("R"), 3, 3);
            auto t = jv.at("t").get<std::vector<double>>();
            cam.t = Vec3(t.at(0), t.at(1), t.at(2));
            cam.width = jv.at("width").get<int>();
            cam.height = jv.at("height").get<int>();
            frame.cameras.push_back(cam);
            Tensor img = load_image_png((fs::path(dir) / jv.at("image").get<std::string>()).string());
            if (img.dim(1) != cam.height || img.dim(2) != cam.width)
                throw std::runtime_error("dataset: image extents disagree with camera");
            frame.images.push_back(img);
            std::vector<Eigen::MatrixXd> uv_h;
            std::vector<Eigen::VectorXd> conf_h;
            for (const auto& jk : jv.at("keypoints")) {
                auto conf = jk.at("conf").get<std::vector<double>>();
                long J = (long)conf.size();
                uv_h.push_back(mat_from(jk.at("uv"), J, 2));
                conf_h.push_back(
                    Eigen::Map<Eigen::VectorXd>(conf.data(), (long)conf.size()));
            }
            if ((int)uv_h.size() != (int)frame.humans.size())
                throw std::runtime_error("dataset: keypoint set per human required");
            frame.kp_uv.push_back(uv_h);
            frame.kp_conf.push_back(conf_h);
        }
        if (frame.num_input_views < 1 ||
            frame.num_input_views > (int)frame.cameras.size())
            throw std::runtime_error("dataset: invalid input view count");
        ds.frames.push_back(std::move(frame));
    }
    if (ds.frames.empty()) throw std::runtime_error("dataset: no frames");
    return ds;
}

}  // namespace lnr
