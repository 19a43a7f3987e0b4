#include "layernr/metrics.hpp"
#include "layernr/train.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace lnr;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct GlobalOpts {
    std::string config_path;
    int threads = 0;
    bool log_json = false;
};

RunConfig resolve_config(const GlobalOpts& g) {
    if (g.config_path.empty()) return RunConfig{};
    return load_run_config(g.config_path);
}

void apply_threads(const GlobalOpts& g) {
    int n = g.threads;
    if (n <= 0)
        if (const char* env = std::getenv("LAYERNR_THREADS")) n = std::atoi(env);
    if (n > 0) Eigen::setNbThreads(n);
}

struct LoadedModel {
    RunConfig cfg;
    Model model;
};

LoadedModel model_from_checkpoint(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    auto it = ck.meta.find("config");
    if (it == ck.meta.end())
        throw std::runtime_error("checkpoint lacks an embedded config");
    LoadedModel lm;
    lm.cfg = RunConfig::from_json(json::parse(it->second));
    std::mt19937_64 rng(lm.cfg.seed);
    lm.model = Model(lm.cfg.model, make_humanoid_template(), rng);
    ParamMap pm = lm.model.params();
    restore_params(ck, pm);
    return lm;
}

// Rounds to the 8-bit grid the PNG stores, so reported metrics match the
// written file exactly.
Tensor quantize8(const Tensor& img) {
    Tensor q = img.detach();
    for (long i = 0; i < q.size(); ++i) {
        double v = std::clamp(q.values()[i], 0.0, 1.0);
        q.values()[i] = std::round(v * 255.0) / 255.0;
    }
    return q;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write " + path);
}

double kp_error(const BodyTemplate& tmpl, const BodyParams& params,
                const SceneFrame& frame, int human) {
    NoGradGuard guard;
    double total = 0;
    int views = 0;
    for (int v = 0; v < frame.num_input_views; ++v) {
        Keypoints2D kp = keypoints2d(tmpl, params, frame.cameras[v]);
        total += keypoint_loss(kp, frame.kp_uv[v][human], frame.kp_conf[v][human])
                     .item();
        ++views;
    }
    return views ? total / views : 0.0;
}

int cmd_synth(const GlobalOpts& g, const std::string& out_dir, bool force) {
    RunConfig cfg = resolve_config(g);
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force) {
        std::cerr << "output directory " << out_dir
                  << " is not empty (use --force)\n";
        return kExitData;
    }
    BodyTemplate tmpl = make_humanoid_template();
    SyntheticScene scene = synth_scene(cfg.seed, cfg.synth, tmpl);
    Dataset ds;
    ds.scene_id = "synth-" + std::to_string(cfg.seed);
    ds.held_out_view = scene.held_out_view;
    ds.seed = cfg.seed;
    ds.frames.push_back(scene.frame);
    save_dataset(out_dir, ds);
    write_json((fs::path(out_dir) / "run.json").string(),
               json{{"config", cfg.to_json()},
                    {"config_hash", config_hash(cfg)},
                    {"artifact_version", 1}});
    if (g.log_json)
        std::cout << json{{"event", "synth"},
                          {"out", out_dir},
                          {"config_hash", config_hash(cfg)}}
                         .dump()
                  << "\n";
    else
        std::cout << "wrote dataset to " << out_dir << "\n";
    return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& data_dir,
              const std::string& out_ckpt, bool resume) {
    RunConfig cfg = resolve_config(g);
    Dataset ds = load_dataset(data_dir);
    std::mt19937_64 rng(cfg.seed);
    Model model(cfg.model, make_humanoid_template(), rng);
    train_model(model, ds, cfg, out_ckpt, resume, &std::cout, g.log_json);
    if (!g.log_json) std::cout << "wrote checkpoint to " << out_ckpt << "\n";
    return 0;
}

int cmd_render(const GlobalOpts& g, const std::string& ckpt,
               const std::string& data_dir, int frame, int view,
               const std::string& out_png) {
    LoadedModel lm = model_from_checkpoint(ckpt);
    Dataset ds = load_dataset(data_dir);
    if (frame < 0 || frame >= (int)ds.frames.size())
        throw std::runtime_error("frame index out of range");
    const SceneFrame& f = ds.frames[frame];
    if (view < 0 || view >= (int)f.cameras.size())
        throw std::runtime_error("view index out of range");
    const Camera& cam = f.cameras[view];
    Tensor img = quantize8(render_image(lm.model, f, cam, cam.width, cam.height));
    save_image_png(out_png, img);
    json metrics{{"frame", frame},
                 {"view", view},
                 {"psnr", psnr(img, f.images[view])},
                 {"ssim", ssim(img, f.images[view])},
                 {"config_hash", config_hash(lm.cfg)},
                 {"artifact_version", 1}};
    write_json(out_png + ".metrics.json", metrics);
    if (g.log_json)
        std::cout << metrics.dump() << "\n";
    else
        std::cout << "psnr " << metrics["psnr"].get<double>() << " ssim "
                  << metrics["ssim"].get<double>() << "\n";
    return 0;
}

int cmd_align(const GlobalOpts& g, const std::string& ckpt,
              const std::string& data_dir, int frame,
              const std::string& out_json) {
    LoadedModel lm = model_from_checkpoint(ckpt);
    Dataset ds = load_dataset(data_dir);
    if (frame < 0 || frame >= (int)ds.frames.size())
        throw std::runtime_error("frame index out of range");
    const SceneFrame& f = ds.frames[frame];
    SceneEval ev = evaluate_scene(lm.model, f);
    json humans = json::array();
    for (size_t h = 0; h < ev.humans.size(); ++h) {
        json entry = aligned_to_json(ev.humans[h]);
        entry["initial_error"] =
            kp_error(lm.model.body, f.humans[h], f, (int)h);
        entry["aligned_error"] =
            kp_error(lm.model.body, ev.humans[h].params, f, (int)h);
        humans.push_back(entry);
    }
    json report{{"frame", frame},
                {"humans", humans},
                {"config_hash", config_hash(lm.cfg)},
                {"artifact_version", 1}};
    write_json(out_json, report);
    if (g.log_json) std::cout << report.dump() << "\n";
    return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& ckpt,
             const std::string& data_dir, const std::string& split,
             const std::string& out_json) {
    if (split != "held_out" && split != "all")
        throw std::invalid_argument("split must be 'held_out' or 'all'");
    LoadedModel lm = model_from_checkpoint(ckpt);
    Dataset ds = load_dataset(data_dir);
    json views = json::array();
    double psum = 0, ssum = 0;
    long count = 0;
    for (size_t fi = 0; fi < ds.frames.size(); ++fi) {
        const SceneFrame& f = ds.frames[fi];
        for (int v = 0; v < (int)f.cameras.size(); ++v) {
            if (split == "held_out" && v != ds.held_out_view) continue;
            const Camera& cam = f.cameras[v];
            Tensor img = quantize8(
                render_image(lm.model, f, cam, cam.width, cam.height));
            double p = psnr(img, f.images[v]), s = ssim(img, f.images[v]);
            views.push_back(
                {{"frame", fi}, {"view", v}, {"psnr", p}, {"ssim", s}});
            psum += p;
            ssum += s;
            ++count;
        }
    }
    if (count == 0) throw std::invalid_argument("eval: empty split");
    json report{{"split", split},
                {"views", views},
                {"mean_psnr", psum / count},
                {"mean_ssim", ssum / count},
                {"config_hash", config_hash(lm.cfg)},
                {"artifact_version", 1}};
    write_json(out_json, report);
    if (g.log_json)
        std::cout << report.dump() << "\n";
    else
        std::cout << "mean psnr " << psum / count << " mean ssim "
                  << ssum / count << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Layered neural radiance fields for multi-human scenes"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON run configuration");
    app.add_option("--threads", g.threads, "worker threads (or LAYERNR_THREADS)");
    app.add_flag("--log-json", g.log_json, "machine-readable log lines");

    std::string out_dir, data_dir, ckpt, out_png, out_json, split = "held_out";
    int frame = 0, view = 0;
    bool force = false, resume = false;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_flag("--force", force, "overwrite a non-empty directory");

    auto* train = app.add_subcommand("train", "optimize model weights");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", ckpt, "checkpoint path")->required();
    train->add_flag("--resume", resume, "continue from an existing checkpoint");

    auto* render = app.add_subcommand("render", "render one view");
    render->add_option("--checkpoint", ckpt)->required();
    render->add_option("--data", data_dir)->required();
    render->add_option("--frame", frame);
    render->add_option("--view", view);
    render->add_option("--out", out_png, "output PNG")->required();

    auto* align = app.add_subcommand("align", "report aligned body parameters");
    align->add_option("--checkpoint", ckpt)->required();
    align->add_option("--data", data_dir)->required();
    align->add_option("--frame", frame);
    align->add_option("--out", out_json, "report path")->required();

    auto* eval = app.add_subcommand("eval", "aggregate metrics over a split");
    eval->add_option("--checkpoint", ckpt)->required();
    eval->add_option("--data", data_dir)->required();
    eval->add_option("--split", split, "held_out or all");
    eval->add_option("--out", out_json, "report path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        apply_threads(g);
        if (synth->parsed()) return cmd_synth(g, out_dir, force);
        if (train->parsed()) return cmd_train(g, data_dir, ckpt, resume);
        if (render->parsed())
            return cmd_render(g, ckpt, data_dir, frame, view, out_png);
        if (align->parsed()) return cmd_align(g, ckpt, data_dir, frame, out_json);
        if (eval->parsed())
            return cmd_eval(g, ckpt, data_dir, split, out_json);
    } catch (const numerical_error& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
