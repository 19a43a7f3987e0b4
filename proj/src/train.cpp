#include "layernr/train.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>

namespace lnr {

using nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t iter) {
    std::uint64_t h = seed ^ (0x9e3779b97f4a7c15ull + iter);
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebull;
    h ^= h >> 31;
    return h;
}

// With EMA enabled the checkpoint's param entries hold the averaged weights
// (what render/eval should use) and the raw iterates go into "raw." extras so
// training can resume from them.
void save_state(const std::string& path, Adam& opt, const RunConfig& cfg,
                long iter, const std::map<std::string, Array>* ema) {
    std::map<std::string, Array> extras;
    for (auto& [name, m] : opt.first_moment()) extras["adam.m." + name] = m;
    for (auto& [name, v] : opt.second_moment()) extras["adam.v." + name] = v;
    if (ema)
        for (auto& [name, t] : opt.params()) {
            extras["raw." + name] = t.values();
            t.values() = ema->at(name);
        }
    std::map<std::string, std::string> meta;
    meta["iter"] = std::to_string(iter);
    meta["adam_steps"] = std::to_string(opt.step_count());
    meta["config_hash"] = config_hash(cfg);
    meta["config"] = cfg.to_json().dump();
    meta["artifact_version"] = "1";
    save_checkpoint(path, opt.params(), extras, meta);
    if (ema)
        for (auto& [name, t] : opt.params())
            t.values() = extras["raw." + name];
}

long restore_state(const std::string& path, Adam& opt,
                   std::map<std::string, Array>* ema) {
    Checkpoint ck = load_checkpoint(path);
    restore_params(ck, opt.params());
    for (auto& [name, m] : opt.first_moment()) {
        auto it = ck.entries.find("adam.m." + name);
        if (it == ck.entries.end())
            throw std::runtime_error("checkpoint: missing optimizer state for " +
                                     name);
        m = it->second.second;
    }
    for (auto& [name, v] : opt.second_moment()) {
        auto it = ck.entries.find("adam.v." + name);
        if (it == ck.entries.end())
            throw std::runtime_error("checkpoint: missing optimizer state for " +
                                     name);
        v = it->second.second;
    }
    if (ema)
        for (auto& [name, t] : opt.params()) {
            (*ema)[name] = t.values();  // param slot holds the EMA when saved
            auto raw = ck.entries.find("raw." + name);
            if (raw != ck.entries.end()) t.values() = raw->second.second;
        }
    opt.set_step_count(std::stol(ck.meta.at("adam_steps")));
    return std::stol(ck.meta.at("iter"));
}

}  // namespace

TrainResult train_model(Model& model, const Dataset& ds, const RunConfig& cfg,
                        const std::string& checkpoint_path, bool resume,
                        std::ostream* log, bool log_json) {
    if (ds.frames.empty()) throw std::invalid_argument("train: empty dataset");
    ParamMap params = model.params();
    for (auto& [name, t] : params) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    AdamConfig acfg;
    acfg.lr = cfg.train.lr;
    Adam opt(params, acfg);

    bool use_ema = cfg.train.ema_decay > 0;
    std::map<std::string, Array> ema;
    if (use_ema)
        for (auto& [name, t] : params) ema[name] = t.values();

    long start = 0;
    if (resume && std::filesystem::exists(checkpoint_path))
        start = restore_state(checkpoint_path, opt, use_ema ? &ema : nullptr);

    // query views: everything except the held-out camera
    std::vector<int> query_views;
    for (int v = 0; v < (int)ds.frames[0].cameras.size(); ++v)
        if (v != ds.held_out_view) query_views.push_back(v);
    if (query_views.empty())
        throw std::invalid_argument("train: no query views available");

    TrainResult result;
    double avg = 0;
    long avg_n = 0;
    for (long iter = start; iter < cfg.train.iterations; ++iter) {
        if (cfg.train.lr_final > 0 && cfg.train.iterations > 1) {
            double t = (double)iter / (double)(cfg.train.iterations - 1);
            opt.set_lr(cfg.train.lr_final +
                       0.5 * (cfg.train.lr - cfg.train.lr_final) *
                           (1.0 + std::cos(M_PI * t)));
        }
        std::mt19937_64 rng(mix(cfg.seed, (std::uint64_t)iter));
        const SceneFrame& frame =
            ds.frames[rng() % ds.frames.size()];

        // each batch mixes rays from all query views; optionally bias pixel
        // draws toward the non-black foreground
        int R = cfg.train.ray_batch;
        Eigen::MatrixXd uv(R, 2);
        Array gt_vals(3L * R);
        std::vector<Ray> rays;
        rays.reserve(R);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (int r = 0; r < R; ++r) {
            int qv = query_views[rng() % query_views.size()];
            const Camera& qcam = frame.cameras[qv];
            const Tensor& qimg = frame.images[qv];
            int x, y;
            const std::vector<long>& fg = fg_pixels(frame, qv);
            if (cfg.train.fg_fraction > 0 && !fg.empty() &&
                unit(rng) < cfg.train.fg_fraction) {
                long p = fg[rng() % fg.size()];
                x = (int)(p % qcam.width);
                y = (int)(p / qcam.width);
            } else {
                x = (int)(rng() % (std::uint64_t)qcam.width);
                y = (int)(rng() % (std::uint64_t)qcam.height);
            }
            uv(r, 0) = x + 0.5;
            uv(r, 1) = y + 0.5;
            for (int c = 0; c < 3; ++c)
                gt_vals[(long)r * 3 + c] =
                    qimg.values()[(long)c * qcam.height * qcam.width +
                                  (long)y * qcam.width + x];
            Eigen::MatrixXd uv1 = uv.row(r);
            rays.push_back(make_rays(qcam, uv1)[0]);
        }
        Tensor gt = Tensor::from_array({R, 3}, std::move(gt_vals));

        SceneEval ev = evaluate_scene(model, frame);
        CompositeResult res = render_rays(model, ev, rays, /*stratified=*/true,
                                          mix(cfg.seed ^ 0x5bf0ull, iter));

        std::vector<Tensor> kterms;
        std::vector<BodyParams> thetas;
        for (const auto& h : ev.humans) thetas.push_back(h.params);
        for (int v = 0; v < frame.num_input_views; ++v)
            for (size_t h = 0; h < ev.humans.size(); ++h) {
                Keypoints2D kp = keypoints2d(model.body, ev.humans[h].params,
                                             frame.cameras[v]);
                kterms.push_back(
                    keypoint_loss(kp, frame.kp_uv[v][h], frame.kp_conf[v][h]));
            }
        LossTerms lt =
            compute_loss(res.rgb, gt, kterms, thetas, cfg.train.loss);
        double loss = lt.total.item();
        if (!std::isfinite(loss)) {
            json diag;
            diag["iter"] = iter;
            diag["query_view"] = qv;
            diag["loss"] = loss;
            diag["photometric"] = lt.photometric.item();
            diag["keypoint"] = lt.keypoint.item();
            diag["regularizer"] = lt.regularizer.item();
            diag["pixels"] = json::array();
            for (int r = 0; r < R; ++r)
                diag["pixels"].push_back({uv(r, 0), uv(r, 1)});
            std::ofstream(checkpoint_path + ".diagnostic.json")
                << diag.dump(2) << "\n";
            throw numerical_error("train: non-finite loss at iteration " +
                                  std::to_string(iter));
        }
        backward(lt.total);
        opt.step();
        if (use_ema) {
            double d = cfg.train.ema_decay;
            for (auto& [name, t] : params) {
                Array& e = ema[name];
                e = d * e + (1 - d) * t.values();
            }
        }
        result.loss_history.push_back(loss);
        avg += loss;
        ++avg_n;

        if (log && cfg.train.log_every > 0 &&
            ((iter + 1) % cfg.train.log_every == 0 ||
             iter + 1 == cfg.train.iterations)) {
            if (log_json) {
                json line{{"iter", iter + 1},
                          {"loss", loss},
                          {"avg", avg / avg_n},
                          {"config_hash", config_hash(cfg)}};
                (*log) << line.dump() << "\n";
            } else {
                (*log) << "iter " << (iter + 1) << " loss " << loss << " avg "
                       << avg / avg_n << "\n";
            }
            avg = 0;
            avg_n = 0;
        }
        if (cfg.train.checkpoint_every > 0 &&
            (iter + 1) % cfg.train.checkpoint_every == 0)
            save_state(checkpoint_path, opt, cfg, iter + 1,
                       use_ema ? &ema : nullptr);
    }
    save_state(checkpoint_path, opt, cfg, cfg.train.iterations,
               use_ema ? &ema : nullptr);
    if (use_ema)  // leave the model holding the weights the checkpoint serves
        for (auto& [name, t] : params) t.values() = ema[name];
    result.iterations = cfg.train.iterations;
    return result;
}

}  // namespace lnr
