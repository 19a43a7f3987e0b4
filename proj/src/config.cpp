#include "layernr/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace lnr {

using nlohmann::json;

namespace {

// Reads known keys from an object node, failing on anything unexpected.
class Section {
public:
    Section(const json& j, const std::string& name) : j_(j), name_(name) {
        if (!j.is_object())
            throw std::invalid_argument("config: " + name + " must be an object");
    }
    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key))
                throw std::invalid_argument("config: unknown key '" + name_ + "." +
                                            key + "'");
    }
    template <typename T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (j_.contains(key)) out = j_.at(key).get<T>();
    }
    const json* sub(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

void parse_synth(const json& j, SynthConfig& c) {
    Section s(j, "synth");
    s.get("humans", c.humans);
    s.get("views", c.views);
    s.get("query_views", c.query_views);
    s.get("held_out_views", c.held_out_views);
    s.get("image_size", c.image_size);
    s.get("pose_noise", c.pose_noise);
    s.get("trans_noise", c.trans_noise);
    s.get("truth_pose_spread", c.truth_pose_spread);
    s.get("perturb", c.perturb);
    s.finish();
}

void parse_model(const json& j, ModelConfig& c) {
    Section s(j, "model");
    if (const json* e = s.sub("encoder")) {
        Section se(*e, "model.encoder");
        se.get("coarse", c.encoder.coarse);
        se.get("mid", c.encoder.mid);
        se.get("fine", c.encoder.fine);
        se.get("fused", c.encoder.fused);
        se.finish();
    }
    if (const json* a = s.sub("align")) {
        Section sa(*a, "model.align");
        sa.get("steps", c.align.steps);
        sa.get("c2", c.align.c2);
        sa.get("dk1", c.align.dk1);
        sa.get("grid_res", c.align.grid_res);
        sa.get("grid_pad", c.align.grid_pad);
        sa.get("mlp_hidden", c.align.mlp_hidden);
        sa.get("offsets_enabled", c.align.offsets_enabled);
        sa.finish();
    }
    if (const json* f = s.sub("fusion")) {
        Section sf(*f, "model.fusion");
        sf.get("fused", c.fusion.fused);
        sf.get("dk1", c.fusion.dk1);
        sf.get("dk2", c.fusion.dk2);
        sf.get("sigma_width", c.fusion.sigma_width);
        sf.get("sigma_depth", c.fusion.sigma_depth);
        sf.get("color_width", c.fusion.color_width);
        sf.get("ctilde", c.fusion.ctilde);
        sf.get("l_dir", c.fusion.l_dir);
        sf.get("l_rgb", c.fusion.l_rgb);
        sf.get("attention", c.fusion.attention);
        sf.finish();
    }
    s.get("samples_per_segment", c.samples_per_segment);
    s.get("aabb_pad", c.aabb_pad);
    std::vector<double> bg{c.background.x(), c.background.y(), c.background.z()};
    s.get("background", bg);
    if (bg.size() != 3)
        throw std::invalid_argument("config: background must have 3 entries");
    c.background = Vec3(bg[0], bg[1], bg[2]);
    s.finish();
}

void parse_train(const json& j, TrainConfig& c) {
    Section s(j, "train");
    s.get("iterations", c.iterations);
    s.get("ray_batch", c.ray_batch);
    s.get("lr", c.lr);
    s.get("lr_final", c.lr_final);
    s.get("ema_decay", c.ema_decay);
    s.get("fg_fraction", c.fg_fraction);
    s.get("checkpoint_every", c.checkpoint_every);
    s.get("log_every", c.log_every);
    if (const json* w = s.sub("loss")) {
        Section sw(*w, "train.loss");
        sw.get("ph", c.loss.ph);
        sw.get("kpts", c.loss.kpts);
        sw.get("reg", c.loss.reg);
        sw.finish();
    }
    s.finish();
}

}  // namespace

json RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["synth"] = {{"humans", synth.humans},
                  {"views", synth.views},
                  {"query_views", synth.query_views},
                  {"held_out_views", synth.held_out_views},
                  {"image_size", synth.image_size},
                  {"pose_noise", synth.pose_noise},
                  {"trans_noise", synth.trans_noise},
                  {"truth_pose_spread", synth.truth_pose_spread},
                  {"perturb", synth.perturb}};
    j["model"] = {
        {"encoder",
         {{"coarse", model.encoder.coarse},
          {"mid", model.encoder.mid},
          {"fine", model.encoder.fine},
          {"fused", model.encoder.fused}}},
        {"align",
         {{"steps", model.align.steps},
          {"c2", model.align.c2},
          {"dk1", model.align.dk1},
          {"grid_res", model.align.grid_res},
          {"grid_pad", model.align.grid_pad},
          {"mlp_hidden", model.align.mlp_hidden},
          {"offsets_enabled", model.align.offsets_enabled}}},
        {"fusion",
         {{"fused", model.fusion.fused},
          {"dk1", model.fusion.dk1},
          {"dk2", model.fusion.dk2},
          {"sigma_width", model.fusion.sigma_width},
          {"sigma_depth", model.fusion.sigma_depth},
          {"color_width", model.fusion.color_width},
          {"ctilde", model.fusion.ctilde},
          {"l_dir", model.fusion.l_dir},
          {"l_rgb", model.fusion.l_rgb},
          {"attention", model.fusion.attention}}},
        {"samples_per_segment", model.samples_per_segment},
        {"aabb_pad", model.aabb_pad},
        {"background",
         {model.background.x(), model.background.y(), model.background.z()}}};
    j["train"] = {{"iterations", train.iterations},
                  {"ray_batch", train.ray_batch},
                  {"lr", train.lr},
                  {"lr_final", train.lr_final},
                  {"ema_decay", train.ema_decay},
                  {"fg_fraction", train.fg_fraction},
                  {"checkpoint_every", train.checkpoint_every},
                  {"log_every", train.log_every},
                  {"loss",
                   {{"ph", train.loss.ph},
                    {"kpts", train.loss.kpts},
                    {"reg", train.loss.reg}}}};
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig cfg;
    Section s(j, "config");
    s.get("seed", cfg.seed);
    if (const json* js = s.sub("synth")) parse_synth(*js, cfg.synth);
    if (const json* jm = s.sub("model")) parse_model(*jm, cfg.model);
    if (const json* jt = s.sub("train")) parse_train(*jt, cfg.train);
    s.finish();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: parse error: ") +
                                    e.what());
    }
    return RunConfig::from_json(j);
}

std::string config_hash(const RunConfig& cfg) {
    std::string text = cfg.to_json().dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
    return buf;
}

}  // namespace lnr
