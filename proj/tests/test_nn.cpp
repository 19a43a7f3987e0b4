#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fd_check.hpp"
#include "layernr/nn.hpp"

#include <cstdio>
#include <filesystem>

using namespace lnr;

namespace {
std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("init determinism and fan-in bound") {
    std::mt19937_64 a(7), b(7), c(8);
    Tensor x = init_uniform({20, 30}, 20, a);
    Tensor y = init_uniform({20, 30}, 20, b);
    Tensor z = init_uniform({20, 30}, 20, c);
    CHECK((x.values() == y.values()).all());
    CHECK(!(x.values() == z.values()).all());
    double bound = std::sqrt(1.0 / 20);
    CHECK(x.values().abs().maxCoeff() <= bound);
    CHECK(x.values().abs().maxCoeff() > 0.5 * bound);  // not degenerate
}

TEST_CASE("linear and mlp forward shapes, zero init") {
    std::mt19937_64 rng(1);
    Linear lin(5, 3, rng, /*zero_init=*/true);
    CHECK((lin.w.values() == 0).all());
    Tensor x = testing::random_tensor({4, 5}, rng);
    Tensor y = lin.forward(x);
    CHECK(y.shape() == Shape{4, 3});
    CHECK((y.values() == 0).all());

    Mlp mlp({5, 16, 16, 2}, rng);
    Tensor out = mlp.forward(x);
    CHECK(out.shape() == Shape{4, 2});
    ParamMap pm;
    mlp.collect("mlp", pm);
    CHECK(pm.size() == 6);  // 3 layers x (w, b)
    CHECK(pm.count("mlp.l0.w") == 1);
    CHECK(pm.count("mlp.l2.b") == 1);
}

TEST_CASE("mlp gradient flows through all layers") {
    std::mt19937_64 rng(2);
    Mlp mlp({3, 8, 1}, rng);
    ParamMap pm;
    mlp.collect("m", pm);
    std::vector<Tensor> inputs;
    for (auto& [k, t] : pm) inputs.push_back(t);
    Tensor x = testing::random_tensor({6, 3}, rng);
    auto rep = testing::fd_check(inputs, [&] { return sum_all(mlp.forward(x)); });
    CHECK(rep.max_rel_err < 1e-4);
    CHECK(rep.checked > 10);
}

TEST_CASE("checkpoint round trip with extras and meta") {
    std::mt19937_64 rng(3);
    ParamMap params;
    params["a.w"] = testing::random_tensor({3, 4}, rng);
    params["b.v"] = testing::random_tensor({7}, rng);
    std::map<std::string, Array> extras;
    extras["opt.m:a.w"] = Array::Random(12);
    std::map<std::string, std::string> meta{{"step", "41"}, {"tag", "x"}};

    std::string path = tmp_path("lnr_ck_test.bin");
    save_checkpoint(path, params, extras, meta);
    Checkpoint ck = load_checkpoint(path);
    CHECK(ck.meta.at("step") == "41");
    CHECK(ck.meta.at("tag") == "x");
    CHECK(ck.entries.at("a.w").first == Shape{3, 4});
    CHECK((ck.entries.at("a.w").second == params["a.w"].values()).all());
    CHECK((ck.entries.at("opt.m:a.w").second == extras["opt.m:a.w"]).all());

    ParamMap fresh;
    fresh["a.w"] = Tensor::zeros({3, 4});
    fresh["b.v"] = Tensor::zeros({7});
    restore_params(ck, fresh);
    CHECK((fresh["a.w"].values() == params["a.w"].values()).all());

    ParamMap wrong;
    wrong["a.w"] = Tensor::zeros({4, 3});
    CHECK_THROWS(restore_params(ck, wrong));
    ParamMap missing;
    missing["nope"] = Tensor::zeros({2});
    CHECK_THROWS(restore_params(ck, missing));
    std::remove(path.c_str());
}

TEST_CASE("load rejects corrupt files") {
    std::string path = tmp_path("lnr_ck_bad.bin");
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("not a checkpoint at all", f);
        std::fclose(f);
    }
    CHECK_THROWS(load_checkpoint(path));
    CHECK_THROWS(load_checkpoint(tmp_path("lnr_ck_missing.bin")));
    std::remove(path.c_str());
}

TEST_CASE("adam state survives checkpointing") {
    // Train a few steps, checkpoint, keep training; a fresh optimizer restored
    // from the checkpoint must follow the original trajectory exactly.
    auto make_problem = [](ParamMap& pm) {
        pm["p"] = Tensor::from_vector({3}, {1.0, -2.0, 0.5});
        pm["p"].set_requires_grad(true);
    };
    auto loss_of = [](ParamMap& pm) { return sum_all(pm["p"] * pm["p"]); };

    ParamMap pm;
    make_problem(pm);
    Adam opt(pm, {});
    for (int i = 0; i < 5; ++i) {
        Tensor l = loss_of(pm);
        backward(l);
        opt.step();
    }
    std::string path = tmp_path("lnr_ck_adam.bin");
    std::map<std::string, Array> extras;
    for (auto& [k, a] : opt.first_moment()) extras["adam.m:" + k] = a;
    for (auto& [k, a] : opt.second_moment()) extras["adam.v:" + k] = a;
    save_checkpoint(path, pm, extras, {{"step", std::to_string(opt.step_count())}});

    for (int i = 0; i < 5; ++i) {
        Tensor l = loss_of(pm);
        backward(l);
        opt.step();
    }
    Array expect = pm["p"].values();

    ParamMap pm2;
    make_problem(pm2);
    Checkpoint ck = load_checkpoint(path);
    restore_params(ck, pm2);
    Adam opt2(pm2, {});
    for (auto& [k, a] : opt2.first_moment()) a = ck.entries.at("adam.m:" + k).second;
    for (auto& [k, a] : opt2.second_moment()) a = ck.entries.at("adam.v:" + k).second;
    opt2.set_step_count(std::stol(ck.meta.at("step")));
    for (int i = 0; i < 5; ++i) {
        Tensor l = loss_of(pm2);
        backward(l);
        opt2.step();
    }
    CHECK((pm2["p"].values() - expect).abs().maxCoeff() == 0.0);
    std::remove(path.c_str());
}

TEST_CASE("conv layers collect and run") {
    std::mt19937_64 rng(5);
    Conv2dLayer c2(3, 4, 3, 1, 1, rng);
    Tensor img = testing::random_tensor({3, 8, 8}, rng);
    Tensor y = c2.forward(img);
    CHECK(y.shape() == Shape{4, 8, 8});

    ConvT2dLayer ct(4, 2, 2, rng);
    Tensor up = ct.forward(y);
    CHECK(up.shape() == Shape{2, 16, 16});

    Conv3dLayer c3(2, 3, 3, 1, 1, rng);
    Tensor vol = testing::random_tensor({2, 5, 5, 5}, rng);
    Tensor v = c3.forward(vol);
    CHECK(v.shape() == Shape{3, 5, 5, 5});

    ParamMap pm;
    c2.collect("c2", pm);
    ct.collect("ct", pm);
    c3.collect("c3", pm);
    CHECK(pm.size() == 6);
}
