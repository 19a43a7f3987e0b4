#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fd_check.hpp"
#include "layernr/imagefeat.hpp"

#include <cstdio>
#include <filesystem>

using namespace lnr;

TEST_CASE("encode pyramid extents and determinism") {
    std::mt19937_64 rng(1);
    ImageEncoder enc({}, rng);
    Tensor img = testing::random_tensor({3, 64, 64}, rng, 0.0, 1.0);
    FeaturePyramid pyr = enc.encode(img);
    REQUIRE(pyr.levels.size() == 3);
    CHECK(pyr.levels[0].shape() == Shape{64, 16, 16});
    CHECK(pyr.levels[1].shape() == Shape{32, 32, 32});
    CHECK(pyr.levels[2].shape() == Shape{16, 64, 64});

    FeaturePyramid again = enc.encode(img);
    for (int l = 0; l < 3; ++l)
        CHECK((pyr.levels[l].values() == again.levels[l].values()).all());

    CHECK_THROWS(enc.encode(testing::random_tensor({1, 64, 64}, rng)));
    CHECK_THROWS(enc.encode(testing::random_tensor({3, 62, 64}, rng)));
}

TEST_CASE("zero image through zero-bias encoder is all zero") {
    std::mt19937_64 rng(2);
    ImageEncoder enc({}, rng);
    ParamMap pm;
    enc.collect("enc", pm);
    for (auto& [k, t] : pm)
        if (k.size() > 2 && k.substr(k.size() - 2) == ".b") t.values().setZero();
    FeaturePyramid pyr = enc.encode(Tensor::zeros({3, 16, 16}));
    for (auto& lv : pyr.levels) CHECK(lv.values().abs().maxCoeff() == 0.0);
    CHECK(enc.fuse_levels(pyr, 1).values().abs().maxCoeff() == 0.0);
    CHECK(enc.fuse_levels(pyr, 2).values().abs().maxCoeff() == 0.0);
}

TEST_CASE("fuse_levels shapes and pre-mix channel arithmetic") {
    std::mt19937_64 rng(3);
    EncoderConfig cfg;
    ImageEncoder enc(cfg, rng);
    Tensor img = testing::random_tensor({3, 32, 32}, rng, 0.0, 1.0);
    FeaturePyramid pyr = enc.encode(img);
    Tensor f1 = enc.fuse_levels(pyr, 1);
    Tensor f2 = enc.fuse_levels(pyr, 2);
    CHECK(f1.shape() == Shape{cfg.fused, 16, 16});
    CHECK(f2.shape() == Shape{cfg.fused, 32, 32});
    // mixer input channels are C_{l-1} + C_l by construction
    CHECK(enc.mix[0].w.dim(1) == cfg.coarse + cfg.mid);
    CHECK(enc.mix[1].w.dim(1) == cfg.mid + cfg.fine);
    CHECK_THROWS(enc.fuse_levels(pyr, 0));
    CHECK_THROWS(enc.fuse_levels(pyr, 3));
}

TEST_CASE("projection matches homogeneous 3x4 oracle") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Camera cam;
        cam.K << 80 + 10 * d(rng), 0, 32 + d(rng), 0, 80 + 10 * d(rng),
            32 + d(rng), 0, 0, 1;
        cam.R = Eigen::AngleAxisd(d(rng), Vec3(d(rng), d(rng), d(rng)).normalized())
                    .toRotationMatrix();
        cam.t = Vec3(d(rng), d(rng), 3.0 + d(rng));
        Vec3 x(d(rng), d(rng), d(rng));

        Eigen::Matrix<double, 3, 4> P;
        P.leftCols<3>() = cam.K * cam.R;
        P.col(3) = cam.K * cam.t;
        Eigen::Vector4d xh(x.x(), x.y(), x.z(), 1.0);
        Vec3 h = P * xh;

        auto p = cam.project(x);
        REQUIRE(p.in_front);
        CHECK(p.u == doctest::Approx(h.x() / h.z()).epsilon(1e-12));
        CHECK(p.v == doctest::Approx(h.y() / h.z()).epsilon(1e-12));
        CHECK(p.depth == doctest::Approx(h.z()).epsilon(1e-12));
    }
    Camera cam;
    CHECK(!cam.project(Vec3(0, 0, -1)).in_front);
    cam.K << 100, 0, 32, 0, 100, 40, 0, 0, 1;
    auto p = cam.project(Vec3(0, 0, 1));
    CHECK(p.u == doctest::Approx(32.0));
    CHECK(p.v == doctest::Approx(40.0));
    auto q = cam.project(Vec3(0.1, 0, 1));
    CHECK(q.u == doctest::Approx(42.0));
}

TEST_CASE("bilinear sampling rules") {
    // 1-channel 2x2 plane with distinct values
    Tensor plane = Tensor::from_vector({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    Eigen::MatrixXd uv(4, 2);
    uv << 0, 0,       // exact texel
        1, 0,         // exact texel (u=x=1, v=y=0)
        0.5, 0.5,     // center of all four
        -5, -5;       // clamps to (0,0)
    Tensor out = bilinear_sample(plane, uv);
    CHECK(out.values()[0] == doctest::Approx(1.0));
    CHECK(out.values()[1] == doctest::Approx(2.0));
    CHECK(out.values()[2] == doctest::Approx(2.5));
    CHECK(out.values()[3] == doctest::Approx(1.0));
}

TEST_CASE("bilinear sampling is continuous in uv") {
    std::mt19937_64 rng(6);
    Tensor plane = testing::random_tensor({2, 5, 5}, rng);
    double range = plane.values().maxCoeff() - plane.values().minCoeff();
    std::uniform_real_distribution<double> d(0.0, 4.0);
    for (int i = 0; i < 50; ++i) {
        double u = d(rng), v = d(rng), eps = 1e-4;
        Eigen::MatrixXd uv(2, 2);
        uv << u, v, u + eps, v + eps;
        Tensor s = bilinear_sample(plane, uv);
        for (int c = 0; c < 2; ++c)
            CHECK(std::abs(s.values()[2 + c] - s.values()[c]) <= 4 * eps * range);
    }
}

TEST_CASE("gradients reach encoder weights through fuse and sample") {
    std::mt19937_64 rng(7);
    EncoderConfig cfg{8, 6, 4, 5};
    ImageEncoder enc(cfg, rng);
    ParamMap pm;
    enc.collect("enc", pm);
    for (auto& [k, t] : pm) t.set_requires_grad(true);

    Tensor img = testing::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    Eigen::MatrixXd uv(3, 2);
    uv << 2.3, 4.1, 7.7, 1.2, 0.0, 15.0;
    Tensor feats = bilinear_sample(enc.fuse_levels(enc.encode(img), 2), uv);
    Tensor loss = testing::weighted_sum(feats, rng);
    backward(loss);
    int with_grad = 0;
    for (auto& [k, t] : pm)
        if (t.grad().abs().maxCoeff() > 0) ++with_grad;
    // down2/up1/mix1 feed only the level-0 path, unused at l=2
    CHECK(with_grad == (int)pm.size() - 6);
}

TEST_CASE("fd gradients through a tiny encoder") {
    std::mt19937_64 rng(8);
    EncoderConfig cfg{4, 3, 2, 3};
    ImageEncoder enc(cfg, rng);
    ParamMap pm;
    enc.collect("enc", pm);
    std::vector<Tensor> inputs;
    for (auto& [k, t] : pm) inputs.push_back(t);
    Tensor img = testing::random_tensor({3, 8, 8}, rng, 0.0, 1.0);
    auto rep = testing::fd_check(inputs, [&] {
        return sum_all(enc.fuse_levels(enc.encode(img), 1)) +
               sum_all(enc.fuse_levels(enc.encode(img), 2));
    });
    CHECK(rep.max_rel_err < 2e-4);
    CHECK(rep.checked > 50);
}

TEST_CASE("png round trip") {
    namespace fs = std::filesystem;
    std::string path = (fs::temp_directory_path() / "lnr_img_test.png").string();
    std::mt19937_64 rng(9);
    Tensor img = testing::random_tensor({3, 12, 10}, rng, 0.0, 1.0);
    save_image_png(path, img);
    Tensor back = load_image_png(path);
    REQUIRE(back.shape() == Shape{3, 12, 10});
    // 8-bit quantization bound
    CHECK((back.values() - img.values()).abs().maxCoeff() <= 0.5 / 255.0 + 1e-12);
    std::remove(path.c_str());
    CHECK_THROWS(load_image_png(path));
}
