#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "nbv/fitter.hpp"
#include "nbv/trainer.hpp"

using namespace nbv;

namespace {

FeatureMap make_map(int h, int w, int c, std::vector<double> data) {
    FeatureMap m;
    m.height = h;
    m.width = w;
    m.channels = c;
    m.data = std::move(data);
    return m;
}

}  // namespace

TEST_CASE("affine extractor forward and parameter gradient") {
    AffineExtractor e(2, 2);
    // W = [[1, 2], [3, 4]], b = (0.5, -0.5)
    e.set_params({1.0, 2.0, 3.0, 4.0, 0.5, -0.5});
    FeatureMap obs = make_map(1, 2, 2, {1.0, 1.0, 2.0, -1.0});
    FeatureMap out = e.forward(obs);
    CHECK(out.data[0] == doctest::Approx(3.5).epsilon(1e-15));   // 1 + 2 + 0.5
    CHECK(out.data[1] == doctest::Approx(6.5).epsilon(1e-15));   // 3 + 4 - 0.5
    CHECK(out.data[2] == doctest::Approx(0.5).epsilon(1e-15));   // 2 - 2 + 0.5
    CHECK(out.data[3] == doctest::Approx(1.5).epsilon(1e-15));   // 6 - 4 - 0.5

    // L = <g, forward(obs)> for a fixed seed g; dL/dparams vs finite differences
    std::vector<double> g = {0.3, -0.7, 1.1, 0.4};
    std::vector<double> analytic = e.param_gradient(obs, g);
    std::vector<double> p0 = e.params();
    const double h = 1e-6;
    for (std::size_t i = 0; i < p0.size(); ++i) {
        auto eval = [&](double delta) {
            std::vector<double> p = p0;
            p[i] += delta;
            AffineExtractor probe(2, 2);
            probe.set_params(p);
            FeatureMap o = probe.forward(obs);
            double acc = 0.0;
            for (std::size_t j = 0; j < g.size(); ++j) acc += g[j] * o.data[j];
            return acc;
        };
        double fd = (eval(h) - eval(-h)) / (2.0 * h);
        CHECK(analytic[i] == doctest::Approx(fd).epsilon(1e-7));
    }
    CHECK_THROWS_AS(e.set_params({1.0}), ShapeError);

    AffineExtractor id = AffineExtractor::identity(3);
    FeatureMap obs3 = make_map(1, 1, 3, {0.1, -0.2, 0.3});
    FeatureMap out3 = id.forward(obs3);
    for (int j = 0; j < 3; ++j) CHECK(out3.data[j] == obs3.data[j]);
}

TEST_CASE("bank MLE update worked examples") {
    KernelFeatureBank bank;
    bank.num_kernels = 2;
    bank.num_orientations = 1;
    bank.feature_dim = 2;
    bank.features = {1.0, 0.0, 0.0, 1.0};  // rows e1 and e2

    BankAccumulator acc;
    acc.init(bank);
    // kernel 0 observes direction (3, 4) with weight 2; kernel 1 no support
    acc.numer = {6.0, 8.0, 0.0, 0.0};
    acc.denom = {2.0, 0.0};

    SUBCASE("momentum 0 replaces with the normalized weighted mean") {
        mle_update_bank(bank, acc, 0.0);
        CHECK(bank.feature(0, 0)[0] == doctest::Approx(0.6).epsilon(1e-15));
        CHECK(bank.feature(0, 0)[1] == doctest::Approx(0.8).epsilon(1e-15));
    }
    SUBCASE("momentum blends before renormalizing") {
        // new = normalize(0.9 e1 + 0.1 (0.6, 0.8)) = normalize(0.96, 0.08)
        mle_update_bank(bank, acc, 0.9);
        double n = std::sqrt(0.96 * 0.96 + 0.08 * 0.08);
        CHECK(bank.feature(0, 0)[0] == doctest::Approx(0.96 / n).epsilon(1e-14));
        CHECK(bank.feature(0, 0)[1] == doctest::Approx(0.08 / n).epsilon(1e-14));
    }
    SUBCASE("momentum 1 is the identity") {
        mle_update_bank(bank, acc, 1.0);
        CHECK(bank.feature(0, 0)[0] == 1.0);
        CHECK(bank.feature(0, 0)[1] == 0.0);
    }
    SUBCASE("zero-support rows stay put") {
        mle_update_bank(bank, acc, 0.0);
        CHECK(bank.feature(1, 0)[0] == 0.0);
        CHECK(bank.feature(1, 0)[1] == 1.0);
    }
    SUBCASE("shape mismatch throws") {
        BankAccumulator bad;
        bad.init(bank);
        bad.num_kernels = 3;
        CHECK_THROWS_AS(mle_update_bank(bank, bad, 0.5), ShapeError);
    }
}

TEST_CASE("bank update fixed point when features already match the bank") {
    KernelFeatureBank bank = make_random_bank(3, 2, 4, 77);
    KernelFeatureBank before = bank;
    BankAccumulator acc;
    acc.init(bank);
    std::mt19937_64 rng(5);
    for (int k = 0; k < 3; ++k)
        for (int o = 0; o < 2; ++o) {
            std::size_t ko = static_cast<std::size_t>(k) * 2 + o;
            double den = 0.5 + static_cast<double>(rng() % 100) / 50.0;
            acc.denom[ko] = den;
            for (int j = 0; j < 4; ++j) acc.numer[ko * 4 + j] = den * bank.feature(k, o)[j];
        }
    mle_update_bank(bank, acc, 0.4);
    for (std::size_t i = 0; i < bank.features.size(); ++i)
        CHECK(bank.features[i] == doctest::Approx(before.features[i]).epsilon(1e-12));
}

TEST_CASE("accumulator gamma weights are alpha times orientation weight") {
    KernelFeatureBank bank = make_random_bank(1, 3, 2, 1);
    BankAccumulator acc;
    acc.init(bank);
    TrainBatchScene scene;
    scene.contributions = {Contribution{0, 0, 0.4}};
    scene.mask = {1};
    scene.limb_weights.assign(kNumLimbs, {0.5, 0.3, 0.2});
    FeatureMap feats = make_map(1, 1, 2, {2.0, -1.0});
    acc.add(scene, feats, std::vector<int>(1, 0));
    double denom_sum = 0.0;
    for (int o = 0; o < 3; ++o) {
        double gamma = 0.4 * scene.limb_weights[0][static_cast<std::size_t>(o)];
        CHECK(acc.denom[static_cast<std::size_t>(o)] == doctest::Approx(gamma).epsilon(1e-15));
        CHECK(acc.numer[static_cast<std::size_t>(o) * 2] ==
              doctest::Approx(gamma * 2.0).epsilon(1e-15));
        CHECK(acc.numer[static_cast<std::size_t>(o) * 2 + 1] ==
              doctest::Approx(-gamma).epsilon(1e-15));
        denom_sum += acc.denom[static_cast<std::size_t>(o)];
    }
    CHECK(denom_sum == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("background fit examples") {
    SUBCASE("constant background clamps sigma") {
        FeatureMap m = make_map(1, 3, 1, {2.0, 2.0, 2.0});
        std::vector<uint8_t> mask = {0, 0, 0};
        BackgroundModel bg = fit_background({&m}, {&mask});
        CHECK(bg.mean[0] == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(bg.sigma == 1e-3);
    }
    SUBCASE("two-pixel example") {
        FeatureMap m = make_map(1, 2, 1, {0.0, 2.0});
        std::vector<uint8_t> mask = {0, 0};
        BackgroundModel bg = fit_background({&m}, {&mask});
        CHECK(bg.mean[0] == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(bg.sigma == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("random data matches a direct oracle") {
        std::mt19937_64 rng(9);
        std::normal_distribution<double> gauss(0.3, 1.7);
        const int n = 40, d = 3;
        std::vector<double> data(static_cast<std::size_t>(n) * d);
        for (double& x : data) x = gauss(rng);
        FeatureMap m = make_map(4, 10, d, data);
        std::vector<uint8_t> mask(n, 0);
        mask[3] = mask[17] = 1;  // a couple of FG pixels to skip
        BackgroundModel bg = fit_background({&m}, {&mask});
        std::vector<double> mean(d, 0.0);
        int count = 0;
        for (int p = 0; p < n; ++p) {
            if (mask[static_cast<std::size_t>(p)]) continue;
            for (int j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += m.pixel(p)[j];
            ++count;
        }
        for (double& v : mean) v /= count;
        double var = 0.0;
        for (int p = 0; p < n; ++p) {
            if (mask[static_cast<std::size_t>(p)]) continue;
            for (int j = 0; j < d; ++j) {
                double diff = m.pixel(p)[j] - mean[static_cast<std::size_t>(j)];
                var += diff * diff;
            }
        }
        var /= static_cast<double>(count) * d;
        for (int j = 0; j < d; ++j)
            CHECK(bg.mean[static_cast<std::size_t>(j)] ==
                  doctest::Approx(mean[static_cast<std::size_t>(j)]).epsilon(1e-12));
        CHECK(bg.sigma == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
    }
    SUBCASE("all-foreground throws") {
        FeatureMap m = make_map(1, 1, 1, {1.0});
        std::vector<uint8_t> mask = {1};
        CHECK_THROWS_AS(fit_background({&m}, {&mask}), ValidationError);
    }
}

TEST_CASE("contrastive losses on small exhaustive sets") {
    const int d = 2;
    SUBCASE("identical features give zero") {
        std::vector<double> f = {1.0, 2.0, 1.0, 2.0, 1.0, 2.0};
        ContrastiveResult r = contrastive_losses(f, 3, d, {0, 1}, {2}, {{0, 0}, {0, 1}}, 0);
        CHECK(r.l_fg == 0.0);
        CHECK(r.l_3d == 0.0);
        CHECK(r.l_bg == 0.0);
        CHECK(r.total == 0.0);
    }
    SUBCASE("two foreground pixels at distance 1") {
        std::vector<double> f = {0.0, 0.0, 1.0, 0.0};
        ContrastiveResult r = contrastive_losses(f, 2, d, {0, 1}, {}, {{0, 0}, {1, 0}}, 0);
        CHECK(r.l_fg == doctest::Approx(-1.0).epsilon(1e-15));
        CHECK(r.l_bg == 0.0);
        CHECK(r.l_3d == 0.0);  // different kernels, no 3D pairs
    }
    SUBCASE("exhaustive oracle below the pair cap") {
        std::mt19937_64 rng(33);
        std::normal_distribution<double> gauss(0.0, 1.0);
        const int n = 7;
        std::vector<double> f(static_cast<std::size_t>(n) * d);
        for (double& x : f) x = gauss(rng);
        std::vector<int> fg = {0, 1, 2, 3};
        std::vector<int> bg = {4, 5, 6};
        std::vector<std::pair<int, int>> assign = {{0, 0}, {0, 1}, {0, 1}, {1, 0}};
        ContrastiveResult r = contrastive_losses(f, n, d, fg, bg, assign, 12345, 4096, true);

        auto dist2 = [&](int a, int b) {
            double acc = 0.0;
            for (int j = 0; j < d; ++j) {
                double diff = f[static_cast<std::size_t>(a) * d + j] -
                              f[static_cast<std::size_t>(b) * d + j];
                acc += diff * diff;
            }
            return acc;
        };
        double l_fg = 0.0;
        for (int a : fg)
            for (int b : fg)
                if (a != b) l_fg += dist2(a, b);
        l_fg /= -(4.0 * 3.0);
        CHECK(r.l_fg == doctest::Approx(l_fg).epsilon(1e-12));
        // kernel 0 members {0,1,2}, cross-orientation ordered pairs: (0,1),(0,2),(1,0),(2,0)
        double l_3d = -(dist2(0, 1) + dist2(0, 2) + dist2(1, 0) + dist2(2, 0)) / 4.0;
        CHECK(r.l_3d == doctest::Approx(l_3d).epsilon(1e-12));
        double l_bg = 0.0;
        for (int a : fg)
            for (int b : bg) l_bg += dist2(a, b);
        l_bg /= -(4.0 * 3.0);
        CHECK(r.l_bg == doctest::Approx(l_bg).epsilon(1e-12));
        CHECK(r.total == doctest::Approx(l_fg + l_3d + l_bg).epsilon(1e-12));
        CHECK(r.total <= 0.0);

        // gradient vs finite differences
        const double h = 1e-6;
        for (std::size_t i = 0; i < f.size(); ++i) {
            std::vector<double> fp = f, fm = f;
            fp[i] += h;
            fm[i] -= h;
            double fd = (contrastive_losses(fp, n, d, fg, bg, assign, 12345).total -
                         contrastive_losses(fm, n, d, fg, bg, assign, 12345).total) /
                        (2.0 * h);
            CHECK(r.d_features[i] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
    SUBCASE("translation invariance") {
        std::vector<double> f = {0.0, 1.0, 2.0, -1.0, 0.5, 0.5, 3.0, 3.0};
        std::vector<int> fg = {0, 1};
        std::vector<int> bg = {2, 3};
        std::vector<std::pair<int, int>> assign = {{0, 0}, {0, 1}};
        ContrastiveResult a = contrastive_losses(f, 4, d, fg, bg, assign, 1);
        for (std::size_t p = 0; p < 4; ++p)
            for (int j = 0; j < d; ++j) f[p * d + j] += 10.0;
        ContrastiveResult b = contrastive_losses(f, 4, d, fg, bg, assign, 1);
        CHECK(a.total == doctest::Approx(b.total).epsilon(1e-12));
    }
    SUBCASE("empty index sets give zero") {
        std::vector<double> f = {1.0, 2.0};
        ContrastiveResult r = contrastive_losses(f, 1, d, {}, {0}, {}, 0);
        CHECK(r.total == 0.0);
    }
    SUBCASE("sampled regime is seed-deterministic") {
        std::mt19937_64 rng(44);
        std::normal_distribution<double> gauss(0.0, 1.0);
        const int n = 200;
        std::vector<double> f(static_cast<std::size_t>(n) * d);
        for (double& x : f) x = gauss(rng);
        std::vector<int> fg, bg;
        std::vector<std::pair<int, int>> assign;
        for (int p = 0; p < n; ++p) {
            if (p % 2 == 0) {
                fg.push_back(p);
                assign.emplace_back(p % 5, p % 3);
            } else {
                bg.push_back(p);
            }
        }
        ContrastiveResult a = contrastive_losses(f, n, d, fg, bg, assign, 9, 64);
        ContrastiveResult b = contrastive_losses(f, n, d, fg, bg, assign, 9, 64);
        CHECK(a.total == b.total);
        ContrastiveResult c = contrastive_losses(f, n, d, fg, bg, assign, 10, 64);
        CHECK(a.total != c.total);
    }
}

TEST_CASE("image NLL feature gradient matches finite differences") {
    const int d = 2;
    FeatureMap feats = make_map(2, 2, d, {0.4, -0.2, 1.0, 0.5, -0.3, 0.8, 0.0, 0.0});
    std::vector<double> rendered = {0.5, 0.0, 0.9, 0.4, 0.0, 0.0, 0.0, 0.0};
    std::vector<uint8_t> mask = {1, 1, 0, 0};
    BackgroundModel bg;
    bg.mean = {0.1, 0.1};
    bg.sigma = 0.8;
    for (RobustMode mode : {RobustMode::kMarginal, RobustMode::kOff}) {
        std::vector<double> grad;
        double base = image_nll_feature_grad(feats, rendered, mask, bg, 0.6, mode, &grad);
        CHECK(std::isfinite(base));
        const double h = 1e-6;
        for (std::size_t i = 0; i < feats.data.size(); ++i) {
            FeatureMap fp = feats, fm = feats;
            fp.data[i] += h;
            fm.data[i] -= h;
            double fd = (image_nll_feature_grad(fp, rendered, mask, bg, 0.6, mode, nullptr) -
                         image_nll_feature_grad(fm, rendered, mask, bg, 0.6, mode, nullptr)) /
                        (2.0 * h);
            CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("training loop runs, records a baseline and is deterministic") {
    BodyTemplate tmpl = make_chain_template(5);
    OrientationBins bins = make_orientation_bins(4, 5.0);
    const int d = 3;
    RenderParams render;
    render.density_scale = 0.15;
    render.t_far = 10.0;

    Camera camera;
    camera.focal = 40.0;
    camera.principal_x = camera.principal_y = 16.0;
    camera.image_height = camera.image_width = 32;
    camera.feature_stride = 4;
    camera.translation = {0.0, -0.3, 2.0};

    KernelFeatureBank gt_bank = make_random_bank(tmpl.num_kernels, 4, d, 3);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> unif(-0.2, 0.2);
    std::normal_distribution<double> gauss(0.0, 0.05);
    std::vector<TrainScene> scenes;
    for (int s = 0; s < 3; ++s) {
        TrainScene scene;
        scene.theta = PoseParams::rest(tmpl.num_joints);
        for (auto& v : scene.theta.joint_rotations) v = {unif(rng), unif(rng), unif(rng)};
        scene.beta = ShapeParams::zero(tmpl.num_shape_dims);
        scene.camera = camera;
        PosedBody posed = pose_kernels(tmpl, scene.theta, scene.beta);
        std::vector<Vec3d> dirs(posed.limb_orientations.size());
        for (std::size_t l = 0; l < dirs.size(); ++l)
            dirs[l] = camera.rotation * posed.limb_orientations[l];
        std::vector<double> ef =
            expected_kernel_features<double>(gt_bank, dirs, tmpl.kernel_limb, bins);
        RenderOutput out = render_feature_map(posed, ef, d, camera, render);
        scene.observation = make_map(out.height, out.width, d, out.features);
        for (double& x : scene.observation.data) x += gauss(rng);
        scenes.push_back(std::move(scene));
    }

    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 42;
    auto run = [&]() {
        AffineExtractor extractor = AffineExtractor::identity(d);
        KernelFeatureBank bank = make_random_bank(tmpl.num_kernels, 4, d, 99);
        BackgroundModel background;
        background.mean.assign(d, 0.0);
        background.sigma = 1.0;
        TrainHistory h =
            train_loop(extractor, scenes, tmpl, bank, background, bins, render, cfg);
        bank.validate();  // rows stay unit-norm
        return h;
    };
    TrainHistory h1 = run();
    CHECK(h1.nll.size() == 4);  // baseline + 3 epochs
    CHECK(h1.total.size() == 4);
    for (double v : h1.total) CHECK(std::isfinite(v));
    // the bank MLE step against GT-pose renders improves the NLL immediately
    CHECK(h1.nll.back() < h1.nll.front());

    TrainHistory h2 = run();
    CHECK(h1.nll == h2.nll);
    CHECK(h1.total == h2.total);

    std::vector<TrainScene> empty;
    AffineExtractor extractor = AffineExtractor::identity(d);
    KernelFeatureBank bank = make_random_bank(tmpl.num_kernels, 4, d, 99);
    BackgroundModel background;
    background.mean.assign(d, 0.0);
    background.sigma = 1.0;
    CHECK_THROWS_AS(train_loop(extractor, empty, tmpl, bank, background, bins, render, cfg),
                    ConfigError);
}
