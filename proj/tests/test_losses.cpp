#include "support.hpp"

#include "mapsed/losses.hpp"
#include "mapsed/mab.hpp"

#include <doctest.h>

#include <cmath>

using namespace mapsed;
using namespace testing_support;

TEST_CASE("reconstruction loss examples") {
    const Tensor y = Tensor::from({{1.0, 2.0}, {3.0, 4.0}});
    CHECK(reconstruction_loss(y, y, 0.1) == 0.0);
    // One frame differs by 2 in one entry: (4 + 0.5·2)/2 per-frame average.
    Tensor yp = y;
    yp.at({0, 1}) += 2.0;
    CHECK(reconstruction_loss(y, yp, 0.5) == doctest::Approx(2.5));
    // Every entry off by one, λ = 1: per frame 2 + 2, averaged over 2 frames.
    CHECK(reconstruction_loss(y, y + Tensor(y.shape(), std::vector<double>(4, 1.0)), 1.0) == doctest::Approx(4.0));
}

TEST_CASE("reconstruction loss matches the loop oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Shape s{1 + rng.below(4), 2, 3, 3};
        const Tensor y = random_tensor(s, rng, 0.0, 5.0), yp = random_tensor(s, rng, -1.0, 5.0);
        const double lambda = rng.uniform();
        CHECK(std::abs(reconstruction_loss(y, yp, lambda) - naive_recon_loss(y, yp, lambda)) <= 1e-10);
    }
}

TEST_CASE("triplet loss examples") {
    const Tensor s = Tensor::from({0.0, 0.0});
    const Tensor near = Tensor::from({1.0, 0.0});
    const Tensor far = Tensor::from({3.0, 0.0});
    CHECK(contrastive_loss(s, near, {far}, 1.0) == 0.0);  // 1 − 9 + 1 < 0
    CHECK(contrastive_loss(s, far, {near}, 1.0) == doctest::Approx(9.0));
    CHECK(contrastive_loss(s, near, {near}, 4.0) == doctest::Approx(4.0));
    CHECK(contrastive_loss(s, s, {s, s}, 1.5) == doctest::Approx(1.5));
    CHECK_THROWS(contrastive_loss(s, near, {}, 1.0));
}

TEST_CASE("triplet loss uses the nearest negative regardless of order") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor a = random_tensor({2, 2, 2}, rng), p = random_tensor({2, 2, 2}, rng);
        std::vector<Tensor> negs;
        for (int i = 0; i < 4; ++i) negs.push_back(random_tensor({2, 2, 2}, rng));
        const double base = contrastive_loss(a, p, negs, 1.0);
        CHECK(std::abs(base - naive_triplet(a, p, negs, 1.0)) <= 1e-12);
        std::reverse(negs.begin(), negs.end());
        CHECK(contrastive_loss(a, p, negs, 1.0) == base);
    }
}

TEST_CASE("infonce examples") {
    const Tensor zero = Tensor::from({0.0, 0.0});
    const Tensor one = Tensor::from({1.0, 0.0});
    // Equal logits with one negative: log 2.
    CHECK(infonce_dot_loss(zero, one, {one}) == doctest::Approx(std::log(2.0)));
    // Large positive margin saturates without overflow.
    const Tensor big = Tensor::from({30.0, 0.0});
    const double sat = infonce_dot_loss(big, big, {Tensor::from({-30.0, 0.0})});
    CHECK(std::isfinite(sat));
    CHECK(sat < 1e-12);
    const double huge = infonce_dot_loss(big, Tensor::from({-30.0, 0.0}), {big});
    CHECK(huge == doctest::Approx(1800.0));
}

TEST_CASE("infonce matches the direct oracle and decreases with the positive logit") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor a = random_tensor({6}, rng), p = random_tensor({6}, rng);
        std::vector<Tensor> negs{random_tensor({6}, rng), random_tensor({6}, rng)};
        CHECK(std::abs(infonce_dot_loss(a, p, negs) - naive_infonce(a, p, negs)) <= 1e-12);
    }
    const Tensor a = Tensor::from({1.0, 0.0});
    const Tensor neg = Tensor::from({0.0, 1.0});
    double prev = std::numeric_limits<double>::infinity();
    for (double x = -2.0; x <= 2.0; x += 0.5) {
        const double l = infonce_dot_loss(a, Tensor::from({x, 0.0}), {neg});
        CHECK(l < prev);
        prev = l;
    }
}

TEST_CASE("net loss combination") {
    CHECK(net_loss(1.0, 10.0, 0.1) == doctest::Approx(2.0));
    CHECK(net_loss(3.0, 10.0, 0.0) == 3.0);

    Rng rng(14);
    const Tensor y = random_tensor({2, 1, 2, 2}, rng), yp = random_tensor({2, 1, 2, 2}, rng);
    const Tensor s = random_tensor({3}, rng), sp = random_tensor({3}, rng), sn = random_tensor({3}, rng);
    for (ContrastMode mode : {ContrastMode::Frobenius, ContrastMode::Dot, ContrastMode::None}) {
        LossConfig cfg;
        cfg.contrast = mode;
        cfg.lambda_c = 0.3;
        Tape tape;
        const LossTerms t = net_loss(tape.constant(y), tape.variable(yp), tape.variable(s), tape.variable(sp),
                                     {tape.variable(sn)}, cfg);
        const double lr = naive_recon_loss(y, yp, cfg.lambda);
        double lc = 0.0;
        if (mode == ContrastMode::Frobenius) lc = naive_triplet(s, sp, {sn}, cfg.omega);
        if (mode == ContrastMode::Dot) lc = naive_infonce(s, sp, {sn});
        CHECK(t.total.value().item() == doctest::Approx(lr + 0.3 * lc).epsilon(1e-12));
        CHECK(t.reconstruction.value().item() == doctest::Approx(lr).epsilon(1e-12));
    }
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(15);
    Tensor yp = random_tensor({2, 1, 3, 3}, rng, 0.2, 2.0);
    const Tensor y = random_tensor({2, 1, 3, 3}, rng, 2.5, 4.0);  // keeps |d| away from zero
    Tensor s = random_tensor({4}, rng), sp = random_tensor({4}, rng), sn = random_tensor({4}, rng);
    std::vector<NamedParam> ps{{"yp", &yp}, {"s", &s}, {"sp", &sp}, {"sn", &sn}};
    for (ContrastMode mode : {ContrastMode::Frobenius, ContrastMode::Dot}) {
        LossConfig cfg;
        cfg.contrast = mode;
        cfg.omega = 50.0;  // keeps the hinge active
        const auto r = check_gradients(ps, [&](Tape& t) {
            return net_loss(t.constant(y), t.param(yp), t.param(s), t.param(sp), {t.param(sn)}, cfg).total;
        });
        CHECK(r.worst <= 1e-6);
    }
}

TEST_CASE("loss config validation and mode names") {
    CHECK(parse_contrast_mode(to_string(ContrastMode::Dot)) == ContrastMode::Dot);
    CHECK(parse_contrast_mode(to_string(ContrastMode::Frobenius)) == ContrastMode::Frobenius);
    CHECK_THROWS(parse_contrast_mode("cosine"));
    LossConfig cfg;
    cfg.num_negatives = 0;
    CHECK_THROWS(cfg.validate());
    cfg = LossConfig{};
    cfg.lambda = -1.0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("mab attention rows sum to one and match loop oracles") {
    Rng rng(16);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t c = 1 + rng.below(3), h = 1 + rng.below(4), w = 1 + rng.below(4);
        const MABParams p = MABParams::init(c, 4, rng);
        const Tensor z = random_tensor({c, h, w}, rng);
        const auto sa = spatial_attention(z, p);
        const auto ca = channel_attention(z, p);
        for (const Tensor* wts : {&sa.weights, &ca.weights}) {
            const std::size_t rows = wts->dim(0), cols = wts->dim(1);
            for (std::size_t i = 0; i < rows; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < cols; ++j) s += wts->at({i, j});
                CHECK(std::abs(s - 1.0) <= 1e-9);
            }
        }
        CHECK(max_abs_diff(sa.weights, naive_spatial_attention(z, p).weights) <= 1e-12);
        CHECK(max_abs_diff(ca.weights, naive_channel_attention(z, p).weights) <= 1e-12);
        CHECK(max_abs_diff(mab_forward(z, p), naive_mab(z, p)) <= 1e-12);
        MABParams zeroed = p;
        zeroed.fusion.zero();
        CHECK(mab_forward(z, zeroed) == z);
    }
}
