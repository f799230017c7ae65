#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "jmsac/heads.hpp"
#include "jmsac/metrics.hpp"
#include "tiny_setup.hpp"

using namespace jmsac;
using namespace jmsac::testutil;

TEST_CASE("constant-velocity coarse trajectory matches the documented rollout") {
    TensorF p_hist({2, 2});
    p_hist.at({0, 0}) = 0.0f;
    p_hist.at({0, 1}) = 0.0f;
    p_hist.at({1, 0}) = 1.0f;
    p_hist.at({1, 1}) = 0.0f;
    const auto y = coarse_trajectory_cv(p_hist, 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(y.at({i, 0}) == doctest::Approx(2.0f + i).epsilon(1e-7));
        CHECK(y.at({i, 1}) == 0.0f);
    }
    // Stationary history: all rows repeat the last position.
    TensorF st({2, 2});
    st.at({0, 0}) = 3.0f;
    st.at({0, 1}) = 4.0f;
    st.at({1, 0}) = 3.0f;
    st.at({1, 1}) = 4.0f;
    const auto ys = coarse_trajectory_cv(st, 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(ys.at({i, 0}) == 3.0f);
        CHECK(ys.at({i, 1}) == 4.0f);
    }
    CHECK_THROWS(coarse_trajectory_cv(TensorF({1, 2}), 3));
}

TEST_CASE("bootstrap coarse trajectory repeats one anchor") {
    LocHead<float> loc;
    loc.init(8, 5);
    Rng rng(5);
    Tape<float> t;
    Val sp = t.constant(TensorF::randn({3, 8}, rng));
    Val coarse = coarse_trajectory(t, loc, sp, TensorF({2, 2}), false, 3, false);
    CHECK(t.value(coarse).shape() == Shape{3, 2});
    for (int64_t i = 1; i < 3; ++i)
        for (int64_t d = 0; d < 2; ++d)
            CHECK(t.value(coarse)[i * 2 + d] == t.value(coarse)[d]);
}

TEST_CASE("zeroed residual reduces localization to the coarse path exactly") {
    LocHead<float> loc;
    loc.init(8, 7);
    // Zero the residual MLP's output layer.
    auto& last = loc.res.layers.back();
    loc.params.value(last.w).fill(0.0f);
    loc.params.value(last.b).fill(0.0f);
    Rng rng(9);
    TensorF p_hist({3, 2});
    for (int64_t i = 0; i < 6; ++i) p_hist[i] = static_cast<float>(rng.uniform(-5, 5));
    Tape<float> t;
    Val sp = t.constant(TensorF::randn({4, 8}, rng));
    auto f = localization_forward(t, loc, sp, p_hist, true, 4, false);
    const TensorF expect = coarse_trajectory_cv(p_hist, 4);
    for (int64_t i = 0; i < 8; ++i) CHECK(t.value(f.y_loc)[i] == expect[i]);
}

TEST_CASE("localization loss: exact prediction gives zero, unit case gives 3") {
    LocHead<float> loc;
    loc.init(8, 11);
    Rng rng(11);
    Tape<float> t;
    TensorF truth({1, 2});
    truth[0] = 0.0f;
    truth[1] = 0.0f;
    Val pred = t.constant(TensorF({1, 2}, std::vector<float>{1.0f, 2.0f}));
    Val loss = t.l1_loss(pred, t.constant(truth), 1.0f);
    CHECK(t.value(loss)[0] == doctest::Approx(3.0f));
    Val loss0 = t.l1_loss(t.constant(truth), t.constant(truth), 1.0f);
    CHECK(t.value(loss0)[0] == 0.0f);
}

TEST_CASE("fuse_location concatenates or passes through") {
    Rng rng(13);
    Tape<float> t;
    TensorF sp = TensorF::randn({3, 8}, rng);
    TensorF yl = TensorF::randn({3, 2}, rng);
    Val fused = fuse_location(t, t.constant(sp), t.constant(yl), true);
    CHECK(t.value(fused).shape() == Shape{3, 10});
    for (int64_t i = 0; i < 3; ++i) {
        for (int64_t j = 0; j < 8; ++j) CHECK(t.value(fused)[i * 10 + j] == sp[i * 8 + j]);
        for (int64_t j = 0; j < 2; ++j) CHECK(t.value(fused)[i * 10 + 8 + j] == yl[i * 2 + j]);
    }
    Val plain = fuse_location(t, t.constant(sp), t.constant(yl), false);
    CHECK(t.value(plain).shape() == Shape{3, 8});
}

TEST_CASE("beam head shapes and saturated logits") {
    BeamHead<float> beam;
    beam.init(10, 6, 64, 17);
    Rng rng(17);
    Tape<float> t;
    Val logits = beam(t, t.constant(TensorF::randn({5, 10}, rng)), false);
    CHECK(t.value(logits).shape() == Shape{5, 64});

    // Saturated logits: loss under 1e-6 and top-1 hit.
    TensorF huge({2, 8});
    huge.at({0, 3}) = 1e6f;
    huge.at({1, 5}) = 1e6f;
    Val loss = t.cross_entropy_loss(t.constant(huge), {3, 5});
    CHECK(t.value(loss)[0] < 1e-6f);
}

TEST_CASE("untrained beam head hits chance-level top-1 on balanced labels") {
    const int k = 16;
    BeamHead<float> beam;
    beam.init(10, 8, k, 23);
    Rng rng(23);
    int hits = 0;
    const int n = 3000;
    for (int i = 0; i < n; ++i) {
        Tape<float> t;
        Val logits = beam(t, t.constant(TensorF::randn({1, 10}, rng)), false);
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (t.value(logits)[j] > t.value(logits)[best]) best = j;
        hits += best == static_cast<int>(rng.below(k)) ? 1 : 0;
    }
    const double p = 1.0 / k;
    const double sigma = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(static_cast<double>(hits) / n - p) < 3.0 * sigma + 1e-12);
}

TEST_CASE("beam logits argmax is invariant to adding a constant") {
    Rng rng(29);
    TensorD logits = TensorD::randn({4, 8}, rng);
    TensorD shifted = logits;
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 8; ++j) shifted[i * 8 + j] += 17.5;
    const auto a = metrics::argmax_rows(logits);
    const auto b = metrics::argmax_rows(shifted);
    CHECK(a == b);
}

TEST_CASE("rssi head: persistence coarse path is exact with zero residual") {
    RssiHead<float> rssi;
    rssi.init(8, 10, 6, 31);
    auto& last = rssi.res.layers.back();
    rssi.params.value(last.w).fill(0.0f);
    rssi.params.value(last.b).fill(0.0f);
    Rng rng(31);
    TensorF rf_hist = TensorF::uniform({3, 6}, rng, 0.0, 1.0);
    Tape<float> t;
    Val fused = t.constant(TensorF::randn({4, 10}, rng));
    Val sp = t.constant(TensorF::randn({4, 8}, rng));
    auto f = rssi_forward(t, rssi, fused, sp, rf_hist, true, 4, false);
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 6; ++j)
            CHECK(t.value(f.y_pow)[i * 6 + j] == rf_hist[2 * 6 + j]);

    // Scalar RSSI is the codebook mean; constant rows give that constant.
    TensorF cpow({2, 6}, 0.42f);
    const auto s = rssi_scalar(cpow);
    CHECK(s[0] == doctest::Approx(0.42).epsilon(1e-7));
    CHECK(s[1] == doctest::Approx(0.42).epsilon(1e-7));
}

TEST_CASE("rssi loss is zero when the spectrum matches the truth") {
    Rng rng(37);
    Tape<float> t;
    TensorF truth = TensorF::uniform({4, 6}, rng, 0.0, 1.0);
    Val loss = t.smooth_l1_loss(t.constant(truth), t.constant(truth));
    CHECK(t.value(loss)[0] == 0.0f);
}

TEST_CASE("bootstrap rssi coarse repeats the anchored spectrum") {
    RssiHead<float> rssi;
    rssi.init(8, 10, 6, 41);
    Rng rng(41);
    Tape<float> t;
    Val fused = t.constant(TensorF::randn({3, 10}, rng));
    Val sp = t.constant(TensorF::randn({3, 8}, rng));
    auto f = rssi_forward(t, rssi, fused, sp, TensorF({2, 6}), false, 3, false);
    const TensorF& coarse = t.value(f.coarse);
    for (int64_t i = 1; i < 3; ++i)
        for (int64_t j = 0; j < 6; ++j) CHECK(coarse[i * 6 + j] == coarse[j]);
}
