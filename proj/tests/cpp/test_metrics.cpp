#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "jmsac/metrics.hpp"
#include "jmsac/rng.hpp"

using namespace jmsac;
using namespace jmsac::metrics;

namespace {

// Gram-Schmidt orthogonalization for the invariance tests.
TensorD random_orthogonal(int n, Rng& rng) {
    TensorD q = TensorD::randn({n, n}, rng);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < i; ++j) {
            double dot = 0.0;
            for (int k = 0; k < n; ++k) dot += q[i * n + k] * q[j * n + k];
            for (int k = 0; k < n; ++k) q[i * n + k] -= dot * q[j * n + k];
        }
        double norm = 0.0;
        for (int k = 0; k < n; ++k) norm += q[i * n + k] * q[i * n + k];
        norm = std::sqrt(norm);
        for (int k = 0; k < n; ++k) q[i * n + k] /= norm;
    }
    return q;
}

TensorD matmul_dense(const TensorD& a, const TensorD& b) {
    const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    TensorD c({m, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            for (int64_t j = 0; j < n; ++j) c[i * n + j] += av * b[p * n + j];
        }
    return c;
}

} // namespace

TEST_CASE("exp entropy spectrum examples") {
    // r equal nonzero values -> r.
    std::vector<double> eq(5, 0.7);
    CHECK(exp_entropy(eq) == doctest::Approx(5.0).epsilon(1e-12));
    // Single nonzero -> 1.
    std::vector<double> one{3.0, 0.0, 0.0};
    CHECK(exp_entropy(one) == doctest::Approx(1.0).epsilon(1e-12));
    // (2, 1, 1) -> 2 sqrt(2).
    std::vector<double> s{2.0, 1.0, 1.0};
    CHECK(exp_entropy(s) == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("rankme: known singular spectra") {
    // Diagonal matrix with singular values (2, 1, 1).
    TensorD s({3, 3});
    s.at({0, 0}) = 2.0;
    s.at({1, 1}) = 1.0;
    s.at({2, 2}) = 1.0;
    bool deg = false;
    CHECK(rankme(s, &deg) == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-9));
    CHECK_FALSE(deg);

    // Rank-1 matrix -> 1.
    Rng rng(3);
    TensorD r1({4, 5});
    TensorD u = TensorD::randn({4, 1}, rng), v = TensorD::randn({1, 5}, rng);
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 5; ++j) r1[i * 5 + j] = u[i] * v[j];
    CHECK(rankme(r1) == doctest::Approx(1.0).epsilon(1e-6));

    // All-zero matrix: degenerate, reported as 1.
    TensorD z({3, 4});
    CHECK(rankme(z, &deg) == doctest::Approx(1.0));
    CHECK(deg);
    CHECK_THROWS(rankme(TensorD({1, 4})));
}

TEST_CASE("rankme: range and orthogonal invariance") {
    Rng rng(5);
    TensorD s = TensorD::randn({20, 6}, rng);
    const double r = rankme(s);
    CHECK(r >= 1.0);
    CHECK(r <= 6.0 + 1e-9);
    const TensorD q = random_orthogonal(6, rng);
    const double r2 = rankme(matmul_dense(s, q));
    CHECK(std::abs(r - r2) < 1e-6);
}

TEST_CASE("lda rank: isotropic means with identical views give D") {
    // Views identical per sample -> Sigma_w = 0 (ridge only); sample means
    // arranged so Sigma_b = c I exactly.
    const int d = 4;
    const int n = 2 * d;
    TensorD views({n, 2, d});
    for (int i = 0; i < d; ++i) {
        for (int a = 0; a < 2; ++a) {
            views[((2 * i) * 2 + a) * d + i] = 2.0;
            views[((2 * i + 1) * 2 + a) * d + i] = -2.0;
        }
    }
    bool deg = false;
    CHECK(lda_rank(views, 1e-6, &deg) == doctest::Approx(static_cast<double>(d)).epsilon(1e-6));
    CHECK_FALSE(deg);
}

TEST_CASE("lda rank: shared mean degenerates to 1") {
    Rng rng(7);
    const int n = 6, d = 3;
    TensorD views({n, 3, d});
    // All samples share the same per-sample mean (zero): views are pure
    // within-sample noise, identical across samples after averaging.
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            const double v = rng.gaussian();
            views[(i * 3 + 0) * d + j] = v;
            views[(i * 3 + 1) * d + j] = -v;
            views[(i * 3 + 2) * d + j] = 0.0;
        }
    }
    bool deg = false;
    const double r = lda_rank(views, 1e-6, &deg);
    CHECK(deg);
    CHECK(r == doctest::Approx(1.0));
}

TEST_CASE("lda rank: eigen spectrum (2,1,1) reproduces the entropy value") {
    // Identical views (Sigma_w -> eps I) and sample means with covariance
    // diag(2c, c, c): R = exp entropy of (2, 1, 1).
    const int d = 3;
    std::vector<double> scale{std::sqrt(2.0), 1.0, 1.0};
    const int n = 2 * d;
    TensorD views({n, 2, d});
    for (int i = 0; i < d; ++i)
        for (int a = 0; a < 2; ++a) {
            views[((2 * i) * 2 + a) * d + i] = scale[static_cast<size_t>(i)];
            views[((2 * i + 1) * 2 + a) * d + i] = -scale[static_cast<size_t>(i)];
        }
    CHECK(lda_rank(views) == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("lda rank is in [1, D] and roughly invariant to well-conditioned maps") {
    Rng rng(11);
    const int n = 24, a = 3, d = 4;
    TensorD views({n, a, d});
    for (int64_t i = 0; i < views.numel(); ++i) views[i] = rng.gaussian();
    const double r = lda_rank(views);
    CHECK(r >= 1.0);
    CHECK(r <= d + 1e-9);
    // Apply one invertible map to every view.
    TensorD m = random_orthogonal(d, rng);
    for (int64_t i = 0; i < d; ++i)
        for (int64_t j = 0; j < d; ++j) m[i * d + j] *= 1.5;
    TensorD mapped({n, a, d});
    for (int i = 0; i < n; ++i)
        for (int v = 0; v < a; ++v)
            for (int x = 0; x < d; ++x) {
                double acc = 0.0;
                for (int y = 0; y < d; ++y) acc += views[(i * a + v) * d + y] * m[y * d + x];
                mapped[(i * a + v) * d + x] = acc;
            }
    CHECK(std::abs(lda_rank(views) - lda_rank(mapped)) < 1e-3);
}

TEST_CASE("ade/fde documented cases") {
    TensorD pred({5, 2}), truth({5, 2});
    auto r = ade_fde(pred, truth);
    CHECK(r.ade == 0.0);
    CHECK(r.fde == 0.0);

    // Constant offset (0.3, 0.4): both 0.5.
    for (int64_t i = 0; i < 5; ++i) {
        pred.at({i, 0}) = 0.3;
        pred.at({i, 1}) = 0.4;
    }
    r = ade_fde(pred, truth);
    CHECK(r.ade == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.fde == doctest::Approx(0.5).epsilon(1e-12));

    // Error only at the final step, magnitude 1: ADE 0.2, FDE 1.
    pred = TensorD({5, 2});
    pred.at({4, 0}) = 1.0;
    r = ade_fde(pred, truth);
    CHECK(r.ade == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(r.fde == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("topn accuracy: ranking and tie behavior") {
    TensorD logits({2, 4});
    // True beam ranked first in row 0, second in row 1.
    logits.at({0, 1}) = 5.0;
    logits.at({1, 0}) = 9.0;
    logits.at({1, 2}) = 8.0;
    std::vector<int> labels{1, 2};
    CHECK(topn_accuracy(logits, labels, 1) == doctest::Approx(0.5));
    CHECK(topn_accuracy(logits, labels, 3) == doctest::Approx(1.0));
    CHECK_THROWS(topn_accuracy(logits, labels, 5));

    // Uniform random logits: top-1 lands within the 3-sigma binomial band.
    Rng rng(13);
    const int n = 12000, k = 64;
    TensorD big({n, k});
    for (int64_t i = 0; i < big.numel(); ++i) big[i] = rng.uniform();
    std::vector<int> lab(static_cast<size_t>(n));
    for (auto& l : lab) l = static_cast<int>(rng.below(k));
    const double acc = topn_accuracy(big, lab, 1);
    const double p = 1.0 / k;
    CHECK(std::abs(acc - p) < 3.0 * std::sqrt(p * (1 - p) / n));
    // ACC1 <= ACC3 always.
    CHECK(acc <= topn_accuracy(big, lab, 3));
}

TEST_CASE("l1 rsrp diff and mismatch histogram") {
    TensorD spec({2, 3});
    spec.at({0, 0}) = 10.0;
    spec.at({0, 1}) = 8.0;
    spec.at({0, 2}) = 1.0;
    spec.at({1, 0}) = 4.0;
    spec.at({1, 1}) = 6.0;
    spec.at({1, 2}) = 5.0;
    std::vector<int> pred{1, 1}, truth{0, 1};
    const auto r = l1_rsrp_diff(pred, truth, spec);
    CHECK(r.deltas[0] == doctest::Approx(2.0));
    CHECK(r.deltas[1] == doctest::Approx(0.0));
    CHECK(r.mean == doctest::Approx(1.0));
    CHECK(r.mismatch_hist[0] == 1);
    CHECK(r.mismatch_hist[1] == 1);
    // |5 - 2| = 3 lands in bin 3.
    TensorD spec6({1, 6});
    const auto r2 = l1_rsrp_diff(std::vector<int>{5}, std::vector<int>{2}, spec6);
    CHECK(r2.mismatch_hist[3] == 1);
}

TEST_CASE("rmse/mae documented cases and ordering") {
    std::vector<double> a{1.0, 1.0, 1.0}, b{0.0, 0.0, 0.0};
    auto r = rmse_mae(a, b);
    CHECK(r.rmse == doctest::Approx(1.0));
    CHECK(r.mae == doctest::Approx(1.0));
    std::vector<double> e{3.0, 4.0}, z{0.0, 0.0};
    r = rmse_mae(e, z);
    CHECK(r.mae == doctest::Approx(3.5).epsilon(1e-12));
    CHECK(r.rmse == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
    auto rz = rmse_mae(z, z);
    CHECK(rz.rmse == 0.0);
    CHECK(rz.mae == 0.0);

    // RMSE >= MAE on random data, equality only for equal magnitudes.
    Rng rng(17);
    std::vector<double> p(64), q(64);
    for (size_t i = 0; i < p.size(); ++i) {
        p[i] = rng.gaussian();
        q[i] = rng.gaussian();
    }
    const auto rr = rmse_mae(p, q);
    CHECK(rr.rmse >= rr.mae - 1e-12);
}

TEST_CASE("eval report serialization round trip") {
    EvalReport rep;
    rep.r_rankme = 3.5;
    rep.r_lda = 2.25;
    rep.ade = 0.125;
    rep.fde = 0.5;
    rep.acc1 = 0.75;
    rep.acc3 = 0.875;
    rep.mean_l1_rsrp_diff = 1.5;
    rep.mismatch_hist = {5, 2, 1};
    rep.rmse = 0.33;
    rep.mae = 0.25;
    rep.n_samples = 39;
    rep.config_hash = "abc123";
    rep.build = "test";
    const auto j = rep.to_json();
    CHECK(j.begin().key() == "r_rankme");  // fixed key order
    const auto back = EvalReport::from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.r_rankme == rep.r_rankme);
    CHECK(back.mismatch_hist == rep.mismatch_hist);
    CHECK(back.n_samples == 39);
}
