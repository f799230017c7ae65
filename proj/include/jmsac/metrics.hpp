#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jmsac/tensor.hpp"

namespace jmsac::metrics {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
// Returns eigenvalues (descending); eigenvectors optional (columns).
std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n,
                                          std::vector<double>* vectors = nullptr);

// Singular values of [n, d] via the Gram matrix, descending.
std::vector<double> singular_values(const TensorD& s);

// Exponential Shannon entropy of a normalized nonnegative spectrum; zero
// entries contribute nothing.
double exp_entropy(std::span<const double> spectrum);

// RankMe over pooled representations [N, D]. All-zero input degenerates to 1.
double rankme(const TensorD& s, bool* degenerate = nullptr);

// LDA rank over augmented views [N, A, D] with ridge eps inside the inverse
// square root; eigenvalues clamped at zero. Zero between-sample scatter
// degenerates to 1.
double lda_rank(const TensorD& views, double ridge_eps = 1e-6, bool* degenerate = nullptr);

// Displacement metrics for one trajectory pair [T, 2].
struct AdeFde {
    double ade = 0.0;
    double fde = 0.0;
};
AdeFde ade_fde(const TensorD& pred, const TensorD& truth);

// Top-N membership over [N, K] logits; ranking ties broken by lowest index.
double topn_accuracy(const TensorD& logits, std::span<const int> labels, int top_n);

// Predicted-beam indices (argmax per row, lowest-index ties).
std::vector<int> argmax_rows(const TensorD& logits);

// Power gap |P[k_hat] - P[k_star]| per step plus a histogram over index
// distance |k_hat - k_star|.
struct RsrpDiff {
    double mean = 0.0;
    std::vector<double> deltas;
    std::vector<int64_t> mismatch_hist;  // size K
};
RsrpDiff l1_rsrp_diff(std::span<const int> pred_beams, std::span<const int> true_beams,
                      const TensorD& spectra_db);

struct RmseMae {
    double rmse = 0.0;
    double mae = 0.0;
};
RmseMae rmse_mae(std::span<const double> pred, std::span<const double> truth);

// Flat evaluation report with fixed key names.
struct EvalReport {
    double r_rankme = 1.0;
    double r_lda = 1.0;
    bool rankme_degenerate = false;
    bool lda_degenerate = false;
    double ade = 0.0;
    double fde = 0.0;
    double acc1 = 0.0;
    double acc3 = 0.0;
    double mean_l1_rsrp_diff = 0.0;
    std::vector<int64_t> mismatch_hist;
    double rmse = 0.0;
    double mae = 0.0;
    int64_t n_samples = 0;
    std::string config_hash;
    std::string build;

    nlohmann::ordered_json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
};

} // namespace jmsac::metrics
