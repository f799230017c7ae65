#include "jmsac/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace jmsac::metrics {

std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n,
                                          std::vector<double>* vectors) {
    if (static_cast<int>(a.size()) != n * n) throw std::invalid_argument("eig: bad matrix size");
    std::vector<double> v;
    if (vectors) {
        v.assign(static_cast<size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;
    }
    auto at = [&](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
        if (off < 1e-24) break;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
                if (vectors)
                    for (int k = 0; k < n; ++k) {
                        const double vkp = v[static_cast<size_t>(k) * n + p];
                        const double vkq = v[static_cast<size_t>(k) * n + q];
                        v[static_cast<size_t>(k) * n + p] = c * vkp - s * vkq;
                        v[static_cast<size_t>(k) * n + q] = s * vkp + c * vkq;
                    }
            }
    }
    std::vector<double> eig(static_cast<size_t>(n));
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        eig[static_cast<size_t>(i)] = at(i, i);
        order[static_cast<size_t>(i)] = i;
    }
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return eig[static_cast<size_t>(x)] > eig[static_cast<size_t>(y)]; });
    std::vector<double> sorted(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) sorted[static_cast<size_t>(i)] = eig[static_cast<size_t>(order[i])];
    if (vectors) {
        std::vector<double> vs(static_cast<size_t>(n) * n);
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < n; ++r)
                vs[static_cast<size_t>(r) * n + c] = v[static_cast<size_t>(r) * n + order[c]];
        *vectors = std::move(vs);
    }
    return sorted;
}

std::vector<double> singular_values(const TensorD& s) {
    if (s.rank() != 2) throw std::invalid_argument("singular_values: expects [N, D]");
    const int64_t n = s.extent(0), d = s.extent(1);
    std::vector<double> gram(static_cast<size_t>(d) * d, 0.0);
    for (int64_t r = 0; r < n; ++r)
        for (int64_t i = 0; i < d; ++i) {
            const double si = s[r * d + i];
            if (si == 0.0) continue;
            for (int64_t j = 0; j < d; ++j)
                gram[static_cast<size_t>(i) * d + j] += si * s[r * d + j];
        }
    auto eig = symmetric_eigenvalues(std::move(gram), static_cast<int>(d));
    for (auto& e : eig) e = std::sqrt(std::max(e, 0.0));
    return eig;
}

double exp_entropy(std::span<const double> spectrum) {
    double total = 0.0;
    for (double v : spectrum) total += std::max(v, 0.0);
    if (total <= 0.0) return 1.0;
    double h = 0.0;
    for (double v : spectrum) {
        const double p = std::max(v, 0.0) / total;
        if (p > 0.0) h -= p * std::log(p);
    }
    return std::exp(h);
}

double rankme(const TensorD& s, bool* degenerate) {
    if (s.extent(0) < 2) throw std::invalid_argument("rankme: needs N >= 2");
    const auto sv = singular_values(s);
    double total = 0.0;
    for (double v : sv) total += v;
    if (degenerate) *degenerate = total <= 0.0;
    return exp_entropy(sv);
}

double lda_rank(const TensorD& views, double ridge_eps, bool* degenerate) {
    if (views.rank() != 3) throw std::invalid_argument("lda_rank: expects [N, A, D]");
    const int64_t n = views.extent(0), a = views.extent(1), d = views.extent(2);
    if (a < 2) throw std::invalid_argument("lda_rank: needs A >= 2 views");
    std::vector<double> sample_mean(static_cast<size_t>(n) * d, 0.0);
    std::vector<double> global_mean(static_cast<size_t>(d), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t v = 0; v < a; ++v)
            for (int64_t j = 0; j < d; ++j)
                sample_mean[static_cast<size_t>(i) * d + j] += views[(i * a + v) * d + j];
        for (int64_t j = 0; j < d; ++j) {
            sample_mean[static_cast<size_t>(i) * d + j] /= static_cast<double>(a);
            global_mean[static_cast<size_t>(j)] += sample_mean[static_cast<size_t>(i) * d + j];
        }
    }
    for (int64_t j = 0; j < d; ++j) global_mean[static_cast<size_t>(j)] /= static_cast<double>(n);

    std::vector<double> sw(static_cast<size_t>(d) * d, 0.0), sb(static_cast<size_t>(d) * d, 0.0);
    std::vector<double> diff(static_cast<size_t>(d));
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t v = 0; v < a; ++v) {
            for (int64_t j = 0; j < d; ++j)
                diff[static_cast<size_t>(j)] =
                    views[(i * a + v) * d + j] - sample_mean[static_cast<size_t>(i) * d + j];
            for (int64_t x = 0; x < d; ++x)
                for (int64_t y = 0; y < d; ++y)
                    sw[static_cast<size_t>(x) * d + y] +=
                        diff[static_cast<size_t>(x)] * diff[static_cast<size_t>(y)];
        }
        for (int64_t j = 0; j < d; ++j)
            diff[static_cast<size_t>(j)] =
                sample_mean[static_cast<size_t>(i) * d + j] - global_mean[static_cast<size_t>(j)];
        for (int64_t x = 0; x < d; ++x)
            for (int64_t y = 0; y < d; ++y)
                sb[static_cast<size_t>(x) * d + y] +=
                    diff[static_cast<size_t>(x)] * diff[static_cast<size_t>(y)];
    }
    const double inv_na = 1.0 / static_cast<double>(n * a);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& vsw : sw) vsw *= inv_na;
    for (auto& vsb : sb) vsb *= inv_n;

    // (Sigma_w + eps I)^{-1/2} via eigendecomposition.
    for (int64_t i = 0; i < d; ++i) sw[static_cast<size_t>(i) * d + i] += ridge_eps;
    std::vector<double> evec;
    auto eval = symmetric_eigenvalues(sw, static_cast<int>(d), &evec);
    std::vector<double> w(static_cast<size_t>(d) * d, 0.0);
    for (int64_t x = 0; x < d; ++x)
        for (int64_t y = 0; y < d; ++y) {
            double acc = 0.0;
            for (int64_t k = 0; k < d; ++k) {
                const double lam = std::max(eval[static_cast<size_t>(k)], ridge_eps * 1e-3);
                acc += evec[static_cast<size_t>(x) * d + k] * evec[static_cast<size_t>(y) * d + k] /
                       std::sqrt(lam);
            }
            w[static_cast<size_t>(x) * d + y] = acc;
        }
    // M = W Sb W.
    std::vector<double> tmp(static_cast<size_t>(d) * d, 0.0), m(static_cast<size_t>(d) * d, 0.0);
    for (int64_t x = 0; x < d; ++x)
        for (int64_t k = 0; k < d; ++k) {
            const double wxk = w[static_cast<size_t>(x) * d + k];
            if (wxk == 0.0) continue;
            for (int64_t y = 0; y < d; ++y)
                tmp[static_cast<size_t>(x) * d + y] += wxk * sb[static_cast<size_t>(k) * d + y];
        }
    for (int64_t x = 0; x < d; ++x)
        for (int64_t k = 0; k < d; ++k) {
            const double txk = tmp[static_cast<size_t>(x) * d + k];
            if (txk == 0.0) continue;
            for (int64_t y = 0; y < d; ++y)
                m[static_cast<size_t>(x) * d + y] += txk * w[static_cast<size_t>(k) * d + y];
        }
    auto lam = symmetric_eigenvalues(std::move(m), static_cast<int>(d));
    for (auto& l : lam) l = std::max(l, 0.0);
    const double total = std::accumulate(lam.begin(), lam.end(), 0.0);
    if (degenerate) *degenerate = total <= 0.0;
    return exp_entropy(lam);
}

AdeFde ade_fde(const TensorD& pred, const TensorD& truth) {
    if (!pred.same_shape(truth) || pred.rank() != 2 || pred.extent(1) != 2)
        throw std::invalid_argument("ade_fde: expects matching [T, 2]");
    const int64_t t = pred.extent(0);
    AdeFde out;
    for (int64_t i = 0; i < t; ++i) {
        const double dx = pred.at({i, 0}) - truth.at({i, 0});
        const double dy = pred.at({i, 1}) - truth.at({i, 1});
        const double d = std::sqrt(dx * dx + dy * dy);
        out.ade += d;
        if (i == t - 1) out.fde = d;
    }
    out.ade /= static_cast<double>(t);
    return out;
}

std::vector<int> argmax_rows(const TensorD& logits) {
    const int64_t n = logits.extent(0), k = logits.extent(1);
    std::vector<int> out(static_cast<size_t>(n));
    for (int64_t r = 0; r < n; ++r) {
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (logits[r * k + j] > logits[r * k + best]) best = j;
        out[static_cast<size_t>(r)] = best;
    }
    return out;
}

double topn_accuracy(const TensorD& logits, std::span<const int> labels, int top_n) {
    if (logits.rank() != 2) throw std::invalid_argument("topn: logits must be [N, K]");
    const int64_t n = logits.extent(0), k = logits.extent(1);
    if (top_n > k) throw std::invalid_argument("topn: N exceeds K");
    if (static_cast<int64_t>(labels.size()) != n)
        throw std::invalid_argument("topn: label count mismatch");
    int64_t hits = 0;
    std::vector<int> idx(static_cast<size_t>(k));
    for (int64_t r = 0; r < n; ++r) {
        for (int j = 0; j < k; ++j) idx[static_cast<size_t>(j)] = j;
        std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) {
            return logits[r * k + x] > logits[r * k + y];
        });
        for (int j = 0; j < top_n; ++j)
            if (idx[static_cast<size_t>(j)] == labels[static_cast<size_t>(r)]) {
                ++hits;
                break;
            }
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

RsrpDiff l1_rsrp_diff(std::span<const int> pred_beams, std::span<const int> true_beams,
                      const TensorD& spectra_db) {
    const int64_t n = spectra_db.extent(0), k = spectra_db.extent(1);
    if (static_cast<int64_t>(pred_beams.size()) != n ||
        static_cast<int64_t>(true_beams.size()) != n)
        throw std::invalid_argument("l1_rsrp_diff: size mismatch");
    RsrpDiff out;
    out.mismatch_hist.assign(static_cast<size_t>(k), 0);
    for (int64_t r = 0; r < n; ++r) {
        const int kp = pred_beams[static_cast<size_t>(r)];
        const int kt = true_beams[static_cast<size_t>(r)];
        const double dp = std::abs(spectra_db[r * k + kp] - spectra_db[r * k + kt]);
        out.deltas.push_back(dp);
        out.mean += dp;
        ++out.mismatch_hist[static_cast<size_t>(std::abs(kp - kt))];
    }
    if (n > 0) out.mean /= static_cast<double>(n);
    return out;
}

RmseMae rmse_mae(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size()) throw std::invalid_argument("rmse_mae: size mismatch");
    RmseMae out;
    if (pred.empty()) return out;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = std::abs(pred[i] - truth[i]);
        out.mae += d;
        out.rmse += d * d;
    }
    out.mae /= static_cast<double>(pred.size());
    out.rmse = std::sqrt(out.rmse / static_cast<double>(pred.size()));
    return out;
}

nlohmann::ordered_json EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["r_rankme"] = r_rankme;
    j["r_lda"] = r_lda;
    j["rankme_degenerate"] = rankme_degenerate;
    j["lda_degenerate"] = lda_degenerate;
    j["ade"] = ade;
    j["fde"] = fde;
    j["acc1"] = acc1;
    j["acc3"] = acc3;
    j["mean_l1_rsrp_diff"] = mean_l1_rsrp_diff;
    j["mismatch_hist"] = mismatch_hist;
    j["rmse"] = rmse;
    j["mae"] = mae;
    j["n_samples"] = n_samples;
    j["config_hash"] = config_hash;
    j["build"] = build;
    return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
    EvalReport r;
    r.r_rankme = j.at("r_rankme").get<double>();
    r.r_lda = j.at("r_lda").get<double>();
    r.rankme_degenerate = j.at("rankme_degenerate").get<bool>();
    r.lda_degenerate = j.at("lda_degenerate").get<bool>();
    r.ade = j.at("ade").get<double>();
    r.fde = j.at("fde").get<double>();
    r.acc1 = j.at("acc1").get<double>();
    r.acc3 = j.at("acc3").get<double>();
    r.mean_l1_rsrp_diff = j.at("mean_l1_rsrp_diff").get<double>();
    r.mismatch_hist = j.at("mismatch_hist").get<std::vector<int64_t>>();
    r.rmse = j.at("rmse").get<double>();
    r.mae = j.at("mae").get<double>();
    r.n_samples = j.at("n_samples").get<int64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.build = j.at("build").get<std::string>();
    return r;
}

} // namespace jmsac::metrics
