#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

namespace jmsac {

// Scalar-path loss evaluations with the full precondition checks. The tape
// ops compute the same values on the training path.

inline double smooth_l1(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw std::invalid_argument("smooth_l1: shape mismatch");
    if (pred.empty()) throw std::invalid_argument("smooth_l1: empty input");
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (!std::isfinite(pred[i]) || !std::isfinite(target[i]))
            throw std::invalid_argument("smooth_l1: non-finite input");
        const double d = pred[i] - target[i];
        acc += std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5;
    }
    return acc / static_cast<double>(pred.size());
}

inline double cross_entropy(std::span<const double> logits, std::span<const double> target_onehot) {
    if (logits.size() != target_onehot.size())
        throw std::invalid_argument("cross_entropy: shape mismatch");
    if (logits.size() < 2) throw std::invalid_argument("cross_entropy: needs K >= 2");
    int hot = -1;
    for (size_t i = 0; i < target_onehot.size(); ++i) {
        if (target_onehot[i] == 1.0) {
            if (hot >= 0) throw std::invalid_argument("cross_entropy: multiple hot entries");
            hot = static_cast<int>(i);
        } else if (target_onehot[i] != 0.0) {
            throw std::invalid_argument("cross_entropy: target is not one-hot");
        }
    }
    if (hot < 0) throw std::invalid_argument("cross_entropy: no hot entry");
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    return mx + std::log(sum) - logits[static_cast<size_t>(hot)];
}

} // namespace jmsac
