#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "jmsac/tape.hpp"

namespace jmsac {

struct GradCheckReport {
    double max_rel_err = 0.0;
    int64_t checked = 0;
};

// Compares reverse-mode gradients against central finite differences, both in
// double precision. `build` must construct the same scalar-valued graph from
// the given leaves every call. Relative error uses max(1, |a|, |b|) as the
// denominator so near-zero gradients are compared absolutely.
inline GradCheckReport grad_check(
    const std::function<Val(Tape<double>&, const std::vector<Val>&)>& build,
    std::vector<Tensor<double>> inputs, double step = 1e-4) {
    if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

    auto eval = [&](const std::vector<Tensor<double>>& xs) {
        Tape<double> t;
        std::vector<Val> leaves;
        leaves.reserve(xs.size());
        for (const auto& x : xs) leaves.push_back(t.leaf(x, nullptr));
        Val out = build(t, leaves);
        const double v = t.value(out)[0];
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite function value");
        return v;
    };

    // Analytic pass.
    std::vector<Tensor<double>> analytic;
    {
        Tape<double> t;
        std::vector<Val> leaves;
        std::vector<Tensor<double>> sinks;
        sinks.reserve(inputs.size());
        for (const auto& x : inputs) sinks.emplace_back(x.shape());
        for (size_t i = 0; i < inputs.size(); ++i) leaves.push_back(t.leaf(inputs[i], &sinks[i]));
        Val out = build(t, leaves);
        if (t.value(out).numel() != 1)
            throw std::invalid_argument("grad_check: function must be scalar-valued");
        t.backward(out);
        analytic = std::move(sinks);
    }

    GradCheckReport rep;
    for (size_t i = 0; i < inputs.size(); ++i) {
        for (int64_t j = 0; j < inputs[i].numel(); ++j) {
            const double keep = inputs[i][j];
            inputs[i][j] = keep + step;
            const double fp = eval(inputs);
            inputs[i][j] = keep - step;
            const double fm = eval(inputs);
            inputs[i][j] = keep;
            const double fd = (fp - fm) / (2.0 * step);
            const double an = analytic[i][j];
            const double denom = std::max({1.0, std::abs(an), std::abs(fd)});
            rep.max_rel_err = std::max(rep.max_rel_err, std::abs(an - fd) / denom);
            ++rep.checked;
        }
    }
    return rep;
}

} // namespace jmsac

#include "jmsac/nn.hpp"

namespace jmsac {

// Same comparison, but the graph is built by real layer code reading a
// Params<double> store. `build(tape, input_leaves, train)` must route
// parameters through param_leaf(t, params, h, train). Gradients are checked
// for every parameter entry and every input entry.
inline GradCheckReport grad_check_model(
    Params<double>& params, std::vector<Tensor<double>> inputs,
    const std::function<Val(Tape<double>&, const std::vector<Val>&, bool)>& build,
    double step = 1e-4) {
    auto eval = [&]() {
        Tape<double> t;
        std::vector<Val> leaves;
        for (const auto& x : inputs) leaves.push_back(t.leaf(x, nullptr));
        Val out = build(t, leaves, false);
        const double v = t.value(out)[0];
        if (!std::isfinite(v)) throw std::runtime_error("grad_check_model: non-finite value");
        return v;
    };

    params.zero_grad();
    std::vector<Tensor<double>> input_grads;
    for (const auto& x : inputs) input_grads.emplace_back(x.shape());
    {
        Tape<double> t;
        std::vector<Val> leaves;
        for (size_t i = 0; i < inputs.size(); ++i) leaves.push_back(t.leaf(inputs[i], &input_grads[i]));
        Val out = build(t, leaves, true);
        if (t.value(out).numel() != 1)
            throw std::invalid_argument("grad_check_model: function must be scalar-valued");
        t.backward(out);
    }

    GradCheckReport rep;
    auto compare = [&](double an, double fd) {
        const double denom = std::max({1.0, std::abs(an), std::abs(fd)});
        rep.max_rel_err = std::max(rep.max_rel_err, std::abs(an - fd) / denom);
        ++rep.checked;
    };

    for (size_t i = 0; i < inputs.size(); ++i)
        for (int64_t j = 0; j < inputs[i].numel(); ++j) {
            const double keep = inputs[i][j];
            inputs[i][j] = keep + step;
            const double fp = eval();
            inputs[i][j] = keep - step;
            const double fm = eval();
            inputs[i][j] = keep;
            compare(input_grads[i][j], (fp - fm) / (2.0 * step));
        }

    for (int h = 0; h < params.count(); ++h) {
        Tensor<double>& v = params.value(h);
        for (int64_t j = 0; j < v.numel(); ++j) {
            const double keep = v[j];
            v[j] = keep + step;
            const double fp = eval();
            v[j] = keep - step;
            const double fm = eval();
            v[j] = keep;
            compare(params.grad(h)[j], (fp - fm) / (2.0 * step));
        }
    }
    return rep;
}

} // namespace jmsac
