#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "jmsac/nn.hpp"

namespace jmsac {

// Decoupled weight decay AdamW. Decay is applied to the parameter before the
// moment update; moments are bias-corrected.
template <typename S>
class AdamW {
public:
    struct Hyper {
        double lr = 3e-4;
        double weight_decay = 0.05;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    AdamW(Params<S>& params, Hyper hp) : params_(&params), hp_(hp) {
        m_.reserve(static_cast<size_t>(params.count()));
        v_.reserve(static_cast<size_t>(params.count()));
        for (auto& e : params.entries()) {
            m_.emplace_back(e.value.shape());
            v_.emplace_back(e.value.shape());
        }
    }

    Hyper& hyper() { return hp_; }
    int64_t step_count() const { return step_; }
    const std::vector<Tensor<S>>& first_moments() const { return m_; }
    const std::vector<Tensor<S>>& second_moments() const { return v_; }
    std::vector<Tensor<S>>& first_moments() { return m_; }
    std::vector<Tensor<S>>& second_moments() { return v_; }
    void set_step_count(int64_t s) { step_ = s; }

    // Applies one update from the stored gradients. Throws without touching
    // any state if a gradient is non-finite.
    void step() {
        for (auto& e : params_->entries())
            if (!e.grad.all_finite())
                throw std::runtime_error("adamw: non-finite gradient in " + e.name);
        ++step_;
        const double bc1 = 1.0 - std::pow(hp_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(hp_.beta2, static_cast<double>(step_));
        const S decay = static_cast<S>(1.0 - hp_.lr * hp_.weight_decay);
        for (size_t pi = 0; pi < m_.size(); ++pi) {
            auto& e = params_->entries()[pi];
            Tensor<S>& m = m_[pi];
            Tensor<S>& v = v_[pi];
            for (int64_t i = 0; i < e.value.numel(); ++i) {
                e.value[i] *= decay;
                const S g = e.grad[i];
                m[i] = static_cast<S>(hp_.beta1) * m[i] + static_cast<S>(1.0 - hp_.beta1) * g;
                v[i] = static_cast<S>(hp_.beta2) * v[i] + static_cast<S>(1.0 - hp_.beta2) * g * g;
                const double mhat = static_cast<double>(m[i]) / bc1;
                const double vhat = static_cast<double>(v[i]) / bc2;
                e.value[i] -= static_cast<S>(hp_.lr * mhat / (std::sqrt(vhat) + hp_.eps));
            }
        }
    }

private:
    Params<S>* params_;
    Hyper hp_;
    std::vector<Tensor<S>> m_, v_;
    int64_t step_ = 0;
};

// Cosine decay from base to zero across total steps; lr(0) = base,
// lr(total-1) = 0.
inline double cosine_lr(double base, int64_t step, int64_t total_steps) {
    if (total_steps <= 1) return step == 0 ? base : 0.0;
    const double x = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    return base * 0.5 * (1.0 + std::cos(3.14159265358979323846 * x));
}

// Linear ramp across the configured momentum range; beta(0) = lo,
// beta(total-1) = hi.
inline double ema_beta(double lo, double hi, int64_t step, int64_t total_steps) {
    if (total_steps <= 1) return hi;
    const double x = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    return lo + (hi - lo) * x;
}

// theta_bar <- beta * theta_bar + (1 - beta) * theta. Teacher entry i aligns
// with student handle student_handles[i].
template <typename S>
void ema_update(Params<S>& teacher, const Params<S>& student,
                const std::vector<int>& student_handles, double beta) {
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("ema_update: beta outside [0,1]");
    if (teacher.count() != static_cast<int64_t>(student_handles.size()))
        throw std::invalid_argument("ema_update: store size mismatch");
    for (int64_t i = 0; i < teacher.count(); ++i) {
        Tensor<S>& tv = teacher.value(static_cast<int>(i));
        const Tensor<S>& sv = student.value(student_handles[static_cast<size_t>(i)]);
        if (!tv.same_shape(sv)) throw std::invalid_argument("ema_update: shape mismatch");
        for (int64_t j = 0; j < tv.numel(); ++j)
            tv[j] = static_cast<S>(beta) * tv[j] + static_cast<S>(1.0 - beta) * sv[j];
    }
}

// Aligned-store convenience overload.
template <typename S>
void ema_update(Params<S>& teacher, const Params<S>& student_subset, double beta) {
    std::vector<int> handles(static_cast<size_t>(student_subset.count()));
    for (size_t i = 0; i < handles.size(); ++i) handles[i] = static_cast<int>(i);
    ema_update(teacher, student_subset, handles, beta);
}

} // namespace jmsac
