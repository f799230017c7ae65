#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

namespace jmsac {

// Training-path (f32) transcendentals written so the compiler can vectorize
// the surrounding loops. The f64 verification path keeps libm.

// exp(x) via 2^(x log2 e) with a degree-5 polynomial for the fraction.
// Relative error ~3e-7 over the softmax-relevant range. Branch-free so
// elementwise loops vectorize.
inline float fast_exp(float x) {
    const float xc = std::min(std::max(x, -87.0f), 88.0f);
    const float t = xc * 1.442695041f;
    const float f = std::floor(t);
    const float r = t - f;
    // 2^r on [0, 1).
    float p = 1.8775767e-3f;
    p = p * r + 8.9893397e-3f;
    p = p * r + 5.5826318e-2f;
    p = p * r + 2.4015361e-1f;
    p = p * r + 6.9315308e-1f;
    p = p * r + 9.9999994e-1f;
    const int32_t i = (static_cast<int32_t>(f) + 127) << 23;
    return p * std::bit_cast<float>(i);
}

inline double fast_exp(double x) { return std::exp(x); }

inline float fast_tanh(float x) {
    // tanh(x) = 1 - 2 / (exp(2x) + 1)
    const float e = fast_exp(2.0f * x);
    return 1.0f - 2.0f / (e + 1.0f);
}

inline double fast_tanh(double x) { return std::tanh(x); }

// GELU: the f32 path uses the tanh form; the f64 path is exact (erf).
inline float gelu_fwd(float x) {
    const float inner = 0.7978845608f * (x + 0.044715f * x * x * x);
    return 0.5f * x * (1.0f + fast_tanh(inner));
}

inline float gelu_bwd(float x) {
    const float x2 = x * x;
    const float inner = 0.7978845608f * (x + 0.044715f * x * x2);
    const float t = fast_tanh(inner);
    const float dinner = 0.7978845608f * (1.0f + 3.0f * 0.044715f * x2);
    return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * dinner;
}

inline double gelu_fwd(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475));
}

inline double gelu_bwd(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475));
    const double pdf = 0.3989422804014327 * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

// ---- wide kernels --------------------------------------------------------
// GCC/Clang vector extensions; 16-lane f32. Lane structure is fixed, so
// results are bit-stable across runs.

#if defined(__GNUC__) || defined(__clang__)
#define JMSAC_VECTOR_EXP 1
using vf16 = float __attribute__((vector_size(64)));
using vi16 = int32_t __attribute__((vector_size(64)));

inline vf16 vf16_broadcast(float v) {
    return vf16{v, v, v, v, v, v, v, v, v, v, v, v, v, v, v, v};
}

inline vf16 vexp(vf16 x) {
    const vf16 lo = vf16_broadcast(-87.0f), hi = vf16_broadcast(88.0f);
    x = x < lo ? lo : x;
    x = x > hi ? hi : x;
    const vf16 t = x * vf16_broadcast(1.442695041f);
    vi16 ti = __builtin_convertvector(t, vi16);
    vf16 tf = __builtin_convertvector(ti, vf16);
    ti += (t < tf);  // lanes where trunc overshot get -1: floor
    tf = __builtin_convertvector(ti, vf16);
    const vf16 r = t - tf;
    vf16 p = vf16_broadcast(1.8775767e-3f);
    p = p * r + vf16_broadcast(8.9893397e-3f);
    p = p * r + vf16_broadcast(5.5826318e-2f);
    p = p * r + vf16_broadcast(2.4015361e-1f);
    p = p * r + vf16_broadcast(6.9315308e-1f);
    p = p * r + vf16_broadcast(9.9999994e-1f);
    const vi16 bits = (ti + 127) << 23;
    vf16 scale;
    __builtin_memcpy(&scale, &bits, sizeof scale);
    return p * scale;
}
#endif

// Softmax row kernel: y = softmax(x) over one row of length d.
inline void softmax_row(const float* __restrict x, float* __restrict y, int64_t d) {
    float mx = x[0];
    for (int64_t j = 1; j < d; ++j) mx = std::max(mx, x[j]);
    float sum = 0.0f;
#ifdef JMSAC_VECTOR_EXP
    int64_t j = 0;
    const vf16 vmx = vf16_broadcast(mx);
    vf16 vsum = vf16_broadcast(0.0f);
    for (; j + 16 <= d; j += 16) {
        vf16 vx;
        __builtin_memcpy(&vx, x + j, sizeof vx);
        const vf16 vy = vexp(vx - vmx);
        __builtin_memcpy(y + j, &vy, sizeof vy);
        vsum += vy;
    }
    for (int l = 0; l < 16; ++l) sum += vsum[l];
    for (; j < d; ++j) {
        y[j] = fast_exp(x[j] - mx);
        sum += y[j];
    }
#else
    for (int64_t j = 0; j < d; ++j) {
        y[j] = fast_exp(x[j] - mx);
        sum += y[j];
    }
#endif
    const float inv = 1.0f / sum;
    for (int64_t jj = 0; jj < d; ++jj) y[jj] *= inv;
}

inline void softmax_row(const double* __restrict x, double* __restrict y, int64_t d) {
    double mx = x[0];
    for (int64_t j = 1; j < d; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < d; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
    }
    const double inv = 1.0 / sum;
    for (int64_t j = 0; j < d; ++j) y[j] *= inv;
}

inline void gelu_array(const float* __restrict x, float* __restrict y, int64_t n) {
#ifdef JMSAC_VECTOR_EXP
    int64_t i = 0;
    const vf16 c1 = vf16_broadcast(0.7978845608f), c2 = vf16_broadcast(0.044715f);
    const vf16 half = vf16_broadcast(0.5f), one = vf16_broadcast(1.0f), two = vf16_broadcast(2.0f);
    for (; i + 16 <= n; i += 16) {
        vf16 vx;
        __builtin_memcpy(&vx, x + i, sizeof vx);
        const vf16 inner = c1 * (vx + c2 * vx * vx * vx);
        const vf16 e = vexp(two * inner);
        const vf16 t = one - two / (e + one);
        const vf16 vy = half * vx * (one + t);
        __builtin_memcpy(y + i, &vy, sizeof vy);
    }
    for (; i < n; ++i) y[i] = gelu_fwd(x[i]);
#else
    for (int64_t i = 0; i < n; ++i) y[i] = gelu_fwd(x[i]);
#endif
}

inline void gelu_grad_array(const float* __restrict x, const float* __restrict g,
                            float* __restrict dx, int64_t n) {
#ifdef JMSAC_VECTOR_EXP
    int64_t i = 0;
    const vf16 c1 = vf16_broadcast(0.7978845608f), c2 = vf16_broadcast(0.044715f);
    const vf16 half = vf16_broadcast(0.5f), one = vf16_broadcast(1.0f), two = vf16_broadcast(2.0f);
    const vf16 c3 = vf16_broadcast(3.0f * 0.044715f);
    for (; i + 16 <= n; i += 16) {
        vf16 vx, vg, vdx;
        __builtin_memcpy(&vx, x + i, sizeof vx);
        __builtin_memcpy(&vg, g + i, sizeof vg);
        __builtin_memcpy(&vdx, dx + i, sizeof vdx);
        const vf16 x2 = vx * vx;
        const vf16 inner = c1 * (vx + c2 * vx * x2);
        const vf16 e = vexp(two * inner);
        const vf16 t = one - two / (e + one);
        const vf16 dinner = c1 * (one + c3 * x2);
        const vf16 der = half * (one + t) + half * vx * (one - t * t) * dinner;
        vdx += vg * der;
        __builtin_memcpy(dx + i, &vdx, sizeof vdx);
    }
    for (; i < n; ++i) dx[i] += g[i] * gelu_bwd(x[i]);
#else
    for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * gelu_bwd(x[i]);
#endif
}

inline void gelu_array(const double* __restrict x, double* __restrict y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = gelu_fwd(x[i]);
}

inline void gelu_grad_array(const double* __restrict x, const double* __restrict g,
                            double* __restrict dx, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * gelu_bwd(x[i]);
}

} // namespace jmsac
