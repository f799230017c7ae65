#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "jmsac/blas.hpp"
#include "jmsac/fastmath.hpp"
#include "jmsac/tensor.hpp"

namespace jmsac {

// Handle into a Tape's node list.
struct Val {
    int32_t i = -1;
    bool valid() const { return i >= 0; }
};

// Eager reverse-mode tape. Nodes are created in topological order (parents
// before children); backward() walks them exactly once in reverse creation
// order. Graphs are immutable once built; one tape per forward pass.
template <typename S>
class Tape {
public:
    struct Node {
        Tensor<S> value;
        Tensor<S> grad;
        std::function<void(Tape&, int32_t)> backward;
        bool needs_grad = false;
        bool grad_alloc = false;
        Tensor<S>* sink = nullptr;
    };

    Tape() { nodes_.reserve(256); }

    int64_t size() const { return static_cast<int64_t>(nodes_.size()); }

    const Tensor<S>& value(Val v) const { return nodes_[static_cast<size_t>(v.i)].value; }
    Tensor<S>& value(Val v) { return nodes_[static_cast<size_t>(v.i)].value; }
    const Tensor<S>& grad(Val v) const { return nodes_[static_cast<size_t>(v.i)].grad; }
    bool needs_grad(Val v) const { return nodes_[static_cast<size_t>(v.i)].needs_grad; }

    Val leaf(Tensor<S> v, Tensor<S>* grad_sink) {
        Node n;
        n.value = std::move(v);
        n.needs_grad = grad_sink != nullptr;
        n.sink = grad_sink;
        return push(std::move(n));
    }

    Val constant(Tensor<S> v) { return leaf(std::move(v), nullptr); }

    // ---- elementwise ----

    Val add(Val a, Val b) {
        check_same_shape(a, b, "add");
        Tensor<S> out = value(a);
        const Tensor<S>& vb = value(b);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] += vb[i];
        return unary_binary(std::move(out), a, b, [](Tape& t, int32_t self, Val pa, Val pb) {
            const Tensor<S>& g = t.node(self).grad;
            t.accum(pa, [&](Tensor<S>& d) {
                for (int64_t i = 0; i < g.numel(); ++i) d[i] += g[i];
            });
            t.accum(pb, [&](Tensor<S>& d) {
                for (int64_t i = 0; i < g.numel(); ++i) d[i] += g[i];
            });
        });
    }

    Val sub(Val a, Val b) {
        check_same_shape(a, b, "sub");
        Tensor<S> out = value(a);
        const Tensor<S>& vb = value(b);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] -= vb[i];
        return unary_binary(std::move(out), a, b, [](Tape& t, int32_t self, Val pa, Val pb) {
            const Tensor<S>& g = t.node(self).grad;
            t.accum(pa, [&](Tensor<S>& d) {
                for (int64_t i = 0; i < g.numel(); ++i) d[i] += g[i];
            });
            t.accum(pb, [&](Tensor<S>& d) {
                for (int64_t i = 0; i < g.numel(); ++i) d[i] -= g[i];
            });
        });
    }

    Val mul(Val a, Val b) {
        check_same_shape(a, b, "mul");
        Tensor<S> out = value(a);
        const Tensor<S>& vb = value(b);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] *= vb[i];
        return unary_binary(std::move(out), a, b, [](Tape& t, int32_t self, Val pa, Val pb) {
            const Tensor<S>& g = t.node(self).grad;
            const Tensor<S>& va = t.value(pa);
            const Tensor<S>& vb2 = t.value(pb);
            t.accum(pa, [&](Tensor<S>& d) {
                for (int64_t i = 0; i < g.numel(); ++i) d[i] += g[i] * vb2[i];
            });
            t.accum(pb, [&](Tensor<S>& d) {
                for (int64_t i = 0; i < g.numel(); ++i) d[i] += g[i] * va[i];
            });
        });
    }

    Val scale(Val a, S s) {
        Tensor<S> out = value(a);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
        return unary_binary(std::move(out), a, Val{}, [s](Tape& t, int32_t self, Val pa, Val) {
            const Tensor<S>& g = t.node(self).grad;
            t.accum(pa, [&](Tensor<S>& d) {
                for (int64_t i = 0; i < g.numel(); ++i) d[i] += s * g[i];
            });
        });
    }

    Val gelu(Val a) {
        const Tensor<S>& x = value(a);
        Tensor<S> out = Tensor<S>::uninit(x.shape());
        gelu_array(x.data(), out.data(), x.numel());
        return unary_binary(std::move(out), a, Val{}, [](Tape& t, int32_t self, Val pa, Val) {
            const Tensor<S>& g = t.node(self).grad;
            const Tensor<S>& x2 = t.value(pa);
            t.accum(pa, [&](Tensor<S>& d) {
                gelu_grad_array(x2.data(), g.data(), d.data(), g.numel());
            });
        });
    }

    Val sigmoid(Val a) {
        const Tensor<S>& x = value(a);
        Tensor<S> out = Tensor<S>::uninit(x.shape());
        for (int64_t i = 0; i < x.numel(); ++i)
            out[i] = static_cast<S>(1.0 / (1.0 + std::exp(-static_cast<double>(x[i]))));
        return unary_with_out(std::move(out), a, [](S y, S g) { return g * y * (S(1) - y); });
    }

    Val tanh_act(Val a) {
        const Tensor<S>& x = value(a);
        Tensor<S> out = Tensor<S>::uninit(x.shape());
        for (int64_t i = 0; i < x.numel(); ++i)
            out[i] = static_cast<S>(std::tanh(static_cast<double>(x[i])));
        return unary_with_out(std::move(out), a, [](S y, S g) { return g * (S(1) - y * y); });
    }

    // ---- shape plumbing ----

    Val reshape(Val a, Shape s) {
        Tensor<S> out = value(a).reshaped(std::move(s));
        return unary_binary(std::move(out), a, Val{}, [](Tape& t, int32_t self, Val pa, Val) {
            const Tensor<S>& g = t.node(self).grad;
            t.accum(pa, [&](Tensor<S>& d) {
                for (int64_t i = 0; i < g.numel(); ++i) d[i] += g[i];
            });
        });
    }

    // [I, D] -> [H, I, D/H]
    Val split_heads(Val a, int64_t heads) {
        const Tensor<S>& x = value(a);
        if (x.rank() != 2) throw std::invalid_argument("split_heads expects rank-2");
        const int64_t rows = x.extent(0), d = x.extent(1);
        if (d % heads != 0) throw std::invalid_argument("width not divisible by head count");
        const int64_t hd = d / heads;
        Tensor<S> out = Tensor<S>::uninit({heads, rows, hd});
        for (int64_t h = 0; h < heads; ++h)
            for (int64_t i = 0; i < rows; ++i)
                for (int64_t j = 0; j < hd; ++j) out[(h * rows + i) * hd + j] = x[i * d + h * hd + j];
        return unary_binary(std::move(out), a, Val{},
                            [heads, rows, d, hd](Tape& t, int32_t self, Val pa, Val) {
                                const Tensor<S>& g = t.node(self).grad;
                                t.accum(pa, [&](Tensor<S>& dd) {
                                    for (int64_t h = 0; h < heads; ++h)
                                        for (int64_t i = 0; i < rows; ++i)
                                            for (int64_t j = 0; j < hd; ++j)
                                                dd[i * d + h * hd + j] += g[(h * rows + i) * hd + j];
                                });
                            });
    }

    // [H, I, hd] -> [I, H*hd]
    Val merge_heads(Val a) {
        const Tensor<S>& x = value(a);
        if (x.rank() != 3) throw std::invalid_argument("merge_heads expects rank-3");
        const int64_t heads = x.extent(0), rows = x.extent(1), hd = x.extent(2);
        const int64_t d = heads * hd;
        Tensor<S> out = Tensor<S>::uninit({rows, d});
        for (int64_t h = 0; h < heads; ++h)
            for (int64_t i = 0; i < rows; ++i)
                for (int64_t j = 0; j < hd; ++j) out[i * d + h * hd + j] = x[(h * rows + i) * hd + j];
        return unary_binary(std::move(out), a, Val{},
                            [heads, rows, d, hd](Tape& t, int32_t self, Val pa, Val) {
                                const Tensor<S>& g = t.node(self).grad;
                                t.accum(pa, [&](Tensor<S>& dd) {
                                    for (int64_t h = 0; h < heads; ++h)
                                        for (int64_t i = 0; i < rows; ++i)
                                            for (int64_t j = 0; j < hd; ++j)
                                                dd[(h * rows + i) * hd + j] += g[i * d + h * hd + j];
                                });
                            });
    }

    // [N, C, H, W] -> [N*H*W, C]; token order is frame-major, then (h, w).
    Val nchw_to_tokens(Val a) {
        const Tensor<S>& x = value(a);
        if (x.rank() != 4) throw std::invalid_argument("nchw_to_tokens expects rank-4");
        const int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
        Tensor<S> out = Tensor<S>::uninit({n * h * w, c});
        for (int64_t in = 0; in < n; ++in)
            for (int64_t ic = 0; ic < c; ++ic)
                for (int64_t ih = 0; ih < h; ++ih)
                    for (int64_t iw = 0; iw < w; ++iw)
                        out[((in * h + ih) * w + iw) * c + ic] = x[((in * c + ic) * h + ih) * w + iw];
        return unary_binary(std::move(out), a, Val{},
                            [n, c, h, w](Tape& t, int32_t self, Val pa, Val) {
                                const Tensor<S>& g = t.node(self).grad;
                                t.accum(pa, [&](Tensor<S>& dd) {
                                    for (int64_t in = 0; in < n; ++in)
                                        for (int64_t ic = 0; ic < c; ++ic)
                                            for (int64_t ih = 0; ih < h; ++ih)
                                                for (int64_t iw = 0; iw < w; ++iw)
                                                    dd[((in * c + ic) * h + ih) * w + iw] +=
                                                        g[((in * h + ih) * w + iw) * c + ic];
                                });
                            });
    }

    Val concat_rows(const std::vector<Val>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
        int64_t rows = 0;
        const int64_t cols = value(parts[0]).extent(1);
        for (Val p : parts) {
            if (value(p).rank() != 2 || value(p).extent(1) != cols)
                throw std::invalid_argument("concat_rows: column mismatch");
            rows += value(p).extent(0);
        }
        Tensor<S> out = Tensor<S>::uninit({rows, cols});
        int64_t r0 = 0;
        for (Val p : parts) {
            const Tensor<S>& v = value(p);
            std::copy(v.data(), v.data() + v.numel(), out.data() + r0 * cols);
            r0 += v.extent(0);
        }
        Node n;
        n.value = std::move(out);
        for (Val p : parts) n.needs_grad = n.needs_grad || needs_grad(p);
        std::vector<Val> ps = parts;
        n.backward = [ps, cols](Tape& t, int32_t self) {
            const Tensor<S>& g = t.node(self).grad;
            int64_t r = 0;
            for (Val p : ps) {
                const int64_t pr = t.value(p).extent(0);
                t.accum(p, [&](Tensor<S>& d) {
                    for (int64_t i = 0; i < pr * cols; ++i) d[i] += g[r * cols + i];
                });
                r += pr;
            }
        };
        return push(std::move(n));
    }

    Val concat_cols(Val a, Val b) {
        const Tensor<S>& va = value(a);
        const Tensor<S>& vb = value(b);
        if (va.rank() != 2 || vb.rank() != 2 || va.extent(0) != vb.extent(0))
            throw std::invalid_argument("concat_cols: row mismatch");
        const int64_t rows = va.extent(0), ca = va.extent(1), cb = vb.extent(1);
        Tensor<S> out = Tensor<S>::uninit({rows, ca + cb});
        for (int64_t i = 0; i < rows; ++i) {
            std::copy(va.data() + i * ca, va.data() + (i + 1) * ca, out.data() + i * (ca + cb));
            std::copy(vb.data() + i * cb, vb.data() + (i + 1) * cb, out.data() + i * (ca + cb) + ca);
        }
        return unary_binary(std::move(out), a, b,
                            [rows, ca, cb](Tape& t, int32_t self, Val pa, Val pb) {
                                const Tensor<S>& g = t.node(self).grad;
                                t.accum(pa, [&](Tensor<S>& d) {
                                    for (int64_t i = 0; i < rows; ++i)
                                        for (int64_t j = 0; j < ca; ++j)
                                            d[i * ca + j] += g[i * (ca + cb) + j];
                                });
                                t.accum(pb, [&](Tensor<S>& d) {
                                    for (int64_t i = 0; i < rows; ++i)
                                        for (int64_t j = 0; j < cb; ++j)
                                            d[i * cb + j] += g[i * (ca + cb) + ca + j];
                                });
                            });
    }

    Val slice_cols(Val a, int64_t c0, int64_t c1) {
        const Tensor<S>& x = value(a);
        if (x.rank() != 2 || c0 < 0 || c1 > x.extent(1) || c0 >= c1)
            throw std::invalid_argument("slice_cols: bad range");
        const int64_t rows = x.extent(0), cols = x.extent(1), w = c1 - c0;
        Tensor<S> out = Tensor<S>::uninit({rows, w});
        for (int64_t i = 0; i < rows; ++i)
            std::copy(x.data() + i * cols + c0, x.data() + i * cols + c1, out.data() + i * w);
        return unary_binary(std::move(out), a, Val{},
                            [rows, cols, c0, w](Tape& t, int32_t self, Val pa, Val) {
                                const Tensor<S>& g = t.node(self).grad;
                                t.accum(pa, [&](Tensor<S>& d) {
                                    for (int64_t i = 0; i < rows; ++i)
                                        for (int64_t j = 0; j < w; ++j)
                                            d[i * cols + c0 + j] += g[i * w + j];
                                });
                            });
    }

    // Row gather; duplicate indices accumulate in the backward scatter, so this
    // doubles as embedding lookup.
    Val gather_rows(Val a, std::vector<int64_t> idx) {
        const Tensor<S>& x = value(a);
        if (x.rank() != 2) throw std::invalid_argument("gather_rows expects rank-2");
        const int64_t cols = x.extent(1);
        for (int64_t r : idx)
            if (r < 0 || r >= x.extent(0)) throw std::out_of_range("gather_rows: index out of range");
        Tensor<S> out = Tensor<S>::uninit({static_cast<int64_t>(idx.size()), cols});
        for (size_t i = 0; i < idx.size(); ++i)
            std::copy(x.data() + idx[i] * cols, x.data() + (idx[i] + 1) * cols,
                      out.data() + static_cast<int64_t>(i) * cols);
        return unary_binary(std::move(out), a, Val{},
                            [idx = std::move(idx), cols](Tape& t, int32_t self, Val pa, Val) {
                                const Tensor<S>& g = t.node(self).grad;
                                t.accum(pa, [&](Tensor<S>& d) {
                                    for (size_t i = 0; i < idx.size(); ++i)
                                        for (int64_t j = 0; j < cols; ++j)
                                            d[idx[i] * cols + j] += g[static_cast<int64_t>(i) * cols + j];
                                });
                            });
    }

    // Per-group row means: out[g] = mean_{r in groups[g]} x[r].
    Val mean_rows_groups(Val a, std::vector<std::vector<int64_t>> groups) {
        const Tensor<S>& x = value(a);
        const int64_t cols = x.extent(1);
        Tensor<S> out({static_cast<int64_t>(groups.size()), cols});
        for (size_t gi = 0; gi < groups.size(); ++gi) {
            if (groups[gi].empty()) throw std::invalid_argument("mean_rows_groups: empty group");
            const S inv = S(1) / static_cast<S>(groups[gi].size());
            for (int64_t r : groups[gi])
                for (int64_t j = 0; j < cols; ++j) out[static_cast<int64_t>(gi) * cols + j] += x[r * cols + j] * inv;
        }
        return unary_binary(std::move(out), a, Val{},
                            [groups = std::move(groups), cols](Tape& t, int32_t self, Val pa, Val) {
                                const Tensor<S>& g = t.node(self).grad;
                                t.accum(pa, [&](Tensor<S>& d) {
                                    for (size_t gi = 0; gi < groups.size(); ++gi) {
                                        const S inv = S(1) / static_cast<S>(groups[gi].size());
                                        for (int64_t r : groups[gi])
                                            for (int64_t j = 0; j < cols; ++j)
                                                d[r * cols + j] += g[static_cast<int64_t>(gi) * cols + j] * inv;
                                    }
                                });
                            });
    }

    Val repeat_row(Val a, int64_t n) {
        const Tensor<S>& x = value(a);
        if (x.rank() != 2 || x.extent(0) != 1) throw std::invalid_argument("repeat_row expects [1,K]");
        const int64_t cols = x.extent(1);
        Tensor<S> out = Tensor<S>::uninit({n, cols});
        for (int64_t i = 0; i < n; ++i)
            std::copy(x.data(), x.data() + cols, out.data() + i * cols);
        return unary_binary(std::move(out), a, Val{}, [n, cols](Tape& t, int32_t self, Val pa, Val) {
            const Tensor<S>& g = t.node(self).grad;
            t.accum(pa, [&](Tensor<S>& d) {
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < cols; ++j) d[j] += g[i * cols + j];
            });
        });
    }

    // ---- dense algebra ----

    Val matmul(Val a, Val b, bool ta = false, bool tb = false) {
        const Tensor<S>& va = value(a);
        const Tensor<S>& vb = value(b);
        if (va.rank() != 2 || vb.rank() != 2) throw std::invalid_argument("matmul expects rank-2");
        const int64_t m = ta ? va.extent(1) : va.extent(0);
        const int64_t k = ta ? va.extent(0) : va.extent(1);
        const int64_t kb = tb ? vb.extent(1) : vb.extent(0);
        const int64_t n = tb ? vb.extent(0) : vb.extent(1);
        if (k != kb) throw std::invalid_argument("matmul inner dim mismatch");
        Tensor<S> out = Tensor<S>::uninit({m, n});
        blas::gemm(ta, tb, m, n, k, S(1), va.data(), va.extent(1), vb.data(), vb.extent(1), S(0),
                   out.data(), n);
        return unary_binary(std::move(out), a, b,
                            [ta, tb, m, n, k](Tape& t, int32_t self, Val pa, Val pb) {
                                matmul_backward(t, self, pa, pb, ta, tb, m, n, k);
                            });
    }

    // Batched matmul over leading dim: [B,M,K]x[B,K,N] with transpose flags on
    // the trailing two dims and an optional scalar factor folded into the
    // product.
    Val bmm(Val a, Val b, bool ta = false, bool tb = false, S alpha = S(1)) {
        const Tensor<S>& va = value(a);
        const Tensor<S>& vb = value(b);
        if (va.rank() != 3 || vb.rank() != 3 || va.extent(0) != vb.extent(0))
            throw std::invalid_argument("bmm expects matching rank-3");
        const int64_t bs = va.extent(0);
        const int64_t m = ta ? va.extent(2) : va.extent(1);
        const int64_t k = ta ? va.extent(1) : va.extent(2);
        const int64_t kb = tb ? vb.extent(2) : vb.extent(1);
        const int64_t n = tb ? vb.extent(1) : vb.extent(2);
        if (k != kb) throw std::invalid_argument("bmm inner dim mismatch");
        Tensor<S> out = Tensor<S>::uninit({bs, m, n});
        const int64_t sa = va.extent(1) * va.extent(2);
        const int64_t sb = vb.extent(1) * vb.extent(2);
        for (int64_t i = 0; i < bs; ++i)
            blas::gemm(ta, tb, m, n, k, alpha, va.data() + i * sa, va.extent(2),
                       vb.data() + i * sb, vb.extent(2), S(0), out.data() + i * m * n, n);
        return unary_binary(
            std::move(out), a, b,
            [ta, tb, bs, m, n, k, sa, sb, alpha](Tape& t, int32_t self, Val pa, Val pb) {
                const Tensor<S>& g = t.node(self).grad;
                const Tensor<S>& va2 = t.value(pa);
                const Tensor<S>& vb2 = t.value(pb);
                t.accum(pa, [&](Tensor<S>& d) {
                    for (int64_t i = 0; i < bs; ++i)
                        grad_wrt_a(ta, tb, m, n, k, alpha, g.data() + i * m * n, va2.extent(2),
                                   vb2.data() + i * sb, vb2.extent(2), d.data() + i * sa);
                });
                t.accum(pb, [&](Tensor<S>& d) {
                    for (int64_t i = 0; i < bs; ++i)
                        grad_wrt_b(ta, tb, m, n, k, alpha, g.data() + i * m * n, va2.data() + i * sa,
                                   va2.extent(2), vb2.extent(2), d.data() + i * sb);
                });
            });
    }

    // Fused attention over [H, I, hd] head tensors: probabilities are kept
    // for the backward pass; score matrices never materialize as nodes.
    Val attention(Val q, Val k, Val v, S alpha) {
        const Tensor<S>& vq = value(q);
        const Tensor<S>& vk = value(k);
        const Tensor<S>& vv = value(v);
        if (vq.rank() != 3 || !vq.same_shape(vk) || !vq.same_shape(vv))
            throw std::invalid_argument("attention: expects matching [H, I, hd]");
        const int64_t heads = vq.extent(0), rows = vq.extent(1), hd = vq.extent(2);
        auto probs = std::make_shared<Tensor<S>>(Tensor<S>::uninit({heads, rows, rows}));
        Tensor<S> out = Tensor<S>::uninit({heads, rows, hd});
        const int64_t sp = rows * rows, sh = rows * hd;
        for (int64_t h = 0; h < heads; ++h) {
            S* p = probs->data() + h * sp;
            blas::gemm(false, true, rows, rows, hd, alpha, vq.data() + h * sh, hd,
                       vk.data() + h * sh, hd, S(0), p, rows);
            for (int64_t r = 0; r < rows; ++r) softmax_row(p + r * rows, p + r * rows, rows);
            blas::gemm(false, false, rows, hd, rows, S(1), p, rows, vv.data() + h * sh, hd, S(0),
                       out.data() + h * sh, hd);
        }
        Node nd;
        nd.value = std::move(out);
        nd.needs_grad = needsg(q) || needsg(k) || needsg(v);
        nd.backward = [q, k, v, alpha, probs, heads, rows, hd, sp, sh](Tape& t, int32_t self) {
            const Tensor<S>& g = t.node(self).grad;
            const Tensor<S>& vq2 = t.value(q);
            const Tensor<S>& vk2 = t.value(k);
            const Tensor<S>& vv2 = t.value(v);
            Tensor<S> ds = Tensor<S>::uninit({rows, rows});
            for (int64_t h = 0; h < heads; ++h) {
                const S* p = probs->data() + h * sp;
                // dV += P^T g
                t.accum(v, [&](Tensor<S>& d) {
                    blas::gemm(true, false, rows, hd, rows, S(1), p, rows, g.data() + h * sh, hd,
                               S(1), d.data() + h * sh, hd);
                });
                // dP = g V^T; dS = P o (dP - rowsum(dP o P))
                blas::gemm(false, true, rows, rows, hd, S(1), g.data() + h * sh, hd,
                           vv2.data() + h * sh, hd, S(0), ds.data(), rows);
                for (int64_t r = 0; r < rows; ++r) {
                    S* dsr = ds.data() + r * rows;
                    const S* pr = p + r * rows;
                    S dot = S(0);
                    for (int64_t j = 0; j < rows; ++j) dot += dsr[j] * pr[j];
                    for (int64_t j = 0; j < rows; ++j) dsr[j] = pr[j] * (dsr[j] - dot);
                }
                t.accum(q, [&](Tensor<S>& d) {
                    blas::gemm(false, false, rows, hd, rows, alpha, ds.data(), rows,
                               vk2.data() + h * sh, hd, S(1), d.data() + h * sh, hd);
                });
                t.accum(k, [&](Tensor<S>& d) {
                    blas::gemm(true, false, rows, hd, rows, alpha, ds.data(), rows,
                               vq2.data() + h * sh, hd, S(1), d.data() + h * sh, hd);
                });
            }
        };
        return push(std::move(nd));
    }

    // x:[N,in] w:[out,in] b:[out] -> [N,out]
    Val linear(Val x, Val w, Val b) {
        const Tensor<S>& vx = value(x);
        const Tensor<S>& vw = value(w);
        const Tensor<S>& vb = value(b);
        if (vx.rank() != 2 || vw.rank() != 2 || vb.rank() != 1)
            throw std::invalid_argument("linear: bad ranks");
        if (vx.extent(1) != vw.extent(1) || vw.extent(0) != vb.extent(0))
            throw std::invalid_argument("linear: shape mismatch");
        const int64_t n = vx.extent(0), in = vx.extent(1), out_w = vw.extent(0);
        Tensor<S> out = Tensor<S>::uninit({n, out_w});
        blas::gemm(false, true, n, out_w, in, S(1), vx.data(), in, vw.data(), in, S(0), out.data(),
                   out_w);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < out_w; ++j) out[i * out_w + j] += vb[j];
        Node nd;
        nd.value = std::move(out);
        nd.needs_grad = needs_grad(x) || needs_grad(w) || needs_grad(b);
        nd.backward = [x, w, b, n, in, out_w](Tape& t, int32_t self) {
            const Tensor<S>& g = t.node(self).grad;
            const Tensor<S>& vx2 = t.value(x);
            const Tensor<S>& vw2 = t.value(w);
            t.accum(x, [&](Tensor<S>& d) {
                blas::gemm(false, false, n, in, out_w, S(1), g.data(), out_w, vw2.data(), in, S(1),
                           d.data(), in);
            });
            t.accum(w, [&](Tensor<S>& d) {
                blas::gemm(true, false, out_w, in, n, S(1), g.data(), out_w, vx2.data(), in, S(1),
                           d.data(), in);
            });
            t.accum(b, [&](Tensor<S>& d) {
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < out_w; ++j) d[j] += g[i * out_w + j];
            });
        };
        return push(std::move(nd));
    }

    // Normalization over the last dim with learnable affine.
    Val layer_norm(Val x, Val gamma, Val beta, S eps = S(1e-5)) {
        const Tensor<S>& vx = value(x);
        const int64_t d = vx.extent(vx.rank() - 1);
        if (value(gamma).numel() != d || value(beta).numel() != d)
            throw std::invalid_argument("layer_norm: affine size mismatch");
        const int64_t rows = vx.numel() / d;
        Tensor<S> out = Tensor<S>::uninit(vx.shape());
        auto xhat = std::make_shared<Tensor<S>>(Tensor<S>::uninit(Shape{rows, d}));
        auto inv_std = std::make_shared<Tensor<S>>(Tensor<S>::uninit(Shape{rows}));
        const Tensor<S>& vg = value(gamma);
        const Tensor<S>& vb = value(beta);
        for (int64_t r = 0; r < rows; ++r) {
            const S* xr = vx.data() + r * d;
            S mean = S(0);
            for (int64_t j = 0; j < d; ++j) mean += xr[j];
            mean /= static_cast<S>(d);
            S var = S(0);
            for (int64_t j = 0; j < d; ++j) {
                const S c = xr[j] - mean;
                var += c * c;
            }
            var /= static_cast<S>(d);
            const S istd = S(1) / std::sqrt(var + eps);
            (*inv_std)[r] = istd;
            for (int64_t j = 0; j < d; ++j) {
                const S xh = (xr[j] - mean) * istd;
                (*xhat)[r * d + j] = xh;
                out[r * d + j] = vg[j] * xh + vb[j];
            }
        }
        Node nd;
        nd.value = std::move(out);
        nd.needs_grad = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
        nd.backward = [x, gamma, beta, xhat, inv_std, rows, d](Tape& t, int32_t self) {
            const Tensor<S>& g = t.node(self).grad;
            const Tensor<S>& vg2 = t.value(gamma);
            t.accum(x, [&](Tensor<S>& dx) {
                for (int64_t r = 0; r < rows; ++r) {
                    S sum_dh = S(0), sum_dh_x = S(0);
                    for (int64_t j = 0; j < d; ++j) {
                        const S dh = g[r * d + j] * vg2[j];
                        sum_dh += dh;
                        sum_dh_x += dh * (*xhat)[r * d + j];
                    }
                    const S inv_d = S(1) / static_cast<S>(d);
                    for (int64_t j = 0; j < d; ++j) {
                        const S dh = g[r * d + j] * vg2[j];
                        dx[r * d + j] += (*inv_std)[r] *
                                         (dh - sum_dh * inv_d - (*xhat)[r * d + j] * sum_dh_x * inv_d);
                    }
                }
            });
            t.accum(gamma, [&](Tensor<S>& dgm) {
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < d; ++j) dgm[j] += g[r * d + j] * (*xhat)[r * d + j];
            });
            t.accum(beta, [&](Tensor<S>& db) {
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t j = 0; j < d; ++j) db[j] += g[r * d + j];
            });
        };
        return push(std::move(nd));
    }

    // Softmax over the last dim with max subtraction.
    Val softmax_lastdim(Val a) {
        const Tensor<S>& x = value(a);
        const int64_t d = x.extent(x.rank() - 1);
        const int64_t rows = x.numel() / d;
        Tensor<S> out = Tensor<S>::uninit(x.shape());
        for (int64_t r = 0; r < rows; ++r)
            softmax_row(x.data() + r * d, out.data() + r * d, d);
        return unary_binary(std::move(out), a, Val{}, [rows, d](Tape& t, int32_t self, Val pa, Val) {
            const Tensor<S>& g = t.node(self).grad;
            const Tensor<S>& y = t.node(self).value;
            t.accum(pa, [&](Tensor<S>& dx) {
                for (int64_t r = 0; r < rows; ++r) {
                    S dot = S(0);
                    for (int64_t j = 0; j < d; ++j) dot += g[r * d + j] * y[r * d + j];
                    for (int64_t j = 0; j < d; ++j)
                        dx[r * d + j] += y[r * d + j] * (g[r * d + j] - dot);
                }
            });
        });
    }

    // ---- convolution stack ----

    // Valid (unpadded) conv, x:[N,Cin,H,W], w:[Cout,Cin,kh,kw], stride >= 1.
    Val conv2d(Val x, Val w, Val b, int64_t stride = 1) {
        const Tensor<S>& vx = value(x);
        const Tensor<S>& vw = value(w);
        if (vx.rank() != 4 || vw.rank() != 4) throw std::invalid_argument("conv2d: bad ranks");
        if (vx.extent(1) != vw.extent(1)) throw std::invalid_argument("conv2d: channel mismatch");
        const int64_t n = vx.extent(0), cin = vx.extent(1), h = vx.extent(2), wd = vx.extent(3);
        const int64_t cout = vw.extent(0), kh = vw.extent(2), kw = vw.extent(3);
        if (value(b).numel() != cout) throw std::invalid_argument("conv2d: bias size mismatch");
        const int64_t oh = (h - kh) / stride + 1, ow = (wd - kw) / stride + 1;
        if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d: kernel larger than input");
        const int64_t patch = cin * kh * kw;
        Tensor<S> out = Tensor<S>::uninit({n, cout, oh, ow});
        std::vector<S> col(static_cast<size_t>(patch * oh * ow));
        const Tensor<S>& vb = value(b);
        for (int64_t in = 0; in < n; ++in) {
            im2col(vx.data() + in * cin * h * wd, cin, h, wd, kh, kw, stride, oh, ow, col.data());
            blas::gemm(false, false, cout, oh * ow, patch, S(1), vw.data(), patch, col.data(),
                       oh * ow, S(0), out.data() + in * cout * oh * ow, oh * ow);
            for (int64_t c = 0; c < cout; ++c) {
                S* o = out.data() + (in * cout + c) * oh * ow;
                for (int64_t p = 0; p < oh * ow; ++p) o[p] += vb[c];
            }
        }
        Node nd;
        nd.value = std::move(out);
        nd.needs_grad = needs_grad(x) || needs_grad(w) || needs_grad(b);
        nd.backward = [x, w, b, n, cin, h, wd, cout, kh, kw, stride, oh, ow, patch](Tape& t,
                                                                                   int32_t self) {
            const Tensor<S>& g = t.node(self).grad;
            const Tensor<S>& vx2 = t.value(x);
            const Tensor<S>& vw2 = t.value(w);
            std::vector<S> col(static_cast<size_t>(patch * oh * ow));
            t.accum(w, [&](Tensor<S>& dw) {
                for (int64_t in = 0; in < n; ++in) {
                    im2col(vx2.data() + in * cin * h * wd, cin, h, wd, kh, kw, stride, oh, ow,
                           col.data());
                    blas::gemm(false, true, cout, patch, oh * ow, S(1),
                               g.data() + in * cout * oh * ow, oh * ow, col.data(), oh * ow, S(1),
                               dw.data(), patch);
                }
            });
            t.accum(b, [&](Tensor<S>& db) {
                for (int64_t in = 0; in < n; ++in)
                    for (int64_t c = 0; c < cout; ++c) {
                        const S* gp = g.data() + (in * cout + c) * oh * ow;
                        for (int64_t p = 0; p < oh * ow; ++p) db[c] += gp[p];
                    }
            });
            t.accum(x, [&](Tensor<S>& dx) {
                std::vector<S> dcol(static_cast<size_t>(patch * oh * ow));
                for (int64_t in = 0; in < n; ++in) {
                    blas::gemm(true, false, patch, oh * ow, cout, S(1), vw2.data(), patch,
                               g.data() + in * cout * oh * ow, oh * ow, S(0), dcol.data(), oh * ow);
                    col2im(dcol.data(), cin, h, wd, kh, kw, stride, oh, ow,
                           dx.data() + in * cin * h * wd);
                }
            });
        };
        return push(std::move(nd));
    }

    // 2x2 average pooling, stride 2, trailing odd row/col dropped.
    Val avg_pool2d(Val a) {
        const Tensor<S>& x = value(a);
        if (x.rank() != 4) throw std::invalid_argument("avg_pool2d expects rank-4");
        const int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
        const int64_t oh = h / 2, ow = w / 2;
        if (oh < 1 || ow < 1) throw std::invalid_argument("avg_pool2d: input too small");
        Tensor<S> out = Tensor<S>::uninit({n, c, oh, ow});
        for (int64_t nc = 0; nc < n * c; ++nc) {
            const S* xs = x.data() + nc * h * w;
            S* os = out.data() + nc * oh * ow;
            for (int64_t i = 0; i < oh; ++i)
                for (int64_t j = 0; j < ow; ++j)
                    os[i * ow + j] = (xs[(2 * i) * w + 2 * j] + xs[(2 * i) * w + 2 * j + 1] +
                                      xs[(2 * i + 1) * w + 2 * j] + xs[(2 * i + 1) * w + 2 * j + 1]) *
                                     S(0.25);
        }
        return unary_binary(std::move(out), a, Val{},
                            [n, c, h, w, oh, ow](Tape& t, int32_t self, Val pa, Val) {
                                const Tensor<S>& g = t.node(self).grad;
                                t.accum(pa, [&](Tensor<S>& d) {
                                    for (int64_t nc = 0; nc < n * c; ++nc) {
                                        S* ds = d.data() + nc * h * w;
                                        const S* gs = g.data() + nc * oh * ow;
                                        for (int64_t i = 0; i < oh; ++i)
                                            for (int64_t j = 0; j < ow; ++j) {
                                                const S q = gs[i * ow + j] * S(0.25);
                                                ds[(2 * i) * w + 2 * j] += q;
                                                ds[(2 * i) * w + 2 * j + 1] += q;
                                                ds[(2 * i + 1) * w + 2 * j] += q;
                                                ds[(2 * i + 1) * w + 2 * j + 1] += q;
                                            }
                                    }
                                });
                            });
    }

    Val adaptive_avg_pool2d(Val a, int64_t oh, int64_t ow) {
        const Tensor<S>& x = value(a);
        if (x.rank() != 4) throw std::invalid_argument("adaptive_avg_pool2d expects rank-4");
        const int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
        Tensor<S> out = Tensor<S>::uninit({n, c, oh, ow});
        for (int64_t nc = 0; nc < n * c; ++nc) {
            const S* xs = x.data() + nc * h * w;
            S* os = out.data() + nc * oh * ow;
            for (int64_t i = 0; i < oh; ++i) {
                const int64_t r0 = (i * h) / oh, r1 = ((i + 1) * h + oh - 1) / oh;
                for (int64_t j = 0; j < ow; ++j) {
                    const int64_t c0 = (j * w) / ow, c1 = ((j + 1) * w + ow - 1) / ow;
                    S s = S(0);
                    for (int64_t r = r0; r < r1; ++r)
                        for (int64_t cc = c0; cc < c1; ++cc) s += xs[r * w + cc];
                    os[i * ow + j] = s / static_cast<S>((r1 - r0) * (c1 - c0));
                }
            }
        }
        return unary_binary(std::move(out), a, Val{},
                            [n, c, h, w, oh, ow](Tape& t, int32_t self, Val pa, Val) {
                                const Tensor<S>& g = t.node(self).grad;
                                t.accum(pa, [&](Tensor<S>& d) {
                                    for (int64_t nc = 0; nc < n * c; ++nc) {
                                        S* ds = d.data() + nc * h * w;
                                        const S* gs = g.data() + nc * oh * ow;
                                        for (int64_t i = 0; i < oh; ++i) {
                                            const int64_t r0 = (i * h) / oh, r1 = ((i + 1) * h + oh - 1) / oh;
                                            for (int64_t j = 0; j < ow; ++j) {
                                                const int64_t c0 = (j * w) / ow,
                                                              c1 = ((j + 1) * w + ow - 1) / ow;
                                                const S q = gs[i * ow + j] /
                                                            static_cast<S>((r1 - r0) * (c1 - c0));
                                                for (int64_t r = r0; r < r1; ++r)
                                                    for (int64_t cc = c0; cc < c1; ++cc)
                                                        ds[r * w + cc] += q;
                                            }
                                        }
                                    }
                                });
                            });
    }

    // ---- predictor input assembly ----
    // out[keep[j]] = c[j]; out[mask[j]] = z_mask + pe[mask[j]].
    Val predictor_input(Val c, Val z_mask, Val pe, std::vector<int64_t> keep,
                        std::vector<int64_t> mask) {
        const Tensor<S>& vc = value(c);
        const Tensor<S>& vz = value(z_mask);
        const Tensor<S>& vpe = value(pe);
        const int64_t d = vpe.extent(1);
        const int64_t total = vpe.extent(0);
        if (vc.extent(0) != static_cast<int64_t>(keep.size()) || vc.extent(1) != d)
            throw std::invalid_argument("predictor_input: context rows misaligned with keep set");
        if (vz.numel() != d) throw std::invalid_argument("predictor_input: mask token width mismatch");
        Tensor<S> out = Tensor<S>::uninit({total, d});
        for (size_t j = 0; j < keep.size(); ++j)
            std::copy(vc.data() + static_cast<int64_t>(j) * d, vc.data() + static_cast<int64_t>(j + 1) * d,
                      out.data() + keep[j] * d);
        for (int64_t r : mask)
            for (int64_t jj = 0; jj < d; ++jj) out[r * d + jj] = vz[jj] + vpe[r * d + jj];
        Node nd;
        nd.value = std::move(out);
        nd.needs_grad = needs_grad(c) || needs_grad(z_mask) || needs_grad(pe);
        nd.backward = [c, z_mask, pe, keep = std::move(keep), mask = std::move(mask), d](
                          Tape& t, int32_t self) {
            const Tensor<S>& g = t.node(self).grad;
            t.accum(c, [&](Tensor<S>& dc) {
                for (size_t j = 0; j < keep.size(); ++j)
                    for (int64_t jj = 0; jj < d; ++jj)
                        dc[static_cast<int64_t>(j) * d + jj] += g[keep[j] * d + jj];
            });
            t.accum(z_mask, [&](Tensor<S>& dz) {
                for (int64_t r : mask)
                    for (int64_t jj = 0; jj < d; ++jj) dz[jj] += g[r * d + jj];
            });
            t.accum(pe, [&](Tensor<S>& dp) {
                for (int64_t r : mask)
                    for (int64_t jj = 0; jj < d; ++jj) dp[r * d + jj] += g[r * d + jj];
            });
        };
        return push(std::move(nd));
    }

    // ---- losses ----

    // Mean over all elements of the Huber-style piecewise value. Gradient on
    // the |delta| = 1 branch point comes from the linear branch.
    Val smooth_l1_loss(Val pred, Val target) {
        check_same_shape(pred, target, "smooth_l1");
        const Tensor<S>& p = value(pred);
        const Tensor<S>& y = value(target);
        const int64_t n = p.numel();
        if (n == 0) throw std::invalid_argument("smooth_l1: empty input");
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double dlt = static_cast<double>(p[i]) - static_cast<double>(y[i]);
            acc += std::abs(dlt) < 1.0 ? 0.5 * dlt * dlt : std::abs(dlt) - 0.5;
        }
        Tensor<S> out({1});
        out[0] = static_cast<S>(acc / static_cast<double>(n));
        return unary_binary(std::move(out), pred, target,
                            [n](Tape& t, int32_t self, Val pa, Val pb) {
                                const S g = t.node(self).grad[0] / static_cast<S>(n);
                                const Tensor<S>& p2 = t.value(pa);
                                const Tensor<S>& y2 = t.value(pb);
                                auto dfn = [&](int64_t i) {
                                    const S dlt = p2[i] - y2[i];
                                    return std::abs(dlt) < S(1) ? dlt : (dlt > S(0) ? S(1) : S(-1));
                                };
                                t.accum(pa, [&](Tensor<S>& d) {
                                    for (int64_t i = 0; i < n; ++i) d[i] += g * dfn(i);
                                });
                                t.accum(pb, [&](Tensor<S>& d) {
                                    for (int64_t i = 0; i < n; ++i) d[i] -= g * dfn(i);
                                });
                            });
    }

    // sum(|pred - target|) / divisor.
    Val l1_loss(Val pred, Val target, S divisor) {
        check_same_shape(pred, target, "l1_loss");
        const Tensor<S>& p = value(pred);
        const Tensor<S>& y = value(target);
        const int64_t n = p.numel();
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i)
            acc += std::abs(static_cast<double>(p[i]) - static_cast<double>(y[i]));
        Tensor<S> out({1});
        out[0] = static_cast<S>(acc) / divisor;
        return unary_binary(std::move(out), pred, target,
                            [n, divisor](Tape& t, int32_t self, Val pa, Val pb) {
                                const S g = t.node(self).grad[0] / divisor;
                                const Tensor<S>& p2 = t.value(pa);
                                const Tensor<S>& y2 = t.value(pb);
                                auto sgn = [&](int64_t i) {
                                    const S dlt = p2[i] - y2[i];
                                    return dlt > S(0) ? S(1) : (dlt < S(0) ? S(-1) : S(0));
                                };
                                t.accum(pa, [&](Tensor<S>& d) {
                                    for (int64_t i = 0; i < n; ++i) d[i] += g * sgn(i);
                                });
                                t.accum(pb, [&](Tensor<S>& d) {
                                    for (int64_t i = 0; i < n; ++i) d[i] -= g * sgn(i);
                                });
                            });
    }

    // Mean over rows of -log softmax(logits)[label].
    Val cross_entropy_loss(Val logits, std::vector<int64_t> labels) {
        const Tensor<S>& x = value(logits);
        if (x.rank() != 2) throw std::invalid_argument("cross_entropy: logits must be rank-2");
        const int64_t rows = x.extent(0), k = x.extent(1);
        if (k < 2) throw std::invalid_argument("cross_entropy: needs K >= 2");
        if (static_cast<int64_t>(labels.size()) != rows)
            throw std::invalid_argument("cross_entropy: label count mismatch");
        auto probs = std::make_shared<Tensor<S>>(Shape{rows, k});
        double acc = 0.0;
        for (int64_t r = 0; r < rows; ++r) {
            const S* xr = x.data() + r * k;
            if (labels[r] < 0 || labels[r] >= k)
                throw std::out_of_range("cross_entropy: label out of range");
            double mx = static_cast<double>(xr[0]);
            for (int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(xr[j]));
            double sum = 0.0;
            for (int64_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(xr[j]) - mx);
            const double lse = mx + std::log(sum);
            acc += lse - static_cast<double>(xr[labels[r]]);
            for (int64_t j = 0; j < k; ++j)
                (*probs)[r * k + j] = static_cast<S>(std::exp(static_cast<double>(xr[j]) - lse));
        }
        Tensor<S> out({1});
        out[0] = static_cast<S>(acc / static_cast<double>(rows));
        return unary_binary(std::move(out), logits, Val{},
                            [labels = std::move(labels), probs, rows, k](Tape& t, int32_t self,
                                                                         Val pa, Val) {
                                const S g = t.node(self).grad[0] / static_cast<S>(rows);
                                t.accum(pa, [&](Tensor<S>& d) {
                                    for (int64_t r = 0; r < rows; ++r) {
                                        for (int64_t j = 0; j < k; ++j)
                                            d[r * k + j] += g * (*probs)[r * k + j];
                                        d[r * k + labels[r]] -= g;
                                    }
                                });
                            });
    }

    // ---- backward driver ----

    void backward(Val loss) {
        Node& ln = node(loss.i);
        if (ln.value.numel() != 1) throw std::invalid_argument("backward: loss must be scalar");
        ensure_grad(loss.i);
        node(loss.i).grad[0] = S(1);
        for (int32_t i = loss.i; i >= 0; --i) {
            Node& nd = node(i);
            if (!nd.needs_grad || !nd.grad_alloc) continue;
            if (nd.backward) nd.backward(*this, i);
            if (nd.sink) {
                Tensor<S>& s = *nd.sink;
                for (int64_t j = 0; j < s.numel(); ++j) s[j] += nd.grad[j];
            }
        }
    }

    // Accumulates into a parent's grad buffer only when the parent wants it.
    template <typename Fn>
    void accum(Val p, Fn&& fn) {
        if (!p.valid() || !node(p.i).needs_grad) return;
        ensure_grad(p.i);
        fn(node(p.i).grad);
    }

    Node& node(int32_t i) { return nodes_[static_cast<size_t>(i)]; }

private:
    void ensure_grad(int32_t i) {
        Node& nd = node(i);
        if (!nd.grad_alloc) {
            nd.grad = Tensor<S>(nd.value.shape());
            nd.grad_alloc = true;
        }
    }

    Val push(Node n) {
        nodes_.push_back(std::move(n));
        return Val{static_cast<int32_t>(nodes_.size() - 1)};
    }

    template <typename Bw>
    Val unary_binary(Tensor<S> out, Val a, Val b, Bw&& bw) {
        Node n;
        n.value = std::move(out);
        n.needs_grad = needsg(a) || needsg(b);
        n.backward = [a, b, bw = std::forward<Bw>(bw)](Tape& t, int32_t self) { bw(t, self, a, b); };
        return push(std::move(n));
    }

    template <typename DFn>
    Val unary_with_out(Tensor<S> out, Val a, DFn&& dfn) {
        return unary_binary(std::move(out), a, Val{},
                            [dfn = std::forward<DFn>(dfn)](Tape& t, int32_t self, Val pa, Val) {
                                const Tensor<S>& g = t.node(self).grad;
                                const Tensor<S>& y = t.node(self).value;
                                t.accum(pa, [&](Tensor<S>& d) {
                                    for (int64_t i = 0; i < g.numel(); ++i) d[i] += dfn(y[i], g[i]);
                                });
                            });
    }

    bool needsg(Val v) const { return v.valid() && nodes_[static_cast<size_t>(v.i)].needs_grad; }

    void check_same_shape(Val a, Val b, const char* op) const {
        if (!value(a).same_shape(value(b)))
            throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                        shape_str(value(a).shape()) + " vs " +
                                        shape_str(value(b).shape()));
    }

    static void im2col(const S* x, int64_t cin, int64_t h, int64_t w, int64_t kh, int64_t kw,
                       int64_t stride, int64_t oh, int64_t ow, S* col) {
        for (int64_t c = 0; c < cin; ++c)
            for (int64_t ki = 0; ki < kh; ++ki)
                for (int64_t kj = 0; kj < kw; ++kj) {
                    S* dst = col + ((c * kh + ki) * kw + kj) * oh * ow;
                    for (int64_t i = 0; i < oh; ++i) {
                        const S* src = x + c * h * w + (i * stride + ki) * w + kj;
                        for (int64_t j = 0; j < ow; ++j) dst[i * ow + j] = src[j * stride];
                    }
                }
    }

    static void col2im(const S* col, int64_t cin, int64_t h, int64_t w, int64_t kh, int64_t kw,
                       int64_t stride, int64_t oh, int64_t ow, S* x) {
        for (int64_t c = 0; c < cin; ++c)
            for (int64_t ki = 0; ki < kh; ++ki)
                for (int64_t kj = 0; kj < kw; ++kj) {
                    const S* src = col + ((c * kh + ki) * kw + kj) * oh * ow;
                    for (int64_t i = 0; i < oh; ++i) {
                        S* dst = x + c * h * w + (i * stride + ki) * w + kj;
                        for (int64_t j = 0; j < ow; ++j) dst[j * stride] += src[i * ow + j];
                    }
                }
    }

    static void matmul_backward(Tape& t, int32_t self, Val pa, Val pb, bool ta, bool tb, int64_t m,
                                int64_t n, int64_t k) {
        const Tensor<S>& g = t.node(self).grad;
        const Tensor<S>& va = t.value(pa);
        const Tensor<S>& vb = t.value(pb);
        t.accum(pa, [&](Tensor<S>& d) {
            grad_wrt_a(ta, tb, m, n, k, S(1), g.data(), va.extent(1), vb.data(), vb.extent(1),
                       d.data());
        });
        t.accum(pb, [&](Tensor<S>& d) {
            grad_wrt_b(ta, tb, m, n, k, S(1), g.data(), va.data(), va.extent(1), vb.extent(1),
                       d.data());
        });
    }

    // dA for C = alpha op(A)op(B). lda_stored is the stored row stride of A.
    static void grad_wrt_a(bool ta, bool tb, int64_t m, int64_t n, int64_t k, S alpha, const S* g,
                           int64_t lda_stored, const S* b, int64_t ldb, S* da) {
        if (!ta) {
            // dA[m,k] += alpha g . op(B)^T
            blas::gemm(false, !tb, m, k, n, alpha, g, n, b, ldb, S(1), da, lda_stored);
        } else {
            // A stored [k,m]; dA_stored += alpha op(B) . g^T
            blas::gemm(tb, true, k, m, n, alpha, b, ldb, g, n, S(1), da, lda_stored);
        }
    }

    static void grad_wrt_b(bool ta, bool tb, int64_t m, int64_t n, int64_t k, S alpha, const S* g,
                           const S* a, int64_t lda, int64_t ldb_stored, S* db) {
        if (!tb) {
            // dB[k,n] += alpha op(A)^T . g
            blas::gemm(!ta, false, k, n, m, alpha, a, lda, g, n, S(1), db, ldb_stored);
        } else {
            // B stored [n,k]; dB_stored += alpha g^T . op(A)
            blas::gemm(true, ta, n, k, m, alpha, g, n, a, lda, S(1), db, ldb_stored);
        }
    }

    std::vector<Node> nodes_;
};

} // namespace jmsac
