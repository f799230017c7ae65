#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "jmsac/tape.hpp"

namespace jmsac {

// Named parameter container. A handle is an index into a stable entry list;
// gradients accumulate next to the values. One optimizer owns one store.
template <typename S>
class Params {
public:
    struct Entry {
        std::string name;
        Tensor<S> value;
        Tensor<S> grad;
    };

    int add(const std::string& name, Tensor<S> init) {
        if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
        const int h = static_cast<int>(entries_.size());
        Entry e;
        e.name = name;
        e.grad = Tensor<S>(init.shape());
        e.value = std::move(init);
        entries_.push_back(std::move(e));
        by_name_[name] = h;
        return h;
    }

    int64_t count() const { return static_cast<int64_t>(entries_.size()); }
    Entry& entry(int h) { return entries_[static_cast<size_t>(h)]; }
    const Entry& entry(int h) const { return entries_[static_cast<size_t>(h)]; }
    Tensor<S>& value(int h) { return entries_[static_cast<size_t>(h)].value; }
    const Tensor<S>& value(int h) const { return entries_[static_cast<size_t>(h)].value; }
    Tensor<S>& grad(int h) { return entries_[static_cast<size_t>(h)].grad; }

    int find(const std::string& name) const {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? -1 : it->second;
    }

    void zero_grad() {
        for (auto& e : entries_) e.grad.fill(S(0));
    }

    int64_t numel() const {
        int64_t n = 0;
        for (const auto& e : entries_) n += e.value.numel();
        return n;
    }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, int> by_name_;
};

// Leaf helper: parameters enter a tape with their grad buffer as sink when
// training, or as plain constants when the owning model is frozen.
template <typename S>
Val param_leaf(Tape<S>& t, Params<S>& p, int h, bool trainable) {
    return t.leaf(p.value(h), trainable ? &p.grad(h) : nullptr);
}

// ---- layers -------------------------------------------------------------
// Layers own parameter handles; forward methods emit tape ops. `train`
// controls whether gradients flow into the store.

template <typename S>
struct LinearLayer {
    int w = -1, b = -1;
    int64_t in = 0, out = 0;

    void init(Params<S>& p, const std::string& name, int64_t in_dim, int64_t out_dim, Rng& rng) {
        in = in_dim;
        out = out_dim;
        const double std = 1.0 / std::sqrt(static_cast<double>(in_dim));
        w = p.add(name + ".w", Tensor<S>::randn({out_dim, in_dim}, rng, std));
        b = p.add(name + ".b", Tensor<S>::zeros({out_dim}));
    }

    Val operator()(Tape<S>& t, Params<S>& p, Val x, bool train) const {
        return t.linear(x, param_leaf(t, p, w, train), param_leaf(t, p, b, train));
    }
};

template <typename S>
struct LayerNormLayer {
    int gamma = -1, beta = -1;

    void init(Params<S>& p, const std::string& name, int64_t d) {
        gamma = p.add(name + ".g", Tensor<S>::full({d}, S(1)));
        beta = p.add(name + ".b", Tensor<S>::zeros({d}));
    }

    Val operator()(Tape<S>& t, Params<S>& p, Val x, bool train) const {
        return t.layer_norm(x, param_leaf(t, p, gamma, train), param_leaf(t, p, beta, train));
    }
};

template <typename S>
struct Conv2dLayer {
    int w = -1, b = -1;
    int64_t stride = 1;

    void init(Params<S>& p, const std::string& name, int64_t cin, int64_t cout, int64_t k, Rng& rng,
              int64_t stride_ = 1) {
        stride = stride_;
        const double std = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
        w = p.add(name + ".w", Tensor<S>::randn({cout, cin, k, k}, rng, std));
        b = p.add(name + ".b", Tensor<S>::zeros({cout}));
    }

    Val operator()(Tape<S>& t, Params<S>& p, Val x, bool train) const {
        return t.conv2d(x, param_leaf(t, p, w, train), param_leaf(t, p, b, train), stride);
    }
};

// Two hidden layers with GELU, shared across rows.
template <typename S>
struct MlpLayer {
    std::vector<LinearLayer<S>> layers;

    void init(Params<S>& p, const std::string& name, const std::vector<int64_t>& dims, Rng& rng) {
        layers.clear();
        for (size_t i = 0; i + 1 < dims.size(); ++i) {
            LinearLayer<S> l;
            l.init(p, name + ".l" + std::to_string(i), dims[i], dims[i + 1], rng);
            layers.push_back(l);
        }
    }

    Val operator()(Tape<S>& t, Params<S>& p, Val x, bool train) const {
        Val h = x;
        for (size_t i = 0; i < layers.size(); ++i) {
            h = layers[i](t, p, h, train);
            if (i + 1 < layers.size()) h = t.gelu(h);
        }
        return h;
    }
};

// Pre-norm block: x + MHA(LN(x)), then x + FFN(LN(x)).
template <typename S>
struct TransformerBlock {
    LayerNormLayer<S> ln1, ln2;
    LinearLayer<S> wq, wk, wv, wo, ff1, ff2;
    int64_t dim = 0, heads = 0;

    void init(Params<S>& p, const std::string& name, int64_t d, int64_t n_heads, int64_t ffn,
              Rng& rng) {
        if (d % n_heads != 0) throw std::invalid_argument("model width not divisible by heads");
        dim = d;
        heads = n_heads;
        ln1.init(p, name + ".ln1", d);
        ln2.init(p, name + ".ln2", d);
        wq.init(p, name + ".wq", d, d, rng);
        wk.init(p, name + ".wk", d, d, rng);
        wv.init(p, name + ".wv", d, d, rng);
        wo.init(p, name + ".wo", d, d, rng);
        ff1.init(p, name + ".ff1", d, ffn, rng);
        ff2.init(p, name + ".ff2", ffn, d, rng);
    }

    Val operator()(Tape<S>& t, Params<S>& p, Val x, bool train) const {
        Val h = ln1(t, p, x, train);
        Val q = t.split_heads(wq(t, p, h, train), heads);
        Val k = t.split_heads(wk(t, p, h, train), heads);
        Val v = t.split_heads(wv(t, p, h, train), heads);
        const S inv_sqrt = S(1) / static_cast<S>(std::sqrt(static_cast<double>(dim / heads)));
        Val ctx = t.merge_heads(t.attention(q, k, v, inv_sqrt));
        x = t.add(x, wo(t, p, ctx, train));
        Val f = ln2(t, p, x, train);
        f = ff2(t, p, t.gelu(ff1(t, p, f, train)), train);
        return t.add(x, f);
    }
};

// Stack of pre-norm blocks with a final norm.
template <typename S>
struct Encoder {
    std::vector<TransformerBlock<S>> blocks;
    LayerNormLayer<S> final_ln;

    void init(Params<S>& p, const std::string& name, int64_t depth, int64_t d, int64_t n_heads,
              int64_t ffn, Rng& rng) {
        blocks.resize(static_cast<size_t>(depth));
        for (int64_t i = 0; i < depth; ++i)
            blocks[static_cast<size_t>(i)].init(p, name + ".blk" + std::to_string(i), d, n_heads,
                                                ffn, rng);
        final_ln.init(p, name + ".ln_f", d);
    }

    Val operator()(Tape<S>& t, Params<S>& p, Val x, bool train) const {
        for (const auto& b : blocks) x = b(t, p, x, train);
        return final_ln(t, p, x, train);
    }
};

// Single-layer GRU unrolled over rows of x ([T, in] -> [T, hidden]).
// Gate layout follows the (reset, update, candidate) convention.
template <typename S>
struct GruLayer {
    LinearLayer<S> wi, wh;
    int64_t hidden = 0;

    void init(Params<S>& p, const std::string& name, int64_t in, int64_t h, Rng& rng) {
        hidden = h;
        wi.init(p, name + ".wi", in, 3 * h, rng);
        wh.init(p, name + ".wh", h, 3 * h, rng);
    }

    Val operator()(Tape<S>& t, Params<S>& p, Val x, bool train) const {
        const int64_t steps = t.value(x).extent(0);
        Val h = t.constant(Tensor<S>::zeros({1, hidden}));
        std::vector<Val> outs;
        outs.reserve(static_cast<size_t>(steps));
        for (int64_t s = 0; s < steps; ++s) {
            Val xt = t.gather_rows(x, {s});
            Val gi = wi(t, p, xt, train);
            Val gh = wh(t, p, h, train);
            Val r = t.sigmoid(t.add(t.slice_cols(gi, 0, hidden), t.slice_cols(gh, 0, hidden)));
            Val z = t.sigmoid(
                t.add(t.slice_cols(gi, hidden, 2 * hidden), t.slice_cols(gh, hidden, 2 * hidden)));
            Val n = t.tanh_act(t.add(t.slice_cols(gi, 2 * hidden, 3 * hidden),
                                     t.mul(r, t.slice_cols(gh, 2 * hidden, 3 * hidden))));
            // h' = (1 - z) * n + z * h
            h = t.add(t.sub(n, t.mul(z, n)), t.mul(z, h));
            outs.push_back(h);
        }
        return t.concat_rows(outs);
    }
};

} // namespace jmsac
