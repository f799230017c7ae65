#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "jmsac/nn.hpp"

namespace jmsac {

// Canonical modality order. Token sequences are frame-major, then modality in
// this order, then intra-frame index.
enum class Modality : int { Image = 0, Radar = 1, LiDAR = 2, GPS = 3, RF = 4 };

inline const char* modality_name(Modality m) {
    switch (m) {
        case Modality::Image: return "Image";
        case Modality::Radar: return "Radar";
        case Modality::LiDAR: return "LiDAR";
        case Modality::GPS: return "GPS";
        case Modality::RF: return "RF";
    }
    return "?";
}

struct TokenCoord {
    int modality = 0;  // index into the active modality list's global id
    int frame = 0;
    int intra = 0;
};

// Index bookkeeping for one window's token sequence: coordinates, the
// permutation from per-modality blocks to canonical order, and per-frame /
// per-modality row lookups.
struct TokenLayout {
    int t_total = 0;
    std::vector<Modality> active;       // canonical order, dropped modalities removed
    std::vector<int> tokens_per_mod;    // aligned with `active`
    int64_t tokens_per_frame = 0;
    int64_t total = 0;                  // I

    std::vector<TokenCoord> coords;     // canonical order, size I
    // Block order produced by the tokenizers: modality-major, frame-major
    // inside each modality. block_to_canonical[i] = block row feeding
    // canonical row i.
    std::vector<int64_t> block_to_canonical;

    static TokenLayout make(int t_total, const std::vector<Modality>& active,
                            const std::vector<int>& tokens_per_mod) {
        TokenLayout l;
        l.t_total = t_total;
        l.active = active;
        l.tokens_per_mod = tokens_per_mod;
        for (int p : tokens_per_mod) l.tokens_per_frame += p;
        l.total = static_cast<int64_t>(t_total) * l.tokens_per_frame;
        l.coords.resize(static_cast<size_t>(l.total));
        l.block_to_canonical.resize(static_cast<size_t>(l.total));
        std::vector<int64_t> block_base(active.size());
        int64_t acc = 0;
        for (size_t m = 0; m < active.size(); ++m) {
            block_base[m] = acc;
            acc += static_cast<int64_t>(t_total) * tokens_per_mod[m];
        }
        int64_t row = 0;
        for (int t = 0; t < t_total; ++t)
            for (size_t m = 0; m < active.size(); ++m)
                for (int p = 0; p < tokens_per_mod[m]; ++p) {
                    l.coords[static_cast<size_t>(row)] = {static_cast<int>(active[m]), t, p};
                    l.block_to_canonical[static_cast<size_t>(row)] =
                        block_base[m] + static_cast<int64_t>(t) * tokens_per_mod[m] + p;
                    ++row;
                }
        return l;
    }

    // Canonical rows of one frame.
    std::vector<int64_t> frame_rows(int t) const {
        std::vector<int64_t> r(static_cast<size_t>(tokens_per_frame));
        for (int64_t i = 0; i < tokens_per_frame; ++i) r[static_cast<size_t>(i)] = t * tokens_per_frame + i;
        return r;
    }

    // Canonical rows of one modality within one frame.
    std::vector<int64_t> modality_frame_rows(size_t mod_index, int t) const {
        int64_t off = static_cast<int64_t>(t) * tokens_per_frame;
        for (size_t m = 0; m < mod_index; ++m) off += tokens_per_mod[m];
        std::vector<int64_t> r(static_cast<size_t>(tokens_per_mod[mod_index]));
        for (int p = 0; p < tokens_per_mod[mod_index]; ++p) r[static_cast<size_t>(p)] = off + p;
        return r;
    }

    std::vector<int64_t> frames_rows(int t_begin, int t_end) const {
        std::vector<int64_t> r;
        r.reserve(static_cast<size_t>((t_end - t_begin) * tokens_per_frame));
        for (int t = t_begin; t < t_end; ++t)
            for (int64_t i = 0; i < tokens_per_frame; ++i) r.push_back(t * tokens_per_frame + i);
        return r;
    }
};

// Default token counts (vision pools to 3x3, spatial maps to 4x4, one state
// token per modality per frame).
inline std::vector<int> default_token_counts(const std::vector<Modality>& active) {
    std::vector<int> out;
    for (Modality m : active) {
        switch (m) {
            case Modality::Image: out.push_back(9); break;
            case Modality::Radar:
            case Modality::LiDAR: out.push_back(16); break;
            case Modality::GPS:
            case Modality::RF: out.push_back(1); break;
        }
    }
    return out;
}

inline std::vector<Modality> active_modalities(const std::vector<std::string>& drop) {
    std::vector<Modality> all = {Modality::Image, Modality::Radar, Modality::LiDAR, Modality::GPS,
                                 Modality::RF};
    std::vector<Modality> out;
    for (Modality m : all) {
        bool dropped = false;
        for (const auto& d : drop) dropped = dropped || d == modality_name(m);
        if (!dropped) out.push_back(m);
    }
    if (out.empty()) throw std::invalid_argument("all modalities dropped");
    return out;
}

// Modality-specific tokenizers mapping processed arrays into D-wide tokens.
// The vision path is a small trainable CNN; radar and LiDAR share one
// topology with separate weights; state vectors use linear + layer norm.
template <typename S>
struct Tokenizers {
    int64_t dim = 0;
    Conv2dLayer<S> v1, v2, v3;
    LinearLayer<S> v_proj;
    Conv2dLayer<S> r1, r2;
    LinearLayer<S> r_proj;
    Conv2dLayer<S> l1, l2;
    LinearLayer<S> l_proj;
    LinearLayer<S> gps_lin;
    LayerNormLayer<S> gps_ln;
    LinearLayer<S> rf_lin;
    LayerNormLayer<S> rf_ln;

    void init(Params<S>& p, int64_t d, const std::array<int, 3>& vision_ch,
              const std::array<int, 2>& spatial_ch, int64_t rf_width, Rng& rng) {
        dim = d;
        v1.init(p, "tok.v1", 3, vision_ch[0], 3, rng);
        v2.init(p, "tok.v2", vision_ch[0], vision_ch[1], 3, rng);
        v3.init(p, "tok.v3", vision_ch[1], vision_ch[2], 3, rng);
        v_proj.init(p, "tok.vp", vision_ch[2], d, rng);
        r1.init(p, "tok.r1", 1, spatial_ch[0], 3, rng);
        r2.init(p, "tok.r2", spatial_ch[0], spatial_ch[1], 3, rng);
        r_proj.init(p, "tok.rp", spatial_ch[1], d, rng);
        l1.init(p, "tok.l1", 1, spatial_ch[0], 3, rng);
        l2.init(p, "tok.l2", spatial_ch[0], spatial_ch[1], 3, rng);
        l_proj.init(p, "tok.lp", spatial_ch[1], d, rng);
        gps_lin.init(p, "tok.gps", 2, d, rng);
        gps_ln.init(p, "tok.gps_ln", d);
        rf_lin.init(p, "tok.rf", rf_width, d, rng);
        rf_ln.init(p, "tok.rf_ln", d);
    }

    // imgs [T,3,H,W] -> [T*9, D], frame-major.
    Val tokenize_vision(Tape<S>& t, Params<S>& p, Val imgs, bool train) const {
        Val x = t.gelu(v1(t, p, imgs, train));
        x = t.avg_pool2d(x);
        x = t.gelu(v2(t, p, x, train));
        x = t.avg_pool2d(x);
        x = t.gelu(v3(t, p, x, train));
        x = t.adaptive_avg_pool2d(x, 3, 3);
        return v_proj(t, p, t.nchw_to_tokens(x), train);
    }

    // maps [T,1,H,W] -> [T*16, D], frame-major; shared topology, separate
    // weights per modality.
    Val tokenize_spatial(Tape<S>& t, Params<S>& p, Val maps, Modality which, bool train) const {
        const Conv2dLayer<S>& c1 = which == Modality::Radar ? r1 : l1;
        const Conv2dLayer<S>& c2 = which == Modality::Radar ? r2 : l2;
        const LinearLayer<S>& proj = which == Modality::Radar ? r_proj : l_proj;
        if (which != Modality::Radar && which != Modality::LiDAR)
            throw std::invalid_argument("tokenize_spatial: radar or lidar only");
        Val x = t.gelu(c1(t, p, maps, train));
        x = t.avg_pool2d(x);
        x = t.gelu(c2(t, p, x, train));
        x = t.adaptive_avg_pool2d(x, 4, 4);
        return proj(t, p, t.nchw_to_tokens(x), train);
    }

    // vec [T,width] -> [T, D]: linear projection then layer norm.
    Val tokenize_state(Tape<S>& t, Params<S>& p, Val vec, Modality which, bool train) const {
        if (which == Modality::GPS) return gps_ln(t, p, gps_lin(t, p, vec, train), train);
        if (which == Modality::RF) return rf_ln(t, p, rf_lin(t, p, vec, train), train);
        throw std::invalid_argument("tokenize_state: gps or rf only");
    }
};

// Learnable temporal / modality / intra-frame embedding tables.
template <typename S>
struct EmbeddingTables {
    int e_t = -1, e_m = -1, e_p = -1;

    void init(Params<S>& p, int64_t t_total, int64_t n_modalities, int64_t max_tokens, int64_t d,
              Rng& rng) {
        e_t = p.add("emb.t", Tensor<S>::randn({t_total, d}, rng, 0.02));
        e_m = p.add("emb.m", Tensor<S>::randn({n_modalities, d}, rng, 0.02));
        e_p = p.add("emb.p", Tensor<S>::randn({max_tokens, d}, rng, 0.02));
    }

    // Positional sum E_t(t') + E_m(m) + E_p(p) per canonical token row.
    Val lookup(Tape<S>& t, Params<S>& p, const TokenLayout& layout, bool train) const {
        std::vector<int64_t> tid, mid, pid;
        tid.reserve(layout.coords.size());
        for (const auto& c : layout.coords) {
            tid.push_back(c.frame);
            mid.push_back(c.modality);
            pid.push_back(c.intra);
        }
        Val vt = t.gather_rows(param_leaf(t, p, e_t, train), tid);
        Val vm = t.gather_rows(param_leaf(t, p, e_m, train), mid);
        Val vp = t.gather_rows(param_leaf(t, p, e_p, train), pid);
        return t.add(t.add(vt, vm), vp);
    }
};

} // namespace jmsac
