#pragma once

#include "jmsac/config.hpp"
#include "jmsac/masks.hpp"
#include "jmsac/nn.hpp"
#include "jmsac/optim.hpp"
#include "jmsac/tokenizer.hpp"

namespace jmsac {

// Per-window model inputs: preprocessed arrays cast to the working scalar.
// rf carries normalized (train-stats min-max) values.
template <typename S>
struct WindowInputs {
    Tensor<S> V;   // [T,3,H,W]
    Tensor<S> R;   // [T,1,A,Rr]
    Tensor<S> L;   // [T,1,H,W]
    Tensor<S> p;   // [T,2]
    Tensor<S> rf;  // [T,K]
};

// Backbone state: student store holds tokenizers, embedding tables, the mask
// token, the context encoder and the predictor; the teacher store mirrors the
// context encoder weights and is only ever written by the EMA update.
template <typename S>
struct JepaModel {
    int64_t dim = 0;
    int t_total = 0;
    int rf_width = 0;
    std::vector<Modality> active;
    std::vector<int> token_counts;
    std::vector<Modality> pool_set;  // empty = all active modalities

    Params<S> student;
    Params<S> teacher;
    Tokenizers<S> tok;
    EmbeddingTables<S> emb;
    int z_mask = -1;
    Encoder<S> ctx_enc;
    Encoder<S> predictor;
    Encoder<S> teacher_enc;
    std::vector<int> ctx_handles;  // student handles mirrored by the teacher

    void init(const cfg::ModelConfig& mc, int t_frames, int rf_w,
              const std::vector<Modality>& active_mods, uint64_t seed) {
        dim = mc.dim;
        t_total = t_frames;
        rf_width = rf_w;
        active = active_mods;
        token_counts = default_token_counts(active);
        for (const auto& name : mc.pool_modalities)
            for (Modality m : active)
                if (name == modality_name(m)) pool_set.push_back(m);
        Rng rng(seed);
        tok.init(student, mc.dim, mc.vision_channels, mc.spatial_channels, rf_w, rng);
        int max_tokens = 1;
        for (int c : token_counts) max_tokens = std::max(max_tokens, c);
        emb.init(student, t_frames, 5, max_tokens, mc.dim, rng);
        z_mask = student.add("z_mask", Tensor<S>::randn({1, static_cast<int64_t>(mc.dim)}, rng, 0.02));
        const int h0 = static_cast<int>(student.count());
        ctx_enc.init(student, "ctx", mc.depth, mc.dim, mc.heads, mc.dim * mc.ffn_mult, rng);
        const int h1 = static_cast<int>(student.count());
        for (int h = h0; h < h1; ++h) ctx_handles.push_back(h);
        predictor.init(student, "pred", mc.predictor_depth, mc.dim, mc.heads, mc.dim * mc.ffn_mult,
                       rng);
        // Teacher gets the same layer structure in its own store; weights are
        // then copied from the student.
        Rng rng2(seed);
        teacher_enc.init(teacher, "tgt", mc.depth, mc.dim, mc.heads, mc.dim * mc.ffn_mult, rng2);
        copy_student_to_teacher();
    }

    void copy_student_to_teacher() {
        for (size_t i = 0; i < ctx_handles.size(); ++i)
            teacher.value(static_cast<int>(i)) = student.value(ctx_handles[i]);
    }

    TokenLayout layout() const { return TokenLayout::make(t_total, active, token_counts); }
};

// Tokenizes frames [0, t_frames) of a window into canonical frame-major
// order. Output rows cover the first t_frames frames of the full layout.
template <typename S>
Val tokenize_window(Tape<S>& t, JepaModel<S>& m, const WindowInputs<S>& w, int t_frames,
                    bool train) {
    auto slice_frames = [&](const Tensor<S>& x) {
        Shape s = x.shape();
        const int64_t per = x.numel() / s[0];
        Shape ns = s;
        ns[0] = t_frames;
        Tensor<S> out(ns);
        std::copy(x.data(), x.data() + t_frames * per, out.data());
        return out;
    };
    std::vector<Val> blocks;
    for (size_t mi = 0; mi < m.active.size(); ++mi) {
        switch (m.active[mi]) {
            case Modality::Image:
                blocks.push_back(
                    m.tok.tokenize_vision(t, m.student, t.constant(slice_frames(w.V)), train));
                break;
            case Modality::Radar:
                blocks.push_back(m.tok.tokenize_spatial(t, m.student, t.constant(slice_frames(w.R)),
                                                        Modality::Radar, train));
                break;
            case Modality::LiDAR:
                blocks.push_back(m.tok.tokenize_spatial(t, m.student, t.constant(slice_frames(w.L)),
                                                        Modality::LiDAR, train));
                break;
            case Modality::GPS:
                blocks.push_back(m.tok.tokenize_state(t, m.student, t.constant(slice_frames(w.p)),
                                                      Modality::GPS, train));
                break;
            case Modality::RF:
                blocks.push_back(m.tok.tokenize_state(t, m.student, t.constant(slice_frames(w.rf)),
                                                      Modality::RF, train));
                break;
        }
    }
    Val cat = t.concat_rows(blocks);
    const TokenLayout sub = TokenLayout::make(t_frames, m.active, m.token_counts);
    return t.gather_rows(cat, sub.block_to_canonical);
}

// Factorized positional embedding over the full window layout.
template <typename S>
Val positional_sum(Tape<S>& t, JepaModel<S>& m, const TokenLayout& layout, bool train) {
    return m.emb.lookup(t, m.student, layout, train);
}

// Context encoding of the visible rows only.
template <typename S>
Val encode_context(Tape<S>& t, JepaModel<S>& m, Val z_keep, bool train) {
    if (t.value(z_keep).extent(0) < 1) throw std::invalid_argument("encode_context: empty visible set");
    return m.ctx_enc(t, m.student, z_keep, train);
}

// Predictor over the assembled full-length input. Visible positions carry
// context rows; masked positions carry z_mask plus their positional sum.
template <typename S>
Val predict_latents(Tape<S>& t, JepaModel<S>& m, Val context, Val pe,
                    const std::vector<int64_t>& keep, const std::vector<int64_t>& mask,
                    bool train) {
    Val zm = param_leaf(t, m.student, m.z_mask, train);
    Val c_pred = t.predictor_input(context, zm, pe, keep, mask);
    return m.predictor(t, m.student, c_pred, train);
}

// Teacher forward without gradient tracking.
template <typename S>
Tensor<S> encode_target(JepaModel<S>& m, const Tensor<S>& z_tilde_full) {
    Tape<S> t;
    Val x = t.constant(z_tilde_full);
    Val u = m.teacher_enc(t, m.teacher, x, false);
    return t.value(u);
}

// Pooled predictive latent state: per future frame, the mean of that frame's
// predicted token rows. The pooling set defaults to every active modality
// and can be narrowed to the task-relevant ones.
template <typename S>
Val pool_future(Tape<S>& t, Val u_hat, const TokenLayout& layout, int t_hist,
                const std::vector<Modality>& pool_set = {}) {
    std::vector<std::vector<int64_t>> groups;
    for (int tt = t_hist; tt < layout.t_total; ++tt) {
        if (pool_set.empty()) {
            groups.push_back(layout.frame_rows(tt));
        } else {
            std::vector<int64_t> rows;
            for (size_t m = 0; m < layout.active.size(); ++m) {
                bool in = false;
                for (Modality pm : pool_set) in = in || pm == layout.active[m];
                if (in) {
                    const auto mr = layout.modality_frame_rows(m, tt);
                    rows.insert(rows.end(), mr.begin(), mr.end());
                }
            }
            groups.push_back(std::move(rows));
        }
    }
    return t.mean_rows_groups(u_hat, groups);
}

// Full frozen-backbone path from history tokens to S_Pred.
template <typename S>
Val future_latents(Tape<S>& t, JepaModel<S>& m, const WindowInputs<S>& w, int t_hist) {
    const TokenLayout layout = m.layout();
    const MaskSpec fm = future_mask(layout, t_hist);
    Val pe = positional_sum(t, m, layout, false);
    Val z_hist = tokenize_window(t, m, w, t_hist, false);
    Val z_tilde_hist = t.add(z_hist, t.gather_rows(pe, fm.keep_idx));
    Val c = encode_context(t, m, z_tilde_hist, false);
    Val u_hat = predict_latents(t, m, c, pe, fm.keep_idx, fm.mask_idx, false);
    return pool_future(t, u_hat, layout, t_hist, m.pool_set);
}

// Same path with Gaussian jitter on the embedded history tokens; used by the
// augmented-view representation metric.
template <typename S>
Val future_latents_jittered(Tape<S>& t, JepaModel<S>& m, const WindowInputs<S>& w, int t_hist,
                            Rng& rng, S sigma) {
    const TokenLayout layout = m.layout();
    const MaskSpec fm = future_mask(layout, t_hist);
    Val pe = positional_sum(t, m, layout, false);
    Val z_hist = tokenize_window(t, m, w, t_hist, false);
    Val z_tilde_hist = t.add(z_hist, t.gather_rows(pe, fm.keep_idx));
    Tensor<S> noise(t.value(z_tilde_hist).shape());
    for (int64_t i = 0; i < noise.numel(); ++i) noise[i] = static_cast<S>(rng.gaussian()) * sigma;
    Val jittered = t.add(z_tilde_hist, t.constant(std::move(noise)));
    Val c = encode_context(t, m, jittered, false);
    Val u_hat = predict_latents(t, m, c, pe, fm.keep_idx, fm.mask_idx, false);
    return pool_future(t, u_hat, layout, t_hist, m.pool_set);
}

} // namespace jmsac
