#pragma once

#include "jmsac/jepa.hpp"

namespace jmsac {

// Localization: coarse estimate (constant-velocity from history, or an MLP
// bootstrap off the last predictive latent) plus a residual MLP per step.
template <typename S>
struct LocHead {
    Params<S> params;
    MlpLayer<S> boot;  // D -> D -> 2
    MlpLayer<S> res;   // D -> D -> D -> 2

    void init(int64_t dim, uint64_t seed) {
        Rng rng(seed);
        boot.init(params, "loc.boot", {dim, dim, 2}, rng);
        res.init(params, "loc.res", {dim, dim, dim, 2}, rng);
    }
};

// Beam classification: projection, single-layer GRU over the prediction
// steps, decoder MLP to K logits.
template <typename S>
struct BeamHead {
    Params<S> params;
    LinearLayer<S> proj;
    GruLayer<S> gru;
    MlpLayer<S> dec;

    void init(int64_t in_width, int64_t hidden, int64_t k_beams, uint64_t seed) {
        Rng rng(seed);
        proj.init(params, "beam.proj", in_width, hidden, rng);
        gru.init(params, "beam.gru", hidden, hidden, rng);
        dec.init(params, "beam.dec", {hidden, hidden, k_beams}, rng);
    }

    Val operator()(Tape<S>& t, Val fused, bool train) {
        Val h = proj(t, params, fused, train);
        h = gru(t, params, h, train);
        return dec(t, params, h, train);
    }
};

// Beam-spectrum regression: persistence (last observed RF frame) or MLP
// bootstrap as the coarse estimate, plus a residual MLP.
template <typename S>
struct RssiHead {
    Params<S> params;
    MlpLayer<S> boot;  // D -> D -> K
    MlpLayer<S> res;   // fused -> D -> K

    void init(int64_t dim, int64_t in_width, int64_t k_beams, uint64_t seed) {
        Rng rng(seed);
        boot.init(params, "rssi.boot", {dim, dim, k_beams}, rng);
        res.init(params, "rssi.res", {in_width, dim, k_beams}, rng);
    }
};

// Constant-velocity extrapolation from the last two history positions.
// p_hist is [T_hist, 2]; returns [T_pred, 2].
template <typename S>
Tensor<S> coarse_trajectory_cv(const Tensor<S>& p_hist, int t_pred) {
    const int64_t th = p_hist.extent(0);
    if (th < 2) throw std::invalid_argument("coarse_trajectory: needs >= 2 history positions");
    Tensor<S> out({t_pred, 2});
    for (int i = 0; i < t_pred; ++i)
        for (int64_t d = 0; d < 2; ++d) {
            const S last = p_hist.at({th - 1, d});
            const S prev = p_hist.at({th - 2, d});
            out.at({i, d}) = last + static_cast<S>(i + 1) * (last - prev);
        }
    return out;
}

// Coarse trajectory as a tape value: history mode emits the constant CV
// extrapolation, bootstrap mode repeats one MLP anchor across all steps.
template <typename S>
Val coarse_trajectory(Tape<S>& t, LocHead<S>& head, Val s_pred, const Tensor<S>& p_hist,
                      bool history_mode, int t_pred, bool train) {
    if (history_mode) return t.constant(coarse_trajectory_cv(p_hist, t_pred));
    const int64_t rows = t.value(s_pred).extent(0);
    Val last = t.gather_rows(s_pred, {rows - 1});
    return t.repeat_row(head.boot(t, head.params, last, train), t_pred);
}

template <typename S>
struct LocForward {
    Val coarse;
    Val y_loc;  // [T_pred, 2]
};

template <typename S>
LocForward<S> localization_forward(Tape<S>& t, LocHead<S>& head, Val s_pred,
                                   const Tensor<S>& p_hist, bool history_mode, int t_pred,
                                   bool train) {
    LocForward<S> f;
    f.coarse = coarse_trajectory(t, head, s_pred, p_hist, history_mode, t_pred, train);
    Val delta = head.res(t, head.params, s_pred, train);
    f.y_loc = t.add(f.coarse, delta);
    return f;
}

// S_Fused = [S_Pred ; Y_loc] row-wise; a disabled fusion passes S_Pred alone.
template <typename S>
Val fuse_location(Tape<S>& t, Val s_pred, Val y_loc, bool enabled) {
    return enabled ? t.concat_cols(s_pred, y_loc) : s_pred;
}

template <typename S>
struct RssiForward {
    Val coarse;
    Val y_pow;  // [T_pred, K]
};

// rf_hist is [T_hist, K] normalized; persistence repeats its last row.
template <typename S>
RssiForward<S> rssi_forward(Tape<S>& t, RssiHead<S>& head, Val fused, Val s_pred,
                            const Tensor<S>& rf_hist, bool history_mode, int t_pred, bool train) {
    RssiForward<S> f;
    if (history_mode) {
        const int64_t th = rf_hist.extent(0);
        Tensor<S> last({1, rf_hist.extent(1)});
        std::copy(rf_hist.data() + (th - 1) * rf_hist.extent(1),
                  rf_hist.data() + th * rf_hist.extent(1), last.data());
        f.coarse = t.repeat_row(t.constant(std::move(last)), t_pred);
    } else {
        const int64_t rows = t.value(s_pred).extent(0);
        Val anchor = head.boot(t, head.params, t.gather_rows(s_pred, {rows - 1}), train);
        f.coarse = t.repeat_row(anchor, t_pred);
    }
    Val delta = head.res(t, head.params, fused, train);
    f.y_pow = t.add(f.coarse, delta);
    return f;
}

// Mean over the codebook dimension per step.
template <typename S>
std::vector<double> rssi_scalar(const Tensor<S>& y_pow) {
    const int64_t rows = y_pow.extent(0), k = y_pow.extent(1);
    std::vector<double> out(static_cast<size_t>(rows), 0.0);
    for (int64_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (int64_t j = 0; j < k; ++j) acc += static_cast<double>(y_pow[r * k + j]);
        out[static_cast<size_t>(r)] = acc / static_cast<double>(k);
    }
    return out;
}

} // namespace jmsac
