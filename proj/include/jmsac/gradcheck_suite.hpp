#pragma once

#include <functional>
#include <string>
#include <vector>

#include "jmsac/gradcheck.hpp"
#include "jmsac/heads.hpp"
#include "jmsac/jepa.hpp"

namespace jmsac {

struct GradCheckCase {
    std::string name;
    double max_rel_err = 0.0;
    int64_t checked = 0;
    bool pass = false;
};

// Finite-difference validation of every differentiable op plus the backbone
// and head composites, all in double precision.
inline std::vector<GradCheckCase> gradcheck_suite(double step = 1e-4, double tol = 1e-4) {
    std::vector<GradCheckCase> cases;
    Rng rng(20240817);

    auto run = [&](const std::string& name,
                   const std::function<Val(Tape<double>&, const std::vector<Val>&)>& f,
                   std::vector<Tensor<double>> inputs) {
        auto rep = grad_check(f, std::move(inputs), step);
        cases.push_back({name, rep.max_rel_err, rep.checked, rep.max_rel_err < tol});
    };
    auto run_model = [&](const std::string& name, Params<double>& params,
                         std::vector<Tensor<double>> inputs,
                         const std::function<Val(Tape<double>&, const std::vector<Val>&, bool)>& f) {
        auto rep = grad_check_model(params, std::move(inputs), f, step);
        cases.push_back({name, rep.max_rel_err, rep.checked, rep.max_rel_err < tol});
    };

    // Smooth scalar reduction for non-scalar outputs.
    auto reduce = [](Tape<double>& t, Val x) {
        return t.smooth_l1_loss(t.scale(x, 0.1), t.constant(Tensor<double>(t.value(x).shape())));
    };

    // ---- primitive ops ----
    run("add", [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.add(in[0], in[1])); },
        {TensorD::randn({3, 4}, rng), TensorD::randn({3, 4}, rng)});
    run("sub", [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.sub(in[0], in[1])); },
        {TensorD::randn({3, 4}, rng), TensorD::randn({3, 4}, rng)});
    run("mul", [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.mul(in[0], in[1])); },
        {TensorD::randn({3, 4}, rng), TensorD::randn({3, 4}, rng)});
    run("scale", [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.scale(in[0], 1.7)); },
        {TensorD::randn({3, 4}, rng)});
    run("gelu", [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.gelu(in[0])); },
        {TensorD::randn({4, 5}, rng)});
    run("sigmoid", [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.sigmoid(in[0])); },
        {TensorD::randn({4, 5}, rng)});
    run("tanh", [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.tanh_act(in[0])); },
        {TensorD::randn({4, 5}, rng)});
    run("softmax", [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.softmax_lastdim(in[0])); },
        {TensorD::randn({4, 6}, rng)});
    run("reshape", [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.reshape(in[0], {4, 6})); },
        {TensorD::randn({2, 12}, rng)});
    run("split_merge_heads",
        [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.merge_heads(t.split_heads(in[0], 2))); },
        {TensorD::randn({5, 8}, rng)});
    run("nchw_to_tokens",
        [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.nchw_to_tokens(in[0])); },
        {TensorD::randn({2, 3, 2, 2}, rng)});
    run("concat_rows",
        [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.concat_rows({in[0], in[1]})); },
        {TensorD::randn({2, 4}, rng), TensorD::randn({3, 4}, rng)});
    run("concat_cols",
        [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.concat_cols(in[0], in[1])); },
        {TensorD::randn({3, 2}, rng), TensorD::randn({3, 5}, rng)});
    run("slice_cols",
        [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.slice_cols(in[0], 1, 4)); },
        {TensorD::randn({3, 6}, rng)});
    run("gather_rows",
        [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.gather_rows(in[0], {2, 0, 2, 1})); },
        {TensorD::randn({4, 3}, rng)});
    run("mean_rows_groups",
        [&](Tape<double>& t, const std::vector<Val>& in) {
            return reduce(t, t.mean_rows_groups(in[0], {{0, 1, 2}, {3, 4}}));
        },
        {TensorD::randn({5, 3}, rng)});
    run("repeat_row",
        [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.repeat_row(in[0], 4)); },
        {TensorD::randn({1, 5}, rng)});

    for (int ta = 0; ta < 2; ++ta)
        for (int tb = 0; tb < 2; ++tb) {
            const Shape sa = ta ? Shape{4, 3} : Shape{3, 4};
            const Shape sb = tb ? Shape{5, 4} : Shape{4, 5};
            run("matmul_t" + std::to_string(ta) + std::to_string(tb),
                [ta, tb, &reduce](Tape<double>& t, const std::vector<Val>& in) {
                    return reduce(t, t.matmul(in[0], in[1], ta != 0, tb != 0));
                },
                {TensorD::randn(sa, rng), TensorD::randn(sb, rng)});
            const Shape ba = ta ? Shape{2, 4, 3} : Shape{2, 3, 4};
            const Shape bb = tb ? Shape{2, 5, 4} : Shape{2, 4, 5};
            run("bmm_t" + std::to_string(ta) + std::to_string(tb),
                [ta, tb, &reduce](Tape<double>& t, const std::vector<Val>& in) {
                    return reduce(t, t.bmm(in[0], in[1], ta != 0, tb != 0));
                },
                {TensorD::randn(ba, rng), TensorD::randn(bb, rng)});
        }

    run("linear",
        [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.linear(in[0], in[1], in[2])); },
        {TensorD::randn({3, 4}, rng), TensorD::randn({5, 4}, rng), TensorD::randn({5}, rng)});
    run("layer_norm",
        [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.layer_norm(in[0], in[1], in[2])); },
        {TensorD::randn({4, 6}, rng), TensorD::randn({6}, rng), TensorD::randn({6}, rng)});
    run("conv2d",
        [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.conv2d(in[0], in[1], in[2])); },
        {TensorD::randn({2, 2, 5, 5}, rng), TensorD::randn({3, 2, 3, 3}, rng), TensorD::randn({3}, rng)});
    run("conv2d_stride2",
        [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.conv2d(in[0], in[1], in[2], 2)); },
        {TensorD::randn({1, 2, 7, 7}, rng), TensorD::randn({3, 2, 3, 3}, rng), TensorD::randn({3}, rng)});
    run("avg_pool2d",
        [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.avg_pool2d(in[0])); },
        {TensorD::randn({2, 3, 6, 6}, rng)});
    run("adaptive_avg_pool2d",
        [&](Tape<double>& t, const std::vector<Val>& in) { return reduce(t, t.adaptive_avg_pool2d(in[0], 3, 3)); },
        {TensorD::randn({2, 2, 7, 5}, rng)});
    run("predictor_input",
        [&](Tape<double>& t, const std::vector<Val>& in) {
            return reduce(t, t.predictor_input(in[0], in[1], in[2], {0, 2, 4}, {1, 3}));
        },
        {TensorD::randn({3, 4}, rng), TensorD::randn({1, 4}, rng), TensorD::randn({5, 4}, rng)});

    run("smooth_l1",
        [&](Tape<double>& t, const std::vector<Val>& in) { return t.smooth_l1_loss(in[0], in[1]); },
        {TensorD::randn({3, 4}, rng, 2.0), TensorD::randn({3, 4}, rng)});
    run("l1_loss",
        [&](Tape<double>& t, const std::vector<Val>& in) { return t.l1_loss(in[0], in[1], 3.0); },
        {TensorD::randn({3, 2}, rng), TensorD::randn({3, 2}, rng)});
    run("cross_entropy",
        [&](Tape<double>& t, const std::vector<Val>& in) { return t.cross_entropy_loss(in[0], {1, 0, 3}); },
        {TensorD::randn({3, 5}, rng)});

    // ---- real layer composites ----
    {
        Params<double> p;
        Rng r(7);
        auto blk = std::make_shared<TransformerBlock<double>>();
        blk->init(p, "blk", 8, 2, 16, r);
        run_model("transformer_block", p, {TensorD::randn({5, 8}, rng)},
                  [blk, &p, &reduce](Tape<double>& t, const std::vector<Val>& in, bool train) {
                      return reduce(t, (*blk)(t, p, in[0], train));
                  });
    }
    {
        Params<double> p;
        Rng r(11);
        auto enc = std::make_shared<Encoder<double>>();
        enc->init(p, "enc", 2, 8, 2, 16, r);
        run_model("encoder_depth2", p, {TensorD::randn({4, 8}, rng)},
                  [enc, &p, &reduce](Tape<double>& t, const std::vector<Val>& in, bool train) {
                      return reduce(t, (*enc)(t, p, in[0], train));
                  });
    }
    {
        Params<double> p;
        Rng r(13);
        auto mlp = std::make_shared<MlpLayer<double>>();
        mlp->init(p, "mlp", {4, 6, 3}, r);
        run_model("mlp", p, {TensorD::randn({3, 4}, rng)},
                  [mlp, &p, &reduce](Tape<double>& t, const std::vector<Val>& in, bool train) {
                      return reduce(t, (*mlp)(t, p, in[0], train));
                  });
    }
    {
        Params<double> p;
        Rng r(17);
        auto gru = std::make_shared<GruLayer<double>>();
        gru->init(p, "gru", 4, 3, r);
        run_model("single_layer_gru", p, {TensorD::randn({3, 4}, rng)},
                  [gru, &p, &reduce](Tape<double>& t, const std::vector<Val>& in, bool train) {
                      return reduce(t, (*gru)(t, p, in[0], train));
                  });
    }
    {
        // Tokenizer paths on tiny maps.
        Params<double> p;
        Rng r(19);
        auto tok = std::make_shared<Tokenizers<double>>();
        tok->init(p, 8, {2, 3, 4}, {2, 3}, 4, r);
        run_model("tokenize_vision", p, {TensorD::randn({1, 3, 18, 18}, rng)},
                  [tok, &p, &reduce](Tape<double>& t, const std::vector<Val>& in, bool train) {
                      return reduce(t, tok->tokenize_vision(t, p, in[0], train));
                  });
        run_model("tokenize_spatial", p, {TensorD::randn({2, 1, 10, 10}, rng)},
                  [tok, &p, &reduce](Tape<double>& t, const std::vector<Val>& in, bool train) {
                      return reduce(t, tok->tokenize_spatial(t, p, in[0], Modality::Radar, train));
                  });
        run_model("tokenize_state", p, {TensorD::randn({3, 4}, rng)},
                  [tok, &p, &reduce](Tape<double>& t, const std::vector<Val>& in, bool train) {
                      return reduce(t, tok->tokenize_state(t, p, in[0], Modality::RF, train));
                  });
    }
    {
        // Full backbone composite: tokenize -> embed -> mask -> context ->
        // predictor -> masked latent loss against a fixed target.
        cfg::ModelConfig mc;
        mc.dim = 8;
        mc.depth = 1;
        mc.heads = 2;
        mc.ffn_mult = 2;
        mc.predictor_depth = 1;
        mc.vision_channels = {2, 3, 4};
        mc.spatial_channels = {2, 3};
        auto model = std::make_shared<JepaModel<double>>();
        const int t_total = 2;
        model->init(mc, t_total, 4, active_modalities({}), 4242);
        const TokenLayout layout = model->layout();
        Rng mrng(23);
        MaskSpec mask = sample_temporal_block_mask(layout, 0.5, mrng);
        auto target = std::make_shared<TensorD>(
            TensorD::randn({static_cast<int64_t>(mask.mask_idx.size()), 8}, rng));
        std::vector<Tensor<double>> inputs;
        inputs.push_back(TensorD::randn({t_total, 3, 18, 18}, rng));  // V
        inputs.push_back(TensorD::randn({t_total, 1, 10, 10}, rng));  // R
        inputs.push_back(TensorD::randn({t_total, 1, 10, 10}, rng));  // L
        inputs.push_back(TensorD::randn({t_total, 2}, rng));          // p
        inputs.push_back(TensorD::randn({t_total, 4}, rng));          // rf
        run_model("jepa_backbone", model->student, std::move(inputs),
                  [model, layout, mask, target](Tape<double>& t, const std::vector<Val>& in,
                                                bool train) {
                      std::vector<Val> blocks;
                      blocks.push_back(model->tok.tokenize_vision(t, model->student, in[0], train));
                      blocks.push_back(model->tok.tokenize_spatial(t, model->student, in[1],
                                                                   Modality::Radar, train));
                      blocks.push_back(model->tok.tokenize_spatial(t, model->student, in[2],
                                                                   Modality::LiDAR, train));
                      blocks.push_back(
                          model->tok.tokenize_state(t, model->student, in[3], Modality::GPS, train));
                      blocks.push_back(
                          model->tok.tokenize_state(t, model->student, in[4], Modality::RF, train));
                      Val cat = t.concat_rows(blocks);
                      Val z = t.gather_rows(cat, layout.block_to_canonical);
                      Val pe = positional_sum(t, *model, layout, train);
                      Val z_tilde = t.add(z, pe);
                      Val z_keep = t.gather_rows(z_tilde, mask.keep_idx);
                      Val c = encode_context(t, *model, z_keep, train);
                      Val u_hat = predict_latents(t, *model, c, pe, mask.keep_idx, mask.mask_idx, train);
                      return t.smooth_l1_loss(t.gather_rows(u_hat, mask.mask_idx),
                                              t.constant(*target));
                  });
    }
    {
        // Head composites over a fixed latent state.
        const int64_t dim = 8, k = 4, t_pred = 2;
        auto loc = std::make_shared<LocHead<double>>();
        loc->init(dim, 31);
        auto truth = std::make_shared<TensorD>(TensorD::randn({t_pred, 2}, rng));
        run_model("loc_head", loc->params, {TensorD::randn({t_pred, dim}, rng)},
                  [loc, truth, t_pred](Tape<double>& t, const std::vector<Val>& in, bool train) {
                      Tensor<double> p_hist({3, 2});
                      for (int64_t i = 0; i < p_hist.numel(); ++i) p_hist[i] = 0.25 * static_cast<double>(i);
                      auto f = localization_forward(t, *loc, in[0], p_hist, false, t_pred, train);
                      return t.l1_loss(f.y_loc, t.constant(*truth), static_cast<double>(t_pred));
                  });
        auto beam = std::make_shared<BeamHead<double>>();
        beam->init(dim + 2, 6, k, 37);
        run_model("beam_head", beam->params, {TensorD::randn({t_pred, dim + 2}, rng)},
                  [beam](Tape<double>& t, const std::vector<Val>& in, bool train) {
                      Val logits = (*beam)(t, in[0], train);
                      return t.cross_entropy_loss(logits, {1, 3});
                  });
        auto rssi = std::make_shared<RssiHead<double>>();
        rssi->init(dim, dim + 2, k, 41);
        auto rf_truth = std::make_shared<TensorD>(TensorD::randn({t_pred, k}, rng));
        run_model("rssi_head", rssi->params,
                  {TensorD::randn({t_pred, dim + 2}, rng), TensorD::randn({t_pred, dim}, rng)},
                  [rssi, rf_truth, t_pred](Tape<double>& t, const std::vector<Val>& in, bool train) {
                      Tensor<double> rf_hist({3, 4});
                      auto f = rssi_forward(t, *rssi, in[0], in[1], rf_hist, false,
                                            static_cast<int>(t_pred), train);
                      return t.smooth_l1_loss(f.y_pow, t.constant(*rf_truth));
                  });
    }

    return cases;
}

} // namespace jmsac
