#include "jmsac/pipeline.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "jmsac/blas.hpp"

#include "jmsac/checkpoint.hpp"
#include "jmsac/gradcheck_suite.hpp"
#include "jmsac/version.hpp"

namespace jmsac::pipeline {

namespace fs = std::filesystem;

namespace {

int log_level() {
    static int lvl = [] {
        const char* e = std::getenv("JMSC_LOG");
        if (!e) return 1;
        const std::string s(e);
        if (s == "error") return 0;
        if (s == "warn") return 1;
        if (s == "info") return 2;
        if (s == "debug") return 3;
        return 1;
    }();
    return lvl;
}

void log_info(const std::string& msg) {
    if (log_level() >= 2) std::fprintf(stderr, "[jmsac] %s\n", msg.c_str());
}

std::string fmt_float(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << content;
}

// Params <-> container plumbing with a name prefix.
void put_params(TensorFile& tf, const Params<float>& p, const std::string& prefix) {
    for (const auto& e : p.entries()) tf.put(prefix + e.name, e.value);
}

void get_params(const TensorFile& tf, Params<float>& p, const std::string& prefix) {
    for (auto& e : p.entries()) {
        const TensorF& t = tf.get(prefix + e.name);
        if (!t.same_shape(e.value))
            throw std::runtime_error("checkpoint shape mismatch for " + e.name);
        e.value = t;
    }
}

} // namespace

BackboneF build_backbone(const cfg::RunConfig& cfg) {
    BackboneF model;
    const auto seeds = cfg::resolve_seeds(cfg.seed);
    model.init(cfg.model, cfg.scenario.total_frames, cfg.scenario.n_beams,
               active_modalities(cfg.drop_modalities), seeds.at("init"));
    return model;
}

void save_backbone(BackboneF& model, AdamW<float>* opt, const std::string& path) {
    TensorFile tf;
    put_params(tf, model.student, "s.");
    put_params(tf, model.teacher, "t.");
    if (opt) {
        for (int h = 0; h < model.student.count(); ++h) {
            tf.put("opt.m." + model.student.entry(h).name, opt->first_moments()[static_cast<size_t>(h)]);
            tf.put("opt.v." + model.student.entry(h).name, opt->second_moments()[static_cast<size_t>(h)]);
        }
        TensorF step({1});
        step[0] = static_cast<float>(opt->step_count());
        tf.put("opt.step", step);
    }
    fs::create_directories(fs::path(path).parent_path());
    tf.save(path);
}

void load_backbone(BackboneF& model, AdamW<float>* opt, const std::string& path) {
    if (!fs::exists(path)) throw MissingInputError("missing backbone checkpoint: " + path);
    const TensorFile tf = TensorFile::load(path);
    get_params(tf, model.student, "s.");
    get_params(tf, model.teacher, "t.");
    if (opt && tf.has("opt.step")) {
        for (int h = 0; h < model.student.count(); ++h) {
            opt->first_moments()[static_cast<size_t>(h)] =
                tf.get("opt.m." + model.student.entry(h).name);
            opt->second_moments()[static_cast<size_t>(h)] =
                tf.get("opt.v." + model.student.entry(h).name);
        }
        opt->set_step_count(static_cast<int64_t>(tf.get("opt.step")[0]));
    }
}

uint32_t backbone_checksum(BackboneF& model) {
    TensorFile tf;
    put_params(tf, model.student, "s.");
    return container_crc(tf.serialize());
}

WindowInputs<float> to_inputs(const data::Window& w, const prep::RfStats& stats) {
    WindowInputs<float> in;
    in.V = w.V;
    in.R = w.R;
    in.L = w.L;
    in.p = w.p;
    in.rf = TensorF(w.rf_db.shape());
    for (int64_t i = 0; i < w.rf_db.numel(); ++i) in.rf[i] = prep::normalize_rf(w.rf_db[i], stats);
    return in;
}

void run_generate(const cfg::RunConfig& cfg, const std::string& out_dir) {
    log_info("generating dataset into " + out_dir);
    data::generate_dataset(cfg, out_dir);
}

PretrainResult run_pretrain(const cfg::RunConfig& cfg, const std::string& dataset_dir,
                            const std::string& out_dir) {
    if (!fs::exists(fs::path(dataset_dir) / "manifest.json"))
        throw MissingInputError("missing dataset manifest: " + dataset_dir + "/manifest.json");
    const auto manifest = data::load_manifest(dataset_dir);
    const auto train = data::load_split(dataset_dir, manifest, true);
    if (train.empty()) throw MissingInputError("dataset has no training windows: " + dataset_dir);
    const auto seeds = cfg::resolve_seeds(cfg.seed);

    BackboneF model = build_backbone(cfg);
    AdamW<float> opt(model.student, {cfg.pretrain.lr, cfg.pretrain.weight_decay, 0.9, 0.999, 1e-8});

    std::vector<WindowInputs<float>> inputs;
    inputs.reserve(train.size());
    for (const auto& w : train) inputs.push_back(to_inputs(w, manifest.rf_stats));

    const TokenLayout layout = model.layout();
    const MaskPattern pattern = mask_pattern_from_string(cfg.pretrain.pattern);
    const int64_t n = static_cast<int64_t>(inputs.size());
    const int64_t batch = std::max<int64_t>(1, cfg.pretrain.batch_size);
    const int64_t steps_per_epoch = (n + batch - 1) / batch;
    const int64_t total_steps = steps_per_epoch * cfg.pretrain.epochs;

    PretrainResult res;
    res.checkpoint_path = (fs::path(out_dir) / "backbone.jmsc").string();
    fs::create_directories(out_dir);
    std::string curve = "epoch,mean_loss,lr,beta\n";
    const uint64_t pre_seed = seeds.at("pretrain");
    int64_t step = 0;
    double lr_now = cfg.pretrain.lr, beta_now = cfg.pretrain.ema_start;

    // Window-level parallelism with per-window gradient buffers. The dense
    // kernels run single-threaded inside each worker, and contributions are
    // reduced in batch order, so results are bit-identical for every worker
    // count.
    const int workers = std::max(1, std::min<int>(blas::threads(), static_cast<int>(batch)));
    blas::set_threads(1);
    std::vector<BackboneF> replicas(static_cast<size_t>(workers > 1 ? workers - 1 : 0), model);

    std::vector<std::vector<TensorF>> grad_buf(static_cast<size_t>(batch));
    for (auto& gb : grad_buf) {
        gb.reserve(static_cast<size_t>(model.student.count()));
        for (auto& e : model.student.entries()) gb.emplace_back(e.value.shape());
    }
    std::vector<double> window_loss(static_cast<size_t>(batch));

    // One window's forward/backward; grads land in grad_buf[pos].
    auto run_window = [&](BackboneF& m, int64_t widx, int64_t pos, int64_t bsize, int64_t step_id) {
        const WindowInputs<float>& w = inputs[static_cast<size_t>(widx)];
        Rng mask_rng(hash64(pre_seed, "mask" + std::to_string(step_id) + "." + std::to_string(pos)));
        const MaskSpec mask = sample_pattern_mask(pattern, layout, cfg.pretrain.rho, mask_rng);
        m.student.zero_grad();
        Tape<float> t;
        Val z = tokenize_window(t, m, w, layout.t_total, true);
        Val pe = positional_sum(t, m, layout, true);
        Val z_tilde = t.add(z, pe);
        const TensorF u_star = encode_target(m, t.value(z_tilde));
        Val z_keep = t.gather_rows(z_tilde, mask.keep_idx);
        Val c = encode_context(t, m, z_keep, true);
        Val u_hat = predict_latents(t, m, c, pe, mask.keep_idx, mask.mask_idx, true);
        Val loss = t.smooth_l1_loss(t.gather_rows(u_hat, mask.mask_idx),
                                    t.constant(gather_rows_tensor(u_star, mask.mask_idx)));
        window_loss[static_cast<size_t>(pos)] = static_cast<double>(t.value(loss)[0]);
        t.backward(t.scale(loss, 1.0f / static_cast<float>(bsize)));
        for (int h = 0; h < m.student.count(); ++h)
            std::swap(grad_buf[static_cast<size_t>(pos)][static_cast<size_t>(h)], m.student.grad(h));
    };

    for (int epoch = 0; epoch < cfg.pretrain.epochs; ++epoch) {
        // Per-epoch shuffle with a derived stream.
        std::vector<int64_t> order(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
        Rng shuffle_rng(hash64(pre_seed, "epoch" + std::to_string(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.below(i))]);

        double epoch_loss = 0.0;
        int64_t seen = 0;
        for (int64_t b0 = 0; b0 < n; b0 += batch) {
            const int64_t b1 = std::min(n, b0 + batch);
            const int64_t bsize = b1 - b0;
            // Refresh replicas with the latest parameters.
            for (auto& r : replicas) {
                for (int h = 0; h < model.student.count(); ++h)
                    r.student.value(h) = model.student.value(h);
                for (int h = 0; h < model.teacher.count(); ++h)
                    r.teacher.value(h) = model.teacher.value(h);
            }
            const int64_t step_id = step;
            auto work = [&](int wi) {
                BackboneF& m = wi == 0 ? model : replicas[static_cast<size_t>(wi - 1)];
                for (int64_t pos = wi; pos < bsize; pos += workers)
                    run_window(m, order[static_cast<size_t>(b0 + pos)], pos, bsize, step_id);
            };
            if (workers == 1) {
                work(0);
            } else {
                std::vector<std::thread> ts;
                for (int wi = 1; wi < workers; ++wi) ts.emplace_back(work, wi);
                work(0);
                for (auto& th : ts) th.join();
            }
            double batch_loss = 0.0;
            for (int64_t pos = 0; pos < bsize; ++pos) {
                const double lv = window_loss[static_cast<size_t>(pos)];
                if (!std::isfinite(lv))
                    throw NumericalError("pretrain: non-finite loss at step " + std::to_string(step) +
                                         "; last good checkpoint retained at " + res.checkpoint_path);
                batch_loss += lv;
            }
            // Ordered reduction of the per-window contributions.
            model.student.zero_grad();
            for (int64_t pos = 0; pos < bsize; ++pos)
                for (int h = 0; h < model.student.count(); ++h) {
                    Tensor<float>& dst = model.student.grad(h);
                    const Tensor<float>& src = grad_buf[static_cast<size_t>(pos)][static_cast<size_t>(h)];
                    for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
                }
            epoch_loss += batch_loss;
            seen += bsize;
            lr_now = cosine_lr(cfg.pretrain.lr, step, total_steps);
            opt.hyper().lr = lr_now;
            opt.step();
            beta_now = ema_beta(cfg.pretrain.ema_start, cfg.pretrain.ema_end, step, total_steps);
            ema_update(model.teacher, model.student, model.ctx_handles, beta_now);
            ++step;
        }
        epoch_loss /= static_cast<double>(seen);
        res.epoch_loss.push_back(epoch_loss);
        curve += std::to_string(epoch + 1) + "," + fmt_float(epoch_loss) + "," + fmt_float(lr_now) +
                 "," + fmt_float(beta_now) + "\n";
        save_backbone(model, &opt, res.checkpoint_path);
        log_info("pretrain epoch " + std::to_string(epoch + 1) + " loss " + fmt_float(epoch_loss));
    }
    blas::set_threads(workers);
    res.first_epoch_loss = res.epoch_loss.front();
    res.final_epoch_loss = res.epoch_loss.back();
    write_text((fs::path(out_dir) / "pretrain_loss.csv").string(),
               "# build=" + std::string(kBuildId) + " config_hash=" + cfg.config_hash + "\n" + curve);
    return res;
}

namespace {

// Frozen-backbone features for one split, cached once per head-training or
// evaluation pass.
struct Features {
    std::vector<TensorF> s_pred;   // [T_pred, D] per window
    std::vector<TensorF> p_hist;   // [T_hist, 2]
    std::vector<TensorF> rf_hist;  // [T_hist, K] normalized
    std::vector<TensorF> p_future; // [T_pred, 2] processed GPS (training target)
    std::vector<TensorF> pos_future;  // [T_pred, 2] true positions
    std::vector<std::vector<int>> beam_future;   // per window, T_pred labels
    std::vector<TensorF> rf_future;  // [T_pred, K] normalized (supervision)
    std::vector<TensorF> spec_future_db;  // [T_pred, K] dB (metrics)
};

// Runs fn(i) for i in [0, n) across the configured worker count; the dense
// kernels drop to one thread inside the workers. fn must only touch state
// owned by index i.
void parallel_windows(int64_t n, const std::function<void(int64_t)>& fn) {
    const int workers = std::max(1, std::min<int>(blas::threads(), static_cast<int>(n)));
    if (workers == 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    blas::set_threads(1);
    std::vector<std::thread> ts;
    for (int wi = 1; wi < workers; ++wi)
        ts.emplace_back([&, wi] {
            for (int64_t i = wi; i < n; i += workers) fn(i);
        });
    for (int64_t i = 0; i < n; i += workers) fn(i);
    for (auto& th : ts) th.join();
    blas::set_threads(workers);
}

Features compute_features(BackboneF& model, const std::vector<data::Window>& split,
                          const prep::RfStats& stats, const cfg::RunConfig& cfg) {
    Features f;
    const int th = cfg.scenario.hist_frames;
    const int tp = cfg.scenario.pred_frames;
    const int k = cfg.scenario.n_beams;
    const int64_t n = static_cast<int64_t>(split.size());
    f.s_pred.resize(static_cast<size_t>(n));
    f.p_hist.resize(static_cast<size_t>(n));
    f.rf_hist.resize(static_cast<size_t>(n));
    f.p_future.resize(static_cast<size_t>(n));
    f.pos_future.resize(static_cast<size_t>(n));
    f.beam_future.resize(static_cast<size_t>(n));
    f.rf_future.resize(static_cast<size_t>(n));
    f.spec_future_db.resize(static_cast<size_t>(n));
    parallel_windows(n, [&](int64_t wi) {
        const auto& w = split[static_cast<size_t>(wi)];
        const WindowInputs<float> in = to_inputs(w, stats);
        Tape<float> t;
        Val sp = future_latents(t, model, in, th);
        f.s_pred[static_cast<size_t>(wi)] = t.value(sp);

        TensorF ph({th, 2}), rh({th, k});
        std::copy(in.p.data(), in.p.data() + th * 2, ph.data());
        std::copy(in.rf.data(), in.rf.data() + th * k, rh.data());
        f.p_hist[static_cast<size_t>(wi)] = std::move(ph);
        f.rf_hist[static_cast<size_t>(wi)] = std::move(rh);

        TensorF pf({tp, 2}), posf({tp, 2}), rff({tp, k}), specf({tp, k});
        std::vector<int> beams(static_cast<size_t>(tp));
        for (int i = 0; i < tp; ++i) {
            pf.at({i, 0}) = in.p.at({th + i, 0});
            pf.at({i, 1}) = in.p.at({th + i, 1});
            posf.at({i, 0}) = w.pos.at({th + i, 0});
            posf.at({i, 1}) = w.pos.at({th + i, 1});
            beams[static_cast<size_t>(i)] = static_cast<int>(w.beam[th + i]);
            for (int j = 0; j < k; ++j) {
                rff.at({i, j}) = in.rf.at({th + i, j});
                specf.at({i, j}) = w.spec_db.at({th + i, j});
            }
        }
        f.p_future[static_cast<size_t>(wi)] = std::move(pf);
        f.pos_future[static_cast<size_t>(wi)] = std::move(posf);
        f.beam_future[static_cast<size_t>(wi)] = std::move(beams);
        f.rf_future[static_cast<size_t>(wi)] = std::move(rff);
        f.spec_future_db[static_cast<size_t>(wi)] = std::move(specf);
    });
    return f;
}

} // namespace

HeadTrainResult run_train_heads(const cfg::RunConfig& cfg, const std::string& dataset_dir,
                                const std::string& backbone_path, const std::string& out_dir) {
    if (!fs::exists(fs::path(dataset_dir) / "manifest.json"))
        throw MissingInputError("missing dataset manifest: " + dataset_dir + "/manifest.json");
    const auto manifest = data::load_manifest(dataset_dir);
    const auto train = data::load_split(dataset_dir, manifest, true);
    if (train.empty()) throw MissingInputError("dataset has no training windows");
    const auto seeds = cfg::resolve_seeds(cfg.seed);

    BackboneF model = build_backbone(cfg);
    if (!cfg.heads.untrained_backbone) load_backbone(model, nullptr, backbone_path);

    HeadTrainResult res;
    res.backbone_hash_before = backbone_checksum(model);
    log_info("caching frozen-backbone features for " + std::to_string(train.size()) + " windows");
    const Features feat = compute_features(model, train, manifest.rf_stats, cfg);
    res.backbone_hash_after = backbone_checksum(model);
    if (res.backbone_hash_after != res.backbone_hash_before)
        throw NumericalError("train_heads: backbone parameters changed (frozen contract breach)");

    const int tp = cfg.scenario.pred_frames;
    const int64_t dim = cfg.model.dim;
    const int64_t n = static_cast<int64_t>(train.size());

    LocHead<float> loc;
    loc.init(dim, seeds.at("heads"));
    AdamW<float> loc_opt(loc.params, {cfg.heads.lr, cfg.heads.weight_decay, 0.9, 0.999, 1e-8});

    // Stage 1: localization head.
    for (int epoch = 0; epoch < cfg.heads.epochs; ++epoch) {
        double el = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            Tape<float> t;
            Val sp = t.constant(feat.s_pred[static_cast<size_t>(i)]);
            auto fwd = localization_forward(t, loc, sp, feat.p_hist[static_cast<size_t>(i)],
                                            cfg.heads.loc_history, tp, true);
            Val lossv = t.l1_loss(fwd.y_loc, t.constant(feat.p_future[static_cast<size_t>(i)]),
                                  static_cast<float>(tp));
            el += t.value(lossv)[0];
            loc.params.zero_grad();
            t.backward(lossv);
            loc_opt.step();
        }
        res.loc_loss.push_back(el / static_cast<double>(n));
    }

    // Frozen localization outputs feed the cascaded heads.
    std::vector<TensorF> y_loc(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        Tape<float> t;
        Val sp = t.constant(feat.s_pred[static_cast<size_t>(i)]);
        auto fwd = localization_forward(t, loc, sp, feat.p_hist[static_cast<size_t>(i)],
                                        cfg.heads.loc_history, tp, false);
        y_loc[static_cast<size_t>(i)] = t.value(fwd.y_loc);
    }

    const int64_t fused_width = cfg.heads.loc_aux ? dim + 2 : dim;
    BeamHead<float> beam;
    beam.init(fused_width, cfg.model.gru_hidden, cfg.scenario.n_beams, hash64(seeds.at("heads"), "beam"));
    RssiHead<float> rssi;
    rssi.init(dim, fused_width, cfg.scenario.n_beams, hash64(seeds.at("heads"), "rssi"));
    AdamW<float> beam_opt(beam.params, {cfg.heads.lr, cfg.heads.weight_decay, 0.9, 0.999, 1e-8});
    AdamW<float> rssi_opt(rssi.params, {cfg.heads.lr, cfg.heads.weight_decay, 0.9, 0.999, 1e-8});

    for (int epoch = 0; epoch < cfg.heads.epochs; ++epoch) {
        double eb = 0.0, er = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            Tape<float> t;
            Val sp = t.constant(feat.s_pred[static_cast<size_t>(i)]);
            Val yl = t.constant(y_loc[static_cast<size_t>(i)]);
            Val fused = fuse_location(t, sp, yl, cfg.heads.loc_aux);
            Val logits = beam(t, fused, true);
            std::vector<int64_t> labels(feat.beam_future[static_cast<size_t>(i)].begin(),
                                        feat.beam_future[static_cast<size_t>(i)].end());
            Val beam_loss = t.cross_entropy_loss(logits, labels);
            eb += t.value(beam_loss)[0];
            beam.params.zero_grad();
            t.backward(beam_loss);
            beam_opt.step();

            auto rf = rssi_forward(t, rssi, fused, sp, feat.rf_hist[static_cast<size_t>(i)],
                                   cfg.heads.rf_history, tp, true);
            Val rssi_loss = t.smooth_l1_loss(rf.y_pow, t.constant(feat.rf_future[static_cast<size_t>(i)]));
            er += t.value(rssi_loss)[0];
            rssi.params.zero_grad();
            t.backward(rssi_loss);
            rssi_opt.step();
        }
        res.beam_loss.push_back(eb / static_cast<double>(n));
        res.rssi_loss.push_back(er / static_cast<double>(n));
    }

    res.backbone_hash_after = backbone_checksum(model);
    if (res.backbone_hash_after != res.backbone_hash_before)
        throw NumericalError("train_heads: backbone parameters changed (frozen contract breach)");

    fs::create_directories(out_dir);
    auto save_head = [&](const Params<float>& p, const std::string& name) {
        TensorFile tf;
        for (const auto& e : p.entries()) tf.put(e.name, e.value);
        tf.save((fs::path(out_dir) / name).string());
    };
    save_head(loc.params, "loc.jmsc");
    save_head(beam.params, "beam.jmsc");
    save_head(rssi.params, "rssi.jmsc");

    std::string curve = "epoch,loc_loss,beam_loss,rssi_loss\n";
    for (int e = 0; e < cfg.heads.epochs; ++e)
        curve += std::to_string(e + 1) + "," + fmt_float(res.loc_loss[static_cast<size_t>(e)]) + "," +
                 fmt_float(res.beam_loss[static_cast<size_t>(e)]) + "," +
                 fmt_float(res.rssi_loss[static_cast<size_t>(e)]) + "\n";
    write_text((fs::path(out_dir) / "head_curves.csv").string(),
               "# build=" + std::string(kBuildId) + " config_hash=" + cfg.config_hash + "\n" + curve);
    return res;
}

metrics::EvalReport run_evaluate(const cfg::RunConfig& cfg, const std::string& dataset_dir,
                                 const std::string& backbone_path, const std::string& heads_dir,
                                 const std::string& out_dir) {
    if (!fs::exists(fs::path(dataset_dir) / "manifest.json"))
        throw MissingInputError("missing dataset manifest: " + dataset_dir + "/manifest.json");
    for (const char* f : {"loc.jmsc", "beam.jmsc", "rssi.jmsc"})
        if (!fs::exists(fs::path(heads_dir) / f))
            throw MissingInputError("missing head checkpoint: " + (fs::path(heads_dir) / f).string());

    const auto manifest = data::load_manifest(dataset_dir);
    const auto test = data::load_split(dataset_dir, manifest, false);
    if (test.empty()) throw MissingInputError("dataset has no test windows");
    const auto seeds = cfg::resolve_seeds(cfg.seed);

    BackboneF model = build_backbone(cfg);
    if (!cfg.heads.untrained_backbone) load_backbone(model, nullptr, backbone_path);

    const int64_t dim = cfg.model.dim;
    const int tp = cfg.scenario.pred_frames;
    const int th = cfg.scenario.hist_frames;
    const int k = cfg.scenario.n_beams;
    const int64_t fused_width = cfg.heads.loc_aux ? dim + 2 : dim;

    LocHead<float> loc;
    loc.init(dim, seeds.at("heads"));
    BeamHead<float> beam;
    beam.init(fused_width, cfg.model.gru_hidden, k, hash64(seeds.at("heads"), "beam"));
    RssiHead<float> rssi;
    rssi.init(dim, fused_width, k, hash64(seeds.at("heads"), "rssi"));
    auto load_head = [&](Params<float>& p, const std::string& name) {
        const TensorFile tf = TensorFile::load((fs::path(heads_dir) / name).string());
        for (auto& e : p.entries()) {
            const TensorF& t = tf.get(e.name);
            if (!t.same_shape(e.value)) throw std::runtime_error("head checkpoint shape mismatch: " + e.name);
            e.value = t;
        }
    };
    load_head(loc.params, "loc.jmsc");
    load_head(beam.params, "beam.jmsc");
    load_head(rssi.params, "rssi.jmsc");

    const Features feat = compute_features(model, test, manifest.rf_stats, cfg);
    const int64_t n = static_cast<int64_t>(test.size());

    // Pooled representations and augmented views for the label-free metrics.
    // Jitter streams are derived per window so evaluation parallelism cannot
    // change the draws.
    TensorD reps({n, dim});
    TensorD views({n, cfg.eval.lda_views, dim});
    const uint64_t eval_seed = seeds.at("eval");
    parallel_windows(n, [&](int64_t i) {
        const TensorF& sp = feat.s_pred[static_cast<size_t>(i)];
        for (int64_t j = 0; j < dim; ++j) {
            double acc = 0.0;
            for (int r = 0; r < tp; ++r) acc += sp[r * dim + j];
            reps[i * dim + j] = acc / tp;
        }
        const WindowInputs<float> in = to_inputs(test[static_cast<size_t>(i)], manifest.rf_stats);
        Rng jitter_rng(hash64(eval_seed, "jitter" + std::to_string(i)));
        for (int a = 0; a < cfg.eval.lda_views; ++a) {
            Tape<float> t;
            Val spv = future_latents_jittered(t, model, in, th, jitter_rng,
                                              static_cast<float>(cfg.eval.lda_jitter));
            const TensorF& v = t.value(spv);
            for (int64_t j = 0; j < dim; ++j) {
                double acc = 0.0;
                for (int r = 0; r < tp; ++r) acc += v[r * dim + j];
                views[(i * cfg.eval.lda_views + a) * dim + j] = acc / tp;
            }
        }
    });

    // Head predictions per window.
    std::vector<TensorF> pred_loc(static_cast<size_t>(n)), pred_logits(static_cast<size_t>(n)),
        pred_pow(static_cast<size_t>(n));
    parallel_windows(n, [&](int64_t i) {
        Tape<float> t;
        Val sp = t.constant(feat.s_pred[static_cast<size_t>(i)]);
        auto lf = localization_forward(t, loc, sp, feat.p_hist[static_cast<size_t>(i)],
                                       cfg.heads.loc_history, tp, false);
        Val fused = fuse_location(t, sp, lf.y_loc, cfg.heads.loc_aux);
        Val logits = beam(t, fused, false);
        auto rf = rssi_forward(t, rssi, fused, sp, feat.rf_hist[static_cast<size_t>(i)],
                               cfg.heads.rf_history, tp, false);
        pred_loc[static_cast<size_t>(i)] = t.value(lf.y_loc);
        pred_logits[static_cast<size_t>(i)] = t.value(logits);
        pred_pow[static_cast<size_t>(i)] = t.value(rf.y_pow);
    });

    // Aggregate metrics.
    metrics::EvalReport rep;
    rep.build = kBuildId;
    rep.config_hash = cfg.config_hash;
    rep.n_samples = n;
    bool deg = false;
    rep.r_rankme = metrics::rankme(reps, &deg);
    rep.rankme_degenerate = deg;
    rep.r_lda = metrics::lda_rank(views, 1e-6, &deg);
    rep.lda_degenerate = deg;

    TensorD all_logits({n * tp, k}), all_spec({n * tp, k});
    std::vector<int> all_labels(static_cast<size_t>(n * tp));
    std::vector<double> all_rssi_pred, all_rssi_true;
    std::vector<double> d_loc_all;
    std::vector<std::vector<double>> d_loc_by_step(static_cast<size_t>(tp));
    std::vector<std::vector<double>> dp_by_step(static_cast<size_t>(tp));
    std::vector<std::vector<double>> rssi_err_by_step(static_cast<size_t>(tp));
    std::vector<std::vector<int>> hit1_by_step(static_cast<size_t>(tp)), hit3_by_step(static_cast<size_t>(tp));

    double ade_acc = 0.0, fde_acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const TensorD pl = pred_loc[static_cast<size_t>(i)].cast<double>();
        const TensorD truth = feat.pos_future[static_cast<size_t>(i)].cast<double>();
        const auto af = metrics::ade_fde(pl, truth);
        ade_acc += af.ade;
        fde_acc += af.fde;
        for (int r = 0; r < tp; ++r) {
            const double dx = pl.at({r, 0}) - truth.at({r, 0});
            const double dy = pl.at({r, 1}) - truth.at({r, 1});
            const double d = std::sqrt(dx * dx + dy * dy);
            d_loc_all.push_back(d);
            d_loc_by_step[static_cast<size_t>(r)].push_back(d);
            for (int j = 0; j < k; ++j) {
                all_logits[(i * tp + r) * k + j] = pred_logits[static_cast<size_t>(i)][r * k + j];
                all_spec[(i * tp + r) * k + j] = feat.spec_future_db[static_cast<size_t>(i)][r * k + j];
            }
            all_labels[static_cast<size_t>(i * tp + r)] = feat.beam_future[static_cast<size_t>(i)][static_cast<size_t>(r)];
        }
        const auto rssi_pred = rssi_scalar(pred_pow[static_cast<size_t>(i)]);
        const auto rssi_true = rssi_scalar(feat.rf_future[static_cast<size_t>(i)]);
        for (int r = 0; r < tp; ++r) {
            all_rssi_pred.push_back(rssi_pred[static_cast<size_t>(r)]);
            all_rssi_true.push_back(rssi_true[static_cast<size_t>(r)]);
            rssi_err_by_step[static_cast<size_t>(r)].push_back(
                std::abs(rssi_pred[static_cast<size_t>(r)] - rssi_true[static_cast<size_t>(r)]));
        }
    }
    rep.ade = ade_acc / static_cast<double>(n);
    rep.fde = fde_acc / static_cast<double>(n);
    rep.acc1 = metrics::topn_accuracy(all_logits, all_labels, 1);
    rep.acc3 = metrics::topn_accuracy(all_logits, all_labels, std::min(3, k));
    const auto pred_beams = metrics::argmax_rows(all_logits);
    const auto dp = metrics::l1_rsrp_diff(pred_beams, all_labels, all_spec);
    rep.mean_l1_rsrp_diff = dp.mean;
    rep.mismatch_hist = dp.mismatch_hist;
    const auto rm = metrics::rmse_mae(all_rssi_pred, all_rssi_true);
    rep.rmse = rm.rmse;
    rep.mae = rm.mae;

    // Per-step slices for the horizon CSV.
    for (int64_t i = 0; i < n; ++i)
        for (int r = 0; r < tp; ++r) {
            const int64_t row = i * tp + r;
            const int label = all_labels[static_cast<size_t>(row)];
            // top-1 / top-3 membership per step
            std::vector<int> idx(static_cast<size_t>(k));
            for (int j = 0; j < k; ++j) idx[static_cast<size_t>(j)] = j;
            std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) {
                return all_logits[row * k + x] > all_logits[row * k + y];
            });
            hit1_by_step[static_cast<size_t>(r)].push_back(idx[0] == label ? 1 : 0);
            int hit3 = 0;
            for (int j = 0; j < std::min(3, k); ++j) hit3 |= idx[static_cast<size_t>(j)] == label;
            hit3_by_step[static_cast<size_t>(r)].push_back(hit3);
            dp_by_step[static_cast<size_t>(r)].push_back(dp.deltas[static_cast<size_t>(row)]);
        }

    fs::create_directories(out_dir);
    const std::string hdr = "# build=" + std::string(kBuildId) + " config_hash=" + cfg.config_hash + "\n";
    {
        std::string csv = hdr + "step,mean_d_loc,acc1,acc3,mean_dp,rmse,mae\n";
        for (int r = 0; r < tp; ++r) {
            auto mean = [](const std::vector<double>& v) {
                double a = 0.0;
                for (double x : v) a += x;
                return v.empty() ? 0.0 : a / static_cast<double>(v.size());
            };
            auto meani = [](const std::vector<int>& v) {
                double a = 0.0;
                for (int x : v) a += x;
                return v.empty() ? 0.0 : a / static_cast<double>(v.size());
            };
            double se = 0.0;
            for (double x : rssi_err_by_step[static_cast<size_t>(r)]) se += x * x;
            const double rmse_step = rssi_err_by_step[static_cast<size_t>(r)].empty()
                                         ? 0.0
                                         : std::sqrt(se / static_cast<double>(
                                                              rssi_err_by_step[static_cast<size_t>(r)].size()));
            csv += std::to_string(r + 1) + "," + fmt_float(mean(d_loc_by_step[static_cast<size_t>(r)])) +
                   "," + fmt_float(meani(hit1_by_step[static_cast<size_t>(r)])) + "," +
                   fmt_float(meani(hit3_by_step[static_cast<size_t>(r)])) + "," +
                   fmt_float(mean(dp_by_step[static_cast<size_t>(r)])) + "," + fmt_float(rmse_step) +
                   "," + fmt_float(mean(rssi_err_by_step[static_cast<size_t>(r)])) + "\n";
        }
        write_text((fs::path(out_dir) / "horizon.csv").string(), csv);
    }
    {
        std::vector<double> sorted = d_loc_all;
        std::sort(sorted.begin(), sorted.end());
        std::string csv = hdr + "d_loc,cdf\n";
        for (size_t i = 0; i < sorted.size(); ++i)
            csv += fmt_float(sorted[i]) + "," +
                   fmt_float(static_cast<double>(i + 1) / static_cast<double>(sorted.size())) + "\n";
        write_text((fs::path(out_dir) / "cdf_d_loc.csv").string(), csv);
    }
    {
        // Raw prediction dump for independent metric recomputation.
        std::string csv = hdr + "window,tau,pred_x,pred_y,truth_x,truth_y,beam_true,rssi_pred,rssi_true";
        for (int j = 0; j < k; ++j) csv += ",logit_" + std::to_string(j);
        for (int j = 0; j < k; ++j) csv += ",spec_db_" + std::to_string(j);
        csv += "\n";
        int64_t row = 0;
        for (int64_t i = 0; i < n; ++i)
            for (int r = 0; r < tp; ++r, ++row) {
                csv += std::to_string(i) + "," + std::to_string(r + 1);
                csv += "," + fmt_float(pred_loc[static_cast<size_t>(i)].at({r, 0}));
                csv += "," + fmt_float(pred_loc[static_cast<size_t>(i)].at({r, 1}));
                csv += "," + fmt_float(feat.pos_future[static_cast<size_t>(i)].at({r, 0}));
                csv += "," + fmt_float(feat.pos_future[static_cast<size_t>(i)].at({r, 1}));
                csv += "," + std::to_string(all_labels[static_cast<size_t>(row)]);
                csv += "," + fmt_float(all_rssi_pred[static_cast<size_t>(row)]);
                csv += "," + fmt_float(all_rssi_true[static_cast<size_t>(row)]);
                for (int j = 0; j < k; ++j) csv += "," + fmt_float(all_logits[row * k + j]);
                for (int j = 0; j < k; ++j) csv += "," + fmt_float(all_spec[row * k + j]);
                csv += "\n";
            }
        write_text((fs::path(out_dir) / "predictions.csv").string(), csv);
    }
    write_text((fs::path(out_dir) / "report.json").string(), rep.to_json().dump(2) + "\n");
    return rep;
}

void run_ablate(const cfg::RunConfig& cfg, const std::string& out_dir) {
    if (cfg.ablation_cells.empty())
        throw std::invalid_argument("ablate: config has no ablation.cells");
    std::string csv = "# build=" + std::string(kBuildId) + " config_hash=" + cfg.config_hash + "\n";
    csv += "setting,r_rankme,r_lda,ade,fde,acc1,acc3,l1diff,rmse,mae\n";
    for (const auto& cell : cfg.ablation_cells) {
        const cfg::RunConfig cc = cfg::apply_overrides(cfg, cell.overrides);
        const std::string cell_dir = (fs::path(out_dir) / cell.name).string();
        // Dataset depends only on seed + scenario + preprocess; cells sharing
        // those reuse one generated copy.
        nlohmann::json key;
        key["seed"] = cc.seed;
        key["scenario"] = cfg::to_json(cc)["scenario"];
        key["preprocess"] = cfg::to_json(cc)["preprocess"];
        std::ostringstream oss;
        oss << std::hex << hash64(0, key.dump());
        const std::string ds_dir = (fs::path(out_dir) / "datasets" / oss.str()).string();
        if (!fs::exists(fs::path(ds_dir) / "manifest.json")) run_generate(cc, ds_dir);
        log_info("ablate cell " + cell.name);
        const auto pre = run_pretrain(cc, ds_dir, cell_dir);
        run_train_heads(cc, ds_dir, pre.checkpoint_path, cell_dir);
        const auto rep = run_evaluate(cc, ds_dir, pre.checkpoint_path, cell_dir, cell_dir);
        csv += cell.name + "," + fmt_float(rep.r_rankme) + "," + fmt_float(rep.r_lda) + "," +
               fmt_float(rep.ade) + "," + fmt_float(rep.fde) + "," + fmt_float(rep.acc1) + "," +
               fmt_float(rep.acc3) + "," + fmt_float(rep.mean_l1_rsrp_diff) + "," +
               fmt_float(rep.rmse) + "," + fmt_float(rep.mae) + "\n";
    }
    write_text((fs::path(out_dir) / "ablation.csv").string(), csv);
}

bool run_gradcheck(std::ostream& os) {
    const auto cases = gradcheck_suite();
    bool all = true;
    for (const auto& c : cases) {
        os << (c.pass ? "PASS" : "FAIL") << " " << c.name << " max_rel_err=" << c.max_rel_err
           << " checked=" << c.checked << "\n";
        all = all && c.pass;
    }
    os << (all ? "gradcheck: all passed" : "gradcheck: FAILURES present") << "\n";
    return all;
}

} // namespace jmsac::pipeline
