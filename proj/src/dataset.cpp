#include "jmsac/dataset.hpp"

#include <filesystem>
#include <fstream>

#include "jmsac/checkpoint.hpp"
#include "jmsac/scenario.hpp"
#include "jmsac/version.hpp"

namespace jmsac::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Preprocesses one full sequence into per-frame model-ready tensors, then
// slices overlapping windows.
struct ProcessedSeq {
    std::vector<TensorF> V, R, L;                  // per frame
    std::vector<std::array<double, 2>> p;          // processed GPS, meters
    std::vector<std::vector<double>> rf_db, spec_db;
    std::vector<std::array<double, 2>> pos_true;
    std::vector<int> beam;
};

ProcessedSeq process_sequence(const cfg::RunConfig& cfg, const sim::Sequence& seq,
                              const sim::BeamCodebook& cb, Rng& rng) {
    ProcessedSeq out;
    const auto& pp = cfg.preprocess;
    const double deg = 3.14159265358979323846 / 180.0;
    for (const auto& st : seq.states) {
        sim::MultimodalFrame f = sim::render_sensors(st, seq.obstacles, cfg.scenario, cb, rng);
        out.V.push_back(prep::preprocess_vision(f.image, pp.vision_size, pp.vision_mean, pp.vision_std));
        out.R.push_back(prep::radar_range_angle(f.radar_if, pp.radar_dft)
                            .reshaped({1, pp.radar_dft, pp.radar_dft}));
        out.L.push_back(prep::lidar_depth_projection(f.lidar_points, pp.lidar_h, pp.lidar_w,
                                                     pp.lidar_fov_up_deg * deg,
                                                     pp.lidar_fov_down_deg * deg, pp.lidar_d_max));
        out.p.push_back(prep::gps_local_projection(f.gps, cfg.scenario.bs_lonlat, pp.earth_radius_m));
        out.rf_db.push_back(f.rf_db);
        out.spec_db.push_back(f.spec_db);
        out.pos_true.push_back(f.pos_true);
        out.beam.push_back(f.best_beam);
    }
    return out;
}

Window slice_window(const cfg::RunConfig& cfg, const ProcessedSeq& ps, int w0) {
    const int t_total = cfg.scenario.total_frames;
    const int k = cfg.scenario.n_beams;
    const auto& pp = cfg.preprocess;
    Window w;
    w.V = TensorF({t_total, 3, pp.vision_size, pp.vision_size});
    w.R = TensorF({t_total, 1, pp.radar_dft, pp.radar_dft});
    w.L = TensorF({t_total, 1, pp.lidar_h, pp.lidar_w});
    w.p = TensorF({t_total, 2});
    w.rf_db = TensorF({t_total, k});
    w.pos = TensorF({t_total, 2});
    w.beam = TensorF({t_total});
    w.spec_db = TensorF({t_total, k});
    for (int t = 0; t < t_total; ++t) {
        const int src = w0 + t;
        std::copy(ps.V[src].data(), ps.V[src].data() + ps.V[src].numel(),
                  w.V.data() + t * ps.V[src].numel());
        std::copy(ps.R[src].data(), ps.R[src].data() + ps.R[src].numel(),
                  w.R.data() + t * ps.R[src].numel());
        std::copy(ps.L[src].data(), ps.L[src].data() + ps.L[src].numel(),
                  w.L.data() + t * ps.L[src].numel());
        w.p.at({t, 0}) = static_cast<float>(ps.p[src][0]);
        w.p.at({t, 1}) = static_cast<float>(ps.p[src][1]);
        w.pos.at({t, 0}) = static_cast<float>(ps.pos_true[src][0]);
        w.pos.at({t, 1}) = static_cast<float>(ps.pos_true[src][1]);
        w.beam[t] = static_cast<float>(ps.beam[src]);
        for (int j = 0; j < k; ++j) {
            w.rf_db.at({t, j}) = static_cast<float>(ps.rf_db[src][static_cast<size_t>(j)]);
            w.spec_db.at({t, j}) = static_cast<float>(ps.spec_db[src][static_cast<size_t>(j)]);
        }
    }
    return w;
}

TensorFile to_container(const Window& w) {
    TensorFile tf;
    tf.put("V", w.V);
    tf.put("R", w.R);
    tf.put("L", w.L);
    tf.put("p", w.p);
    tf.put("rf_db", w.rf_db);
    tf.put("pos", w.pos);
    tf.put("beam", w.beam);
    tf.put("spec_db", w.spec_db);
    return tf;
}

} // namespace

void generate_dataset(const cfg::RunConfig& cfg, const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::exists(out_dir)) throw std::runtime_error("cannot create output dir: " + out_dir);

    const auto seeds = cfg::resolve_seeds(cfg.seed);
    const auto cb = sim::make_codebook(cfg.scenario);
    const int t_total = cfg.scenario.total_frames;
    const int frames = cfg.dataset.frames_per_sequence;
    const int windows_per_seq = frames - t_total + 1;

    std::vector<WindowMeta> metas;
    std::vector<Window> all_windows;
    for (int s = 0; s < cfg.dataset.sequences; ++s) {
        const uint64_t seq_seed = seeds.at("scenario") ^ static_cast<uint64_t>(s);
        const auto seq = sim::simulate_trajectory(cfg.scenario, frames, seq_seed);
        Rng rng(hash64(seq_seed, "sensors"));
        const auto ps = process_sequence(cfg, seq, cb, rng);
        for (int w0 = 0; w0 < windows_per_seq; ++w0) {
            WindowMeta m;
            m.sequence = s;
            m.offset = w0;
            m.file = "w" + std::to_string(metas.size()) + ".jmsc";
            metas.push_back(m);
            all_windows.push_back(slice_window(cfg, ps, w0));
        }
    }

    // Shuffled split: first floor(frac * N) go to train, remainder to test.
    {
        Rng rng(seeds.at("split"));
        std::vector<size_t> order(metas.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(rng.below(i))]);
        const size_t n_train =
            static_cast<size_t>(cfg.dataset.train_fraction * static_cast<double>(metas.size()));
        for (size_t i = 0; i < n_train && i < order.size(); ++i) metas[order[i]].train = true;
    }

    // RF stats come from the training split only.
    std::vector<float> train_db;
    for (size_t i = 0; i < metas.size(); ++i)
        if (metas[i].train)
            train_db.insert(train_db.end(), all_windows[i].rf_db.data(),
                            all_windows[i].rf_db.data() + all_windows[i].rf_db.numel());
    if (train_db.empty())
        throw std::runtime_error("generate_dataset: empty training split");
    const prep::RfStats stats = prep::compute_rf_stats(train_db);

    for (size_t i = 0; i < metas.size(); ++i) {
        const auto bytes = to_container(all_windows[i]).serialize();
        const std::string path = (fs::path(out_dir) / metas[i].file).string();
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + path);
        f.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
        metas[i].crc = container_crc(bytes);
    }

    json man;
    man["build"] = kBuildId;
    man["config_hash"] = cfg.config_hash;
    man["config"] = cfg::to_json(cfg);
    json jseeds;
    for (const auto& [k, v] : seeds) jseeds[k] = v;
    man["seeds"] = jseeds;
    man["rf_stats"] = {{"min_db", stats.min_db}, {"max_db", stats.max_db},
                       {"degenerate", stats.degenerate}};
    json jw = json::array();
    for (const auto& m : metas)
        jw.push_back({{"file", m.file}, {"train", m.train}, {"sequence", m.sequence},
                      {"offset", m.offset}, {"crc32", m.crc}});
    man["windows"] = jw;
    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    if (!mf) throw std::runtime_error("cannot write manifest in " + out_dir);
    mf << man.dump(2) << "\n";
}

Manifest load_manifest(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw std::runtime_error("missing dataset manifest: " + dir + "/manifest.json");
    json man;
    f >> man;
    Manifest m;
    m.config_echo = man.at("config");
    m.config_hash = man.at("config_hash").get<std::string>();
    m.build = man.at("build").get<std::string>();
    for (auto it = man.at("seeds").begin(); it != man.at("seeds").end(); ++it)
        m.seeds[it.key()] = it->get<uint64_t>();
    m.rf_stats.min_db = man.at("rf_stats").at("min_db").get<double>();
    m.rf_stats.max_db = man.at("rf_stats").at("max_db").get<double>();
    m.rf_stats.degenerate = man.at("rf_stats").at("degenerate").get<bool>();
    for (const auto& jw : man.at("windows")) {
        WindowMeta wm;
        wm.file = jw.at("file").get<std::string>();
        wm.train = jw.at("train").get<bool>();
        wm.sequence = jw.at("sequence").get<int>();
        wm.offset = jw.at("offset").get<int>();
        wm.crc = jw.at("crc32").get<uint32_t>();
        m.windows.push_back(std::move(wm));
    }
    return m;
}

Window load_window(const std::string& dir, const WindowMeta& meta) {
    const TensorFile tf = TensorFile::load((fs::path(dir) / meta.file).string());
    Window w;
    w.V = tf.get("V");
    w.R = tf.get("R");
    w.L = tf.get("L");
    w.p = tf.get("p");
    w.rf_db = tf.get("rf_db");
    w.pos = tf.get("pos");
    w.beam = tf.get("beam");
    w.spec_db = tf.get("spec_db");
    return w;
}

std::vector<Window> load_split(const std::string& dir, const Manifest& m, bool train) {
    std::vector<Window> out;
    for (const auto& wm : m.windows)
        if (wm.train == train) out.push_back(load_window(dir, wm));
    return out;
}

} // namespace jmsac::data
