#include "jmsac/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "jmsac/rng.hpp"

namespace jmsac::cfg {

using nlohmann::json;

namespace {

// Pulls a field if present, enforcing the JSON type loosely via get<T>.
template <typename T>
void take(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void take(const json& obj, const char* key, std::array<float, 3>& out) {
    if (obj.contains(key)) {
        auto v = obj.at(key).get<std::vector<float>>();
        if (v.size() != 3) throw std::invalid_argument(std::string("config: ") + key + " needs 3 entries");
        std::copy(v.begin(), v.end(), out.begin());
    }
}

void take(const json& obj, const char* key, std::array<int, 3>& out) {
    if (obj.contains(key)) {
        auto v = obj.at(key).get<std::vector<int>>();
        if (v.size() != 3) throw std::invalid_argument(std::string("config: ") + key + " needs 3 entries");
        std::copy(v.begin(), v.end(), out.begin());
    }
}

void take(const json& obj, const char* key, std::array<int, 2>& out) {
    if (obj.contains(key)) {
        auto v = obj.at(key).get<std::vector<int>>();
        if (v.size() != 2) throw std::invalid_argument(std::string("config: ") + key + " needs 2 entries");
        std::copy(v.begin(), v.end(), out.begin());
    }
}

void reject_unknown(const json& obj, const char* section, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw std::invalid_argument(std::string("config: ") + section + " must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument(std::string("config: unknown key '") + it.key() + "' in " + section);
}

void parse_scenario(const json& o, sim::ScenarioConfig& s, DatasetGenConfig& d) {
    reject_unknown(o, "scenario",
                   {"T", "T_hist", "T_pred", "dt", "n_ant", "K", "carrier_hz", "az_span_deg",
                    "p_tx", "noise_floor", "db_floor", "path_gain_ref", "blockage_atten",
                    "reflect_coef", "image_size", "radar_n_rx", "radar_n_chirp", "radar_n_adc",
                    "radar_noise", "radar_range_max", "radar_amp_ref", "lidar_rays_v",
                    "lidar_rays_h", "lidar_height", "gps_sigma_m", "bs_lon", "bs_lat", "speed_min",
                    "speed_max", "turn_prob", "stop_prob", "street_y_min", "street_y_max", "x_min",
                    "x_max", "n_obstacles", "sequences", "frames_per_sequence", "train_fraction"});
    take(o, "T", s.total_frames);
    take(o, "T_hist", s.hist_frames);
    take(o, "T_pred", s.pred_frames);
    take(o, "dt", s.dt);
    take(o, "n_ant", s.n_ant);
    take(o, "K", s.n_beams);
    take(o, "carrier_hz", s.carrier_hz);
    take(o, "az_span_deg", s.az_span_deg);
    take(o, "p_tx", s.p_tx);
    take(o, "noise_floor", s.noise_floor);
    take(o, "db_floor", s.db_floor);
    take(o, "path_gain_ref", s.path_gain_ref);
    take(o, "blockage_atten", s.blockage_atten);
    take(o, "reflect_coef", s.reflect_coef);
    take(o, "image_size", s.image_size);
    take(o, "radar_n_rx", s.radar_n_rx);
    take(o, "radar_n_chirp", s.radar_n_chirp);
    take(o, "radar_n_adc", s.radar_n_adc);
    take(o, "radar_noise", s.radar_noise);
    take(o, "radar_range_max", s.radar_range_max);
    take(o, "radar_amp_ref", s.radar_amp_ref);
    take(o, "lidar_rays_v", s.lidar_rays_v);
    take(o, "lidar_rays_h", s.lidar_rays_h);
    take(o, "lidar_height", s.lidar_height);
    take(o, "gps_sigma_m", s.gps_sigma_m);
    take(o, "bs_lon", s.bs_lonlat[0]);
    take(o, "bs_lat", s.bs_lonlat[1]);
    take(o, "speed_min", s.speed_min);
    take(o, "speed_max", s.speed_max);
    take(o, "turn_prob", s.turn_prob);
    take(o, "stop_prob", s.stop_prob);
    take(o, "street_y_min", s.street_y_min);
    take(o, "street_y_max", s.street_y_max);
    take(o, "x_min", s.x_min);
    take(o, "x_max", s.x_max);
    take(o, "n_obstacles", s.n_obstacles);
    take(o, "sequences", d.sequences);
    take(o, "frames_per_sequence", d.frames_per_sequence);
    take(o, "train_fraction", d.train_fraction);
}

void parse_preprocess(const json& o, PreprocessConfig& p) {
    reject_unknown(o, "preprocess",
                   {"vision_size", "vision_mean", "vision_std", "radar_dft", "lidar_h", "lidar_w",
                    "lidar_fov_up_deg", "lidar_fov_down_deg", "lidar_d_max", "earth_radius_m"});
    take(o, "vision_size", p.vision_size);
    take(o, "vision_mean", p.vision_mean);
    take(o, "vision_std", p.vision_std);
    take(o, "radar_dft", p.radar_dft);
    take(o, "lidar_h", p.lidar_h);
    take(o, "lidar_w", p.lidar_w);
    take(o, "lidar_fov_up_deg", p.lidar_fov_up_deg);
    take(o, "lidar_fov_down_deg", p.lidar_fov_down_deg);
    take(o, "lidar_d_max", p.lidar_d_max);
    take(o, "earth_radius_m", p.earth_radius_m);
}

void parse_model(const json& o, ModelConfig& m) {
    reject_unknown(o, "model",
                   {"dim", "depth", "heads", "ffn_mult", "predictor_depth", "vision_channels",
                    "spatial_channels", "gru_hidden", "pool_modalities"});
    take(o, "dim", m.dim);
    take(o, "depth", m.depth);
    take(o, "heads", m.heads);
    take(o, "ffn_mult", m.ffn_mult);
    take(o, "predictor_depth", m.predictor_depth);
    take(o, "vision_channels", m.vision_channels);
    take(o, "spatial_channels", m.spatial_channels);
    take(o, "gru_hidden", m.gru_hidden);
    take(o, "pool_modalities", m.pool_modalities);
}

void parse_pretrain(const json& o, PretrainConfig& p) {
    reject_unknown(o, "pretrain",
                   {"rho", "pattern", "epochs", "lr", "weight_decay", "ema_start", "ema_end",
                    "batch_size"});
    take(o, "rho", p.rho);
    take(o, "pattern", p.pattern);
    take(o, "epochs", p.epochs);
    take(o, "lr", p.lr);
    take(o, "weight_decay", p.weight_decay);
    take(o, "ema_start", p.ema_start);
    take(o, "ema_end", p.ema_end);
    take(o, "batch_size", p.batch_size);
}

void parse_heads(const json& o, HeadTrainConfig& h) {
    reject_unknown(o, "heads",
                   {"epochs", "lr", "weight_decay", "loc_aux", "loc_history", "rf_history",
                    "untrained_backbone"});
    take(o, "epochs", h.epochs);
    take(o, "lr", h.lr);
    take(o, "weight_decay", h.weight_decay);
    take(o, "loc_aux", h.loc_aux);
    take(o, "loc_history", h.loc_history);
    take(o, "rf_history", h.rf_history);
    take(o, "untrained_backbone", h.untrained_backbone);
}

void parse_eval(const json& o, EvalConfig& e) {
    reject_unknown(o, "eval", {"lda_views", "lda_jitter"});
    take(o, "lda_views", e.lda_views);
    take(o, "lda_jitter", e.lda_jitter);
}

void merge_into(json& base, const json& patch) {
    if (!patch.is_object()) {
        base = patch;
        return;
    }
    if (!base.is_object()) base = json::object();
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (it->is_object() && base.contains(it.key()))
            merge_into(base[it.key()], *it);
        else
            base[it.key()] = *it;
    }
}

void validate(const RunConfig& c) {
    const auto& s = c.scenario;
    if (s.total_frames != s.hist_frames + s.pred_frames)
        throw std::invalid_argument("config: T must equal T_hist + T_pred");
    if (s.pred_frames < 1) throw std::invalid_argument("config: T_pred must be >= 1");
    if (s.hist_frames < 2) throw std::invalid_argument("config: T_hist must be >= 2");
    if (s.n_ant < 2 || s.n_beams < 2) throw std::invalid_argument("config: n_ant and K must be >= 2");
    if (c.dataset.sequences < 1) throw std::invalid_argument("config: sequences must be >= 1");
    if (c.dataset.frames_per_sequence < s.total_frames)
        throw std::invalid_argument("config: frames_per_sequence must cover one window");
    if (c.dataset.train_fraction <= 0.0 || c.dataset.train_fraction >= 1.0)
        throw std::invalid_argument("config: train_fraction must be in (0,1)");
    if (c.model.dim % c.model.heads != 0)
        throw std::invalid_argument("config: dim must be divisible by heads");
    if (c.pretrain.rho <= 0.0 || c.pretrain.rho >= 1.0)
        throw std::invalid_argument("config: rho must be in (0,1)");
    const int t_mask = static_cast<int>(c.pretrain.rho * s.total_frames);
    if (t_mask < 1 || t_mask >= s.total_frames)
        throw std::invalid_argument("config: rho yields an invalid mask length");
    if (c.pretrain.pattern != "temporal-block" && c.pretrain.pattern != "random" &&
        c.pretrain.pattern != "checkerboard")
        throw std::invalid_argument("config: unknown masking pattern " + c.pretrain.pattern);
    if (c.pretrain.ema_start < 0.0 || c.pretrain.ema_end > 1.0 ||
        c.pretrain.ema_start > c.pretrain.ema_end)
        throw std::invalid_argument("config: EMA momentum range invalid");
    if (c.pretrain.epochs < 1 || c.heads.epochs < 1)
        throw std::invalid_argument("config: epochs must be >= 1");
    if (c.preprocess.lidar_fov_up_deg <= c.preprocess.lidar_fov_down_deg)
        throw std::invalid_argument("config: lidar fov_up must exceed fov_down");
    for (const auto& m : c.drop_modalities)
        if (m != "Image" && m != "Radar" && m != "LiDAR" && m != "GPS" && m != "RF")
            throw std::invalid_argument("config: unknown modality in drop set: " + m);
    for (const auto& m : c.model.pool_modalities) {
        if (m != "Image" && m != "Radar" && m != "LiDAR" && m != "GPS" && m != "RF")
            throw std::invalid_argument("config: unknown modality in pooling set: " + m);
        for (const auto& d : c.drop_modalities)
            if (d == m) throw std::invalid_argument("config: pooling a dropped modality: " + m);
    }
    if (c.drop_modalities.size() >= 5)
        throw std::invalid_argument("config: cannot drop every modality");
    if (c.eval.lda_views < 2) throw std::invalid_argument("config: lda_views must be >= 2");
}

std::string hash_hex(const json& doc) {
    const std::string dump = doc.dump();
    const uint64_t h = hash64(0x4a4d5343u /* "JMSC" */, dump);
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

} // namespace

RunConfig parse_config(const json& doc) {
    reject_unknown(doc, "root",
                   {"seed", "scenario", "preprocess", "model", "pretrain", "heads", "eval",
                    "ablation", "paths"});
    RunConfig c;
    take(doc, "seed", c.seed);
    if (doc.contains("scenario")) parse_scenario(doc.at("scenario"), c.scenario, c.dataset);
    if (doc.contains("preprocess")) parse_preprocess(doc.at("preprocess"), c.preprocess);
    if (doc.contains("model")) parse_model(doc.at("model"), c.model);
    if (doc.contains("pretrain")) parse_pretrain(doc.at("pretrain"), c.pretrain);
    if (doc.contains("heads")) parse_heads(doc.at("heads"), c.heads);
    if (doc.contains("eval")) parse_eval(doc.at("eval"), c.eval);
    if (doc.contains("ablation")) {
        const json& a = doc.at("ablation");
        reject_unknown(a, "ablation", {"drop_modalities", "cells"});
        take(a, "drop_modalities", c.drop_modalities);
        if (a.contains("cells")) {
            for (const auto& cell : a.at("cells")) {
                reject_unknown(cell, "ablation cell", {"name", "overrides"});
                AblationCell ac;
                ac.name = cell.at("name").get<std::string>();
                ac.overrides = cell.contains("overrides") ? cell.at("overrides") : json::object();
                c.ablation_cells.push_back(std::move(ac));
            }
        }
    }
    if (doc.contains("paths")) {
        const json& p = doc.at("paths");
        reject_unknown(p, "paths", {"dataset", "backbone", "heads", "out"});
        take(p, "dataset", c.paths.dataset);
        take(p, "backbone", c.paths.backbone);
        take(p, "heads", c.paths.heads);
        take(p, "out", c.paths.out);
    }

    // The LiDAR renderer and range DFT share the preprocessing geometry.
    c.scenario.lidar_fov_up_deg = c.preprocess.lidar_fov_up_deg;
    c.scenario.lidar_fov_down_deg = c.preprocess.lidar_fov_down_deg;
    c.scenario.lidar_range_max = c.preprocess.lidar_d_max;

    validate(c);
    c.config_hash = hash_hex(to_json(c));
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    json doc;
    f >> doc;
    return parse_config(doc);
}

RunConfig apply_overrides(const RunConfig& base, const json& overrides) {
    json doc = to_json(base);
    doc.erase("config_hash");
    merge_into(doc, overrides);
    return parse_config(doc);
}

json to_json(const RunConfig& c) {
    json o;
    o["seed"] = c.seed;
    json s;
    s["T"] = c.scenario.total_frames;
    s["T_hist"] = c.scenario.hist_frames;
    s["T_pred"] = c.scenario.pred_frames;
    s["dt"] = c.scenario.dt;
    s["n_ant"] = c.scenario.n_ant;
    s["K"] = c.scenario.n_beams;
    s["carrier_hz"] = c.scenario.carrier_hz;
    s["az_span_deg"] = c.scenario.az_span_deg;
    s["p_tx"] = c.scenario.p_tx;
    s["noise_floor"] = c.scenario.noise_floor;
    s["db_floor"] = c.scenario.db_floor;
    s["path_gain_ref"] = c.scenario.path_gain_ref;
    s["blockage_atten"] = c.scenario.blockage_atten;
    s["reflect_coef"] = c.scenario.reflect_coef;
    s["image_size"] = c.scenario.image_size;
    s["radar_n_rx"] = c.scenario.radar_n_rx;
    s["radar_n_chirp"] = c.scenario.radar_n_chirp;
    s["radar_n_adc"] = c.scenario.radar_n_adc;
    s["radar_noise"] = c.scenario.radar_noise;
    s["radar_range_max"] = c.scenario.radar_range_max;
    s["radar_amp_ref"] = c.scenario.radar_amp_ref;
    s["lidar_rays_v"] = c.scenario.lidar_rays_v;
    s["lidar_rays_h"] = c.scenario.lidar_rays_h;
    s["lidar_height"] = c.scenario.lidar_height;
    s["gps_sigma_m"] = c.scenario.gps_sigma_m;
    s["bs_lon"] = c.scenario.bs_lonlat[0];
    s["bs_lat"] = c.scenario.bs_lonlat[1];
    s["speed_min"] = c.scenario.speed_min;
    s["speed_max"] = c.scenario.speed_max;
    s["turn_prob"] = c.scenario.turn_prob;
    s["stop_prob"] = c.scenario.stop_prob;
    s["street_y_min"] = c.scenario.street_y_min;
    s["street_y_max"] = c.scenario.street_y_max;
    s["x_min"] = c.scenario.x_min;
    s["x_max"] = c.scenario.x_max;
    s["n_obstacles"] = c.scenario.n_obstacles;
    s["sequences"] = c.dataset.sequences;
    s["frames_per_sequence"] = c.dataset.frames_per_sequence;
    s["train_fraction"] = c.dataset.train_fraction;
    o["scenario"] = s;
    json p;
    p["vision_size"] = c.preprocess.vision_size;
    p["vision_mean"] = c.preprocess.vision_mean;
    p["vision_std"] = c.preprocess.vision_std;
    p["radar_dft"] = c.preprocess.radar_dft;
    p["lidar_h"] = c.preprocess.lidar_h;
    p["lidar_w"] = c.preprocess.lidar_w;
    p["lidar_fov_up_deg"] = c.preprocess.lidar_fov_up_deg;
    p["lidar_fov_down_deg"] = c.preprocess.lidar_fov_down_deg;
    p["lidar_d_max"] = c.preprocess.lidar_d_max;
    p["earth_radius_m"] = c.preprocess.earth_radius_m;
    o["preprocess"] = p;
    json m;
    m["dim"] = c.model.dim;
    m["depth"] = c.model.depth;
    m["heads"] = c.model.heads;
    m["ffn_mult"] = c.model.ffn_mult;
    m["predictor_depth"] = c.model.predictor_depth;
    m["vision_channels"] = c.model.vision_channels;
    m["spatial_channels"] = c.model.spatial_channels;
    m["gru_hidden"] = c.model.gru_hidden;
    m["pool_modalities"] = c.model.pool_modalities;
    o["model"] = m;
    json pt;
    pt["rho"] = c.pretrain.rho;
    pt["pattern"] = c.pretrain.pattern;
    pt["epochs"] = c.pretrain.epochs;
    pt["lr"] = c.pretrain.lr;
    pt["weight_decay"] = c.pretrain.weight_decay;
    pt["ema_start"] = c.pretrain.ema_start;
    pt["ema_end"] = c.pretrain.ema_end;
    pt["batch_size"] = c.pretrain.batch_size;
    o["pretrain"] = pt;
    json h;
    h["epochs"] = c.heads.epochs;
    h["lr"] = c.heads.lr;
    h["weight_decay"] = c.heads.weight_decay;
    h["loc_aux"] = c.heads.loc_aux;
    h["loc_history"] = c.heads.loc_history;
    h["rf_history"] = c.heads.rf_history;
    h["untrained_backbone"] = c.heads.untrained_backbone;
    o["heads"] = h;
    json e;
    e["lda_views"] = c.eval.lda_views;
    e["lda_jitter"] = c.eval.lda_jitter;
    o["eval"] = e;
    json a;
    a["drop_modalities"] = c.drop_modalities;
    json cells = json::array();
    for (const auto& cell : c.ablation_cells) {
        json jc;
        jc["name"] = cell.name;
        jc["overrides"] = cell.overrides;
        cells.push_back(jc);
    }
    a["cells"] = cells;
    o["ablation"] = a;
    json paths;
    paths["dataset"] = c.paths.dataset;
    paths["backbone"] = c.paths.backbone;
    paths["heads"] = c.paths.heads;
    paths["out"] = c.paths.out;
    o["paths"] = paths;
    return o;
}

std::map<std::string, uint64_t> resolve_seeds(uint64_t master) {
    std::map<std::string, uint64_t> m;
    for (const char* stage : {"scenario", "split", "pretrain", "heads", "eval", "init"})
        m[stage] = hash64(master, stage);
    return m;
}

} // namespace jmsac::cfg
