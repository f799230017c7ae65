#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "jmsac/scenario.hpp"

namespace jmsac::cfg {

struct PreprocessConfig {
    int vision_size = 224;
    std::array<float, 3> vision_mean = {0.485f, 0.456f, 0.406f};
    std::array<float, 3> vision_std = {0.229f, 0.224f, 0.225f};
    int radar_dft = 64;
    int lidar_h = 64;
    int lidar_w = 256;
    double lidar_fov_up_deg = 15.0;
    double lidar_fov_down_deg = -15.0;
    double lidar_d_max = 100.0;
    double earth_radius_m = 6371000.0;
};

struct ModelConfig {
    int dim = 128;
    int depth = 4;
    int heads = 4;
    int ffn_mult = 4;
    int predictor_depth = 2;
    std::array<int, 3> vision_channels = {16, 32, 64};
    std::array<int, 2> spatial_channels = {8, 16};
    int gru_hidden = 64;
    // Pooling set for the predictive latent state; empty = every modality.
    std::vector<std::string> pool_modalities;
};

struct PretrainConfig {
    double rho = 0.5;
    std::string pattern = "temporal-block";
    int epochs = 100;
    double lr = 3e-4;
    double weight_decay = 0.05;
    double ema_start = 0.996;
    double ema_end = 1.0;
    int batch_size = 8;
};

struct HeadTrainConfig {
    int epochs = 30;
    double lr = 1e-4;
    double weight_decay = 1e-2;
    bool loc_aux = true;
    bool loc_history = true;
    bool rf_history = true;
    bool untrained_backbone = false;
};

struct EvalConfig {
    int lda_views = 4;
    double lda_jitter = 0.05;
};

struct AblationCell {
    std::string name;
    nlohmann::json overrides;
};

struct DatasetGenConfig {
    int sequences = 10;
    int frames_per_sequence = 25;
    double train_fraction = 0.7;
};

struct Paths {
    std::string dataset;
    std::string backbone;
    std::string heads;
    std::string out;
};

struct RunConfig {
    uint64_t seed = 1;
    sim::ScenarioConfig scenario;
    DatasetGenConfig dataset;
    PreprocessConfig preprocess;
    ModelConfig model;
    PretrainConfig pretrain;
    HeadTrainConfig heads;
    EvalConfig eval;
    std::vector<std::string> drop_modalities;
    std::vector<AblationCell> ablation_cells;
    Paths paths;

    std::string config_hash;  // hash of the resolved JSON, hex
};

// Strict parse: unknown keys are rejected, T = T_Hist + T_Pred enforced,
// value ranges validated. The parsed document is re-serialized canonically
// and hashed into config_hash.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

// Applies a partial override document (recursive merge) then re-validates.
RunConfig apply_overrides(const RunConfig& base, const nlohmann::json& overrides);

// Fully-resolved canonical JSON for the given config.
nlohmann::json to_json(const RunConfig& c);

// Stage seed derivation; the map is echoed into output manifests.
std::map<std::string, uint64_t> resolve_seeds(uint64_t master);

} // namespace jmsac::cfg
