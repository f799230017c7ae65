#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "jmsac/codebook.hpp"
#include "jmsac/preprocess.hpp"
#include "jmsac/rng.hpp"
#include "jmsac/tensor.hpp"

namespace jmsac::sim {

// Scenario generation knobs. Window structure, codebook geometry, sensor
// emulation and trajectory model; defaults are desk-scale friendly and fully
// overridable from the run config.
struct ScenarioConfig {
    int total_frames = 13;  // T = T_Hist + T_Pred
    int hist_frames = 8;
    int pred_frames = 5;
    double dt = 0.1;  // seconds per frame

    int n_ant = 32;
    int n_beams = 64;
    double carrier_hz = 60e9;
    double az_span_deg = 60.0;  // codebook grid over [-span, +span]

    double p_tx = 1.0;
    double noise_floor = 1e-12;
    double db_floor = 3.981071705534972e-18;  // 10^-17.4
    double path_gain_ref = 20.0;              // |alpha| = ref / r for the LoS path
    double blockage_atten = 0.05;
    double reflect_coef = 0.3;

    int image_size = 256;  // raw render resolution, square
    int radar_n_rx = 8;
    int radar_n_chirp = 4;
    int radar_n_adc = 64;
    double radar_noise = 0.01;
    double radar_range_max = 100.0;  // meters across the range DFT
    double radar_amp_ref = 100.0;    // scatterer amplitude = ref / r^2
    int lidar_rays_v = 64;
    int lidar_rays_h = 256;
    double lidar_height = 2.0;  // sensor height above ground, meters
    double lidar_range_max = 100.0;
    double lidar_fov_up_deg = 15.0;
    double lidar_fov_down_deg = -15.0;
    double gps_sigma_m = 2.0;
    std::array<double, 2> bs_lonlat = {116.0, 40.0};

    double speed_min = 8.0, speed_max = 15.0;  // m/s
    double turn_prob = 0.08, stop_prob = 0.02;
    double street_y_min = 12.0, street_y_max = 28.0;
    double x_min = -60.0, x_max = 60.0;
    int n_obstacles = 2;
};

struct Obstacle {
    double cx = 0.0, cy = 0.0;
    double half_x = 2.0, half_y = 2.0;
    double height = 4.0;
};

struct SceneState {
    int t = 0;
    std::array<double, 2> pos{};  // BS-centered meters, BS at origin
    std::array<double, 2> vel{};
    std::vector<Path> paths;
    bool los_blocked = false;
};

struct Sequence {
    std::vector<SceneState> states;
    std::vector<Obstacle> obstacles;
};

// One time step's raw sensor bundle plus ground-truth labels.
struct MultimodalFrame {
    TensorF image;  // [3, H_raw, W_raw] in [0, 1]
    prep::RadarCube radar_if;
    std::vector<std::array<double, 3>> lidar_points;
    std::array<double, 2> gps{};    // (lon, lat) degrees
    std::vector<double> rf_db;      // K
    std::array<double, 2> pos_true{};
    int best_beam = 0;
    std::vector<double> spec_db;    // K
};

// 2D segment-vs-rectangle test used for blockage; exposed for oracles.
bool segment_intersects_box(const std::array<double, 2>& a, const std::array<double, 2>& b,
                            const Obstacle& box);

// Boresight-relative azimuth of a ground position (array normal is +y).
double azimuth_of(const std::array<double, 2>& pos);

// Piecewise constant-velocity corridor motion with turn/stop events, LoS AoD
// from geometry, NLoS reflections off obstacles, blockage from the
// segment-box test. Deterministic per seed.
Sequence simulate_trajectory(const ScenarioConfig& cfg, int n_frames, uint64_t seed);

// Emulated raw sensors for one scene state.
MultimodalFrame render_sensors(const SceneState& s, const std::vector<Obstacle>& obstacles,
                               const ScenarioConfig& cfg, const BeamCodebook& cb, Rng& rng);

BeamCodebook make_codebook(const ScenarioConfig& cfg);

} // namespace jmsac::sim
