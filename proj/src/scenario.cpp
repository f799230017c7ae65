#include "jmsac/scenario.hpp"

#include <cmath>
#include <stdexcept>

namespace jmsac::sim {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLightSpeed = 299792458.0;

double deg2rad(double d) { return d * kPi / 180.0; }

void fill_rect(TensorF& img, int n, double px0, double py0, double px1, double py1, float r,
               float g, float b) {
    const int x0 = std::max(0, static_cast<int>(std::floor(px0)));
    const int y0 = std::max(0, static_cast<int>(std::floor(py0)));
    const int x1 = std::min(n - 1, static_cast<int>(std::ceil(px1)));
    const int y1 = std::min(n - 1, static_cast<int>(std::ceil(py1)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            img.at({0, y, x}) = r;
            img.at({1, y, x}) = g;
            img.at({2, y, x}) = b;
        }
}

} // namespace

bool segment_intersects_box(const std::array<double, 2>& a, const std::array<double, 2>& b,
                            const Obstacle& box) {
    // Liang-Barsky clip of segment a->b against the rectangle slab bounds.
    double t0 = 0.0, t1 = 1.0;
    const double d[2] = {b[0] - a[0], b[1] - a[1]};
    const double lo[2] = {box.cx - box.half_x, box.cy - box.half_y};
    const double hi[2] = {box.cx + box.half_x, box.cy + box.half_y};
    for (int i = 0; i < 2; ++i) {
        if (std::abs(d[i]) < 1e-12) {
            if (a[i] < lo[i] || a[i] > hi[i]) return false;
        } else {
            double ta = (lo[i] - a[i]) / d[i];
            double tb = (hi[i] - a[i]) / d[i];
            if (ta > tb) std::swap(ta, tb);
            t0 = std::max(t0, ta);
            t1 = std::min(t1, tb);
            if (t0 > t1) return false;
        }
    }
    return true;
}

double azimuth_of(const std::array<double, 2>& pos) { return std::atan2(pos[0], pos[1]); }

BeamCodebook make_codebook(const ScenarioConfig& cfg) {
    const double lambda = kLightSpeed / cfg.carrier_hz;
    return build_codebook(cfg.n_ant, cfg.n_beams, lambda, lambda / 2.0,
                          -deg2rad(cfg.az_span_deg), deg2rad(cfg.az_span_deg));
}

Sequence simulate_trajectory(const ScenarioConfig& cfg, int n_frames, uint64_t seed) {
    if (n_frames < 2) throw std::invalid_argument("simulate_trajectory: needs T >= 2");
    Rng rng(seed);
    Sequence seq;

    // Obstacle layout along the near side of the corridor.
    for (int i = 0; i < cfg.n_obstacles; ++i) {
        Obstacle o;
        o.cx = rng.uniform(cfg.x_min * 0.7, cfg.x_max * 0.7);
        o.cy = rng.uniform(cfg.street_y_min * 0.35, cfg.street_y_min * 0.85);
        o.half_x = rng.uniform(1.5, 3.5);
        o.half_y = rng.uniform(1.0, 2.5);
        o.height = rng.uniform(3.0, 6.0);
        seq.obstacles.push_back(o);
    }

    const double lambda = kLightSpeed / cfg.carrier_hz;
    const bool rightward = rng.uniform() < 0.5;
    const double speed = rng.uniform(cfg.speed_min, cfg.speed_max);
    std::array<double, 2> anchor = {rng.uniform(cfg.x_min * 0.9, cfg.x_max * 0.9),
                                    rng.uniform(cfg.street_y_min, cfg.street_y_max)};
    std::array<double, 2> vel = {rightward ? speed : -speed, 0.0};
    int anchor_t = 0;
    int stop_until = -1;

    for (int t = 0; t < n_frames; ++t) {
        // Event sampling re-anchors the piecewise constant-velocity motion.
        if (t > 0) {
            const std::array<double, 2> prev = seq.states.back().pos;
            bool event = false;
            if (t <= stop_until) {
                // keep stopped
            } else if (rng.uniform() < cfg.stop_prob) {
                anchor = prev;
                anchor_t = t - 1;
                vel = {0.0, 0.0};
                stop_until = t + static_cast<int>(rng.range(1, 3));
                event = true;
            } else if (rng.uniform() < cfg.turn_prob) {
                const double ang = rng.uniform(deg2rad(20), deg2rad(60)) * (rng.uniform() < 0.5 ? 1 : -1);
                const double c = std::cos(ang), s = std::sin(ang);
                const std::array<double, 2> nv = {vel[0] * c - vel[1] * s, vel[0] * s + vel[1] * c};
                anchor = prev;
                anchor_t = t - 1;
                vel = nv;
                event = true;
            } else if (stop_until == t - 1 && vel[0] == 0.0 && vel[1] == 0.0) {
                anchor = prev;
                anchor_t = t - 1;
                vel = {rightward ? speed : -speed, 0.0};
                event = true;
            }
            // Keep the UE inside the corridor: reflect the lateral component.
            const double next_y = anchor[1] + (t - anchor_t) * cfg.dt * vel[1];
            if (!event && (next_y < cfg.street_y_min || next_y > cfg.street_y_max)) {
                anchor = prev;
                anchor_t = t - 1;
                vel[1] = -vel[1];
            }
        }

        SceneState st;
        st.t = t;
        st.pos = {anchor[0] + (t - anchor_t) * cfg.dt * vel[0],
                  anchor[1] + (t - anchor_t) * cfg.dt * vel[1]};
        st.vel = vel;
        if (std::abs(st.pos[0]) < 1e-9 && std::abs(st.pos[1]) < 1e-9)
            throw std::runtime_error("simulate_trajectory: degenerate geometry, UE at BS origin");

        const double r = std::hypot(st.pos[0], st.pos[1]);
        st.los_blocked = false;
        for (const auto& o : seq.obstacles)
            if (segment_intersects_box({0.0, 0.0}, st.pos, o)) st.los_blocked = true;

        // LoS path, attenuated under blockage; phase tracks path length.
        {
            Path p;
            const double amp = cfg.path_gain_ref / std::max(r, 1.0) *
                               (st.los_blocked ? cfg.blockage_atten : 1.0);
            const double ph = -2.0 * kPi * r / lambda;
            p.gain = cplx(amp * std::cos(ph), amp * std::sin(ph));
            p.aod = azimuth_of(st.pos);
            st.paths.push_back(p);
        }
        // NLoS single-bounce reflections off obstacle centers.
        for (const auto& o : seq.obstacles) {
            if (o.cy <= 1.0) continue;
            const double r1 = std::hypot(o.cx, o.cy);
            const double r2 = std::hypot(st.pos[0] - o.cx, st.pos[1] - o.cy);
            const double len = r1 + r2;
            Path p;
            const double amp = cfg.path_gain_ref * cfg.reflect_coef / std::max(len, 1.0);
            const double ph = -2.0 * kPi * len / lambda;
            p.gain = cplx(amp * std::cos(ph), amp * std::sin(ph));
            p.aod = azimuth_of({o.cx, o.cy});
            st.paths.push_back(p);
        }
        seq.states.push_back(std::move(st));
    }
    return seq;
}

MultimodalFrame render_sensors(const SceneState& s, const std::vector<Obstacle>& obstacles,
                               const ScenarioConfig& cfg, const BeamCodebook& cb, Rng& rng) {
    MultimodalFrame f;
    f.pos_true = s.pos;

    // Top view raster: x across columns, y toward the top; fixed palette.
    const int n = cfg.image_size;
    f.image = TensorF({3, n, n});
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            f.image.at({0, y, x}) = 0.15f;
            f.image.at({1, y, x}) = 0.20f;
            f.image.at({2, y, x}) = 0.15f;
        }
    const double wx0 = cfg.x_min, wx1 = cfg.x_max;
    const double wy0 = 0.0, wy1 = cfg.x_max - cfg.x_min > 0 ? (cfg.x_max - cfg.x_min) / 2.0 : 60.0;
    auto px = [&](double wx) { return (wx - wx0) / (wx1 - wx0) * (n - 1); };
    auto py = [&](double wy) { return (1.0 - (wy - wy0) / (wy1 - wy0)) * (n - 1); };
    fill_rect(f.image, n, 0, py(cfg.street_y_max), n - 1, py(cfg.street_y_min), 0.30f, 0.30f, 0.32f);
    for (const auto& o : obstacles)
        fill_rect(f.image, n, px(o.cx - o.half_x), py(o.cy + o.half_y), px(o.cx + o.half_x),
                  py(o.cy - o.half_y), 0.50f, 0.10f, 0.10f);
    fill_rect(f.image, n, px(s.pos[0] - 2.0), py(s.pos[1] + 1.0), px(s.pos[0] + 2.0),
              py(s.pos[1] - 1.0), 0.90f, 0.80f, 0.20f);

    // FMCW IF cube: one tone per scatterer; beat phase advances with range,
    // inter-antenna phase with sin(azimuth) at half-wavelength spacing.
    struct Scat {
        double r, az, amp;
    };
    std::vector<Scat> scats;
    {
        const double r = std::hypot(s.pos[0], s.pos[1]);
        scats.push_back({r, azimuth_of(s.pos), cfg.radar_amp_ref / std::max(r * r, 1.0)});
        for (const auto& o : obstacles) {
            const double ro = std::hypot(o.cx, o.cy);
            scats.push_back(
                {ro, azimuth_of({o.cx, o.cy}), 0.5 * cfg.radar_amp_ref / std::max(ro * ro, 1.0)});
        }
    }
    f.radar_if.n_rx = cfg.radar_n_rx;
    f.radar_if.n_chirp = cfg.radar_n_chirp;
    f.radar_if.n_adc = cfg.radar_n_adc;
    f.radar_if.data.assign(
        static_cast<size_t>(cfg.radar_n_rx) * cfg.radar_n_chirp * cfg.radar_n_adc, {0.0, 0.0});
    const double dr = cfg.radar_range_max / static_cast<double>(cfg.radar_n_adc);
    for (int a = 0; a < cfg.radar_n_rx; ++a)
        for (int c = 0; c < cfg.radar_n_chirp; ++c)
            for (int m = 0; m < cfg.radar_n_adc; ++m) {
                cplx v(0.0, 0.0);
                for (const auto& sc : scats) {
                    const double beat = 2.0 * kPi * (sc.r / dr) * m / cfg.radar_n_adc;
                    const double ant = kPi * std::sin(sc.az) * a;
                    v += sc.amp * cplx(std::cos(beat + ant), std::sin(beat + ant));
                }
                v += cplx(rng.gaussian(0.0, cfg.radar_noise), rng.gaussian(0.0, cfg.radar_noise));
                f.radar_if.at(a, c, m) = v;
            }

    // LiDAR sweep: nearest hit among ground plane, obstacles and the UE box.
    const double fov_up = deg2rad(cfg.lidar_fov_up_deg);
    const double fov_down = deg2rad(cfg.lidar_fov_down_deg);
    for (int vi = 0; vi < cfg.lidar_rays_v; ++vi) {
        const double pitch =
            fov_up + (fov_down - fov_up) * (vi + 0.5) / static_cast<double>(cfg.lidar_rays_v);
        for (int hi = 0; hi < cfg.lidar_rays_h; ++hi) {
            const double yaw = -kPi + 2.0 * kPi * (hi + 0.5) / static_cast<double>(cfg.lidar_rays_h);
            const double dx = std::cos(pitch) * std::cos(yaw);
            const double dy = std::cos(pitch) * std::sin(yaw);
            const double dz = std::sin(pitch);
            double best_t = cfg.lidar_range_max + 1.0;
            // ground plane z = -lidar_height
            if (dz < -1e-9) best_t = std::min(best_t, -cfg.lidar_height / dz);
            auto hit_box = [&](double bx0, double bx1, double by0, double by1, double bz0,
                               double bz1) {
                double t0 = 1e-6, t1 = cfg.lidar_range_max;
                const double o[3] = {0.0, 0.0, 0.0};
                const double d[3] = {dx, dy, dz};
                const double lo[3] = {bx0, by0, bz0};
                const double hi2[3] = {bx1, by1, bz1};
                for (int i = 0; i < 3; ++i) {
                    if (std::abs(d[i]) < 1e-12) {
                        if (o[i] < lo[i] || o[i] > hi2[i]) return;
                    } else {
                        double ta = (lo[i] - o[i]) / d[i];
                        double tb = (hi2[i] - o[i]) / d[i];
                        if (ta > tb) std::swap(ta, tb);
                        t0 = std::max(t0, ta);
                        t1 = std::min(t1, tb);
                        if (t0 > t1) return;
                    }
                }
                best_t = std::min(best_t, t0);
            };
            for (const auto& o : obstacles)
                hit_box(o.cx - o.half_x, o.cx + o.half_x, o.cy - o.half_y, o.cy + o.half_y,
                        -cfg.lidar_height, o.height - cfg.lidar_height);
            hit_box(s.pos[0] - 2.0, s.pos[0] + 2.0, s.pos[1] - 1.0, s.pos[1] + 1.0,
                    -cfg.lidar_height, 1.6 - cfg.lidar_height);
            if (best_t <= cfg.lidar_range_max)
                f.lidar_points.push_back({best_t * dx, best_t * dy, best_t * dz});
        }
    }

    // GPS: meters of noise applied in the local frame, then inverse-projected.
    {
        const std::array<double, 2> noisy = {s.pos[0] + rng.gaussian(0.0, cfg.gps_sigma_m),
                                             s.pos[1] + rng.gaussian(0.0, cfg.gps_sigma_m)};
        f.gps = prep::gps_inverse_projection(noisy, cfg.bs_lonlat);
    }

    // RF scan and labels from the geometric channel.
    {
        const auto h = channel_realization(cb, s.paths);
        const auto scan = rsrp_scan(cb, h, cfg.p_tx, cfg.noise_floor, cfg.db_floor);
        f.spec_db = scan.db;
        f.rf_db = scan.db;
        f.best_beam = optimal_beam(scan.linear);
    }
    return f;
}

} // namespace jmsac::sim
