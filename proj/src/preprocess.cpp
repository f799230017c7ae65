#include "jmsac/preprocess.hpp"

#include <cmath>
#include <stdexcept>

namespace jmsac::prep {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TensorF bilinear_resize(const TensorF& img, int64_t oh, int64_t ow) {
    if (img.rank() != 3) throw std::invalid_argument("resize expects [C,H,W]");
    const int64_t c = img.extent(0), h = img.extent(1), w = img.extent(2);
    TensorF out({c, oh, ow});
    const double sy = static_cast<double>(h) / static_cast<double>(oh);
    const double sx = static_cast<double>(w) / static_cast<double>(ow);
    for (int64_t i = 0; i < oh; ++i) {
        double fy = (static_cast<double>(i) + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(h - 1));
        const int64_t y0 = static_cast<int64_t>(fy);
        const int64_t y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (int64_t j = 0; j < ow; ++j) {
            double fx = (static_cast<double>(j) + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<double>(w - 1));
            const int64_t x0 = static_cast<int64_t>(fx);
            const int64_t x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - static_cast<double>(x0);
            for (int64_t ch = 0; ch < c; ++ch) {
                const double v00 = img.at({ch, y0, x0});
                const double v01 = img.at({ch, y0, x1});
                const double v10 = img.at({ch, y1, x0});
                const double v11 = img.at({ch, y1, x1});
                out.at({ch, i, j}) = static_cast<float>((1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                                                        wy * ((1.0 - wx) * v10 + wx * v11));
            }
        }
    }
    return out;
}

TensorF preprocess_vision(const TensorF& image, int64_t out_size, const std::array<float, 3>& mean,
                          const std::array<float, 3>& stddev) {
    if (image.rank() != 3 || image.extent(0) != 3)
        throw std::invalid_argument("preprocess_vision expects a 3-channel image");
    const int64_t h = image.extent(1), w = image.extent(2);
    const TensorF* src = &image;
    TensorF cropped;
    if (h != w) {
        const int64_t side = std::min(h, w);
        const int64_t y0 = (h - side) / 2, x0 = (w - side) / 2;
        cropped = TensorF({3, side, side});
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t i = 0; i < side; ++i)
                for (int64_t j = 0; j < side; ++j)
                    cropped.at({c, i, j}) = image.at({c, y0 + i, x0 + j});
        src = &cropped;
    }
    TensorF resized = (src->extent(1) == out_size && src->extent(2) == out_size)
                          ? *src
                          : bilinear_resize(*src, out_size, out_size);
    for (int64_t c = 0; c < 3; ++c) {
        const float mu = mean[static_cast<size_t>(c)];
        const float inv = 1.0f / stddev[static_cast<size_t>(c)];
        float* p = resized.data() + c * out_size * out_size;
        for (int64_t i = 0; i < out_size * out_size; ++i) p[i] = (p[i] - mu) * inv;
    }
    return resized;
}

TensorF radar_range_angle(const RadarCube& cube, int dft_size, bool clutter_removal) {
    if (cube.n_rx < 2) throw std::invalid_argument("radar_range_angle: needs N_rx >= 2");
    if (cube.n_chirp < 1) throw std::invalid_argument("radar_range_angle: zero chirps");
    const int n = dft_size;
    using cd = std::complex<double>;
    // Precomputed twiddles for the naive DFT; sizes are small (<= 64 default).
    std::vector<cd> tw(static_cast<size_t>(n) * n);
    for (int k = 0; k < n; ++k)
        for (int m = 0; m < n; ++m) {
            const double ang = -2.0 * kPi * k * m / n;
            tw[static_cast<size_t>(k) * n + m] = cd(std::cos(ang), std::sin(ang));
        }
    TensorF out({static_cast<int64_t>(n), static_cast<int64_t>(n)});
    std::vector<cd> range_ft(static_cast<size_t>(cube.n_rx) * n);
    std::vector<cd> col(static_cast<size_t>(n));
    const int n_fast = std::min(cube.n_adc, n);
    const int n_ant = std::min(cube.n_rx, n);
    for (int c = 0; c < cube.n_chirp; ++c) {
        // Fast-time DFT per antenna.
        for (int a = 0; a < cube.n_rx; ++a)
            for (int k = 0; k < n; ++k) {
                cd acc(0.0, 0.0);
                for (int m = 0; m < n_fast; ++m) acc += cube.at(a, c, m) * tw[static_cast<size_t>(k) * n + m];
                range_ft[static_cast<size_t>(a) * n + k] = acc;
            }
        // Across-antenna mean removal per range bin.
        if (clutter_removal) {
            for (int k = 0; k < n; ++k) {
                cd mean(0.0, 0.0);
                for (int a = 0; a < cube.n_rx; ++a) mean += range_ft[static_cast<size_t>(a) * n + k];
                mean /= static_cast<double>(cube.n_rx);
                for (int a = 0; a < cube.n_rx; ++a) range_ft[static_cast<size_t>(a) * n + k] -= mean;
            }
        }
        // Angle DFT across antennas, shifted so angle bin n/2 is boresight.
        for (int k = 0; k < n; ++k) {
            for (int i = 0; i < n; ++i) {
                cd acc(0.0, 0.0);
                for (int a = 0; a < n_ant; ++a)
                    acc += range_ft[static_cast<size_t>(a) * n + k] * tw[static_cast<size_t>(i) * n + a];
                col[static_cast<size_t>(i)] = acc;
            }
            for (int i = 0; i < n; ++i) {
                const int shifted = (i + n / 2) % n;
                out.at({shifted, k}) += static_cast<float>(std::abs(col[static_cast<size_t>(i)]));
            }
        }
    }
    const float inv = 1.0f / static_cast<float>(cube.n_chirp);
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= inv;
    return out;
}

TensorF lidar_depth_projection(const std::vector<std::array<double, 3>>& points, int64_t height,
                               int64_t width, double f_up_rad, double f_down_rad, double d_max) {
    if (f_up_rad <= f_down_rad) throw std::invalid_argument("lidar: f_up must exceed f_down");
    TensorF out({1, height, width}, 1.0f);
    for (const auto& p : points) {
        const double r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        if (r <= 0.0 || r > d_max) continue;
        const double yaw = std::atan2(p[1], p[0]);
        const double pitch = std::asin(p[2] / r);
        if (pitch < f_down_rad || pitch > f_up_rad) continue;
        int64_t u = static_cast<int64_t>(std::floor((yaw + kPi) / (2.0 * kPi) * static_cast<double>(width)));
        int64_t v = static_cast<int64_t>(std::floor(
            (1.0 - (pitch - f_down_rad) / (f_up_rad - f_down_rad)) * static_cast<double>(height)));
        u = std::min(std::max<int64_t>(u, 0), width - 1);
        v = std::min(std::max<int64_t>(v, 0), height - 1);
        float& cell = out.at({0, v, u});
        cell = std::min(cell, static_cast<float>(r / d_max));
    }
    return out;
}

std::array<double, 2> gps_local_projection(const std::array<double, 2>& gps,
                                           const std::array<double, 2>& bs, double earth_radius_m) {
    if (std::abs(bs[1]) >= 89.9)
        throw std::invalid_argument("gps projection: reference latitude too close to a pole");
    if (std::abs(gps[1]) >= 90.0) throw std::invalid_argument("gps projection: invalid latitude");
    const double k = kPi * earth_radius_m / 180.0;
    const double clat = std::cos(bs[1] * kPi / 180.0);
    return {k * clat * (gps[0] - bs[0]), k * (gps[1] - bs[1])};
}

std::array<double, 2> gps_inverse_projection(const std::array<double, 2>& local_m,
                                             const std::array<double, 2>& bs,
                                             double earth_radius_m) {
    if (std::abs(bs[1]) >= 89.9)
        throw std::invalid_argument("gps projection: reference latitude too close to a pole");
    const double k = kPi * earth_radius_m / 180.0;
    const double clat = std::cos(bs[1] * kPi / 180.0);
    return {bs[0] + local_m[0] / (k * clat), bs[1] + local_m[1] / k};
}

RfStats compute_rf_stats(std::span<const float> train_db) {
    if (train_db.empty()) throw std::invalid_argument("rf stats: empty training data");
    RfStats s;
    s.min_db = train_db[0];
    s.max_db = train_db[0];
    for (float v : train_db) {
        if (!std::isfinite(v)) throw std::invalid_argument("rf stats: non-finite entry");
        s.min_db = std::min(s.min_db, static_cast<double>(v));
        s.max_db = std::max(s.max_db, static_cast<double>(v));
    }
    s.degenerate = s.max_db == s.min_db;
    return s;
}

float normalize_rf(float v_db, const RfStats& s) {
    if (s.degenerate) return 0.5f;
    return static_cast<float>((v_db - s.min_db) / (s.max_db - s.min_db));
}

float denormalize_rf(float v_norm, const RfStats& s) {
    if (s.degenerate) return static_cast<float>(s.min_db);
    return static_cast<float>(s.min_db + v_norm * (s.max_db - s.min_db));
}

} // namespace jmsac::prep
