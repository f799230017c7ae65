#pragma once

#include <array>
#include <complex>
#include <span>
#include <vector>

#include "jmsac/tensor.hpp"

namespace jmsac::prep {

// Raw FMCW IF samples, [rx][chirp][adc] row-major.
struct RadarCube {
    int n_rx = 0, n_chirp = 0, n_adc = 0;
    std::vector<std::complex<double>> data;

    std::complex<double>& at(int a, int c, int n) {
        return data[(static_cast<size_t>(a) * n_chirp + c) * n_adc + n];
    }
    const std::complex<double>& at(int a, int c, int n) const {
        return data[(static_cast<size_t>(a) * n_chirp + c) * n_adc + n];
    }
};

// Bilinear resize (half-pixel centers), per channel. [C,H,W] -> [C,oh,ow].
TensorF bilinear_resize(const TensorF& img, int64_t oh, int64_t ow);

// Center crop to square, bilinear resize to out x out, then channel-wise
// (x - mean) / std.
TensorF preprocess_vision(const TensorF& image, int64_t out_size, const std::array<float, 3>& mean,
                          const std::array<float, 3>& stddev);

// Range DFT per antenna, across-antenna mean subtraction per range bin,
// angle DFT across antennas (fftshifted so boresight lands in the center
// row), magnitude, chirp average. Output [dft_size, dft_size] = angle x range.
// Inputs shorter than dft_size are zero-padded, longer ones truncated.
TensorF radar_range_angle(const RadarCube& cube, int dft_size, bool clutter_removal = true);

// Spherical depth projection. Pixels keep min(r)/d_max; unfilled pixels are
// 1.0; points beyond d_max or outside the pitch field of view are dropped.
// Output [1, H, W].
TensorF lidar_depth_projection(const std::vector<std::array<double, 3>>& points, int64_t height,
                               int64_t width, double f_up_rad, double f_down_rad, double d_max);

// Equirectangular projection to BS-centered meters; gps and bs are
// (lon, lat) in degrees. Rejects pole-adjacent reference latitudes.
std::array<double, 2> gps_local_projection(const std::array<double, 2>& gps,
                                           const std::array<double, 2>& bs,
                                           double earth_radius_m = 6371000.0);
std::array<double, 2> gps_inverse_projection(const std::array<double, 2>& local_m,
                                             const std::array<double, 2>& bs,
                                             double earth_radius_m = 6371000.0);

// Train-split min-max scaling in the dB domain.
struct RfStats {
    double min_db = 0.0;
    double max_db = 0.0;
    bool degenerate = false;
};

RfStats compute_rf_stats(std::span<const float> train_db);
float normalize_rf(float v_db, const RfStats& s);
float denormalize_rf(float v_norm, const RfStats& s);

} // namespace jmsac::prep
