#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace jmsac::sim {

using cplx = std::complex<double>;

// ULA steering codebook. Rows are unit-norm phase-progression beams on a
// strictly increasing azimuth grid.
struct BeamCodebook {
    int n_ant = 32;
    int n_beams = 64;
    double wavelength = 0.005;     // meters
    double spacing = 0.0025;       // meters, lambda/2
    std::vector<double> azimuths;  // radians, size K
    std::vector<cplx> steering;    // K x N_Ant row-major
};

// One propagation path: complex gain and departure angle.
struct Path {
    cplx gain;
    double aod = 0.0;  // radians
};

BeamCodebook build_codebook(int n_ant, int n_beams, double wavelength, double spacing,
                            double az_min_rad, double az_max_rad);

// Unit-norm ULA response at angle theta.
std::vector<cplx> array_response(const BeamCodebook& cb, double theta);

// h = sqrt(N/L) * sum_l alpha_l a(theta_l).
std::vector<cplx> channel_realization(const BeamCodebook& cb, const std::vector<Path>& paths);

// Per-beam linear power p_tx |h^H w_k|^2 + noise_floor, and its dB image
// 10 log10(max(p, floor)). Returns {linear, dB}.
struct RsrpScan {
    std::vector<double> linear;
    std::vector<double> db;
};
RsrpScan rsrp_scan(const BeamCodebook& cb, const std::vector<cplx>& h, double p_tx,
                   double noise_floor, double db_floor_linear);

// Argmax with ties broken toward the lowest index.
int optimal_beam(const std::vector<double>& spectrum);

} // namespace jmsac::sim
