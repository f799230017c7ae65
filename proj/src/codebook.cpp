#include "jmsac/codebook.hpp"

#include <cmath>
#include <stdexcept>

namespace jmsac::sim {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

BeamCodebook build_codebook(int n_ant, int n_beams, double wavelength, double spacing,
                            double az_min_rad, double az_max_rad) {
    if (n_ant < 2 || n_beams < 2) throw std::invalid_argument("codebook: N_Ant and K must be >= 2");
    if (wavelength <= 0.0 || spacing <= 0.0)
        throw std::invalid_argument("codebook: wavelength and spacing must be positive");
    if (az_max_rad <= az_min_rad) throw std::invalid_argument("codebook: empty azimuth span");
    BeamCodebook cb;
    cb.n_ant = n_ant;
    cb.n_beams = n_beams;
    cb.wavelength = wavelength;
    cb.spacing = spacing;
    cb.azimuths.resize(static_cast<size_t>(n_beams));
    cb.steering.resize(static_cast<size_t>(n_beams) * n_ant);
    const double norm = 1.0 / std::sqrt(static_cast<double>(n_ant));
    for (int k = 0; k < n_beams; ++k) {
        const double phi = az_min_rad + (az_max_rad - az_min_rad) * k / (n_beams - 1);
        cb.azimuths[static_cast<size_t>(k)] = phi;
        const double inc = 2.0 * kPi / wavelength * spacing * std::sin(phi);
        for (int n = 0; n < n_ant; ++n)
            cb.steering[static_cast<size_t>(k) * n_ant + n] =
                norm * cplx(std::cos(inc * n), std::sin(inc * n));
    }
    return cb;
}

std::vector<cplx> array_response(const BeamCodebook& cb, double theta) {
    std::vector<cplx> a(static_cast<size_t>(cb.n_ant));
    const double norm = 1.0 / std::sqrt(static_cast<double>(cb.n_ant));
    const double inc = 2.0 * kPi / cb.wavelength * cb.spacing * std::sin(theta);
    for (int n = 0; n < cb.n_ant; ++n) a[static_cast<size_t>(n)] = norm * cplx(std::cos(inc * n), std::sin(inc * n));
    return a;
}

std::vector<cplx> channel_realization(const BeamCodebook& cb, const std::vector<Path>& paths) {
    if (paths.empty()) throw std::invalid_argument("channel: empty path set");
    std::vector<cplx> h(static_cast<size_t>(cb.n_ant), cplx(0.0, 0.0));
    const double scale = std::sqrt(static_cast<double>(cb.n_ant) / static_cast<double>(paths.size()));
    for (const Path& p : paths) {
        const auto a = array_response(cb, p.aod);
        for (int n = 0; n < cb.n_ant; ++n) h[static_cast<size_t>(n)] += p.gain * a[static_cast<size_t>(n)];
    }
    for (auto& v : h) v *= scale;
    return h;
}

RsrpScan rsrp_scan(const BeamCodebook& cb, const std::vector<cplx>& h, double p_tx,
                   double noise_floor, double db_floor_linear) {
    if (static_cast<int>(h.size()) != cb.n_ant) throw std::invalid_argument("rsrp: channel size mismatch");
    RsrpScan scan;
    scan.linear.resize(static_cast<size_t>(cb.n_beams));
    scan.db.resize(static_cast<size_t>(cb.n_beams));
    for (int k = 0; k < cb.n_beams; ++k) {
        cplx acc(0.0, 0.0);
        const cplx* w = cb.steering.data() + static_cast<size_t>(k) * cb.n_ant;
        for (int n = 0; n < cb.n_ant; ++n) acc += std::conj(h[static_cast<size_t>(n)]) * w[n];
        const double p = p_tx * std::norm(acc) + noise_floor;
        scan.linear[static_cast<size_t>(k)] = p;
        scan.db[static_cast<size_t>(k)] = 10.0 * std::log10(std::max(p, db_floor_linear));
    }
    return scan;
}

int optimal_beam(const std::vector<double>& spectrum) {
    if (spectrum.empty()) throw std::invalid_argument("optimal_beam: empty spectrum");
    int best = 0;
    for (int k = 1; k < static_cast<int>(spectrum.size()); ++k)
        if (spectrum[static_cast<size_t>(k)] > spectrum[static_cast<size_t>(best)]) best = k;
    return best;
}

} // namespace jmsac::sim
