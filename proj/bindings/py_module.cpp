#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "jmsac/codebook.hpp"
#include "jmsac/config.hpp"
#include "jmsac/dataset.hpp"
#include "jmsac/losses.hpp"
#include "jmsac/masks.hpp"
#include "jmsac/metrics.hpp"
#include "jmsac/pipeline.hpp"
#include "jmsac/preprocess.hpp"
#include "jmsac/version.hpp"

namespace py = pybind11;
using namespace jmsac;

namespace {

TensorD tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Shape shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
    TensorD t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data());
    return t;
}

py::array_t<float> array_from_tensor(const TensorF& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> a(shape);
    std::copy(t.data(), t.data() + t.numel(), a.mutable_data());
    return a;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Multimodal masked-latent pretraining pipeline: core operations";
    m.attr("__version__") = kBuildId;

    m.def("hash64", [](uint64_t master, const std::string& name) { return hash64(master, name); },
          py::arg("master"), py::arg("name"));

    m.def("smooth_l1",
          [](std::vector<double> pred, std::vector<double> target) {
              return smooth_l1(pred, target);
          },
          py::arg("pred"), py::arg("target"));
    m.def("cross_entropy",
          [](std::vector<double> logits, std::vector<double> onehot) {
              return cross_entropy(logits, onehot);
          },
          py::arg("logits"), py::arg("target_onehot"));

    m.def("gps_local_projection",
          [](std::pair<double, double> gps, std::pair<double, double> bs, double r_e) {
              const auto p = prep::gps_local_projection({gps.first, gps.second},
                                                        {bs.first, bs.second}, r_e);
              return std::make_pair(p[0], p[1]);
          },
          py::arg("gps"), py::arg("bs"), py::arg("earth_radius_m") = 6371000.0);
    m.def("gps_inverse_projection",
          [](std::pair<double, double> local, std::pair<double, double> bs, double r_e) {
              const auto p = prep::gps_inverse_projection({local.first, local.second},
                                                          {bs.first, bs.second}, r_e);
              return std::make_pair(p[0], p[1]);
          },
          py::arg("local_m"), py::arg("bs"), py::arg("earth_radius_m") = 6371000.0);

    m.def("lidar_depth_projection",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pts, int h,
             int w, double f_up_deg, double f_down_deg, double d_max) {
              if (pts.ndim() != 2 || pts.shape(1) != 3)
                  throw std::invalid_argument("points must be [N, 3]");
              std::vector<std::array<double, 3>> v(static_cast<size_t>(pts.shape(0)));
              for (py::ssize_t i = 0; i < pts.shape(0); ++i)
                  v[static_cast<size_t>(i)] = {pts.at(i, 0), pts.at(i, 1), pts.at(i, 2)};
              const double deg = 3.14159265358979323846 / 180.0;
              return array_from_tensor(
                  prep::lidar_depth_projection(v, h, w, f_up_deg * deg, f_down_deg * deg, d_max));
          },
          py::arg("points"), py::arg("height") = 64, py::arg("width") = 256,
          py::arg("f_up_deg") = 15.0, py::arg("f_down_deg") = -15.0, py::arg("d_max") = 100.0);

    m.def("radar_range_angle",
          [](const py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>& cube,
             int dft_size, bool clutter_removal) {
              if (cube.ndim() != 3) throw std::invalid_argument("cube must be [rx, chirp, adc]");
              prep::RadarCube c;
              c.n_rx = static_cast<int>(cube.shape(0));
              c.n_chirp = static_cast<int>(cube.shape(1));
              c.n_adc = static_cast<int>(cube.shape(2));
              c.data.assign(cube.data(), cube.data() + cube.size());
              return array_from_tensor(prep::radar_range_angle(c, dft_size, clutter_removal));
          },
          py::arg("cube"), py::arg("dft_size") = 64, py::arg("clutter_removal") = true);

    m.def("build_codebook",
          [](int n_ant, int k, double wavelength, double spacing, double az_min_deg,
             double az_max_deg) {
              const double deg = 3.14159265358979323846 / 180.0;
              const auto cb = sim::build_codebook(n_ant, k, wavelength, spacing, az_min_deg * deg,
                                                  az_max_deg * deg);
              py::array_t<std::complex<double>> w({k, n_ant});
              std::copy(cb.steering.begin(), cb.steering.end(), w.mutable_data());
              py::array_t<double> az(k);
              std::copy(cb.azimuths.begin(), cb.azimuths.end(), az.mutable_data());
              return py::make_tuple(w, az);
          },
          py::arg("n_ant"), py::arg("k"), py::arg("wavelength") = 0.005,
          py::arg("spacing") = 0.0025, py::arg("az_min_deg") = -60.0, py::arg("az_max_deg") = 60.0);

    m.def("rsrp_scan",
          [](const py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>& h,
             int n_ant, int k, double wavelength, double spacing, double az_min_deg,
             double az_max_deg, double p_tx, double noise_floor, double db_floor) {
              const double deg = 3.14159265358979323846 / 180.0;
              const auto cb = sim::build_codebook(n_ant, k, wavelength, spacing, az_min_deg * deg,
                                                  az_max_deg * deg);
              std::vector<sim::cplx> hv(h.data(), h.data() + h.size());
              const auto scan = sim::rsrp_scan(cb, hv, p_tx, noise_floor, db_floor);
              return py::make_tuple(scan.linear, scan.db, sim::optimal_beam(scan.linear));
          },
          py::arg("h"), py::arg("n_ant"), py::arg("k"), py::arg("wavelength") = 0.005,
          py::arg("spacing") = 0.0025, py::arg("az_min_deg") = -60.0, py::arg("az_max_deg") = 60.0,
          py::arg("p_tx") = 1.0, py::arg("noise_floor") = 0.0, py::arg("db_floor") = 1e-18);

    m.def("optimal_beam", [](std::vector<double> spectrum) { return sim::optimal_beam(spectrum); },
          py::arg("spectrum"));

    m.def("rankme",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& s) {
              bool deg = false;
              const double r = metrics::rankme(tensor_from_array(s), &deg);
              return py::make_tuple(r, deg);
          },
          py::arg("representations"));
    m.def("lda_rank",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& views,
             double ridge) {
              bool deg = false;
              const double r = metrics::lda_rank(tensor_from_array(views), ridge, &deg);
              return py::make_tuple(r, deg);
          },
          py::arg("views"), py::arg("ridge_eps") = 1e-6);
    m.def("ade_fde",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pred,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& truth) {
              const auto r = metrics::ade_fde(tensor_from_array(pred), tensor_from_array(truth));
              return py::make_tuple(r.ade, r.fde);
          },
          py::arg("pred"), py::arg("truth"));
    m.def("topn_accuracy",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits,
             std::vector<int> labels, int n) {
              return metrics::topn_accuracy(tensor_from_array(logits), labels, n);
          },
          py::arg("logits"), py::arg("labels"), py::arg("n") = 1);
    m.def("rmse_mae",
          [](std::vector<double> pred, std::vector<double> truth) {
              const auto r = metrics::rmse_mae(pred, truth);
              return py::make_tuple(r.rmse, r.mae);
          },
          py::arg("pred"), py::arg("truth"));
    m.def("l1_rsrp_diff",
          [](std::vector<int> pred_beams, std::vector<int> true_beams,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& spectra_db) {
              const auto r =
                  metrics::l1_rsrp_diff(pred_beams, true_beams, tensor_from_array(spectra_db));
              return py::make_tuple(r.mean, r.mismatch_hist);
          },
          py::arg("pred_beams"), py::arg("true_beams"), py::arg("spectra_db"));

    m.def("sample_mask",
          [](const std::string& pattern, int t_total, double rho, uint64_t seed,
             const std::vector<std::string>& drop) {
              const auto active = active_modalities(drop);
              const auto layout = TokenLayout::make(t_total, active, default_token_counts(active));
              Rng rng(seed);
              const auto spec = sample_pattern_mask(mask_pattern_from_string(pattern), layout, rho, rng);
              py::dict d;
              d["mask_idx"] = spec.mask_idx;
              d["keep_idx"] = spec.keep_idx;
              d["masked_frames"] = spec.masked_frames;
              d["total_tokens"] = layout.total;
              return d;
          },
          py::arg("pattern"), py::arg("t_total") = 13, py::arg("rho") = 0.5, py::arg("seed") = 0,
          py::arg("drop_modalities") = std::vector<std::string>{});

    m.def("generate_dataset",
          [](const std::string& config_json, const std::string& out_dir) {
              const auto cfg = cfg::parse_config(nlohmann::json::parse(config_json));
              pipeline::run_generate(cfg, out_dir);
          },
          py::arg("config_json"), py::arg("out_dir"));
}
