// Python bindings for the simulator core. Arrays cross as numpy complex128;
// configs and summaries cross as JSON text and are decoded on the Python side.

#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "dcbf/beamform.hpp"
#include "dcbf/estimation.hpp"
#include "dcbf/io.hpp"
#include "dcbf/metrics.hpp"
#include "dcbf/scenario.hpp"
#include "dcbf/timesync.hpp"
#include "dcbf/waveform.hpp"

namespace py = pybind11;
using namespace dcbf;

namespace {

using CArray = py::array_t<cplx, py::array::c_style | py::array::forcecast>;

CVec to_cvec(const CArray& a) {
  if (a.ndim() != 1) throw py::value_error("expected a 1-D complex array");
  return CVec(a.data(), a.data() + a.size());
}

CArray to_array(const CVec& v) {
  CArray out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

ComplexSignal to_signal(const CArray& a, double fs) { return {to_cvec(a), fs}; }

MeshConfig mesh_from(const std::string& config_json) {
  if (config_json.empty()) return {};
  return parse_scenario_config(json::parse(config_json)).mesh;
}

py::tuple run(const std::string& config_json) {
  const ScenarioConfig cfg = parse_scenario_config(json::parse(config_json));
  const std::string hash = manifest_hash(to_json(cfg));
  std::vector<CycleRecord> recs;
  {
    py::gil_scoped_release release;
    recs = run_scenario(cfg);
  }
  std::ostringstream csv;
  write_cycles_csv(csv, recs, static_cast<std::size_t>(cfg.mesh.n_nodes), hash);
  return py::make_tuple(csv.str(), summary_json(summarize(cfg, recs), hash).dump(), hash);
}

py::tuple frame(const std::string& kind, int node_id, std::uint64_t payload_seed, const std::string& config_json) {
  FrameKind k;
  if (kind == "rx_source")
    k = FrameKind::RX_BF_SOURCE;
  else if (kind == "interferer")
    k = FrameKind::RX_BF_INTERFERER;
  else if (kind == "tx_node")
    k = FrameKind::TX_BF_NODE;
  else
    throw py::value_error("kind must be rx_source, interferer or tx_node");
  const Frame f = build_frame({k, node_id, 1, payload_seed}, mesh_from(config_json));
  py::list segs;
  for (const auto& s : f.layout.segments) segs.append(py::make_tuple(s.name, s.offset, s.length));
  return py::make_tuple(to_array(f.signal.samples), segs);
}

py::list mmse_weights(const py::array_t<cplx, py::array::c_style | py::array::forcecast>& stacked, const CArray& training,
                      std::size_t n_nodes, std::optional<double> loading, double loading_eps) {
  if (stacked.ndim() != 2) throw py::value_error("stacked delay matrix must be 2-D");
  const auto rows = stacked.shape(0), cols = stacked.shape(1);
  Eigen::MatrixXcd Z(rows, cols);
  for (py::ssize_t r = 0; r < rows; ++r)
    for (py::ssize_t c = 0; c < cols; ++c) Z(r, c) = stacked.at(r, c);
  if (training.size() != cols) throw py::value_error("training length must match the matrix width");
  Eigen::RowVectorXcd s(cols);
  for (py::ssize_t c = 0; c < cols; ++c) s(c) = training.at(c);
  MmseOptions o;
  o.loading = loading;
  o.loading_eps = loading_eps;
  const Beamformer bf = mmse_rx_beamformer(Z, s, n_nodes, o);
  py::list out;
  for (const auto& w : bf.weights) out.append(to_array(w));
  return out;
}

}  // namespace

PYBIND11_MODULE(_dcbf, m) {
  m.doc() = "Distributed coherent beamforming simulator core";
  m.attr("__version__") = DCBF_VERSION;

  m.def("power_gain_bound", &power_gain_bound, py::arg("n_nodes"), py::arg("phi2"));
  m.def("power_gain_bound_db", &power_gain_bound_db, py::arg("n_nodes"), py::arg("phi2"));
  m.def("rx_gain_bound_db", &rx_gain_bound_db, py::arg("n_nodes"), py::arg("phi2"));
  m.def("inr_reduction_bound", &inr_reduction_bound, py::arg("n_nodes"), py::arg("phi2"));

  m.def(
      "link_metrics",
      [](double psin, double pin, double pn) {
        const auto r = link_metrics({psin, pin, pn});
        return py::make_tuple(r.snr_db, r.inr_db, r.sinr_db);
      },
      py::arg("p_sin"), py::arg("p_in"), py::arg("p_n"), "(snr_db, inr_db, sinr_db) from segment powers");

  m.def("run_scenario", &run, py::arg("config_json"), "Returns (cycles_csv, summary_json, manifest_hash)");
  m.def("build_frame", &frame, py::arg("kind"), py::arg("node_id") = 1, py::arg("payload_seed") = 1,
        py::arg("config_json") = "", "Returns (samples, [(name, offset, length), ...])");

  m.def("mmse_rx_weights", &mmse_weights, py::arg("stacked"), py::arg("training"), py::arg("n_nodes"),
        py::arg("loading") = std::nullopt, py::arg("loading_eps") = 1e-3);
  m.def(
      "tx_null_weights",
      [](const CArray& hb, const CArray& hc, double delta) {
        const CVec b = to_cvec(hb), c = to_cvec(hc);
        return to_array(tx_null_beamformer(b, c, delta));
      },
      py::arg("h_b"), py::arg("h_c"), py::arg("delta"));
  m.def(
      "estimate_channel",
      [](const CArray& z, const CArray& ref, std::size_t tau, std::size_t taps, double fs) {
        const auto h = estimate_channel(to_signal(z, fs), to_signal(ref, fs), tau, taps);
        return py::make_tuple(to_array(h.taps), h.residual_power);
      },
      py::arg("z"), py::arg("reference"), py::arg("tau"), py::arg("n_taps"), py::arg("fs") = 2e6);
  m.def(
      "ml_cfo",
      [](const CArray& z, const CArray& ref, std::size_t tau, const std::vector<double>& grid, double fs) {
        const auto e = ml_cfo(to_signal(z, fs), to_signal(ref, fs), tau, grid);
        return py::make_tuple(e.cfo_hz, e.at_boundary);
      },
      py::arg("z"), py::arg("reference"), py::arg("tau"), py::arg("grid"), py::arg("fs") = 2e6);
  m.def("matched_filter", [](const CArray& x) { return to_array(matched_filter({to_cvec(x), 2e6}).samples); });

  m.def("golay_encode", &golay_encode, py::arg("data12"));
  m.def(
      "golay_decode",
      [](std::uint32_t word) -> py::object {
        const auto d = golay_decode(word);
        if (!d) return py::none();
        return py::make_tuple(d->data, d->corrected_errors);
      },
      py::arg("word24"), "(data, corrected_bits) or None when the error is not correctable");

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
}
