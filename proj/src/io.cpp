// SPDX-License-Identifier: Apache-2.0

#include "dcbf/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace dcbf {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

void read_value(const json& v, const std::string& p, double& out) {
  if (!v.is_number()) fail(p, "expected a number");
  out = v.get<double>();
  if (!std::isfinite(out)) fail(p, "must be finite");
}

void read_value(const json& v, const std::string& p, std::size_t& out) {
  if (!v.is_number_integer() || v.get<long long>() < 0) fail(p, "expected a non-negative integer");
  out = v.get<std::size_t>();
}

void read_value(const json& v, const std::string& p, int& out) {
  if (!v.is_number_integer()) fail(p, "expected an integer");
  out = v.get<int>();
}

void read_value(const json& v, const std::string& p, bool& out) {
  if (!v.is_boolean()) fail(p, "expected true or false");
  out = v.get<bool>();
}

void read_value(const json& v, const std::string& p, std::string& out) {
  if (!v.is_string()) fail(p, "expected a string");
  out = v.get<std::string>();
}

// Visits the keys of one JSON object and rejects anything left unread.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  template <class T>
  bool get(const char* key, T& out) {
    const auto it = j_.find(key);
    if (it == j_.end()) return false;
    seen_.insert(key);
    read_value(*it, at(key), out);
    return true;
  }

  const json* sub(const char* key) {
    const auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  std::string at(const char* key) const { return path_.empty() ? std::string(key) : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(at(it.key().c_str()), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

cplx read_complex(const json& v, const std::string& p) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) fail(p, "expected [re, im]");
  return {v[0].get<double>(), v[1].get<double>()};
}

json complex_json(cplx v) { return json::array({v.real(), v.imag()}); }

void parse_channels(const json& j, const std::string& path, ChannelSpec& c) {
  Fields f(j, path);
  std::string kind;
  if (f.get("kind", kind)) {
    try {
      c.kind = parse_channel_kind(kind);
    } catch (const ConfigError&) {
      fail(f.at("kind"), "unknown channel kind '" + kind + "'");
    }
  }
  f.get("n_taps", c.n_taps);
  f.get("gain", c.gain);
  f.get("max_tof", c.max_tof);
  f.get("walk_var", c.walk_var);
  if (const json* t = f.sub("taps")) {
    const std::string tp = f.at("taps");
    if (!t->is_array()) fail(tp, "expected a list of tap lists");
    c.taps.clear();
    for (std::size_t i = 0; i < t->size(); ++i) {
      const json& link = (*t)[i];
      const std::string lp = tp + "[" + std::to_string(i) + "]";
      if (!link.is_array() || link.empty()) fail(lp, "expected a non-empty list of taps");
      CVec taps;
      for (std::size_t k = 0; k < link.size(); ++k) taps.push_back(read_complex(link[k], lp + "[" + std::to_string(k) + "]"));
      c.taps.push_back(std::move(taps));
    }
  }
  f.finish();
}

json channels_json(const ChannelSpec& c) {
  json j{{"kind", to_string(c.kind)},
         {"n_taps", c.n_taps},
         {"gain", c.gain},
         {"max_tof", c.max_tof},
         {"walk_var", c.walk_var}};
  if (!c.taps.empty()) {
    json t = json::array();
    for (const auto& link : c.taps) {
      json l = json::array();
      for (const auto& v : link) l.push_back(complex_json(v));
      t.push_back(l);
    }
    j["taps"] = t;
  }
  return j;
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return {};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_link(const LinkRecord& l, double LinkMetrics::*field) { return l.valid ? fmt(l.m.*field) : std::string{}; }

}  // namespace

ScenarioConfig parse_scenario_config(const json& j) {
  ScenarioConfig c;
  Fields f(j, "");
  std::string s;
  if (f.get("experiment", s)) {
    try {
      c.experiment = parse_experiment(s);
    } catch (const ConfigError&) {
      fail("experiment", "unknown experiment '" + s + "'");
    }
  }
  f.get("n_cycles", c.n_cycles);
  std::uint64_t seed = c.mesh.seed;
  if (const json* v = f.sub("seed")) {
    if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<long long>() < 0))
      fail("seed", "expected a non-negative integer");
    seed = v->get<std::uint64_t>();
  }
  if (const json* m = f.sub("mesh")) {
    Fields mf(*m, "mesh");
    mf.get("n_nodes", c.mesh.n_nodes);
    mf.get("sample_rate_hz", c.mesh.sample_rate_hz);
    mf.get("bandwidth_hz", c.mesh.bandwidth_hz);
    mf.get("carrier_hz", c.mesh.carrier_hz);
    mf.get("cycle_period_s", c.mesh.cycle_period_s);
    mf.get("amble_len", c.mesh.amble_len);
    mf.get("payload_len", c.mesh.payload_len);
    mf.get("est_integration_len", c.mesh.est_integration_len);
    mf.get("guard_len", c.mesh.guard_len);
    mf.get("rx_frame_len", c.mesh.rx_frame_len);
    mf.get("tx_frame_len", c.mesh.tx_frame_len);
    mf.get("diag_loading_eps", c.mesh.diag_loading_eps);
    mf.finish();
  }
  c.mesh.seed = seed;
  f.get("rx_filter_taps", c.rx_filter_taps);
  f.get("channel_est_taps", c.channel_est_taps);
  if (f.get("covariance", s)) {
    if (s == "FULL")
      c.cov_source = CovarianceSource::FULL;
    else if (s == "INTERFERENCE_ONLY")
      c.cov_source = CovarianceSource::INTERFERENCE_ONLY;
    else
      fail("covariance", "expected FULL or INTERFERENCE_ONLY");
  }
  if (const json* ch = f.sub("channels")) {
    Fields cf(*ch, "channels");
    if (const json* v = cf.sub("source")) parse_channels(*v, "channels.source", c.source_channels);
    if (const json* v = cf.sub("interferer")) parse_channels(*v, "channels.interferer", c.interferer_channels);
    if (const json* v = cf.sub("secondary")) parse_channels(*v, "channels.secondary", c.secondary_channels);
    cf.finish();
  }
  f.get("noise_power", c.noise_power);
  f.get("interferer_power", c.interferer_power);
  f.get("cfo_max_hz", c.cfo_max_hz);
  f.get("shared_mesh_clock", c.shared_mesh_clock);
  f.get("phase_walk_var_per_s", c.phase_walk_var_per_s);
  f.get("terminal_phi2", c.terminal_phi2);
  f.get("ots_jitter_rad", c.ots_jitter_rad);
  f.get("feedback_latency_cycles", c.feedback_latency_cycles);
  f.get("feedback_halt_time_s", c.feedback_halt_time_s);
  f.get("all_ones_until_s", c.all_ones_until_s);
  f.get("genie_channels", c.genie_channels);
  f.get("dc_removal", c.dc_removal);
  if (const json* a = f.sub("acquisition")) {
    Fields af(*a, "acquisition");
    af.get("max_lag", c.max_lag);
    af.get("coarse_cfo_span_hz", c.coarse_cfo_span_hz);
    af.get("coarse_cfo_step_hz", c.coarse_cfo_step_hz);
    af.get("fine_cfo_step_hz", c.fine_cfo_step_hz);
    af.get("detect_threshold", c.detect_threshold);
    af.finish();
  }
  f.finish();
  validate(c);
  return c;
}

json to_json(const ScenarioConfig& c) {
  const MeshConfig& m = c.mesh;
  return json{
      {"experiment", to_string(c.experiment)},
      {"n_cycles", c.n_cycles},
      {"seed", m.seed},
      {"mesh",
       {{"n_nodes", m.n_nodes},
        {"sample_rate_hz", m.sample_rate_hz},
        {"bandwidth_hz", m.bandwidth_hz},
        {"carrier_hz", m.carrier_hz},
        {"cycle_period_s", m.cycle_period_s},
        {"amble_len", m.amble_len},
        {"payload_len", m.payload_len},
        {"est_integration_len", m.est_integration_len},
        {"guard_len", m.guard_len},
        {"rx_frame_len", m.rx_frame_len},
        {"tx_frame_len", m.tx_frame_len},
        {"diag_loading_eps", m.diag_loading_eps}}},
      {"rx_filter_taps", c.rx_filter_taps},
      {"channel_est_taps", c.channel_est_taps},
      {"covariance", c.cov_source == CovarianceSource::FULL ? "FULL" : "INTERFERENCE_ONLY"},
      {"channels",
       {{"source", channels_json(c.source_channels)},
        {"interferer", channels_json(c.interferer_channels)},
        {"secondary", channels_json(c.secondary_channels)}}},
      {"noise_power", c.noise_power},
      {"interferer_power", c.interferer_power},
      {"cfo_max_hz", c.cfo_max_hz},
      {"shared_mesh_clock", c.shared_mesh_clock},
      {"phase_walk_var_per_s", c.phase_walk_var_per_s},
      {"terminal_phi2", c.terminal_phi2},
      {"ots_jitter_rad", c.ots_jitter_rad},
      {"feedback_latency_cycles", c.feedback_latency_cycles},
      {"feedback_halt_time_s", c.feedback_halt_time_s},
      {"all_ones_until_s", c.all_ones_until_s},
      {"genie_channels", c.genie_channels},
      {"dc_removal", c.dc_removal},
      {"acquisition",
       {{"max_lag", c.max_lag},
        {"coarse_cfo_span_hz", c.coarse_cfo_span_hz},
        {"coarse_cfo_step_hz", c.coarse_cfo_step_hz},
        {"fine_cfo_step_hz", c.fine_cfo_step_hz},
        {"detect_threshold", c.detect_threshold}}},
  };
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "': empty path component");
    if (!node->is_object()) throw ConfigError("override '" + key + "': parent is not an object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

json to_json(const Beamformer& bf) {
  json w = json::array();
  for (const auto& filt : bf.weights) {
    json taps = json::array();
    for (const auto& v : filt) taps.push_back(complex_json(v));
    w.push_back(taps);
  }
  return json{{"method", to_string(bf.method)},
              {"delta", bf.loading},
              {"center_delay", bf.center_delay},
              {"source_cycle", bf.source_cycle},
              {"weights", w}};
}

Beamformer beamformer_from_json(const json& j) {
  Beamformer bf;
  Fields f(j, "beamformer");
  std::string method;
  f.get("method", method);
  if (method == "MMSE_RX")
    bf.method = BeamMethod::MMSE_RX;
  else if (method == "STMF")
    bf.method = BeamMethod::STMF;
  else if (method == "TX_NULL")
    bf.method = BeamMethod::TX_NULL;
  else
    fail("beamformer.method", "unknown method '" + method + "'");
  f.get("delta", bf.loading);
  f.get("center_delay", bf.center_delay);
  if (const json* v = f.sub("source_cycle")) {
    if (!v->is_number_integer()) fail("beamformer.source_cycle", "expected an integer");
    bf.source_cycle = v->get<long>();
  }
  if (const json* w = f.sub("weights")) {
    if (!w->is_array()) fail("beamformer.weights", "expected a list");
    for (std::size_t n = 0; n < w->size(); ++n) {
      const std::string p = "beamformer.weights[" + std::to_string(n) + "]";
      if (!(*w)[n].is_array()) fail(p, "expected a list of taps");
      CVec taps;
      for (std::size_t k = 0; k < (*w)[n].size(); ++k) taps.push_back(read_complex((*w)[n][k], p));
      bf.weights.push_back(std::move(taps));
    }
  }
  f.finish();
  return bf;
}

std::string manifest_hash(const json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config.dump())));
  return buf;
}

std::vector<std::string> cycle_csv_columns(std::size_t n_nodes) {
  std::vector<std::string> c{"cycle", "t_s", "warmup", "acq_failed", "post_halt", "bf_source_cycle"};
  auto per_node = [&](const std::string& stem) {
    for (std::size_t n = 1; n <= n_nodes; ++n) c.push_back(stem + "_" + std::to_string(n));
  };
  per_node("siso_snr_db");
  per_node("siso_inr_db");
  per_node("siso_sinr_db");
  for (const char* s : {"siso_mean_snr_db", "siso_mean_inr_db", "bf_snr_db", "bf_inr_db", "bf_sinr_db", "bf_p_sin",
                        "bf_p_in", "bf_p_n", "snr_gain_db", "inr_gain_db", "sinr_gain_db"})
    c.emplace_back(s);
  per_node("siso_c_snr_db");
  c.emplace_back("bf_c_snr_db");
  c.emplace_back("snr_gain_c_db");
  per_node("lag");
  per_node("detect");
  per_node("cfo_true_hz");
  per_node("cfo_hat_hz");
  for (const char* s : {"cfo_at_boundary", "phi2_pred", "bound_db"}) c.emplace_back(s);
  return c;
}

void write_cycles_csv(std::ostream& os, const std::vector<CycleRecord>& records, std::size_t n_nodes,
                      const std::string& hash) {
  os << "# schema=" << kCycleSchema << " manifest=" << hash << "\n";
  const auto cols = cycle_csv_columns(n_nodes);
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\n";
  for (const auto& r : records) {
    std::vector<std::string> f;
    f.reserve(cols.size());
    f.push_back(std::to_string(r.cycle));
    f.push_back(fmt(r.t_s));
    f.push_back(r.warmup ? "1" : "0");
    f.push_back(r.acq_failed ? "1" : "0");
    f.push_back(r.post_halt ? "1" : "0");
    f.push_back(std::to_string(r.bf_source_cycle));
    auto node_link = [&](const std::vector<LinkRecord>& v, double LinkMetrics::*field) {
      for (std::size_t n = 0; n < n_nodes; ++n) f.push_back(n < v.size() ? fmt_link(v[n], field) : std::string{});
    };
    node_link(r.siso, &LinkMetrics::snr_db);
    node_link(r.siso, &LinkMetrics::inr_db);
    node_link(r.siso, &LinkMetrics::sinr_db);
    f.push_back(fmt(siso_mean_db(r.siso, &LinkMetrics::snr_db)));
    f.push_back(fmt(siso_mean_db(r.siso, &LinkMetrics::inr_db)));
    f.push_back(fmt_link(r.bf, &LinkMetrics::snr_db));
    f.push_back(fmt_link(r.bf, &LinkMetrics::inr_db));
    f.push_back(fmt_link(r.bf, &LinkMetrics::sinr_db));
    f.push_back(r.bf.valid ? fmt(r.bf.p.signal_interf_noise) : "");
    f.push_back(r.bf.valid ? fmt(r.bf.p.interf_noise) : "");
    f.push_back(r.bf.valid ? fmt(r.bf.p.noise) : "");
    f.push_back(fmt(r.snr_gain_db));
    f.push_back(fmt(r.inr_gain_db));
    f.push_back(fmt(r.sinr_gain_db));
    node_link(r.siso_c, &LinkMetrics::snr_db);
    f.push_back(fmt_link(r.bf_c, &LinkMetrics::snr_db));
    f.push_back(fmt(r.snr_gain_c_db));
    for (std::size_t n = 0; n < n_nodes; ++n) f.push_back(n < r.lag.size() ? std::to_string(r.lag[n]) : "");
    for (std::size_t n = 0; n < n_nodes; ++n) f.push_back(n < r.detection_stat.size() ? fmt(r.detection_stat[n]) : "");
    for (std::size_t n = 0; n < n_nodes; ++n) f.push_back(n < r.cfo_true_hz.size() ? fmt(r.cfo_true_hz[n]) : "");
    for (std::size_t n = 0; n < n_nodes; ++n) f.push_back(n < r.cfo_hat_hz.size() ? fmt(r.cfo_hat_hz[n]) : "");
    f.push_back(r.cfo_at_boundary ? "1" : "0");
    f.push_back(fmt(r.phi2_pred));
    f.push_back(fmt(r.bound_db));
    for (std::size_t i = 0; i < f.size(); ++i) os << (i ? "," : "") << f[i];
    os << "\n";
  }
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  throw std::out_of_range("no CSV column '" + name + "'");
}

CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      t.comment = line;
      continue;
    }
    if (t.columns.empty())
      t.columns = split(line);
    else
      t.rows.push_back(split(line));
  }
  return t;
}

json summary_json(const ScenarioSummary& s, const std::string& hash) {
  auto num = [](double v) -> json { return std::isfinite(v) ? json(v) : json(nullptr); };
  return json{{"manifest", hash},
              {"n_cycles", s.n_cycles},
              {"n_used", s.n_used},
              {"time_averaged",
               {{"snr_gain_db", num(s.mean_snr_gain_db)},
                {"inr_gain_db", num(s.mean_inr_gain_db)},
                {"sinr_gain_db", num(s.mean_sinr_gain_db)},
                {"snr_gain_c_db", num(s.mean_snr_gain_c_db)},
                {"siso_snr_db", num(s.mean_siso_snr_db)},
                {"siso_inr_db", num(s.mean_siso_inr_db)},
                {"bf_inr_db", num(s.mean_bf_inr_db)},
                {"bound_db", num(s.mean_bound_db)}}},
              {"bounds",
               {{"phi2", s.configured_phi2},
                {"power_gain_db", s.power_gain_bound_db},
                {"rx_gain_db", s.rx_gain_bound_db},
                {"inr_bound", s.inr_reduction_bound}}},
              {"flags", {{"warmup_cycles", s.n_warmup}, {"acq_failed_cycles", s.n_acq_failed}}}};
}

json RunManifest::to_json() const {
  return json{{"artifact_version", artifact_version},
              {"schema", kCycleSchema},
              {"hash", manifest_hash(config)},
              {"seed", seed},
              {"config", config},
              {"outputs", outputs},
              {"virtual_time", {{"start_s", start_virtual_s}, {"end_s", end_virtual_s}}}};
}

void write_iq_dump(const std::filesystem::path& bin_path, const ComplexSignal& x, const FrameLayout* layout,
                   const std::string& description) {
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + bin_path.string());
  std::vector<float> buf;
  buf.reserve(2 * x.size());
  for (const auto& v : x.samples) {
    buf.push_back(static_cast<float>(v.real()));
    buf.push_back(static_cast<float>(v.imag()));
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& f : buf) {
      const auto u = std::bit_cast<std::uint32_t>(f);
      f = std::bit_cast<float>((u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24));
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed for " + bin_path.string());

  json side{{"format", "cf32_le"},
            {"sample_rate_hz", x.sample_rate_hz},
            {"n_samples", x.size()},
            {"description", description}};
  if (layout) {
    json segs = json::array();
    for (const auto& s : layout->segments) segs.push_back({{"name", s.name}, {"offset", s.offset}, {"length", s.length}});
    side["layout"] = {{"total_length", layout->total_length}, {"segments", segs}};
  }
  std::filesystem::path sp = bin_path;
  sp += ".json";
  std::ofstream so(sp);
  if (!so) throw std::runtime_error("cannot write " + sp.string());
  so << side.dump(2) << "\n";
}

}  // namespace dcbf
