// SPDX-License-Identifier: Apache-2.0

#include "dcbf/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>

#include "dcbf/io.hpp"
#include "dcbf/metrics.hpp"
#include "dcbf/scenario.hpp"
#include "dcbf/timesync.hpp"
#include "dcbf/waveform.hpp"

namespace dcbf {

namespace {

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

}  // namespace

LogLevel log_level() {
  const char* v = std::getenv("DCBF_LOG");
  if (!v) return LogLevel::Info;
  const std::string s(v);
  if (s == "quiet" || s == "0") return LogLevel::Quiet;
  if (s == "debug" || s == "2") return LogLevel::Debug;
  return LogLevel::Info;
}

int cmd_run(const RunOptions& opts, std::ostream& err) {
  return guarded(err, [&] {
    json j = read_json_file(opts.config);
    for (const auto& o : opts.overrides) apply_override(j, o);
    if (opts.seed) j["seed"] = *opts.seed;
    ScenarioConfig cfg = parse_scenario_config(j);
    const json snapshot = to_json(cfg);
    const std::string hash = manifest_hash(snapshot);
    const LogLevel lvl = log_level();

    std::filesystem::create_directories(opts.out_dir);
    std::vector<std::string> outputs{"cycles.csv", "summary.json", "manifest.json"};
    if (opts.iq_dump) {
      const bool tx = cfg.experiment == Experiment::TX_BF || cfg.experiment == Experiment::TX_NULL ||
                      cfg.experiment == Experiment::COHERENCE;
      const FrameLayout layout = frame_layout(tx ? FrameKind::TX_BF_NODE : FrameKind::RX_BF_SOURCE, cfg.mesh);
      cfg.on_capture = [&, layout](const std::string& tag, const ComplexSignal& x) {
        const std::string name = "iq_" + tag + ".cf32";
        write_iq_dump(opts.out_dir / name, x, &layout, "cycle 0 capture " + tag);
        outputs.push_back(name);
      };
    }
    if (lvl >= LogLevel::Info)
      err << "run: " << to_string(cfg.experiment) << ", " << cfg.n_cycles << " cycles, seed " << cfg.mesh.seed
          << "\n";

    const auto records = run_scenario(cfg);
    const ScenarioSummary summary = summarize(cfg, records);

    std::ofstream csv(opts.out_dir / "cycles.csv", std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + (opts.out_dir / "cycles.csv").string());
    write_cycles_csv(csv, records, static_cast<std::size_t>(cfg.mesh.n_nodes), hash);
    csv.close();
    if (!csv) throw std::runtime_error("write failed for cycles.csv");
    write_text(opts.out_dir / "summary.json", summary_json(summary, hash).dump(2) + "\n");

    RunManifest m;
    m.config = snapshot;
    m.seed = cfg.mesh.seed;
    m.artifact_version = DCBF_VERSION;
    m.outputs = outputs;
    m.end_virtual_s = records.empty() ? 0.0 : records.back().t_s;
    write_text(opts.out_dir / "manifest.json", m.to_json().dump(2) + "\n");

    if (lvl >= LogLevel::Info)
      err << "run: mean SNR gain " << summary.mean_snr_gain_db << " dB over " << summary.n_used << " cycles\n";
    if (lvl >= LogLevel::Debug)
      err << "run: wrote " << opts.out_dir.string() << " (manifest " << hash << ")\n";
    return kExitOk;
  });
}

int cmd_bounds(const BoundsOptions& opts, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.n_nodes < 1) throw ConfigError("n_nodes must be ≥ 1");
    if (opts.steps < 1) throw ConfigError("steps must be ≥ 1");
    if (opts.phi2_min < 0 || opts.phi2_max < opts.phi2_min) throw ConfigError("phi2 range must satisfy 0 ≤ min ≤ max");
    std::ofstream out(opts.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + opts.out.string());
    out << "phi2,power_gain_db,rx_gain_db,inr_bound\n";
    char line[160];
    for (std::size_t i = 0; i < opts.steps; ++i) {
      const double phi2 = opts.steps == 1 ? opts.phi2_min
                                          : opts.phi2_min + (opts.phi2_max - opts.phi2_min) * static_cast<double>(i) /
                                                                static_cast<double>(opts.steps - 1);
      std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", phi2, power_gain_bound_db(opts.n_nodes, phi2),
                    rx_gain_bound_db(opts.n_nodes, phi2), inr_reduction_bound(opts.n_nodes, phi2));
      out << line;
    }
    if (!out) throw std::runtime_error("write failed for " + opts.out.string());
    return kExitOk;
  });
}

int cmd_sync_demo(const SyncDemoOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    SyncLink link;
    link.up.tof_delay = opts.up_tof_samples;
    link.down.tof_delay = opts.down_tof_samples;
    link.use_index = opts.use_index;
    link.fec = opts.no_fec ? FecMode::None : FecMode::HammingGolay;
    const double fs = static_cast<double>(link.sample_rate_hz);
    auto noise_for = [](std::optional<double> ebn0) { return ebn0 ? std::pow(10.0, -*ebn0 / 10.0) : 0.0; };

    NodeState leader(0, opts.seed, "sync-leader");
    Rng rng(opts.seed, 0, "sync-link");
    TimestampHistory history;

    SyncMessage sample;
    sample.kind = SyncKind::LeaderReply;
    sample.t_tx_follower = timestamp_from_samples(3'400'000'000'000ULL, link.sample_rate_hz);
    sample.t_rx_leader = timestamp_from_samples(3'400'000'000'123ULL, link.sample_rate_hz);
    sample.t_tx_leader = timestamp_from_samples(3'400'000'020'123ULL, link.sample_rate_hz);
    out << "sample LEADER_REPLY " << to_hex(encode_sync_message(sample, link.fec)) << "\n";

    if (!opts.sweep_ebn0_db.empty()) {
      out << "ebn0_db,trials,failures,residual_rms_samples\n";
      for (double e : opts.sweep_ebn0_db) {
        link.noise.noise_power_per_sample = noise_for(e);
        double ss = 0;
        std::size_t ok = 0, fails = 0;
        for (std::size_t t = 0; t < opts.trials; ++t) {
          NodeState follower(static_cast<int>(t + 1), opts.seed, "sync-follower");
          follower.timestamp_offset_s = opts.initial_offset_s;
          const auto r = run_sync_round(leader, follower, link, rng, 3'400'000'000'000ULL, &history);
          if (!r.ok) {
            ++fails;
            continue;
          }
          const double res = r.residual.to_seconds() * fs;
          ss += res * res;
          ++ok;
        }
        char line[128];
        std::snprintf(line, sizeof line, "%g,%zu,%zu,%.6g\n", e, opts.trials, fails,
                      ok ? std::sqrt(ss / static_cast<double>(ok)) : std::nan(""));
        out << line;
      }
      return kExitOk;
    }

    link.noise.noise_power_per_sample = noise_for(opts.ebn0_db);
    NodeState follower(1, opts.seed, "sync-follower");
    follower.timestamp_offset_s = opts.initial_offset_s;
    out << "round,ok,delta_hat_s,residual_s,residual_samples,golay_corrected,hamming_corrected\n";
    for (std::size_t k = 0; k < opts.rounds; ++k) {
      const auto r = run_sync_round(leader, follower, link, rng,
                                    3'400'000'000'000ULL + k * 400'000ULL, &history);
      char line[200];
      std::snprintf(line, sizeof line, "%zu,%d,%.17g,%.17g,%.17g,%d,%d\n", k, r.ok ? 1 : 0, r.delta_hat.to_seconds(),
                    r.residual.to_seconds(), r.residual.to_seconds() * fs, r.golay_corrected, r.hamming_corrected);
      out << line;
      if (!r.ok && log_level() >= LogLevel::Info) err << "sync-demo: round " << k << " failed: " << r.failure << "\n";
    }
    return kExitOk;
  });
}

int cmd_dump_frame(const DumpFrameOptions& opts, std::ostream& err) {
  return guarded(err, [&] {
    MeshConfig mesh;
    if (opts.config) {
      json j = read_json_file(*opts.config);
      for (const auto& o : opts.overrides) apply_override(j, o);
      mesh = parse_scenario_config(j).mesh;
    } else if (!opts.overrides.empty()) {
      json j = json::object();
      for (const auto& o : opts.overrides) apply_override(j, o);
      mesh = parse_scenario_config(j).mesh;
    }
    FrameKind kind;
    if (opts.kind == "rx_source")
      kind = FrameKind::RX_BF_SOURCE;
    else if (opts.kind == "interferer")
      kind = FrameKind::RX_BF_INTERFERER;
    else if (opts.kind == "tx_node")
      kind = FrameKind::TX_BF_NODE;
    else
      throw ConfigError("kind: expected rx_source, interferer or tx_node");
    const Frame f = build_frame({kind, opts.node_id, 1, opts.payload_seed}, mesh);
    if (opts.out.has_parent_path()) std::filesystem::create_directories(opts.out.parent_path());
    write_iq_dump(opts.out, f.signal, &f.layout, opts.kind + " frame, node " + std::to_string(opts.node_id));
    if (log_level() >= LogLevel::Info) err << "dump-frame: " << f.signal.size() << " samples to " << opts.out.string() << "\n";
    return kExitOk;
  });
}

}  // namespace dcbf
