// SPDX-License-Identifier: Apache-2.0
//
// dcbf: run beamforming scenarios, tabulate bounds, demo the time-transfer
// link, and export frames.

#include <CLI11.hpp>
#include <iostream>

#include "dcbf/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Distributed coherent beamforming baseband simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", DCBF_VERSION);

  dcbf::RunOptions run;
  std::uint64_t seed = 0;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write cycles.csv, summary.json, manifest.json");
  run_cmd->add_option("--config", run.config, "Scenario JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", run.out_dir, "Output directory")->capture_default_str();
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Override the master seed");
  run_cmd->add_option("--override", run.overrides, "key.path=value (repeatable)");
  run_cmd->add_flag("--iq-dump", run.iq_dump, "Also dump cycle-0 captures as cf32 files");

  dcbf::BoundsOptions bounds;
  auto* bounds_cmd = app.add_subcommand("bounds", "Tabulate gain and nulling bounds against phase-error variance");
  bounds_cmd->add_option("-N,--nodes", bounds.n_nodes, "Mesh size")->capture_default_str();
  bounds_cmd->add_option("--phi2-min", bounds.phi2_min, "Smallest phi^2 (rad^2)")->capture_default_str();
  bounds_cmd->add_option("--phi2-max", bounds.phi2_max, "Largest phi^2 (rad^2)")->capture_default_str();
  bounds_cmd->add_option("--steps", bounds.steps, "Grid points")->capture_default_str();
  bounds_cmd->add_option("--out", bounds.out, "Output CSV")->capture_default_str();

  dcbf::SyncDemoOptions sync;
  double ebn0 = 0;
  auto* sync_cmd = app.add_subcommand("sync-demo", "Run two-way time-transfer rounds and print residuals");
  sync_cmd->add_option("--rounds", sync.rounds)->capture_default_str();
  sync_cmd->add_option("--offset", sync.initial_offset_s, "Initial follower offset, s")->capture_default_str();
  sync_cmd->add_option("--up-tof", sync.up_tof_samples, "Follower to leader delay, samples")->capture_default_str();
  sync_cmd->add_option("--down-tof", sync.down_tof_samples, "Leader to follower delay, samples")->capture_default_str();
  auto* ebn0_opt = sync_cmd->add_option("--ebn0", ebn0, "Eb/N0 per channel bit, dB (default noiseless)");
  sync_cmd->add_option("--sweep", sync.sweep_ebn0_db, "Eb/N0 points for a residual RMS sweep")->delimiter(',');
  sync_cmd->add_option("--trials", sync.trials)->capture_default_str();
  sync_cmd->add_flag("--index", sync.use_index, "Send a history index instead of t_tx");
  sync_cmd->add_flag("--no-fec", sync.no_fec, "Disable Hamming/Golay coding");
  sync_cmd->add_option("--seed", sync.seed)->capture_default_str();

  dcbf::DumpFrameOptions dump;
  auto* dump_cmd = app.add_subcommand("dump-frame", "Write one synthesized frame as cf32 plus a layout sidecar");
  dump_cmd->add_option("--kind", dump.kind, "rx_source | interferer | tx_node")->capture_default_str();
  dump_cmd->add_option("--node", dump.node_id, "1-based node for tx_node")->capture_default_str();
  dump_cmd->add_option("--config", dump.config, "Scenario JSON supplying mesh parameters");
  dump_cmd->add_option("--override", dump.overrides, "key.path=value (repeatable)");
  dump_cmd->add_option("--payload-seed", dump.payload_seed)->capture_default_str();
  dump_cmd->add_option("--out", dump.out, "Output .cf32 path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : dcbf::kExitConfig;
  }

  if (*run_cmd) {
    if (*seed_opt) run.seed = seed;
    return dcbf::cmd_run(run, std::cerr);
  }
  if (*bounds_cmd) return dcbf::cmd_bounds(bounds, std::cerr);
  if (*sync_cmd) {
    if (*ebn0_opt) sync.ebn0_db = ebn0;
    return dcbf::cmd_sync_demo(sync, std::cout, std::cerr);
  }
  if (*dump_cmd) return dcbf::cmd_dump_frame(dump, std::cerr);
  return dcbf::kExitConfig;
}
