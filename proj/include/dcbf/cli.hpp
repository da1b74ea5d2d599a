// SPDX-License-Identifier: Apache-2.0
//
// Subcommand implementations behind the dcbf executable. Each returns a
// process exit status: 0 ok, 2 configuration error, 3 runtime error.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dcbf {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

/// Verbosity from DCBF_LOG (quiet | info | debug); info when unset.
LogLevel log_level();

struct RunOptions {
  std::filesystem::path config;
  std::filesystem::path out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool iq_dump = false;
};

int cmd_run(const RunOptions& opts, std::ostream& err);

struct BoundsOptions {
  std::size_t n_nodes = 3;
  double phi2_min = 0.0;
  double phi2_max = 2.0;
  std::size_t steps = 101;
  std::filesystem::path out = "bounds.csv";
};

int cmd_bounds(const BoundsOptions& opts, std::ostream& err);

struct SyncDemoOptions {
  std::size_t rounds = 4;
  double initial_offset_s = 1.25e-3;
  std::size_t up_tof_samples = 40;
  std::size_t down_tof_samples = 40;
  /// Per channel bit; unset means a noiseless link.
  std::optional<double> ebn0_db;
  bool use_index = false;
  bool no_fec = false;
  /// When non-empty, prints residual RMS per Eb/N0 point instead of rounds.
  std::vector<double> sweep_ebn0_db;
  std::size_t trials = 100;
  std::uint64_t seed = 1;
};

int cmd_sync_demo(const SyncDemoOptions& opts, std::ostream& out, std::ostream& err);

struct DumpFrameOptions {
  std::string kind = "rx_source";  // rx_source | interferer | tx_node
  int node_id = 1;
  std::optional<std::filesystem::path> config;
  std::vector<std::string> overrides;
  std::uint64_t payload_seed = 1;
  std::filesystem::path out = "frame.cf32";
};

int cmd_dump_frame(const DumpFrameOptions& opts, std::ostream& err);

}  // namespace dcbf
