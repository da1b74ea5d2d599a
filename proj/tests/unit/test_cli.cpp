#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dcbf/cli.hpp"
#include "dcbf/io.hpp"
#include "dcbf/metrics.hpp"

using namespace dcbf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("dcbf_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

CsvTable load_csv(const fs::path& p) {
  std::ifstream in(p);
  return read_csv(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path config(const std::string& name) { return fs::path(DCBF_SOURCE_DIR) / "configs" / (name + ".json"); }

RunOptions short_run(const std::string& name, const fs::path& out, std::size_t cycles = 3) {
  RunOptions o;
  o.config = config(name);
  o.out_dir = out;
  o.overrides = {"n_cycles=" + std::to_string(cycles)};
  return o;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("run writes the three artifacts and the summary matches the rows") {
    const auto dir = scratch("run");
    std::ostringstream err;
    REQUIRE(cmd_run(short_run("rx_bf_interf", dir, 4), err) == kExitOk);
    for (const char* f : {"cycles.csv", "summary.json", "manifest.json"}) CHECK(fs::exists(dir / f));

    const auto t = load_csv(dir / "cycles.csv");
    REQUIRE(t.rows.size() == 4);
    const auto summary = read_json_file(dir / "summary.json");
    const auto manifest = read_json_file(dir / "manifest.json");
    CHECK(t.comment.find(manifest["hash"].get<std::string>()) != std::string::npos);
    CHECK(summary["manifest"] == manifest["hash"]);

    double acc = 0;
    int n = 0;
    for (const auto& row : t.rows) {
      if (row[t.column("warmup")] == "1") continue;
      const std::string& g = row[t.column("sinr_gain_db")];
      if (g.empty()) continue;
      acc += std::stod(g);
      ++n;
    }
    REQUIRE(n > 0);
    CHECK(summary["time_averaged"]["sinr_gain_db"].get<double>() == doctest::Approx(acc / n).epsilon(1e-9));
    fs::remove_all(dir);
  }

  TEST_CASE("seed override changes values, not the schema") {
    const auto a = scratch("seed_a"), b = scratch("seed_b");
    std::ostringstream err;
    auto oa = short_run("tx_bf", a);
    auto ob = short_run("tx_bf", b);
    ob.seed = 1234;
    REQUIRE(cmd_run(oa, err) == kExitOk);
    REQUIRE(cmd_run(ob, err) == kExitOk);
    const auto ta = load_csv(a / "cycles.csv"), tb = load_csv(b / "cycles.csv");
    CHECK(ta.columns == tb.columns);
    CHECK(ta.rows != tb.rows);
    CHECK(read_json_file(b / "manifest.json")["seed"] == 1234);
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("configuration and runtime failures map to exit codes") {
    const auto dir = scratch("bad");
    std::ofstream(dir / "bad.json") << R"({"mesh": {"n_nodes": 0}})";
    std::ostringstream err;
    RunOptions o;
    o.config = dir / "bad.json";
    o.out_dir = dir / "out";
    CHECK(cmd_run(o, err) == kExitConfig);
    CHECK(err.str().find("n_nodes") != std::string::npos);

    o.config = dir / "missing.json";
    CHECK(cmd_run(o, err) == kExitRuntime);

    o = short_run("rx_bf", dir / "out");
    o.overrides.push_back("mesh.bogus=1");
    CHECK(cmd_run(o, err) == kExitConfig);
    fs::remove_all(dir);
  }

  TEST_CASE("bounds table") {
    const auto dir = scratch("bounds");
    std::ostringstream err;
    BoundsOptions b;
    b.out = dir / "b.csv";
    REQUIRE(cmd_bounds(b, err) == kExitOk);
    auto t = load_csv(b.out);
    REQUIRE(t.rows.size() == 101);
    CHECK(std::stod(t.rows[0][t.column("power_gain_db")]) == doctest::Approx(9.5424).epsilon(1e-4));
    CHECK(std::stod(t.rows[0][t.column("rx_gain_db")]) == doctest::Approx(4.7712).epsilon(1e-4));
    for (const auto& row : t.rows) {
      const double p = std::stod(row[t.column("phi2")]);
      CHECK(std::stod(row[t.column("power_gain_db")]) == doctest::Approx(power_gain_bound_db(3, p)).epsilon(1e-9));
      CHECK(std::stod(row[t.column("inr_bound")]) == doctest::Approx(inr_reduction_bound(3, p)).epsilon(1e-9));
    }
    CHECK(std::stod(t.rows.back()[t.column("phi2")]) == 2.0);

    b.n_nodes = 1;
    REQUIRE(cmd_bounds(b, err) == kExitOk);
    t = load_csv(b.out);
    for (const auto& row : t.rows) CHECK(std::stod(row[t.column("power_gain_db")]) == doctest::Approx(0.0));

    b.n_nodes = 3;
    b.steps = 1;
    b.phi2_min = b.phi2_max = 0.5;
    REQUIRE(cmd_bounds(b, err) == kExitOk);
    t = load_csv(b.out);
    REQUIRE(t.rows.size() == 1);
    CHECK(std::stod(t.rows[0][t.column("power_gain_db")]) ==
          doctest::Approx(10 * std::log10(6 * std::exp(-0.5) + 3)).epsilon(1e-9));

    b.steps = 0;
    CHECK(cmd_bounds(b, err) == kExitConfig);
    b.steps = 5;
    b.phi2_min = 1.0;
    b.phi2_max = 0.5;
    CHECK(cmd_bounds(b, err) == kExitConfig);
    fs::remove_all(dir);
  }

  TEST_CASE("sync demo residuals") {
    std::ostringstream out, err;
    SyncDemoOptions s;
    REQUIRE(cmd_sync_demo(s, out, err) == kExitOk);
    std::istringstream lines(out.str());
    std::string first;
    std::getline(lines, first);
    CHECK(first.rfind("sample LEADER_REPLY ", 0) == 0);
    const auto t = read_csv(lines);
    REQUIRE(t.rows.size() == 4);
    for (const auto& row : t.rows) {
      CHECK(row[t.column("ok")] == "1");
      CHECK(std::stod(row[t.column("residual_samples")]) == 0.0);
    }

    std::ostringstream out2;
    s.up_tof_samples = 30;
    s.down_tof_samples = 50;
    REQUIRE(cmd_sync_demo(s, out2, err) == kExitOk);
    std::istringstream l2(out2.str());
    std::getline(l2, first);
    const auto t2 = read_csv(l2);
    for (const auto& row : t2.rows)
      CHECK(std::abs(std::stod(row[t2.column("residual_samples")])) == doctest::Approx(10.0));
  }

  TEST_CASE("dump-frame writes a sidecar") {
    const auto dir = scratch("dump");
    std::ostringstream err;
    DumpFrameOptions d;
    d.kind = "tx_node";
    d.node_id = 2;
    d.out = dir / "f.cf32";
    REQUIRE(cmd_dump_frame(d, err) == kExitOk);
    const auto side = read_json_file(fs::path(d.out.string() + ".json"));
    CHECK(fs::file_size(d.out) == side["n_samples"].get<std::size_t>() * 8);
    d.kind = "nonsense";
    CHECK(cmd_dump_frame(d, err) == kExitConfig);
    fs::remove_all(dir);
  }

  TEST_CASE("executable exit codes and byte-stable output") {
    const auto dir = scratch("exe");
    const std::string exe = DCBF_CLI_PATH;
    CHECK(WEXITSTATUS(std::system((exe + " run --bogus-flag > /dev/null 2>&1").c_str())) == kExitConfig);
    CHECK(WEXITSTATUS(std::system((exe + " --help > /dev/null 2>&1").c_str())) == kExitOk);
    const std::string base = exe + " run --config " + config("rx_bf").string() + " --override n_cycles=2 --out ";
    REQUIRE(WEXITSTATUS(std::system((base + (dir / "a").string() + " 2>/dev/null").c_str())) == kExitOk);
    REQUIRE(WEXITSTATUS(std::system((base + (dir / "b").string() + " 2>/dev/null").c_str())) == kExitOk);
    CHECK(slurp(dir / "a" / "cycles.csv") == slurp(dir / "b" / "cycles.csv"));
    CHECK(slurp(dir / "a" / "summary.json") == slurp(dir / "b" / "summary.json"));
    fs::remove_all(dir);
  }
}
