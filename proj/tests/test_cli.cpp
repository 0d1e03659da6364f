// End-to-end tests driving the built binary.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "wfsim/field.hpp"
#include "wfsim/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(WFSIM_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[512];
  while (fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wfsim_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

json load_json(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  json j;
  f >> j;
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("simulate explicit reproduces the hot-boundary center value") {
  const auto dir = fresh_dir("explicit");
  const auto r = run_cli("simulate explicit --x 3 --y 3 -W 3 --omega 0.1 --steps 1 "
                         "--preset hot-boundary --out-dir " + dir.string());
  CHECK(r.exit_code == 0);

  const wfsim::HostField out = wfsim::load_field((dir / "field_out.wfld").string());
  CHECK(out.at(1, 1, 1) == doctest::Approx(0.6).epsilon(1e-6));

  const json rec = load_json(dir / "result.json");
  CHECK(rec.at("result").at("total_cycles").get<uint64_t>() == 98);
  // simulated rate = iterations * F_c / cycles
  const double rate = rec.at("result").at("simulated_rate").get<double>();
  const double clock = rec.at("config").at("clock_hz").get<double>();
  CHECK(rate == doctest::Approx(1.0 * clock / 98.0));
}

TEST_CASE("simulate cg converges and reports residuals") {
  const auto dir = fresh_dir("cg");
  const auto r = run_cli("simulate cg --x 3 --y 3 -W 3 --omega 0.1 --tol 1e-8 --out-dir " +
                         dir.string());
  CHECK(r.exit_code == 0);
  const json rec = load_json(dir / "result.json");
  CHECK(rec.at("result").at("converged").get<bool>());
  CHECK(rec.at("result").at("residuals").size() >= 1);
  CHECK(rec.at("result").at("cycles_per_iteration").get<uint64_t>() ==
        llround(10.5 * 3) + 2 * (3 + 3) + 337);
}

TEST_CASE("instability rejection exits with the numeric-error code") {
  const auto dir = fresh_dir("unstable");
  const auto r = run_cli("simulate explicit --x 3 --y 3 -W 3 --omega 0.2 --out-dir " +
                         dir.string());
  CHECK(r.exit_code == 5);
}

TEST_CASE("config errors exit with code 2") {
  SUBCASE("omega and the triple together") {
    const auto r = run_cli("simulate explicit --omega 0.1 --alpha 1 --dt 1 --dl 1");
    CHECK(r.exit_code == 2);
  }
  SUBCASE("neither omega nor the triple") {
    const auto r = run_cli("simulate explicit --x 2 --y 2 -W 2");
    CHECK(r.exit_code == 2);
  }
  SUBCASE("unknown flag") {
    const auto r = run_cli("simulate explicit --omega 0.1 --frobnicate");
    CHECK(r.exit_code == 2);
  }
  SUBCASE("bad dimensions") {
    const auto r = run_cli("simulate explicit --x 0 --y 2 -W 2 --omega 0.1");
    CHECK(r.exit_code == 2);
  }
}

TEST_CASE("non-convergence exits with code 4") {
  const auto dir = fresh_dir("noconv");
  const auto r = run_cli("simulate cg --x 3 --y 3 -W 3 --omega 0.1 --tol 1e-9 --max-iters 0 "
                         "--out-dir " + dir.string());
  CHECK(r.exit_code == 4);
}

TEST_CASE("validate passes on the default differential suite") {
  const auto r = run_cli("validate --x 4 --y 4 -W 8 --omega 0.1 --steps 5 --seed 7");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("explicit-bit-exact: PASS") != std::string::npos);
  CHECK(r.output.find("cg-vs-dense: PASS") != std::string::npos);
}

TEST_CASE("validate localizes an injected fault and fails") {
  const auto r = run_cli("validate --x 4 --y 4 -W 8 --omega 0.1 --steps 5 --inject-fault");
  CHECK(r.exit_code == 3);
  CHECK(r.output.find("FAIL") != std::string::npos);
  CHECK(r.output.find("divergence at step") != std::string::npos);
}

TEST_CASE("validate refuses fabrics beyond the oracle bound") {
  const auto r = run_cli("validate --x 16 --y 16 -W 17 --omega 0.1");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("refus") != std::string::npos);
}

TEST_CASE("model roofline emits the calibrated tables") {
  const auto r = run_cli("model roofline --clock 851e6 --w 50,100,1000 --x 750 --y 950");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("50,403,") != std::string::npos);
  CHECK(r.output.find("1000,6578,") != std::string::npos);
  CHECK(r.output.find("14237") != std::string::npos);
}

TEST_CASE("model survey flags only the inconsistent row") {
  const auto r = run_cli("model survey --format json");
  CHECK(r.exit_code == 0);
  const json rows = json::parse(r.output);
  int flagged = 0;
  for (const auto& row : rows) {
    if (row.at("flagged").get<bool>()) {
      ++flagged;
      CHECK(row.at("study").get<std::string>() == "Pfister et al.");
    } else {
      CHECK(row.at("rel_error").get<double>() <= 0.02);
    }
  }
  CHECK(flagged == 1);
}

TEST_CASE("model compare reports the rate ratio at chosen operating points") {
  const auto r = run_cli(
      "model compare --wse-w 80 --of-preset eq12 --of-ncells 1.31e6 --format json");
  CHECK(r.exit_code == 0);
  const json j = json::parse(r.output);
  CHECK(j.at("speedup").get<double>() ==
        doctest::Approx(1423210.7 / 13265.95).epsilon(1e-6));
}

TEST_CASE("fit recovers an exact line and rejects degenerate input") {
  const auto dir = fresh_dir("fit");
  {
    std::ofstream f(dir / "line.csv");
    // two exact points on the eq12 preset line
    f << "n_cells,rate\n";
    f << "1000000," << 1.36e4 - 2.55e-4 * 1e6 << "\n";
    f << "30000000," << 1.36e4 - 2.55e-4 * 3e7 << "\n";
  }
  auto r = run_cli("fit " + (dir / "line.csv").string());
  CHECK(r.exit_code == 0);
  const json j = json::parse(r.output);
  CHECK(j.at("a").get<double>() == doctest::Approx(1.36e4).epsilon(1e-12));
  CHECK(j.at("b").get<double>() == doctest::Approx(2.55e-4).epsilon(1e-12));

  {
    std::ofstream f(dir / "one.csv");
    f << "n_cells,rate\n1e6,100\n";
  }
  r = run_cli("fit " + (dir / "one.csv").string());
  CHECK(r.exit_code == 2);
}

TEST_CASE("identical configs produce byte-identical outputs modulo metadata") {
  const auto d1 = fresh_dir("det1");
  const auto d2 = fresh_dir("det2");
  const std::string args = "simulate cg --x 4 --y 4 -W 6 --omega 0.1 --tol 1e-7 --out-dir ";
  CHECK(run_cli(args + d1.string()).exit_code == 0);
  CHECK(run_cli(args + d2.string()).exit_code == 0);

  json a = load_json(d1 / "result.json");
  json b = load_json(d2 / "result.json");
  a.erase("meta");
  b.erase("meta");
  CHECK(a.dump() == b.dump());
  CHECK(slurp(d1 / "field_out.wfld") == slurp(d2 / "field_out.wfld"));
}

TEST_CASE("config file values are applied and flags win") {
  const auto dir = fresh_dir("cfgfile");
  {
    std::ofstream f(dir / "run.ini");
    f << "[simulate.explicit]\n"
      << "x=3\ny=3\nw=3\nomega=0.1\nsteps=1\npreset=hot-boundary\n"
      << "out-dir=" << (dir / "out_a").string() << "\n";
  }
  auto r = run_cli("--config " + (dir / "run.ini").string() + " simulate explicit");
  CHECK(r.exit_code == 0);
  CHECK(load_json(dir / "out_a" / "result.json").at("config").at("w").get<int>() == 3);

  r = run_cli("--config " + (dir / "run.ini").string() + " simulate explicit -W 4 --out-dir " +
              (dir / "out_b").string());
  CHECK(r.exit_code == 0);
  CHECK(load_json(dir / "out_b" / "result.json").at("config").at("w").get<int>() == 4);
}

TEST_CASE("traces are written as JSON lines when requested") {
  const auto dir = fresh_dir("trace");
  const auto r = run_cli("simulate explicit --x 2 --y 2 -W 3 --omega 0.1 --steps 2 "
                         "--trace " + (dir / "t.jsonl").string() + " --out-dir " + dir.string());
  CHECK(r.exit_code == 0);
  const auto records = wfsim::read_trace_jsonl((dir / "t.jsonl").string());
  CHECK(records.size() == 2 * 4);  // 2 steps, 4 workers, 1 traced RPC per step
  CHECK(records.front().values.size() == 3);
}

TEST_CASE("WFSIM_OUT_DIR provides the default output directory") {
  const auto dir = fresh_dir("envdir");
  const std::string cmd = "WFSIM_OUT_DIR=" + dir.string() + " " + WFSIM_CLI_PATH +
                          " simulate explicit --x 2 --y 2 -W 2 --omega 0.1 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[256];
  while (fgets(buf, sizeof buf, pipe)) {
  }
  const int status = pclose(pipe);
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(fs::exists(dir / "result.json"));
}

TEST_CASE("survey accepts a custom bandwidth registry") {
  const auto dir = fresh_dir("registry");
  {
    std::ofstream f(dir / "reg.json");
    f << R"({"P100": 7e11, "V100": 9e11, "A100": 2e12})" << "\n";
  }
  const auto r = run_cli("model survey --registry " + (dir / "reg.json").string() +
                         " --format json");
  CHECK(r.exit_code == 0);
  CHECK(json::parse(r.output).size() == 7);

  const auto bad = run_cli("model survey --registry /nonexistent/registry.json");
  CHECK(bad.exit_code == 2);
}

TEST_CASE("field-file dimension mismatch is a config error") {
  const auto dir = fresh_dir("dimmismatch");
  wfsim::save_field((dir / "f.wfld").string(), wfsim::HostField(2, 2, 2, 1.0f));
  const auto r = run_cli("simulate explicit --x 3 --y 3 -W 3 --omega 0.1 --field " +
                         (dir / "f.wfld").string());
  CHECK(r.exit_code == 2);
}

TEST_CASE("csv result format is emitted and deterministic") {
  const auto d1 = fresh_dir("csv1");
  const auto d2 = fresh_dir("csv2");
  const std::string args =
      "simulate explicit --x 3 --y 3 -W 4 --omega 0.1 --steps 2 --format csv --out-dir ";
  CHECK(run_cli(args + d1.string()).exit_code == 0);
  CHECK(run_cli(args + d2.string()).exit_code == 0);
  const std::string csv = slurp(d1 / "result.csv");
  CHECK(csv.find("key,value") != std::string::npos);
  CHECK(csv.find("total_cycles") != std::string::npos);
  CHECK(csv == slurp(d2 / "result.csv"));
}
