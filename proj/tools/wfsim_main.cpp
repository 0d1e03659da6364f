// Command-line front end: functional simulation with cycle accounting,
// simulator-vs-oracle validation, analytic performance models, and scaling
// fits, all driven by file-based configs for reproducible experiments.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "wfsim/fabric.hpp"
#include "wfsim/field.hpp"
#include "wfsim/oracle.hpp"
#include "wfsim/perf.hpp"
#include "wfsim/rpc.hpp"
#include "wfsim/solver.hpp"
#include "wfsim/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace wfsim;

namespace {

// Exit codes; keep in sync with README.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNonConvergence = 4;
constexpr int kExitNumeric = 5;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::non_convergence: return kExitNonConvergence;
    case Errc::non_finite:
    case Errc::unstable:
    case Errc::breakdown: return kExitNumeric;
    default: return kExitConfig;
  }
}

struct SimOptions {
  int64_t x = 3, y = 3, w = 3;
  double clock_hz = perf::kDefaultClockHz;
  double omega = std::nan("");
  double alpha = std::nan(""), dt = std::nan(""), dl = std::nan("");
  double gamma = 1.0;
  uint64_t steps = 1;
  double tol = 1e-6;
  uint64_t max_iters = 1000;
  std::string preset = "hot-boundary";
  std::string field_file;
  std::string out_dir = ".";
  std::string format = "json";
  std::string trace_file;
  std::string route = "fused";
  bool allow_unstable = false;
  bool no_strict = false;
};

void add_fabric_options(CLI::App* cmd, SimOptions& o) {
  cmd->add_option("--x", o.x, "Worker columns (X)")->capture_default_str();
  cmd->add_option("--y", o.y, "Worker rows (Y)")->capture_default_str();
  cmd->add_option("-W,--w", o.w, "Cells per tile column (W)")->capture_default_str();
  cmd->add_option("--clock", o.clock_hz, "Fabric clock in Hz")->capture_default_str();
}

void add_sim_options(CLI::App* cmd, SimOptions& o) {
  add_fabric_options(cmd, o);
  cmd->add_option("--omega", o.omega, "Diagonal constant alpha*dt/dl^2");
  cmd->add_option("--alpha", o.alpha, "Thermal diffusivity");
  cmd->add_option("--dt", o.dt, "Time step");
  cmd->add_option("--dl", o.dl, "Cell length");
  cmd->add_option("--gamma", o.gamma, "Boundary value")->capture_default_str();
  cmd->add_option("--preset", o.preset, "Initial field preset: hot-boundary | uniform | zero")
      ->capture_default_str();
  cmd->add_option("--field", o.field_file, "Initial field file (overrides --preset)");
  cmd->add_option("--out-dir", o.out_dir, "Output directory")
      ->envname("WFSIM_OUT_DIR")
      ->capture_default_str();
  cmd->add_option("--format", o.format, "Result format: json | csv")->capture_default_str();
  cmd->add_option("--trace", o.trace_file, "Write a JSON-lines trace of every RPC");
  cmd->add_option("--route", o.route, "Kernel route: fused | generic")->capture_default_str();
  cmd->add_flag("--allow-unstable", o.allow_unstable, "Run even when omega >= 1/6");
  cmd->add_flag("--no-strict", o.no_strict, "Disable strict finite-value checking");
}

HeatParams heat_params_from(const SimOptions& o) {
  const bool have_omega = !std::isnan(o.omega);
  const bool have_triple = !std::isnan(o.alpha) && !std::isnan(o.dt) && !std::isnan(o.dl);
  const bool any_triple = !std::isnan(o.alpha) || !std::isnan(o.dt) || !std::isnan(o.dl);
  if (have_omega && any_triple)
    fail(Errc::invalid_config, "give either --omega or the --alpha/--dt/--dl triple, not both");
  if (!have_omega && !have_triple)
    fail(Errc::invalid_config, "give either --omega or the full --alpha/--dt/--dl triple");
  return have_omega
             ? HeatParams::from_omega(static_cast<float>(o.omega), static_cast<float>(o.gamma))
             : HeatParams::from_alpha(o.alpha, o.dt, o.dl, static_cast<float>(o.gamma));
}

HostField initial_field(const SimOptions& o, const HeatParams& p) {
  if (!o.field_file.empty()) {
    HostField f = load_field(o.field_file);
    if (f.x != o.x || f.y != o.y || f.w != o.w)
      fail(Errc::shape_mismatch, "field file dimensions do not match the fabric");
    return f;
  }
  const auto X = static_cast<uint32_t>(o.x), Y = static_cast<uint32_t>(o.y),
             W = static_cast<uint32_t>(o.w);
  if (o.preset == "uniform") return HostField(X, Y, W, p.gamma);
  if (o.preset == "zero") return HostField(X, Y, W, 0.0f);
  if (o.preset == "hot-boundary") {
    HostField f(X, Y, W, 0.0f);
    for (uint32_t x = 0; x < X; ++x)
      for (uint32_t y = 0; y < Y; ++y)
        for (uint32_t z = 0; z < W; ++z)
          if (x == 0 || x == X - 1 || y == 0 || y == Y - 1 || z == 0 || z == W - 1)
            f.at(x, y, z) = p.gamma;
    return f;
  }
  fail(Errc::invalid_config, "unknown preset " + o.preset);
}

KernelRoute route_from(const SimOptions& o) {
  if (o.route == "fused") return KernelRoute::fused;
  if (o.route == "generic") return KernelRoute::generic;
  fail(Errc::invalid_config, "unknown route " + o.route);
}

ordered_json config_echo(const SimOptions& o, const HeatParams& p) {
  ordered_json j;
  j["x"] = o.x;
  j["y"] = o.y;
  j["w"] = o.w;
  j["clock_hz"] = o.clock_hz;
  j["omega"] = p.omega;
  j["psi"] = p.psi;
  j["gamma"] = p.gamma;
  j["preset"] = o.field_file.empty() ? o.preset : ("file:" + o.field_file);
  j["route"] = o.route;
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) fail(Errc::io_error, "cannot open " + path.string());
  f << text;
  if (!f) fail(Errc::io_error, "write failed: " + path.string());
}

std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_result(const SimOptions& o, const ordered_json& record) {
  fs::create_directories(o.out_dir);
  if (o.format == "json") {
    write_text(fs::path(o.out_dir) / "result.json", record.dump(2) + "\n");
    return;
  }
  if (o.format != "csv") fail(Errc::invalid_config, "unknown format " + o.format);
  std::ostringstream csv;
  csv << "key,value\n";
  const auto& res = record.at("result");
  for (auto it = res.begin(); it != res.end(); ++it) {
    if (it.value().is_array()) continue;
    csv << it.key() << ','
        << (it.value().is_number() ? csv_num(it.value().get<double>()) : it.value().dump())
        << '\n';
  }
  write_text(fs::path(o.out_dir) / "result.csv", csv.str());
}

ordered_json phase_breakdown(const CycleLedger& l) {
  ordered_json j;
  j["compute"] = l.compute;
  j["exchange"] = l.exchange;
  j["reduce"] = l.reduce;
  j["broadcast"] = l.broadcast;
  j["overhead"] = l.overhead;
  return j;
}

struct FieldStats {
  double min = 0.0, max = 0.0;
};
FieldStats field_stats(const HostField& f) {
  FieldStats s{static_cast<double>(f.data.empty() ? 0.0f : f.data[0]),
               static_cast<double>(f.data.empty() ? 0.0f : f.data[0])};
  for (float v : f.data) {
    s.min = std::min(s.min, static_cast<double>(v));
    s.max = std::max(s.max, static_cast<double>(v));
  }
  return s;
}

int cmd_simulate_explicit(const SimOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const HeatParams p = heat_params_from(o);
  Fabric fabric = build_fabric({o.x, o.y, o.w, o.clock_hz});
  fabric.set_boundary_value(p.gamma);
  Dispatcher d;
  d.set_strict_finite(!o.no_strict);
  TraceSink sink;
  if (!o.trace_file.empty()) d.set_trace(&sink);

  auto T = array_from_host(fabric, initial_field(o, p), !o.no_strict);
  auto [R, rep] = explicit_run(fabric, d, T, p, o.steps, route_from(o), o.allow_unstable);
  const HostField out = gather_to_host(fabric, R);

  fs::create_directories(o.out_dir);
  save_field((fs::path(o.out_dir) / "field_out.wfld").string(), out);
  if (!o.trace_file.empty()) write_trace_jsonl(o.trace_file, sink.records);

  const auto stats = field_stats(out);
  const double modeled = perf::explicit_rate(o.clock_hz, static_cast<double>(o.w));
  ordered_json rec;
  rec["config"] = config_echo(o, p);
  rec["config"]["steps"] = o.steps;
  ordered_json res;
  res["iterations"] = rep.iterations;
  res["total_cycles"] = rep.cycles.total();
  res["cycles_per_iteration"] = rep.cycles_per_iteration;
  res["simulated_rate"] = rep.rate;
  res["modeled_rate"] = modeled;
  res["field_min"] = stats.min;
  res["field_max"] = stats.max;
  rec["result"] = std::move(res);
  rec["cycles_by_phase"] = phase_breakdown(rep.cycles);
  rec["meta"]["wall_clock_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_result(o, rec);
  std::printf("explicit: %llu steps, %llu cycles/step, %.1f iters/s (model %.1f)\n",
              static_cast<unsigned long long>(rep.iterations),
              static_cast<unsigned long long>(rep.cycles_per_iteration), rep.rate, modeled);
  return kExitOk;
}

int cmd_simulate_cg(const SimOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const HeatParams p = heat_params_from(o);
  Fabric fabric = build_fabric({o.x, o.y, o.w, o.clock_hz});
  fabric.set_boundary_value(p.gamma);
  Dispatcher d;
  d.set_strict_finite(!o.no_strict);
  TraceSink sink;
  if (!o.trace_file.empty()) d.set_trace(&sink);

  auto T = array_from_host(fabric, initial_field(o, p), !o.no_strict);
  CgConfig cfg{o.tol, o.max_iters, route_from(o)};
  auto [R, rep] = implicit_step(fabric, d, T, p, cfg);
  const HostField out = gather_to_host(fabric, R);

  fs::create_directories(o.out_dir);
  save_field((fs::path(o.out_dir) / "field_out.wfld").string(), out);
  if (!o.trace_file.empty()) write_trace_jsonl(o.trace_file, sink.records);

  const auto stats = field_stats(out);
  const double modeled = perf::implicit_rate(o.clock_hz, static_cast<double>(o.w),
                                             static_cast<double>(o.x), static_cast<double>(o.y));
  ordered_json rec;
  rec["config"] = config_echo(o, p);
  rec["config"]["tol"] = o.tol;
  rec["config"]["max_iters"] = o.max_iters;
  ordered_json res;
  res["converged"] = rep.converged;
  res["iterations"] = rep.iterations;
  res["residuals"] = rep.residual_history;
  res["total_cycles"] = rep.cycles.total() + rep.setup_cycles.total();
  res["loop_cycles"] = rep.cycles.total();
  res["cycles_per_iteration"] = rep.cycles_per_iteration;
  res["simulated_rate"] = rep.rate;
  res["modeled_rate"] = modeled;
  res["field_min"] = stats.min;
  res["field_max"] = stats.max;
  rec["result"] = std::move(res);
  rec["cycles_by_phase"] = phase_breakdown(rep.cycles + rep.setup_cycles);
  rec["meta"]["wall_clock_s"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_result(o, rec);
  std::printf("cg: converged=%s in %llu iterations, %llu cycles/iteration (model rate %.1f)\n",
              rep.converged ? "true" : "false",
              static_cast<unsigned long long>(rep.iterations),
              static_cast<unsigned long long>(rep.cycles_per_iteration), modeled);
  return kExitOk;
}

struct ValidateOptions {
  SimOptions sim;
  uint64_t seed = 1;
  bool inject_fault = false;
  std::string out_file;
};

int cmd_validate(const ValidateOptions& vo) {
  const SimOptions& o = vo.sim;
  const uint64_t cells = FabricConfig{o.x, o.y, o.w, o.clock_hz}.cell_count();
  if (cells > oracle::kDenseOracleCellLimit) {
    std::fprintf(stderr,
                 "validate: %llu cells exceeds the %llu-cell oracle bound; refusing\n",
                 static_cast<unsigned long long>(cells),
                 static_cast<unsigned long long>(oracle::kDenseOracleCellLimit));
    return kExitConfig;
  }
  const HeatParams p = heat_params_from(o);
  const auto X = static_cast<uint32_t>(o.x), Y = static_cast<uint32_t>(o.y),
             W = static_cast<uint32_t>(o.w);
  std::mt19937 rng(static_cast<uint32_t>(vo.seed));
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);

  bool all_pass = true;
  ordered_json report;

  // 1) explicit path must be bit-exact against the replay oracle
  {
    HostField init(X, Y, W);
    for (auto& v : init.data) v = dist(rng);

    RpcProgram step;
    step.instructions = {make_rpc(RpcOpcode::ExplicitHeatStepFused, {2, 1},
                                  {p.omega, p.one_minus_six_omega, p.gamma}),
                         make_rpc(RpcOpcode::Copy, {1, 2, 0, 0, W}),
                         make_rpc(RpcOpcode::Halt)};

    TraceSink sim_sink;
    {
      Fabric fabric = build_fabric({o.x, o.y, o.w, o.clock_hz});
      Dispatcher d;
      auto T = array_from_host(fabric, init);
      (void)T;
      d.set_trace(&sim_sink);
      for (uint64_t k = 0; k < o.steps; ++k) {
        d.set_trace_step(k);
        d.dispatch(fabric, step);
      }
    }
    TraceSink ref_sink;
    {
      oracle::ReplayVm vm({o.x, o.y, o.w, o.clock_hz});
      vm.set_buffer(1, init);
      vm.set_trace(&ref_sink);
      for (uint64_t k = 0; k < o.steps; ++k) {
        vm.set_trace_step(k);
        vm.run(step);
      }
    }
    if (vo.inject_fault && !sim_sink.records.empty()) {
      auto& victim = sim_sink.records[sim_sink.records.size() / 2];
      if (!victim.values.empty()) victim.values[0] += 1.0f;
    }
    const auto diff = oracle::diff_traces(sim_sink.records, ref_sink.records, 0.0);
    std::printf("check explicit-bit-exact: %s%s%s\n", diff.passed ? "PASS" : "FAIL",
                diff.passed ? " " : " -- ", diff.passed ? "" : diff.message.c_str());
    report["explicit_bit_exact"] = diff.passed;
    if (!diff.passed) report["explicit_divergence"] = diff.message;
    all_pass = all_pass && diff.passed;
  }

  // 2) CG solution against the dense direct solve
  {
    HostField init(X, Y, W);
    for (auto& v : init.data) v = dist(rng);
    for (uint32_t x = 0; x < X; ++x)
      for (uint32_t y = 0; y < Y; ++y)
        for (uint32_t z = 0; z < W; ++z)
          if (x == 0 || x == X - 1 || y == 0 || y == Y - 1 || z == 0 || z == W - 1)
            init.at(x, y, z) = p.gamma;

    Fabric fabric = build_fabric({o.x, o.y, o.w, o.clock_hz});
    Dispatcher d;
    auto T = array_from_host(fabric, init);
    auto [R, rep] = implicit_step(fabric, d, T, p, CgConfig{1e-8, 10000});
    const HostField sim = gather_to_host(fabric, R);
    const auto ref = oracle::ref_dense_solve(p, oracle::DenseGrid::from_host(init));
    double max_rel = 0.0;
    for (uint32_t x = 0; x < X; ++x)
      for (uint32_t y = 0; y < Y; ++y)
        for (uint32_t z = 0; z < W; ++z) {
          const double r = ref.at(x, y, z);
          max_rel = std::max(max_rel, std::abs(static_cast<double>(sim.at(x, y, z)) - r) /
                                          std::max(1.0, std::abs(r)));
        }
    const bool pass = max_rel < 1e-5;
    std::printf("check cg-vs-dense: %s -- max relative error %.3g (tol 1e-5), %llu iterations\n",
                pass ? "PASS" : "FAIL", max_rel,
                static_cast<unsigned long long>(rep.iterations));
    report["cg_vs_dense"] = pass;
    report["cg_max_rel_error"] = max_rel;
    all_pass = all_pass && pass;
  }

  if (!vo.out_file.empty()) write_text(vo.out_file, report.dump(2) + "\n");
  return all_pass ? kExitOk : kExitValidation;
}

struct ModelOptions {
  double clock_hz = perf::kDefaultClockHz;
  double x = 750, y = 950;
  std::string w_list = "50,1000,4000";
  std::string out_file;
  std::string format = "csv";
  std::string registry_file;
  // compare
  double wse_w = 80;
  std::string wse_mode = "explicit";
  std::string of_preset = "eq12";
  double of_ncells = 1.31e6;
};

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      fail(Errc::invalid_config, "bad number in list: " + item);
    }
  }
  if (out.empty()) fail(Errc::invalid_config, "empty list");
  return out;
}

void emit_table(const ModelOptions& mo, const std::string& csv, const ordered_json& j) {
  std::string text = mo.format == "json" ? j.dump(2) + "\n" : csv;
  if (mo.out_file.empty())
    std::fputs(text.c_str(), stdout);
  else
    write_text(mo.out_file, text);
}

int cmd_model_roofline(const ModelOptions& mo) {
  const auto ws = parse_list(mo.w_list);
  std::ostringstream csv;
  csv << "w,explicit_cycles,explicit_rate,cg_cycles,implicit_rate,ratio,dot_time_us\n";
  ordered_json rows = ordered_json::array();
  for (double w : ws) {
    const uint64_t ec = round_cycles(6.5 * w) + 78;
    const uint64_t cc = round_cycles(10.5 * w) + 2 * static_cast<uint64_t>(mo.x + mo.y) + 337;
    const double er = perf::explicit_rate(mo.clock_hz, w);
    const double ir = perf::implicit_rate(mo.clock_hz, w, mo.x, mo.y);
    const double dt_us = perf::dot_time_s(mo.clock_hz, w, mo.x, mo.y) * 1e6;
    csv << csv_num(w) << ',' << ec << ',' << csv_num(er) << ',' << cc << ',' << csv_num(ir)
        << ',' << csv_num(er / ir) << ',' << csv_num(dt_us) << '\n';
    ordered_json row;
    row["w"] = w;
    row["explicit_cycles"] = ec;
    row["explicit_rate"] = er;
    row["cg_cycles"] = cc;
    row["implicit_rate"] = ir;
    row["ratio"] = er / ir;
    row["dot_time_us"] = dt_us;
    rows.push_back(std::move(row));
  }
  emit_table(mo, csv.str(), rows);
  return kExitOk;
}

std::map<std::string, double> registry_from(const ModelOptions& mo) {
  if (mo.registry_file.empty()) return perf::default_bandwidth_registry();
  std::ifstream f(mo.registry_file);
  if (!f) fail(Errc::io_error, "cannot open " + mo.registry_file);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::io_error, std::string("bad registry file: ") + e.what());
  }
  std::map<std::string, double> reg;
  for (auto it = j.begin(); it != j.end(); ++it) reg[it.key()] = it.value().get<double>();
  return reg;
}

int cmd_model_survey(const ModelOptions& mo) {
  const auto rows = perf::default_survey_rows();
  const auto results = perf::gpu_survey(rows, registry_from(mo));
  std::ostringstream csv;
  csv << "study,device,width,w,bandwidth,computed_r_max,reported_r_max,rel_error_pct,note\n";
  ordered_json jrows = ordered_json::array();
  for (const auto& r : results) {
    std::string note;
    if (r.flagged) {
      note = "listed W inconsistent; width^3=" + csv_num(r.alt_w) +
             " gives " + csv_num(r.alt_computed) + " (" + csv_num(r.alt_rel_error * 100) + "%)";
    }
    csv << r.row.study << ',' << r.row.device << ',' << csv_num(r.row.subdomain_width) << ','
        << csv_num(r.row.w) << ',' << csv_num(r.bandwidth) << ',' << csv_num(r.computed_r_max)
        << ',' << csv_num(r.row.reported_r_max) << ',' << csv_num(r.rel_error * 100.0) << ",\""
        << note << "\"\n";
    ordered_json jr;
    jr["study"] = r.row.study;
    jr["device"] = r.row.device;
    jr["subdomain_width"] = r.row.subdomain_width;
    jr["w"] = r.row.w;
    jr["bandwidth"] = r.bandwidth;
    jr["computed_r_max"] = r.computed_r_max;
    jr["reported_r_max"] = r.row.reported_r_max;
    jr["rel_error"] = r.rel_error;
    jr["flagged"] = r.flagged;
    if (r.flagged) {
      jr["alt_w"] = r.alt_w;
      jr["alt_computed"] = r.alt_computed;
      jr["alt_rel_error"] = r.alt_rel_error;
    }
    jrows.push_back(std::move(jr));
  }
  emit_table(mo, csv.str(), jrows);
  return kExitOk;
}

int cmd_model_compare(const ModelOptions& mo) {
  const double wse_rate =
      mo.wse_mode == "explicit"
          ? perf::explicit_rate(mo.clock_hz, mo.wse_w)
          : (mo.wse_mode == "cg"
                 ? perf::implicit_rate(mo.clock_hz, mo.wse_w, mo.x, mo.y)
                 : (fail(Errc::invalid_config, "wse-mode must be explicit or cg"), 0.0));
  const auto fit = perf::scaling_preset(mo.of_preset);
  const double of_rate = fit.evaluate(mo.of_ncells);
  if (of_rate <= 0.0)
    fail(Errc::bad_argument, "cluster preset extrapolates to zero at this cell count");
  ordered_json j;
  j["wse"] = {{"mode", mo.wse_mode}, {"w", mo.wse_w},      {"x", mo.x},
              {"y", mo.y},           {"clock_hz", mo.clock_hz}, {"rate", wse_rate}};
  j["cluster"] = {{"preset", mo.of_preset}, {"label", fit.label},
                  {"n_cells", mo.of_ncells}, {"rate", of_rate}};
  j["speedup"] = wse_rate / of_rate;
  std::ostringstream csv;
  csv << "wse_mode,wse_w,wse_rate,preset,n_cells,cluster_rate,speedup\n"
      << mo.wse_mode << ',' << csv_num(mo.wse_w) << ',' << csv_num(wse_rate) << ','
      << mo.of_preset << ',' << csv_num(mo.of_ncells) << ',' << csv_num(of_rate) << ','
      << csv_num(wse_rate / of_rate) << '\n';
  emit_table(mo, csv.str(), j);
  return kExitOk;
}

int cmd_fit(const std::string& csv_path, const std::string& out_file) {
  std::ifstream f(csv_path);
  if (!f) fail(Errc::io_error, "cannot open " + csv_path);
  std::string line;
  if (!std::getline(f, line) || line.find("n_cells") == std::string::npos ||
      line.find("rate") == std::string::npos)
    fail(Errc::io_error, "expected a CSV header 'n_cells,rate'");
  std::vector<perf::ScalingPoint> pts;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
      fail(Errc::io_error, "bad CSV row: " + line);
    try {
      pts.push_back({std::stod(a), std::stod(b)});
    } catch (const std::exception&) {
      fail(Errc::io_error, "bad CSV row: " + line);
    }
  }
  const auto fit = perf::fit_scaling(pts);
  ordered_json j;
  j["a"] = fit.intercept;
  j["b"] = fit.slope;
  j["r_squared"] = fit.r_squared;
  j["n_samples"] = pts.size();
  const std::string text = j.dump(2) + "\n";
  if (out_file.empty())
    std::fputs(text.c_str(), stdout);
  else
    write_text(out_file, text);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tile-fabric simulator and performance models for heat-equation solvers"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file (flags override file values)");

  SimOptions sim_opts;
  auto* simulate = app.add_subcommand("simulate", "Run a solver on the simulated fabric");
  simulate->require_subcommand(1);
  auto* sim_explicit = simulate->add_subcommand("explicit", "Forward-time stepping");
  add_sim_options(sim_explicit, sim_opts);
  sim_explicit->add_option("--steps", sim_opts.steps, "Number of time steps")
      ->capture_default_str();
  auto* sim_cg = simulate->add_subcommand("cg", "One backward-time step solved with CG");
  add_sim_options(sim_cg, sim_opts);
  sim_cg->add_option("--tol", sim_opts.tol, "Relative residual target")->capture_default_str();
  sim_cg->add_option("--max-iters", sim_opts.max_iters, "Iteration budget")
      ->capture_default_str();

  ValidateOptions val_opts;
  val_opts.sim.x = 4;
  val_opts.sim.y = 4;
  val_opts.sim.w = 8;
  val_opts.sim.omega = 0.1;
  val_opts.sim.steps = 5;
  auto* validate = app.add_subcommand("validate", "Run simulator and oracle side by side");
  add_sim_options(validate, val_opts.sim);
  validate->add_option("--steps", val_opts.sim.steps, "Explicit steps to diff")
      ->capture_default_str();
  validate->add_option("--seed", val_opts.seed, "Random field seed")->capture_default_str();
  validate->add_flag("--inject-fault", val_opts.inject_fault,
                     "Perturb one traced value to demonstrate divergence localization");
  validate->add_option("--out", val_opts.out_file, "Write a JSON report");

  ModelOptions model_opts;
  auto* model = app.add_subcommand("model", "Analytic performance models");
  model->require_subcommand(1);
  auto* roofline = model->add_subcommand("roofline", "Rate tables over a W sweep");
  roofline->add_option("--clock", model_opts.clock_hz, "Clock in Hz")->capture_default_str();
  roofline->add_option("--w", model_opts.w_list, "Comma-separated W values")
      ->capture_default_str();
  roofline->add_option("--x", model_opts.x, "Fabric columns")->capture_default_str();
  roofline->add_option("--y", model_opts.y, "Fabric rows")->capture_default_str();
  roofline->add_option("--out", model_opts.out_file, "Output file (default stdout)");
  roofline->add_option("--format", model_opts.format, "csv | json")->capture_default_str();
  auto* survey = model->add_subcommand("survey", "Weak-scaling literature reproduction");
  survey->add_option("--registry", model_opts.registry_file,
                     "Bandwidth registry JSON (device -> bytes/s)");
  survey->add_option("--out", model_opts.out_file, "Output file (default stdout)");
  survey->add_option("--format", model_opts.format, "csv | json")->capture_default_str();
  auto* compare = model->add_subcommand("compare", "Fabric-vs-cluster ratio at chosen points");
  compare->add_option("--clock", model_opts.clock_hz, "Clock in Hz")->capture_default_str();
  compare->add_option("--x", model_opts.x, "Fabric columns")->capture_default_str();
  compare->add_option("--y", model_opts.y, "Fabric rows")->capture_default_str();
  compare->add_option("--wse-w", model_opts.wse_w, "Cells per tile on the fabric side")
      ->capture_default_str();
  compare->add_option("--wse-mode", model_opts.wse_mode, "explicit | cg")->capture_default_str();
  compare->add_option("--of-preset", model_opts.of_preset, "Cluster fit preset (eq12..eq16)")
      ->capture_default_str();
  compare->add_option("--of-ncells", model_opts.of_ncells, "Cluster-side total cell count")
      ->capture_default_str();
  compare->add_option("--out", model_opts.out_file, "Output file (default stdout)");
  compare->add_option("--format", model_opts.format, "csv | json")->capture_default_str();

  std::string fit_csv, fit_out;
  auto* fit = app.add_subcommand("fit", "Least-squares linear scaling fit from a CSV");
  fit->add_option("samples", fit_csv, "CSV with header n_cells,rate")->required();
  fit->add_option("--out", fit_out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (sim_explicit->parsed()) return cmd_simulate_explicit(sim_opts);
    if (sim_cg->parsed()) return cmd_simulate_cg(sim_opts);
    if (validate->parsed()) return cmd_validate(val_opts);
    if (roofline->parsed()) return cmd_model_roofline(model_opts);
    if (survey->parsed()) return cmd_model_survey(model_opts);
    if (compare->parsed()) return cmd_model_compare(model_opts);
    if (fit->parsed()) return cmd_fit(fit_csv, fit_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
