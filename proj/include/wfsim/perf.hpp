#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wfsim/error.hpp"

namespace wfsim::perf {

// Default fabric clock, obtained by inverting the dot-latency model at the
// measured operating point: calibrate_clock(3.25e-6, 1000, 750, 950).
constexpr double kDefaultClockHz = 851.08e6;

// Fraction of wafer power drawn at the largest fabric tested.
constexpr double kMeasuredWatts = 24.6e3;

// --- tile-fabric rooflines ---------------------------------------------------

// Explicit-step iteration rate: F_c / (6.5*W + 78). Independent of the fabric
// extents (perfect weak scaling).
double explicit_rate(double clock_hz, double w);

// CG iteration rate: F_c / (10.5*W + 2*(X+Y) + 337).
double implicit_rate(double clock_hz, double w, double x, double y);

// Reduce-to-center dot product: (W + X + Y + 66) / F_c seconds.
double dot_time_s(double clock_hz, double w, double x, double y);

// Clock implied by a measured dot latency.
double calibrate_clock(double measured_dot_s, double w, double x, double y);

// Smallest integer W in [w_lo, w_hi] whose explicit/implicit rate ratio drops
// to `ratio` or below, or 0 when the ratio never crosses in range.
uint64_t ratio_crossing_w(double clock_hz, double x, double y, double ratio, uint64_t w_lo,
                          uint64_t w_hi);

// --- distributed-computing models ---------------------------------------------

// Minimum time per iteration with boundary exchange overlapped against
// interior compute: max(t_comp, t_comm) + t_b.
struct FischerModel {
  double t_comp = 0.0;
  double t_comm = 0.0;
  double t_b = 0.0;
};
double fischer_time(const FischerModel& m);

// Effective-bandwidth bound for memory-limited stencil solvers.
// d_u/d_k are per-cell memory footprints of unknown/known variables (bytes),
// w_m the peak memory bandwidth (bytes/s), w the cells per device.
struct RassModel {
  double d_u = 1.0;
  double d_k = 0.0;
  double w_m = 0.0;
  double w = 1.0;
};
struct RassMetrics {
  double a_eff = 0.0;      // 2*D_u + D_k
  double t_eff = 0.0;      // A_eff / t_it
  double t_it_min = 0.0;   // 8*W / w_m
  double r_it_max = 0.0;   // w_m / (8*W)
};
RassMetrics rass_metrics(const RassModel& m, double t_it);

// --- weak-scaling literature survey -------------------------------------------

struct GpuSurveyRow {
  std::string study;
  double subdomain_width = 0.0;  // cells
  double w = 0.0;                // cells per device
  std::string device;
  double reported_r_max = 0.0;  // iterations/s
};

struct SurveyResult {
  GpuSurveyRow row;
  double bandwidth = 0.0;
  double computed_r_max = 0.0;
  double rel_error = 0.0;
  // Set when the listed W is inconsistent with the reported rate but the
  // cubed subdomain width reproduces it.
  bool flagged = false;
  double alt_w = 0.0;
  double alt_computed = 0.0;
  double alt_rel_error = 0.0;
};

// Peak-bandwidth registry, back-derived from the survey rows (the sources do
// not list w_m). Keys are device names.
std::map<std::string, double> default_bandwidth_registry();
std::vector<GpuSurveyRow> default_survey_rows();

std::vector<SurveyResult> gpu_survey(std::span<const GpuSurveyRow> rows,
                                     const std::map<std::string, double>& registry);

// --- cluster scaling fits ------------------------------------------------------

// R_i(N_c) = a - b*N_c, clamped at zero below the root.
struct LinearFit {
  double intercept = 0.0;  // a, iterations/s
  double slope = 0.0;      // b, iterations/s per cell
  double r_squared = 1.0;
  std::string label;

  double evaluate(double n_cells) const {
    const double r = intercept - slope * n_cells;
    return r > 0.0 ? r : 0.0;
  }
};

struct ScalingPoint {
  double n_cells = 0.0;
  double rate = 0.0;
};

// Ordinary least squares over rate = a - b*n_cells.
LinearFit fit_scaling(std::span<const ScalingPoint> samples);

// Published fit presets: eq12/eq13 (explicit, W=4096/15625) and
// eq14/eq15/eq16 (implicit, W=13824/21952/27000).
LinearFit scaling_preset(const std::string& name);
std::vector<std::string> scaling_preset_names();

// Measured cluster operating points behind the explicit presets
// (fastest/slowest per workload); used to refit and cross-check.
std::vector<ScalingPoint> cluster_points_w4096();
std::vector<ScalingPoint> cluster_points_w15625();

// --- power ----------------------------------------------------------------------

double power_efficiency(double flops_per_s, double watts);
// Modeled explicit flop rate: explicit_rate * X*Y*W * flops_per_cell
// (8 single-precision flops per cell per step).
double model_wse_flop_rate(double clock_hz, double w, double x, double y,
                           double flops_per_cell = 8.0);

}  // namespace wfsim::perf
