#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "wfsim/fabric.hpp"
#include "wfsim/field.hpp"
#include "wfsim/rpc.hpp"

namespace wfsim {

// Heat-equation constants. omega = alpha*dt/dl^2 is the off-diagonal weight
// of the explicit update (stable for omega < 1/6); psi = 1/(1+6*omega)
// normalizes the implicit system; gamma is the fixed boundary value.
//
// one_minus_six_omega is formed in f32 as 1.0f - 6.0f*omega so that
// omega*sum + (1-6*omega)*T is an exact convex combination for uniform
// fields whose stencil arithmetic is exact.
struct HeatParams {
  double alpha = 0.0, dt = 0.0, dl = 0.0;  // zero unless built from the triple
  float omega = 0.0f;
  float psi = 1.0f;
  float six_omega = 0.0f;
  float one_minus_six_omega = 1.0f;
  float neg_omega_psi = 0.0f;
  float gamma = 0.0f;

  bool explicit_stable() const { return omega < (1.0f / 6.0f); }

  static HeatParams from_omega(float omega, float gamma);
  static HeatParams from_alpha(double alpha, double dt, double dl, float gamma);
};

enum class KernelRoute { fused, generic };

struct CgConfig {
  double tol = 1e-6;
  uint64_t max_iters = 1000;
  KernelRoute route = KernelRoute::fused;
};

struct SolverReport {
  uint64_t iterations = 0;
  bool converged = true;
  std::vector<double> residual_history;  // l2 norms, starting at ||r0||
  CycleLedger cycles;                    // iteration-loop charge (rate basis)
  CycleLedger setup_cycles;              // formation/start-vector charge
  uint64_t cycles_per_iteration = 0;
  double rate = 0.0;  // iterations * F_c / cycles.total()
};

// Solver-library RPCs, added through the public registration path.
constexpr uint16_t kOpEdgeColumnFill = kFirstCustomOpcode + 0;  // [dst] / [value]
constexpr uint16_t kOpEdgeColumnCopy = kFirstCustomOpcode + 1;  // [dst, src] / []
constexpr uint16_t kOpCgInitX = kFirstCustomOpcode + 2;         // [x, b] / []
constexpr uint16_t kOpDotAxpyFused = kFirstCustomOpcode + 3;    // [a, b, x, p, sreg] / [alpha]

// Scalar registers used by the solver drivers (register 0 is the Moat value).
constexpr uint32_t kSregDot = 1;
constexpr uint32_t kSregNormB = 2;
constexpr uint32_t kSregRho = 3;
constexpr uint32_t kSregDelta = 4;

// Idempotent; registers the four solver kernels above.
void register_solver_kernels(Dispatcher& d);

// One forward-time step: interior cells become omega*sum(neighbors) +
// (1-6*omega)*center, all six global boundary faces reset to gamma. The fused
// route charges exactly round(6.5*W) + 78 cycles; the generic route dispatches
// the lowered seven-point expression plus boundary fills.
FieldHandle explicit_step(Fabric& fabric, Dispatcher& d, const FieldHandle& T,
                          const HeatParams& p, KernelRoute route = KernelRoute::fused,
                          bool allow_unstable = false);

std::pair<FieldHandle, SolverReport> explicit_run(Fabric& fabric, Dispatcher& d,
                                                  const FieldHandle& T0, const HeatParams& p,
                                                  uint64_t nsteps,
                                                  KernelRoute route = KernelRoute::fused,
                                                  bool allow_unstable = false);

// Matrix-free y = A x for the backward-time system: interior rows
// y = x - omega*psi*sum(neighbors), boundary rows act as identity.
FieldHandle spmv(Fabric& fabric, Dispatcher& d, const FieldHandle& x, const HeatParams& p,
                 KernelRoute route = KernelRoute::fused);

// Reduce-to-center dot product; returns the f32 value and its cycle charge
// (W + X + Y + 66).
std::pair<float, uint64_t> dot(Fabric& fabric, Dispatcher& d, const FieldHandle& a,
                               const FieldHandle& b);

// Classic two-reduction CG on A x = b. The start vector is zero on the
// interior with b's boundary values unless x0 is supplied; the solution
// update is overlapped with the residual-norm reduction, and each iteration
// charges exactly round(10.5*W) + 2*(X+Y) + 337 cycles. Throws
// Errc::breakdown on a zero-curvature direction and Errc::non_convergence
// when max_iters is exhausted.
std::pair<FieldHandle, SolverReport> cg_solve(Fabric& fabric, Dispatcher& d,
                                              const FieldHandle& b, const HeatParams& p,
                                              const CgConfig& cfg,
                                              const FieldHandle* x0 = nullptr);

// One backward-time step: rhs = psi*T with boundary rows imposed to gamma,
// then CG warm-started from T.
std::pair<FieldHandle, SolverReport> implicit_step(Fabric& fabric, Dispatcher& d,
                                                   const FieldHandle& T, const HeatParams& p,
                                                   const CgConfig& cfg);

}  // namespace wfsim
