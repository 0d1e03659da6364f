#include "wfsim/solver.hpp"

#include <cmath>
#include <string>

namespace wfsim {

HeatParams HeatParams::from_omega(float omega, float gamma) {
  if (!std::isfinite(omega) || omega < 0.0f)
    fail(Errc::invalid_config, "omega must be finite and non-negative");
  HeatParams p;
  p.omega = omega;
  p.gamma = gamma;
  p.six_omega = 6.0f * omega;
  p.one_minus_six_omega = 1.0f - p.six_omega;
  p.psi = static_cast<float>(1.0 / (1.0 + 6.0 * static_cast<double>(omega)));
  p.neg_omega_psi = -(p.omega * p.psi);
  return p;
}

HeatParams HeatParams::from_alpha(double alpha, double dt, double dl, float gamma) {
  if (!(alpha > 0.0) || !(dt > 0.0) || !(dl > 0.0))
    fail(Errc::invalid_config, "alpha, dt, dl must all be positive");
  HeatParams p = from_omega(static_cast<float>(alpha * dt / (dl * dl)), gamma);
  p.alpha = alpha;
  p.dt = dt;
  p.dl = dl;
  return p;
}

namespace {

bool edge_tile(const FabricConfig& cfg, int64_t x, int64_t y) {
  return x == 0 || x == cfg.x_dim - 1 || y == 0 || y == cfg.y_dim - 1;
}

bool z_boundary(const FabricConfig& cfg, int64_t z) { return z == 0 || z == cfg.z_len - 1; }

void check_handle(const Fabric& fabric, const FieldHandle& h, const char* what) {
  const auto& cfg = fabric.config();
  if (h.x != cfg.x_dim || h.y != cfg.y_dim || h.w != cfg.z_len)
    fail(Errc::shape_mismatch, std::string(what) + ": handle shape does not match the fabric");
}

FieldHandle make_handle(const Fabric& fabric, uint32_t id) {
  const auto& cfg = fabric.config();
  return FieldHandle{id, static_cast<uint32_t>(cfg.x_dim), static_cast<uint32_t>(cfg.y_dim),
                     static_cast<uint32_t>(cfg.z_len)};
}

void edge_column_fill_handler(Fabric& fb, const RpcInstruction& in) {
  const auto& cfg = fb.config();
  const uint32_t dst = in.operands[0];
  const float v = in.immediates[0];
  for (int64_t y = 0; y < cfg.y_dim; ++y) {
    for (int64_t x = 0; x < cfg.x_dim; ++x) {
      auto& col = fb.worker_buffer(x, y, dst);
      if (edge_tile(cfg, x, y)) std::fill(col.begin(), col.end(), v);
    }
  }
}

void edge_column_copy_handler(Fabric& fb, const RpcInstruction& in) {
  const auto& cfg = fb.config();
  const uint32_t dst = in.operands[0], src = in.operands[1];
  if (dst == src) fail(Errc::bad_argument, "EdgeColumnCopy: dst must differ from src");
  fb.require_buffer_everywhere(src, "EdgeColumnCopy");
  for (int64_t y = 0; y < cfg.y_dim; ++y) {
    for (int64_t x = 0; x < cfg.x_dim; ++x) {
      auto& col = fb.worker_buffer(x, y, dst);
      if (!edge_tile(cfg, x, y)) continue;
      const auto& s = fb.require_worker_buffer(x, y, src);
      std::copy(s.begin(), s.end(), col.begin());
    }
  }
}

// Start vector: boundary rows take b's values, interior rows start at zero.
void cg_init_x_handler(Fabric& fb, const RpcInstruction& in) {
  const auto& cfg = fb.config();
  const uint32_t xbuf = in.operands[0], bbuf = in.operands[1];
  if (xbuf == bbuf) fail(Errc::bad_argument, "CgInitX: x must differ from b");
  fb.require_buffer_everywhere(bbuf, "CgInitX");
  for (int64_t y = 0; y < cfg.y_dim; ++y) {
    for (int64_t x = 0; x < cfg.x_dim; ++x) {
      auto& col = fb.worker_buffer(x, y, xbuf);
      const auto& b = fb.require_worker_buffer(x, y, bbuf);
      const bool edge = edge_tile(cfg, x, y);
      for (int64_t z = 0; z < cfg.z_len; ++z)
        col[static_cast<size_t>(z)] =
            (edge || z_boundary(cfg, z)) ? b[static_cast<size_t>(z)] : 0.0f;
    }
  }
}

// sreg <- sum(a*b) with the same fold as DotReduce, while the solution
// variable update x += alpha*p rides the reduction.
void dot_axpy_handler(Fabric& fb, const RpcInstruction& in) {
  const auto& cfg = fb.config();
  const uint32_t a = in.operands[0], b = in.operands[1];
  const uint32_t xbuf = in.operands[2], pbuf = in.operands[3], sreg = in.operands[4];
  const float alpha = in.immediates[0];
  fb.require_buffer_everywhere(a, "DotAxpyFused");
  fb.require_buffer_everywhere(b, "DotAxpyFused");
  fb.require_buffer_everywhere(xbuf, "DotAxpyFused");
  fb.require_buffer_everywhere(pbuf, "DotAxpyFused");
  float total = 0.0f;
  for (int64_t y = 0; y < cfg.y_dim; ++y) {
    float row = 0.0f;
    for (int64_t x = 0; x < cfg.x_dim; ++x) {
      const auto& va = fb.require_worker_buffer(x, y, a);
      const auto& vb = fb.require_worker_buffer(x, y, b);
      float partial = 0.0f;
      for (int64_t z = 0; z < cfg.z_len; ++z) partial = std::fmaf(va[z], vb[z], partial);
      row += partial;
      auto& vx = fb.require_worker_buffer(x, y, xbuf);
      const auto& vp = fb.require_worker_buffer(x, y, pbuf);
      for (int64_t z = 0; z < cfg.z_len; ++z)
        vx[static_cast<size_t>(z)] = std::fmaf(alpha, vp[static_cast<size_t>(z)],
                                               vx[static_cast<size_t>(z)]);
    }
    total += row;
  }
  fb.set_scalar_register(sreg, total);
}

}  // namespace

void register_solver_kernels(Dispatcher& d) {
  if (d.has_kernel(kOpEdgeColumnFill)) return;

  d.register_kernel(
      kOpEdgeColumnFill,
      KernelDef{.name = "EdgeColumnFill",
                .operand_count = 1,
                .immediate_count = 1,
                .worker = edge_column_fill_handler,
                .moat = nullptr,
                .cost = [](const FabricConfig& cfg, const RpcInstruction&) {
                  return PhaseCost{.compute = static_cast<uint64_t>(cfg.z_len)};
                },
                .dst_operand = 0});

  d.register_kernel(
      kOpEdgeColumnCopy,
      KernelDef{.name = "EdgeColumnCopy",
                .operand_count = 2,
                .immediate_count = 0,
                .worker = edge_column_copy_handler,
                .moat = nullptr,
                .cost = [](const FabricConfig& cfg, const RpcInstruction&) {
                  return PhaseCost{.compute = static_cast<uint64_t>(cfg.z_len)};
                },
                .dst_operand = 0});

  d.register_kernel(
      kOpCgInitX,
      KernelDef{.name = "CgInitX",
                .operand_count = 2,
                .immediate_count = 0,
                .worker = cg_init_x_handler,
                .moat = nullptr,
                .cost = [](const FabricConfig& cfg, const RpcInstruction&) {
                  return PhaseCost{.compute = static_cast<uint64_t>(cfg.z_len)};
                },
                .dst_operand = 0});

  d.register_kernel(
      kOpDotAxpyFused,
      KernelDef{.name = "DotAxpyFused",
                .operand_count = 5,
                .immediate_count = 1,
                .worker = dot_axpy_handler,
                .moat = nullptr,
                .cost =
                    [](const FabricConfig& cfg, const RpcInstruction&) {
                      // Same charge as a standalone dot; the axpy is hidden.
                      return PhaseCost{.compute = static_cast<uint64_t>(cfg.z_len),
                                       .reduce = static_cast<uint64_t>(cfg.x_dim + cfg.y_dim),
                                       .overhead = 66 - Dispatcher::kBroadcastOverheadCycles};
                    },
                .dst_operand = 2});
}

namespace {

// Generic-route explicit step: the Eq.-form seven-point expression lowered to
// builtin RPCs, then Moat-side edge columns and z faces reset to gamma.
RpcProgram build_generic_explicit_program(const FabricConfig& cfg, uint32_t dst_id,
                                          const FieldHandle& T, const HeatParams& p) {
  const uint32_t w = static_cast<uint32_t>(cfg.z_len);
  RpcProgram prog;
  auto& code = prog.instructions;
  code.push_back(make_rpc(RpcOpcode::BroadcastScalar, {Fabric::kGammaRegister}, {p.gamma}));
  if (w >= 3) {
    FieldHandle dst = T;
    dst.id = dst_id;
    const Slice interior{1, w - 1};
    const Slice down{0, w - 2};
    const Slice up{2, w};
    Expr neighbors = Expr::field(T, interior, -1, 0) + Expr::field(T, interior, 1, 0) +
                     Expr::field(T, interior, 0, -1) + Expr::field(T, interior, 0, 1) +
                     Expr::field(T, down) + Expr::field(T, up);
    Expr rhs = p.omega * neighbors + p.one_minus_six_omega * Expr::field(T, interior);
    RpcProgram stmt = lower(AssignStmt{dst, interior, rhs}, cfg);
    stmt.instructions.pop_back();  // drop Halt; boundary resets follow
    code.insert(code.end(), stmt.instructions.begin(), stmt.instructions.end());
  }
  code.push_back(make_rpc(static_cast<RpcOpcode>(kOpEdgeColumnFill), {dst_id}, {p.gamma}));
  code.push_back(make_rpc(RpcOpcode::ScalarFill, {dst_id, 0, 1}, {p.gamma}));
  code.push_back(make_rpc(RpcOpcode::ScalarFill, {dst_id, w - 1, 1}, {p.gamma}));
  code.push_back(make_rpc(RpcOpcode::Halt));
  return prog;
}

void append_spmv(std::vector<RpcInstruction>& code, const FabricConfig& cfg, uint32_t dst,
                 uint32_t src, const HeatParams& p, KernelRoute route) {
  if (route == KernelRoute::fused) {
    code.push_back(make_rpc(RpcOpcode::SpmvFused, {dst, src}, {p.neg_omega_psi}));
    return;
  }
  const uint32_t w = static_cast<uint32_t>(cfg.z_len);
  code.push_back(make_rpc(RpcOpcode::Copy, {dst, src, 0, 0, w}));
  if (w >= 3) {
    const uint32_t t = kTempBufferBase;
    const uint32_t len = w - 2;
    code.push_back(make_rpc(RpcOpcode::ScalarFill, {t, 1, len}, {0.0f}));
    code.push_back(make_rpc(RpcOpcode::ZShiftAddDown, {t, src, 1, len}));
    code.push_back(make_rpc(RpcOpcode::ZShiftAddUp, {t, src, 1, len}));
    code.push_back(make_rpc(RpcOpcode::ShiftAddWest, {t, src, 1, 1, len}));
    code.push_back(make_rpc(RpcOpcode::ShiftAddNorth, {t, src, 1, 1, len}));
    code.push_back(make_rpc(RpcOpcode::ShiftAddEast, {t, src, 1, 1, len}));
    code.push_back(make_rpc(RpcOpcode::ShiftAddSouth, {t, src, 1, 1, len}));
    code.push_back(make_rpc(RpcOpcode::Fmac, {dst, t, 1, 1, len}, {p.neg_omega_psi}));
  }
  code.push_back(make_rpc(static_cast<RpcOpcode>(kOpEdgeColumnCopy), {dst, src}));
}

}  // namespace

FieldHandle explicit_step(Fabric& fabric, Dispatcher& d, const FieldHandle& T,
                          const HeatParams& p, KernelRoute route, bool allow_unstable) {
  if (!fabric.analytic()) check_handle(fabric, T, "explicit_step");
  if (!p.explicit_stable() && !allow_unstable)
    fail(Errc::unstable, "omega >= 1/6 is unstable for the explicit step");
  register_solver_kernels(d);
  const uint32_t dst = fabric.allocate_buffer_id();
  if (route == KernelRoute::fused) {
    RpcProgram prog;
    prog.instructions = {make_rpc(RpcOpcode::ExplicitHeatStepFused, {dst, T.id},
                                  {p.omega, p.one_minus_six_omega, p.gamma}),
                         make_rpc(RpcOpcode::Halt)};
    d.dispatch(fabric, prog);
  } else {
    d.dispatch(fabric, build_generic_explicit_program(fabric.config(), dst, T, p));
  }
  return make_handle(fabric, dst);
}

std::pair<FieldHandle, SolverReport> explicit_run(Fabric& fabric, Dispatcher& d,
                                                  const FieldHandle& T0, const HeatParams& p,
                                                  uint64_t nsteps, KernelRoute route,
                                                  bool allow_unstable) {
  if (nsteps < 1) fail(Errc::bad_argument, "explicit_run needs nsteps >= 1");
  if (!fabric.analytic()) check_handle(fabric, T0, "explicit_run");
  if (!p.explicit_stable() && !allow_unstable)
    fail(Errc::unstable, "omega >= 1/6 is unstable for the explicit step");
  register_solver_kernels(d);

  uint32_t src = T0.id;
  uint32_t dst = fabric.allocate_buffer_id();
  CycleLedger delta;
  for (uint64_t k = 0; k < nsteps; ++k) {
    d.set_trace_step(k);
    if (route == KernelRoute::fused) {
      RpcProgram prog;
      prog.instructions = {make_rpc(RpcOpcode::ExplicitHeatStepFused, {dst, src},
                                    {p.omega, p.one_minus_six_omega, p.gamma}),
                           make_rpc(RpcOpcode::Halt)};
      delta += d.dispatch(fabric, prog);
    } else {
      FieldHandle cur = make_handle(fabric, src);
      delta += d.dispatch(fabric, build_generic_explicit_program(fabric.config(), dst, cur, p));
    }
    std::swap(src, dst);  // control-tile pointer swap, zero cycles
  }

  SolverReport rep;
  rep.iterations = nsteps;
  rep.cycles = delta;
  rep.cycles_per_iteration = delta.total() / nsteps;
  rep.rate = static_cast<double>(nsteps) * fabric.config().clock_hz /
             static_cast<double>(delta.total());
  return {make_handle(fabric, src), rep};
}

FieldHandle spmv(Fabric& fabric, Dispatcher& d, const FieldHandle& x, const HeatParams& p,
                 KernelRoute route) {
  check_handle(fabric, x, "spmv");
  register_solver_kernels(d);
  const uint32_t dst = fabric.allocate_buffer_id();
  RpcProgram prog;
  append_spmv(prog.instructions, fabric.config(), dst, x.id, p, route);
  prog.instructions.push_back(make_rpc(RpcOpcode::Halt));
  d.dispatch(fabric, prog);
  return make_handle(fabric, dst);
}

std::pair<float, uint64_t> dot(Fabric& fabric, Dispatcher& d, const FieldHandle& a,
                               const FieldHandle& b) {
  if (!fabric.analytic()) {
    check_handle(fabric, a, "dot");
    check_handle(fabric, b, "dot");
  }
  RpcProgram prog;
  prog.instructions = {make_rpc(RpcOpcode::DotReduce, {a.id, b.id, kSregDot}),
                       make_rpc(RpcOpcode::Halt)};
  const CycleLedger delta = d.dispatch(fabric, prog);
  return {fabric.scalar_register(kSregDot), delta.total()};
}

std::pair<FieldHandle, SolverReport> cg_solve(Fabric& fabric, Dispatcher& d,
                                              const FieldHandle& b, const HeatParams& p,
                                              const CgConfig& cfg, const FieldHandle* x0) {
  if (fabric.analytic()) fail(Errc::bad_argument, "cg_solve requires a materialized fabric");
  if (!(cfg.tol > 0.0)) fail(Errc::invalid_config, "cg tol must be > 0");
  check_handle(fabric, b, "cg_solve");
  if (x0) check_handle(fabric, *x0, "cg_solve x0");
  register_solver_kernels(d);

  const auto& fc = fabric.config();
  const uint32_t w = static_cast<uint32_t>(fc.z_len);
  const uint32_t xb = fabric.allocate_buffer_id();
  const uint32_t rb = fabric.allocate_buffer_id();
  const uint32_t qb = fabric.allocate_buffer_id();
  const uint32_t pb = fabric.allocate_buffer_id();

  d.set_trace_step(0);
  RpcProgram setup;
  {
    auto& code = setup.instructions;
    if (x0)
      code.push_back(make_rpc(RpcOpcode::Copy, {xb, x0->id, 0, 0, w}));
    else
      code.push_back(make_rpc(static_cast<RpcOpcode>(kOpCgInitX), {xb, b.id}));
    append_spmv(code, fc, qb, xb, p, cfg.route);
    code.push_back(make_rpc(RpcOpcode::Copy, {rb, b.id, 0, 0, w}));
    code.push_back(make_rpc(RpcOpcode::Fmac, {rb, qb, 0, 0, w}, {-1.0f}));
    code.push_back(make_rpc(RpcOpcode::Copy, {pb, rb, 0, 0, w}));
    code.push_back(make_rpc(RpcOpcode::DotReduce, {b.id, b.id, kSregNormB}));
    code.push_back(make_rpc(RpcOpcode::DotReduce, {rb, rb, kSregRho}));
    code.push_back(make_rpc(RpcOpcode::Halt));
  }
  const CycleLedger setup_delta = d.dispatch(fabric, setup);

  const double norm_b = std::sqrt(static_cast<double>(fabric.scalar_register(kSregNormB)));
  double rho = static_cast<double>(fabric.scalar_register(kSregRho));
  double resid = std::sqrt(rho);

  SolverReport rep;
  rep.setup_cycles = setup_delta;
  rep.residual_history.push_back(resid);

  const double target = cfg.tol * norm_b;
  bool converged = resid <= target;
  CycleLedger loop;
  uint64_t iters = 0;

  while (!converged) {
    if (iters >= cfg.max_iters)
      fail(Errc::non_convergence, "CG did not reach tol after " + std::to_string(iters) +
                                      " iterations (residual " + std::to_string(resid) + ")");
    ++iters;
    d.set_trace_step(iters);

    RpcProgram p1;
    append_spmv(p1.instructions, fc, qb, pb, p, cfg.route);
    p1.instructions.push_back(make_rpc(RpcOpcode::DotReduce, {pb, qb, kSregDelta}));
    p1.instructions.push_back(make_rpc(RpcOpcode::Halt));
    loop += d.dispatch(fabric, p1);

    const double delta = static_cast<double>(fabric.scalar_register(kSregDelta));
    if (!(delta > 0.0))
      fail(Errc::breakdown, "CG breakdown: curvature p'Ap = " + std::to_string(delta) +
                                " at iteration " + std::to_string(iters));
    const double alpha = rho / delta;
    const float alpha_f = static_cast<float>(alpha);

    RpcProgram p2;
    p2.instructions = {
        make_rpc(RpcOpcode::Fmac, {rb, qb, 0, 0, w}, {-alpha_f}),
        make_rpc(static_cast<RpcOpcode>(kOpDotAxpyFused), {rb, rb, xb, pb, kSregRho}, {alpha_f}),
        make_rpc(RpcOpcode::Halt)};
    loop += d.dispatch(fabric, p2);

    const double rho_new = static_cast<double>(fabric.scalar_register(kSregRho));
    resid = std::sqrt(rho_new);
    rep.residual_history.push_back(resid);
    converged = resid <= target;
    const double beta = rho_new / rho;
    rho = rho_new;

    // The iteration block is static bytecode; the direction update runs even
    // on the converging iteration.
    RpcProgram p3;
    p3.instructions = {make_rpc(RpcOpcode::Scale, {pb, pb, 0, 0, w},
                                {static_cast<float>(beta)}),
                       make_rpc(RpcOpcode::ElemAdd, {pb, pb, rb, 0, 0, 0, w}),
                       make_rpc(RpcOpcode::Halt)};
    loop += d.dispatch(fabric, p3);
  }

  rep.iterations = iters;
  rep.converged = true;
  rep.cycles = loop;
  rep.cycles_per_iteration = iters ? loop.total() / iters : 0;
  rep.rate = iters ? static_cast<double>(iters) * fc.clock_hz /
                         static_cast<double>(loop.total())
                   : 0.0;
  return {make_handle(fabric, xb), rep};
}

std::pair<FieldHandle, SolverReport> implicit_step(Fabric& fabric, Dispatcher& d,
                                                   const FieldHandle& T, const HeatParams& p,
                                                   const CgConfig& cfg) {
  if (fabric.analytic()) fail(Errc::bad_argument, "implicit_step requires a materialized fabric");
  check_handle(fabric, T, "implicit_step");
  register_solver_kernels(d);
  const auto& fc = fabric.config();
  const uint32_t w = static_cast<uint32_t>(fc.z_len);
  const uint32_t bb = fabric.allocate_buffer_id();

  d.set_trace_step(0);
  // rhs = psi*T (the only formation operation), boundary rows = gamma.
  RpcProgram form;
  form.instructions = {make_rpc(RpcOpcode::Scale, {bb, T.id, 0, 0, w}, {p.psi}),
                       make_rpc(static_cast<RpcOpcode>(kOpEdgeColumnFill), {bb}, {p.gamma}),
                       make_rpc(RpcOpcode::ScalarFill, {bb, 0, 1}, {p.gamma}),
                       make_rpc(RpcOpcode::ScalarFill, {bb, w - 1, 1}, {p.gamma}),
                       make_rpc(RpcOpcode::Halt)};
  const CycleLedger form_delta = d.dispatch(fabric, form);

  auto [x, rep] = cg_solve(fabric, d, make_handle(fabric, bb), p, cfg, &T);
  rep.setup_cycles += form_delta;
  return {x, rep};
}

}  // namespace wfsim
