#include "wfsim/oracle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>

namespace wfsim::oracle {

DenseGrid DenseGrid::from_host(const HostField& f) {
  DenseGrid g(f.x, f.y, f.w);
  for (size_t i = 0; i < f.data.size(); ++i) g.values_[i] = static_cast<double>(f.data[i]);
  return g;
}

HostField DenseGrid::to_host() const {
  HostField f(x_, y_, w_);
  for (size_t i = 0; i < values_.size(); ++i) f.data[i] = static_cast<float>(values_[i]);
  return f;
}

namespace {

bool edge_tile(uint32_t x, uint32_t y, uint32_t nx, uint32_t ny) {
  return x == 0 || x == nx - 1 || y == 0 || y == ny - 1;
}

bool boundary_cell(uint32_t x, uint32_t y, uint32_t z, uint32_t nx, uint32_t ny, uint32_t nz) {
  return edge_tile(x, y, nx, ny) || z == 0 || z == nz - 1;
}

}  // namespace

DenseGrid ref_explicit_step(const DenseGrid& g, const HeatParams& p) {
  const uint32_t nx = g.x(), ny = g.y(), nz = g.w();
  const double omega = static_cast<double>(p.omega);
  const double c = static_cast<double>(p.one_minus_six_omega);
  const double gamma = static_cast<double>(p.gamma);
  DenseGrid out(nx, ny, nz);
  for (uint32_t x = 0; x < nx; ++x) {
    for (uint32_t y = 0; y < ny; ++y) {
      for (uint32_t z = 0; z < nz; ++z) {
        if (boundary_cell(x, y, z, nx, ny, nz)) {
          out.at(x, y, z) = gamma;
          continue;
        }
        double s = 0.0;
        s += g.at(x, y, z - 1);
        s += g.at(x, y, z + 1);
        s += g.at(x - 1, y, z);
        s += g.at(x, y + 1, z);
        s += g.at(x + 1, y, z);
        s += g.at(x, y - 1, z);
        double r = 0.0;
        r += omega * s;
        r += c * g.at(x, y, z);
        out.at(x, y, z) = r;
      }
    }
  }
  return out;
}

namespace {

void replay_explicit_into(const HostField& f, HostField& out, float omega, float c, float gamma) {
  const uint32_t nx = f.x, ny = f.y, nz = f.w;
  for (uint32_t x = 0; x < nx; ++x) {
    for (uint32_t y = 0; y < ny; ++y) {
      for (uint32_t z = 0; z < nz; ++z) {
        if (boundary_cell(x, y, z, nx, ny, nz)) {
          out.at(x, y, z) = gamma;
          continue;
        }
        float s = 0.0f;
        s += f.at(x, y, z - 1);
        s += f.at(x, y, z + 1);
        s += f.at(x - 1, y, z);
        s += f.at(x, y + 1, z);
        s += f.at(x + 1, y, z);
        s += f.at(x, y - 1, z);
        float r = 0.0f;
        r += omega * s;
        r += c * f.at(x, y, z);
        out.at(x, y, z) = r;
      }
    }
  }
}

void replay_spmv_into(const HostField& f, HostField& out, float m) {
  const uint32_t nx = f.x, ny = f.y, nz = f.w;
  for (uint32_t x = 0; x < nx; ++x) {
    for (uint32_t y = 0; y < ny; ++y) {
      for (uint32_t z = 0; z < nz; ++z) {
        if (boundary_cell(x, y, z, nx, ny, nz)) {
          out.at(x, y, z) = f.at(x, y, z);
          continue;
        }
        float s = 0.0f;
        s += f.at(x, y, z - 1);
        s += f.at(x, y, z + 1);
        s += f.at(x - 1, y, z);
        s += f.at(x, y + 1, z);
        s += f.at(x + 1, y, z);
        s += f.at(x, y - 1, z);
        out.at(x, y, z) = std::fmaf(m, s, f.at(x, y, z));
      }
    }
  }
}

}  // namespace

HostField replay_explicit_step(const HostField& f, const HeatParams& p) {
  HostField out(f.x, f.y, f.w);
  replay_explicit_into(f, out, p.omega, p.one_minus_six_omega, p.gamma);
  return out;
}

DenseSystem assemble_system(const HeatParams& p, const DenseGrid& T) {
  const uint64_t n = T.cells();
  if (n > kDenseOracleCellLimit)
    fail(Errc::oracle_bound, "dense assembly is limited to " +
                                 std::to_string(kDenseOracleCellLimit) + " cells, got " +
                                 std::to_string(n));
  const uint32_t nx = T.x(), ny = T.y(), nz = T.w();
  const double psi = static_cast<double>(p.psi);
  const double m = static_cast<double>(p.omega) * static_cast<double>(p.psi);
  const double gamma = static_cast<double>(p.gamma);

  DenseSystem sys;
  sys.n = n;
  sys.a.assign(static_cast<size_t>(n) * n, 0.0);
  sys.b.assign(static_cast<size_t>(n), 0.0);

  const int64_t off[6][3] = {{0, 0, -1}, {0, 0, 1}, {-1, 0, 0}, {0, 1, 0}, {1, 0, 0}, {0, -1, 0}};
  for (uint32_t x = 0; x < nx; ++x) {
    for (uint32_t y = 0; y < ny; ++y) {
      for (uint32_t z = 0; z < nz; ++z) {
        const uint64_t row = T.index(x, y, z);
        sys.a[row * n + row] = 1.0;
        if (boundary_cell(x, y, z, nx, ny, nz)) {
          sys.b[row] = gamma;
          continue;
        }
        double rhs = psi * T.at(x, y, z);
        for (const auto& d : off) {
          const uint32_t cx = static_cast<uint32_t>(x + d[0]);
          const uint32_t cy = static_cast<uint32_t>(y + d[1]);
          const uint32_t cz = static_cast<uint32_t>(z + d[2]);
          if (boundary_cell(cx, cy, cz, nx, ny, nz)) {
            rhs += m * gamma;  // constrained neighbor folded into the rhs
          } else {
            sys.a[row * n + T.index(cx, cy, cz)] = -m;
          }
        }
        sys.b[row] = rhs;
      }
    }
  }
  return sys;
}

DenseGrid ref_dense_solve(const HeatParams& p, const DenseGrid& T) {
  DenseSystem sys = assemble_system(p, T);
  const auto n = static_cast<Eigen::Index>(sys.n);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> A(
      sys.a.data(), n, n);
  Eigen::Map<const Eigen::VectorXd> b(sys.b.data(), n);
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success)
    fail(Errc::breakdown, "dense factorization failed (matrix not SPD?)");
  const Eigen::VectorXd sol = llt.solve(b);
  DenseGrid result(T.x(), T.y(), T.w());
  for (uint32_t x = 0; x < T.x(); ++x)
    for (uint32_t y = 0; y < T.y(); ++y)
      for (uint32_t z = 0; z < T.w(); ++z)
        result.at(x, y, z) = sol(static_cast<Eigen::Index>(result.index(x, y, z)));
  return result;
}

// ---------------------------------------------------------------------------
// Replay VM
// ---------------------------------------------------------------------------

namespace {

int replay_dst_slot(uint16_t opcode) {
  switch (static_cast<RpcOpcode>(opcode)) {
    case RpcOpcode::Halt:
    case RpcOpcode::DotReduce:
    case RpcOpcode::BroadcastScalar: return -1;
    default: break;
  }
  if (opcode == kOpDotAxpyFused) return 2;
  return 0;  // builtin data ops and shipped solver kernels write operand 0
}

}  // namespace

ReplayVm::ReplayVm(FabricConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  sregs_[Fabric::kGammaRegister] = 0.0f;
}

void ReplayVm::set_buffer(uint32_t id, HostField f) {
  if (f.x != cfg_.x_dim || f.y != cfg_.y_dim || f.w != cfg_.z_len)
    fail(Errc::shape_mismatch, "replay buffer shape mismatch");
  buffers_[id] = std::move(f);
}

const HostField& ReplayVm::buffer(uint32_t id) const {
  auto it = buffers_.find(id);
  if (it == buffers_.end())
    fail(Errc::missing_buffer, "replay buffer " + std::to_string(id) + " missing");
  return it->second;
}

HostField& ReplayVm::ensure(uint32_t id) {
  auto it = buffers_.find(id);
  if (it == buffers_.end())
    it = buffers_
             .emplace(id, HostField(static_cast<uint32_t>(cfg_.x_dim),
                                    static_cast<uint32_t>(cfg_.y_dim),
                                    static_cast<uint32_t>(cfg_.z_len)))
             .first;
  return it->second;
}

float ReplayVm::sreg(uint32_t reg) const {
  auto it = sregs_.find(reg);
  return it == sregs_.end() ? 0.0f : it->second;
}

void ReplayVm::set_sreg(uint32_t reg, float v) { sregs_[reg] = v; }

void ReplayVm::emit_trace(const RpcInstruction& instr, uint32_t rpc_index, int dst_slot) {
  if (!trace_ || dst_slot < 0) return;
  const uint32_t buf = instr.operands[static_cast<size_t>(dst_slot)];
  const HostField& f = buffer(buf);
  for (int64_t y = 0; y < cfg_.y_dim; ++y) {
    for (int64_t x = 0; x < cfg_.x_dim; ++x) {
      if (!trace_->watches(x, y)) continue;
      TraceRecord rec;
      rec.step = trace_step_;
      rec.rpc = rpc_index;
      rec.opcode = instr.opcode;
      rec.tile_x = x;
      rec.tile_y = y;
      rec.buffer = buf;
      rec.values.resize(static_cast<size_t>(cfg_.z_len));
      for (int64_t z = 0; z < cfg_.z_len; ++z)
        rec.values[static_cast<size_t>(z)] =
            f.at(static_cast<uint32_t>(x), static_cast<uint32_t>(y), static_cast<uint32_t>(z));
      trace_->records.push_back(std::move(rec));
    }
  }
}

void ReplayVm::run(const RpcProgram& program) {
  const uint32_t nx = static_cast<uint32_t>(cfg_.x_dim);
  const uint32_t ny = static_cast<uint32_t>(cfg_.y_dim);
  const uint32_t nz = static_cast<uint32_t>(cfg_.z_len);

  // Reads tile (tx,ty) of `id`; coordinates outside the Worker rectangle see
  // the Moat value.
  auto read_cell = [&](uint32_t id, int64_t tx, int64_t ty, uint32_t z) -> float {
    if (tx < 0 || tx >= cfg_.x_dim || ty < 0 || ty >= cfg_.y_dim)
      return sreg(Fabric::kGammaRegister);
    return buffer(id).at(static_cast<uint32_t>(tx), static_cast<uint32_t>(ty), z);
  };

  for (uint32_t idx = 0; idx < program.instructions.size(); ++idx) {
    const auto& in = program.instructions[idx];
    const auto op = static_cast<RpcOpcode>(in.opcode);
    if (op == RpcOpcode::Halt) break;

    switch (op) {
      case RpcOpcode::Copy: {
        const uint32_t dst = in.operands[0], src = in.operands[1];
        const uint32_t dlo = in.operands[2], slo = in.operands[3], len = in.operands[4];
        const HostField s = buffer(src);  // snapshot: overlap-safe
        HostField& d = ensure(dst);
        for (uint32_t x = 0; x < nx; ++x)
          for (uint32_t y = 0; y < ny; ++y)
            for (uint32_t i = 0; i < len; ++i) d.at(x, y, dlo + i) = s.at(x, y, slo + i);
        break;
      }
      case RpcOpcode::ScalarFill: {
        const uint32_t dst = in.operands[0], lo = in.operands[1], len = in.operands[2];
        HostField& d = ensure(dst);
        for (uint32_t x = 0; x < nx; ++x)
          for (uint32_t y = 0; y < ny; ++y)
            for (uint32_t i = 0; i < len; ++i) d.at(x, y, lo + i) = in.immediates[0];
        break;
      }
      case RpcOpcode::ElemAdd:
      case RpcOpcode::ElemMul: {
        const uint32_t dst = in.operands[0], a = in.operands[1], b = in.operands[2];
        const uint32_t dlo = in.operands[3], alo = in.operands[4], blo = in.operands[5];
        const uint32_t len = in.operands[6];
        const HostField va = buffer(a), vb = buffer(b);
        HostField& d = ensure(dst);
        for (uint32_t x = 0; x < nx; ++x)
          for (uint32_t y = 0; y < ny; ++y)
            for (uint32_t i = 0; i < len; ++i)
              d.at(x, y, dlo + i) = op == RpcOpcode::ElemAdd
                                        ? va.at(x, y, alo + i) + vb.at(x, y, blo + i)
                                        : va.at(x, y, alo + i) * vb.at(x, y, blo + i);
        break;
      }
      case RpcOpcode::Scale: {
        const uint32_t dst = in.operands[0], src = in.operands[1];
        const uint32_t dlo = in.operands[2], slo = in.operands[3], len = in.operands[4];
        const float s = in.immediates[0];
        const HostField v = buffer(src);
        HostField& d = ensure(dst);
        for (uint32_t x = 0; x < nx; ++x)
          for (uint32_t y = 0; y < ny; ++y)
            for (uint32_t i = 0; i < len; ++i) d.at(x, y, dlo + i) = s * v.at(x, y, slo + i);
        break;
      }
      case RpcOpcode::Fmac: {
        const uint32_t dst = in.operands[0], src = in.operands[1];
        const uint32_t dlo = in.operands[2], slo = in.operands[3], len = in.operands[4];
        const float s = in.immediates[0];
        const HostField v = buffer(src);
        HostField& d = ensure(dst);
        for (uint32_t x = 0; x < nx; ++x)
          for (uint32_t y = 0; y < ny; ++y)
            for (uint32_t i = 0; i < len; ++i)
              d.at(x, y, dlo + i) = std::fmaf(s, v.at(x, y, slo + i), d.at(x, y, dlo + i));
        break;
      }
      case RpcOpcode::ShiftAddWest:
      case RpcOpcode::ShiftAddEast:
      case RpcOpcode::ShiftAddNorth:
      case RpcOpcode::ShiftAddSouth: {
        const uint32_t acc = in.operands[0], src = in.operands[1];
        const uint32_t alo = in.operands[2], slo = in.operands[3], len = in.operands[4];
        int64_t dx = 0, dy = 0;
        if (op == RpcOpcode::ShiftAddWest) dx = -1;
        if (op == RpcOpcode::ShiftAddEast) dx = 1;
        if (op == RpcOpcode::ShiftAddNorth) dy = 1;
        if (op == RpcOpcode::ShiftAddSouth) dy = -1;
        HostField& a = ensure(acc);
        for (uint32_t x = 0; x < nx; ++x)
          for (uint32_t y = 0; y < ny; ++y)
            for (uint32_t i = 0; i < len; ++i)
              a.at(x, y, alo + i) +=
                  read_cell(src, static_cast<int64_t>(x) + dx, static_cast<int64_t>(y) + dy,
                            slo + i);
        break;
      }
      case RpcOpcode::ZShiftAddDown:
      case RpcOpcode::ZShiftAddUp: {
        const uint32_t acc = in.operands[0], src = in.operands[1];
        const uint32_t lo = in.operands[2], len = in.operands[3];
        const int64_t dz = op == RpcOpcode::ZShiftAddDown ? -1 : 1;
        const HostField v = buffer(src);  // snapshot
        HostField& a = ensure(acc);
        for (uint32_t x = 0; x < nx; ++x)
          for (uint32_t y = 0; y < ny; ++y)
            for (uint32_t i = 0; i < len; ++i)
              a.at(x, y, lo + i) += v.at(x, y, static_cast<uint32_t>(lo + i + dz));
        break;
      }
      case RpcOpcode::DotReduce: {
        const HostField& a = buffer(in.operands[0]);
        const HostField& b = buffer(in.operands[1]);
        float total = 0.0f;
        for (uint32_t y = 0; y < ny; ++y) {
          float row = 0.0f;
          for (uint32_t x = 0; x < nx; ++x) {
            float partial = 0.0f;
            for (uint32_t z = 0; z < nz; ++z)
              partial = std::fmaf(a.at(x, y, z), b.at(x, y, z), partial);
            row += partial;
          }
          total += row;
        }
        sregs_[in.operands[2]] = total;
        break;
      }
      case RpcOpcode::BroadcastScalar:
        sregs_[in.operands[0]] = in.immediates[0];
        break;
      case RpcOpcode::ExplicitHeatStepFused: {
        const HostField src = buffer(in.operands[1]);
        HostField& d = ensure(in.operands[0]);
        replay_explicit_into(src, d, in.immediates[0], in.immediates[1], in.immediates[2]);
        break;
      }
      case RpcOpcode::SpmvFused: {
        const HostField src = buffer(in.operands[1]);
        HostField& d = ensure(in.operands[0]);
        replay_spmv_into(src, d, in.immediates[0]);
        break;
      }
      default: {
        if (in.opcode == kOpEdgeColumnFill) {
          HostField& d = ensure(in.operands[0]);
          for (uint32_t x = 0; x < nx; ++x)
            for (uint32_t y = 0; y < ny; ++y) {
              if (!edge_tile(x, y, nx, ny)) continue;
              for (uint32_t z = 0; z < nz; ++z) d.at(x, y, z) = in.immediates[0];
            }
        } else if (in.opcode == kOpEdgeColumnCopy) {
          const HostField src = buffer(in.operands[1]);
          HostField& d = ensure(in.operands[0]);
          for (uint32_t x = 0; x < nx; ++x)
            for (uint32_t y = 0; y < ny; ++y) {
              if (!edge_tile(x, y, nx, ny)) continue;
              for (uint32_t z = 0; z < nz; ++z) d.at(x, y, z) = src.at(x, y, z);
            }
        } else if (in.opcode == kOpCgInitX) {
          const HostField& b = buffer(in.operands[1]);
          HostField& xv = ensure(in.operands[0]);
          for (uint32_t x = 0; x < nx; ++x)
            for (uint32_t y = 0; y < ny; ++y)
              for (uint32_t z = 0; z < nz; ++z)
                xv.at(x, y, z) = boundary_cell(x, y, z, nx, ny, nz) ? b.at(x, y, z) : 0.0f;
        } else if (in.opcode == kOpDotAxpyFused) {
          const HostField& a = buffer(in.operands[0]);
          const HostField& b = buffer(in.operands[1]);
          const float alpha = in.immediates[0];
          float total = 0.0f;
          for (uint32_t y = 0; y < ny; ++y) {
            float row = 0.0f;
            for (uint32_t x = 0; x < nx; ++x) {
              float partial = 0.0f;
              for (uint32_t z = 0; z < nz; ++z)
                partial = std::fmaf(a.at(x, y, z), b.at(x, y, z), partial);
              row += partial;
              HostField& xv = ensure(in.operands[2]);
              const HostField& pv = buffer(in.operands[3]);
              for (uint32_t z = 0; z < nz; ++z)
                xv.at(x, y, z) = std::fmaf(alpha, pv.at(x, y, z), xv.at(x, y, z));
            }
            total += row;
          }
          sregs_[in.operands[4]] = total;
        } else {
          fail(Errc::unknown_opcode,
               "replay oracle does not implement opcode " + std::to_string(in.opcode));
        }
        break;
      }
    }
    emit_trace(in, idx, replay_dst_slot(in.opcode));
  }
}

// ---------------------------------------------------------------------------
// Canonical f32 expression evaluation
// ---------------------------------------------------------------------------

namespace {

using Node = Expr::Node;

enum class TermClass { ZDown, ZUp, West, North, East, South, Other };

TermClass classify_term(const Node& n, uint32_t lo) {
  if (n.kind != Node::Kind::FieldRef) return TermClass::Other;
  if (n.dx == -1) return TermClass::West;
  if (n.dx == 1) return TermClass::East;
  if (n.dy == 1) return TermClass::North;
  if (n.dy == -1) return TermClass::South;
  const int64_t dz = static_cast<int64_t>(n.z.lo) - static_cast<int64_t>(lo);
  if (dz == -1) return TermClass::ZDown;
  if (dz == 1) return TermClass::ZUp;
  return TermClass::Other;
}

void flatten_sum(const Node& n, std::vector<const Node*>& out) {
  if (n.kind == Node::Kind::Add) {
    flatten_sum(*n.left, out);
    flatten_sum(*n.right, out);
  } else {
    out.push_back(&n);
  }
}

struct StmtEval {
  const std::map<uint32_t, HostField>& bufs;
  const FabricConfig& cfg;
  float gamma;
  uint32_t target_lo;

  float ref_raw(const Node& n, int64_t x, int64_t y, uint32_t i) const {
    const int64_t tx = x + n.dx;
    const int64_t ty = y + n.dy;
    if (tx < 0 || tx >= cfg.x_dim || ty < 0 || ty >= cfg.y_dim) return gamma;
    return bufs.at(n.buffer).at(static_cast<uint32_t>(tx), static_cast<uint32_t>(ty),
                                n.z.lo + i);
  }

  float eval(const Node& n, int64_t x, int64_t y, uint32_t i) const {
    switch (n.kind) {
      case Node::Kind::FieldRef: {
        const float v = ref_raw(n, x, y, i);
        // Shifted reads arrive through a zeroed staging accumulator.
        return (n.dx != 0 || n.dy != 0) ? 0.0f + v : v;
      }
      case Node::Kind::Const:
        return n.value;
      case Node::Kind::Scale:
        return n.value * eval(*n.left, x, y, i);
      case Node::Kind::Mul:
        return eval(*n.left, x, y, i) * eval(*n.right, x, y, i);
      case Node::Kind::Add: {
        std::vector<const Node*> terms;
        flatten_sum(n, terms);
        std::vector<const Node*> ordered;
        ordered.reserve(terms.size());
        const TermClass classes[] = {TermClass::ZDown, TermClass::ZUp,  TermClass::West,
                                     TermClass::North, TermClass::East, TermClass::South,
                                     TermClass::Other};
        for (TermClass c : classes)
          for (const Node* t : terms)
            if (classify_term(*t, target_lo) == c) ordered.push_back(t);
        float acc = 0.0f;
        for (const Node* t : ordered)
          acc += t->kind == Node::Kind::FieldRef ? ref_raw(*t, x, y, i) : eval(*t, x, y, i);
        return acc;
      }
    }
    return 0.0f;
  }
};

}  // namespace

void apply_stmt_replay(std::map<uint32_t, HostField>& buffers, const AssignStmt& stmt,
                       const FabricConfig& cfg, float gamma) {
  const uint32_t len = stmt.z.len();
  auto it = buffers.find(stmt.target.id);
  HostField result =
      it != buffers.end()
          ? it->second
          : HostField(static_cast<uint32_t>(cfg.x_dim), static_cast<uint32_t>(cfg.y_dim),
                      static_cast<uint32_t>(cfg.z_len));
  StmtEval ev{buffers, cfg, gamma, stmt.z.lo};
  const Node& root = stmt.expr.node();
  for (int64_t x = 0; x < cfg.x_dim; ++x)
    for (int64_t y = 0; y < cfg.y_dim; ++y)
      for (uint32_t i = 0; i < len; ++i)
        result.at(static_cast<uint32_t>(x), static_cast<uint32_t>(y), stmt.z.lo + i) =
            ev.eval(root, x, y, i);
  buffers[stmt.target.id] = std::move(result);
}

// ---------------------------------------------------------------------------
// Trace comparison
// ---------------------------------------------------------------------------

TraceDiff diff_traces(std::span<const TraceRecord> sim, std::span<const TraceRecord> ref,
                      double tol) {
  if (sim.size() != ref.size())
    fail(Errc::shape_mismatch, "trace streams have different lengths (" +
                                   std::to_string(sim.size()) + " vs " +
                                   std::to_string(ref.size()) + ")");
  TraceDiff out;
  for (size_t i = 0; i < sim.size(); ++i) {
    const TraceRecord& a = sim[i];
    const TraceRecord& b = ref[i];
    if (!a.same_site(b))
      fail(Errc::shape_mismatch, "trace schema mismatch at record " + std::to_string(i));
    ++out.records_compared;
    double max_err = 0.0;
    bool diverged = false;
    for (size_t k = 0; k < a.values.size(); ++k) {
      const float va = a.values[k], vb = b.values[k];
      const double err = std::abs(static_cast<double>(va) - static_cast<double>(vb));
      max_err = std::max(max_err, err);
      if (tol == 0.0) {
        if (std::bit_cast<uint32_t>(va) != std::bit_cast<uint32_t>(vb)) diverged = true;
      } else if (err > tol) {
        diverged = true;
      }
    }
    if (diverged) {
      out.passed = false;
      out.step = a.step;
      out.rpc = a.rpc;
      out.tile_x = a.tile_x;
      out.tile_y = a.tile_y;
      out.buffer = a.buffer;
      out.max_abs_err = max_err;
      out.message = "divergence at step " + std::to_string(a.step) + " rpc " +
                    std::to_string(a.rpc) + " tile (" + std::to_string(a.tile_x) + "," +
                    std::to_string(a.tile_y) + ") buffer " + std::to_string(a.buffer) +
                    " max_abs_err " + std::to_string(max_err);
      return out;
    }
  }
  out.message = "traces match (" + std::to_string(out.records_compared) + " records)";
  return out;
}

}  // namespace wfsim::oracle
