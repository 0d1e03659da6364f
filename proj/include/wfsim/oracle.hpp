#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wfsim/field.hpp"
#include "wfsim/rpc.hpp"
#include "wfsim/solver.hpp"
#include "wfsim/trace.hpp"

namespace wfsim::oracle {

// Dense reference state, double precision internally, single precision at
// comparison boundaries. Index order matches the field-file layout.
class DenseGrid {
 public:
  DenseGrid() = default;
  DenseGrid(uint32_t x, uint32_t y, uint32_t w, double fill = 0.0)
      : x_(x), y_(y), w_(w), values_(static_cast<size_t>(x) * y * w, fill) {}

  static DenseGrid from_host(const HostField& f);
  HostField to_host() const;

  uint32_t x() const { return x_; }
  uint32_t y() const { return y_; }
  uint32_t w() const { return w_; }
  uint64_t cells() const { return static_cast<uint64_t>(x_) * y_ * w_; }
  size_t index(uint32_t ix, uint32_t iy, uint32_t iz) const {
    return (static_cast<size_t>(ix) * y_ + iy) * w_ + iz;
  }
  double& at(uint32_t ix, uint32_t iy, uint32_t iz) { return values_[index(ix, iy, iz)]; }
  double at(uint32_t ix, uint32_t iy, uint32_t iz) const { return values_[index(ix, iy, iz)]; }
  const std::vector<double>& values() const { return values_; }

 private:
  uint32_t x_ = 0, y_ = 0, w_ = 0;
  std::vector<double> values_;
};

// Largest system the dense reference will assemble.
constexpr uint64_t kDenseOracleCellLimit = 4096;

// Double-precision seven-point step with the simulator's fixed accumulation
// order; boundary faces set to gamma. Validates the mathematics.
DenseGrid ref_explicit_step(const DenseGrid& g, const HeatParams& p);

// Single-precision replay of the fused explicit step (bit-exact contract).
HostField replay_explicit_step(const HostField& f, const HeatParams& p);

// Assembled backward-time system (row order matches the field layout):
// boundary rows are identity with rhs gamma; interior rows have unit
// diagonal, -omega*psi on interior-neighbor columns, and boundary-neighbor
// couplings folded into the rhs, which keeps A symmetric.
struct DenseSystem {
  uint64_t n = 0;
  std::vector<double> a;  // row-major n*n
  std::vector<double> b;
  double at(uint64_t r, uint64_t c) const { return a[r * n + c]; }
};
DenseSystem assemble_system(const HeatParams& p, const DenseGrid& T);

// Direct (Cholesky) solve of one backward-Euler step; the factorization
// succeeding doubles as the SPD certificate.
DenseGrid ref_dense_solve(const HeatParams& p, const DenseGrid& T);

// Executes RPC programs against host-side dense arrays with the exact f32
// semantics of the fabric VM, sharing no code with it. Understands the
// builtin opcodes and the shipped solver kernels.
class ReplayVm {
 public:
  explicit ReplayVm(FabricConfig cfg);

  const FabricConfig& config() const { return cfg_; }
  void set_buffer(uint32_t id, HostField f);
  const HostField& buffer(uint32_t id) const;
  bool has_buffer(uint32_t id) const { return buffers_.contains(id); }
  float sreg(uint32_t reg) const;
  void set_sreg(uint32_t reg, float v);

  void set_trace(TraceSink* sink) { trace_ = sink; }
  void set_trace_step(uint64_t step) { trace_step_ = step; }

  void run(const RpcProgram& program);

 private:
  HostField& ensure(uint32_t id);
  void emit_trace(const RpcInstruction& instr, uint32_t rpc_index, int dst_slot);

  FabricConfig cfg_;
  std::map<uint32_t, HostField> buffers_;
  std::map<uint32_t, float> sregs_;
  TraceSink* trace_ = nullptr;
  uint64_t trace_step_ = 0;
};

// Evaluates one assignment against host-side buffers with the canonical f32
// expression semantics (see field.hpp); boundary reads substitute gamma.
void apply_stmt_replay(std::map<uint32_t, HostField>& buffers, const AssignStmt& stmt,
                       const FabricConfig& cfg, float gamma);

// First divergence between two trace streams, or a clean pass. tol == 0
// demands bit equality. Streams whose record sites disagree are a schema
// error, not a divergence.
struct TraceDiff {
  bool passed = true;
  size_t records_compared = 0;
  uint64_t step = 0;
  uint32_t rpc = 0;
  int64_t tile_x = 0, tile_y = 0;
  uint32_t buffer = 0;
  double max_abs_err = 0.0;
  std::string message;
};
TraceDiff diff_traces(std::span<const TraceRecord> sim, std::span<const TraceRecord> ref,
                      double tol);

}  // namespace wfsim::oracle
