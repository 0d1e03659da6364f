#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wfsim/fabric.hpp"
#include "wfsim/trace.hpp"

namespace wfsim {

// Builtin RPC instruction set. Every opcode has a Worker handler, a Moat
// handler (possibly a no-op) and a cycle-cost function; register_kernel adds
// project-specific kernels at ids >= kFirstCustomOpcode.
//
// Operand conventions (slice bounds travel as u32 operands; immediates are
// IEEE-754 binary32):
//   Halt                     [] / []
//   Copy                     [dst, src, dst_lo, src_lo, len] / []
//   ScalarFill               [dst, lo, len] / [value]
//   ElemAdd, ElemMul         [dst, a, b, dst_lo, a_lo, b_lo, len] / []
//   Scale                    [dst, src, dst_lo, src_lo, len] / [s]      dst = s*src
//   Fmac                     [dst, src, dst_lo, src_lo, len] / [s]      dst = fmaf(s, src, dst)
//   ShiftAddWest/East/North/South
//                            [acc, src, acc_lo, src_lo, len] / []
//       acc[acc_lo+i] += column-of-(dir)-neighbor(src)[src_lo+i]; Moat
//       neighbors supply the boundary value from scalar register 0.
//   ZShiftAddDown            [acc, src, lo, len] / []   acc[lo+i] += src[lo-1+i]
//   ZShiftAddUp              [acc, src, lo, len] / []   acc[lo+i] += src[lo+1+i]
//   DotReduce                [a, b, sreg] / []
//       sreg <- sum over all cells of a*b: per-tile fmaf fold over z, row
//       folds (ascending x), then a column fold (ascending y), all f32.
//   BroadcastScalar          [sreg] / [value]
//   ExplicitHeatStepFused    [dst, src] / [omega, one_minus_six_omega, gamma]
//   SpmvFused                [dst, src] / [neg_omega_psi]
enum class RpcOpcode : uint16_t {
  Halt = 0,
  Copy = 1,
  ScalarFill = 2,
  ElemAdd = 3,
  ElemMul = 4,
  Scale = 5,
  Fmac = 6,
  ShiftAddWest = 7,
  ShiftAddEast = 8,
  ShiftAddNorth = 9,
  ShiftAddSouth = 10,
  ZShiftAddDown = 11,
  ZShiftAddUp = 12,
  DotReduce = 13,
  BroadcastScalar = 14,
  ExplicitHeatStepFused = 15,
  SpmvFused = 16,
};

constexpr uint16_t kFirstCustomOpcode = 0x8000;

const char* opcode_name(uint16_t opcode);  // custom ids -> "Custom(0x....)"

struct RpcInstruction {
  uint16_t opcode = 0;
  std::vector<uint32_t> operands;
  std::vector<float> immediates;

  bool operator==(const RpcInstruction&) const = default;
};

inline RpcInstruction make_rpc(RpcOpcode op, std::vector<uint32_t> operands = {},
                               std::vector<float> immediates = {}) {
  return RpcInstruction{static_cast<uint16_t>(op), std::move(operands), std::move(immediates)};
}

// Bytecode container. decode(encode(p)) == p; the final instruction must be
// Halt.
struct RpcProgram {
  uint16_t version = 1;
  std::vector<RpcInstruction> instructions;

  bool operator==(const RpcProgram&) const = default;
};

// Bit-exact little-endian wire format: magic "WFAB", u16 version, u32
// instruction count, then per instruction u16 opcode, u8 operand count,
// u32 operands, u8 immediate count, binary32 immediates.
std::vector<uint8_t> encode(const RpcProgram& program);
RpcProgram decode(std::span<const uint8_t> bytes);
void save_program(const std::string& path, const RpcProgram& program);
RpcProgram load_program(const std::string& path);

// Cycle charge of one RPC, split by phase.
struct PhaseCost {
  uint64_t compute = 0;
  uint64_t exchange = 0;
  uint64_t reduce = 0;
  uint64_t broadcast = 0;
  uint64_t overhead = 0;
};

using WorkerHandler = std::function<void(Fabric&, const RpcInstruction&)>;
using MoatHandler = std::function<void(Fabric&, const RpcInstruction&)>;
using CostFn = std::function<PhaseCost(const FabricConfig&, const RpcInstruction&)>;

struct KernelDef {
  std::string name;
  uint8_t operand_count = 0;
  uint8_t immediate_count = 0;
  WorkerHandler worker;  // runs the fabric-wide Worker phase
  MoatHandler moat;      // Moat-side duties; nullptr = no-op
  CostFn cost;
  // Operand slot holding the instruction's written buffer (for tracing and
  // strict-finite scans); -1 when the instruction writes no tile buffer.
  int dst_operand = -1;
};

// The Control-Tile interpreter: holds the kernel registry and executes
// programs as one fabric-wide phase per RPC (Moat phase, Worker phase, phase
// barrier, cost charge). Single-threaded per fabric; observable state equals
// the sequential row-major result by construction.
class Dispatcher {
 public:
  // Fixed per-RPC broadcast overhead (Control -> Control Transmission ->
  // fabric). Halt is a stop marker and charges nothing.
  static constexpr uint64_t kBroadcastOverheadCycles = 16;

  Dispatcher();

  void register_kernel(uint16_t opcode, KernelDef def);
  bool has_kernel(uint16_t opcode) const;
  const KernelDef& kernel(uint16_t opcode) const;

  // Reject non-finite values written by any RPC. Solver drivers switch this
  // on; raw VM experiments leave it off.
  void set_strict_finite(bool on) { strict_finite_ = on; }
  bool strict_finite() const { return strict_finite_; }

  void set_trace(TraceSink* sink) { trace_ = sink; }
  void set_trace_step(uint64_t step) { trace_step_ = step; }

  // Executes the program; returns the ledger delta for this dispatch.
  CycleLedger dispatch(Fabric& fabric, const RpcProgram& program);

 private:
  void emit_trace(Fabric& fabric, const RpcInstruction& instr, const KernelDef& def,
                  uint32_t rpc_index);
  void check_finite(Fabric& fabric, const RpcInstruction& instr, const KernelDef& def,
                    uint32_t rpc_index);

  std::map<uint16_t, KernelDef> registry_;
  bool strict_finite_ = false;
  TraceSink* trace_ = nullptr;
  uint64_t trace_step_ = 0;
};

// Rounds half away from zero; cycle formulas use round(6.5*W)-style terms.
uint64_t round_cycles(double v);

}  // namespace wfsim
