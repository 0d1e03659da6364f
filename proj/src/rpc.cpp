#include "wfsim/rpc.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>

namespace wfsim {

namespace {

constexpr char kMagic[4] = {'W', 'F', 'A', 'B'};

struct Arity {
  uint8_t operands;
  uint8_t immediates;
};

std::optional<Arity> builtin_arity(uint16_t op) {
  switch (static_cast<RpcOpcode>(op)) {
    case RpcOpcode::Halt: return Arity{0, 0};
    case RpcOpcode::Copy: return Arity{5, 0};
    case RpcOpcode::ScalarFill: return Arity{3, 1};
    case RpcOpcode::ElemAdd: return Arity{7, 0};
    case RpcOpcode::ElemMul: return Arity{7, 0};
    case RpcOpcode::Scale: return Arity{5, 1};
    case RpcOpcode::Fmac: return Arity{5, 1};
    case RpcOpcode::ShiftAddWest:
    case RpcOpcode::ShiftAddEast:
    case RpcOpcode::ShiftAddNorth:
    case RpcOpcode::ShiftAddSouth: return Arity{5, 0};
    case RpcOpcode::ZShiftAddDown:
    case RpcOpcode::ZShiftAddUp: return Arity{4, 0};
    case RpcOpcode::DotReduce: return Arity{3, 0};
    case RpcOpcode::BroadcastScalar: return Arity{1, 1};
    case RpcOpcode::ExplicitHeatStepFused: return Arity{2, 3};
    case RpcOpcode::SpmvFused: return Arity{2, 1};
  }
  return std::nullopt;
}

void put_u8(std::vector<uint8_t>& b, uint8_t v) { b.push_back(v); }
void put_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(static_cast<uint8_t>(v & 0xFF));
  b.push_back(static_cast<uint8_t>(v >> 8));
}
void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_f32(std::vector<uint8_t>& b, float v) { put_u32(b, std::bit_cast<uint32_t>(v)); }

struct ByteReader {
  std::span<const uint8_t> bytes;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > bytes.size()) fail(Errc::bad_bytecode, "truncated bytecode");
  }
  uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
};

void validate_structure(const RpcProgram& program) {
  if (program.instructions.empty())
    fail(Errc::bad_bytecode, "program has no instructions");
  if (program.instructions.back().opcode != static_cast<uint16_t>(RpcOpcode::Halt))
    fail(Errc::bad_bytecode, "final instruction must be Halt");
}

void validate_arity(const RpcInstruction& instr) {
  if (auto a = builtin_arity(instr.opcode)) {
    if (instr.operands.size() != a->operands || instr.immediates.size() != a->immediates)
      fail(Errc::arity_mismatch,
           std::string(opcode_name(instr.opcode)) + ": expected " +
               std::to_string(a->operands) + " operands / " + std::to_string(a->immediates) +
               " immediates, got " + std::to_string(instr.operands.size()) + "/" +
               std::to_string(instr.immediates.size()));
  }
  if (instr.operands.size() > 255 || instr.immediates.size() > 255)
    fail(Errc::arity_mismatch, "operand/immediate count exceeds u8 range");
}

}  // namespace

const char* opcode_name(uint16_t opcode) {
  switch (static_cast<RpcOpcode>(opcode)) {
    case RpcOpcode::Halt: return "Halt";
    case RpcOpcode::Copy: return "Copy";
    case RpcOpcode::ScalarFill: return "ScalarFill";
    case RpcOpcode::ElemAdd: return "ElemAdd";
    case RpcOpcode::ElemMul: return "ElemMul";
    case RpcOpcode::Scale: return "Scale";
    case RpcOpcode::Fmac: return "Fmac";
    case RpcOpcode::ShiftAddWest: return "ShiftAddWest";
    case RpcOpcode::ShiftAddEast: return "ShiftAddEast";
    case RpcOpcode::ShiftAddNorth: return "ShiftAddNorth";
    case RpcOpcode::ShiftAddSouth: return "ShiftAddSouth";
    case RpcOpcode::ZShiftAddDown: return "ZShiftAddDown";
    case RpcOpcode::ZShiftAddUp: return "ZShiftAddUp";
    case RpcOpcode::DotReduce: return "DotReduce";
    case RpcOpcode::BroadcastScalar: return "BroadcastScalar";
    case RpcOpcode::ExplicitHeatStepFused: return "ExplicitHeatStepFused";
    case RpcOpcode::SpmvFused: return "SpmvFused";
  }
  return "Custom";
}

uint64_t round_cycles(double v) { return static_cast<uint64_t>(std::llround(v)); }

std::vector<uint8_t> encode(const RpcProgram& program) {
  validate_structure(program);
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u16(out, program.version);
  put_u32(out, static_cast<uint32_t>(program.instructions.size()));
  for (const auto& instr : program.instructions) {
    validate_arity(instr);
    put_u16(out, instr.opcode);
    put_u8(out, static_cast<uint8_t>(instr.operands.size()));
    for (uint32_t op : instr.operands) put_u32(out, op);
    put_u8(out, static_cast<uint8_t>(instr.immediates.size()));
    for (float imm : instr.immediates) put_f32(out, imm);
  }
  return out;
}

RpcProgram decode(std::span<const uint8_t> bytes) {
  ByteReader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail(Errc::bad_bytecode, "bad magic");
  r.pos = 4;
  RpcProgram program;
  program.version = r.u16();
  if (program.version != 1)
    fail(Errc::bad_bytecode, "unsupported bytecode version " + std::to_string(program.version));
  const uint32_t count = r.u32();
  program.instructions.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    RpcInstruction instr;
    instr.opcode = r.u16();
    const uint8_t nops = r.u8();
    instr.operands.reserve(nops);
    for (uint8_t k = 0; k < nops; ++k) instr.operands.push_back(r.u32());
    const uint8_t nimms = r.u8();
    instr.immediates.reserve(nimms);
    for (uint8_t k = 0; k < nimms; ++k) instr.immediates.push_back(r.f32());
    validate_arity(instr);
    program.instructions.push_back(std::move(instr));
  }
  if (r.pos != bytes.size()) fail(Errc::bad_bytecode, "trailing bytes after program");
  validate_structure(program);
  return program;
}

void save_program(const std::string& path, const RpcProgram& program) {
  const auto bytes = encode(program);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(Errc::io_error, "cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(Errc::io_error, "write failed: " + path);
}

RpcProgram load_program(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(Errc::io_error, "cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

// ---------------------------------------------------------------------------
// Builtin kernels
// ---------------------------------------------------------------------------

namespace {

void check_slice(const FabricConfig& cfg, uint64_t lo, uint64_t len, const char* what) {
  if (lo + len > static_cast<uint64_t>(cfg.z_len))
    fail(Errc::bad_slice, std::string(what) + ": slice [" + std::to_string(lo) + "," +
                              std::to_string(lo + len) + ") exceeds column length " +
                              std::to_string(cfg.z_len));
}

template <typename F>
void each_worker(const FabricConfig& cfg, F&& f) {
  for (int64_t y = 0; y < cfg.y_dim; ++y)
    for (int64_t x = 0; x < cfg.x_dim; ++x) f(x, y);
}

void copy_handler(Fabric& fb, const RpcInstruction& in) {
  const auto& cfg = fb.config();
  const uint32_t dst = in.operands[0], src = in.operands[1];
  const uint32_t dst_lo = in.operands[2], src_lo = in.operands[3], len = in.operands[4];
  check_slice(cfg, dst_lo, len, "Copy dst");
  check_slice(cfg, src_lo, len, "Copy src");
  fb.require_buffer_everywhere(src, "Copy");
  std::vector<float> scratch(len);
  each_worker(cfg, [&](int64_t x, int64_t y) {
    const auto& s = fb.require_worker_buffer(x, y, src);
    std::copy(s.begin() + src_lo, s.begin() + src_lo + len, scratch.begin());
    auto& d = fb.worker_buffer(x, y, dst);
    std::copy(scratch.begin(), scratch.end(), d.begin() + dst_lo);
  });
}

void scalar_fill_handler(Fabric& fb, const RpcInstruction& in) {
  const auto& cfg = fb.config();
  const uint32_t dst = in.operands[0], lo = in.operands[1], len = in.operands[2];
  const float v = in.immediates[0];
  check_slice(cfg, lo, len, "ScalarFill");
  each_worker(cfg, [&](int64_t x, int64_t y) {
    auto& d = fb.worker_buffer(x, y, dst);
    std::fill(d.begin() + lo, d.begin() + lo + len, v);
  });
}

template <typename BinOp>
void elem_binop_handler(Fabric& fb, const RpcInstruction& in, const char* what, BinOp op) {
  const auto& cfg = fb.config();
  const uint32_t dst = in.operands[0], a = in.operands[1], b = in.operands[2];
  const uint32_t dst_lo = in.operands[3], a_lo = in.operands[4], b_lo = in.operands[5];
  const uint32_t len = in.operands[6];
  check_slice(cfg, dst_lo, len, what);
  check_slice(cfg, a_lo, len, what);
  check_slice(cfg, b_lo, len, what);
  fb.require_buffer_everywhere(a, what);
  fb.require_buffer_everywhere(b, what);
  std::vector<float> scratch(len);
  each_worker(cfg, [&](int64_t x, int64_t y) {
    const auto& va = fb.require_worker_buffer(x, y, a);
    const auto& vb = fb.require_worker_buffer(x, y, b);
    for (uint32_t i = 0; i < len; ++i) scratch[i] = op(va[a_lo + i], vb[b_lo + i]);
    auto& d = fb.worker_buffer(x, y, dst);
    std::copy(scratch.begin(), scratch.end(), d.begin() + dst_lo);
  });
}

void scale_handler(Fabric& fb, const RpcInstruction& in) {
  const auto& cfg = fb.config();
  const uint32_t dst = in.operands[0], src = in.operands[1];
  const uint32_t dst_lo = in.operands[2], src_lo = in.operands[3], len = in.operands[4];
  const float s = in.immediates[0];
  check_slice(cfg, dst_lo, len, "Scale dst");
  check_slice(cfg, src_lo, len, "Scale src");
  fb.require_buffer_everywhere(src, "Scale");
  std::vector<float> scratch(len);
  each_worker(cfg, [&](int64_t x, int64_t y) {
    const auto& v = fb.require_worker_buffer(x, y, src);
    for (uint32_t i = 0; i < len; ++i) scratch[i] = s * v[src_lo + i];
    auto& d = fb.worker_buffer(x, y, dst);
    std::copy(scratch.begin(), scratch.end(), d.begin() + dst_lo);
  });
}

void fmac_handler(Fabric& fb, const RpcInstruction& in) {
  const auto& cfg = fb.config();
  const uint32_t dst = in.operands[0], src = in.operands[1];
  const uint32_t dst_lo = in.operands[2], src_lo = in.operands[3], len = in.operands[4];
  const float s = in.immediates[0];
  check_slice(cfg, dst_lo, len, "Fmac dst");
  check_slice(cfg, src_lo, len, "Fmac src");
  fb.require_buffer_everywhere(dst, "Fmac");
  fb.require_buffer_everywhere(src, "Fmac");
  std::vector<float> scratch(len);
  each_worker(cfg, [&](int64_t x, int64_t y) {
    const auto& v = fb.require_worker_buffer(x, y, src);
    auto& d = fb.require_worker_buffer(x, y, dst);
    for (uint32_t i = 0; i < len; ++i) scratch[i] = std::fmaf(s, v[src_lo + i], d[dst_lo + i]);
    std::copy(scratch.begin(), scratch.end(), d.begin() + dst_lo);
  });
}

void shift_add_handler(Fabric& fb, const RpcInstruction& in, Direction from) {
  const auto& cfg = fb.config();
  const uint32_t acc = in.operands[0], src = in.operands[1];
  const uint32_t acc_lo = in.operands[2], src_lo = in.operands[3], len = in.operands[4];
  check_slice(cfg, acc_lo, len, "ShiftAdd acc");
  check_slice(cfg, src_lo, len, "ShiftAdd src");
  if (acc == src) fail(Errc::bad_argument, "ShiftAdd: acc and src must differ");
  fb.require_buffer_everywhere(acc, "ShiftAdd");
  fb.require_buffer_everywhere(src, "ShiftAdd");
  std::vector<float> col(static_cast<size_t>(cfg.z_len));
  each_worker(cfg, [&](int64_t x, int64_t y) {
    auto n = fb.neighbor({x, y}, from);
    fb.read_column(*n, src, col);
    auto& a = fb.require_worker_buffer(x, y, acc);
    for (uint32_t i = 0; i < len; ++i) a[acc_lo + i] += col[src_lo + i];
  });
}

void zshift_add_handler(Fabric& fb, const RpcInstruction& in, int dz) {
  const auto& cfg = fb.config();
  const uint32_t acc = in.operands[0], src = in.operands[1];
  const uint32_t lo = in.operands[2], len = in.operands[3];
  check_slice(cfg, lo, len, "ZShiftAdd acc");
  const int64_t src_lo = static_cast<int64_t>(lo) + dz;
  if (src_lo < 0 || src_lo + len > cfg.z_len)
    fail(Errc::bad_slice, "ZShiftAdd: shifted read leaves [0,W)");
  fb.require_buffer_everywhere(acc, "ZShiftAdd");
  fb.require_buffer_everywhere(src, "ZShiftAdd");
  std::vector<float> scratch(len);
  each_worker(cfg, [&](int64_t x, int64_t y) {
    const auto& s = fb.require_worker_buffer(x, y, src);
    std::copy(s.begin() + src_lo, s.begin() + src_lo + len, scratch.begin());
    auto& a = fb.require_worker_buffer(x, y, acc);
    for (uint32_t i = 0; i < len; ++i) a[lo + i] += scratch[i];
  });
}

// Per-tile fmaf fold over z, then row folds (ascending x) and one column
// fold (ascending y) into the center, all in single precision.
void dot_reduce_handler(Fabric& fb, const RpcInstruction& in) {
  const auto& cfg = fb.config();
  const uint32_t a = in.operands[0], b = in.operands[1], sreg = in.operands[2];
  fb.require_buffer_everywhere(a, "DotReduce");
  fb.require_buffer_everywhere(b, "DotReduce");
  float total = 0.0f;
  for (int64_t y = 0; y < cfg.y_dim; ++y) {
    float row = 0.0f;
    for (int64_t x = 0; x < cfg.x_dim; ++x) {
      const auto& va = fb.require_worker_buffer(x, y, a);
      const auto& vb = fb.require_worker_buffer(x, y, b);
      float partial = 0.0f;
      for (int64_t z = 0; z < cfg.z_len; ++z) partial = std::fmaf(va[z], vb[z], partial);
      row += partial;
    }
    total += row;
  }
  fb.set_scalar_register(sreg, total);
}

void broadcast_scalar_handler(Fabric& fb, const RpcInstruction& in) {
  fb.set_scalar_register(in.operands[0], in.immediates[0]);
}

bool edge_tile(const FabricConfig& cfg, int64_t x, int64_t y) {
  return x == 0 || x == cfg.x_dim - 1 || y == 0 || y == cfg.y_dim - 1;
}

void explicit_fused_handler(Fabric& fb, const RpcInstruction& in) {
  const auto& cfg = fb.config();
  const uint32_t dst = in.operands[0], src = in.operands[1];
  const float omega = in.immediates[0];
  const float c = in.immediates[1];  // 1 - 6*omega, formed in f32
  const float gamma = in.immediates[2];
  if (dst == src) fail(Errc::bad_argument, "ExplicitHeatStepFused: dst must differ from src");
  fb.require_buffer_everywhere(src, "ExplicitHeatStepFused");
  const int64_t w = cfg.z_len;
  std::vector<float> west(w), east(w), north(w), south(w);
  each_worker(cfg, [&](int64_t x, int64_t y) {
    auto& out = fb.worker_buffer(x, y, dst);
    if (edge_tile(cfg, x, y)) {
      std::fill(out.begin(), out.end(), gamma);
      return;
    }
    const auto& col = fb.require_worker_buffer(x, y, src);
    fb.read_column({x - 1, y}, src, west);
    fb.read_column({x, y + 1}, src, north);
    fb.read_column({x + 1, y}, src, east);
    fb.read_column({x, y - 1}, src, south);
    out[0] = gamma;
    out[static_cast<size_t>(w) - 1] = gamma;
    for (int64_t z = 1; z + 1 < w; ++z) {
      float s = 0.0f;
      s += col[z - 1];
      s += col[z + 1];
      s += west[z];
      s += north[z];
      s += east[z];
      s += south[z];
      float r = 0.0f;
      r += omega * s;
      r += c * col[z];
      out[z] = r;
    }
  });
}

void spmv_fused_handler(Fabric& fb, const RpcInstruction& in) {
  const auto& cfg = fb.config();
  const uint32_t dst = in.operands[0], src = in.operands[1];
  const float m = in.immediates[0];  // -omega*psi
  if (dst == src) fail(Errc::bad_argument, "SpmvFused: dst must differ from src");
  fb.require_buffer_everywhere(src, "SpmvFused");
  const int64_t w = cfg.z_len;
  std::vector<float> west(w), east(w), north(w), south(w);
  each_worker(cfg, [&](int64_t x, int64_t y) {
    auto& out = fb.worker_buffer(x, y, dst);
    const auto& col = fb.require_worker_buffer(x, y, src);
    if (edge_tile(cfg, x, y)) {
      std::copy(col.begin(), col.end(), out.begin());  // boundary rows act as identity
      return;
    }
    fb.read_column({x - 1, y}, src, west);
    fb.read_column({x, y + 1}, src, north);
    fb.read_column({x + 1, y}, src, east);
    fb.read_column({x, y - 1}, src, south);
    out[0] = col[0];
    out[static_cast<size_t>(w) - 1] = col[static_cast<size_t>(w) - 1];
    for (int64_t z = 1; z + 1 < w; ++z) {
      float s = 0.0f;
      s += col[z - 1];
      s += col[z + 1];
      s += west[z];
      s += north[z];
      s += east[z];
      s += south[z];
      out[z] = std::fmaf(m, s, col[z]);
    }
  });
}

// --- cost functions --------------------------------------------------------

PhaseCost elementwise_cost(uint32_t len) { return PhaseCost{.compute = len}; }

uint32_t len_operand(const RpcInstruction& in, size_t slot) { return in.operands[slot]; }

}  // namespace

Dispatcher::Dispatcher() {
  auto add = [this](RpcOpcode op, KernelDef def) {
    registry_.emplace(static_cast<uint16_t>(op), std::move(def));
  };

  add(RpcOpcode::Halt, KernelDef{.name = "Halt",
                                 .operand_count = 0,
                                 .immediate_count = 0,
                                 .worker = nullptr,
                                 .moat = nullptr,
                                 .cost = [](const FabricConfig&, const RpcInstruction&) {
                                   return PhaseCost{};
                                 },
                                 .dst_operand = -1});

  add(RpcOpcode::Copy,
      KernelDef{.name = "Copy",
                .operand_count = 5,
                .immediate_count = 0,
                .worker = copy_handler,
                .moat = nullptr,
                .cost = [](const FabricConfig&,
                           const RpcInstruction& in) { return elementwise_cost(len_operand(in, 4)); },
                .dst_operand = 0});

  add(RpcOpcode::ScalarFill,
      KernelDef{.name = "ScalarFill",
                .operand_count = 3,
                .immediate_count = 1,
                .worker = scalar_fill_handler,
                .moat = nullptr,
                .cost = [](const FabricConfig&,
                           const RpcInstruction& in) { return elementwise_cost(len_operand(in, 2)); },
                .dst_operand = 0});

  add(RpcOpcode::ElemAdd,
      KernelDef{.name = "ElemAdd",
                .operand_count = 7,
                .immediate_count = 0,
                .worker = [](Fabric& fb, const RpcInstruction& in) {
                  elem_binop_handler(fb, in, "ElemAdd", [](float a, float b) { return a + b; });
                },
                .moat = nullptr,
                .cost = [](const FabricConfig&,
                           const RpcInstruction& in) { return elementwise_cost(len_operand(in, 6)); },
                .dst_operand = 0});

  add(RpcOpcode::ElemMul,
      KernelDef{.name = "ElemMul",
                .operand_count = 7,
                .immediate_count = 0,
                .worker = [](Fabric& fb, const RpcInstruction& in) {
                  elem_binop_handler(fb, in, "ElemMul", [](float a, float b) { return a * b; });
                },
                .moat = nullptr,
                .cost = [](const FabricConfig&,
                           const RpcInstruction& in) { return elementwise_cost(len_operand(in, 6)); },
                .dst_operand = 0});

  add(RpcOpcode::Scale,
      KernelDef{.name = "Scale",
                .operand_count = 5,
                .immediate_count = 1,
                .worker = scale_handler,
                .moat = nullptr,
                .cost = [](const FabricConfig&,
                           const RpcInstruction& in) { return elementwise_cost(len_operand(in, 4)); },
                .dst_operand = 0});

  add(RpcOpcode::Fmac,
      KernelDef{.name = "Fmac",
                .operand_count = 5,
                .immediate_count = 1,
                .worker = fmac_handler,
                .moat = nullptr,
                .cost = [](const FabricConfig&,
                           const RpcInstruction& in) { return elementwise_cost(len_operand(in, 4)); },
                .dst_operand = 0});

  const Direction dirs[4] = {Direction::West, Direction::East, Direction::North,
                             Direction::South};
  const RpcOpcode shift_ops[4] = {RpcOpcode::ShiftAddWest, RpcOpcode::ShiftAddEast,
                                  RpcOpcode::ShiftAddNorth, RpcOpcode::ShiftAddSouth};
  for (int i = 0; i < 4; ++i) {
    const Direction from = dirs[i];
    add(shift_ops[i],
        KernelDef{.name = std::string("ShiftAdd") + direction_name(from),
                  .operand_count = 5,
                  .immediate_count = 0,
                  .worker = [from](Fabric& fb,
                                   const RpcInstruction& in) { shift_add_handler(fb, in, from); },
                  .moat = nullptr,  // gamma supply is the Moat's read-path contribution
                  .cost =
                      [](const FabricConfig& cfg, const RpcInstruction& in) {
                        return PhaseCost{.compute = len_operand(in, 4),
                                         .exchange = static_cast<uint64_t>(cfg.z_len)};
                      },
                  .dst_operand = 0});
  }

  add(RpcOpcode::ZShiftAddDown,
      KernelDef{.name = "ZShiftAddDown",
                .operand_count = 4,
                .immediate_count = 0,
                .worker = [](Fabric& fb, const RpcInstruction& in) { zshift_add_handler(fb, in, -1); },
                .moat = nullptr,
                .cost = [](const FabricConfig&,
                           const RpcInstruction& in) { return elementwise_cost(len_operand(in, 3)); },
                .dst_operand = 0});

  add(RpcOpcode::ZShiftAddUp,
      KernelDef{.name = "ZShiftAddUp",
                .operand_count = 4,
                .immediate_count = 0,
                .worker = [](Fabric& fb, const RpcInstruction& in) { zshift_add_handler(fb, in, +1); },
                .moat = nullptr,
                .cost = [](const FabricConfig&,
                           const RpcInstruction& in) { return elementwise_cost(len_operand(in, 3)); },
                .dst_operand = 0});

  add(RpcOpcode::DotReduce,
      KernelDef{.name = "DotReduce",
                .operand_count = 3,
                .immediate_count = 0,
                .worker = dot_reduce_handler,
                .moat = nullptr,
                .cost =
                    [](const FabricConfig& cfg, const RpcInstruction&) {
                      // Totals W + X + Y + 66 with the broadcast constant.
                      return PhaseCost{.compute = static_cast<uint64_t>(cfg.z_len),
                                       .reduce = static_cast<uint64_t>(cfg.x_dim + cfg.y_dim),
                                       .overhead = 66 - kBroadcastOverheadCycles};
                    },
                .dst_operand = -1});

  add(RpcOpcode::BroadcastScalar,
      KernelDef{.name = "BroadcastScalar",
                .operand_count = 1,
                .immediate_count = 1,
                .worker = broadcast_scalar_handler,
                .moat = nullptr,
                .cost =
                    [](const FabricConfig& cfg, const RpcInstruction&) {
                      return PhaseCost{.broadcast = static_cast<uint64_t>(cfg.x_dim + cfg.y_dim)};
                    },
                .dst_operand = -1});

  add(RpcOpcode::ExplicitHeatStepFused,
      KernelDef{.name = "ExplicitHeatStepFused",
                .operand_count = 2,
                .immediate_count = 3,
                .worker = explicit_fused_handler,
                .moat = nullptr,
                .cost =
                    [](const FabricConfig& cfg, const RpcInstruction&) {
                      // Totals round(6.5*W) + 78 with the broadcast constant.
                      const uint64_t w = static_cast<uint64_t>(cfg.z_len);
                      return PhaseCost{.compute = round_cycles(2.5 * static_cast<double>(w)),
                                       .exchange = 4 * w,
                                       .overhead = 78 - kBroadcastOverheadCycles};
                    },
                .dst_operand = 0});

  add(RpcOpcode::SpmvFused,
      KernelDef{.name = "SpmvFused",
                .operand_count = 2,
                .immediate_count = 1,
                .worker = spmv_fused_handler,
                .moat = nullptr,
                .cost =
                    [](const FabricConfig& cfg, const RpcInstruction&) {
                      // Calibrated so one CG iteration totals
                      // round(10.5*W) + 2*(X+Y) + 337.
                      const uint64_t w = static_cast<uint64_t>(cfg.z_len);
                      return PhaseCost{.compute = round_cycles(1.5 * static_cast<double>(w)),
                                       .exchange = 4 * w,
                                       .overhead = 141};
                    },
                .dst_operand = 0});
}

void Dispatcher::register_kernel(uint16_t opcode, KernelDef def) {
  if (registry_.contains(opcode))
    fail(Errc::duplicate_kernel,
         "opcode " + std::to_string(opcode) + " already bound to " + registry_.at(opcode).name);
  if (!def.cost) fail(Errc::bad_argument, "kernel needs a cost function");
  registry_.emplace(opcode, std::move(def));
}

bool Dispatcher::has_kernel(uint16_t opcode) const { return registry_.contains(opcode); }

const KernelDef& Dispatcher::kernel(uint16_t opcode) const {
  auto it = registry_.find(opcode);
  if (it == registry_.end())
    fail(Errc::unknown_opcode, "no kernel registered for opcode " + std::to_string(opcode));
  return it->second;
}

void Dispatcher::emit_trace(Fabric& fabric, const RpcInstruction& instr, const KernelDef& def,
                            uint32_t rpc_index) {
  if (def.dst_operand < 0) return;
  const uint32_t buf = instr.operands[static_cast<size_t>(def.dst_operand)];
  const auto& cfg = fabric.config();
  for (int64_t y = 0; y < cfg.y_dim; ++y) {
    for (int64_t x = 0; x < cfg.x_dim; ++x) {
      if (!trace_->watches(x, y)) continue;
      TraceRecord rec;
      rec.step = trace_step_;
      rec.rpc = rpc_index;
      rec.opcode = instr.opcode;
      rec.tile_x = x;
      rec.tile_y = y;
      rec.buffer = buf;
      rec.values = fabric.require_worker_buffer(x, y, buf);
      trace_->records.push_back(std::move(rec));
    }
  }
}

void Dispatcher::check_finite(Fabric& fabric, const RpcInstruction& instr, const KernelDef& def,
                              uint32_t rpc_index) {
  if (def.dst_operand < 0) return;
  const uint32_t buf = instr.operands[static_cast<size_t>(def.dst_operand)];
  const auto& cfg = fabric.config();
  for (int64_t y = 0; y < cfg.y_dim; ++y) {
    for (int64_t x = 0; x < cfg.x_dim; ++x) {
      for (float v : fabric.require_worker_buffer(x, y, buf)) {
        if (!std::isfinite(v))
          fail(Errc::non_finite, std::string(def.name) + " (rpc " + std::to_string(rpc_index) +
                                     ") produced a non-finite value on worker (" +
                                     std::to_string(x) + "," + std::to_string(y) + ")");
      }
    }
  }
}

CycleLedger Dispatcher::dispatch(Fabric& fabric, const RpcProgram& program) {
  validate_structure(program);
  fabric.control_store() = encode(program);
  CycleLedger delta;
  for (uint32_t i = 0; i < program.instructions.size(); ++i) {
    const auto& instr = program.instructions[i];
    const KernelDef& def = kernel(instr.opcode);
    if (instr.operands.size() != def.operand_count ||
        instr.immediates.size() != def.immediate_count)
      fail(Errc::arity_mismatch,
           def.name + ": expected " + std::to_string(def.operand_count) + " operands / " +
               std::to_string(def.immediate_count) + " immediates");
    if (instr.opcode == static_cast<uint16_t>(RpcOpcode::Halt)) break;
    if (!fabric.analytic()) {
      if (def.moat) def.moat(fabric, instr);
      if (def.worker) def.worker(fabric, instr);
      if (strict_finite_) check_finite(fabric, instr, def, i);
      if (trace_) emit_trace(fabric, instr, def, i);
    }
    PhaseCost cost = def.cost(fabric.config(), instr);
    cost.broadcast += kBroadcastOverheadCycles;
    const CycleLedger charge{cost.compute, cost.exchange, cost.reduce, cost.broadcast,
                             cost.overhead};
    fabric.ledger() += charge;
    delta += charge;
  }
  return delta;
}

}  // namespace wfsim
