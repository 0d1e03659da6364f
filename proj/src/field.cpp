#include "wfsim/field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace wfsim {

// --- expression construction -------------------------------------------------

Expr Expr::field(const FieldHandle& h, Slice z, int dx, int dy) {
  if (dx < -1 || dx > 1 || dy < -1 || dy > 1)
    fail(Errc::bad_argument, "relative tile offsets are limited to -1, 0, 1");
  if (dx != 0 && dy != 0)
    fail(Errc::bad_argument, "diagonal tile references are not supported");
  if (z.lo > z.hi) fail(Errc::bad_slice, "slice lo exceeds hi");
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::FieldRef;
  n->buffer = h.id;
  n->z = z;
  n->dx = dx;
  n->dy = dy;
  return Expr(std::move(n));
}

Expr Expr::constant(float value) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Const;
  n->value = value;
  return Expr(std::move(n));
}

Expr operator+(const Expr& l, const Expr& r) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Node::Kind::Add;
  n->left = l.node_;
  n->right = r.node_;
  return Expr(std::move(n));
}

Expr operator*(const Expr& l, const Expr& r) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Node::Kind::Mul;
  n->left = l.node_;
  n->right = r.node_;
  return Expr(std::move(n));
}

Expr operator*(float s, const Expr& e) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Node::Kind::Scale;
  n->value = s;
  n->left = e.node_;
  return Expr(std::move(n));
}

// --- lowering ----------------------------------------------------------------

namespace {

using Node = Expr::Node;

enum class TermClass { ZDown, ZUp, West, North, East, South, Other };

struct TempPool {
  uint32_t next = kTempBufferBase;
  std::vector<uint32_t> free_list;
  uint32_t high_water = 0;
  uint32_t live = 0;

  uint32_t acquire() {
    ++live;
    high_water = std::max(high_water, live);
    if (!free_list.empty()) {
      uint32_t id = free_list.back();
      free_list.pop_back();
      return id;
    }
    return next++;
  }
  void release(uint32_t id) {
    --live;
    free_list.push_back(id);
  }
};

class Lowerer {
 public:
  Lowerer(const AssignStmt& stmt, const FabricConfig& cfg) : stmt_(stmt), cfg_(cfg) {}

  RpcProgram run() {
    validate(stmt_.expr.node());
    const uint32_t len = stmt_.z.len();
    if (len > 0) lower_root();
    code_.push_back(make_rpc(RpcOpcode::Halt));
    RpcProgram p;
    p.instructions = std::move(code_);
    return p;
  }

 private:
  bool is_center_ref(const Node& n) const {
    return n.kind == Node::Kind::FieldRef && n.dx == 0 && n.dy == 0;
  }

  void validate(const Node& n) {
    switch (n.kind) {
      case Node::Kind::FieldRef: {
        if (stmt_.z.lo > stmt_.z.hi || stmt_.z.hi > cfg_.z_len)
          fail(Errc::bad_slice, "target slice leaves [0,W)");
        if (n.z.hi > cfg_.z_len) fail(Errc::bad_slice, "field read leaves [0,W)");
        if (n.z.len() != stmt_.z.len())
          fail(Errc::shape_mismatch, "slice length differs from the target slice");
        if (n.buffer == stmt_.target.id && (n.dx != 0 || n.dy != 0))
          fail(Errc::alias_violation,
               "target aliases a tile-shifted read of itself in one statement");
        break;
      }
      case Node::Kind::Const:
        break;
      case Node::Kind::Scale:
        validate(*n.left);
        break;
      case Node::Kind::Add:
      case Node::Kind::Mul:
        validate(*n.left);
        validate(*n.right);
        break;
    }
  }

  bool references(const Node& n, uint32_t buffer) const {
    switch (n.kind) {
      case Node::Kind::FieldRef: return n.buffer == buffer;
      case Node::Kind::Const: return false;
      case Node::Kind::Scale: return references(*n.left, buffer);
      case Node::Kind::Add:
      case Node::Kind::Mul: return references(*n.left, buffer) || references(*n.right, buffer);
    }
    return false;
  }

  void lower_root() {
    const Node& root = stmt_.expr.node();
    const uint32_t tgt = stmt_.target.id;
    const uint32_t lo = stmt_.z.lo;
    const uint32_t len = stmt_.z.len();

    if (!references(root, tgt)) {
      eval(root, tgt, lo, len);
      return;
    }
    // Self-assignments: the Copy/Scale handlers are alias-safe, so a plain
    // column move or rescale of the target stays a single RPC.
    if (is_center_ref(root) && root.buffer == tgt) {
      if (root.z.lo != lo)
        code_.push_back(make_rpc(RpcOpcode::Copy, {tgt, tgt, lo, root.z.lo, len}));
      return;
    }
    if (root.kind == Node::Kind::Scale && is_center_ref(*root.left) && root.left->buffer == tgt) {
      code_.push_back(
          make_rpc(RpcOpcode::Scale, {tgt, tgt, lo, root.left->z.lo, len}, {root.value}));
      return;
    }
    const uint32_t t = temps_.acquire();
    eval(root, t, lo, len);
    code_.push_back(make_rpc(RpcOpcode::Copy, {tgt, t, lo, lo, len}));
    temps_.release(t);
  }

  // Writes the value of `n` into dst[lo, lo+len). Temporaries are aligned to
  // the target slice, so every destination uses the same lo.
  void eval(const Node& n, uint32_t dst, uint32_t lo, uint32_t len) {
    switch (n.kind) {
      case Node::Kind::FieldRef:
        if (n.dx == 0 && n.dy == 0) {
          code_.push_back(make_rpc(RpcOpcode::Copy, {dst, n.buffer, lo, n.z.lo, len}));
        } else {
          // A shifted read materializes through a zeroed staging accumulator.
          code_.push_back(make_rpc(RpcOpcode::ScalarFill, {dst, lo, len}, {0.0f}));
          code_.push_back(make_rpc(shift_opcode(n), {dst, n.buffer, lo, n.z.lo, len}));
        }
        break;
      case Node::Kind::Const:
        code_.push_back(make_rpc(RpcOpcode::ScalarFill, {dst, lo, len}, {n.value}));
        break;
      case Node::Kind::Scale:
        if (is_center_ref(*n.left)) {
          code_.push_back(
              make_rpc(RpcOpcode::Scale, {dst, n.left->buffer, lo, n.left->z.lo, len}, {n.value}));
        } else {
          eval(*n.left, dst, lo, len);
          code_.push_back(make_rpc(RpcOpcode::Scale, {dst, dst, lo, lo, len}, {n.value}));
        }
        break;
      case Node::Kind::Mul: {
        eval(*n.left, dst, lo, len);
        const uint32_t t = temps_.acquire();
        eval(*n.right, t, lo, len);
        code_.push_back(make_rpc(RpcOpcode::ElemMul, {dst, dst, t, lo, lo, lo, len}));
        temps_.release(t);
        break;
      }
      case Node::Kind::Add: {
        std::vector<const Node*> terms;
        flatten(n, terms);
        eval_sum(terms, dst, lo, len);
        break;
      }
    }
  }

  static void flatten(const Node& n, std::vector<const Node*>& out) {
    if (n.kind == Node::Kind::Add) {
      flatten(*n.left, out);
      flatten(*n.right, out);
    } else {
      out.push_back(&n);
    }
  }

  TermClass classify(const Node& n, uint32_t lo) const {
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

  static RpcOpcode shift_opcode(const Node& n) {
    if (n.dx == -1) return RpcOpcode::ShiftAddWest;
    if (n.dx == 1) return RpcOpcode::ShiftAddEast;
    if (n.dy == 1) return RpcOpcode::ShiftAddNorth;
    return RpcOpcode::ShiftAddSouth;
  }

  // Left fold from +0.0f in canonical term order.
  void eval_sum(const std::vector<const Node*>& terms, uint32_t dst, uint32_t lo, uint32_t len) {
    std::vector<const Node*> ordered;
    ordered.reserve(terms.size());
    const TermClass classes[] = {TermClass::ZDown, TermClass::ZUp,  TermClass::West,
                                 TermClass::North, TermClass::East, TermClass::South,
                                 TermClass::Other};
    for (TermClass c : classes)
      for (const Node* t : terms)
        if (classify(*t, lo) == c) ordered.push_back(t);

    code_.push_back(make_rpc(RpcOpcode::ScalarFill, {dst, lo, len}, {0.0f}));
    for (const Node* t : ordered) {
      switch (classify(*t, lo)) {
        case TermClass::ZDown:
          code_.push_back(make_rpc(RpcOpcode::ZShiftAddDown, {dst, t->buffer, lo, len}));
          break;
        case TermClass::ZUp:
          code_.push_back(make_rpc(RpcOpcode::ZShiftAddUp, {dst, t->buffer, lo, len}));
          break;
        case TermClass::West:
        case TermClass::North:
        case TermClass::East:
        case TermClass::South:
          code_.push_back(make_rpc(shift_opcode(*t), {dst, t->buffer, lo, t->z.lo, len}));
          break;
        case TermClass::Other:
          if (t->kind == Node::Kind::FieldRef) {
            code_.push_back(
                make_rpc(RpcOpcode::ElemAdd, {dst, dst, t->buffer, lo, lo, t->z.lo, len}));
          } else {
            const uint32_t tmp = temps_.acquire();
            eval(*t, tmp, lo, len);
            code_.push_back(make_rpc(RpcOpcode::ElemAdd, {dst, dst, tmp, lo, lo, lo, len}));
            temps_.release(tmp);
          }
          break;
      }
    }
  }

  const AssignStmt& stmt_;
  const FabricConfig& cfg_;
  std::vector<RpcInstruction> code_;
  TempPool temps_;
};

}  // namespace

RpcProgram lower(const AssignStmt& stmt, const FabricConfig& cfg) {
  if (stmt.z.lo > stmt.z.hi || stmt.z.hi > cfg.z_len)
    fail(Errc::bad_slice, "target slice leaves [0,W)");
  return Lowerer(stmt, cfg).run();
}

// --- host transfer -----------------------------------------------------------

FieldHandle array_from_host(Fabric& fabric, const HostField& host, bool strict) {
  if (fabric.analytic())
    fail(Errc::bad_argument, "array_from_host requires a materialized fabric");
  const auto& cfg = fabric.config();
  if (host.x != cfg.x_dim || host.y != cfg.y_dim || host.w != cfg.z_len)
    fail(Errc::shape_mismatch, "host array dimensions do not match the fabric");
  if (strict) {
    for (float v : host.data)
      if (!std::isfinite(v)) fail(Errc::non_finite, "non-finite value in host array");
  }
  FieldHandle h;
  h.id = fabric.allocate_buffer_id();
  h.x = host.x;
  h.y = host.y;
  h.w = host.w;
  for (int64_t x = 0; x < cfg.x_dim; ++x) {
    for (int64_t y = 0; y < cfg.y_dim; ++y) {
      auto& col = fabric.worker_buffer(x, y, h.id);
      for (int64_t z = 0; z < cfg.z_len; ++z)
        col[static_cast<size_t>(z)] = host.at(static_cast<uint32_t>(x), static_cast<uint32_t>(y),
                                              static_cast<uint32_t>(z));
    }
  }
  return h;
}

HostField gather_to_host(const Fabric& fabric, const FieldHandle& h) {
  if (fabric.analytic())
    fail(Errc::bad_argument, "gather_to_host requires a materialized fabric");
  const auto& cfg = fabric.config();
  if (!fabric.buffer_on_all_workers(h.id))
    fail(Errc::missing_buffer, "dead handle: buffer " + std::to_string(h.id) +
                                   " is not live on every worker");
  HostField out(static_cast<uint32_t>(cfg.x_dim), static_cast<uint32_t>(cfg.y_dim),
                static_cast<uint32_t>(cfg.z_len));
  for (int64_t x = 0; x < cfg.x_dim; ++x) {
    for (int64_t y = 0; y < cfg.y_dim; ++y) {
      const auto& col = fabric.require_worker_buffer(x, y, h.id);
      for (int64_t z = 0; z < cfg.z_len; ++z)
        out.at(static_cast<uint32_t>(x), static_cast<uint32_t>(y), static_cast<uint32_t>(z)) =
            col[static_cast<size_t>(z)];
    }
  }
  return out;
}

// --- field files ---------------------------------------------------------------

namespace {
constexpr char kFieldMagic[4] = {'W', 'F', 'L', 'D'};

void put_u32_le(std::ostream& os, uint32_t v) {
  uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32_le(std::istream& is) {
  uint8_t b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) fail(Errc::io_error, "truncated field file");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}
}  // namespace

void save_field(const std::string& path, const HostField& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(Errc::io_error, "cannot open " + path);
  os.write(kFieldMagic, 4);
  put_u32_le(os, f.x);
  put_u32_le(os, f.y);
  put_u32_le(os, f.w);
  for (float v : f.data) put_u32_le(os, std::bit_cast<uint32_t>(v));
  if (!os) fail(Errc::io_error, "write failed: " + path);
}

void save_field_json(const std::string& path, const HostField& f) {
  if (f.data.size() > kJsonFieldCellLimit)
    fail(Errc::io_error, "JSON field files are limited to " +
                             std::to_string(kJsonFieldCellLimit) + " cells");
  nlohmann::ordered_json j;
  j["x"] = f.x;
  j["y"] = f.y;
  j["w"] = f.w;
  j["data"] = f.data;
  std::ofstream os(path);
  if (!os) fail(Errc::io_error, "cannot open " + path);
  os << j.dump(2) << '\n';
  if (!os) fail(Errc::io_error, "write failed: " + path);
}

HostField load_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::io_error, "cannot open " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (is && std::memcmp(magic, kFieldMagic, 4) == 0) {
    HostField f;
    f.x = get_u32_le(is);
    f.y = get_u32_le(is);
    f.w = get_u32_le(is);
    const uint64_t n = static_cast<uint64_t>(f.x) * f.y * f.w;
    f.data.resize(n);
    for (uint64_t i = 0; i < n; ++i) f.data[i] = std::bit_cast<float>(get_u32_le(is));
    return f;
  }
  // JSON variant
  is.clear();
  is.seekg(0);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::io_error, std::string("not a WFLD or JSON field file: ") + e.what());
  }
  HostField f;
  f.x = j.at("x").get<uint32_t>();
  f.y = j.at("y").get<uint32_t>();
  f.w = j.at("w").get<uint32_t>();
  f.data = j.at("data").get<std::vector<float>>();
  const uint64_t n = static_cast<uint64_t>(f.x) * f.y * f.w;
  if (n > kJsonFieldCellLimit)
    fail(Errc::io_error, "JSON field files are limited to " +
                             std::to_string(kJsonFieldCellLimit) + " cells");
  if (f.data.size() != n) fail(Errc::io_error, "field payload size mismatch");
  return f;
}

}  // namespace wfsim
