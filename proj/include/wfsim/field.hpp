#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "wfsim/fabric.hpp"
#include "wfsim/rpc.hpp"

namespace wfsim {

// Half-open z-range [lo, hi).
struct Slice {
  uint32_t lo = 0;
  uint32_t hi = 0;
  uint32_t len() const { return hi - lo; }
  bool operator==(const Slice&) const = default;
};

// Handle to a distributed field: buffer `id` live on every Worker, holding a
// column of w cells on an x*y tile grid.
struct FieldHandle {
  uint32_t id = 0;
  uint32_t x = 0;
  uint32_t y = 0;
  uint32_t w = 0;
};

// Host-side dense field, laid out x-major, then y, then z:
// data[(x*Y + y)*W + z].
struct HostField {
  uint32_t x = 0, y = 0, w = 0;
  std::vector<float> data;

  HostField() = default;
  HostField(uint32_t x_, uint32_t y_, uint32_t w_, float fill = 0.0f)
      : x(x_), y(y_), w(w_), data(static_cast<size_t>(x_) * y_ * w_, fill) {}
  size_t index(uint32_t ix, uint32_t iy, uint32_t iz) const {
    return (static_cast<size_t>(ix) * y + iy) * w + iz;
  }
  float& at(uint32_t ix, uint32_t iy, uint32_t iz) { return data[index(ix, iy, iz)]; }
  float at(uint32_t ix, uint32_t iy, uint32_t iz) const { return data[index(ix, iy, iz)]; }
};

// Expression AST over relatively-indexed field reads.
//
// A FieldRef reads `handle` on the tile shifted by (dx, dy) — -1/0/1 meaning
// W/C/E in x and S/C/N in y — at the ref's own z-slice. Shifted reads on the
// fabric edge see the Moat-supplied boundary value. dx and dy may not both be
// nonzero (the fabric has only Cartesian links).
//
// Evaluation semantics are pinned so that "bit-exact" is testable:
//   - a flattened sum evaluates as a left fold from +0.0f over its terms in
//     canonical order: z-down refs, z-up refs, then W, N, E, S shifted refs,
//     then all remaining terms, keeping original order inside each class;
//   - a bare shifted ref also materializes as 0.0f + value (it arrives via a
//     zeroed staging accumulator);
//   - Scale and Mul round once per node.
// lower() emits programs with exactly these semantics, and the replay oracle
// mirrors them.
class Expr {
 public:
  struct Node;

  static Expr field(const FieldHandle& h, Slice z, int dx = 0, int dy = 0);
  static Expr constant(float value);

  friend Expr operator+(const Expr& l, const Expr& r);
  friend Expr operator*(const Expr& l, const Expr& r);  // elementwise product
  friend Expr operator*(float s, const Expr& e);        // scale

  const Node& node() const { return *node_; }

 private:
  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
};

struct Expr::Node {
  enum class Kind { FieldRef, Const, Add, Mul, Scale };
  Kind kind;
  // FieldRef
  uint32_t buffer = 0;
  Slice z{};
  int dx = 0, dy = 0;
  // Const / Scale
  float value = 0.0f;
  // Add / Mul / Scale children
  std::shared_ptr<const Node> left, right;
};

struct AssignStmt {
  FieldHandle target;
  Slice z;
  Expr expr;
};

// Compiles one assignment into an RPC program (no trailing Halt is implied;
// lower() appends it). Boundary reads substitute the Moat value; slice and
// neighborhood violations are compile errors, never silent wraps.
RpcProgram lower(const AssignStmt& stmt, const FabricConfig& cfg);

// Scratch buffer ids used by lowered programs; never exposed as handles.
constexpr uint32_t kTempBufferBase = 0xFFFF0000u;

// Distributes a host array: Worker (x,y) receives column data[x][y][.].
FieldHandle array_from_host(Fabric& fabric, const HostField& host, bool strict = true);
// Pure read of the full distributed field.
HostField gather_to_host(const Fabric& fabric, const FieldHandle& h);

// Field files: binary "WFLD" header (u32 X, u32 Y, u32 W) + binary32 payload,
// little-endian; a JSON variant is accepted (and writable) for fields with at
// most kJsonFieldCellLimit cells.
constexpr uint64_t kJsonFieldCellLimit = 4096;
void save_field(const std::string& path, const HostField& f);
void save_field_json(const std::string& path, const HostField& f);
HostField load_field(const std::string& path);  // sniffs binary vs JSON

}  // namespace wfsim
