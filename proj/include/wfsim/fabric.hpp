#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wfsim/error.hpp"

namespace wfsim {

// Tile-array geometry. x_dim/y_dim are the Worker rectangle extents (X, Y),
// z_len is the number of cells in each tile's column (W), clock_hz the fabric
// clock (F_c). Total cell count is X*Y*W.
struct FabricConfig {
  int64_t x_dim = 1;
  int64_t y_dim = 1;
  int64_t z_len = 1;
  double clock_hz = 851.08e6;

  void validate() const {
    if (x_dim < 1 || y_dim < 1 || z_len < 1)
      fail(Errc::invalid_config, "fabric dimensions must be >= 1");
    if (!(clock_hz > 0.0)) fail(Errc::invalid_config, "clock_hz must be > 0");
  }
  uint64_t cell_count() const {
    return static_cast<uint64_t>(x_dim) * static_cast<uint64_t>(y_dim) *
           static_cast<uint64_t>(z_len);
  }
};

// 0-based tile coordinate. Workers occupy [0,X) x [0,Y); the Moat ring is the
// one-tile border at x==-1, x==X, y==-1, y==Y (corners included).
struct TileCoord {
  int64_t x = 0;
  int64_t y = 0;
  bool operator==(const TileCoord&) const = default;
};

enum class TileRole { Worker, Moat, Control, ControlTransmission };

enum class Direction : uint8_t { West = 0, East = 1, North = 2, South = 3 };

const char* direction_name(Direction d);

// Per-phase cycle counters. total() is always the sum of the phases.
struct CycleLedger {
  uint64_t compute = 0;
  uint64_t exchange = 0;
  uint64_t reduce = 0;
  uint64_t broadcast = 0;
  uint64_t overhead = 0;

  uint64_t total() const { return compute + exchange + reduce + broadcast + overhead; }
  CycleLedger& operator+=(const CycleLedger& o) {
    compute += o.compute;
    exchange += o.exchange;
    reduce += o.reduce;
    broadcast += o.broadcast;
    overhead += o.overhead;
    return *this;
  }
  friend CycleLedger operator+(CycleLedger a, const CycleLedger& b) { return a += b; }
  friend CycleLedger operator-(const CycleLedger& a, const CycleLedger& b) {
    return CycleLedger{a.compute - b.compute, a.exchange - b.exchange, a.reduce - b.reduce,
                       a.broadcast - b.broadcast, a.overhead - b.overhead};
  }
  bool operator==(const CycleLedger&) const = default;
};

// Buffer store of one tile: buffer-id -> column of z_len single-precision
// values. All buffers on a tile share the same length.
using TileMemory = std::unordered_map<uint32_t, std::vector<float>>;

struct RoleCounts {
  uint64_t workers = 0;
  uint64_t moats = 0;
  uint64_t control = 1;
  uint64_t control_transmission = 0;
};

// The simulated tile array: Worker rectangle, Moat ring, scalar register
// file (register 0 holds the Moat boundary value), and the cycle ledger.
//
// An "analytic" fabric carries geometry and the ledger but no tile memory;
// dispatching programs on it runs cost accounting only. This is how cycle
// formulas are evaluated at full-wafer dimensions that cannot materialize.
class Fabric {
 public:
  static constexpr uint32_t kGammaRegister = 0;

  explicit Fabric(FabricConfig cfg, bool analytic = false);

  const FabricConfig& config() const { return cfg_; }
  bool analytic() const { return analytic_; }

  // --- geometry ---------------------------------------------------------
  bool on_fabric(TileCoord c) const;
  TileRole role_at(TileCoord c) const;  // Worker or Moat; error off-fabric
  RoleCounts role_counts() const;
  // Adjacent tile in `dir`, or nullopt when the move leaves the Moat ring.
  std::optional<TileCoord> neighbor(TileCoord c, Direction dir) const;

  // --- tile memory (Workers) --------------------------------------------
  // Fetch-or-create (zero-filled, length W).
  std::vector<float>& worker_buffer(int64_t x, int64_t y, uint32_t id);
  // Fetch; throws Errc::missing_buffer when absent.
  const std::vector<float>& require_worker_buffer(int64_t x, int64_t y, uint32_t id) const;
  std::vector<float>& require_worker_buffer(int64_t x, int64_t y, uint32_t id);
  bool buffer_on_all_workers(uint32_t id) const;
  void require_buffer_everywhere(uint32_t id, const std::string& context) const;

  // Column of `id` as seen from a Worker looking at tile `c`: a Worker tile
  // yields its stored buffer, a Moat tile supplies the boundary value from
  // scalar register 0.
  void read_column(TileCoord c, uint32_t id, std::span<float> out) const;

  // --- scalar registers ---------------------------------------------------
  float scalar_register(uint32_t reg) const;
  void set_scalar_register(uint32_t reg, float v);
  float boundary_value() const { return scalar_register(kGammaRegister); }
  void set_boundary_value(float v) { set_scalar_register(kGammaRegister, v); }

  // --- exchange (one directional shift) -----------------------------------
  // Every Worker receives its `from`-neighbor's copy of src_buffer into a
  // per-direction staging buffer; Moat neighbors supply the boundary value.
  // Charges z_len cycles to the exchange phase. Returns the staging id.
  uint32_t exchange(uint32_t src_buffer, Direction from);
  static uint32_t staging_buffer_id(Direction from);

  // --- ledger -------------------------------------------------------------
  CycleLedger& ledger() { return ledger_; }
  const CycleLedger& ledger() const { return ledger_; }

  // Fresh id for a user field buffer.
  uint32_t allocate_buffer_id() { return next_buffer_id_++; }

  // Control-tile program store ("more than enough memory"): the dispatcher
  // stashes the encoded bytecode of the most recently dispatched program.
  std::vector<uint8_t>& control_store() { return control_store_; }

 private:
  size_t worker_index(int64_t x, int64_t y) const {
    return static_cast<size_t>(y) * static_cast<size_t>(cfg_.x_dim) + static_cast<size_t>(x);
  }

  FabricConfig cfg_;
  bool analytic_ = false;
  std::vector<TileMemory> workers_;  // row-major: y outer, x inner
  std::unordered_map<uint32_t, float> scalar_registers_;
  CycleLedger ledger_;
  uint32_t next_buffer_id_ = 1;
  std::vector<uint8_t> control_store_;
};

inline Fabric build_fabric(FabricConfig cfg, bool analytic = false) {
  return Fabric(std::move(cfg), analytic);
}

}  // namespace wfsim
