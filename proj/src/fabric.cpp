#include "wfsim/fabric.hpp"

#include <algorithm>

namespace wfsim {

const char* direction_name(Direction d) {
  switch (d) {
    case Direction::West: return "W";
    case Direction::East: return "E";
    case Direction::North: return "N";
    case Direction::South: return "S";
  }
  return "?";
}

Fabric::Fabric(FabricConfig cfg, bool analytic) : cfg_(cfg), analytic_(analytic) {
  cfg_.validate();
  if (!analytic_) {
    const uint64_t tiles = static_cast<uint64_t>(cfg_.x_dim) * static_cast<uint64_t>(cfg_.y_dim);
    // Materialized fabrics are desk-scale; a full wafer must use analytic mode.
    if (tiles > (1ull << 24))
      fail(Errc::invalid_config,
           "fabric too large to materialize; construct with analytic=true");
    workers_.resize(static_cast<size_t>(tiles));
  }
  scalar_registers_[kGammaRegister] = 0.0f;
}

bool Fabric::on_fabric(TileCoord c) const {
  return c.x >= -1 && c.x <= cfg_.x_dim && c.y >= -1 && c.y <= cfg_.y_dim;
}

TileRole Fabric::role_at(TileCoord c) const {
  if (!on_fabric(c)) fail(Errc::bad_argument, "coordinate off fabric");
  const bool worker = c.x >= 0 && c.x < cfg_.x_dim && c.y >= 0 && c.y < cfg_.y_dim;
  return worker ? TileRole::Worker : TileRole::Moat;
}

RoleCounts Fabric::role_counts() const {
  RoleCounts rc;
  rc.workers = static_cast<uint64_t>(cfg_.x_dim) * static_cast<uint64_t>(cfg_.y_dim);
  rc.moats = 2 * static_cast<uint64_t>(cfg_.x_dim + cfg_.y_dim) + 4;
  rc.control = 1;
  rc.control_transmission = static_cast<uint64_t>(cfg_.y_dim);
  return rc;
}

std::optional<TileCoord> Fabric::neighbor(TileCoord c, Direction dir) const {
  if (!on_fabric(c)) fail(Errc::bad_argument, "coordinate off fabric");
  TileCoord n = c;
  switch (dir) {
    case Direction::West: n.x -= 1; break;
    case Direction::East: n.x += 1; break;
    case Direction::North: n.y += 1; break;
    case Direction::South: n.y -= 1; break;
  }
  if (!on_fabric(n)) return std::nullopt;
  return n;
}

std::vector<float>& Fabric::worker_buffer(int64_t x, int64_t y, uint32_t id) {
  auto& mem = workers_[worker_index(x, y)];
  auto [it, inserted] = mem.try_emplace(id);
  if (inserted) it->second.assign(static_cast<size_t>(cfg_.z_len), 0.0f);
  return it->second;
}

const std::vector<float>& Fabric::require_worker_buffer(int64_t x, int64_t y,
                                                        uint32_t id) const {
  const auto& mem = workers_[worker_index(x, y)];
  auto it = mem.find(id);
  if (it == mem.end())
    fail(Errc::missing_buffer, "buffer " + std::to_string(id) + " missing on worker (" +
                                   std::to_string(x) + "," + std::to_string(y) + ")");
  return it->second;
}

std::vector<float>& Fabric::require_worker_buffer(int64_t x, int64_t y, uint32_t id) {
  return const_cast<std::vector<float>&>(
      static_cast<const Fabric*>(this)->require_worker_buffer(x, y, id));
}

bool Fabric::buffer_on_all_workers(uint32_t id) const {
  for (const auto& mem : workers_)
    if (!mem.contains(id)) return false;
  return true;
}

void Fabric::require_buffer_everywhere(uint32_t id, const std::string& context) const {
  if (!buffer_on_all_workers(id))
    fail(Errc::missing_buffer, context + ": buffer " + std::to_string(id) +
                                   " is not present on every worker");
}

void Fabric::read_column(TileCoord c, uint32_t id, std::span<float> out) const {
  if (role_at(c) == TileRole::Moat) {
    std::fill(out.begin(), out.end(), boundary_value());
    return;
  }
  const auto& buf = require_worker_buffer(c.x, c.y, id);
  std::copy(buf.begin(), buf.end(), out.begin());
}

float Fabric::scalar_register(uint32_t reg) const {
  auto it = scalar_registers_.find(reg);
  return it == scalar_registers_.end() ? 0.0f : it->second;
}

void Fabric::set_scalar_register(uint32_t reg, float v) { scalar_registers_[reg] = v; }

uint32_t Fabric::staging_buffer_id(Direction from) {
  return 0xFFFF0100u + static_cast<uint32_t>(from);
}

uint32_t Fabric::exchange(uint32_t src_buffer, Direction from) {
  if (analytic_) fail(Errc::bad_argument, "exchange requires a materialized fabric");
  require_buffer_everywhere(src_buffer, "exchange");
  const uint32_t staging = staging_buffer_id(from);
  const size_t w = static_cast<size_t>(cfg_.z_len);
  for (int64_t y = 0; y < cfg_.y_dim; ++y) {
    for (int64_t x = 0; x < cfg_.x_dim; ++x) {
      auto& dst = worker_buffer(x, y, staging);
      auto n = neighbor({x, y}, from);
      read_column(*n, src_buffer, std::span<float>(dst.data(), w));
    }
  }
  ledger_.exchange += static_cast<uint64_t>(cfg_.z_len);
  return staging;
}

}  // namespace wfsim
