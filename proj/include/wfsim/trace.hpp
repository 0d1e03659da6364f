#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wfsim/fabric.hpp"

namespace wfsim {

// One post-phase snapshot: the value column of `buffer` on one tile, taken
// after the RPC at (step, rpc) completed its phase barrier.
struct TraceRecord {
  uint64_t step = 0;   // driver-level step (e.g. solver time step)
  uint32_t rpc = 0;    // instruction index within the dispatched program
  uint16_t opcode = 0;
  int64_t tile_x = 0;
  int64_t tile_y = 0;
  uint32_t buffer = 0;
  std::vector<float> values;

  bool same_site(const TraceRecord& o) const {
    return step == o.step && rpc == o.rpc && opcode == o.opcode && tile_x == o.tile_x &&
           tile_y == o.tile_y && buffer == o.buffer && values.size() == o.values.size();
  }
};

// Collects records for a set of watched tiles (empty watch list = all
// workers). Tiles are visited row-major (y outer, x inner) so that two
// engines tracing the same program emit comparable streams.
struct TraceSink {
  std::vector<TraceRecord> records;
  std::vector<TileCoord> watch;  // empty -> every worker

  bool watches(int64_t x, int64_t y) const {
    if (watch.empty()) return true;
    for (const auto& t : watch)
      if (t.x == x && t.y == y) return true;
    return false;
  }
};

// JSON-lines serialization (one TraceRecord per line).
void write_trace_jsonl(const std::string& path, const std::vector<TraceRecord>& records);
std::vector<TraceRecord> read_trace_jsonl(const std::string& path);

}  // namespace wfsim
