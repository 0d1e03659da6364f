#include "wfsim/trace.hpp"

#include <fstream>

#include "json.hpp"

namespace wfsim {

void write_trace_jsonl(const std::string& path, const std::vector<TraceRecord>& records) {
  std::ofstream f(path);
  if (!f) fail(Errc::io_error, "cannot open " + path);
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["rpc"] = r.rpc;
    j["opcode"] = r.opcode;
    j["tile"] = {r.tile_x, r.tile_y};
    j["buffer"] = r.buffer;
    j["values"] = r.values;
    f << j.dump() << '\n';
  }
  if (!f) fail(Errc::io_error, "write failed: " + path);
}

std::vector<TraceRecord> read_trace_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(Errc::io_error, "cannot open " + path);
  std::vector<TraceRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::io_error, "bad trace line in " + path + ": " + e.what());
    }
    TraceRecord r;
    r.step = j.at("step").get<uint64_t>();
    r.rpc = j.at("rpc").get<uint32_t>();
    r.opcode = j.at("opcode").get<uint16_t>();
    r.tile_x = j.at("tile").at(0).get<int64_t>();
    r.tile_y = j.at("tile").at(1).get<int64_t>();
    r.buffer = j.at("buffer").get<uint32_t>();
    r.values = j.at("values").get<std::vector<float>>();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace wfsim
