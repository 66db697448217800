#include "derrt/env/env_io.hpp"

#include <fstream>
#include <stdexcept>

namespace derrt::env {

using nlohmann::json;

std::vector<std::size_t> rle_encode(const std::vector<std::uint8_t>& cells) {
  std::vector<std::size_t> runs;
  std::uint8_t current = 0;
  std::size_t count = 0;
  for (std::uint8_t c : cells) {
    const std::uint8_t v = c ? 1 : 0;
    if (v != current) {
      runs.push_back(count);
      current = v;
      count = 0;
    }
    ++count;
  }
  runs.push_back(count);
  return runs;
}

std::vector<std::uint8_t> rle_decode(const std::vector<std::size_t>& runs, std::size_t expected) {
  std::vector<std::uint8_t> cells;
  cells.reserve(expected);
  std::uint8_t v = 0;
  for (std::size_t r : runs) {
    if (cells.size() + r > expected) throw std::runtime_error("run-length data exceeds map size");
    cells.insert(cells.end(), r, v);
    v ^= 1;
  }
  if (cells.size() != expected) throw std::runtime_error("run-length data does not cover the map");
  return cells;
}

json to_json(const Configuration& c) { return json(std::vector<double>(c.values().begin(), c.values().end())); }

Configuration config_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Configuration(std::span<const double>(v));
}

json to_json(const Environment& env) {
  json j;
  j["version"] = kEnvFormatVersion;
  j["generator"] = env.generator;
  j["seed"] = env.seed;
  j["width"] = env.map.width;
  j["height"] = env.map.height;
  j["resolution"] = env.map.resolution;
  j["cells"] = rle_encode(env.map.cells);
  j["start"] = to_json(env.start);
  j["goal"] = {{"center", to_json(env.goal_center)}, {"radius", env.goal_radius}};
  j["agent_clearance"] = env.agent_clearance;
  json agents = json::array();
  for (const auto& a : env.agents) {
    json waypoints = json::array();
    for (const auto& w : a.waypoints) waypoints.push_back(to_json(w));
    agents.push_back({{"counter_clockwise", a.counter_clockwise}, {"waypoints", std::move(waypoints)}});
  }
  j["agents"] = std::move(agents);
  if (env.passage) {
    const auto& p = *env.passage;
    j["passage"] = {{"rect", {p.x0, p.y0, p.x1, p.y1}}, {"entrance", to_json(p.entrance)}};
  }
  if (env.bugtrap) {
    const auto& b = *env.bugtrap;
    j["bugtrap"] = {{"center", to_json(b.center)},       {"angle", b.angle},
                    {"half_size", b.half_size},          {"wall", b.wall},
                    {"channel_half_width", b.channel_half_width}, {"channel_length", b.channel_length}};
  }
  if (env.roundabout) {
    const auto& r = *env.roundabout;
    j["roundabout"] = {{"center", to_json(r.center)}, {"half_x", r.half_x}, {"half_y", r.half_y}};
  }
  return j;
}

Environment environment_from_json(const json& j) {
  const int version = j.at("version").get<int>();
  if (version != kEnvFormatVersion) throw std::runtime_error("unsupported environment version " + std::to_string(version));
  Environment env;
  env.generator = j.at("generator").get<std::string>();
  env.seed = j.at("seed").get<std::uint64_t>();
  env.map = OccupancyMap(j.at("width").get<int>(), j.at("height").get<int>(), j.value("resolution", 1.0));
  env.map.cells = rle_decode(j.at("cells").get<std::vector<std::size_t>>(), env.map.cells.size());
  env.start = config_from_json(j.at("start"));
  env.goal_center = config_from_json(j.at("goal").at("center"));
  env.goal_radius = j.at("goal").at("radius").get<double>();
  env.agent_clearance = j.value("agent_clearance", 2.0);
  for (const auto& a : j.at("agents")) {
    AgentTrack track;
    track.counter_clockwise = a.value("counter_clockwise", true);
    for (const auto& w : a.at("waypoints")) track.waypoints.push_back(config_from_json(w));
    env.agents.push_back(std::move(track));
  }
  if (j.contains("passage")) {
    const auto& p = j["passage"];
    const auto rect = p.at("rect").get<std::vector<double>>();
    if (rect.size() != 4) throw std::runtime_error("passage.rect must have 4 entries");
    env.passage = PassageInfo{rect[0], rect[1], rect[2], rect[3], config_from_json(p.at("entrance"))};
  }
  if (j.contains("bugtrap")) {
    const auto& b = j["bugtrap"];
    env.bugtrap = BugtrapInfo{config_from_json(b.at("center")), b.at("angle").get<double>(),
                              b.at("half_size").get<double>(), b.at("wall").get<double>(),
                              b.at("channel_half_width").get<double>(), b.at("channel_length").get<double>()};
  }
  if (j.contains("roundabout")) {
    const auto& r = j["roundabout"];
    env.roundabout = RoundaboutInfo{config_from_json(r.at("center")), r.at("half_x").get<double>(), r.at("half_y").get<double>()};
  }
  return env;
}

void save_environment(const std::filesystem::path& path, const Environment& env) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << to_json(env).dump() << '\n';
}

Environment load_environment(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return environment_from_json(json::parse(is));
}

}  // namespace derrt::env
