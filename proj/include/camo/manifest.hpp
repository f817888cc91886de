#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "camo/error.hpp"
#include "camo/version.hpp"

namespace camo {

// Replay record written into every artifact directory: the command, its full
// configuration snapshot and seed are sufficient to reproduce the outputs
// byte for byte.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string version = kVersion;
  double wall_seconds = 0.0;
};

inline void write_manifest(const std::string& dir, const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config"] = m.config;
  j["seed"] = m.seed;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["version"] = m.version;
  j["wall_seconds"] = m.wall_seconds;
  const auto path = std::filesystem::path(dir) / "manifest.json";
  std::ofstream os(path);
  if (!os) throw IoError("manifest: cannot open '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

inline RunManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("manifest: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest '" + path + "': " + e.what());
  }
  RunManifest m;
  m.command = j.value("command", "");
  if (j.contains("config"))
    for (auto& [k, v] : j["config"].items()) m.config[k] = v.get<std::string>();
  m.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("inputs")) m.inputs = j["inputs"].get<std::vector<std::string>>();
  if (j.contains("outputs"))
    m.outputs = j["outputs"].get<std::vector<std::string>>();
  m.version = j.value("version", "");
  m.wall_seconds = j.value("wall_seconds", 0.0);
  return m;
}

}  // namespace camo
