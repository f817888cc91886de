#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "camo/detector.hpp"

namespace camo {

// Binary weight container, little-endian:
//   "CAMW" | u32 version | u32 len + config fingerprint text
//   u32 tensor count | per tensor: u32 len + name, u32 rank, i32 dims,
//   u64 element count, raw f32 payload
// The payload is written byte-for-byte from memory, so save/load round-trips
// bit-exactly.

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::string read_str(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

inline DetectorConfig parse_fingerprint(const std::string& text) {
  DetectorConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("weights fingerprint line " + std::to_string(lineno) +
                       ": missing '='");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "input_size") cfg.input_size = std::stoi(val);
    else if (key == "grid_size") cfg.grid_size = std::stoi(val);
    else if (key == "num_anchors") cfg.num_anchors = std::stoi(val);
    else if (key == "num_classes") cfg.num_classes = std::stoi(val);
    else if (key == "coord_weight") cfg.coord_weight = std::stof(val);
    else if (key == "noobj_weight") cfg.noobj_weight = std::stof(val);
    else if (key == "loss_scale") cfg.loss_scale = std::stof(val);
    else if (key == "anchors") {
      cfg.anchor_sizes.clear();
      std::istringstream as(val);
      std::string tok;
      while (std::getline(as, tok, ',')) {
        const auto x = tok.find('x');
        if (x == std::string::npos)
          throw ParseError("weights fingerprint line " +
                           std::to_string(lineno) + ": bad anchor '" + tok +
                           "'");
        cfg.anchor_sizes.emplace_back(std::stof(tok.substr(0, x)),
                                      std::stof(tok.substr(x + 1)));
      }
    } else if (key == "conv_channels") {
      cfg.conv_channels.clear();
      std::istringstream cs(val);
      std::string tok;
      while (std::getline(cs, tok, ',')) cfg.conv_channels.push_back(std::stoi(tok));
    } else {
      throw ParseError("weights fingerprint line " + std::to_string(lineno) +
                       ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

}  // namespace detail

inline void save_weights(const std::string& path, const DetectorWeights& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("save_weights: cannot open '" + path + "'");
  os.write("CAMW", 4);
  detail::write_u32(os, 1);
  detail::write_str(os, w.config.fingerprint());
  detail::write_u32(os, static_cast<std::uint32_t>(w.tensors.size()));
  for (const auto& [name, t] : w.tensors) {
    detail::write_str(os, name);
    detail::write_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape())
      os.write(reinterpret_cast<const char*>(&d), sizeof d);
    detail::write_u64(os, t.size());
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!os) throw IoError("save_weights: write failed for '" + path + "'");
}

inline DetectorWeights load_weights(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_weights: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "CAMW")
    throw ParseError("load_weights: '" + path + "' is not a CAMW file");
  const std::uint32_t version = detail::read_u32(is);
  if (version != 1)
    throw ParseError("load_weights: unsupported version " +
                     std::to_string(version));
  DetectorWeights w;
  w.config = detail::parse_fingerprint(detail::read_str(is));
  const std::uint32_t count = detail::read_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = detail::read_str(is);
    const std::uint32_t rank = detail::read_u32(is);
    Shape shape(rank);
    for (auto& d : shape)
      is.read(reinterpret_cast<char*>(&d), sizeof d);
    const std::uint64_t n = detail::read_u64(is);
    std::vector<float> data(n);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!is)
      throw ParseError("load_weights: truncated tensor '" + name + "' in '" +
                       path + "'");
    w.tensors.emplace_back(name, Tensor<float>(std::move(shape), std::move(data)));
  }
  return w;
}

}  // namespace camo
