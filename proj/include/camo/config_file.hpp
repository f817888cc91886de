#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "camo/patch_trainer.hpp"

namespace camo {

// Flat key-value text: one "key value" pair per line, '#' starts a comment.
inline std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::string value;
    std::getline(ls, value);
    const auto start = value.find_first_not_of(" \t");
    value = start == std::string::npos ? "" : value.substr(start);
    const auto end = value.find_last_not_of(" \t\r");
    if (end != std::string::npos) value.resize(end + 1);
    if (value.empty())
      throw ParseError(path + " line " + std::to_string(lineno) +
                       ": key '" + key + "' has no value");
    if (kv.count(key))
      throw ParseError(path + " line " + std::to_string(lineno) +
                       ": duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

// One experiment of the patch grid, as stored in configs/: the PatchConfig
// fields plus optional default weights/dataset paths.
struct PatchExperiment {
  PatchConfig config;
  std::string weights_path;
  std::string dataset_path;
};

inline PatchExperiment load_patch_experiment(const std::string& path) {
  auto kv = read_kv_file(path);
  PatchExperiment exp;
  auto take = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) return std::string();
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto to_double = [&](const std::string& v, const char* key) {
    try {
      return std::stod(v);
    } catch (const std::exception&) {
      throw ParseError(path + ": key '" + std::string(key) +
                       "' expects a number, got '" + v + "'");
    }
  };

  if (auto v = take("name"); !v.empty()) exp.config.name = v;
  if (auto v = take("loss"); !v.empty()) exp.config.loss_kind = parse_loss_kind(v);
  if (auto v = take("size"); !v.empty())
    exp.config.size_fraction = to_double(v, "size");
  if (auto v = take("alpha"); !v.empty()) exp.config.alpha = to_double(v, "alpha");
  if (auto v = take("gray"); !v.empty()) {
    if (v != "true" && v != "false")
      throw ParseError(path + ": key 'gray' expects true or false, got '" + v +
                       "'");
    exp.config.grayscale = v == "true";
  }
  if (auto v = take("init"); !v.empty()) {
    if (v == "random") exp.config.init = PatchInit::Random;
    else if (v == "gray_flat") exp.config.init = PatchInit::GrayFlat;
    else if (v == "legacy") exp.config.init = PatchInit::Legacy;
    else
      throw ParseError(path + ": unknown init '" + v + "'");
  }
  if (auto v = take("legacy_file"); !v.empty()) exp.config.legacy_path = v;
  if (auto v = take("noise"); !v.empty())
    exp.config.noise_amp = to_double(v, "noise");
  if (auto v = take("epochs"); !v.empty())
    exp.config.epochs = static_cast<int>(to_double(v, "epochs"));
  if (auto v = take("lr"); !v.empty()) exp.config.lr = to_double(v, "lr");
  if (auto v = take("tv_weight"); !v.empty())
    exp.config.tv_weight = to_double(v, "tv_weight");
  if (auto v = take("nps_weight"); !v.empty())
    exp.config.nps_weight = to_double(v, "nps_weight");
  if (auto v = take("patch_pixels"); !v.empty())
    exp.config.patch_pixels = static_cast<int>(to_double(v, "patch_pixels"));
  if (auto v = take("batch_size"); !v.empty())
    exp.config.batch_size = static_cast<int>(to_double(v, "batch_size"));
  if (auto v = take("seed"); !v.empty())
    exp.config.seed = static_cast<std::uint64_t>(to_double(v, "seed"));
  if (auto v = take("obj_reduce"); !v.empty()) {
    if (v == "max") exp.config.obj_reduce = ObjReduce::Max;
    else if (v == "mean") exp.config.obj_reduce = ObjReduce::Mean;
    else
      throw ParseError(path + ": unknown obj_reduce '" + v + "'");
  }
  exp.weights_path = take("weights");
  exp.dataset_path = take("dataset");

  if (!kv.empty())
    throw ParseError(path + ": unknown key '" + kv.begin()->first + "'");
  return exp;
}

inline void save_patch_experiment(const std::string& path,
                                  const PatchExperiment& exp) {
  std::ofstream os(path);
  if (!os) throw IoError("config: cannot open '" + path + "' for writing");
  os.precision(9);
  os << "name " << exp.config.name << '\n';
  os << "loss " << to_string(exp.config.loss_kind) << '\n';
  os << "size " << exp.config.size_fraction << '\n';
  os << "alpha " << exp.config.alpha << '\n';
  os << "gray " << (exp.config.grayscale ? "true" : "false") << '\n';
  os << "init "
     << (exp.config.init == PatchInit::Random
             ? "random"
             : exp.config.init == PatchInit::GrayFlat ? "gray_flat" : "legacy")
     << '\n';
  if (!exp.config.legacy_path.empty())
    os << "legacy_file " << exp.config.legacy_path << '\n';
  os << "noise " << exp.config.noise_amp << '\n';
  os << "epochs " << exp.config.epochs << '\n';
  os << "lr " << exp.config.lr << '\n';
  os << "tv_weight " << exp.config.tv_weight << '\n';
  os << "seed " << exp.config.seed << '\n';
  if (!exp.weights_path.empty()) os << "weights " << exp.weights_path << '\n';
  if (!exp.dataset_path.empty()) os << "dataset " << exp.dataset_path << '\n';
}

}  // namespace camo
