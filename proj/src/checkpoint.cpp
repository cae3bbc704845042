#include "aqo/checkpoint.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace aqo::numerics {

using json = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw ContractViolation("format_double: conversion failed");
  return std::string(buf, ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ContractViolation("parse_double: invalid value '" + s + "'");
  return v;
}

void save_checkpoint(const std::string& path, const std::vector<CheckpointModule>& modules,
                     std::uint64_t seed) {
  json root;
  root["version"] = 1;
  json mods = json::object();
  for (const auto& mod : modules) {
    json shapes = json::array();
    json values = json::array();
    for (const Matrix* m : mod.matrices) {
      shapes.push_back(json::array({m->rows, m->cols}));
      for (double v : m->values) values.push_back(format_double(v));
    }
    json entry;
    entry["shapes"] = std::move(shapes);
    entry["values"] = std::move(values);
    mods[mod.name] = std::move(entry);
  }
  root["modules"] = std::move(mods);
  root["seed"] = seed;

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + tmp);
    out << root.dump(2) << '\n';
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("save_checkpoint: rename to " + path + " failed");
}

std::uint64_t load_checkpoint(const std::string& path,
                              const std::vector<CheckpointModule>& modules) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  json root = json::parse(in);
  if (root.value("version", 0) != 1)
    throw std::runtime_error("load_checkpoint: unsupported version in " + path);
  const json& mods = root.at("modules");
  for (const auto& mod : modules) {
    if (!mods.contains(mod.name))
      throw std::runtime_error("load_checkpoint: missing module '" + mod.name + "'");
    const json& entry = mods.at(mod.name);
    const json& shapes = entry.at("shapes");
    const json& values = entry.at("values");
    if (shapes.size() != mod.matrices.size())
      throw std::runtime_error("load_checkpoint: matrix count mismatch in '" + mod.name + "'");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < mod.matrices.size(); ++i) {
      Matrix* m = mod.matrices[i];
      const std::size_t r = shapes[i][0].get<std::size_t>();
      const std::size_t c = shapes[i][1].get<std::size_t>();
      if (r != m->rows || c != m->cols)
        throw std::runtime_error("load_checkpoint: shape mismatch in '" + mod.name + "'");
      if (offset + r * c > values.size())
        throw std::runtime_error("load_checkpoint: value array too short in '" + mod.name + "'");
      for (std::size_t k = 0; k < r * c; ++k)
        m->values[k] = parse_double(values[offset + k].get<std::string>());
      offset += r * c;
    }
    if (offset != values.size())
      throw std::runtime_error("load_checkpoint: trailing values in '" + mod.name + "'");
  }
  return root.at("seed").get<std::uint64_t>();
}

}  // namespace aqo::numerics
