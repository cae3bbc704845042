#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "aqo/numerics.hpp"

namespace aqo::numerics {

// Named group of parameter matrices, serialized as one "modules" entry.
struct CheckpointModule {
  std::string name;
  std::vector<Matrix*> matrices;  // order defines the flat value layout
};

// Writes {"version":1, "modules":{name:{"shapes":[[r,c],...],
// "values":[...]}}, "seed":seed}. Values are full-precision decimal strings
// so the round trip is exact. Atomic (temp file + rename).
void save_checkpoint(const std::string& path, const std::vector<CheckpointModule>& modules,
                     std::uint64_t seed);

// Loads a checkpoint into pre-shaped matrices. Shapes must match exactly.
// Returns the stored seed.
std::uint64_t load_checkpoint(const std::string& path,
                              const std::vector<CheckpointModule>& modules);

std::string format_double(double v);   // shortest exact decimal form
double parse_double(const std::string& s);

}  // namespace aqo::numerics
