#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace aqo::gradcheck {

struct SuiteResult {
  std::string name;
  double max_rel_error = 0.0;
  int seeds = 0;
};

// Each check builds a small randomly initialized instance, computes analytic
// gradients, and compares against central finite differences.
double check_mlp(std::uint64_t seed, double step);
double check_difficulty_loss(std::uint64_t seed, double step);
double check_allocator_score(std::uint64_t seed, double step);
double check_router(std::uint64_t seed, double step);

// Runs every suite over `seeds` seeds; max_rel_error is the worst seed.
std::vector<SuiteResult> run_all(int seeds = 10, double step = 1e-5);

}  // namespace aqo::gradcheck
