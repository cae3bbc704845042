#pragma once

#include <optional>
#include <ostream>
#include <string>

#include "aqo/config.hpp"
#include "aqo/engine.hpp"
#include "aqo/harness.hpp"

namespace aqo {

struct SimulationSummary {
  std::size_t corpus_size = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  int episodes = 0;

  double spearman_difficulty = 0.0;  // predicted d vs planted d*, held-out
  double learned_success = 0.0;      // mean closed-form success probability
  double learned_mean_cost = 0.0;
  double baseline_success = 0.0;     // always-max-depth, always-priciest-model
  double baseline_mean_cost = 0.0;
  double mean_depth_easy = 0.0;
  double mean_depth_hard = 0.0;
  harness::EvalReport report;        // learned-policy evaluation on held-out
};

// Fully offline end-to-end loop: generate a planted corpus, split 1:4, train
// the policies against the simulator, then evaluate the learned deterministic
// policy on the held-out split next to a static heavyweight baseline
// (depth = l_max everywhere, priciest model everywhere). Evaluation scores
// each plan by its closed-form success probability, so reports are noise-free
// and reproducible.
SimulationSummary run_simulation(const EngineConfig& config, Engine& engine,
                                 std::ostream* progress = nullptr);

// Convenience: builds the engine from the config (built-in catalog and
// simulator pool when paths are unset).
SimulationSummary run_simulation(const EngineConfig& config, std::ostream* progress = nullptr);

std::string summary_to_json(const SimulationSummary& summary);

}  // namespace aqo
