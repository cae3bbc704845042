#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "aqo/allocator.hpp"
#include "aqo/harness.hpp"
#include "aqo/rng.hpp"

namespace aqo {
class Engine;
}

namespace aqo::optimizer {

// Cost is expressed in 1e-3 USD units inside the reward.
inline constexpr double kCostUnitUsd = 1e-3;

struct TrainingConfig {
  double lambda_cost = 1e-3;
  int k_samples = 4;
  double tau = 0.3;
  std::size_t l_max = 5;
  double temperature = 1.0;
  double lambda_kl = 1e-2;
  double policy_learning_rate = 0.05;
  double policy_momentum = 0.9;
  int parallel = 1;  // concurrent plan executions inside one episode
};

// R = U - lambda_cost * (cost_usd / 1e-3).
double reward(double utility, double cost_usd, double lambda_cost);

struct EpisodeRecord {
  std::string query_id;
  std::vector<alloc::WorkflowPlan> plans;
  std::vector<double> rewards;
  double baseline = 0.0;
  bool applied = false;  // gradients reached the parameters
  double mean_cost_usd = 0.0;
  int best_utility = 0;
  double estimated_difficulty = 0.5;
  std::string diagnostic;
};

// Executes one plan and reports utility/cost. The Rng is an independent
// stream for this evaluation.
using PlanEvaluator =
    std::function<harness::PlanOutcome(const alloc::WorkflowPlan&, const harness::DatasetRecord&,
                                       Rng&)>;

// Samples K plans, executes them, and applies one REINFORCE step with the
// mean reward baseline: grad = 1/(K-1) * sum_k (R_k - b) * dlogP(plan_k).
// The 1/(K-1) normalization makes the mean-baseline estimator exactly
// unbiased. The best plan's utility is pushed into the difficulty replay
// buffer as the outcome label.
EpisodeRecord training_episode(Engine& engine, const harness::DatasetRecord& record,
                               const TrainingConfig& config, const PlanEvaluator& evaluator,
                               Rng& rng);

// Streams one observed outcome into the difficulty estimator and runs one
// replay fit step. Returns the refreshed estimate for the query.
difficulty::DifficultyEstimate feedback_update(Engine& engine, const std::string& query_text,
                                               int success);

struct TrainLoopOptions {
  int episodes = 2000;
  int difficulty_fits_per_episode = 1;
  std::string log_path;         // line-delimited JSON, empty = no log
  std::string checkpoint_path;  // empty = no checkpoints
  int checkpoint_every = 0;     // 0 = only at the end
};

struct TrainStats {
  int episodes_run = 0;
  int episodes_skipped = 0;
  double final_mean_reward = 0.0;  // over the last 100 episodes
};

// Cycles through the training records in seeded shuffled order, one episode
// per step, with a difficulty replay fit after each episode.
TrainStats train_loop(Engine& engine, const std::vector<harness::DatasetRecord>& train,
                      const TrainingConfig& config, const TrainLoopOptions& options,
                      const PlanEvaluator& evaluator, Rng& rng);

}  // namespace aqo::optimizer
