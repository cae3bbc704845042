#pragma once

#include <memory>
#include <string>
#include <vector>

#include "aqo/allocator.hpp"
#include "aqo/config.hpp"
#include "aqo/difficulty.hpp"
#include "aqo/embedding.hpp"
#include "aqo/harness.hpp"
#include "aqo/numerics.hpp"
#include "aqo/router.hpp"

namespace aqo {

// Built-in operator catalog and simulator model pool, used when the config
// does not point at files. The fixtures under fixtures/ mirror this data.
alloc::OperatorCatalog builtin_catalog(const embedding::Provider& provider);
std::vector<router::ModelCard> builtin_sim_pool(const embedding::Provider& provider);

// Owns the difficulty estimator, allocator, router, catalog, and model pool,
// and exposes the per-query pipeline: embed -> estimate -> plan -> route.
class Engine {
public:
  // Builds the provider from the config and loads catalog/pool from the
  // configured paths (built-in defaults when the paths are empty).
  explicit Engine(EngineConfig config);

  // Test/simulation constructor with explicit components.
  Engine(EngineConfig config, std::shared_ptr<embedding::Provider> provider,
         alloc::OperatorCatalog catalog, std::vector<router::ModelCard> pool);

  const EngineConfig& config() const { return config_; }
  const embedding::Provider& provider() const { return *provider_; }
  const alloc::OperatorCatalog& catalog() const { return catalog_; }
  const std::vector<router::ModelCard>& pool() const { return pool_; }

  difficulty::Estimator& estimator() { return estimator_; }
  const difficulty::Estimator& estimator() const { return estimator_; }
  alloc::AllocatorPolicy& allocator() { return allocator_; }
  const alloc::AllocatorPolicy& allocator() const { return allocator_; }
  router::RouterPolicy& router() { return router_; }
  const router::RouterPolicy& router() const { return router_; }

  difficulty::DifficultyEstimate estimate(const std::string& query_text) const;

  // Full pipeline: deterministic mode for inference, sampled for training.
  harness::PlannedQuery plan_query(const std::string& query_text, alloc::PlanMode mode,
                                   Rng& rng) const;

  // Recomputes the log-probability of the full trajectory (layer draws plus
  // model draws); matches the value recorded at sampling time.
  double plan_log_prob(const alloc::WorkflowPlan& plan, const std::string& query_text) const;

  // Per-layer embeddings of the plan's chosen operators, for the router.
  std::vector<std::vector<embedding::EmbeddingVector>> operator_embeddings(
      const alloc::WorkflowPlan& plan) const;

  // Combined trainable policy parameters (allocator then router).
  std::vector<numerics::Matrix*> policy_parameters();

  // Shared momentum state for allocator + router updates; a single writer
  // applies steps.
  numerics::SgdOptimizer& policy_optimizer() { return policy_optimizer_; }

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

private:
  EngineConfig config_;
  std::shared_ptr<embedding::Provider> provider_;
  alloc::OperatorCatalog catalog_;
  std::vector<router::ModelCard> pool_;
  difficulty::Estimator estimator_;
  alloc::AllocatorPolicy allocator_;
  router::RouterPolicy router_;
  numerics::SgdOptimizer policy_optimizer_;
};

}  // namespace aqo
