#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aqo/embedding.hpp"
#include "aqo/numerics.hpp"
#include "aqo/rng.hpp"

namespace aqo::alloc {
struct WorkflowPlan;
}

namespace aqo::router {

// A backbone model available to the router.
struct ModelCard {
  std::string name;
  std::string profile_text;
  embedding::EmbeddingVector embedding;  // unit norm, computed from profile_text
  double price_prompt = 0.0;             // USD per 1e6 prompt tokens
  double price_completion = 0.0;         // USD per 1e6 completion tokens
  double sim_capability = 0.5;           // in (0,1), simulator backend only
};

// Loads a JSON list of model cards; embeddings are computed from
// profile_text by the provider, never stored in the file.
std::vector<ModelCard> load_model_pool(const std::string& path,
                                       const embedding::Provider& provider);

struct RoutingDecision {
  std::size_t operator_index = 0;  // position within the plan layer
  std::string model_name;
  std::size_t pool_index = 0;
  numerics::Vec probabilities;     // over the pool, sums to 1
  double log_prob = 0.0;
};

enum class AssignMode { Deterministic, Sampled };

struct RouterConfig {
  std::size_t query_dim = 384;   // h
  std::size_t latent_dim = 16;   // k
  std::size_t model_dim = 384;   // model profile embedding dim
  std::size_t hidden = 64;
  std::size_t proj_dim = 32;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

// Layer-agnostic model selection: similarity between a combined context
// embedding and projected model embeddings, temperature-scaled softmax.
class RouterPolicy {
public:
  explicit RouterPolicy(RouterConfig config);

  const RouterConfig& config() const { return config_; }

  // p_m proportional to exp(<h_hat, e_m_hat> / T), where
  // h = FFN_comb(FFN_q(query) || W_z z || FFN_o(op)) and e_m = FFN_m(model).
  numerics::Vec route_distribution(const embedding::EmbeddingVector& query_vec,
                                   std::span<const double> z,
                                   const embedding::EmbeddingVector& operator_embedding,
                                   const std::vector<ModelCard>& pool, double temperature) const;

  // Fills plan.assignments and accumulates router log-probs into
  // plan.log_prob_total. The plan must not be assigned yet.
  // operator_embeddings holds, per plan layer, the embedding of each chosen
  // operator in chosen order.
  void assign_models(alloc::WorkflowPlan& plan, const embedding::EmbeddingVector& query_vec,
                     std::span<const double> z,
                     const std::vector<std::vector<embedding::EmbeddingVector>>& operator_embeddings,
                     const std::vector<ModelCard>& pool, double temperature, AssignMode mode,
                     Rng& rng) const;

  // Recomputes the log-prob of the recorded assignments.
  double assignments_log_prob(const alloc::WorkflowPlan& plan,
                              const embedding::EmbeddingVector& query_vec,
                              std::span<const double> z,
                              const std::vector<std::vector<embedding::EmbeddingVector>>&
                                  operator_embeddings,
                              const std::vector<ModelCard>& pool, double temperature) const;

  // Adds coeff * d(log prob of recorded assignments)/d(params) into grads
  // (aligned with parameters()).
  void accumulate_grad_log_prob(const alloc::WorkflowPlan& plan,
                                const embedding::EmbeddingVector& query_vec,
                                std::span<const double> z,
                                const std::vector<std::vector<embedding::EmbeddingVector>>&
                                    operator_embeddings,
                                const std::vector<ModelCard>& pool, double temperature,
                                double coeff, std::vector<numerics::Matrix>& grads) const;

  std::vector<numerics::Matrix*> parameters();
  std::vector<const numerics::Matrix*> parameters() const;
  std::vector<numerics::Matrix> zero_gradients() const;

private:
  struct DecisionCache;
  DecisionCache route_forward(const embedding::EmbeddingVector& query_vec,
                              std::span<const double> z,
                              const embedding::EmbeddingVector& operator_embedding,
                              const std::vector<ModelCard>& pool, double temperature) const;
  void route_backward(const DecisionCache& cache, const std::vector<ModelCard>& pool,
                      double temperature, std::size_t chosen, double coeff,
                      std::vector<numerics::Matrix>& grads) const;

  RouterConfig config_;
  numerics::MlpSpec q_spec_, o_spec_, m_spec_, comb_spec_, z_spec_;
  numerics::MlpParams q_, o_, m_, comb_, z_proj_;
};

}  // namespace aqo::router
