#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aqo/difficulty.hpp"
#include "aqo/embedding.hpp"
#include "aqo/numerics.hpp"
#include "aqo/protocol.hpp"
#include "aqo/rng.hpp"
#include "aqo/router.hpp"

namespace aqo::alloc {

// One catalog entry: a protocol with its profile and embedding. The model
// half of the operator pairing is assigned later by the router.
struct OperatorSpec {
  std::string name;
  Protocol protocol = Protocol::Cot;
  embedding::OperatorProfile profile;
  embedding::EmbeddingVector embedding;
};

struct OperatorCatalog {
  std::vector<OperatorSpec> operators;

  std::size_t size() const { return operators.size(); }
  void validate() const;
};

// Builds a catalog from a profile file; embeddings come from description +
// interface text and are cached for the catalog's lifetime.
OperatorCatalog load_catalog(const std::string& profile_path,
                             const embedding::Provider& provider);

struct LayerSelection {
  std::vector<std::size_t> chosen;   // catalog indices in draw order
  numerics::Vec normalized_scores;   // over the whole catalog, sums to 1
  double log_prob = 0.0;
};

struct WorkflowPlan {
  std::vector<LayerSelection> layers;
  // Per layer, one decision per chosen operator (same order as chosen).
  std::vector<std::vector<router::RoutingDecision>> assignments;
  double log_prob_total = 0.0;
  double difficulty_used = 0.5;

  std::size_t depth() const { return layers.size(); }
  bool has_assignments() const { return !assignments.empty(); }
  std::size_t operator_count() const;
};

enum class PlanMode { Deterministic, Sampled };

// L = max(1, ceil(d * L_max)).
std::size_t adapt_depth(double d, std::size_t l_max);

// Cumulative-threshold decoding: sort scores descending (ties -> lower
// index), take the shortest prefix whose mass reaches tau.
std::vector<std::size_t> select_layer(std::span<const double> normalized_scores, double tau);

struct AllocatorConfig {
  std::size_t latent_dim = 16;  // k
  std::size_t embed_dim = 384;  // h
  std::size_t hidden = 64;
  std::size_t l_max = 5;
  double tau = 0.3;
  std::uint64_t seed = 0;
};

// The per-layer MoE gate: a shared FFN scores each candidate operator given
// the difficulty latent, the query embedding, the candidate's embedding, and
// fixed-arity sums of previously selected operator embeddings.
class AllocatorPolicy {
public:
  explicit AllocatorPolicy(AllocatorConfig config);

  const AllocatorConfig& config() const { return config_; }

  // Softmax-normalized compatibility scores over the catalog. history holds
  // one entry per completed layer (sum of chosen operator embeddings);
  // missing slots are zero-padded up to l_max - 1.
  numerics::Vec score_operators(std::span<const double> z,
                                const embedding::EmbeddingVector& query_vec,
                                const std::vector<numerics::Vec>& history,
                                const OperatorCatalog& catalog) const;

  // Sequential without-replacement draws from the renormalized remaining
  // scores; stops once the drawn set's original mass reaches tau.
  LayerSelection sample_layer(const numerics::Vec& normalized_scores, double tau,
                              Rng& rng) const;

  // Deterministic counterpart; log_prob is the probability of drawing the
  // descending-score prefix in that exact order.
  LayerSelection select_layer_deterministic(const numerics::Vec& normalized_scores,
                                            double tau) const;

  // Depth from adapt_depth, layers built autoregressively. Does not assign
  // models; log_prob_total covers layer draws only until the router runs.
  WorkflowPlan build_plan(const embedding::EmbeddingVector& query_vec,
                          const difficulty::DifficultyEstimate& estimate,
                          const OperatorCatalog& catalog, double tau, std::size_t l_max,
                          PlanMode mode, Rng& rng) const;

  // Log-probability of the recorded layer draws (allocator part only).
  double layers_log_prob(const WorkflowPlan& plan,
                         const embedding::EmbeddingVector& query_vec,
                         const difficulty::DifficultyEstimate& estimate,
                         const OperatorCatalog& catalog, double tau) const;

  // Adds coeff * d(layers log prob)/d(params) into grads (aligned with
  // parameters()).
  void accumulate_grad_log_prob(const WorkflowPlan& plan,
                                const embedding::EmbeddingVector& query_vec,
                                const difficulty::DifficultyEstimate& estimate,
                                const OperatorCatalog& catalog, double tau,
                                double coeff, std::vector<numerics::Matrix>& grads) const;

  std::vector<numerics::Matrix*> parameters();
  std::vector<const numerics::Matrix*> parameters() const;
  std::vector<numerics::Matrix> zero_gradients() const;

  // Log-probability of one recorded ordered draw sequence under scores.
  static double sequence_log_prob(const numerics::Vec& normalized_scores,
                                  const std::vector<std::size_t>& chosen, double tau);

  // Sum over layers of chosen-operator embeddings, for history slots.
  static numerics::Vec sum_embeddings(const std::vector<std::size_t>& chosen,
                                      const OperatorCatalog& catalog);

private:
  numerics::Vec raw_scores(std::span<const double> z,
                           const embedding::EmbeddingVector& query_vec,
                           const std::vector<numerics::Vec>& history,
                           const OperatorCatalog& catalog,
                           std::vector<numerics::ForwardTape>* tapes) const;
  numerics::Vec assemble_input(std::span<const double> z,
                               const embedding::EmbeddingVector& query_vec,
                               const embedding::EmbeddingVector& candidate,
                               const std::vector<numerics::Vec>& history) const;

  AllocatorConfig config_;
  numerics::MlpSpec ffn_spec_;
  numerics::MlpParams ffn_;
};

// JSON form: {"depth":L, "layers":[{"operators":[names], "models":[names]}],
// "log_prob":..., "difficulty":...} with stable key order.
std::string plan_to_json(const WorkflowPlan& plan, const OperatorCatalog& catalog);

}  // namespace aqo::alloc
