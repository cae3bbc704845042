#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "aqo/embedding.hpp"
#include "aqo/numerics.hpp"
#include "aqo/rng.hpp"

namespace aqo::difficulty {

struct PosteriorParams {
  numerics::Vec mu;
  numerics::Vec log_var;
};

struct DifficultyEstimate {
  numerics::Vec z;
  double d = 0.5;  // in (0, 1); higher means harder
};

struct OutcomeRecord {
  embedding::EmbeddingVector query_embedding;
  int y = 0;  // 1 = solved
};

struct LossComponents {
  double loss = 0.0;
  double cal = 0.0;
  double kl = 0.0;
};

// cal = -y*ln(1-d) - (1-y)*ln d;
// kl  = 0.5 * sum_i (mu_i^2 + sigma_i^2 - log sigma_i^2 - 1);
// loss = cal + lambda_kl * kl.
LossComponents difficulty_loss(double d, int y, const PosteriorParams& p, double lambda_kl);

// Predicted difficulty is clamped into [kDifficultyClamp, 1 - kDifficultyClamp]
// before any log.
inline constexpr double kDifficultyClamp = 1e-12;

struct EstimatorConfig {
  std::size_t input_dim = 384;   // h, must equal the provider dim
  std::size_t latent_dim = 16;   // k
  std::size_t head_hidden = 32;  // m
  double lambda_kl = 1e-2;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t replay_capacity = 4096;
  std::size_t replay_batch = 32;
  std::uint64_t seed = 0;
};

// Gaussian posterior over latent difficulty plus a scalar difficulty head.
// Sampling at inference uses the posterior mean (epsilon = 0), so estimates
// are deterministic; training samples epsilon from a seeded stream.
class Estimator {
public:
  explicit Estimator(EstimatorConfig config);

  const EstimatorConfig& config() const { return config_; }

  PosteriorParams encode(const embedding::EmbeddingVector& x) const;
  numerics::Vec sample_latent(const PosteriorParams& p, std::span<const double> epsilon) const;
  double decode_difficulty(std::span<const double> z) const;

  DifficultyEstimate estimate(const embedding::EmbeddingVector& x) const;

  // One gradient step on the mean loss over the batch. Returns the pre-step
  // mean loss. Training noise comes from the estimator's seeded stream.
  double fit_step(const std::vector<OutcomeRecord>& batch, double lambda_kl,
                  double learning_rate);

  // Replay buffer (bounded FIFO, uniform sampling).
  void push_outcome(OutcomeRecord record);
  std::size_t replay_size() const { return replay_.size(); }
  // Runs fit_step on a uniformly sampled replay minibatch; no-op when empty.
  double fit_from_replay();

  // Gradients of the mean batch loss w.r.t. all parameters (aligned with
  // parameters()); exposed for gradient checking. Does not mutate
  // parameters. epsilons holds one vector of length latent_dim per record.
  std::pair<double, std::vector<numerics::Matrix>> loss_and_gradients(
      const std::vector<OutcomeRecord>& batch, const std::vector<numerics::Vec>& epsilons,
      double lambda_kl) const;

  // Parameter access, ordered: enc_mu.{W,b}, enc_logvar.{W,b},
  // head.{W1,W2,b1,b2}.
  std::vector<numerics::Matrix*> parameters();
  std::vector<const numerics::Matrix*> parameters() const;

private:
  EstimatorConfig config_;
  numerics::MlpSpec enc_mu_spec_, enc_logvar_spec_, head_spec_;
  numerics::MlpParams enc_mu_, enc_logvar_, head_;
  numerics::SgdOptimizer optimizer_;
  mutable Rng noise_;
  std::deque<OutcomeRecord> replay_;
  Rng replay_rng_;
};

}  // namespace aqo::difficulty
