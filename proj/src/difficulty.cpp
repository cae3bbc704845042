#include "aqo/difficulty.hpp"

#include <algorithm>
#include <cmath>

namespace aqo::difficulty {

using numerics::ContractViolation;
using numerics::Matrix;
using numerics::Vec;

LossComponents difficulty_loss(double d, int y, const PosteriorParams& p, double lambda_kl) {
  if (!(d > 0.0 && d < 1.0)) throw ContractViolation("difficulty_loss: d must be in (0,1)");
  if (y != 0 && y != 1) throw ContractViolation("difficulty_loss: y must be 0 or 1");
  if (!(lambda_kl > 0.0)) throw ContractViolation("difficulty_loss: lambda_kl must be > 0");
  if (p.mu.size() != p.log_var.size())
    throw ContractViolation("difficulty_loss: posterior length mismatch");

  LossComponents out;
  out.cal = -static_cast<double>(y) * std::log(1.0 - d) -
            (1.0 - static_cast<double>(y)) * std::log(d);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.mu.size(); ++i) {
    const double var = std::exp(p.log_var[i]);
    kl += p.mu[i] * p.mu[i] + var - p.log_var[i] - 1.0;
  }
  out.kl = 0.5 * kl;
  out.loss = out.cal + lambda_kl * out.kl;
  return out;
}

static numerics::MlpSpec affine_spec(std::size_t in, std::size_t out) {
  return {{{in, out, numerics::Activation::Identity}}};
}

Estimator::Estimator(EstimatorConfig config)
    : config_(config),
      enc_mu_spec_(affine_spec(config.input_dim, config.latent_dim)),
      enc_logvar_spec_(affine_spec(config.input_dim, config.latent_dim)),
      head_spec_({{{config.latent_dim, config.head_hidden, numerics::Activation::Relu},
                   {config.head_hidden, 1, numerics::Activation::Identity}}}),
      enc_mu_(numerics::make_params(enc_mu_spec_)),
      enc_logvar_(numerics::make_params(enc_logvar_spec_)),
      head_(numerics::make_params(head_spec_)),
      optimizer_(config.learning_rate, config.momentum),
      noise_(Rng(config.seed).fork(0x6e6f697365)),
      replay_rng_(Rng(config.seed).fork(0x7265706c6179)) {
  Rng init(Rng(config.seed).fork(0x696e6974));
  numerics::init_xavier(enc_mu_spec_, enc_mu_, init);
  numerics::init_xavier(enc_logvar_spec_, enc_logvar_, init);
  numerics::init_xavier(head_spec_, head_, init);
  // Zero output layer: a fresh engine predicts d = 0.5 for every query.
  head_.weights[1].fill(0.0);
  head_.biases[1].fill(0.0);
}

PosteriorParams Estimator::encode(const embedding::EmbeddingVector& x) const {
  if (x.dim != config_.input_dim)
    throw ContractViolation("encode: embedding dim " + std::to_string(x.dim) +
                            " != configured input dim " + std::to_string(config_.input_dim));
  PosteriorParams p;
  p.mu = numerics::forward_value(enc_mu_spec_, enc_mu_, x.values);
  p.log_var = numerics::forward_value(enc_logvar_spec_, enc_logvar_, x.values);
  return p;
}

Vec Estimator::sample_latent(const PosteriorParams& p, std::span<const double> epsilon) const {
  if (epsilon.size() != p.mu.size())
    throw ContractViolation("sample_latent: epsilon length mismatch");
  Vec z(p.mu.size());
  for (std::size_t i = 0; i < z.size(); ++i)
    z[i] = p.mu[i] + std::exp(0.5 * p.log_var[i]) * epsilon[i];
  return z;
}

double Estimator::decode_difficulty(std::span<const double> z) const {
  const Vec out = numerics::forward_value(head_spec_, head_, z);
  const double d = numerics::sigmoid(out[0]);
  return std::clamp(d, kDifficultyClamp, 1.0 - kDifficultyClamp);
}

DifficultyEstimate Estimator::estimate(const embedding::EmbeddingVector& x) const {
  const PosteriorParams p = encode(x);
  DifficultyEstimate e;
  e.z = p.mu;  // epsilon = 0 at inference
  e.d = decode_difficulty(e.z);
  return e;
}

std::pair<double, std::vector<Matrix>> Estimator::loss_and_gradients(
    const std::vector<OutcomeRecord>& batch, const std::vector<Vec>& epsilons,
    double lambda_kl) const {
  if (batch.empty()) throw ContractViolation("loss_and_gradients: empty batch");
  if (epsilons.size() != batch.size())
    throw ContractViolation("loss_and_gradients: epsilon count mismatch");

  std::vector<Matrix> grads;
  for (const Matrix* p : parameters()) grads.emplace_back(p->rows, p->cols);
  // Layout indices into grads: see parameters().
  constexpr std::size_t kMuW = 0, kMuB = 1, kLvW = 2, kLvB = 3;
  constexpr std::size_t kHeadBase = 4;  // W1, W2, b1, b2

  double total_loss = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto& rec = batch[n];
    const auto& eps = epsilons[n];
    auto [mu, mu_tape] = numerics::forward(enc_mu_spec_, enc_mu_, rec.query_embedding.values);
    auto [lv, lv_tape] =
        numerics::forward(enc_logvar_spec_, enc_logvar_, rec.query_embedding.values);
    Vec sigma(lv.size());
    for (std::size_t i = 0; i < lv.size(); ++i) sigma[i] = std::exp(0.5 * lv[i]);
    Vec z(mu.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = mu[i] + sigma[i] * eps[i];

    auto [head_out, head_tape] = numerics::forward(head_spec_, head_, z);
    const double d =
        std::clamp(numerics::sigmoid(head_out[0]), kDifficultyClamp, 1.0 - kDifficultyClamp);
    const LossComponents lc = difficulty_loss(d, rec.y, PosteriorParams{mu, lv}, lambda_kl);
    total_loss += lc.loss;

    // d cal / d logit for cal(sigmoid(t), y)
    const double y = static_cast<double>(rec.y);
    const Vec dlogit{y * d - (1.0 - y) * (1.0 - d)};
    auto [head_grads, dz] = numerics::backward(head_spec_, head_, head_tape, dlogit);

    Vec dmu(mu.size()), dlv(lv.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      dmu[i] = dz[i] + lambda_kl * mu[i];
      dlv[i] = dz[i] * 0.5 * sigma[i] * eps[i] +
               lambda_kl * 0.5 * (std::exp(lv[i]) - 1.0);
    }
    auto [mu_grads, unused_mu] = numerics::backward(enc_mu_spec_, enc_mu_, mu_tape, dmu);
    auto [lv_grads, unused_lv] = numerics::backward(enc_logvar_spec_, enc_logvar_, lv_tape, dlv);

    auto add = [](Matrix& dst, const Matrix& src) {
      for (std::size_t i = 0; i < dst.values.size(); ++i) dst.values[i] += src.values[i];
    };
    add(grads[kMuW], mu_grads.weights[0]);
    add(grads[kMuB], mu_grads.biases[0]);
    add(grads[kLvW], lv_grads.weights[0]);
    add(grads[kLvB], lv_grads.biases[0]);
    add(grads[kHeadBase + 0], head_grads.weights[0]);
    add(grads[kHeadBase + 1], head_grads.weights[1]);
    add(grads[kHeadBase + 2], head_grads.biases[0]);
    add(grads[kHeadBase + 3], head_grads.biases[1]);
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (auto& g : grads)
    for (auto& v : g.values) v *= inv_n;
  return {total_loss * inv_n, std::move(grads)};
}

double Estimator::fit_step(const std::vector<OutcomeRecord>& batch, double lambda_kl,
                           double learning_rate) {
  if (batch.empty()) throw ContractViolation("fit_step: empty batch");
  std::vector<Vec> epsilons;
  epsilons.reserve(batch.size());
  for (std::size_t n = 0; n < batch.size(); ++n) {
    Vec eps(config_.latent_dim);
    for (auto& e : eps) e = noise_.normal();
    epsilons.push_back(std::move(eps));
  }
  auto [loss, grads] = loss_and_gradients(batch, epsilons, lambda_kl);
  if (!std::isfinite(loss)) throw ContractViolation("fit_step: non-finite loss; step skipped");

  optimizer_.set_learning_rate(learning_rate);
  std::vector<const Matrix*> grad_ptrs;
  for (const auto& g : grads) grad_ptrs.push_back(&g);
  auto params = parameters();
  std::string err;
  if (!optimizer_.try_step(params, grad_ptrs, &err))
    throw ContractViolation("fit_step: " + err);
  return loss;
}

void Estimator::push_outcome(OutcomeRecord record) {
  if (record.y != 0 && record.y != 1)
    throw ContractViolation("push_outcome: label must be 0 or 1");
  replay_.push_back(std::move(record));
  while (replay_.size() > config_.replay_capacity) replay_.pop_front();
}

double Estimator::fit_from_replay() {
  if (replay_.empty()) return 0.0;
  const std::size_t batch_size = std::min(config_.replay_batch, replay_.size());
  std::vector<OutcomeRecord> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i)
    batch.push_back(replay_[replay_rng_.next_below(replay_.size())]);
  return fit_step(batch, config_.lambda_kl, config_.learning_rate);
}

std::vector<Matrix*> Estimator::parameters() {
  return {&enc_mu_.weights[0], &enc_mu_.biases[0],   &enc_logvar_.weights[0],
          &enc_logvar_.biases[0], &head_.weights[0], &head_.weights[1],
          &head_.biases[0],       &head_.biases[1]};
}

std::vector<const Matrix*> Estimator::parameters() const {
  return {&enc_mu_.weights[0], &enc_mu_.biases[0],   &enc_logvar_.weights[0],
          &enc_logvar_.biases[0], &head_.weights[0], &head_.weights[1],
          &head_.biases[0],       &head_.biases[1]};
}

}  // namespace aqo::difficulty
