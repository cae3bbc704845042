#include "aqo/router.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "aqo/allocator.hpp"

namespace aqo::router {

using numerics::ContractViolation;
using numerics::Matrix;
using numerics::Vec;

std::vector<ModelCard> load_model_pool(const std::string& path,
                                       const embedding::Provider& provider) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model_pool: cannot open " + path);
  nlohmann::ordered_json root = nlohmann::ordered_json::parse(in);
  if (!root.is_array()) throw std::runtime_error("load_model_pool: expected a JSON list");
  std::vector<ModelCard> pool;
  for (const auto& entry : root) {
    ModelCard card;
    card.name = entry.at("name").get<std::string>();
    card.profile_text = entry.at("profile_text").get<std::string>();
    card.price_prompt = entry.at("price_prompt").get<double>();
    card.price_completion = entry.at("price_completion").get<double>();
    card.sim_capability = entry.value("sim_capability", 0.5);
    if (card.price_prompt < 0.0 || card.price_completion < 0.0)
      throw std::runtime_error("load_model_pool: negative price for " + card.name);
    card.embedding = provider.embed(card.profile_text);
    for (const auto& prior : pool)
      if (prior.name == card.name)
        throw std::runtime_error("load_model_pool: duplicate model " + card.name);
    pool.push_back(std::move(card));
  }
  if (pool.empty()) throw std::runtime_error("load_model_pool: empty pool in " + path);
  return pool;
}

namespace {

Vec normalized(const Vec& u, double* norm_out) {
  double sq = 0.0;
  for (double v : u) sq += v * v;
  const double norm = std::max(std::sqrt(sq), 1e-12);
  if (norm_out) *norm_out = norm;
  Vec out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] / norm;
  return out;
}

// dL/du for v = u / ||u||, given g = dL/dv.
Vec normalize_backward(const Vec& v_hat, const Vec& g, double norm) {
  double dot = 0.0;
  for (std::size_t i = 0; i < v_hat.size(); ++i) dot += v_hat[i] * g[i];
  Vec out(v_hat.size());
  for (std::size_t i = 0; i < v_hat.size(); ++i) out[i] = (g[i] - v_hat[i] * dot) / norm;
  return out;
}

}  // namespace

RouterPolicy::RouterPolicy(RouterConfig config) : config_(config) {
  if (config_.proj_dim == 0 || config_.hidden == 0)
    throw ContractViolation("RouterPolicy: dimensions must be positive");
  const auto hidden = config_.hidden;
  const auto proj = config_.proj_dim;
  q_spec_ = {{{config_.query_dim, hidden, numerics::Activation::Relu},
              {hidden, proj, numerics::Activation::Identity}}};
  o_spec_ = {{{config_.model_dim, hidden, numerics::Activation::Relu},
              {hidden, proj, numerics::Activation::Identity}}};
  m_spec_ = {{{config_.model_dim, hidden, numerics::Activation::Relu},
              {hidden, proj, numerics::Activation::Identity}}};
  comb_spec_ = {{{3 * proj, hidden, numerics::Activation::Relu},
                 {hidden, proj, numerics::Activation::Identity}}};
  z_spec_ = {{{config_.latent_dim, proj, numerics::Activation::Identity}}};
  q_ = numerics::make_params(q_spec_);
  o_ = numerics::make_params(o_spec_);
  m_ = numerics::make_params(m_spec_);
  comb_ = numerics::make_params(comb_spec_);
  z_proj_ = numerics::make_params(z_spec_);
  Rng init(Rng(config_.seed).fork(0x726f75746572));
  numerics::init_xavier(q_spec_, q_, init);
  numerics::init_xavier(o_spec_, o_, init);
  numerics::init_xavier(m_spec_, m_, init);
  numerics::init_xavier(comb_spec_, comb_, init);
  numerics::init_xavier(z_spec_, z_proj_, init);
}

struct RouterPolicy::DecisionCache {
  numerics::ForwardTape q_tape, o_tape, comb_tape, z_tape;
  std::vector<numerics::ForwardTape> m_tapes;
  Vec h_hat;
  double h_norm = 1.0;
  std::vector<Vec> e_hats;
  std::vector<double> e_norms;
  Vec similarities;
  Vec probabilities;
};

RouterPolicy::DecisionCache RouterPolicy::route_forward(
    const embedding::EmbeddingVector& query_vec, std::span<const double> z,
    const embedding::EmbeddingVector& operator_embedding, const std::vector<ModelCard>& pool,
    double temperature) const {
  if (pool.empty()) throw ContractViolation("route_distribution: empty model pool");
  if (!(temperature > 0.0))
    throw ContractViolation("route_distribution: temperature must be > 0");
  if (z.size() != config_.latent_dim)
    throw ContractViolation("route_distribution: latent dim mismatch");

  DecisionCache cache;
  auto [q_out, q_tape] = numerics::forward(q_spec_, q_, query_vec.values);
  auto [z_out, z_tape] = numerics::forward(z_spec_, z_proj_, z);
  auto [o_out, o_tape] = numerics::forward(o_spec_, o_, operator_embedding.values);
  cache.q_tape = std::move(q_tape);
  cache.z_tape = std::move(z_tape);
  cache.o_tape = std::move(o_tape);

  Vec comb_in;
  comb_in.reserve(3 * config_.proj_dim);
  comb_in.insert(comb_in.end(), q_out.begin(), q_out.end());
  comb_in.insert(comb_in.end(), z_out.begin(), z_out.end());
  comb_in.insert(comb_in.end(), o_out.begin(), o_out.end());
  auto [h, comb_tape] = numerics::forward(comb_spec_, comb_, comb_in);
  cache.comb_tape = std::move(comb_tape);
  cache.h_hat = normalized(h, &cache.h_norm);

  cache.similarities.resize(pool.size());
  for (std::size_t m = 0; m < pool.size(); ++m) {
    if (pool[m].embedding.dim != config_.model_dim)
      throw ContractViolation("route_distribution: model embedding dim mismatch");
    auto [e, m_tape] = numerics::forward(m_spec_, m_, pool[m].embedding.values);
    double norm = 1.0;
    Vec e_hat = normalized(e, &norm);
    double dot = 0.0;
    for (std::size_t i = 0; i < e_hat.size(); ++i) dot += cache.h_hat[i] * e_hat[i];
    cache.similarities[m] = dot;
    cache.m_tapes.push_back(std::move(m_tape));
    cache.e_hats.push_back(std::move(e_hat));
    cache.e_norms.push_back(norm);
  }
  cache.probabilities = numerics::softmax(cache.similarities, temperature);
  return cache;
}

Vec RouterPolicy::route_distribution(const embedding::EmbeddingVector& query_vec,
                                     std::span<const double> z,
                                     const embedding::EmbeddingVector& operator_embedding,
                                     const std::vector<ModelCard>& pool,
                                     double temperature) const {
  return route_forward(query_vec, z, operator_embedding, pool, temperature).probabilities;
}

void RouterPolicy::route_backward(const DecisionCache& cache, const std::vector<ModelCard>& pool,
                                  double temperature, std::size_t chosen, double coeff,
                                  std::vector<Matrix>& grads) const {
  // d ln p_chosen / d similarity_m = (1[m==chosen] - p_m) / T
  const std::size_t n = pool.size();
  Vec dsim(n);
  for (std::size_t m = 0; m < n; ++m)
    dsim[m] = coeff * ((m == chosen ? 1.0 : 0.0) - cache.probabilities[m]) / temperature;

  Vec dh_hat(cache.h_hat.size(), 0.0);
  for (std::size_t m = 0; m < n; ++m)
    for (std::size_t i = 0; i < dh_hat.size(); ++i) dh_hat[i] += dsim[m] * cache.e_hats[m][i];
  const Vec dh = normalize_backward(cache.h_hat, dh_hat, cache.h_norm);

  auto accumulate = [&grads](std::size_t base, const numerics::GradientBundle& g) {
    // per-network layout: W..., b...
    for (std::size_t w = 0; w < g.weights.size(); ++w)
      for (std::size_t v = 0; v < g.weights[w].values.size(); ++v)
        grads[base + w].values[v] += g.weights[w].values[v];
    for (std::size_t b = 0; b < g.biases.size(); ++b)
      for (std::size_t v = 0; v < g.biases[b].values.size(); ++v)
        grads[base + g.weights.size() + b].values[v] += g.biases[b].values[v];
  };
  // parameters() layout: q(4), o(4), m(4), comb(4), z(2)
  constexpr std::size_t kQ = 0, kO = 4, kM = 8, kComb = 12, kZ = 16;

  auto [comb_grads, dcomb_in] = numerics::backward(comb_spec_, comb_, cache.comb_tape, dh);
  accumulate(kComb, comb_grads);

  const std::size_t proj = config_.proj_dim;
  const std::span<const double> dq(dcomb_in.data(), proj);
  const std::span<const double> dz(dcomb_in.data() + proj, proj);
  const std::span<const double> dop(dcomb_in.data() + 2 * proj, proj);
  auto [q_grads, unused_q] = numerics::backward(q_spec_, q_, cache.q_tape, dq);
  accumulate(kQ, q_grads);
  auto [z_grads, unused_z] = numerics::backward(z_spec_, z_proj_, cache.z_tape, dz);
  accumulate(kZ, z_grads);
  auto [o_grads, unused_o] = numerics::backward(o_spec_, o_, cache.o_tape, dop);
  accumulate(kO, o_grads);

  for (std::size_t m = 0; m < n; ++m) {
    Vec de_hat(cache.e_hats[m].size());
    for (std::size_t i = 0; i < de_hat.size(); ++i) de_hat[i] = dsim[m] * cache.h_hat[i];
    const Vec de = normalize_backward(cache.e_hats[m], de_hat, cache.e_norms[m]);
    auto [m_grads, unused_m] = numerics::backward(m_spec_, m_, cache.m_tapes[m], de);
    accumulate(kM, m_grads);
  }
}

void RouterPolicy::assign_models(
    alloc::WorkflowPlan& plan, const embedding::EmbeddingVector& query_vec,
    std::span<const double> z,
    const std::vector<std::vector<embedding::EmbeddingVector>>& operator_embeddings,
    const std::vector<ModelCard>& pool, double temperature, AssignMode mode, Rng& rng) const {
  if (plan.has_assignments())
    throw ContractViolation("assign_models: plan already has assignments");
  if (operator_embeddings.size() != plan.layers.size())
    throw ContractViolation("assign_models: operator embedding layout mismatch");

  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    std::vector<RoutingDecision> layer_decisions;
    if (operator_embeddings[l].size() != plan.layers[l].chosen.size())
      throw ContractViolation("assign_models: operator embedding layout mismatch");
    for (std::size_t i = 0; i < plan.layers[l].chosen.size(); ++i) {
      const DecisionCache cache =
          route_forward(query_vec, z, operator_embeddings[l][i], pool, temperature);
      std::size_t pick = 0;
      if (mode == AssignMode::Deterministic) {
        for (std::size_t m = 1; m < pool.size(); ++m)
          if (cache.probabilities[m] > cache.probabilities[pick]) pick = m;
      } else {
        const double u = rng.next_double();
        double acc = 0.0;
        pick = pool.size() - 1;
        for (std::size_t m = 0; m < pool.size(); ++m) {
          acc += cache.probabilities[m];
          if (u < acc) {
            pick = m;
            break;
          }
        }
      }
      RoutingDecision decision;
      decision.operator_index = i;
      decision.pool_index = pick;
      decision.model_name = pool[pick].name;
      decision.probabilities = cache.probabilities;
      decision.log_prob = std::log(cache.probabilities[pick]);
      plan.log_prob_total += decision.log_prob;
      layer_decisions.push_back(std::move(decision));
    }
    plan.assignments.push_back(std::move(layer_decisions));
  }
}

double RouterPolicy::assignments_log_prob(
    const alloc::WorkflowPlan& plan, const embedding::EmbeddingVector& query_vec,
    std::span<const double> z,
    const std::vector<std::vector<embedding::EmbeddingVector>>& operator_embeddings,
    const std::vector<ModelCard>& pool, double temperature) const {
  if (!plan.has_assignments())
    throw ContractViolation("assignments_log_prob: plan has no assignments");
  double lp = 0.0;
  for (std::size_t l = 0; l < plan.assignments.size(); ++l) {
    for (std::size_t i = 0; i < plan.assignments[l].size(); ++i) {
      const auto& decision = plan.assignments[l][i];
      if (decision.pool_index >= pool.size() ||
          pool[decision.pool_index].name != decision.model_name)
        throw ContractViolation("assignments_log_prob: plan does not match the pool");
      const DecisionCache cache =
          route_forward(query_vec, z, operator_embeddings[l][i], pool, temperature);
      lp += std::log(cache.probabilities[decision.pool_index]);
    }
  }
  return lp;
}

void RouterPolicy::accumulate_grad_log_prob(
    const alloc::WorkflowPlan& plan, const embedding::EmbeddingVector& query_vec,
    std::span<const double> z,
    const std::vector<std::vector<embedding::EmbeddingVector>>& operator_embeddings,
    const std::vector<ModelCard>& pool, double temperature, double coeff,
    std::vector<Matrix>& grads) const {
  for (std::size_t l = 0; l < plan.assignments.size(); ++l) {
    for (std::size_t i = 0; i < plan.assignments[l].size(); ++i) {
      const DecisionCache cache =
          route_forward(query_vec, z, operator_embeddings[l][i], pool, temperature);
      route_backward(cache, pool, temperature, plan.assignments[l][i].pool_index, coeff, grads);
    }
  }
}

std::vector<Matrix*> RouterPolicy::parameters() {
  std::vector<Matrix*> out;
  for (auto* net : {&q_, &o_, &m_, &comb_, &z_proj_})
    for (Matrix* m : net->all()) out.push_back(m);
  return out;
}

std::vector<const Matrix*> RouterPolicy::parameters() const {
  std::vector<const Matrix*> out;
  for (const auto* net : {&q_, &o_, &m_, &comb_, &z_proj_})
    for (const Matrix* m : net->all()) out.push_back(m);
  return out;
}

std::vector<Matrix> RouterPolicy::zero_gradients() const {
  std::vector<Matrix> out;
  for (const Matrix* p : parameters()) out.emplace_back(p->rows, p->cols);
  return out;
}

}  // namespace aqo::router
