#include "aqo/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "aqo/allocator.hpp"
#include "aqo/difficulty.hpp"
#include "aqo/embedding.hpp"
#include "aqo/numerics.hpp"
#include "aqo/router.hpp"

namespace aqo::gradcheck {

using numerics::Matrix;
using numerics::Vec;

namespace {

embedding::EmbeddingVector random_unit(std::size_t dim, Rng& rng) {
  embedding::EmbeddingVector v{dim, Vec(dim)};
  for (auto& x : v.values) x = rng.normal();
  embedding::normalize(v);
  return v;
}

// Like numerics::finite_difference_check, but with a denominator floor.
// The trajectory log-probs are shift-invariant in the raw layer scores, so
// some weight gradients are exactly zero and their central differences are
// pure re-evaluation noise (~1e-11); a pure-relative comparison would divide
// noise by noise. Entries at or above the floor are still compared at full
// relative precision.
double fd_check_floored(const std::function<double()>& loss_fn,
                        std::span<Matrix* const> params,
                        std::span<const Matrix* const> analytic, double step, double floor) {
  double max_rel = 0.0;
  for (std::size_t m = 0; m < params.size(); ++m) {
    Matrix* p = params[m];
    const Matrix* g = analytic[m];
    for (std::size_t i = 0; i < p->values.size(); ++i) {
      const double saved = p->values[i];
      p->values[i] = saved + step;
      const double up = loss_fn();
      p->values[i] = saved - step;
      const double down = loss_fn();
      p->values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({floor, std::abs(numeric), std::abs(g->values[i])});
      max_rel = std::max(max_rel, std::abs(g->values[i] - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace

double check_mlp(std::uint64_t seed, double step) {
  Rng rng(seed);
  numerics::MlpSpec spec{{{5, 7, numerics::Activation::Relu},
                          {7, 6, numerics::Activation::Sigmoid},
                          {6, 3, numerics::Activation::Identity}}};
  numerics::MlpParams params = numerics::make_params(spec);
  numerics::init_xavier(spec, params, rng);
  Vec input(5);
  for (auto& x : input) x = rng.normal();

  // Loss: 0.5 * ||output||^2.
  auto loss_fn = [&] {
    const Vec out = numerics::forward_value(spec, params, input);
    double s = 0.0;
    for (double v : out) s += v * v;
    return 0.5 * s;
  };
  auto [out, tape] = numerics::forward(spec, params, input);
  auto [grads, unused] = numerics::backward(spec, params, tape, out);

  const auto param_ptrs = params.all();
  const auto grad_ptrs = grads.all();
  return numerics::finite_difference_check(loss_fn, param_ptrs,
                                           {grad_ptrs.data(), grad_ptrs.size()}, step);
}

double check_difficulty_loss(std::uint64_t seed, double step) {
  Rng rng(seed);
  difficulty::EstimatorConfig config;
  config.input_dim = 12;
  config.latent_dim = 4;
  config.head_hidden = 6;
  config.seed = seed;
  difficulty::Estimator estimator(config);
  // A zero output head hides the head-hidden gradients; nudge it off zero.
  {
    auto params = estimator.parameters();
    Rng jitter(rng.fork(1));
    for (auto& v : params[5]->values) v = jitter.uniform(-0.5, 0.5);  // head W2
    params[7]->values[0] = jitter.uniform(-0.2, 0.2);                 // head b2
  }

  std::vector<difficulty::OutcomeRecord> batch;
  std::vector<Vec> epsilons;
  const double lambda_kl = 0.05;
  for (int n = 0; n < 3; ++n) {
    batch.push_back({random_unit(config.input_dim, rng), n % 2});
    Vec eps(config.latent_dim);
    for (auto& e : eps) e = rng.normal();
    epsilons.push_back(std::move(eps));
  }

  auto [loss, grads] = estimator.loss_and_gradients(batch, epsilons, lambda_kl);
  auto loss_fn = [&] {
    return estimator.loss_and_gradients(batch, epsilons, lambda_kl).first;
  };
  std::vector<Matrix*> params = estimator.parameters();
  std::vector<const Matrix*> grad_ptrs;
  for (const auto& g : grads) grad_ptrs.push_back(&g);
  return numerics::finite_difference_check(loss_fn, params,
                                           {grad_ptrs.data(), grad_ptrs.size()}, step);
}

double check_allocator_score(std::uint64_t seed, double step) {
  Rng rng(seed);
  alloc::AllocatorConfig config;
  config.latent_dim = 3;
  config.embed_dim = 8;
  config.hidden = 6;
  config.l_max = 3;
  config.tau = 0.3;
  config.seed = seed;
  alloc::AllocatorPolicy policy(config);

  alloc::OperatorCatalog catalog;
  const char* names[4] = {"cot", "debate", "ensemble", "react"};
  for (int i = 0; i < 4; ++i) {
    alloc::OperatorSpec spec;
    spec.name = names[i];
    spec.protocol = protocol_from_string(names[i]);
    spec.embedding = random_unit(config.embed_dim, rng);
    catalog.operators.push_back(std::move(spec));
  }

  const embedding::EmbeddingVector qvec = random_unit(config.embed_dim, rng);
  difficulty::DifficultyEstimate est;
  est.z.resize(config.latent_dim);
  for (auto& v : est.z) v = rng.normal();
  est.d = 0.75;  // depth 3 of l_max 3: multi-layer history in play

  Rng sample_rng(rng.fork(2));
  const alloc::WorkflowPlan plan = policy.build_plan(qvec, est, catalog, config.tau,
                                                     config.l_max, alloc::PlanMode::Sampled,
                                                     sample_rng);

  std::vector<Matrix> grads = policy.zero_gradients();
  policy.accumulate_grad_log_prob(plan, qvec, est, catalog, config.tau, 1.0, grads);

  auto loss_fn = [&] { return policy.layers_log_prob(plan, qvec, est, catalog, config.tau); };
  std::vector<Matrix*> params = policy.parameters();
  std::vector<const Matrix*> grad_ptrs;
  for (const auto& g : grads) grad_ptrs.push_back(&g);
  return fd_check_floored(loss_fn, params, {grad_ptrs.data(), grad_ptrs.size()}, step, 1e-5);
}

double check_router(std::uint64_t seed, double step) {
  Rng rng(seed);
  router::RouterConfig config;
  config.query_dim = 8;
  config.model_dim = 8;
  config.latent_dim = 3;
  config.hidden = 6;
  config.proj_dim = 4;
  config.seed = seed;
  router::RouterPolicy policy(config);

  std::vector<router::ModelCard> pool(3);
  for (std::size_t m = 0; m < pool.size(); ++m) {
    pool[m].name = "m" + std::to_string(m);
    pool[m].embedding = random_unit(config.model_dim, rng);
  }
  const embedding::EmbeddingVector qvec = random_unit(config.query_dim, rng);
  Vec z(config.latent_dim);
  for (auto& v : z) v = rng.normal();

  // Fixed two-operator trajectory.
  alloc::WorkflowPlan plan;
  plan.layers.resize(1);
  plan.layers[0].chosen = {0, 1};
  plan.layers[0].normalized_scores = {0.5, 0.5};
  std::vector<std::vector<embedding::EmbeddingVector>> op_embeds(1);
  op_embeds[0].push_back(random_unit(config.model_dim, rng));
  op_embeds[0].push_back(random_unit(config.model_dim, rng));
  plan.assignments.resize(1);
  for (std::size_t i = 0; i < 2; ++i) {
    router::RoutingDecision d;
    d.operator_index = i;
    d.pool_index = (seed + i) % pool.size();
    d.model_name = pool[d.pool_index].name;
    d.probabilities.assign(pool.size(), 1.0 / static_cast<double>(pool.size()));
    plan.assignments[0].push_back(std::move(d));
  }

  const double temperature = 0.7;
  std::vector<Matrix> grads = policy.zero_gradients();
  policy.accumulate_grad_log_prob(plan, qvec, z, op_embeds, pool, temperature, 1.0, grads);

  auto loss_fn = [&] {
    return policy.assignments_log_prob(plan, qvec, z, op_embeds, pool, temperature);
  };
  std::vector<Matrix*> params = policy.parameters();
  std::vector<const Matrix*> grad_ptrs;
  for (const auto& g : grads) grad_ptrs.push_back(&g);
  return fd_check_floored(loss_fn, params, {grad_ptrs.data(), grad_ptrs.size()}, step, 1e-5);
}

std::vector<SuiteResult> run_all(int seeds, double step) {
  struct Suite {
    const char* name;
    double (*fn)(std::uint64_t, double);
  };
  static const Suite suites[] = {
      {"mlp_backward", &check_mlp},
      {"difficulty_loss", &check_difficulty_loss},
      {"allocator_score_ffn", &check_allocator_score},
      {"router_ffns", &check_router},
  };
  std::vector<SuiteResult> results;
  for (const auto& suite : suites) {
    SuiteResult result;
    result.name = suite.name;
    result.seeds = seeds;
    for (int s = 0; s < seeds; ++s)
      result.max_rel_error =
          std::max(result.max_rel_error, suite.fn(static_cast<std::uint64_t>(s) + 1, step));
    results.push_back(std::move(result));
  }
  return results;
}

}  // namespace aqo::gradcheck
