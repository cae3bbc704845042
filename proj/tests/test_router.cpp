#include <doctest.h>

#include <cmath>
#include <map>

#include "aqo/allocator.hpp"
#include "aqo/rng.hpp"
#include "aqo/router.hpp"

using namespace aqo;
using numerics::Vec;
using router::ModelCard;
using router::RouterConfig;
using router::RouterPolicy;

namespace {

RouterConfig small_config() {
  RouterConfig cfg;
  cfg.query_dim = 8;
  cfg.model_dim = 8;
  cfg.latent_dim = 3;
  cfg.hidden = 6;
  cfg.proj_dim = 4;
  cfg.seed = 3;
  return cfg;
}

embedding::EmbeddingVector random_unit(std::size_t dim, Rng& rng) {
  embedding::EmbeddingVector v{dim, Vec(dim)};
  for (auto& x : v.values) x = rng.normal();
  embedding::normalize(v);
  return v;
}

std::vector<ModelCard> make_pool(std::size_t n, std::size_t dim, Rng& rng) {
  std::vector<ModelCard> pool(n);
  for (std::size_t m = 0; m < n; ++m) {
    pool[m].name = "model-" + std::to_string(m);
    pool[m].embedding = random_unit(dim, rng);
  }
  return pool;
}

}  // namespace

TEST_CASE("identical model embeddings give a uniform distribution") {
  RouterConfig cfg = small_config();
  RouterPolicy policy(cfg);
  Rng rng(5);
  auto pool = make_pool(4, cfg.model_dim, rng);
  for (auto& card : pool) card.embedding = pool[0].embedding;
  const auto probs = policy.route_distribution(random_unit(cfg.query_dim, rng),
                                               Vec{0.2, -0.1, 0.4},
                                               random_unit(cfg.model_dim, rng), pool, 1.0);
  for (double p : probs) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("near-zero temperature concentrates on the argmax") {
  RouterConfig cfg = small_config();
  RouterPolicy policy(cfg);
  Rng rng(7);
  auto pool = make_pool(3, cfg.model_dim, rng);
  const auto qvec = random_unit(cfg.query_dim, rng);
  const auto opvec = random_unit(cfg.model_dim, rng);
  const Vec z{0.1, 0.1, -0.2};

  const auto ref = policy.route_distribution(qvec, z, opvec, pool, 1.0);
  std::size_t argmax = 0;
  for (std::size_t m = 1; m < ref.size(); ++m)
    if (ref[m] > ref[argmax]) argmax = m;

  const auto cold = policy.route_distribution(qvec, z, opvec, pool, 1e-6);
  CHECK(cold[argmax] >= 1.0 - 1e-6);
}

TEST_CASE("argmax is temperature-invariant") {
  RouterConfig cfg = small_config();
  RouterPolicy policy(cfg);
  Rng rng(9);
  auto pool = make_pool(5, cfg.model_dim, rng);
  const auto qvec = random_unit(cfg.query_dim, rng);
  const auto opvec = random_unit(cfg.model_dim, rng);
  const Vec z{0.4, -0.4, 0.0};

  std::size_t ref_argmax = 1000;
  for (double t : {0.2, 0.7, 1.0, 3.0, 10.0}) {
    const auto probs = policy.route_distribution(qvec, z, opvec, pool, t);
    std::size_t argmax = 0;
    for (std::size_t m = 1; m < probs.size(); ++m)
      if (probs[m] > probs[argmax]) argmax = m;
    if (ref_argmax == 1000) ref_argmax = argmax;
    CHECK(argmax == ref_argmax);
  }
}

TEST_CASE("distributions sum to one across random configurations") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    RouterConfig cfg = small_config();
    cfg.seed = 100 + static_cast<std::uint64_t>(trial);
    RouterPolicy policy(cfg);
    auto pool = make_pool(2 + rng.next_below(5), cfg.model_dim, rng);
    Vec z(cfg.latent_dim);
    for (auto& v : z) v = rng.normal();
    const auto probs =
        policy.route_distribution(random_unit(cfg.query_dim, rng), z,
                                  random_unit(cfg.model_dim, rng), pool,
                                  rng.uniform(0.2, 3.0));
    double sum = 0.0;
    for (double p : probs) {
      CHECK(p > 0.0);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("the two-model softmax closed form") {
  // similarities 0.9 and 0.1 at T = 1
  const Vec probs = numerics::softmax(Vec{0.9, 0.1}, 1.0);
  CHECK(std::abs(probs[0] - 0.68997) <= 1e-5);
  CHECK(std::abs(probs[1] - 0.31003) <= 1e-5);
}

TEST_CASE("softmax monotonicity: raising one similarity raises its probability") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    Vec sims(4);
    for (auto& s : sims) s = rng.uniform(-1, 1);
    const std::size_t i = rng.next_below(4);
    const auto before = numerics::softmax(sims, 1.0);
    sims[i] += 0.25;
    const auto after = numerics::softmax(sims, 1.0);
    CHECK(after[i] > before[i]);
  }
}

TEST_CASE("empty pool is rejected") {
  RouterConfig cfg = small_config();
  RouterPolicy policy(cfg);
  Rng rng(15);
  std::vector<ModelCard> empty;
  CHECK_THROWS_AS(policy.route_distribution(random_unit(cfg.query_dim, rng), Vec{0, 0, 0},
                                            random_unit(cfg.model_dim, rng), empty, 1.0),
                  numerics::ContractViolation);
}

namespace {

alloc::WorkflowPlan one_op_plan() {
  alloc::WorkflowPlan plan;
  alloc::LayerSelection sel;
  sel.chosen = {0};
  sel.normalized_scores = {1.0};
  plan.layers.push_back(sel);
  return plan;
}

}  // namespace

TEST_CASE("assign_models on a one-model pool contributes zero log-prob") {
  RouterConfig cfg = small_config();
  RouterPolicy policy(cfg);
  Rng rng(17);
  auto pool = make_pool(1, cfg.model_dim, rng);
  auto plan = one_op_plan();
  const double lp_before = plan.log_prob_total;
  Rng unused(0);
  policy.assign_models(plan, random_unit(cfg.query_dim, rng), Vec{0, 0, 0},
                       {{random_unit(cfg.model_dim, rng)}}, pool, 1.0,
                       router::AssignMode::Deterministic, unused);
  REQUIRE(plan.assignments.size() == 1);
  CHECK(plan.assignments[0][0].model_name == "model-0");
  CHECK(plan.log_prob_total == lp_before);
}

TEST_CASE("deterministic assignment is rerun-stable") {
  RouterConfig cfg = small_config();
  RouterPolicy policy(cfg);
  Rng rng(19);
  auto pool = make_pool(4, cfg.model_dim, rng);
  const auto qvec = random_unit(cfg.query_dim, rng);
  const auto opvec = random_unit(cfg.model_dim, rng);
  Rng unused(0);
  std::string first;
  for (int i = 0; i < 3; ++i) {
    auto plan = one_op_plan();
    policy.assign_models(plan, qvec, Vec{0.3, 0.3, 0.3}, {{opvec}}, pool, 1.0,
                         router::AssignMode::Deterministic, unused);
    if (first.empty()) first = plan.assignments[0][0].model_name;
    CHECK(plan.assignments[0][0].model_name == first);
  }
}

TEST_CASE("sampled assignments converge to the routing distribution") {
  RouterConfig cfg = small_config();
  RouterPolicy policy(cfg);
  Rng rng(23);
  auto pool = make_pool(2, cfg.model_dim, rng);
  const auto qvec = random_unit(cfg.query_dim, rng);
  const auto opvec = random_unit(cfg.model_dim, rng);
  const Vec z{0.1, 0.4, -0.5};
  const auto probs = policy.route_distribution(qvec, z, opvec, pool, 1.0);

  Rng sample_rng(31);
  const int n = 100000;
  std::map<std::string, int> counts;
  for (int i = 0; i < n; ++i) {
    auto plan = one_op_plan();
    policy.assign_models(plan, qvec, z, {{opvec}}, pool, 1.0, router::AssignMode::Sampled,
                         sample_rng);
    counts[plan.assignments[0][0].model_name]++;
    CHECK(plan.assignments[0][0].log_prob ==
          doctest::Approx(std::log(probs[plan.assignments[0][0].pool_index])).epsilon(1e-12));
  }
  CHECK(std::abs(static_cast<double>(counts["model-0"]) / n - probs[0]) <= 0.01);
  CHECK(std::abs(static_cast<double>(counts["model-1"]) / n - probs[1]) <= 0.01);
}

TEST_CASE("adding a model keeps the distribution normalized without retraining") {
  RouterConfig cfg = small_config();
  RouterPolicy policy(cfg);
  Rng rng(29);
  auto pool = make_pool(3, cfg.model_dim, rng);
  const auto qvec = random_unit(cfg.query_dim, rng);
  const auto opvec = random_unit(cfg.model_dim, rng);
  const Vec z{0, 0, 0};

  ModelCard newcomer;
  newcomer.name = "newcomer";
  newcomer.embedding = random_unit(cfg.model_dim, rng);
  pool.push_back(newcomer);
  const auto probs = policy.route_distribution(qvec, z, opvec, pool, 1.0);
  REQUIRE(probs.size() == 4);
  double sum = 0.0;
  for (double p : probs) sum += p;
  CHECK(std::abs(sum - 1.0) <= 1e-9);
  CHECK(probs[3] > 0.0);
}

TEST_CASE("assignments_log_prob matches the recorded total") {
  RouterConfig cfg = small_config();
  RouterPolicy policy(cfg);
  Rng rng(37);
  auto pool = make_pool(3, cfg.model_dim, rng);
  const auto qvec = random_unit(cfg.query_dim, rng);
  const Vec z{0.2, -0.2, 0.2};

  alloc::WorkflowPlan plan;
  alloc::LayerSelection l1, l2;
  l1.chosen = {0, 1};
  l1.normalized_scores = {0.5, 0.4, 0.1};
  l2.chosen = {2};
  l2.normalized_scores = {0.1, 0.2, 0.7};
  plan.layers = {l1, l2};
  std::vector<std::vector<embedding::EmbeddingVector>> op_embeds{
      {random_unit(cfg.model_dim, rng), random_unit(cfg.model_dim, rng)},
      {random_unit(cfg.model_dim, rng)}};

  Rng sample_rng(41);
  const double before = plan.log_prob_total;
  policy.assign_models(plan, qvec, z, op_embeds, pool, 0.8, router::AssignMode::Sampled,
                       sample_rng);
  const double recorded = plan.log_prob_total - before;
  const double recomputed = policy.assignments_log_prob(plan, qvec, z, op_embeds, pool, 0.8);
  CHECK(std::abs(recorded - recomputed) <= 1e-9);
}
