#include "aqo/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "aqo/engine.hpp"

namespace aqo::optimizer {

using numerics::ContractViolation;
using numerics::Matrix;

double reward(double utility, double cost_usd, double lambda_cost) {
  if (cost_usd < 0.0) throw ContractViolation("reward: cost must be >= 0");
  return utility - lambda_cost * (cost_usd / kCostUnitUsd);
}

EpisodeRecord training_episode(Engine& engine, const harness::DatasetRecord& record,
                               const TrainingConfig& config, const PlanEvaluator& evaluator,
                               Rng& rng) {
  if (config.k_samples < 1) throw ContractViolation("training_episode: K must be >= 1");
  const int K = config.k_samples;

  EpisodeRecord episode;
  episode.query_id = record.id;

  const embedding::EmbeddingVector qvec = engine.provider().embed(record.question);
  const difficulty::DifficultyEstimate est = engine.estimator().estimate(qvec);
  episode.estimated_difficulty = est.d;

  // Sample K full trajectories (layer draws + model draws) serially, then
  // execute them, possibly in parallel; evaluation RNGs are forked per plan
  // so results do not depend on scheduling.
  for (int k = 0; k < K; ++k) {
    alloc::WorkflowPlan plan =
        engine.allocator().build_plan(qvec, est, engine.catalog(), config.tau, config.l_max,
                                      alloc::PlanMode::Sampled, rng);
    engine.router().assign_models(plan, qvec, est.z, engine.operator_embeddings(plan),
                                  engine.pool(), config.temperature,
                                  router::AssignMode::Sampled, rng);
    episode.plans.push_back(std::move(plan));
  }

  std::vector<harness::PlanOutcome> outcomes(static_cast<std::size_t>(K));
  std::vector<Rng> eval_rngs;
  for (int k = 0; k < K; ++k) eval_rngs.push_back(rng.fork(static_cast<std::uint64_t>(k)));
  auto run_one = [&](int k) {
    outcomes[static_cast<std::size_t>(k)] =
        evaluator(episode.plans[static_cast<std::size_t>(k)], record,
                  eval_rngs[static_cast<std::size_t>(k)]);
  };
  if (config.parallel > 1 && K > 1) {
    std::atomic<int> next{0};
    auto worker = [&] {
      for (;;) {
        const int k = next.fetch_add(1);
        if (k >= K) return;
        run_one(k);
      }
    };
    std::vector<std::thread> threads;
    for (int t = 0; t < std::min(config.parallel, K); ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  } else {
    for (int k = 0; k < K; ++k) run_one(k);
  }

  bool all_failed = true;
  double cost_sum = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto& outcome = outcomes[static_cast<std::size_t>(k)];
    if (!outcome.failed) all_failed = false;
    cost_sum += outcome.cost_usd;
    episode.rewards.push_back(reward(outcome.utility, outcome.cost_usd, config.lambda_cost));
    episode.best_utility =
        std::max(episode.best_utility, outcome.utility >= 0.5 && !outcome.failed ? 1 : 0);
  }
  episode.mean_cost_usd = cost_sum / static_cast<double>(K);

  if (all_failed) {
    episode.diagnostic = "all " + std::to_string(K) + " plan executions failed; episode skipped";
    return episode;
  }

  double reward_sum = 0.0;
  for (double r : episode.rewards) reward_sum += r;
  episode.baseline = reward_sum / static_cast<double>(K);

  // Identical rewards carry no signal; zero the coefficients exactly so the
  // applied update is exactly zero.
  const bool identical = std::all_of(episode.rewards.begin(), episode.rewards.end(),
                                     [&](double r) { return r == episode.rewards[0]; });

  if (K >= 2 && !identical) {
    std::vector<Matrix> alloc_grads = engine.allocator().zero_gradients();
    std::vector<Matrix> router_grads = engine.router().zero_gradients();
    const double norm = 1.0 / static_cast<double>(K - 1);
    for (int k = 0; k < K; ++k) {
      // Ascent on expected reward via descent on its negation.
      const double coeff = -(episode.rewards[static_cast<std::size_t>(k)] - episode.baseline) *
                           norm;
      if (coeff == 0.0) continue;
      const auto& plan = episode.plans[static_cast<std::size_t>(k)];
      engine.allocator().accumulate_grad_log_prob(plan, qvec, est, engine.catalog(), config.tau,
                                                  coeff, alloc_grads);
      engine.router().accumulate_grad_log_prob(plan, qvec, est.z,
                                               engine.operator_embeddings(plan), engine.pool(),
                                               config.temperature, coeff, router_grads);
    }

    std::vector<Matrix*> params = engine.policy_parameters();
    std::vector<const Matrix*> grad_ptrs;
    for (const auto& g : alloc_grads) grad_ptrs.push_back(&g);
    for (const auto& g : router_grads) grad_ptrs.push_back(&g);
    engine.policy_optimizer().set_learning_rate(config.policy_learning_rate);
    std::string err;
    if (!engine.policy_optimizer().try_step(params, grad_ptrs, &err)) {
      episode.diagnostic = "policy step skipped: " + err;
    } else {
      episode.applied = true;
    }
  }

  engine.estimator().push_outcome({qvec, episode.best_utility});
  return episode;
}

difficulty::DifficultyEstimate feedback_update(Engine& engine, const std::string& query_text,
                                               int success) {
  const embedding::EmbeddingVector qvec = engine.provider().embed(query_text);
  engine.estimator().push_outcome({qvec, success});
  engine.estimator().fit_from_replay();
  return engine.estimator().estimate(qvec);
}

TrainStats train_loop(Engine& engine, const std::vector<harness::DatasetRecord>& train,
                      const TrainingConfig& config, const TrainLoopOptions& options,
                      const PlanEvaluator& evaluator, Rng& rng) {
  if (train.empty()) throw ContractViolation("train_loop: no training records");
  TrainStats stats;

  std::ofstream log;
  if (!options.log_path.empty()) {
    log.open(options.log_path, std::ios::trunc);
    if (!log) throw std::runtime_error("train_loop: cannot open log " + options.log_path);
  }

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng = rng.fork(0x7368756666);
  std::vector<double> recent;

  for (int ep = 0; ep < options.episodes; ++ep) {
    const std::size_t pos = static_cast<std::size_t>(ep) % train.size();
    if (pos == 0) {
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
    }
    const auto& record = train[order[pos]];
    Rng episode_rng = rng.fork(0x65700000 + static_cast<std::uint64_t>(ep));
    EpisodeRecord episode = training_episode(engine, record, config, evaluator, episode_rng);
    for (int f = 0; f < options.difficulty_fits_per_episode; ++f)
      engine.estimator().fit_from_replay();

    ++stats.episodes_run;
    if (!episode.diagnostic.empty()) ++stats.episodes_skipped;
    double mean_reward = 0.0;
    for (double r : episode.rewards) mean_reward += r;
    if (!episode.rewards.empty()) mean_reward /= static_cast<double>(episode.rewards.size());
    recent.push_back(mean_reward);
    if (recent.size() > 100) recent.erase(recent.begin());

    if (log.is_open()) {
      nlohmann::ordered_json line;
      line["episode"] = ep;
      line["query_id"] = episode.query_id;
      line["rewards"] = episode.rewards;
      line["baseline"] = episode.baseline;
      line["mean_cost_usd"] = episode.mean_cost_usd;
      line["d"] = episode.estimated_difficulty;
      log << line.dump() << '\n';
    }
    if (!options.checkpoint_path.empty() && options.checkpoint_every > 0 &&
        (ep + 1) % options.checkpoint_every == 0) {
      engine.save_checkpoint(options.checkpoint_path);
    }
  }
  if (!options.checkpoint_path.empty()) engine.save_checkpoint(options.checkpoint_path);

  double sum = 0.0;
  for (double r : recent) sum += r;
  stats.final_mean_reward = recent.empty() ? 0.0 : sum / static_cast<double>(recent.size());
  return stats;
}

}  // namespace aqo::optimizer
