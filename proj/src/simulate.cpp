#include "aqo/simulate.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "aqo/optimizer.hpp"

namespace aqo {

namespace {

std::size_t priciest_model(const std::vector<router::ModelCard>& pool,
                           const harness::SimEnvironment& env) {
  std::size_t best = 0;
  double best_cost = -1.0;
  for (std::size_t m = 0; m < pool.size(); ++m) {
    const double per_call =
        (static_cast<double>(env.prompt_tokens_per_call) * pool[m].price_prompt +
         static_cast<double>(env.completion_tokens_per_call) * pool[m].price_completion) /
        1e6;
    if (per_call > best_cost) {
      best_cost = per_call;
      best = m;
    }
  }
  return best;
}

// Depth forced to l_max, every operator routed to the priciest model.
harness::PlannedQuery baseline_plan(const Engine& engine, const harness::DatasetRecord& record,
                                    std::size_t priciest) {
  const auto qvec = engine.provider().embed(record.question);
  harness::PlannedQuery out;
  out.estimate = engine.estimator().estimate(qvec);
  difficulty::DifficultyEstimate forced = out.estimate;
  forced.d = 1.0 - 1e-9;  // adapt_depth(d) == l_max
  Rng unused(0);
  out.plan = engine.allocator().build_plan(qvec, forced, engine.catalog(),
                                           engine.config().tau, engine.config().l_max,
                                           alloc::PlanMode::Deterministic, unused);
  for (const auto& layer : out.plan.layers) {
    std::vector<router::RoutingDecision> decisions;
    for (std::size_t i = 0; i < layer.chosen.size(); ++i) {
      router::RoutingDecision d;
      d.operator_index = i;
      d.pool_index = priciest;
      d.model_name = engine.pool()[priciest].name;
      d.probabilities.assign(engine.pool().size(), 0.0);
      d.probabilities[priciest] = 1.0;
      d.log_prob = 0.0;
      decisions.push_back(std::move(d));
    }
    out.plan.assignments.push_back(std::move(decisions));
  }
  return out;
}

}  // namespace

SimulationSummary run_simulation(const EngineConfig& config, Engine& engine,
                                 std::ostream* progress) {
  harness::SimEnvironment env = harness::SimEnvironment::defaults();
  env.alpha = config.sim_alpha;
  env.beta = config.sim_beta;
  env.seed = config.seed;

  const auto corpus = harness::generate_synthetic_corpus(config.sim_corpus_size, config.seed);
  auto [train, test] = harness::split_train_test(corpus, {1, 4}, config.seed);

  SimulationSummary summary;
  summary.corpus_size = corpus.size();
  summary.train_size = train.size();
  summary.test_size = test.size();
  summary.episodes = config.episodes;

  optimizer::TrainingConfig tc;
  tc.lambda_cost = config.lambda_cost;
  tc.k_samples = config.k_samples;
  tc.tau = config.tau;
  tc.l_max = config.l_max;
  tc.temperature = config.temperature;
  tc.lambda_kl = config.lambda_kl;
  tc.policy_learning_rate = config.policy_learning_rate;
  tc.policy_momentum = config.policy_momentum;
  tc.parallel = config.parallel;

  // Training rewards come from Bernoulli draws on the planted success model.
  optimizer::PlanEvaluator evaluator = [&](const alloc::WorkflowPlan& plan,
                                           const harness::DatasetRecord& record, Rng& rng) {
    const harness::SimOutcome sim =
        harness::simulate_outcome(plan, record, env, engine.catalog(), engine.pool(), rng);
    harness::PlanOutcome outcome;
    outcome.utility = static_cast<double>(sim.success);
    outcome.cost_usd = sim.cost_usd;
    return outcome;
  };

  optimizer::TrainLoopOptions options;
  options.episodes = config.episodes;
  options.difficulty_fits_per_episode = config.difficulty_fits_per_episode;
  options.log_path = config.log_path;
  options.checkpoint_path = config.checkpoint_path;
  options.checkpoint_every = config.checkpoint_every;

  Rng train_rng = Rng(config.seed).fork(0x747261696e);
  optimizer::train_loop(engine, train, tc, options, evaluator, train_rng);
  if (progress) *progress << "training finished (" << config.episodes << " episodes)\n";

  // Evaluation scores a plan by its closed-form success probability.
  harness::PlanRunner expected_runner = [&](const alloc::WorkflowPlan& plan,
                                            const harness::DatasetRecord& record) {
    Rng cost_rng(0);
    const harness::SimOutcome sim =
        harness::simulate_outcome(plan, record, env, engine.catalog(), engine.pool(), cost_rng);
    harness::PlanOutcome outcome;
    outcome.utility = sim.probability;
    outcome.cost_usd = sim.cost_usd;
    return outcome;
  };

  harness::Planner learned_planner = [&](const harness::DatasetRecord& record) {
    Rng unused(0);
    return engine.plan_query(record.question, alloc::PlanMode::Deterministic, unused);
  };
  summary.report = harness::evaluate(learned_planner, expected_runner, test, engine.pool());
  summary.learned_success = summary.report.accuracy.value_or(0.0);
  summary.learned_mean_cost = summary.report.mean_cost_usd;

  const std::size_t priciest = priciest_model(engine.pool(), env);
  harness::Planner baseline_planner = [&](const harness::DatasetRecord& record) {
    return baseline_plan(engine, record, priciest);
  };
  const harness::EvalReport baseline_report =
      harness::evaluate(baseline_planner, expected_runner, test, engine.pool());
  summary.baseline_success = baseline_report.accuracy.value_or(0.0);
  summary.baseline_mean_cost = baseline_report.mean_cost_usd;

  // Difficulty calibration and adaptive depth on the held-out split.
  std::vector<double> predicted, planted;
  double depth_easy = 0.0, depth_hard = 0.0;
  std::size_t n_easy = 0, n_hard = 0;
  for (const auto& record : test) {
    const auto est = engine.estimate(record.question);
    predicted.push_back(est.d);
    planted.push_back(*record.true_difficulty);
    const std::size_t depth = alloc::adapt_depth(est.d, config.l_max);
    if (record.id.rfind("easy-", 0) == 0) {
      depth_easy += static_cast<double>(depth);
      ++n_easy;
    } else if (record.id.rfind("hard-", 0) == 0) {
      depth_hard += static_cast<double>(depth);
      ++n_hard;
    }
  }
  summary.spearman_difficulty = harness::spearman(predicted, planted);
  summary.mean_depth_easy = n_easy ? depth_easy / static_cast<double>(n_easy) : 0.0;
  summary.mean_depth_hard = n_hard ? depth_hard / static_cast<double>(n_hard) : 0.0;

  if (progress) {
    *progress << "spearman(d, d*) on held-out: " << summary.spearman_difficulty << '\n'
              << "learned:  success " << summary.learned_success << ", mean cost "
              << summary.learned_mean_cost << " USD\n"
              << "baseline: success " << summary.baseline_success << ", mean cost "
              << summary.baseline_mean_cost << " USD\n"
              << "mean depth easy/hard: " << summary.mean_depth_easy << " / "
              << summary.mean_depth_hard << '\n';
  }
  return summary;
}

SimulationSummary run_simulation(const EngineConfig& config, std::ostream* progress) {
  Engine engine(config);
  return run_simulation(config, engine, progress);
}

std::string summary_to_json(const SimulationSummary& summary) {
  nlohmann::ordered_json root;
  root["corpus_size"] = summary.corpus_size;
  root["train_size"] = summary.train_size;
  root["test_size"] = summary.test_size;
  root["episodes"] = summary.episodes;
  root["spearman_difficulty"] = summary.spearman_difficulty;
  root["learned_success"] = summary.learned_success;
  root["learned_mean_cost"] = summary.learned_mean_cost;
  root["baseline_success"] = summary.baseline_success;
  root["baseline_mean_cost"] = summary.baseline_mean_cost;
  root["mean_depth_easy"] = summary.mean_depth_easy;
  root["mean_depth_hard"] = summary.mean_depth_hard;
  root["report"] = nlohmann::ordered_json::parse(harness::report_to_json(summary.report));
  return root.dump(2);
}

}  // namespace aqo
