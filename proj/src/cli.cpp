#include "aqo/cli.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "aqo/engine.hpp"
#include "aqo/gradcheck.hpp"
#include "aqo/optimizer.hpp"
#include "aqo/simulate.hpp"

namespace aqo::cli {

std::string usage() {
  return "usage: aqo <command> [options]\n"
         "\n"
         "commands:\n"
         "  train      run the training loop against the configured backend\n"
         "  eval       evaluate the deterministic policy and write a report\n"
         "  route      print the deterministic plan for one query\n"
         "  gradcheck  run all finite-difference gradient suites\n"
         "  simulate   offline synthetic end-to-end train + eval\n"
         "\n"
         "options:\n"
         "  --config PATH        JSON config file\n"
         "  --seed N             override config seed\n"
         "  --lambda-cost X      override optimizer.lambda_cost\n"
         "  --tau X              override allocator.tau\n"
         "  --k N                override optimizer.k_samples\n"
         "  --l-max N            override allocator.l_max\n"
         "  --temperature X      override router.temperature\n"
         "  --episodes N         override optimizer.episodes\n"
         "  --parallel N         bound concurrent plan executions\n"
         "  --query TEXT         query for `route`\n"
         "  --out PATH           output path override\n"
         "  --format json|table  report format for `eval`\n";
}

namespace {

struct ParsedArgs {
  std::string command;
  std::map<std::string, std::string> options;
};

std::optional<ParsedArgs> parse_args(const std::vector<std::string>& args, std::ostream& err) {
  static const char* kValueFlags[] = {"--config", "--seed",     "--lambda-cost", "--tau",
                                      "--k",      "--l-max",    "--temperature", "--episodes",
                                      "--parallel", "--query",  "--out",         "--format",
                                      "--checkpoint"};
  if (args.empty()) {
    err << usage();
    return std::nullopt;
  }
  ParsedArgs parsed;
  parsed.command = args[0];
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& flag = args[i];
    bool known = false;
    for (const char* k : kValueFlags)
      if (flag == k) known = true;
    if (!known) {
      err << "unknown option: " << flag << "\n" << usage();
      return std::nullopt;
    }
    if (i + 1 >= args.size()) {
      err << "option " << flag << " needs a value\n" << usage();
      return std::nullopt;
    }
    parsed.options[flag.substr(2)] = args[++i];
  }
  return parsed;
}

template <typename T>
T parse_number(const std::string& flag, const std::string& text) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ConfigError(flag, "not a valid number: " + text);
  return v;
}

// Precedence: flags > config file > defaults.
EngineConfig resolve_config(const ParsedArgs& args) {
  EngineConfig cfg;
  if (args.options.count("config")) cfg = load_config(args.options.at("config"));
  auto get = [&](const char* key) -> std::optional<std::string> {
    auto it = args.options.find(key);
    if (it == args.options.end()) return std::nullopt;
    return it->second;
  };
  if (auto v = get("seed")) cfg.seed = parse_number<std::uint64_t>("seed", *v);
  if (auto v = get("lambda-cost")) {
    double d = 0.0;
    // from_chars(double) handles scientific notation like 1e-3
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), d);
    if (ec != std::errc{} || ptr != v->data() + v->size())
      throw ConfigError("lambda-cost", "not a valid number: " + *v);
    cfg.lambda_cost = d;
  }
  if (auto v = get("tau")) cfg.tau = parse_number<double>("tau", *v);
  if (auto v = get("k")) cfg.k_samples = parse_number<int>("k", *v);
  if (auto v = get("l-max")) cfg.l_max = parse_number<std::size_t>("l-max", *v);
  if (auto v = get("temperature")) cfg.temperature = parse_number<double>("temperature", *v);
  if (auto v = get("episodes")) cfg.episodes = parse_number<int>("episodes", *v);
  if (auto v = get("parallel")) cfg.parallel = parse_number<int>("parallel", *v);
  if (auto v = get("out")) cfg.report_path = *v;
  if (auto v = get("checkpoint")) cfg.checkpoint_path = *v;
  return cfg;
}

optimizer::TrainingConfig training_config(const EngineConfig& cfg) {
  optimizer::TrainingConfig tc;
  tc.lambda_cost = cfg.lambda_cost;
  tc.k_samples = cfg.k_samples;
  tc.tau = cfg.tau;
  tc.l_max = cfg.l_max;
  tc.temperature = cfg.temperature;
  tc.lambda_kl = cfg.lambda_kl;
  tc.policy_learning_rate = cfg.policy_learning_rate;
  tc.policy_momentum = cfg.policy_momentum;
  tc.parallel = cfg.parallel;
  return tc;
}

// Backend selection: "sim" (default) scores plans with the synthetic
// environment; "scripted:<path>" loads fixtures; any other name must appear
// under backend.<name> in the config and speaks chat-completions HTTP.
struct ResolvedEvaluation {
  optimizer::PlanEvaluator evaluator;
  harness::PlanRunner runner;
};

ResolvedEvaluation resolve_evaluation(const EngineConfig& cfg, Engine& engine) {
  const std::string& which = cfg.default_backend;
  if (which.empty() || which == "sim") {
    auto env = std::make_shared<harness::SimEnvironment>(harness::SimEnvironment::defaults());
    env->alpha = cfg.sim_alpha;
    env->beta = cfg.sim_beta;
    env->seed = cfg.seed;
    ResolvedEvaluation out;
    out.evaluator = [env, &engine](const alloc::WorkflowPlan& plan,
                                   const harness::DatasetRecord& record, Rng& rng) {
      const auto sim =
          harness::simulate_outcome(plan, record, *env, engine.catalog(), engine.pool(), rng);
      harness::PlanOutcome outcome;
      outcome.utility = static_cast<double>(sim.success);
      outcome.cost_usd = sim.cost_usd;
      return outcome;
    };
    out.runner = [env, &engine](const alloc::WorkflowPlan& plan,
                                const harness::DatasetRecord& record) {
      // Requires planted difficulties; real datasets need a real backend.
      Rng cost_rng(0);
      const auto sim =
          harness::simulate_outcome(plan, record, *env, engine.catalog(), engine.pool(),
                                    cost_rng);
      harness::PlanOutcome outcome;
      outcome.utility = sim.probability;
      outcome.cost_usd = sim.cost_usd;
      return outcome;
    };
    return out;
  }

  std::shared_ptr<exec::Backend> backend;
  if (which.rfind("scripted:", 0) == 0) {
    auto scripted = std::make_shared<exec::ScriptedBackend>();
    scripted->load_fixtures(which.substr(std::string("scripted:").size()));
    backend = scripted;
  } else {
    auto it = cfg.backends.find(which);
    if (it == cfg.backends.end())
      throw ConfigError("default_backend", "no backend named '" + which + "' configured");
    exec::ChatHttpBackend::Options opts;
    opts.url = it->second.url;
    if (!it->second.api_key_env.empty()) {
      const char* key = std::getenv(it->second.api_key_env.c_str());
      if (key) opts.api_key = key;
    }
    backend = std::make_shared<exec::ChatHttpBackend>(opts);
  }

  auto registry = std::make_shared<exec::BackendRegistry>();
  registry->set_default(backend);
  auto pricing = std::make_shared<exec::PricingTable>(exec::make_pricing(engine.pool()));
  const int parallelism = cfg.parallel;

  auto run_real = [registry, pricing, &engine, parallelism](
                      const alloc::WorkflowPlan& plan, const harness::DatasetRecord& record) {
    harness::PlanOutcome outcome;
    try {
      const exec::ExecutionResult result = exec::execute_plan(
          plan, engine.catalog(), record.question, *registry, *pricing, parallelism);
      const auto check = harness::check_answer(result.final_answer, record);
      outcome.utility = check.correct;
      outcome.parse_flag = check.parse_flag;
      outcome.cost_usd = result.cost_usd;
    } catch (const exec::ExecutionError& e) {
      outcome.failed = true;
      outcome.cost_usd = e.partial.cost_usd;
    }
    return outcome;
  };

  ResolvedEvaluation out;
  out.evaluator = [run_real](const alloc::WorkflowPlan& plan,
                             const harness::DatasetRecord& record, Rng&) {
    return run_real(plan, record);
  };
  out.runner = run_real;
  return out;
}

int cmd_route(const ParsedArgs& args, std::ostream& out, std::ostream& err) {
  if (!args.options.count("query")) {
    err << "route needs --query\n" << usage();
    return 2;
  }
  EngineConfig cfg = resolve_config(args);
  validate_config(cfg, false);
  Engine engine(cfg);
  if (!cfg.checkpoint_path.empty() && std::ifstream(cfg.checkpoint_path).good())
    engine.load_checkpoint(cfg.checkpoint_path);
  Rng rng(cfg.seed);
  const auto planned =
      engine.plan_query(args.options.at("query"), alloc::PlanMode::Deterministic, rng);
  out << alloc::plan_to_json(planned.plan, engine.catalog()) << '\n';
  return 0;
}

int cmd_gradcheck(std::ostream& out) {
  const auto results = gradcheck::run_all();
  bool ok = true;
  for (const auto& result : results) {
    const bool pass = result.max_rel_error <= 1e-4;
    ok = ok && pass;
    out << (pass ? "PASS" : "FAIL") << "  " << result.name << "  max_rel_error="
        << result.max_rel_error << "  seeds=" << result.seeds << '\n';
  }
  return ok ? 0 : 1;
}

int cmd_train(const ParsedArgs& args, std::ostream& out, std::ostream& err) {
  EngineConfig cfg = resolve_config(args);
  validate_config(cfg, false);
  if (cfg.train_dataset_path.empty())
    throw ConfigError("paths.train_dataset", "required for train");
  const auto records = harness::load_dataset(cfg.train_dataset_path);
  if (records.empty()) throw ConfigError("paths.train_dataset", "dataset is empty");

  Engine engine(cfg);
  if (!cfg.checkpoint_path.empty() && std::ifstream(cfg.checkpoint_path).good()) {
    engine.load_checkpoint(cfg.checkpoint_path);
    err << "resumed from checkpoint " << cfg.checkpoint_path << '\n';
  }
  ResolvedEvaluation eval = resolve_evaluation(cfg, engine);
  optimizer::TrainLoopOptions options;
  options.episodes = cfg.episodes;
  options.difficulty_fits_per_episode = cfg.difficulty_fits_per_episode;
  options.log_path = cfg.log_path;
  options.checkpoint_path = cfg.checkpoint_path;
  options.checkpoint_every = cfg.checkpoint_every;
  Rng rng = Rng(cfg.seed).fork(0x747261696e);
  const auto stats = optimizer::train_loop(engine, records, training_config(cfg), options,
                                           eval.evaluator, rng);
  out << "episodes " << stats.episodes_run << ", skipped " << stats.episodes_skipped
      << ", mean reward (last 100) " << stats.final_mean_reward << '\n';
  return 0;
}

int cmd_eval(const ParsedArgs& args, std::ostream& out, std::ostream& err) {
  EngineConfig cfg = resolve_config(args);
  validate_config(cfg, false);
  if (cfg.eval_dataset_path.empty())
    throw ConfigError("paths.eval_dataset", "required for eval");
  const auto records = harness::load_dataset(cfg.eval_dataset_path);

  Engine engine(cfg);
  if (!cfg.checkpoint_path.empty() && std::ifstream(cfg.checkpoint_path).good())
    engine.load_checkpoint(cfg.checkpoint_path);
  ResolvedEvaluation eval = resolve_evaluation(cfg, engine);
  harness::Planner planner = [&](const harness::DatasetRecord& record) {
    Rng unused(0);
    return engine.plan_query(record.question, alloc::PlanMode::Deterministic, unused);
  };
  const auto report = harness::evaluate(planner, eval.runner, records, engine.pool());

  ReportFormat format = ReportFormat::Json;
  if (args.options.count("format")) {
    const std::string& f = args.options.at("format");
    if (f == "table") format = ReportFormat::Table;
    else if (f != "json") {
      err << "unknown format: " << f << '\n';
      return 2;
    }
  }
  if (!cfg.report_path.empty()) {
    write_report(report, cfg.report_path, format);
    out << "report written to " << cfg.report_path << '\n';
  } else {
    out << (format == ReportFormat::Json ? harness::report_to_json(report)
                                         : harness::report_to_table(report))
        << '\n';
  }
  return 0;
}

int cmd_simulate(const ParsedArgs& args, std::ostream& out) {
  EngineConfig cfg = resolve_config(args);
  validate_config(cfg, false);
  Engine engine(cfg);
  const auto summary = run_simulation(cfg, engine, &out);
  if (!cfg.report_path.empty()) {
    const std::string tmp = cfg.report_path + ".tmp";
    {
      std::ofstream f(tmp, std::ios::trunc | std::ios::binary);
      if (!f) throw std::runtime_error("cannot open " + tmp);
      f << summary_to_json(summary) << '\n';
    }
    if (std::rename(tmp.c_str(), cfg.report_path.c_str()) != 0)
      throw std::runtime_error("cannot rename report into " + cfg.report_path);
    out << "summary written to " << cfg.report_path << '\n';
  }
  return 0;
}

}  // namespace

void write_report(const harness::EvalReport& report, const std::string& path,
                  ReportFormat format) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc | std::ios::binary);
    if (!f) throw std::runtime_error("write_report: cannot open " + tmp);
    f << (format == ReportFormat::Json ? harness::report_to_json(report)
                                       : harness::report_to_table(report))
      << '\n';
    if (!f) throw std::runtime_error("write_report: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("write_report: cannot rename into " + path);
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto parsed = parse_args(args, err);
  if (!parsed) return 2;
  try {
    if (parsed->command == "route") return cmd_route(*parsed, out, err);
    if (parsed->command == "gradcheck") return cmd_gradcheck(out);
    if (parsed->command == "train") return cmd_train(*parsed, out, err);
    if (parsed->command == "eval") return cmd_eval(*parsed, out, err);
    if (parsed->command == "simulate") return cmd_simulate(*parsed, out);
    err << "unknown command: " << parsed->command << "\n" << usage();
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace aqo::cli
