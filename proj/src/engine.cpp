#include "aqo/engine.hpp"

#include "aqo/checkpoint.hpp"

namespace aqo {

alloc::OperatorCatalog builtin_catalog(const embedding::Provider& provider) {
  struct Entry {
    const char* name;
    const char* description;
    const char* interface_text;
  };
  static const Entry entries[] = {
      {"cot",
       "Answers a question with explicit step-by-step reasoning before committing to a final "
       "answer.",
       "cot(problem: str) -> dict with key 'response' of type str"},
      {"debate",
       "Runs three debaters for up to two rounds, then a judge consolidates the strongest "
       "arguments into a final answer.",
       "debate(problem: str) -> dict with key 'response' of type str"},
      {"self_consistency",
       "Samples five independent step-by-step reasoning paths and returns the majority answer.",
       "self_consistency(problem: str) -> dict with key 'response' of type str"},
      {"self_refine",
       "Drafts an answer, then alternates reflection and revision for up to five iterations, "
       "stopping early once a reflection approves the draft.",
       "self_refine(problem: str) -> dict with key 'response' of type str"},
      {"ensemble",
       "Collects answers from three independent solvers and picks a winner by pairwise "
       "ranking.",
       "ensemble(problem: str) -> dict with key 'response' of type str"},
      {"testing",
       "Produces a candidate solution and then generates test cases that check it.",
       "testing(problem: str) -> dict with key 'response' of type str"},
      {"react",
       "Interleaves reasoning steps with calculator tool calls and observations until it "
       "commits to an answer.",
       "react(problem: str) -> dict with key 'response' of type str"},
  };
  alloc::OperatorCatalog catalog;
  for (const auto& e : entries) {
    alloc::OperatorSpec spec;
    spec.name = e.name;
    spec.protocol = protocol_from_string(e.name);
    spec.profile = {e.name, e.description, e.interface_text};
    spec.embedding = provider.embed(std::string(e.description) + "\n" + e.interface_text);
    catalog.operators.push_back(std::move(spec));
  }
  catalog.validate();
  return catalog;
}

std::vector<router::ModelCard> builtin_sim_pool(const embedding::Provider& provider) {
  struct Entry {
    const char* name;
    const char* profile;
    double price_prompt, price_completion, capability;
  };
  static const Entry entries[] = {
      {"sim-nano", "Tiny, very cheap model; handles short routine questions.", 0.10, 0.40, 0.62},
      {"sim-mini", "Small, inexpensive general model with decent reasoning.", 0.40, 1.60, 0.80},
      {"sim-pro", "Mid-size model with strong reasoning at moderate cost.", 2.00, 8.00, 0.90},
      {"sim-ultra", "Large flagship model; best reasoning, highest price.", 4.00, 16.00, 0.92},
  };
  std::vector<router::ModelCard> pool;
  for (const auto& e : entries) {
    router::ModelCard card;
    card.name = e.name;
    card.profile_text = e.profile;
    card.embedding = provider.embed(e.profile);
    card.price_prompt = e.price_prompt;
    card.price_completion = e.price_completion;
    card.sim_capability = e.capability;
    pool.push_back(std::move(card));
  }
  return pool;
}

namespace {

std::shared_ptr<embedding::Provider> make_provider(const EngineConfig& cfg) {
  if (cfg.embedding_provider == "http") {
    embedding::HttpProvider::Options opts;
    opts.url = cfg.embedding_url;
    opts.dim = cfg.embedding_dim;
    opts.max_in_flight = cfg.embedding_max_in_flight;
    return std::make_shared<embedding::HttpProvider>(opts);
  }
  return std::make_shared<embedding::HashingProvider>(cfg.embedding_dim, cfg.seed);
}

difficulty::EstimatorConfig estimator_config(const EngineConfig& cfg) {
  difficulty::EstimatorConfig ec;
  ec.input_dim = cfg.embedding_dim;
  ec.latent_dim = cfg.latent_dim;
  ec.head_hidden = cfg.head_hidden;
  ec.lambda_kl = cfg.lambda_kl;
  ec.learning_rate = cfg.difficulty_learning_rate;
  ec.replay_capacity = cfg.replay_capacity;
  ec.replay_batch = cfg.replay_batch;
  ec.seed = cfg.seed;
  return ec;
}

alloc::AllocatorConfig allocator_config(const EngineConfig& cfg) {
  alloc::AllocatorConfig ac;
  ac.latent_dim = cfg.latent_dim;
  ac.embed_dim = cfg.embedding_dim;
  ac.hidden = cfg.allocator_hidden;
  ac.l_max = cfg.l_max;
  ac.tau = cfg.tau;
  ac.seed = cfg.seed;
  return ac;
}

router::RouterConfig router_config(const EngineConfig& cfg) {
  router::RouterConfig rc;
  rc.query_dim = cfg.embedding_dim;
  rc.model_dim = cfg.embedding_dim;
  rc.latent_dim = cfg.latent_dim;
  rc.hidden = cfg.router_hidden;
  rc.proj_dim = cfg.router_proj;
  rc.temperature = cfg.temperature;
  rc.seed = cfg.seed;
  return rc;
}

}  // namespace

Engine::Engine(EngineConfig config)
    : config_(std::move(config)),
      provider_(make_provider(config_)),
      catalog_(config_.catalog_path.empty() ? builtin_catalog(*provider_)
                                            : alloc::load_catalog(config_.catalog_path,
                                                                  *provider_)),
      pool_(config_.model_pool_path.empty()
                ? builtin_sim_pool(*provider_)
                : router::load_model_pool(config_.model_pool_path, *provider_)),
      estimator_(estimator_config(config_)),
      allocator_(allocator_config(config_)),
      router_(router_config(config_)),
      policy_optimizer_(config_.policy_learning_rate, config_.policy_momentum) {}

Engine::Engine(EngineConfig config, std::shared_ptr<embedding::Provider> provider,
               alloc::OperatorCatalog catalog, std::vector<router::ModelCard> pool)
    : config_(std::move(config)),
      provider_(std::move(provider)),
      catalog_(std::move(catalog)),
      pool_(std::move(pool)),
      estimator_(estimator_config(config_)),
      allocator_(allocator_config(config_)),
      router_(router_config(config_)),
      policy_optimizer_(config_.policy_learning_rate, config_.policy_momentum) {}

difficulty::DifficultyEstimate Engine::estimate(const std::string& query_text) const {
  return estimator_.estimate(provider_->embed(query_text));
}

harness::PlannedQuery Engine::plan_query(const std::string& query_text, alloc::PlanMode mode,
                                         Rng& rng) const {
  const embedding::EmbeddingVector qvec = provider_->embed(query_text);
  harness::PlannedQuery out;
  out.estimate = estimator_.estimate(qvec);
  out.plan = allocator_.build_plan(qvec, out.estimate, catalog_, config_.tau, config_.l_max,
                                   mode, rng);
  const auto op_embeds = operator_embeddings(out.plan);
  router_.assign_models(out.plan, qvec, out.estimate.z, op_embeds, pool_, config_.temperature,
                        mode == alloc::PlanMode::Deterministic
                            ? router::AssignMode::Deterministic
                            : router::AssignMode::Sampled,
                        rng);
  return out;
}

double Engine::plan_log_prob(const alloc::WorkflowPlan& plan,
                             const std::string& query_text) const {
  const embedding::EmbeddingVector qvec = provider_->embed(query_text);
  const difficulty::DifficultyEstimate est = estimator_.estimate(qvec);
  double lp = allocator_.layers_log_prob(plan, qvec, est, catalog_, config_.tau);
  if (plan.has_assignments())
    lp += router_.assignments_log_prob(plan, qvec, est.z, operator_embeddings(plan), pool_,
                                       config_.temperature);
  return lp;
}

std::vector<std::vector<embedding::EmbeddingVector>> Engine::operator_embeddings(
    const alloc::WorkflowPlan& plan) const {
  std::vector<std::vector<embedding::EmbeddingVector>> out;
  for (const auto& layer : plan.layers) {
    std::vector<embedding::EmbeddingVector> embeds;
    for (std::size_t idx : layer.chosen) embeds.push_back(catalog_.operators[idx].embedding);
    out.push_back(std::move(embeds));
  }
  return out;
}

std::vector<numerics::Matrix*> Engine::policy_parameters() {
  std::vector<numerics::Matrix*> params = allocator_.parameters();
  for (auto* p : router_.parameters()) params.push_back(p);
  return params;
}

void Engine::save_checkpoint(const std::string& path) const {
  auto mutable_this = const_cast<Engine*>(this);
  std::vector<numerics::CheckpointModule> modules;
  modules.push_back({"difficulty", mutable_this->estimator_.parameters()});
  modules.push_back({"allocator", mutable_this->allocator_.parameters()});
  modules.push_back({"router", mutable_this->router_.parameters()});
  numerics::save_checkpoint(path, modules, config_.seed);
}

void Engine::load_checkpoint(const std::string& path) {
  std::vector<numerics::CheckpointModule> modules;
  modules.push_back({"difficulty", estimator_.parameters()});
  modules.push_back({"allocator", allocator_.parameters()});
  modules.push_back({"router", router_.parameters()});
  numerics::load_checkpoint(path, modules);
}

}  // namespace aqo
