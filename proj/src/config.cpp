#include "aqo/config.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace aqo {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& obj, const std::string& group, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const std::exception& e) {
    throw ConfigError(group.empty() ? key : group + "." + key, e.what());
  }
}

}  // namespace

EngineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("config", std::string("parse error in ") + path + ": " + e.what());
  }

  EngineConfig cfg;
  read(root, "", "seed", cfg.seed);

  if (root.contains("embedding")) {
    const json& e = root["embedding"];
    read(e, "embedding", "provider", cfg.embedding_provider);
    read(e, "embedding", "dim", cfg.embedding_dim);
    read(e, "embedding", "url", cfg.embedding_url);
    read(e, "embedding", "max_in_flight", cfg.embedding_max_in_flight);
  }
  if (root.contains("difficulty")) {
    const json& d = root["difficulty"];
    read(d, "difficulty", "latent_dim", cfg.latent_dim);
    read(d, "difficulty", "head_hidden", cfg.head_hidden);
    read(d, "difficulty", "lambda_kl", cfg.lambda_kl);
    read(d, "difficulty", "learning_rate", cfg.difficulty_learning_rate);
    read(d, "difficulty", "replay_capacity", cfg.replay_capacity);
    read(d, "difficulty", "replay_batch", cfg.replay_batch);
    read(d, "difficulty", "fits_per_episode", cfg.difficulty_fits_per_episode);
  }
  if (root.contains("allocator")) {
    const json& a = root["allocator"];
    read(a, "allocator", "hidden", cfg.allocator_hidden);
    read(a, "allocator", "tau", cfg.tau);
    read(a, "allocator", "l_max", cfg.l_max);
  }
  if (root.contains("router")) {
    const json& r = root["router"];
    read(r, "router", "hidden", cfg.router_hidden);
    read(r, "router", "proj_dim", cfg.router_proj);
    read(r, "router", "temperature", cfg.temperature);
  }
  if (root.contains("optimizer")) {
    const json& o = root["optimizer"];
    read(o, "optimizer", "lambda_cost", cfg.lambda_cost);
    read(o, "optimizer", "k_samples", cfg.k_samples);
    read(o, "optimizer", "learning_rate", cfg.policy_learning_rate);
    read(o, "optimizer", "momentum", cfg.policy_momentum);
    read(o, "optimizer", "episodes", cfg.episodes);
    read(o, "optimizer", "checkpoint_every", cfg.checkpoint_every);
    read(o, "optimizer", "parallel", cfg.parallel);
  }
  if (root.contains("simulation")) {
    const json& s = root["simulation"];
    read(s, "simulation", "corpus_size", cfg.sim_corpus_size);
    read(s, "simulation", "alpha", cfg.sim_alpha);
    read(s, "simulation", "beta", cfg.sim_beta);
  }
  if (root.contains("paths")) {
    const json& p = root["paths"];
    read(p, "paths", "catalog", cfg.catalog_path);
    read(p, "paths", "model_pool", cfg.model_pool_path);
    read(p, "paths", "train_dataset", cfg.train_dataset_path);
    read(p, "paths", "eval_dataset", cfg.eval_dataset_path);
    read(p, "paths", "checkpoint", cfg.checkpoint_path);
    read(p, "paths", "report", cfg.report_path);
    read(p, "paths", "log", cfg.log_path);
  }
  if (root.contains("backend")) {
    for (const auto& [name, entry] : root["backend"].items()) {
      BackendConfig bc;
      read(entry, "backend." + name, "url", bc.url);
      read(entry, "backend." + name, "api_key_env", bc.api_key_env);
      cfg.backends[name] = std::move(bc);
    }
  }
  read(root, "", "default_backend", cfg.default_backend);
  return cfg;
}

void validate_config(const EngineConfig& cfg, bool require_paths) {
  if (!(cfg.tau > 0.0 && cfg.tau < 1.0))
    throw ConfigError("allocator.tau", "must be in (0,1)");
  if (cfg.l_max < 1) throw ConfigError("allocator.l_max", "must be >= 1");
  if (!(cfg.temperature > 0.0)) throw ConfigError("router.temperature", "must be > 0");
  if (cfg.k_samples < 1) throw ConfigError("optimizer.k_samples", "must be >= 1");
  if (cfg.lambda_cost < 0.0) throw ConfigError("optimizer.lambda_cost", "must be >= 0");
  if (!(cfg.lambda_kl > 0.0)) throw ConfigError("difficulty.lambda_kl", "must be > 0");
  if (cfg.embedding_dim == 0) throw ConfigError("embedding.dim", "must be positive");
  if (cfg.latent_dim == 0) throw ConfigError("difficulty.latent_dim", "must be positive");
  if (cfg.parallel < 1) throw ConfigError("optimizer.parallel", "must be >= 1");
  if (cfg.embedding_provider != "builtin" && cfg.embedding_provider != "http")
    throw ConfigError("embedding.provider", "must be 'builtin' or 'http'");
  if (cfg.embedding_provider == "http" && cfg.embedding_url.empty())
    throw ConfigError("embedding.url", "required for the http provider");

  auto check_file = [](const char* field, const std::string& path, bool required) {
    if (path.empty()) {
      if (required) throw ConfigError(field, "path is required");
      return;
    }
    if (!std::filesystem::exists(path))
      throw ConfigError(field, "file does not exist: " + path);
  };
  check_file("paths.catalog", cfg.catalog_path, require_paths);
  check_file("paths.model_pool", cfg.model_pool_path, require_paths);
  check_file("paths.train_dataset", cfg.train_dataset_path, false);
  check_file("paths.eval_dataset", cfg.eval_dataset_path, false);
}

}  // namespace aqo
