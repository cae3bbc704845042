#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace aqo {

// Invalid or missing configuration; the CLI maps this to exit code 3.
class ConfigError : public std::runtime_error {
public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error("config field '" + field + "': " + what), field(field) {}
  std::string field;
};

struct BackendConfig {
  std::string url;
  std::string api_key_env;  // env var holding the key; never the key itself
};

struct EngineConfig {
  std::uint64_t seed = 7;

  // embedding
  std::string embedding_provider = "builtin";  // builtin | http
  std::size_t embedding_dim = 384;
  std::string embedding_url;
  int embedding_max_in_flight = 4;

  // difficulty
  std::size_t latent_dim = 16;
  std::size_t head_hidden = 32;
  double lambda_kl = 1e-2;
  double difficulty_learning_rate = 0.05;
  std::size_t replay_capacity = 4096;
  std::size_t replay_batch = 32;
  int difficulty_fits_per_episode = 1;

  // allocator
  std::size_t allocator_hidden = 64;
  double tau = 0.3;
  std::size_t l_max = 5;

  // router
  std::size_t router_hidden = 64;
  std::size_t router_proj = 32;
  double temperature = 1.0;

  // optimizer
  double lambda_cost = 1e-3;
  int k_samples = 4;
  double policy_learning_rate = 0.05;
  double policy_momentum = 0.9;
  int episodes = 2000;
  int checkpoint_every = 0;
  int parallel = 1;

  // simulation
  std::size_t sim_corpus_size = 2000;
  double sim_alpha = 8.0;
  double sim_beta = 1.0;

  // paths
  std::string catalog_path;
  std::string model_pool_path;
  std::string train_dataset_path;
  std::string eval_dataset_path;
  std::string checkpoint_path;
  std::string report_path;
  std::string log_path;

  std::map<std::string, BackendConfig> backends;  // keyed by backend name
  std::string default_backend;                    // "scripted:<fixtures>" or a backend name
};

// Parses the JSON config file; throws ConfigError naming the offending field
// (a missing file is reported under the "config" field).
EngineConfig load_config(const std::string& path);

// Numeric-range and referenced-file validation.
void validate_config(const EngineConfig& config, bool require_paths);

}  // namespace aqo
