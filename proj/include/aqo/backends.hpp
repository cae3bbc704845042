#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace aqo::exec {

struct Message {
  std::string role;
  std::string content;
};

struct BackendResponse {
  std::string text;
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

class BackendError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class Backend {
public:
  virtual ~Backend() = default;
  // Thread safety: complete may be called concurrently.
  virtual BackendResponse complete(const std::string& model,
                                   const std::vector<Message>& messages) = 0;
};

// Deterministic fixture backend keyed by (model, prompt hash). Unknown
// prompts fall through to an optional fallback; otherwise BackendError.
class ScriptedBackend : public Backend {
public:
  using Fallback =
      std::function<BackendResponse(const std::string&, const std::vector<Message>&)>;

  static std::string prompt_hash(const std::string& model,
                                 const std::vector<Message>& messages);

  void add_response(const std::string& hash, BackendResponse response);
  // Convenience: computes the hash from (model, messages).
  void script(const std::string& model, const std::vector<Message>& messages,
              BackendResponse response);
  void set_fallback(Fallback fallback);

  // JSON map prompt-hash -> {"text":..., "prompt_tokens":..., "completion_tokens":...}
  void load_fixtures(const std::string& path);

  BackendResponse complete(const std::string& model,
                           const std::vector<Message>& messages) override;

private:
  mutable std::mutex mutex_;
  std::map<std::string, BackendResponse> responses_;
  Fallback fallback_;
};

// Chat-completions HTTP backend:
// request  {"model":..., "messages":[{"role","content"}]}
// response {"choices":[{"message":{"content"}}],
//           "usage":{"prompt_tokens","completion_tokens"}}
class ChatHttpBackend : public Backend {
public:
  struct Options {
    std::string url;
    std::string api_key;  // optional bearer token
    int timeout_seconds = 60;
    int max_attempts = 2;
  };

  explicit ChatHttpBackend(Options options);
  BackendResponse complete(const std::string& model,
                           const std::vector<Message>& messages) override;

private:
  Options options_;
};

// Per-model backend lookup with an optional default.
class BackendRegistry {
public:
  void set_default(std::shared_ptr<Backend> backend) { default_ = std::move(backend); }
  void add(const std::string& model, std::shared_ptr<Backend> backend) {
    backends_[model] = std::move(backend);
  }
  Backend& resolve(const std::string& model) const;

private:
  std::map<std::string, std::shared_ptr<Backend>> backends_;
  std::shared_ptr<Backend> default_;
};

}  // namespace aqo::exec
