#include "aqo/backends.hpp"

#include <fstream>

#include <httplib.h>
#include <json.hpp>

namespace aqo::exec {

std::string ScriptedBackend::prompt_hash(const std::string& model,
                                         const std::vector<Message>& messages) {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0x1f;
    h *= 1099511628211ULL;
  };
  mix(model);
  for (const auto& m : messages) {
    mix(m.role);
    mix(m.content);
  }
  char buf[17];
  static const char* hex = "0123456789abcdef";
  for (int i = 0; i < 16; ++i) buf[i] = hex[(h >> (60 - 4 * i)) & 0xf];
  buf[16] = '\0';
  return std::string(buf);
}

void ScriptedBackend::add_response(const std::string& hash, BackendResponse response) {
  std::lock_guard lock(mutex_);
  responses_[hash] = std::move(response);
}

void ScriptedBackend::script(const std::string& model, const std::vector<Message>& messages,
                             BackendResponse response) {
  add_response(prompt_hash(model, messages), std::move(response));
}

void ScriptedBackend::set_fallback(Fallback fallback) {
  std::lock_guard lock(mutex_);
  fallback_ = std::move(fallback);
}

void ScriptedBackend::load_fixtures(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw BackendError("ScriptedBackend: cannot open fixtures " + path);
  nlohmann::json root = nlohmann::json::parse(in);
  std::lock_guard lock(mutex_);
  for (const auto& [hash, entry] : root.items()) {
    BackendResponse resp;
    resp.text = entry.at("text").get<std::string>();
    resp.prompt_tokens = entry.value("prompt_tokens", 0L);
    resp.completion_tokens = entry.value("completion_tokens", 0L);
    responses_[hash] = std::move(resp);
  }
}

BackendResponse ScriptedBackend::complete(const std::string& model,
                                          const std::vector<Message>& messages) {
  const std::string hash = prompt_hash(model, messages);
  Fallback fallback;
  {
    std::lock_guard lock(mutex_);
    auto it = responses_.find(hash);
    if (it != responses_.end()) return it->second;
    fallback = fallback_;
  }
  if (fallback) return fallback(model, messages);
  throw BackendError("ScriptedBackend: no fixture for model '" + model + "' hash " + hash);
}

ChatHttpBackend::ChatHttpBackend(Options options) : options_(std::move(options)) {
  if (options_.url.empty()) throw BackendError("ChatHttpBackend: url required");
}

BackendResponse ChatHttpBackend::complete(const std::string& model,
                                          const std::vector<Message>& messages) {
  const auto scheme_end = options_.url.find("://");
  if (scheme_end == std::string::npos)
    throw BackendError("ChatHttpBackend: bad url " + options_.url);
  const auto path_start = options_.url.find('/', scheme_end + 3);
  const std::string host = path_start == std::string::npos ? options_.url
                                                           : options_.url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/"
                                                           : options_.url.substr(path_start);

  nlohmann::json body;
  body["model"] = model;
  auto msgs = nlohmann::json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  body["messages"] = std::move(msgs);
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    httplib::Client client(host);
    client.set_connection_timeout(options_.timeout_seconds);
    client.set_read_timeout(options_.timeout_seconds);
    httplib::Headers headers;
    if (!options_.api_key.empty())
      headers.emplace("Authorization", "Bearer " + options_.api_key);
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "http status " + std::to_string(res->status);
      continue;
    }
    try {
      nlohmann::json parsed = nlohmann::json::parse(res->body);
      BackendResponse out;
      out.text = parsed.at("choices").at(0).at("message").at("content").get<std::string>();
      const auto& usage = parsed.at("usage");
      out.prompt_tokens = usage.at("prompt_tokens").get<long>();
      out.completion_tokens = usage.at("completion_tokens").get<long>();
      return out;
    } catch (const std::exception& e) {
      last_error = std::string("bad response: ") + e.what();
    }
  }
  throw BackendError("ChatHttpBackend: " + last_error);
}

Backend& BackendRegistry::resolve(const std::string& model) const {
  auto it = backends_.find(model);
  if (it != backends_.end()) return *it->second;
  if (default_) return *default_;
  throw BackendError("BackendRegistry: no backend for model '" + model + "'");
}

}  // namespace aqo::exec
