#include "aqo/embedding.hpp"

#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace aqo::embedding {

using numerics::ContractViolation;

std::vector<EmbeddingVector> Provider::embed_batch(const std::vector<std::string>& texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

void normalize(EmbeddingVector& v) {
  double norm_sq = 0.0;
  for (double x : v.values) norm_sq += x * x;
  if (norm_sq == 0.0) {
    v.values.assign(v.dim, 0.0);
    v.values[0] = 1.0;
    return;
  }
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (auto& x : v.values) x *= inv;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim != b.dim) throw ContractViolation("cosine: dimension mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
  return dot;
}

HashingProvider::HashingProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw ContractViolation("HashingProvider: dim must be positive");
}

static std::uint64_t fnv1a(std::string_view data, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ULL ^ seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::pair<std::size_t, double> HashingProvider::bucket_of(std::string_view gram) const {
  const std::uint64_t h = fnv1a(gram, seed_);
  const std::size_t bucket = static_cast<std::size_t>(h % dim_);
  const double sign = (h >> 63) ? -1.0 : 1.0;
  return {bucket, sign};
}

EmbeddingVector HashingProvider::embed(std::string_view text) const {
  std::string stripped;
  stripped.reserve(text.size());
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) stripped.push_back(c);

  EmbeddingVector v{dim_, numerics::Vec(dim_, 0.0)};
  if (stripped.empty()) {
    v.values[0] = 1.0;
    return v;
  }
  if (stripped.size() < 3) {
    auto [bucket, sign] = bucket_of(stripped);
    v.values[bucket] += sign;
  } else {
    for (std::size_t i = 0; i + 3 <= stripped.size(); ++i) {
      auto [bucket, sign] = bucket_of(std::string_view(stripped).substr(i, 3));
      v.values[bucket] += sign;
    }
  }
  normalize(v);
  return v;
}

HttpProvider::HttpProvider(Options options) : options_(std::move(options)) {
  if (options_.url.empty()) throw ContractViolation("HttpProvider: url required");
  if (options_.dim == 0) throw ContractViolation("HttpProvider: dim must be positive");
  if (options_.max_in_flight < 1) throw ContractViolation("HttpProvider: max_in_flight >= 1");
}

namespace {

struct SplitUrl {
  std::string host_port;  // scheme://host:port
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ContractViolation("HttpProvider: bad url " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::vector<EmbeddingVector> HttpProvider::request(const std::vector<std::string>& texts) const {
  const SplitUrl parts = split_url(options_.url);
  nlohmann::json body;
  body["input"] = texts;
  const std::string payload = body.dump();

  std::string last_error;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    httplib::Client client(parts.host_port);
    client.set_connection_timeout(options_.timeout_seconds);
    client.set_read_timeout(options_.timeout_seconds);
    httplib::Headers headers;
    if (!options_.api_key.empty())
      headers.emplace("Authorization", "Bearer " + options_.api_key);
    auto res = client.Post(parts.path, headers, payload, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "http status " + std::to_string(res->status);
      continue;
    }
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(res->body);
    } catch (const std::exception& e) {
      last_error = std::string("bad response json: ") + e.what();
      continue;
    }
    if (!parsed.contains("data") || parsed["data"].size() != texts.size()) {
      last_error = "response data size mismatch";
      continue;
    }
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& item : parsed["data"]) {
      EmbeddingVector v;
      v.values = item.at("embedding").get<numerics::Vec>();
      v.dim = v.values.size();
      if (v.dim != options_.dim)
        throw ProviderError("embedding dim " + std::to_string(v.dim) + " != configured " +
                                std::to_string(options_.dim),
                            attempt, false);
      normalize(v);
      out.push_back(std::move(v));
    }
    return out;
  }
  throw ProviderError("embedding provider unreachable (" + last_error + ")",
                      options_.max_attempts, true);
}

EmbeddingVector HttpProvider::embed(std::string_view text) const {
  return request({std::string(text)})[0];
}

std::vector<EmbeddingVector> HttpProvider::embed_batch(
    const std::vector<std::string>& texts) const {
  if (texts.empty()) return {};
  // Chunked requests, at most max_in_flight concurrent.
  constexpr std::size_t kChunk = 32;
  std::vector<std::vector<std::string>> chunks;
  for (std::size_t i = 0; i < texts.size(); i += kChunk)
    chunks.emplace_back(texts.begin() + i,
                        texts.begin() + std::min(texts.size(), i + kChunk));

  std::vector<std::vector<EmbeddingVector>> results(chunks.size());
  std::vector<std::string> errors(chunks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= chunks.size()) return;
      try {
        results[i] = request(chunks[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const std::size_t n_threads =
      std::min<std::size_t>(static_cast<std::size_t>(options_.max_in_flight), chunks.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  for (const auto& err : errors)
    if (!err.empty()) throw ProviderError(err, options_.max_attempts, true);

  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (auto& chunk : results)
    for (auto& v : chunk) out.push_back(std::move(v));
  return out;
}

std::vector<OperatorProfile> load_profiles(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_profiles: cannot open " + path);
  nlohmann::ordered_json root = nlohmann::ordered_json::parse(in);
  std::vector<OperatorProfile> out;
  for (const auto& [name, entry] : root.items()) {
    OperatorProfile p;
    p.operator_name = name;
    p.description = entry.at("description").get<std::string>();
    p.interface_text = entry.value("interface", std::string{});
    if (p.description.empty())
      throw std::runtime_error("load_profiles: empty description for '" + name + "'");
    for (const auto& prior : out)
      if (prior.operator_name == p.operator_name)
        throw std::runtime_error("load_profiles: duplicate operator '" + name + "'");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace aqo::embedding
