#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aqo/numerics.hpp"

namespace aqo::embedding {

// Unit-norm text representation. The zero-text edge case maps to e1.
struct EmbeddingVector {
  std::size_t dim = 0;
  numerics::Vec values;
};

// Raised when an external provider cannot serve a request.
class ProviderError : public std::runtime_error {
public:
  ProviderError(const std::string& what, int attempts, bool retryable)
      : std::runtime_error(what), attempts(attempts), retryable(retryable) {}
  int attempts = 0;
  bool retryable = false;
};

class Provider {
public:
  virtual ~Provider() = default;
  virtual std::size_t dim() const = 0;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const;
};

// Deterministic offline provider: signed feature hashing of character
// 3-grams (whitespace stripped) into `dim` buckets, then L2 normalization.
class HashingProvider : public Provider {
public:
  explicit HashingProvider(std::size_t dim = 384, std::uint64_t seed = 0);

  std::size_t dim() const override { return dim_; }
  EmbeddingVector embed(std::string_view text) const override;

  // Bucket/sign of one gram; exposed so tests can recompute independently.
  std::pair<std::size_t, double> bucket_of(std::string_view gram) const;

private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// HTTP provider speaking {"input":[texts]} -> {"data":[{"embedding":[...]}]}.
// Responses are re-normalized locally. In-flight requests are bounded.
class HttpProvider : public Provider {
public:
  struct Options {
    std::string url;              // e.g. http://host:port/v1/embeddings
    std::size_t dim = 384;
    int max_in_flight = 4;
    int max_attempts = 3;
    int timeout_seconds = 30;
    std::string api_key;          // optional bearer token
  };

  explicit HttpProvider(Options options);
  std::size_t dim() const override { return options_.dim; }
  EmbeddingVector embed(std::string_view text) const override;
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const override;

private:
  std::vector<EmbeddingVector> request(const std::vector<std::string>& texts) const;
  Options options_;
};

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

// L2-normalizes in place; an all-zero vector becomes e1.
void normalize(EmbeddingVector& v);

struct OperatorProfile {
  std::string operator_name;
  std::string description;
  std::string interface_text;  // "interface" in the profile file
};

// Loads a JSON map name -> {"description":..., "interface":...}; preserves
// file order.
std::vector<OperatorProfile> load_profiles(const std::string& path);

}  // namespace aqo::embedding
