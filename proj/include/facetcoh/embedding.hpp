#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace facetcoh {

using Vector = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b);
// Cosine similarity; 0 when either side has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);
void l2_normalize(Vector& v);

// Deterministic token embedder. Implementations must return unit-norm vectors
// and be safe to call from several threads at once.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::size_t dimension() const = 0;
  virtual Vector embed(std::string_view token) const = 0;
  virtual std::vector<Vector> embed_batch(std::span<const std::string> tokens) const;
  virtual std::string name() const = 0;
};

// Signed feature hashing of boundary-padded character trigrams.
class HashedTrigramProvider final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDimension = 256;
  static constexpr std::uint64_t kSeed = 0x9e3779b97f4a7c15ULL;

  std::size_t dimension() const override { return kDimension; }
  // Throws Error(EmptyToken) on "".
  Vector embed(std::string_view token) const override;
  std::string name() const override { return "hashed"; }
};

// Client for an embedding server speaking
//   POST /embed {"tokens": [...]} -> {"vectors": [[...], ...]}
// Vectors are normalized client-side and memoized per token.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  // base_url like "http://host:port" with an optional path prefix.
  explicit HttpEmbeddingProvider(std::string base_url);

  std::size_t dimension() const override;
  Vector embed(std::string_view token) const override;
  std::vector<Vector> embed_batch(std::span<const std::string> tokens) const override;
  std::string name() const override { return "http:" + base_url_; }

 private:
  std::vector<Vector> fetch(const std::vector<std::string>& tokens) const;

  std::string base_url_;
  std::string host_;
  std::string path_prefix_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, Vector, std::less<>> cache_;
  mutable std::size_t dimension_ = 0;
};

// "hashed" or "http:<url>". Throws Error(InvalidArgument) otherwise.
std::unique_ptr<EmbeddingProvider> make_provider(std::string_view spec);

}  // namespace facetcoh
