#include "facetcoh/embedding.hpp"

#include "facetcoh/error.hpp"
#include "facetcoh/text.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace facetcoh {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

void l2_normalize(Vector& v) {
  const double n = std::sqrt(dot(v, v));
  if (n == 0.0) return;
  for (auto& x : v) x /= n;
}

std::vector<Vector> EmbeddingProvider::embed_batch(std::span<const std::string> tokens) const {
  std::vector<Vector> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(embed(t));
  return out;
}

Vector HashedTrigramProvider::embed(std::string_view token) const {
  if (token.empty()) throw Error(Errc::EmptyToken, "cannot embed an empty token");
  std::string padded;
  padded.reserve(token.size() + 2);
  padded.push_back('^');
  padded.append(token);
  padded.push_back('$');

  Vector v(kDimension, 0.0);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    const std::uint64_t h = fnv1a64(std::string_view(padded).substr(i, 3), kSeed);
    const double sign = (h & 1U) ? -1.0 : 1.0;
    v[(h >> 1) % kDimension] += sign;
  }
  if (dot(v, v) == 0.0) {
    // Every trigram cancelled out; fall back to one bucket for the whole token.
    const std::uint64_t h = fnv1a64(padded, kSeed);
    v[(h >> 1) % kDimension] = 1.0;
  }
  l2_normalize(v);
  return v;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string base_url) : base_url_(std::move(base_url)) {
  const auto scheme = base_url_.find("://");
  if (scheme == std::string::npos) throw Error(Errc::InvalidArgument, "embedding url needs a scheme: " + base_url_);
  const auto slash = base_url_.find('/', scheme + 3);
  host_ = base_url_.substr(0, slash);
  path_prefix_ = slash == std::string::npos ? std::string() : base_url_.substr(slash);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::size_t HttpEmbeddingProvider::dimension() const {
  {
    std::lock_guard lock(mutex_);
    if (dimension_ != 0) return dimension_;
  }
  embed("a");
  std::lock_guard lock(mutex_);
  return dimension_;
}

std::vector<Vector> HttpEmbeddingProvider::fetch(const std::vector<std::string>& tokens) const {
  httplib::Client client(host_);
  client.set_connection_timeout(5);
  client.set_read_timeout(30);
  const nlohmann::json body = {{"tokens", tokens}};
  auto res = client.Post(path_prefix_ + "/embed", body.dump(), "application/json");
  if (!res) throw Error(Errc::ProviderFailure, "embedding server unreachable at " + base_url_);
  if (res->status != 200)
    throw Error(Errc::ProviderFailure, "embedding server returned HTTP " + std::to_string(res->status));
  std::vector<Vector> vectors;
  try {
    vectors = nlohmann::json::parse(res->body).at("vectors").get<std::vector<Vector>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ProviderFailure, std::string("malformed embedding response: ") + e.what());
  }
  if (vectors.size() != tokens.size())
    throw Error(Errc::ProviderFailure, "embedding server returned " + std::to_string(vectors.size()) +
                                           " vectors for " + std::to_string(tokens.size()) + " tokens");
  for (auto& v : vectors) {
    if (v.empty()) throw Error(Errc::ProviderFailure, "embedding server returned an empty vector");
    l2_normalize(v);
  }
  return vectors;
}

Vector HttpEmbeddingProvider::embed(std::string_view token) const {
  const std::string t(token);
  return embed_batch(std::span<const std::string>(&t, 1)).front();
}

std::vector<Vector> HttpEmbeddingProvider::embed_batch(std::span<const std::string> tokens) const {
  for (const auto& t : tokens)
    if (t.empty()) throw Error(Errc::EmptyToken, "cannot embed an empty token");

  std::vector<std::string> missing;
  {
    std::lock_guard lock(mutex_);
    for (const auto& t : tokens)
      if (!cache_.contains(t) && std::find(missing.begin(), missing.end(), t) == missing.end()) missing.push_back(t);
  }
  if (!missing.empty()) {
    auto vectors = fetch(missing);
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < missing.size(); ++i) {
      if (dimension_ == 0) dimension_ = vectors[i].size();
      if (vectors[i].size() != dimension_) throw Error(Errc::ProviderFailure, "inconsistent embedding dimension");
      cache_.emplace(missing[i], std::move(vectors[i]));
    }
  }
  std::lock_guard lock(mutex_);
  std::vector<Vector> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(cache_.find(t)->second);
  return out;
}

std::unique_ptr<EmbeddingProvider> make_provider(std::string_view spec) {
  if (spec == "hashed") return std::make_unique<HashedTrigramProvider>();
  if (spec.rfind("http:", 0) == 0) {
    std::string url(spec.substr(5));
    if (url.rfind("//", 0) == 0) url = "http:" + url;  // accept "http://host:port" as a whole
    return std::make_unique<HttpEmbeddingProvider>(url);
  }
  throw Error(Errc::InvalidArgument, "unknown provider '" + std::string(spec) + "' (expected hashed or http:<url>)");
}

}  // namespace facetcoh
