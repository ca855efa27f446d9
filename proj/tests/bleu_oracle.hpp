#pragma once

// Brute-force set BLEU used as an independent oracle: n-grams are enumerated
// as joined strings per facet and counted in std::map.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

inline std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline std::vector<std::string> random_set(std::mt19937_64& rng, int max_facets = 3, int max_tokens = 3) {
  static const char* vocab[] = {"police", "car", "sales", "boat", "bus", "school", "coupe", "for", "sale", "new", "game"};
  std::uniform_int_distribution<int> nfacets(1, max_facets), len(1, max_tokens), pick(0, 10);
  std::vector<std::string> set(static_cast<std::size_t>(nfacets(rng)));
  for (auto& f : set) {
    const int l = len(rng);
    for (int i = 0; i < l; ++i) f += (i ? " " : "") + std::string(vocab[pick(rng)]);
  }
  return set;
}

struct Bleu {
  std::vector<double> precisions;
  std::vector<double> cumulative;
  double brevity_penalty = 1.0;
};

inline std::map<std::string, int> ngrams(const std::vector<std::string>& set, int n) {
  std::map<std::string, int> counts;
  for (const auto& f : set) {
    const auto w = words(f);
    for (int i = 0; i + n <= static_cast<int>(w.size()); ++i) {
      std::string key;
      for (int k = 0; k < n; ++k) key += w[i + k] + "\x1f";
      ++counts[key];
    }
  }
  return counts;
}

inline Bleu set_bleu(const std::vector<std::string>& cand, const std::vector<std::string>& ref, int max_n) {
  Bleu b;
  double c = 0, r = 0;
  for (const auto& f : cand) c += static_cast<double>(words(f).size());
  for (const auto& f : ref) r += static_cast<double>(words(f).size());
  b.brevity_penalty = c < r ? std::exp(1.0 - r / c) : 1.0;
  double logsum = 0;
  bool zero = false;
  for (int n = 1; n <= max_n; ++n) {
    const auto cn = ngrams(cand, n);
    const auto rn = ngrams(ref, n);
    int total = 0, clipped = 0;
    for (const auto& [g, k] : cn) {
      total += k;
      const auto it = rn.find(g);
      clipped += std::min(k, it == rn.end() ? 0 : it->second);
    }
    double p;
    if (total == 0)
      p = rn.empty() ? 1.0 : 0.0;
    else
      p = static_cast<double>(clipped) / total;
    b.precisions.push_back(p);
    if (p == 0) zero = true;
    if (!zero) logsum += std::log(p);
    b.cumulative.push_back(zero ? 0.0 : b.brevity_penalty * std::exp(logsum / n));
  }
  return b;
}

}  // namespace oracle
