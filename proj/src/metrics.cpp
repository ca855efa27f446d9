#include "facetcoh/metrics.hpp"

#include "facetcoh/error.hpp"
#include "facetcoh/text.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <numeric>

namespace facetcoh {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts pooled_ngrams(const FacetSet& set, std::size_t n, std::size_t& total) {
  NgramCounts counts;
  total = 0;
  for (const auto& facet : set) {
    const auto& terms = facet.terms();
    if (terms.size() < n) continue;
    for (std::size_t i = 0; i + n <= terms.size(); ++i) {
      ++counts[std::vector<std::string>(terms.begin() + static_cast<std::ptrdiff_t>(i),
                                        terms.begin() + static_cast<std::ptrdiff_t>(i + n))];
      ++total;
    }
  }
  return counts;
}

std::size_t token_count(const FacetSet& set) {
  std::size_t n = 0;
  for (const auto& f : set) n += f.length();
  return n;
}

void require_nonempty(const FacetSet& candidate, const FacetSet& reference) {
  if (candidate.empty() || reference.empty()) throw Error(Errc::EmptySet, "both facet sets must be non-empty");
}

// Aligns unmatched candidate tokens to unmatched reference tokens whose key
// agrees, preferring the reference slot right after the previous alignment so
// contiguous runs stay in one chunk.
template <typename Key>
void align_stage(const std::vector<std::string>& cand, const std::vector<std::string>& ref, std::vector<int>& cand_match,
                 std::vector<int>& ref_match, Key key) {
  std::vector<std::string> ref_keys(ref.size());
  for (std::size_t j = 0; j < ref.size(); ++j) ref_keys[j] = key(ref[j]);
  for (std::size_t i = 0; i < cand.size(); ++i) {
    if (cand_match[i] >= 0) continue;
    const std::string k = key(cand[i]);
    int chosen = -1;
    if (i > 0 && cand_match[i - 1] >= 0) {
      const auto next = static_cast<std::size_t>(cand_match[i - 1] + 1);
      if (next < ref.size() && ref_match[next] < 0 && ref_keys[next] == k) chosen = static_cast<int>(next);
    }
    for (std::size_t j = 0; chosen < 0 && j < ref.size(); ++j)
      if (ref_match[j] < 0 && ref_keys[j] == k) chosen = static_cast<int>(j);
    if (chosen >= 0) {
      cand_match[i] = chosen;
      ref_match[static_cast<std::size_t>(chosen)] = static_cast<int>(i);
    }
  }
}

}  // namespace

SetBleuScore set_bleu(const FacetSet& candidate, const FacetSet& reference, int max_n) {
  require_nonempty(candidate, reference);
  if (max_n < 1 || max_n > kMaxBleuOrder) throw Error(Errc::InvalidArgument, "max_n must be in 1..4");

  SetBleuScore out;
  out.candidate_tokens = token_count(candidate);
  out.reference_tokens = token_count(reference);
  const double c = static_cast<double>(out.candidate_tokens);
  const double r = static_cast<double>(out.reference_tokens);
  out.brevity_penalty = c >= r ? 1.0 : std::exp(1.0 - r / c);

  double log_sum = 0.0;
  bool zero = false;
  for (int n = 1; n <= max_n; ++n) {
    std::size_t cand_total = 0;
    std::size_t ref_total = 0;
    const auto cand = pooled_ngrams(candidate, static_cast<std::size_t>(n), cand_total);
    const auto ref = pooled_ngrams(reference, static_cast<std::size_t>(n), ref_total);
    double p = 0.0;
    if (cand_total == 0) {
      p = ref_total == 0 ? 1.0 : 0.0;
    } else {
      std::size_t clipped = 0;
      for (const auto& [gram, count] : cand) {
        const auto it = ref.find(gram);
        if (it != ref.end()) clipped += std::min(count, it->second);
      }
      p = static_cast<double>(clipped) / static_cast<double>(cand_total);
    }
    out.precisions.push_back(p);
    if (p == 0.0) zero = true;
    else log_sum += std::log(p);
    out.per_n.push_back(zero ? 0.0 : out.brevity_penalty * std::exp(log_sum / n));
  }
  return out;
}

MeteorScore meteor_pair(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  MeteorScore out;
  if (candidate.empty() || reference.empty()) return out;

  std::vector<int> cand_match(candidate.size(), -1);
  std::vector<int> ref_match(reference.size(), -1);
  align_stage(candidate, reference, cand_match, ref_match, [](const std::string& t) { return t; });
  align_stage(candidate, reference, cand_match, ref_match, [](const std::string& t) { return porter_stem(t); });

  for (std::size_t i = 0; i < candidate.size(); ++i) {
    if (cand_match[i] < 0) continue;
    ++out.matches;
    const bool continues = i > 0 && cand_match[i - 1] >= 0 && cand_match[i] == cand_match[i - 1] + 1;
    if (!continues) ++out.chunks;
  }
  if (out.matches == 0) return out;

  const double m = static_cast<double>(out.matches);
  const double precision = m / static_cast<double>(candidate.size());
  const double recall = m / static_cast<double>(reference.size());
  const double f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
  const double penalty = 0.5 * std::pow(static_cast<double>(out.chunks) / m, 3.0);
  out.value = f_mean * (1.0 - penalty);
  return out;
}

MeteorScore meteor_set(const FacetSet& candidate, const FacetSet& reference) {
  require_nonempty(candidate, reference);
  const bool cand_smaller = candidate.size() <= reference.size();
  const FacetSet& small = cand_smaller ? candidate : reference;
  const FacetSet& large = cand_smaller ? reference : candidate;
  const std::size_t s = small.size();
  const std::size_t l = large.size();
  if (l > 16) throw Error(Errc::InvalidArgument, "meteor_set supports at most 16 facets per side");

  std::vector<std::vector<MeteorScore>> pair(s, std::vector<MeteorScore>(l));
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < l; ++j)
      pair[i][j] = cand_smaller ? meteor_pair(small[i].terms(), large[j].terms())
                                : meteor_pair(large[j].terms(), small[i].terms());

  // best[i][mask]: max total score assigning small[i..] to large slots not in mask.
  const std::size_t masks = std::size_t{1} << l;
  std::vector<std::vector<double>> best(s + 1, std::vector<double>(masks, 0.0));
  std::vector<std::vector<int>> choice(s + 1, std::vector<int>(masks, -1));
  for (std::size_t i = s; i-- > 0;) {
    for (std::size_t mask = 0; mask < masks; ++mask) {
      double top = -1.0;
      for (std::size_t j = 0; j < l; ++j) {
        if (mask & (std::size_t{1} << j)) continue;
        const double v = pair[i][j].value + best[i + 1][mask | (std::size_t{1} << j)];
        if (v > top) {
          top = v;
          choice[i][mask] = static_cast<int>(j);
        }
      }
      best[i][mask] = std::max(top, 0.0);
    }
  }

  MeteorScore out;
  double weighted = 0.0;
  std::size_t mask = 0;
  for (std::size_t i = 0; i < s; ++i) {
    const auto j = static_cast<std::size_t>(choice[i][mask]);
    mask |= std::size_t{1} << j;
    const auto& ms = pair[i][j];
    weighted += static_cast<double>(small[i].length() + large[j].length()) * ms.value;
    out.matches += ms.matches;
    out.chunks += ms.chunks;
  }
  const double total = static_cast<double>(token_count(candidate) + token_count(reference));
  out.value = weighted / total;
  return out;
}

SemanticScore semantic_f1(const FacetSet& candidate, const FacetSet& reference, const EmbeddingProvider& provider) {
  require_nonempty(candidate, reference);
  std::vector<std::string> cand_tokens;
  std::vector<std::string> ref_tokens;
  for (const auto& f : candidate) cand_tokens.insert(cand_tokens.end(), f.terms().begin(), f.terms().end());
  for (const auto& f : reference) ref_tokens.insert(ref_tokens.end(), f.terms().begin(), f.terms().end());

  const auto cand_vecs = provider.embed_batch(cand_tokens);
  const auto ref_vecs = provider.embed_batch(ref_tokens);

  std::vector<double> cand_best(cand_tokens.size(), 0.0);
  std::vector<double> ref_best(ref_tokens.size(), 0.0);
  for (std::size_t i = 0; i < cand_tokens.size(); ++i) {
    for (std::size_t j = 0; j < ref_tokens.size(); ++j) {
      const double sim = cand_tokens[i] == ref_tokens[j] ? 1.0 : std::clamp(cosine(cand_vecs[i], ref_vecs[j]), 0.0, 1.0);
      cand_best[i] = std::max(cand_best[i], sim);
      ref_best[j] = std::max(ref_best[j], sim);
    }
  }

  SemanticScore out;
  out.precision = std::accumulate(cand_best.begin(), cand_best.end(), 0.0) / static_cast<double>(cand_best.size());
  out.recall = std::accumulate(ref_best.begin(), ref_best.end(), 0.0) / static_cast<double>(ref_best.size());
  const double denom = out.precision + out.recall;
  out.f1 = denom > 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
  return out;
}

PairMetrics evaluate_pair(const ClarificationRecord& reference, const ClarificationRecord& candidate,
                          const EmbeddingProvider& provider) {
  PairMetrics out;
  out.query = reference.query.text();
  out.query_id = reference.query.id();
  out.reference_size = reference.facets.size();
  out.candidate_size = candidate.facets.size();
  out.bleu = set_bleu(candidate.facets, reference.facets, kMaxBleuOrder);
  out.meteor = meteor_set(candidate.facets, reference.facets);
  out.semantic = semantic_f1(candidate.facets, reference.facets, provider);
  return out;
}

std::vector<MetricRow> aggregate_by_m(const std::vector<PairMetrics>& pairs) {
  std::map<std::size_t, MetricRow> rows;
  std::map<std::size_t, std::size_t> ref_scored, cand_scored;
  std::map<std::size_t, std::size_t> ref_coherent, cand_coherent;
  for (const auto& p : pairs) {
    auto& row = rows[p.reference_size];
    row.m = p.reference_size;
    ++row.pairs;
    for (int n = 0; n < kMaxBleuOrder; ++n) row.bleu[n] += p.bleu.per_n.at(static_cast<std::size_t>(n));
    row.semantic_f1 += p.semantic.f1;
    row.meteor += p.meteor.value;
    if (p.reference_coherency) {
      ++ref_scored[row.m];
      if (*p.reference_coherency > 0.5) ++ref_coherent[row.m];
    }
    if (p.candidate_coherency) {
      ++cand_scored[row.m];
      if (*p.candidate_coherency > 0.5) ++cand_coherent[row.m];
    }
  }
  std::vector<MetricRow> out;
  for (auto& [m, row] : rows) {
    const double n = static_cast<double>(row.pairs);
    for (double& b : row.bleu) b /= n;
    row.semantic_f1 /= n;
    row.meteor /= n;
    if (ref_scored[m]) row.reference_coherent_fraction = static_cast<double>(ref_coherent[m]) / ref_scored[m];
    if (cand_scored[m]) row.candidate_coherent_fraction = static_cast<double>(cand_coherent[m]) / cand_scored[m];
    out.push_back(row);
  }
  return out;
}

namespace {

std::vector<std::size_t> reduction_order(const Pairing& pairing) {
  std::vector<std::size_t> order(pairing.pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pairing.pairs[a].reference->query.id() < pairing.pairs[b].reference->query.id();
  });
  return order;
}

MetricReport finish(const Pairing& pairing, std::vector<PairMetrics> computed) {
  MetricReport report;
  report.unpaired = pairing.unpaired;
  report.pairs.reserve(computed.size());
  for (const auto i : reduction_order(pairing)) report.pairs.push_back(std::move(computed[i]));
  report.by_m = aggregate_by_m(report.pairs);
  return report;
}

}  // namespace

MetricReport evaluate_corpus(const Pairing& pairing, const EmbeddingProvider& provider) {
  const auto n = static_cast<std::ptrdiff_t>(pairing.pairs.size());
  std::vector<PairMetrics> computed(pairing.pairs.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& p = pairing.pairs[static_cast<std::size_t>(i)];
      computed[static_cast<std::size_t>(i)] = evaluate_pair(*p.reference, *p.candidate, provider);
      computed[static_cast<std::size_t>(i)].pair_index = static_cast<std::size_t>(i);
    } catch (...) {
#pragma omp critical(facetcoh_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return finish(pairing, std::move(computed));
}

namespace serial {

MetricReport evaluate_corpus(const Pairing& pairing, const EmbeddingProvider& provider) {
  std::vector<PairMetrics> computed;
  computed.reserve(pairing.pairs.size());
  for (const auto& p : pairing.pairs) {
    computed.push_back(evaluate_pair(*p.reference, *p.candidate, provider));
    computed.back().pair_index = computed.size() - 1;
  }
  return finish(pairing, std::move(computed));
}

}  // namespace serial

}  // namespace facetcoh
