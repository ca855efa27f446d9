#pragma once

#include "facetcoh/corpus.hpp"
#include "facetcoh/embedding.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace facetcoh {

inline constexpr int kMaxBleuOrder = 4;

struct SetBleuScore {
  std::vector<double> precisions;  // clipped p_n, index 0 is unigrams
  std::vector<double> per_n;       // cumulative BP * geomean(p_1..p_n)
  double brevity_penalty = 1.0;
  std::size_t candidate_tokens = 0;
  std::size_t reference_tokens = 0;

  // 1-based: cumulative(1) is the unigram score.
  double cumulative(int n) const { return per_n.at(static_cast<std::size_t>(n - 1)); }
};

struct MeteorScore {
  double value = 0.0;
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

struct SemanticScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// N-grams are pooled within each facet (never across facet boundaries) into
// one multiset per side; clipping, brevity penalty and the cumulative
// geometric mean follow classic unsmoothed BLEU. A level at which the
// candidate has no n-grams scores 1 if the reference has none either, else 0.
// Throws Error(EmptySet) if either set is empty.
SetBleuScore set_bleu(const FacetSet& candidate, const FacetSet& reference, int max_n = kMaxBleuOrder);

// Single-segment METEOR with exact then Porter-stem unigram matching:
// F_mean = 10PR / (R + 9P), penalty = 0.5 (chunks/m)^3.
MeteorScore meteor_pair(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);

// Facets are aligned one-to-one by exact maximum-total-score assignment;
// the set value is the token-count-weighted mean over aligned pairs, with
// unaligned facets contributing their tokens at score 0.
MeteorScore meteor_set(const FacetSet& candidate, const FacetSet& reference);

// Greedy max-cosine token matching over the pooled tokens of each side.
// Per-token similarities are clamped to [0, 1].
SemanticScore semantic_f1(const FacetSet& candidate, const FacetSet& reference, const EmbeddingProvider& provider);

struct PairMetrics {
  std::size_t pair_index = 0;  // position in Pairing::pairs
  std::string query;
  std::string query_id;
  std::size_t reference_size = 0;  // M
  std::size_t candidate_size = 0;
  SetBleuScore bleu;
  MeteorScore meteor;
  SemanticScore semantic;
  std::optional<double> reference_coherency;  // γ score, filled by the coherency module
  std::optional<double> candidate_coherency;
};

struct MetricRow {
  std::size_t m = 0;
  std::size_t pairs = 0;
  double bleu[kMaxBleuOrder] = {0, 0, 0, 0};
  double semantic_f1 = 0.0;
  double meteor = 0.0;
  std::optional<double> reference_coherent_fraction;
  std::optional<double> candidate_coherent_fraction;
};

struct MetricReport {
  std::vector<PairMetrics> pairs;  // sorted by query id, then input order
  std::vector<MetricRow> by_m;     // ascending M of the reference set
  std::vector<std::string> unpaired;
};

PairMetrics evaluate_pair(const ClarificationRecord& reference, const ClarificationRecord& candidate,
                          const EmbeddingProvider& provider);

// Per-pair metrics computed in parallel (OpenMP); aggregation runs in a fixed
// order so the result is bit-identical to the serial path.
MetricReport evaluate_corpus(const Pairing& pairing, const EmbeddingProvider& provider);

// Arithmetic means per reference-set size over report.pairs.
std::vector<MetricRow> aggregate_by_m(const std::vector<PairMetrics>& pairs);

namespace serial {
MetricReport evaluate_corpus(const Pairing& pairing, const EmbeddingProvider& provider);
}  // namespace serial

}  // namespace facetcoh
