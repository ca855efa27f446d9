#include "facetcoh/stats.hpp"

#include "facetcoh/error.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <random>
#include <sstream>

namespace facetcoh {

std::string_view to_string(Criterion c) { return c == Criterion::Coherency ? "coherency" : "quality"; }

Criterion criterion_from_string(std::string_view s) {
  if (s == "coherency") return Criterion::Coherency;
  if (s == "quality") return Criterion::Quality;
  throw Error(Errc::InvalidArgument, "criterion must be coherency or quality, got '" + std::string(s) + "'");
}

Aggregation aggregate_pairwise(const std::vector<TaskJudgments>& tasks, Criterion criterion) {
  Aggregation out;
  out.counts.criterion = criterion;
  for (const auto& t : tasks) {
    if (t.choices.size() != 2) {
      out.incomplete.push_back(t.task_id);
      continue;
    }
    if (t.choices[0] != t.choices[1]) ++out.counts.ties;
    else if (t.choices[0] == Side::A) ++out.counts.wins_a;
    else ++out.counts.wins_b;
  }
  return out;
}

std::vector<double> log_factorials(std::size_t max) {
  std::vector<double> lf(max + 1, 0.0);
  for (std::size_t k = 2; k <= max; ++k) lf[k] = lf[k - 1] + std::log(static_cast<double>(k));
  return lf;
}

TrinomialResult trinomial_pvalue(const PairwiseCounts& counts) {
  const std::size_t n = counts.n();
  if (n == 0) throw Error(Errc::ZeroN, "trinomial test needs at least one comparison");

  TrinomialResult out;
  out.n_d = static_cast<long long>(counts.wins_a) - static_cast<long long>(counts.wins_b);
  out.p0 = static_cast<double>(counts.ties) / static_cast<double>(n);
  if (out.n_d == 0) {
    out.p_value = 1.0;
    return out;
  }

  const double p_side = (1.0 - out.p0) / 2.0;
  const double log_side = std::log(p_side);
  const double log_tie = counts.ties > 0 ? std::log(out.p0) : 0.0;
  const auto lf = log_factorials(n);
  const long long threshold = std::llabs(out.n_d);

  double total = 0.0;
  for (std::size_t t = 0; t <= n; ++t) {
    if (t > 0 && counts.ties == 0) break;  // p0 = 0: only t = 0 has mass
    if (t == n) break;                     // |w - l| = 0 < threshold
    for (std::size_t w = 0; w + t <= n; ++w) {
      const std::size_t l = n - t - w;
      const long long diff = static_cast<long long>(w) - static_cast<long long>(l);
      if (std::llabs(diff) < threshold) continue;
      const double log_p = lf[n] - lf[w] - lf[t] - lf[l] + static_cast<double>(w + l) * log_side +
                           (t > 0 ? static_cast<double>(t) * log_tie : 0.0);
      total += std::exp(log_p);
    }
  }
  out.p_value = std::min(1.0, total);
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

struct PermutationSetup {
  std::vector<double> pooled;
  std::size_t n_a = 0;
  double observed = 0.0;
  double tolerance = 0.0;
};

PermutationSetup setup(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(Errc::EmptyInput, "both samples must be non-empty");
  PermutationSetup s;
  s.pooled.assign(a.begin(), a.end());
  s.pooled.insert(s.pooled.end(), b.begin(), b.end());
  s.n_a = a.size();
  s.observed = std::abs(mean(a) - mean(b));
  double scale = 1.0;
  for (const double x : s.pooled) scale = std::max(scale, std::abs(x));
  // Permuted means are summed in a different order; absorb the rounding.
  s.tolerance = 1e-12 * scale;
  return s;
}

// One shuffle from a generator seeded by (seed, index); returns whether the
// permuted |difference of means| reaches the observed one.
bool permutation_is_extreme(const PermutationSetup& s, std::vector<double>& scratch, std::uint64_t seed,
                            std::size_t index) {
  scratch = s.pooled;
  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(index)));
  // Partial Fisher-Yates: only the first n_a slots need to be drawn.
  const std::size_t n = scratch.size();
  for (std::size_t i = 0; i < s.n_a; ++i) {
    const std::uint64_t bound = n - i;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    std::swap(scratch[i], scratch[i + static_cast<std::size_t>(x % bound)]);
  }
  const double ma = mean(std::span<const double>(scratch.data(), s.n_a));
  const double mb = mean(std::span<const double>(scratch.data() + s.n_a, n - s.n_a));
  return std::abs(ma - mb) >= s.observed - s.tolerance;
}

SubsetTest finish(std::span<const double> a, std::span<const double> b, std::size_t permutations, std::size_t extreme) {
  SubsetTest out;
  out.mean_a = mean(a);
  out.mean_b = mean(b);
  out.permutations = permutations;
  out.extreme = extreme;
  out.p_value = static_cast<double>(1 + extreme) / static_cast<double>(permutations + 1);
  return out;
}

}  // namespace

SubsetTest subset_significance(std::span<const double> a, std::span<const double> b, std::size_t permutations,
                               std::uint64_t seed) {
  const auto s = setup(a, b);
  std::size_t extreme = 0;
  const auto n = static_cast<std::ptrdiff_t>(permutations);
#pragma omp parallel reduction(+ : extreme)
  {
    std::vector<double> scratch;
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
      if (permutation_is_extreme(s, scratch, seed, static_cast<std::size_t>(i))) ++extreme;
  }
  return finish(a, b, permutations, extreme);
}

namespace serial {

SubsetTest subset_significance(std::span<const double> a, std::span<const double> b, std::size_t permutations,
                               std::uint64_t seed) {
  const auto s = setup(a, b);
  std::vector<double> scratch;
  std::size_t extreme = 0;
  for (std::size_t i = 0; i < permutations; ++i)
    if (permutation_is_extreme(s, scratch, seed, i)) ++extreme;
  return finish(a, b, permutations, extreme);
}

}  // namespace serial

std::string format_pairwise_table(const std::vector<PairwiseReportRow>& rows, double alpha) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %8s %8s %8s %6s %12s %s\n", "criterion", "a_wins", "tie", "b_wins", "n",
                "p_value", "sig");
  out << line;
  for (const auto& r : rows) {
    const double n = static_cast<double>(r.counts.n());
    std::snprintf(line, sizeof line, "%-12s %7.1f%% %7.1f%% %7.1f%% %6zu %12.4e %s\n",
                  std::string(to_string(r.counts.criterion)).c_str(), 100.0 * static_cast<double>(r.counts.wins_a) / n,
                  100.0 * static_cast<double>(r.counts.ties) / n, 100.0 * static_cast<double>(r.counts.wins_b) / n,
                  r.counts.n(), r.test.p_value, r.test.p_value < alpha ? "\xE2\x80\xA0" : "-");
    out << line;
  }
  return out.str();
}

}  // namespace facetcoh
