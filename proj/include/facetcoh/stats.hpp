#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace facetcoh {

enum class Criterion { Coherency, Quality };
std::string_view to_string(Criterion c);
Criterion criterion_from_string(std::string_view s);

// Resolved pairwise choice: A is the ground-truth set, B the generated one.
enum class Side { A, B };

struct PairwiseCounts {
  std::size_t wins_a = 0;
  std::size_t ties = 0;
  std::size_t wins_b = 0;
  Criterion criterion = Criterion::Quality;

  std::size_t n() const { return wins_a + ties + wins_b; }
};

struct TaskJudgments {
  std::string task_id;
  std::vector<Side> choices;
};

struct Aggregation {
  PairwiseCounts counts;
  std::vector<std::string> incomplete;  // tasks without exactly two judgments
};

// Both judges pick A -> win for A; both pick B -> win for B; disagreement -> tie.
Aggregation aggregate_pairwise(const std::vector<TaskJudgments>& tasks, Criterion criterion);

struct TrinomialResult {
  long long n_d = 0;     // wins_a - wins_b
  double p_value = 1.0;  // two-sided
  double p0 = 0.0;       // ties / n
};

// Exact two-sided trinomial test of equal performance with the tie
// probability estimated from the observed tie fraction. Sums the multinomial
// pmf over every (w, t, l) with |w - l| >= |n_d|. Throws Error(ZeroN).
TrinomialResult trinomial_pvalue(const PairwiseCounts& counts);

// log(n!) for n = 0..max.
std::vector<double> log_factorials(std::size_t max);

struct SubsetTest {
  double mean_a = 0.0;
  double mean_b = 0.0;
  double p_value = 1.0;
  std::size_t permutations = 0;
  std::size_t extreme = 0;  // permutations with |diff| >= |observed|
};

// Two-sided permutation test on the difference of means. Each permutation
// draws from its own generator seeded from (seed, index), so the result does
// not depend on the number of OpenMP threads. Throws Error(EmptyInput).
SubsetTest subset_significance(std::span<const double> a, std::span<const double> b, std::size_t permutations,
                               std::uint64_t seed);

namespace serial {
SubsetTest subset_significance(std::span<const double> a, std::span<const double> b, std::size_t permutations,
                               std::uint64_t seed);
}  // namespace serial

struct PairwiseReportRow {
  PairwiseCounts counts;
  TrinomialResult test;
};

// Text table: criterion, A wins %, tie %, B wins %, p-value, marker ("†"
// when p < alpha).
std::string format_pairwise_table(const std::vector<PairwiseReportRow>& rows, double alpha = 0.01);

}  // namespace facetcoh
