// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and time
// budgets are fixed here and nowhere else.

#include "facetcoh/annotation.hpp"
#include "facetcoh/coherency.hpp"
#include "facetcoh/error.hpp"
#include "facetcoh/metrics.hpp"
#include "facetcoh/stats.hpp"

#include "bleu_oracle.hpp"
#include "synthetic.hpp"

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

using namespace facetcoh;

namespace {

constexpr double kAlpha = 0.01;
constexpr double kTrinomialSeconds = 1.0;
constexpr double kTrinomialOracleTol = 1e-12;
constexpr double kTrinomialOracleSeconds = 30.0;
constexpr std::size_t kBleuOraclePairs = 500;
constexpr std::size_t kPermutationCases = 1000;
// Clipped precisions and BP must match bit for bit; the geometric mean may round differently.
constexpr double kBleuCumulativeTol = 1e-12;
constexpr double kMeteorTol = 1e-9;
constexpr double kGradientRelTol = 1e-6;
constexpr double kGradientStep = 1e-5;
constexpr int kGradientPoints = 20;
constexpr std::size_t kSyntheticRecords = 500;
constexpr double kHeldOutAccuracy = 0.90;
constexpr double kClassifierSeconds = 10.0;
constexpr std::uint64_t kSeed = 13;

// Collects failures for one criterion; details go to the report line.
struct Check {
  std::vector<std::string> failures;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

int failed = 0;

void report(const std::string& name, const std::function<std::string(Check&)>& body) {
  Check c;
  std::string detail;
  const auto start = std::chrono::steady_clock::now();
  try {
    detail = body(c);
  } catch (const std::exception& e) {
    c.failures.push_back(std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char timing[32];
  std::snprintf(timing, sizeof timing, "%.2fs", secs);
  if (c.failures.empty()) {
    std::cout << "PASS  " << name << "  [" << timing << "] " << detail << "\n";
  } else {
    ++failed;
    std::cout << "FAIL  " << name << "  [" << timing << "]";
    for (const auto& f : c.failures) std::cout << "\n        - " << f;
    std::cout << "\n";
  }
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

std::string num(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

FacetSet fs(std::initializer_list<const char*> texts) { return FacetSet::from_texts({texts.begin(), texts.end()}); }

// All (w, t, l) with w + t + l = n and each within one of pct * n.
std::vector<PairwiseCounts> roundings(std::size_t n, double pw, double pt, double pl, Criterion c) {
  std::vector<PairwiseCounts> out;
  const auto lo = [&](double p) { return static_cast<std::size_t>(std::floor(p * static_cast<double>(n))); };
  for (std::size_t w = lo(pw); w <= lo(pw) + 1; ++w)
    for (std::size_t t = lo(pt); t <= lo(pt) + 1; ++t)
      for (std::size_t l = lo(pl); l <= lo(pl) + 1; ++l)
        if (w + t + l == n) out.push_back({w, t, l, c});
  return out;
}

// ---- criteria -------------------------------------------------------------------

std::string pairwise_significance(Check& c) {
  std::string detail;
  const auto timed = [&](const PairwiseCounts& k) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = trinomial_pvalue(k);
    c.expect(seconds_since(t0) < kTrinomialSeconds, "trinomial took longer than 1 s");
    return r;
  };
  const auto quality = timed({119, 48, 32, Criterion::Quality});
  const auto coherency = timed({58, 85, 56, Criterion::Coherency});
  c.expect(quality.p_value < kAlpha, "quality (119,48,32) p = " + num(quality.p_value) + " not < 0.01");
  c.expect(coherency.p_value >= kAlpha, "coherency (58,85,56) p = " + num(coherency.p_value) + " not >= 0.01");
  const auto q_round = roundings(199, 0.60, 0.24, 0.16, Criterion::Quality);
  const auto c_round = roundings(199, 0.29, 0.43, 0.28, Criterion::Coherency);
  c.expect(q_round.size() == 3 && c_round.size() == 3, "expected three roundings per criterion");
  for (const auto& k : q_round) c.expect(timed(k).p_value < kAlpha, "quality rounding flips the verdict");
  for (const auto& k : c_round) c.expect(timed(k).p_value >= kAlpha, "coherency rounding flips the verdict");
  return "quality p=" + num(quality.p_value) + ", coherency p=" + num(coherency.p_value) + ", " +
         std::to_string(q_round.size() + c_round.size()) + " roundings";
}

std::string trinomial_oracle(Check& c) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t triples = 0;
  for (std::size_t n = 1; n <= 12; ++n) {
    // Visit all 3^n outcome sequences once and tally them by composition.
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= 3;
    std::vector<std::vector<double>> sequences(n + 1, std::vector<double>(n + 1, 0.0));  // [wins][ties]
    std::vector<unsigned char> digits(n, 0);
    for (std::size_t code = 0; code < total; ++code) {
      std::size_t w = 0, t = 0;
      for (auto d : digits) {
        w += d == 0;
        t += d == 1;
      }
      sequences[w][t] += 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (++digits[i] < 3) break;
        digits[i] = 0;
      }
    }
    for (std::size_t w = 0; w <= n; ++w)
      for (std::size_t t = 0; w + t <= n; ++t) {
        const std::size_t l = n - w - t;
        const double p0 = static_cast<double>(t) / static_cast<double>(n);
        const double pw = (1.0 - p0) / 2.0;
        const long long obs = std::llabs(static_cast<long long>(w) - static_cast<long long>(l));
        double p = 0.0;
        for (std::size_t sw = 0; sw <= n; ++sw)
          for (std::size_t st = 0; sw + st <= n; ++st) {
            const std::size_t sl = n - sw - st;
            if (std::llabs(static_cast<long long>(sw) - static_cast<long long>(sl)) < obs) continue;
            p += sequences[sw][st] * std::pow(pw, static_cast<double>(sw + sl)) * std::pow(p0, static_cast<double>(st));
          }
        const double got = trinomial_pvalue({w, t, l, Criterion::Quality}).p_value;
        worst = std::max(worst, std::abs(got - std::min(1.0, p)));
        ++triples;
      }
  }
  const double secs = seconds_since(t0);
  c.expect(worst <= kTrinomialOracleTol, "max |exact - enumeration| = " + num(worst));
  c.expect(secs < kTrinomialOracleSeconds, "took " + num(secs) + " s");
  return std::to_string(triples) + " triples, max abs error " + num(worst);
}

std::string bleu_oracle(Check& c) {
  std::mt19937_64 rng(kSeed);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < kBleuOraclePairs; ++i) {
    const auto cand = oracle::random_set(rng, 3, 3);
    const auto ref = oracle::random_set(rng, 3, 3);
    const auto got = set_bleu(FacetSet::from_texts(cand), FacetSet::from_texts(ref));
    const auto want = oracle::set_bleu(cand, ref, 4);
    bool same = got.brevity_penalty == want.brevity_penalty;
    for (int n = 0; n < 4; ++n) same = same && got.precisions[n] == want.precisions[n];
    for (int n = 0; n < 4; ++n) same = same && std::abs(got.per_n[n] - want.cumulative[n]) <= kBleuCumulativeTol;
    mismatches += !same;
    const auto self = set_bleu(FacetSet::from_texts(ref), FacetSet::from_texts(ref));
    c.expect(self.cumulative(1) == 1.0, "identity pair per_n[1] != 1");
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " oracle mismatches");

  const HashedTrigramProvider provider;
  std::size_t variant = 0;
  for (std::size_t i = 0; i < kPermutationCases; ++i) {
    auto cand = oracle::random_set(rng, 5, 4);
    auto ref = oracle::random_set(rng, 5, 4);
    const auto b0 = set_bleu(FacetSet::from_texts(cand), FacetSet::from_texts(ref));
    const auto m0 = meteor_set(FacetSet::from_texts(cand), FacetSet::from_texts(ref));
    const auto s0 = semantic_f1(FacetSet::from_texts(cand), FacetSet::from_texts(ref), provider);
    std::shuffle(cand.begin(), cand.end(), rng);
    std::shuffle(ref.begin(), ref.end(), rng);
    const auto b1 = set_bleu(FacetSet::from_texts(cand), FacetSet::from_texts(ref));
    const auto m1 = meteor_set(FacetSet::from_texts(cand), FacetSet::from_texts(ref));
    const auto s1 = semantic_f1(FacetSet::from_texts(cand), FacetSet::from_texts(ref), provider);
    variant += !(b0.per_n == b1.per_n && m0.value == m1.value && s0.f1 == s1.f1);
  }
  c.expect(variant == 0, std::to_string(variant) + " permutation-sensitive cases");
  return std::to_string(kBleuOraclePairs) + " oracle pairs exact, " + std::to_string(kPermutationCases) +
         " permutation cases invariant";
}

std::string meteor_values(Check& c) {
  const double self = meteor_pair({"police", "car", "sales"}, {"police", "car", "sales"}).value;
  const double bus = meteor_pair({"school", "bus", "sales"}, {"police", "boat", "sales"}).value;
  const double disjoint = meteor_set(fs({"specs", "for sale"}), fs({"coupe", "hatchback"})).value;
  c.expect(std::abs(self - (1.0 - 0.5 * std::pow(1.0 / 3.0, 3))) <= kMeteorTol, "self pair " + num(self, "%.12f"));
  c.expect(std::abs(bus - 1.0 / 6.0) <= kMeteorTol, "school bus vs police boat " + num(bus, "%.12f"));
  c.expect(disjoint == 0.0, "disjoint sets " + num(disjoint));
  c.expect(meteor_pair({"pc"}, {"new", "call", "of", "duty", "zombie", "game"}).value == 0.0, "disjoint pair");
  return "self " + num(self, "%.6f") + ", bus/boat " + num(bus, "%.6f") + ", disjoint " + num(disjoint);
}

std::string directional_fixture(Check& c) {
  const HashedTrigramProvider p;
  const auto police_gen = fs({"police car sales", "police motorcycle sales", "school bus sales"});
  const auto police_gt = fs({"police car sales", "police motorcycle sales", "police boat sales"});
  const double police = semantic_f1(police_gen, police_gt, p).f1;
  const double mustang = semantic_f1(fs({"specs", "for sale"}), fs({"coupe", "hatchback"}), p).f1;
  const double police_bleu = set_bleu(police_gen, police_gt).cumulative(1);
  const double duty_bleu =
      set_bleu(fs({"pc", "ps4"}), fs({"new call of duty zombie game", "new call of duty ghost game"})).cumulative(1);
  c.expect(police > mustang, "semantic F1 police " + num(police) + " <= mustang " + num(mustang));
  c.expect(police_bleu > duty_bleu, "BLEU-1 police " + num(police_bleu) + " <= call of duty " + num(duty_bleu));
  return "semantic F1 " + num(police, "%.4f") + " > " + num(mustang, "%.4f") + ", BLEU-1 " + num(police_bleu, "%.4f") +
         " > " + num(duty_bleu, "%.4f");
}

std::string classifier(Check& c) {
  const auto t0 = std::chrono::steady_clock::now();
  // Gradient check at random points on random standardized rows.
  std::mt19937_64 rng(kSeed);
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> rows(50, std::vector<double>(kFeatureCount));
  std::vector<double> targets;
  for (auto& r : rows) {
    for (auto& x : r) x = normal(rng);
    targets.push_back(rng() % 2 ? 1.0 : 0.0);
  }
  double worst = 0.0;
  for (int point = 0; point < kGradientPoints; ++point) {
    std::vector<double> w(kFeatureCount + 1);
    for (auto& x : w) x = normal(rng);
    const double l2 = point % 2 ? 0.01 : 0.0;
    std::vector<double> grad;
    logistic_loss(w, rows, targets, l2, &grad);
    double diff = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      auto up = w, down = w;
      up[k] += kGradientStep;
      down[k] -= kGradientStep;
      const double fd =
          (logistic_loss(up, rows, targets, l2, nullptr) - logistic_loss(down, rows, targets, l2, nullptr)) /
          (2 * kGradientStep);
      diff += (fd - grad[k]) * (fd - grad[k]);
      scale = std::max({scale, fd * fd, grad[k] * grad[k]});
    }
    worst = std::max(worst, std::sqrt(diff / scale));
  }
  c.expect(worst < kGradientRelTol, "gradient relative error " + num(worst));

  const auto zero = predict(CoherencyModel::zero(), FeatureVector{});
  c.expect(zero.score == 0.5 && zero.label == Coherency::Incoherent, "zero model is not s=0.5 => Incoherent");

  const HashedTrigramProvider provider;
  const auto corpus = synthetic::weakly_labeled_corpus(kSyntheticRecords, kSeed);
  c.expect(corpus.size() == kSyntheticRecords, "synthetic corpus has " + std::to_string(corpus.size()) + " records");
  const auto split = stratified_split(corpus, {}, kSeed);
  std::vector<ClarificationRecord> parts[3];
  std::vector<Coherency> labels[3];
  std::vector<LabeledRecord> test;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto s = static_cast<std::size_t>(split[i]);
    parts[s].push_back(corpus[i].record);
    labels[s].push_back(corpus[i].label.value);
    if (split[i] == Split::Test) test.push_back(corpus[i]);
  }
  TrainConfig cfg;  // learning rate 0.1, l2 = 0
  const auto model = train(extract_features_batch(parts[0], provider), labels[0],
                           extract_features_batch(parts[1], provider), labels[1], cfg);
  std::size_t increases = 0;
  for (std::size_t i = 1; i < model.train_loss.size(); ++i) increases += model.train_loss[i] > model.train_loss[i - 1];
  c.expect(increases == 0, std::to_string(increases) + " training steps increased the loss");
  const auto eval = evaluate(model, test, provider);
  c.expect(eval.accuracy >= kHeldOutAccuracy, "held-out accuracy " + num(eval.accuracy));
  const double secs = seconds_since(t0);
  c.expect(secs < kClassifierSeconds, "took " + num(secs) + " s");
  return "grad rel err " + num(worst, "%.2e") + ", " + std::to_string(model.train_loss.size()) +
         " monotone steps, held-out accuracy " + num(eval.accuracy, "%.4f") + " on " + std::to_string(eval.total) +
         " records";
}

ClarificationRecord rec(const std::string& q, std::vector<std::string> facets, const std::string& question = "") {
  return {Query(q), question, FacetSet::from_texts(facets), std::nullopt, Source::ground_truth()};
}

std::string weak_rules(Check& c) {
  const auto rule = [](const ClarificationRecord& r, const std::map<std::string, double>* s = nullptr) {
    const auto l = weak_label(r, s);
    return l ? l->provenance_label() : std::string("none");
  };
  c.expect(rule(rec("gift ideas", {"gift ideas for men", "for women", "for kids"})) == "weak:query-containment",
           "gift ideas for men");
  c.expect(rule(rec("1982 mustang", {"coupe", "coupe", "hatchback"})) == "weak:dup", "duplicate facets");
  c.expect(rule(rec("police sales", {"police car sales", "police boat sales"})) == "none", "clean set labeled");

  // Casing / whitespace perturbations.
  c.expect(rule(rec("Gift  Ideas", {"GIFT ideas  for Men", "for women"})) == "weak:query-containment",
           "perturbed containment");
  c.expect(rule(rec("1982 mustang", {"Coupe ", "  coupe", "hatchback"})) == "weak:dup", "perturbed duplicate");
  c.expect(rule(rec("POLICE   sales", {"Police Car Sales", "police boat  sales"})) == "none", "perturbed clean set");

  std::vector<LabeledRecord> seen;
  for (int i = 0; i < 19; ++i)
    seen.push_back({rec("q" + std::to_string(i), {"a", "b"}, "Which color?"), {Coherency::Coherent, Provenance::Expert, {}}});
  seen.push_back({rec("qx", {"a", "b"}, "Which color?"), {Coherency::Incoherent, Provenance::Expert, {}}});
  auto stats = question_coherence_stats(seen);
  c.expect(rule(rec("new", {"red", "blue"}, "Which color?"), &stats) == "none", "propagated at exactly 0.95");
  seen.push_back({rec("qy", {"a", "b"}, "Which color?"), {Coherency::Coherent, Provenance::Expert, {}}});
  stats = question_coherence_stats(seen);
  c.expect(rule(rec("new", {"red", "blue"}, "which  COLOR?"), &stats) == "propagated", "no propagation at 20/21");
  return "containment, duplicate and propagation rules behave on fixtures";
}

std::string annotation_replay(Check& c) {
  std::vector<ComparisonItem> items;
  for (int i = 1; i <= 10; ++i) {
    char id[8];
    std::snprintf(id, sizeof id, "t%04d", i);
    items.push_back({id, "q" + std::to_string(i), {"gt option", "gt other"}, {"gen option"}});
  }
  std::vector<GoldItem> gold = {{"g1", "gold", {"a"}, {"b"}, Criterion::Quality, Choice::Left},
                                {"g2", "gold", {"a"}, {"b"}, Criterion::Quality, Choice::Right}};
  const auto log = std::filesystem::temp_directory_path() / ("facetcoh_acceptance_" + std::to_string(::getpid()) + ".jsonl");
  std::filesystem::remove(log);
  const ServiceConfig config{kSeed, 2, 0.8, log.string()};
  const auto clock = [] { return std::string("2026-01-01T00:00:00Z"); };

  // Script: which side each annotator prefers, by task number.
  // ann1 prefers ground truth on 1-7, ann2 on 1-5 and 8.
  //   both A: 1-5 -> 5 wins; split: 6, 7, 8 -> 3 ties; both B: 9, 10 -> 2 losses.
  const auto prefers_gt = [](const std::string& annotator, int task) {
    return annotator == "ann1" ? task <= 7 : (task <= 5 || task == 8);
  };
  std::string before;
  std::size_t duplicates_rejected = 0;
  {
    AnnotationStore store(items, gold, config, clock);
    for (const char* a : {"ann1", "ann2"})
      c.expect(store.run_qualification(a, {{"g1", Choice::Left}, {"g2", Choice::Right}}).qualification ==
                   Qualification::Qualified,
               std::string(a) + " not qualified");
    for (const std::string a : {"ann1", "ann2"}) {
      while (const auto task = store.next_task(a, Criterion::Quality)) {
        const bool gt_left = task->left.front().rfind("gt", 0) == 0;
        const int number = std::stoi(task->task_id.substr(1));
        const bool want_gt = prefers_gt(a, number);
        const Choice choice = want_gt == gt_left ? Choice::Left : Choice::Right;
        store.submit_judgment({task->task_id, a, Criterion::Quality, choice});
        try {
          store.submit_judgment({task->task_id, a, Criterion::Quality, choice});
        } catch (const Error& e) {
          duplicates_rejected += e.code() == Errc::DuplicateJudgment;
        }
      }
    }
    before = store.snapshot();
    const auto agg = aggregate_pairwise(to_task_judgments(export_from_json(export_to_json(
                                            store.export_judgments(Criterion::Quality)))),
                                        Criterion::Quality);
    c.expect(agg.counts.wins_a == 5 && agg.counts.ties == 3 && agg.counts.wins_b == 2,
             "counts (" + std::to_string(agg.counts.wins_a) + "," + std::to_string(agg.counts.ties) + "," +
                 std::to_string(agg.counts.wins_b) + ") != (5,3,2)");
    c.expect(agg.incomplete.empty(), "incomplete tasks in export");
  }
  c.expect(duplicates_rejected == 20, "duplicate submissions rejected: " + std::to_string(duplicates_rejected));
  AnnotationStore replayed(items, gold, config, clock);
  c.expect(replayed.snapshot() == before, "replayed state differs");
  c.expect(replayed.replay_skipped() == 0, "replay skipped lines");
  std::filesystem::remove(log);
  return "counts (5,3,2), 20 duplicates rejected, replay identical";
}

}  // namespace

int main() {
  report("Pairwise significance reproduction", pairwise_significance);
  report("Trinomial oracle equivalence (n <= 12)", trinomial_oracle);
  report("Set BLEU oracle and permutation invariance", bleu_oracle);
  report("METEOR hand values", meteor_values);
  report("Directional metric fixture", directional_fixture);
  report("Classifier numerics and synthetic held-out accuracy", classifier);
  report("Weak-rule suite", weak_rules);
  report("Annotation protocol replay", annotation_replay);
  std::cout << (failed ? std::to_string(failed) + " criteria failed\n" : "all criteria passed\n");
  return failed ? 1 : 0;
}
