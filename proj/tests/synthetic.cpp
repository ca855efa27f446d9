#include "synthetic.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <random>
#include <string>

namespace synthetic {

using namespace facetcoh;

namespace {

const std::array<const char*, 10> kProducts = {"shoes", "jacket", "phone", "laptop", "bike",
                                               "tent",  "watch",  "lamp",  "sofa",   "guitar"};
const std::array<const char*, 4> kModifiers = {"", "cheap ", "best ", "used "};

// Homogeneous facet families: every option fills the same slot.
const std::array<std::array<const char*, 6>, 5> kFamilies = {{
    {"red", "blue", "green", "black", "white", "grey"},
    {"small", "medium", "large", "extra large", "kids", "petite"},
    {"nike", "adidas", "puma", "reebok", "asics", "fila"},
    {"2018", "2019", "2020", "2021", "2022", "2023"},
    {"leather", "cotton", "wool", "nylon", "canvas", "denim"},
}};

const std::array<const char*, 5> kCoherentQuestions = {
    "Which color are you looking for?", "What size do you need?", "Which brand do you prefer?",
    "Which model year?", "What material?"};
const char* kGenericQuestion = "Select one to refine your search";

const std::array<const char*, 6> kNoise = {"for sale", "near me", "reviews", "price", "images", "repair"};

template <typename T>
const auto& pick(std::mt19937_64& rng, const T& arr) {
  return arr[static_cast<std::size_t>(rng() % arr.size())];
}

std::vector<std::string> family_options(std::mt19937_64& rng, std::size_t family, std::size_t m,
                                        const std::string& product, bool with_head) {
  std::array<std::size_t, 6> idx = {0, 1, 2, 3, 4, 5};
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < m; ++i) {
    std::string f = kFamilies[family][idx[i]];
    if (with_head) f += " " + product;
    out.push_back(f);
  }
  return out;
}

struct Draft {
  ClarificationRecord record;
  bool coherent_family = false;
};

Draft draft(std::mt19937_64& rng, std::size_t i) {
  const std::string product = pick(rng, kProducts);
  const std::string query = std::string(pick(rng, kModifiers)) + product + " " + std::to_string(i);
  const std::size_t family = rng() % kFamilies.size();
  const std::size_t m = 2 + rng() % 4;
  const bool with_head = rng() % 2 == 0;
  auto options = family_options(rng, family, m, product, with_head);

  const unsigned kind = static_cast<unsigned>(rng() % 10);
  if (kind < 6) {
    return {{Query(query), kCoherentQuestions[family], FacetSet::from_texts(options), std::nullopt,
             Source::ground_truth()},
            true};
  }
  if (kind < 8) {
    // A repeated option with different casing and spacing.
    auto dup = options[rng() % options.size()];
    dup[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(dup[0])));
    options.push_back(dup + "  ");
  } else {
    // An option that restates the query, as in "gift ideas for men".
    options[rng() % options.size()] = query + " " + pick(rng, kNoise);
  }
  return {{Query(query), kGenericQuestion, FacetSet::from_texts(options), std::nullopt, Source::ground_truth()},
          false};
}

}  // namespace

std::vector<LabeledRecord> weakly_labeled_corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledRecord> out;
  std::vector<Draft> pending;
  std::size_t counter = 0;
  // Expert seed: a few coherent records per question so propagation has evidence.
  std::size_t expert = 0;
  while (out.size() < n) {
    auto d = draft(rng, counter++);
    if (d.coherent_family && expert < 25) {
      ++expert;
      out.push_back({std::move(d.record), CoherencyLabel{Coherency::Coherent, Provenance::Expert, {}}});
      continue;
    }
    pending.push_back(std::move(d));
    if (pending.size() + out.size() < n + n / 4) continue;

    std::vector<LabeledRecord> seen = out;
    std::vector<std::optional<CoherencyLabel>> structural;
    for (const auto& p : pending) {
      structural.push_back(weak_label(p.record));
      if (structural.back()) seen.push_back({p.record, *structural.back()});
    }
    const auto stats = question_coherence_stats(seen);
    for (std::size_t i = 0; i < pending.size() && out.size() < n; ++i) {
      auto l = structural[i] ? structural[i] : weak_label(pending[i].record, &stats);
      if (l) out.push_back({pending[i].record, *l});
    }
    pending.clear();
  }
  return out;
}

}  // namespace synthetic
