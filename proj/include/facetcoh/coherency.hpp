#pragma once

#include "facetcoh/corpus.hpp"
#include "facetcoh/embedding.hpp"
#include "facetcoh/metrics.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace facetcoh {

enum class Coherency { Coherent, Incoherent };

enum class Provenance { Expert, WeakRule, Propagated, Predicted };

struct CoherencyLabel {
  Coherency value = Coherency::Incoherent;
  Provenance provenance = Provenance::Expert;
  std::string rule;  // WeakRule only: "dup" or "query-containment"

  std::string provenance_label() const;
  friend bool operator==(const CoherencyLabel&, const CoherencyLabel&) = default;
};

std::string_view to_string(Coherency c);

struct LabeledRecord {
  ClarificationRecord record;
  CoherencyLabel label;
};

// ---- weak supervision -------------------------------------------------------

inline constexpr double kPropagationThreshold = 0.95;

// Fraction of labeled records per normalized question that are Coherent.
// Predicted labels are ignored.
std::map<std::string, double> question_coherence_stats(const std::vector<LabeledRecord>& labeled);

// Rules, first match wins:
//   1. two facets equal after normalize_facet          -> Incoherent (dup)
//   2. a facet contains the query tokens contiguously   -> Incoherent (query-containment)
//   3. the question's coherent fraction is > 0.95       -> Coherent (propagated)
std::optional<CoherencyLabel> weak_label(const ClarificationRecord& record,
                                         const std::map<std::string, double>* question_stats = nullptr);

// ---- features ---------------------------------------------------------------

inline constexpr std::string_view kFeatureSchema = "facet-features-v1";
inline constexpr std::size_t kFeatureCount = 8;
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "has_duplicate",        "contains_query",      "token_count_dispersion", "mean_pairwise_cosine",
    "min_pairwise_cosine",  "template_agreement",  "mean_jaccard",           "head_token_agreement",
};

struct FeatureVector {
  std::array<double, kFeatureCount> values{};

  double has_duplicate() const { return values[0]; }
  double contains_query() const { return values[1]; }
  double token_count_dispersion() const { return values[2]; }
  double mean_pairwise_cosine() const { return values[3]; }
  double min_pairwise_cosine() const { return values[4]; }
  double template_agreement() const { return values[5]; }
  double mean_jaccard() const { return values[6]; }
  double head_token_agreement() const { return values[7]; }
};

FeatureVector extract_features(const FacetSet& facets, const Query& query, const EmbeddingProvider& provider);

// ---- split ------------------------------------------------------------------

enum class Split { Train, Validation, Test };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct SplitRatios {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

// Index-aligned with the input records.
using SplitAssignment = std::vector<Split>;

// Per class: seeded Fisher-Yates shuffle, floor(ratio * n) per split, then the
// remainder goes by largest fractional part with ties ordered
// Train > Validation > Test. Throws Error(EmptyClass), and
// Error(InvalidArgument) on Predicted labels.
SplitAssignment stratified_split(const std::vector<LabeledRecord>& records, const SplitRatios& ratios,
                                 std::uint64_t seed);

// ---- model ------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 4;
  int patience = 2;
  int steps_per_epoch = 50;
  double l2 = 0.0;
  std::uint64_t seed = 13;
};

struct CoherencyModel {
  std::string schema = std::string(kFeatureSchema);
  std::vector<std::string> feature_names;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<double> weights;  // feature_names.size() + 1, bias last
  TrainConfig config;
  std::vector<double> train_loss;       // one entry per gradient step, before the step
  std::vector<double> validation_loss;  // one entry per epoch
  int best_epoch = 0;

  double bias() const { return weights.back(); }

  // Zero weights with identity standardization.
  static CoherencyModel zero();
};

// Logistic loss on standardized rows: mean cross-entropy + l2 * |w|^2 (bias
// not penalized). Gradient written into `grad` (same size as `params`).
double logistic_loss(const std::vector<double>& params, const std::vector<std::vector<double>>& rows,
                     const std::vector<double>& targets, double l2, std::vector<double>* grad);

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;  // constant features get 1
  static Standardizer fit(const std::vector<std::vector<double>>& rows);
  std::vector<double> apply(const std::vector<double>& row) const;
};

// Full-batch gradient descent from zero weights; validation loss checked
// after each epoch, stopping after `patience` epochs without improvement and
// returning the best-validation weights.
// Throws Error(SingleClassTraining), Error(NonFiniteLoss).
CoherencyModel train(const std::vector<FeatureVector>& train_features, const std::vector<Coherency>& train_labels,
                     const std::vector<FeatureVector>& validation_features,
                     const std::vector<Coherency>& validation_labels, const TrainConfig& config);

struct Prediction {
  double score = 0.0;
  Coherency label = Coherency::Incoherent;
};

// Throws Error(SchemaMismatch) when the model was written for another schema.
Prediction predict(const CoherencyModel& model, const FeatureVector& features);
Prediction predict(const CoherencyModel& model, const FacetSet& facets, const Query& query,
                   const EmbeddingProvider& provider);

// Batch scoring, OpenMP-parallel over records.
std::vector<Prediction> predict_records(const CoherencyModel& model, const std::vector<ClarificationRecord>& records,
                                        const EmbeddingProvider& provider);
std::vector<FeatureVector> extract_features_batch(const std::vector<ClarificationRecord>& records,
                                                  const EmbeddingProvider& provider);

namespace serial {
std::vector<Prediction> predict_records(const CoherencyModel& model, const std::vector<ClarificationRecord>& records,
                                        const EmbeddingProvider& provider);
std::vector<FeatureVector> extract_features_batch(const std::vector<ClarificationRecord>& records,
                                                  const EmbeddingProvider& provider);
}  // namespace serial

struct ClassifierEvaluation {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  // confusion[truth][predicted], index 0 = Coherent
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  std::size_t total = 0;
};

// Throws Error(EmptyTestSet).
ClassifierEvaluation evaluate_predictions(const std::vector<Coherency>& truth, const std::vector<Coherency>& predicted);
ClassifierEvaluation evaluate(const CoherencyModel& model, const std::vector<LabeledRecord>& test,
                              const EmbeddingProvider& provider);

struct PrevalenceRow {
  std::optional<std::size_t> m;  // empty for the overall row
  std::size_t records = 0;
  std::size_t incoherent = 0;
  double fraction = 0.0;
};

std::vector<PrevalenceRow> prevalence_from_predictions(const std::vector<ClarificationRecord>& records,
                                                       const std::vector<Prediction>& predictions, bool group_by_m);
std::vector<PrevalenceRow> prevalence(const CoherencyModel& model, const std::vector<ClarificationRecord>& records,
                                      const EmbeddingProvider& provider, bool group_by_m);

// Fills the per-pair coherency scores of a metric report and recomputes the
// per-M coherent fractions.
void attach_coherency(MetricReport& report, const Pairing& pairing, const CoherencyModel& model,
                      const EmbeddingProvider& provider);

// ---- files ------------------------------------------------------------------

void save_model(std::ostream& out, const CoherencyModel& model);
CoherencyModel load_model(std::istream& in);

void write_labeled_jsonl(std::ostream& out, const std::vector<LabeledRecord>& labeled);
struct LabeledParse {
  std::vector<LabeledRecord> records;
  std::vector<RowError> errors;
};
LabeledParse read_labeled_jsonl(std::istream& in);

}  // namespace facetcoh
