#include "facetcoh/coherency.hpp"

#include "facetcoh/error.hpp"
#include "facetcoh/text.hpp"

#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <tuple>

namespace facetcoh {

using nlohmann::json;

std::string_view to_string(Coherency c) { return c == Coherency::Coherent ? "coherent" : "incoherent"; }

std::string CoherencyLabel::provenance_label() const {
  switch (provenance) {
    case Provenance::Expert: return "expert";
    case Provenance::WeakRule: return "weak:" + rule;
    case Provenance::Propagated: return "propagated";
    case Provenance::Predicted: return "predicted";
  }
  return "expert";
}

// ---- weak supervision -------------------------------------------------------

std::map<std::string, double> question_coherence_stats(const std::vector<LabeledRecord>& labeled) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // coherent, total
  for (const auto& l : labeled) {
    if (l.label.provenance == Provenance::Predicted) continue;
    auto& c = counts[normalize_facet(l.record.question)];
    if (l.label.value == Coherency::Coherent) ++c.first;
    ++c.second;
  }
  std::map<std::string, double> out;
  for (const auto& [q, c] : counts) out[q] = static_cast<double>(c.first) / static_cast<double>(c.second);
  return out;
}

namespace {
// Token-level containment: "car" is not inside "scar sales", "gift ideas" is inside "Gift ideas!".
bool contains_query(const Facet& facet, const Query& query) {
  const auto q = join(tokenize(query.text()), " ");
  if (q.empty()) return false;
  return (" " + join(facet.terms(), " ") + " ").find(" " + q + " ") != std::string::npos;
}
}  // namespace

std::optional<CoherencyLabel> weak_label(const ClarificationRecord& record,
                                         const std::map<std::string, double>* question_stats) {
  const auto& facets = record.facets;
  for (std::size_t i = 1; i < facets.size(); ++i) {
    // Canonical order sorts by normalized text, so equal forms are adjacent.
    if (facets[i].normalized() == facets[i - 1].normalized())
      return CoherencyLabel{Coherency::Incoherent, Provenance::WeakRule, "dup"};
  }
  for (const auto& f : facets) {
    if (contains_query(f, record.query))
      return CoherencyLabel{Coherency::Incoherent, Provenance::WeakRule, "query-containment"};
  }
  if (question_stats) {
    const auto it = question_stats->find(normalize_facet(record.question));
    if (it != question_stats->end() && it->second > kPropagationThreshold)
      return CoherencyLabel{Coherency::Coherent, Provenance::Propagated, {}};
  }
  return std::nullopt;
}

// ---- features ---------------------------------------------------------------

namespace {

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

template <typename Key>
double modal_fraction(const std::vector<Key>& keys) {
  std::map<Key, std::size_t> counts;
  std::size_t top = 0;
  for (const auto& k : keys) top = std::max(top, ++counts[k]);
  return static_cast<double>(top) / static_cast<double>(keys.size());
}

}  // namespace

FeatureVector extract_features(const FacetSet& facets, const Query& query, const EmbeddingProvider& provider) {
  FeatureVector fv;
  const std::size_t m = facets.size();
  if (m == 0) throw Error(Errc::EmptySet, "cannot extract features of an empty facet set");

  const auto query_terms = tokenize(query.text());
  const std::set<std::string> query_vocab(query_terms.begin(), query_terms.end());

  bool dup = false;
  for (std::size_t i = 1; i < m; ++i) dup = dup || facets[i].normalized() == facets[i - 1].normalized();
  bool contains = false;
  for (const auto& f : facets) contains = contains || contains_query(f, query);
  fv.values[0] = dup ? 1.0 : 0.0;
  fv.values[1] = contains ? 1.0 : 0.0;

  double mean_len = 0.0;
  for (const auto& f : facets) mean_len += static_cast<double>(f.length());
  mean_len /= static_cast<double>(m);
  double var = 0.0;
  for (const auto& f : facets) var += std::pow(static_cast<double>(f.length()) - mean_len, 2.0);
  var /= static_cast<double>(m);
  fv.values[2] = std::sqrt(var) / mean_len;

  // Facet embedding: re-normalized mean of its token embeddings.
  std::vector<Vector> facet_vecs;
  facet_vecs.reserve(m);
  for (const auto& f : facets) {
    const auto token_vecs = provider.embed_batch(f.terms());
    Vector v(token_vecs.front().size(), 0.0);
    for (const auto& tv : token_vecs)
      for (std::size_t d = 0; d < v.size(); ++d) v[d] += tv[d];
    l2_normalize(v);
    facet_vecs.push_back(std::move(v));
  }

  using Pattern = std::tuple<bool, bool, bool, std::size_t>;
  std::vector<Pattern> patterns;
  std::vector<std::string> heads;
  for (const auto& f : facets) {
    const auto& t = f.terms();
    const bool digit = std::any_of(f.raw().begin(), f.raw().end(), [](char c) { return c >= '0' && c <= '9'; });
    patterns.emplace_back(query_vocab.contains(t.front()), query_vocab.contains(t.back()), digit,
                          std::min<std::size_t>(t.size(), 3));
    heads.push_back(t.back());
  }
  fv.values[5] = modal_fraction(patterns);
  fv.values[7] = modal_fraction(heads);

  if (m == 1) {
    fv.values[3] = 1.0;
    fv.values[4] = 1.0;
    fv.values[6] = 1.0;
    return fv;
  }
  double cos_sum = 0.0;
  double cos_min = 1.0;
  double jac_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double c = cosine(facet_vecs[i], facet_vecs[j]);
      cos_sum += c;
      cos_min = std::min(cos_min, c);
      jac_sum += jaccard(facets[i].terms(), facets[j].terms());
      ++pairs;
    }
  }
  fv.values[3] = cos_sum / static_cast<double>(pairs);
  fv.values[4] = cos_min;
  fv.values[6] = jac_sum / static_cast<double>(pairs);
  return fv;
}

// ---- split ------------------------------------------------------------------

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_string(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "validation") return Split::Validation;
  if (s == "test") return Split::Test;
  throw Error(Errc::Parse, "unknown split '" + std::string(s) + "'");
}

namespace {

// Unbiased draw in [0, bound) from a standardized engine; std::uniform_int_distribution
// differs between standard libraries.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % bound;
}

template <typename T>
void fisher_yates(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace

SplitAssignment stratified_split(const std::vector<LabeledRecord>& records, const SplitRatios& ratios,
                                 std::uint64_t seed) {
  const std::array<double, 3> ratio = {ratios.train, ratios.validation, ratios.test};
  if (std::any_of(ratio.begin(), ratio.end(), [](double r) { return !(r >= 0.0); }) ||
      std::abs(ratio[0] + ratio[1] + ratio[2] - 1.0) > 1e-9)
    throw Error(Errc::InvalidArgument, "split ratios must be non-negative and sum to 1");
  for (const auto& r : records)
    if (r.label.provenance == Provenance::Predicted)
      throw Error(Errc::InvalidArgument, "predicted labels cannot be split into training data");

  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < records.size(); ++i)
    by_class[records[i].label.value == Coherency::Coherent ? 0 : 1].push_back(i);
  if (by_class[0].empty() || by_class[1].empty())
    throw Error(Errc::EmptyClass, "stratified split needs at least one record of each class");

  SplitAssignment out(records.size(), Split::Train);
  std::mt19937_64 rng(seed);
  for (auto& members : by_class) {
    fisher_yates(members, rng);
    const double n = static_cast<double>(members.size());
    std::array<std::size_t, 3> count{};
    std::array<double, 3> frac{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const double exact = ratio[s] * n;
      count[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      frac[s] = exact - static_cast<double>(count[s]);
      assigned += count[s];
    }
    std::array<std::size_t, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b] + 1e-9; });
    for (std::size_t k = 0; assigned < members.size(); ++k, ++assigned) ++count[order[k % 3]];

    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t c = 0; c < count[s]; ++c) out[members[pos++]] = static_cast<Split>(s);
  }
  return out;
}

// ---- model ------------------------------------------------------------------

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double linear(const std::vector<double>& params, const std::vector<double>& row) {
  double z = params.back();
  for (std::size_t k = 0; k < row.size(); ++k) z += params[k] * row[k];
  return z;
}

std::vector<double> as_row(const FeatureVector& fv) { return {fv.values.begin(), fv.values.end()}; }

double target(Coherency c) { return c == Coherency::Coherent ? 1.0 : 0.0; }

}  // namespace

CoherencyModel CoherencyModel::zero() {
  CoherencyModel m;
  m.feature_names.assign(kFeatureNames.begin(), kFeatureNames.end());
  m.mean.assign(kFeatureCount, 0.0);
  m.stddev.assign(kFeatureCount, 1.0);
  m.weights.assign(kFeatureCount + 1, 0.0);
  return m;
}

double logistic_loss(const std::vector<double>& params, const std::vector<std::vector<double>>& rows,
                     const std::vector<double>& targets, double l2, std::vector<double>* grad) {
  const std::size_t dim = params.size() - 1;
  if (grad) grad->assign(params.size(), 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double z = linear(params, rows[i]);
    loss += softplus(z) - targets[i] * z;
    if (grad) {
      const double residual = sigmoid(z) - targets[i];
      for (std::size_t k = 0; k < dim; ++k) (*grad)[k] += residual * rows[i][k];
      (*grad)[dim] += residual;
    }
  }
  const double n = static_cast<double>(rows.size());
  loss /= n;
  double penalty = 0.0;
  for (std::size_t k = 0; k < dim; ++k) penalty += params[k] * params[k];
  loss += l2 * penalty;
  if (grad) {
    for (auto& g : *grad) g /= n;
    for (std::size_t k = 0; k < dim; ++k) (*grad)[k] += 2.0 * l2 * params[k];
  }
  return loss;
}

Standardizer Standardizer::fit(const std::vector<std::vector<double>>& rows) {
  Standardizer s;
  if (rows.empty()) return s;
  const std::size_t dim = rows.front().size();
  const double n = static_cast<double>(rows.size());
  s.mean.assign(dim, 0.0);
  s.stddev.assign(dim, 0.0);
  for (const auto& r : rows)
    for (std::size_t k = 0; k < dim; ++k) s.mean[k] += r[k];
  for (auto& m : s.mean) m /= n;
  for (const auto& r : rows)
    for (std::size_t k = 0; k < dim; ++k) s.stddev[k] += (r[k] - s.mean[k]) * (r[k] - s.mean[k]);
  for (auto& v : s.stddev) {
    v = std::sqrt(v / n);
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

std::vector<double> Standardizer::apply(const std::vector<double>& row) const {
  std::vector<double> out(row.size());
  for (std::size_t k = 0; k < row.size(); ++k) out[k] = (row[k] - mean[k]) / stddev[k];
  return out;
}

CoherencyModel train(const std::vector<FeatureVector>& train_features, const std::vector<Coherency>& train_labels,
                     const std::vector<FeatureVector>& validation_features,
                     const std::vector<Coherency>& validation_labels, const TrainConfig& config) {
  if (train_features.size() != train_labels.size() || validation_features.size() != validation_labels.size())
    throw Error(Errc::InvalidArgument, "feature and label counts differ");
  const auto coherent = std::count(train_labels.begin(), train_labels.end(), Coherency::Coherent);
  if (coherent == 0 || coherent == static_cast<std::ptrdiff_t>(train_labels.size()))
    throw Error(Errc::SingleClassTraining, "training data must contain both classes");
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate) || config.epochs < 1 ||
      config.steps_per_epoch < 1 || config.patience < 1 || !(config.l2 >= 0.0))
    throw Error(Errc::InvalidArgument, "invalid training configuration");

  std::vector<std::vector<double>> raw;
  for (const auto& f : train_features) raw.push_back(as_row(f));
  const auto standardizer = Standardizer::fit(raw);
  std::vector<std::vector<double>> rows;
  for (const auto& r : raw) rows.push_back(standardizer.apply(r));
  std::vector<double> targets;
  for (const auto c : train_labels) targets.push_back(target(c));

  std::vector<std::vector<double>> val_rows;
  for (const auto& f : validation_features) val_rows.push_back(standardizer.apply(as_row(f)));
  std::vector<double> val_targets;
  for (const auto c : validation_labels) val_targets.push_back(target(c));

  CoherencyModel model = CoherencyModel::zero();
  model.mean = standardizer.mean;
  model.stddev = standardizer.stddev;
  model.config = config;

  std::vector<double> params(kFeatureCount + 1, 0.0);
  std::vector<double> grad;
  std::vector<double> best = params;
  double best_loss = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (int step = 0; step < config.steps_per_epoch; ++step) {
      const double loss = logistic_loss(params, rows, targets, config.l2, &grad);
      if (!std::isfinite(loss)) throw Error(Errc::NonFiniteLoss, "training loss diverged at epoch " + std::to_string(epoch));
      model.train_loss.push_back(loss);
      for (std::size_t k = 0; k < params.size(); ++k) params[k] -= config.learning_rate * grad[k];
    }
    const double val = val_rows.empty() ? logistic_loss(params, rows, targets, 0.0, nullptr)
                                        : logistic_loss(params, val_rows, val_targets, 0.0, nullptr);
    if (!std::isfinite(val)) throw Error(Errc::NonFiniteLoss, "validation loss diverged at epoch " + std::to_string(epoch));
    model.validation_loss.push_back(val);
    if (val < best_loss) {
      best_loss = val;
      best = params;
      model.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  model.weights = best;
  return model;
}

Prediction predict(const CoherencyModel& model, const FeatureVector& features) {
  if (model.schema != kFeatureSchema || model.weights.size() != kFeatureCount + 1)
    throw Error(Errc::SchemaMismatch, "model schema '" + model.schema + "' does not match '" +
                                          std::string(kFeatureSchema) + "'");
  double z = model.weights.back();
  for (std::size_t k = 0; k < kFeatureCount; ++k)
    z += model.weights[k] * ((features.values[k] - model.mean[k]) / model.stddev[k]);
  Prediction p;
  p.score = sigmoid(z);
  p.label = p.score > 0.5 ? Coherency::Coherent : Coherency::Incoherent;
  return p;
}

Prediction predict(const CoherencyModel& model, const FacetSet& facets, const Query& query,
                   const EmbeddingProvider& provider) {
  return predict(model, extract_features(facets, query, provider));
}

std::vector<FeatureVector> extract_features_batch(const std::vector<ClarificationRecord>& records,
                                                  const EmbeddingProvider& provider) {
  std::vector<FeatureVector> out(records.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto& r = records[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(i)] = extract_features(r.facets, r.query, provider);
    } catch (...) {
#pragma omp critical(facetcoh_feature_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<Prediction> predict_records(const CoherencyModel& model, const std::vector<ClarificationRecord>& records,
                                        const EmbeddingProvider& provider) {
  const auto features = extract_features_batch(records, provider);
  std::vector<Prediction> out(records.size());
  const auto n = static_cast<std::ptrdiff_t>(records.size());
  // predict() only throws on schema mismatch, which is uniform across rows.
  if (n > 0) predict(model, features.front());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = predict(model, features[static_cast<std::size_t>(i)]);
  return out;
}

namespace serial {

std::vector<FeatureVector> extract_features_batch(const std::vector<ClarificationRecord>& records,
                                                  const EmbeddingProvider& provider) {
  std::vector<FeatureVector> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(extract_features(r.facets, r.query, provider));
  return out;
}

std::vector<Prediction> predict_records(const CoherencyModel& model, const std::vector<ClarificationRecord>& records,
                                        const EmbeddingProvider& provider) {
  std::vector<Prediction> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(predict(model, r.facets, r.query, provider));
  return out;
}

}  // namespace serial

ClassifierEvaluation evaluate_predictions(const std::vector<Coherency>& truth, const std::vector<Coherency>& predicted) {
  if (truth.empty()) throw Error(Errc::EmptyTestSet, "no test records");
  if (truth.size() != predicted.size()) throw Error(Errc::InvalidArgument, "truth and prediction counts differ");
  ClassifierEvaluation ev;
  ev.total = truth.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = truth[i] == Coherency::Coherent ? 0 : 1;
    const auto p = predicted[i] == Coherency::Coherent ? 0 : 1;
    ++ev.confusion[t][p];
    if (t == p) ++correct;
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(ev.total);
  double f1_sum = 0.0;
  for (int c = 0; c < 2; ++c) {
    const double tp = static_cast<double>(ev.confusion[c][c]);
    const double fp = static_cast<double>(ev.confusion[1 - c][c]);
    const double fn = static_cast<double>(ev.confusion[c][1 - c]);
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    f1_sum += precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  ev.macro_f1 = f1_sum / 2.0;
  return ev;
}

ClassifierEvaluation evaluate(const CoherencyModel& model, const std::vector<LabeledRecord>& test,
                              const EmbeddingProvider& provider) {
  if (test.empty()) throw Error(Errc::EmptyTestSet, "no test records");
  std::vector<ClarificationRecord> records;
  std::vector<Coherency> truth;
  for (const auto& t : test) {
    if (t.label.provenance == Provenance::Predicted)
      throw Error(Errc::InvalidArgument, "test records must not carry predicted labels");
    records.push_back(t.record);
    truth.push_back(t.label.value);
  }
  const auto preds = predict_records(model, records, provider);
  std::vector<Coherency> predicted;
  for (const auto& p : preds) predicted.push_back(p.label);
  return evaluate_predictions(truth, predicted);
}

std::vector<PrevalenceRow> prevalence_from_predictions(const std::vector<ClarificationRecord>& records,
                                                       const std::vector<Prediction>& predictions, bool group_by_m) {
  if (records.empty()) throw Error(Errc::EmptyInput, "no records");
  std::map<std::size_t, PrevalenceRow> groups;
  PrevalenceRow overall;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const bool incoherent = predictions.at(i).label == Coherency::Incoherent;
    auto& g = groups[records[i].facets.size()];
    g.m = records[i].facets.size();
    ++g.records;
    ++overall.records;
    if (incoherent) {
      ++g.incoherent;
      ++overall.incoherent;
    }
  }
  std::vector<PrevalenceRow> out;
  if (group_by_m) {
    for (auto& [m, g] : groups) out.push_back(g);
  } else {
    out.push_back(overall);
  }
  for (auto& r : out) r.fraction = static_cast<double>(r.incoherent) / static_cast<double>(r.records);
  return out;
}

std::vector<PrevalenceRow> prevalence(const CoherencyModel& model, const std::vector<ClarificationRecord>& records,
                                      const EmbeddingProvider& provider, bool group_by_m) {
  return prevalence_from_predictions(records, predict_records(model, records, provider), group_by_m);
}

void attach_coherency(MetricReport& report, const Pairing& pairing, const CoherencyModel& model,
                      const EmbeddingProvider& provider) {
  std::vector<ClarificationRecord> refs;
  std::vector<ClarificationRecord> cands;
  for (const auto& p : pairing.pairs) {
    refs.push_back(*p.reference);
    cands.push_back(*p.candidate);
  }
  const auto ref_pred = predict_records(model, refs, provider);
  const auto cand_pred = predict_records(model, cands, provider);
  for (auto& pm : report.pairs) {
    pm.reference_coherency = ref_pred.at(pm.pair_index).score;
    pm.candidate_coherency = cand_pred.at(pm.pair_index).score;
  }
  report.by_m = aggregate_by_m(report.pairs);
}

// ---- files ------------------------------------------------------------------

void save_model(std::ostream& out, const CoherencyModel& model) {
  json j;
  j["schema"] = model.schema;
  j["features"] = model.feature_names;
  j["mean"] = model.mean;
  j["stddev"] = model.stddev;
  j["weights"] = std::vector<double>(model.weights.begin(), model.weights.end() - 1);
  j["bias"] = model.bias();
  j["training"] = {
      {"seed", model.config.seed},
      {"epochs", model.config.epochs},
      {"patience", model.config.patience},
      {"steps_per_epoch", model.config.steps_per_epoch},
      {"learning_rate", model.config.learning_rate},
      {"l2", model.config.l2},
      {"best_epoch", model.best_epoch},
      {"train_loss", model.train_loss},
      {"validation_loss", model.validation_loss},
  };
  out << j.dump(2) << '\n';
}

CoherencyModel load_model(std::istream& in) {
  CoherencyModel m;
  try {
    const json j = json::parse(in);
    m.schema = j.at("schema").get<std::string>();
    if (m.schema != kFeatureSchema)
      throw Error(Errc::SchemaMismatch, "model schema '" + m.schema + "' is not " + std::string(kFeatureSchema));
    m.feature_names = j.at("features").get<std::vector<std::string>>();
    m.mean = j.at("mean").get<std::vector<double>>();
    m.stddev = j.at("stddev").get<std::vector<double>>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.weights.push_back(j.at("bias").get<double>());
    const auto& t = j.at("training");
    m.config.seed = t.at("seed").get<std::uint64_t>();
    m.config.epochs = t.at("epochs").get<int>();
    m.config.patience = t.at("patience").get<int>();
    m.config.steps_per_epoch = t.at("steps_per_epoch").get<int>();
    m.config.learning_rate = t.at("learning_rate").get<double>();
    m.config.l2 = t.at("l2").get<double>();
    m.best_epoch = t.at("best_epoch").get<int>();
    m.train_loss = t.at("train_loss").get<std::vector<double>>();
    m.validation_loss = t.at("validation_loss").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw Error(Errc::Parse, std::string("malformed model file: ") + e.what());
  }
  if (m.feature_names != std::vector<std::string>(kFeatureNames.begin(), kFeatureNames.end()))
    throw Error(Errc::SchemaMismatch, "model feature names do not match the extractor");
  if (m.mean.size() != kFeatureCount || m.stddev.size() != kFeatureCount || m.weights.size() != kFeatureCount + 1)
    throw Error(Errc::Parse, "model vectors have the wrong length");
  if (std::any_of(m.stddev.begin(), m.stddev.end(), [](double s) { return !(s > 0.0); }))
    throw Error(Errc::Parse, "model standard deviations must be positive");
  return m;
}

void write_labeled_jsonl(std::ostream& out, const std::vector<LabeledRecord>& labeled) {
  for (const auto& l : labeled) {
    json j;
    j["query"] = l.record.query.text();
    j["question"] = l.record.question;
    j["facets"] = l.record.facets.raw_texts();
    j["label"] = std::string(to_string(l.label.value));
    j["provenance"] = l.label.provenance_label();
    j["source"] = l.record.source.label();
    out << j.dump() << '\n';
  }
}

namespace {

CoherencyLabel parse_label(const std::string& value, const std::string& provenance) {
  CoherencyLabel l;
  if (value == "coherent") l.value = Coherency::Coherent;
  else if (value == "incoherent") l.value = Coherency::Incoherent;
  else throw Error(Errc::Parse, "label must be coherent or incoherent, got '" + value + "'");

  constexpr std::string_view weak = "weak:";
  if (provenance == "expert") l.provenance = Provenance::Expert;
  else if (provenance == "propagated") l.provenance = Provenance::Propagated;
  else if (provenance == "predicted") l.provenance = Provenance::Predicted;
  else if (provenance.rfind(weak, 0) == 0 && provenance.size() > weak.size()) {
    l.provenance = Provenance::WeakRule;
    l.rule = provenance.substr(weak.size());
  } else {
    throw Error(Errc::Parse, "unknown provenance '" + provenance + "'");
  }
  return l;
}

}  // namespace

LabeledParse read_labeled_jsonl(std::istream& in) {
  LabeledParse result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line.front() == '#') continue;
    try {
      const json j = json::parse(line);
      const auto facets = j.at("facets").get<std::vector<std::string>>();
      if (facets.empty()) throw Error(Errc::EmptySet, "facet list is empty");
      Source source = Source::ground_truth();
      const auto src = j.value("source", std::string("ground_truth"));
      if (src.rfind("generated:", 0) == 0) source = Source::generated(src.substr(10));
      ClarificationRecord r{Query(j.at("query").get<std::string>()), j.value("question", std::string()),
                            FacetSet::from_texts(facets), std::nullopt, source};
      result.records.push_back(
          {std::move(r), parse_label(j.at("label").get<std::string>(), j.value("provenance", std::string("expert")))});
    } catch (const json::exception& e) {
      result.errors.push_back({line_no, std::string("Parse: ") + e.what()});
    } catch (const Error& e) {
      result.errors.push_back({line_no, e.what()});
    }
  }
  return result;
}

}  // namespace facetcoh
