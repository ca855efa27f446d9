// facetcoh: command-line driver for the facet evaluation pipeline.
//
//   ingest -> evaluate
//          -> weak-label -> split -> train -> eval-classifier / predict / prevalence
//   serve -> aggregate, trinomial, subset-test
//
// Every text output starts with a '#' line holding the resolved configuration.
// Outputs are staged and renamed into --out only after the command succeeded.

#include "facetcoh/annotation.hpp"
#include "facetcoh/coherency.hpp"
#include "facetcoh/corpus.hpp"
#include "facetcoh/embedding.hpp"
#include "facetcoh/error.hpp"
#include "facetcoh/metrics.hpp"
#include "facetcoh/report.hpp"
#include "facetcoh/stats.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <sstream>
#include <thread>

using namespace facetcoh;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 13;
  std::string provider = "hashed";
  std::string out = ".";
};

std::string option_value(const CLI::Option* o) {
  if (o->get_type_size() == 0) return o->count() ? "true" : "false";
  if (o->count() == 0) return o->get_default_str();
  std::string v;
  for (const auto& r : o->results()) v += (v.empty() ? "" : ",") + r;
  return v;
}

// One line, options in declaration order; no timestamps so reruns are byte-identical.
std::string config_header(const CLI::App& app, const CLI::App& sub) {
  std::string line = "# facetcoh " + sub.get_name();
  for (const auto* scope : {&app, &sub})
    for (const CLI::Option* o : scope->get_options()) {
      if (o->get_name() == "--help" || o->get_name() == "-h,--help" || o->get_lnames().empty()) continue;
      if (o->get_lnames().front() == "help") continue;
      line += " --" + o->get_lnames().front() + "=" + option_value(o);
    }
  return line + "\n";
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  return in;
}

void warn_rows(const std::string& path, const std::vector<RowError>& errors) {
  for (const auto& e : errors) std::cerr << path << ":" << e.line << ": skipped: " << e.reason << "\n";
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// .tsv files are parsed as the clarification table, anything else as record JSONL.
std::vector<ClarificationRecord> load_records(const std::string& path) {
  auto in = open_input(path);
  auto parsed = ends_with(path, ".tsv") ? parse_clarification_tsv(in) : read_records_jsonl(in);
  warn_rows(path, parsed.errors);
  return std::move(parsed.records);
}

std::vector<LabeledRecord> load_labeled(const std::string& path) {
  auto in = open_input(path);
  auto parsed = read_labeled_jsonl(in);
  warn_rows(path, parsed.errors);
  return std::move(parsed.records);
}

CoherencyModel load_model_file(const std::string& path) {
  auto in = open_input(path);
  return load_model(in);
}

std::vector<double> load_numbers(const std::string& path) {
  auto in = open_input(path);
  std::vector<double> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(line, &used));
    } catch (const std::exception&) {
      throw Error(Errc::Parse, path + ":" + std::to_string(n) + ": not a number");
    }
  }
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- subcommands --------------------------------------------------------------

struct IngestArgs {
  std::string input, documents, generated, source = "generated", name = "records.jsonl";
};

void run_ingest(const IngestArgs& a, StagedOutputs& out, const std::string& header) {
  if (a.input.empty() && a.generated.empty()) throw Error(Errc::InvalidArgument, "ingest needs --input or --generated");
  std::vector<ClarificationRecord> records;
  if (!a.input.empty()) {
    auto in = open_input(a.input);
    auto parsed = ends_with(a.input, ".tsv") ? parse_clarification_tsv(in) : read_records_jsonl(in);
    warn_rows(a.input, parsed.errors);
    records = std::move(parsed.records);
  }
  if (!a.generated.empty()) {
    auto in = open_input(a.generated);
    auto parsed = load_generated_facets(in, a.source);
    warn_rows(a.generated, parsed.errors);
    for (auto& r : parsed.records) records.push_back(std::move(r));
  }
  if (!a.documents.empty()) {
    auto in = open_input(a.documents);
    warn_rows(a.documents, attach_documents(in, records));
  }
  std::ostringstream s;
  s << header;
  write_records_jsonl(s, records);
  out.add(a.name, s.str());
  std::cout << "ingested " << records.size() << " records\n";
}

struct EvaluateArgs {
  std::string reference, candidate, model;
};

void run_evaluate(const EvaluateArgs& a, const EmbeddingProvider& provider, StagedOutputs& out,
                  const std::string& header) {
  const auto refs = load_records(a.reference);
  const auto cands = load_records(a.candidate);
  const auto pairing = pair_records(refs, cands);
  if (pairing.pairs.empty()) throw Error(Errc::UnpairedQuery, "no query appears on both sides");
  auto report = evaluate_corpus(pairing, provider);
  if (!a.model.empty()) attach_coherency(report, pairing, load_model_file(a.model), provider);
  const auto table = metric_table_tsv(report);
  out.add("metrics_by_m.tsv", header + table);
  out.add("metric_pairs.jsonl", header + metric_pairs_jsonl(report));
  if (!report.unpaired.empty()) {
    std::string u = header;
    for (const auto& q : report.unpaired) u += q + "\n";
    out.add("unpaired.txt", u);
    std::cerr << report.unpaired.size() << " queries without a partner (see unpaired.txt)\n";
  }
  std::cout << table;
}

struct WeakLabelArgs {
  std::string input, expert;
};

void run_weak_label(const WeakLabelArgs& a, StagedOutputs& out, const std::string& header) {
  const auto records = load_records(a.input);
  std::vector<LabeledRecord> expert;
  if (!a.expert.empty()) expert = load_labeled(a.expert);

  // Structural rules first; their labels plus the expert ones feed the
  // per-question statistics used for propagation.
  std::vector<LabeledRecord> seen = expert;
  std::vector<std::optional<CoherencyLabel>> labels;
  for (const auto& r : records) {
    labels.push_back(weak_label(r));
    if (labels.back()) seen.push_back({r, *labels.back()});
  }
  const auto stats = question_coherence_stats(seen);
  std::vector<LabeledRecord> labeled = expert;
  std::map<std::string, std::size_t> counts;
  for (const auto& l : expert) ++counts[l.label.provenance_label()];
  std::size_t unlabeled = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto l = labels[i] ? labels[i] : weak_label(records[i], &stats);
    if (!l) {
      ++unlabeled;
      continue;
    }
    ++counts[l->provenance_label()];
    labeled.push_back({records[i], *l});
  }
  std::ostringstream s;
  s << header;
  write_labeled_jsonl(s, labeled);
  out.add("labeled.jsonl", s.str());
  for (const auto& [k, v] : counts) std::cout << k << "\t" << v << "\n";
  std::cout << "unlabeled\t" << unlabeled << "\n";
}

struct SplitArgs {
  std::string input;
  double train = 0.70, validation = 0.15, test = 0.15;
};

void run_split(const SplitArgs& a, std::uint64_t seed, StagedOutputs& out, const std::string& header) {
  const auto labeled = load_labeled(a.input);
  const auto assignment = stratified_split(labeled, {a.train, a.validation, a.test}, seed);
  std::map<Split, std::vector<LabeledRecord>> parts;
  for (const auto s : {Split::Train, Split::Validation, Split::Test}) parts[s];
  for (std::size_t i = 0; i < labeled.size(); ++i) parts[assignment[i]].push_back(labeled[i]);
  for (const auto& [split, records] : parts) {
    std::ostringstream s;
    s << header;
    write_labeled_jsonl(s, records);
    out.add(std::string(to_string(split)) + ".jsonl", s.str());
    std::cout << to_string(split) << "\t" << records.size() << "\n";
  }
}

struct TrainArgs {
  std::string train, validation;
  TrainConfig config;
};

std::pair<std::vector<FeatureVector>, std::vector<Coherency>> featurize(const std::vector<LabeledRecord>& labeled,
                                                                        const EmbeddingProvider& provider) {
  std::vector<ClarificationRecord> records;
  std::vector<Coherency> labels;
  for (const auto& l : labeled) {
    if (l.label.provenance == Provenance::Predicted)
      throw Error(Errc::InvalidArgument, "predicted labels cannot be used for training");
    records.push_back(l.record);
    labels.push_back(l.label.value);
  }
  return {extract_features_batch(records, provider), labels};
}

void run_train(TrainArgs a, std::uint64_t seed, const EmbeddingProvider& provider, StagedOutputs& out) {
  a.config.seed = seed;
  const auto [x, y] = featurize(load_labeled(a.train), provider);
  std::vector<FeatureVector> vx;
  std::vector<Coherency> vy;
  if (!a.validation.empty()) std::tie(vx, vy) = featurize(load_labeled(a.validation), provider);
  const auto model = train(x, y, vx, vy, a.config);
  std::ostringstream s;
  save_model(s, model);
  out.add("model.json", s.str());
  std::cout << "best epoch " << model.best_epoch << ", validation loss "
            << fmt("%.6f", model.validation_loss.at(static_cast<std::size_t>(model.best_epoch - 1))) << "\n";
}

void run_eval_classifier(const std::string& model_path, const std::string& test_path,
                         const EmbeddingProvider& provider, StagedOutputs& out, const std::string& header) {
  const auto e = evaluate(load_model_file(model_path), load_labeled(test_path), provider);
  std::string t = header;
  t += "records\t" + std::to_string(e.total) + "\n";
  t += "accuracy\t" + fmt("%.6f", e.accuracy) + "\n";
  t += "macro_f1\t" + fmt("%.6f", e.macro_f1) + "\n";
  t += "truth\\predicted\tcoherent\tincoherent\n";
  t += "coherent\t" + std::to_string(e.confusion[0][0]) + "\t" + std::to_string(e.confusion[0][1]) + "\n";
  t += "incoherent\t" + std::to_string(e.confusion[1][0]) + "\t" + std::to_string(e.confusion[1][1]) + "\n";
  out.add("classifier_eval.tsv", t);
  std::cout << t.substr(header.size());
}

void run_predict(const std::string& model_path, const std::string& input, const EmbeddingProvider& provider,
                 StagedOutputs& out, const std::string& header) {
  const auto records = load_records(input);
  const auto preds = predict_records(load_model_file(model_path), records, provider);
  std::string s = header;
  std::size_t incoherent = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    incoherent += preds[i].label == Coherency::Incoherent;
    s += json{{"query", records[i].query.text()},
              {"query_id", records[i].query.id()},
              {"source", records[i].source.label()},
              {"m", records[i].facets.size()},
              {"score", preds[i].score},
              {"label", std::string(to_string(preds[i].label))}}
             .dump() +
         "\n";
  }
  out.add("predictions.jsonl", s);
  std::cout << records.size() << " records, " << incoherent << " incoherent\n";
}

void run_prevalence(const std::string& model_path, const std::string& input, bool group_by_m,
                    const EmbeddingProvider& provider, StagedOutputs& out, const std::string& header) {
  const auto rows = prevalence(load_model_file(model_path), load_records(input), provider, group_by_m);
  const auto table = prevalence_table_tsv(rows);
  out.add("prevalence.tsv", header + table);
  std::cout << table;
}

struct TrinomialArgs {
  std::size_t wins = 0, ties = 0, losses = 0;
  std::string criterion = "quality";
  double alpha = 0.01;
};

void run_trinomial(const TrinomialArgs& a, StagedOutputs& out, const std::string& header) {
  const PairwiseCounts counts{a.wins, a.ties, a.losses, criterion_from_string(a.criterion)};
  const auto table = format_pairwise_table({{counts, trinomial_pvalue(counts)}}, a.alpha);
  out.add("trinomial.txt", header + table);
  std::cout << table;
}

struct SubsetArgs {
  std::string a, b;
  std::size_t permutations = 10000;
};

void run_subset_test(const SubsetArgs& a, std::uint64_t seed, StagedOutputs& out, const std::string& header) {
  const auto xa = load_numbers(a.a);
  const auto xb = load_numbers(a.b);
  const auto r = subset_significance(xa, xb, a.permutations, seed);
  std::string t = header;
  t += "n_a\tn_b\tmean_a\tmean_b\tpermutations\textreme\tp_value\n";
  t += std::to_string(xa.size()) + "\t" + std::to_string(xb.size()) + "\t" + fmt("%.6f", r.mean_a) + "\t" +
       fmt("%.6f", r.mean_b) + "\t" + std::to_string(r.permutations) + "\t" + std::to_string(r.extreme) + "\t" +
       fmt("%.6g", r.p_value) + "\n";
  out.add("subset_test.tsv", t);
  std::cout << t.substr(header.size());
}

void run_aggregate(const std::vector<std::string>& exports, double alpha, StagedOutputs& out,
                   const std::string& header) {
  std::vector<PairwiseReportRow> rows;
  std::string incomplete;
  for (const auto& path : exports) {
    auto in = open_input(path);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto ex = export_from_json(text);
    const auto agg = aggregate_pairwise(to_task_judgments(ex), ex.criterion);
    for (const auto& t : agg.incomplete) incomplete += std::string(to_string(ex.criterion)) + "\t" + t + "\n";
    if (agg.counts.n() == 0) throw Error(Errc::ZeroN, path + " has no complete tasks");
    rows.push_back({agg.counts, trinomial_pvalue(agg.counts)});
  }
  std::string counts = "criterion\ta_wins\tties\tb_wins\n";
  for (const auto& r : rows)
    counts += std::string(to_string(r.counts.criterion)) + "\t" + std::to_string(r.counts.wins_a) + "\t" +
              std::to_string(r.counts.ties) + "\t" + std::to_string(r.counts.wins_b) + "\n";
  const auto table = format_pairwise_table(rows, alpha);
  out.add("pairwise_counts.tsv", header + counts);
  out.add("pairwise.txt", header + table);
  if (!incomplete.empty()) {
    out.add("incomplete_tasks.tsv", header + incomplete);
    std::cerr << "some tasks lack two judgments (see incomplete_tasks.tsv)\n";
  }
  std::cout << table;
}

struct ServeArgs {
  std::string reference, candidate, gold, log, host = "127.0.0.1";
  int port = 8080;
  std::size_t judgments_per_task = 2;
  double threshold = 0.8;
};

int run_serve(const ServeArgs& a, const Globals& g) {
  const auto refs = load_records(a.reference);
  const auto cands = load_records(a.candidate);
  const auto items = comparison_items(pair_records(refs, cands));
  std::vector<GoldItem> gold;
  if (!a.gold.empty()) {
    auto in = open_input(a.gold);
    gold = read_gold_jsonl(in);
  }
  ServiceConfig config{g.seed, a.judgments_per_task, a.threshold,
                       a.log.empty() ? (std::filesystem::path(g.out) / "judgments.jsonl").string() : a.log};
  AnnotationStore store(items, gold, config);
  AnnotationServer server(store);

  // Block the stop signals in every thread; one waiter turns them into stop().
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });

  int port = a.port;
  if (port == 0 && (port = server.bind_any(a.host)) <= 0) {
    std::cerr << "facetcoh serve: error: cannot bind " << a.host << "\n";
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return 2;
  }
  std::cerr << "listening on " << a.host << ":" << port << " (" << items.size() << " tasks, log " << config.log_path
            << ")" << std::endl;
  const bool ok = a.port == 0 ? server.listen_after_bind() : server.listen(a.host, port);
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  if (!ok) {
    std::cerr << "facetcoh serve: error: cannot serve on " << a.host << ":" << port << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Facet set evaluation and coherency toolkit", "facetcoh"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "random seed for splits, training, permutations and task order");
  app.add_option("--provider", g.provider, "embedding provider: hashed | http:<url>");
  app.add_option("--out", g.out, "output directory");

  IngestArgs ingest;
  auto* s_ingest = app.add_subcommand("ingest", "parse a corpus into record JSONL");
  s_ingest->add_option("--input", ingest.input, "clarification TSV (or record JSONL)");
  s_ingest->add_option("--generated", ingest.generated, "generated facets JSONL {query, facets}");
  s_ingest->add_option("--source", ingest.source, "provider name for --generated");
  s_ingest->add_option("--documents", ingest.documents, "documents JSONL {query, documents}");
  s_ingest->add_option("--name", ingest.name, "output file name");

  EvaluateArgs evaluate_args;
  auto* s_evaluate = app.add_subcommand("evaluate", "Set BLEU, METEOR and semantic F1 per reference size");
  s_evaluate->add_option("--reference", evaluate_args.reference, "ground-truth records")->required();
  s_evaluate->add_option("--candidate", evaluate_args.candidate, "generated records")->required();
  s_evaluate->add_option("--model", evaluate_args.model, "coherency model for the coherency columns");

  WeakLabelArgs weak;
  auto* s_weak = app.add_subcommand("weak-label", "label records with the weak coherency rules");
  s_weak->add_option("--input", weak.input, "records")->required();
  s_weak->add_option("--expert", weak.expert, "expert-labeled JSONL, kept and used for propagation");

  SplitArgs split_args;
  auto* s_split = app.add_subcommand("split", "stratified train/validation/test split");
  s_split->add_option("--input", split_args.input, "labeled JSONL")->required();
  s_split->add_option("--train", split_args.train);
  s_split->add_option("--validation", split_args.validation);
  s_split->add_option("--test", split_args.test);

  TrainArgs train_args;
  auto* s_train = app.add_subcommand("train", "fit the coherency classifier");
  s_train->add_option("--train", train_args.train, "labeled JSONL")->required();
  s_train->add_option("--validation", train_args.validation, "labeled JSONL for early stopping");
  s_train->add_option("--lr", train_args.config.learning_rate);
  s_train->add_option("--epochs", train_args.config.epochs);
  s_train->add_option("--patience", train_args.config.patience);
  s_train->add_option("--steps-per-epoch", train_args.config.steps_per_epoch);
  s_train->add_option("--l2", train_args.config.l2);

  std::string model_path, test_path, input_path;
  auto* s_evalc = app.add_subcommand("eval-classifier", "accuracy and macro F1 on a labeled test set");
  s_evalc->add_option("--model", model_path)->required();
  s_evalc->add_option("--test", test_path)->required();

  auto* s_predict = app.add_subcommand("predict", "score records with a coherency model");
  s_predict->add_option("--model", model_path)->required();
  s_predict->add_option("--input", input_path)->required();

  bool group_by_m = false;
  auto* s_prev = app.add_subcommand("prevalence", "fraction of incoherent facet sets");
  s_prev->add_option("--model", model_path)->required();
  s_prev->add_option("--input", input_path)->required();
  s_prev->add_flag("--group-by-m", group_by_m, "one row per number of facets");

  TrinomialArgs tri;
  auto* s_tri = app.add_subcommand("trinomial", "trinomial test on win/tie/loss counts");
  s_tri->add_option("--wins", tri.wins, "wins of the ground-truth side")->required();
  s_tri->add_option("--ties", tri.ties)->required();
  s_tri->add_option("--losses", tri.losses)->required();
  s_tri->add_option("--criterion", tri.criterion)->check(CLI::IsMember({"quality", "coherency"}));
  s_tri->add_option("--alpha", tri.alpha);

  SubsetArgs subset;
  auto* s_subset = app.add_subcommand("subset-test", "permutation test on two samples (one number per line)");
  s_subset->add_option("--a", subset.a)->required();
  s_subset->add_option("--b", subset.b)->required();
  s_subset->add_option("--permutations", subset.permutations);

  std::vector<std::string> exports;
  double aggregate_alpha = 0.01;
  auto* s_agg = app.add_subcommand("aggregate", "annotation export(s) to win/tie/loss counts and tests");
  s_agg->add_option("--export", exports, "export JSON, repeatable")->required();
  s_agg->add_option("--alpha", aggregate_alpha);

  ServeArgs serve;
  auto* s_serve = app.add_subcommand("serve", "run the annotation service");
  s_serve->add_option("--reference", serve.reference)->required();
  s_serve->add_option("--candidate", serve.candidate)->required();
  s_serve->add_option("--gold", serve.gold, "qualification gold set JSONL");
  s_serve->add_option("--log", serve.log, "judgment log (default <out>/judgments.jsonl)");
  s_serve->add_option("--host", serve.host);
  s_serve->add_option("--port", serve.port, "0 picks a free port");
  s_serve->add_option("--judgments-per-task", serve.judgments_per_task);
  s_serve->add_option("--threshold", serve.threshold, "qualification accuracy needed");

  if (argc < 2) {
    std::cerr << app.help();
    return 1;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // A stray word where a subcommand should be.
    if (app.get_subcommands().empty() && !app.remaining().empty() && e.get_name() != "CallForHelp") {
      std::cerr << "facetcoh: error: " << errc_name(Errc::UnknownSubcommand) << ": " << app.remaining().front()
                << "\n"
                << app.help();
      return 2;
    }
    return app.exit(e);
  }

  const CLI::App* sub = app.get_subcommands().front();
  const std::string header = config_header(app, *sub);
  try {
    if (sub == s_serve) return run_serve(serve, g);

    StagedOutputs out(g.out);
    const auto provider = make_provider(g.provider);
    if (sub == s_ingest) run_ingest(ingest, out, header);
    else if (sub == s_evaluate) run_evaluate(evaluate_args, *provider, out, header);
    else if (sub == s_weak) run_weak_label(weak, out, header);
    else if (sub == s_split) run_split(split_args, g.seed, out, header);
    else if (sub == s_train) run_train(train_args, g.seed, *provider, out);
    else if (sub == s_evalc) run_eval_classifier(model_path, test_path, *provider, out, header);
    else if (sub == s_predict) run_predict(model_path, input_path, *provider, out, header);
    else if (sub == s_prev) run_prevalence(model_path, input_path, group_by_m, *provider, out, header);
    else if (sub == s_tri) run_trinomial(tri, out, header);
    else if (sub == s_subset) run_subset_test(subset, g.seed, out, header);
    else if (sub == s_agg) run_aggregate(exports, aggregate_alpha, out, header);
    out.commit();
  } catch (const Error& e) {
    std::cerr << "facetcoh " << sub->get_name() << ": error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "facetcoh " << sub->get_name() << ": error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
