#pragma once

#include "facetcoh/corpus.hpp"
#include "facetcoh/stats.hpp"

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace facetcoh {

enum class Choice { Left, Right };
std::string_view to_string(Choice c);
Choice choice_from_string(std::string_view s);

enum class Qualification { Unqualified, Qualified, Rejected };
std::string_view to_string(Qualification q);

struct Annotator {
  std::string id;
  Qualification qualification = Qualification::Unqualified;
  double score = 0.0;
};

// One ground-truth / generated pair to be compared.
struct ComparisonItem {
  std::string task_id;
  std::string query;
  std::vector<std::string> ground_truth;
  std::vector<std::string> generated;
};

// Builds items from paired records; ids are t0001, t0002, ... in pairing order.
std::vector<ComparisonItem> comparison_items(const Pairing& pairing);

struct GoldItem {
  std::string id;
  std::string query;
  std::vector<std::string> left;
  std::vector<std::string> right;
  Criterion criterion = Criterion::Coherency;
  Choice answer = Choice::Left;
};

// Line-delimited {"id","query","left","right","criterion","answer"}.
std::vector<GoldItem> read_gold_jsonl(std::istream& in);

// What an annotator sees. Carries no source identity.
struct AnnotationTask {
  std::string task_id;
  std::string query;
  Criterion criterion = Criterion::Quality;
  std::vector<std::string> left;
  std::vector<std::string> right;
};

struct JudgmentRequest {
  std::string task_id;
  std::string annotator_id;
  Criterion criterion = Criterion::Quality;
  Choice choice = Choice::Left;
};

struct Judgment {
  std::string task_id;
  std::string annotator_id;
  Criterion criterion = Criterion::Quality;
  Choice choice = Choice::Left;
  std::string received_at;
};

struct ResolvedComparison {
  std::string task_id;
  std::string query;
  std::vector<std::pair<std::string, Side>> judgments;  // annotator, resolved side
};

struct ExportResult {
  Criterion criterion = Criterion::Quality;
  std::vector<ResolvedComparison> complete;
  std::vector<std::string> incomplete;
};

std::string export_to_json(const ExportResult& result);
ExportResult export_from_json(std::string_view text);
std::vector<TaskJudgments> to_task_judgments(const ExportResult& result);

struct ServiceConfig {
  std::uint64_t seed = 0;
  std::size_t judgments_per_task = 2;
  double qualification_threshold = 0.8;
  std::string log_path;  // empty: in-memory only
};

// Single-writer state machine for the blind pairwise protocol. Every state
// change is appended to the judgment log before it is applied, and the log is
// replayed on construction, so the log alone reconstructs the state.
class AnnotationStore {
 public:
  using Clock = std::function<std::string()>;

  AnnotationStore(std::vector<ComparisonItem> items, std::vector<GoldItem> gold, ServiceConfig config,
                  Clock clock = {});

  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  // Gold items without their answers.
  std::vector<GoldItem> gold_tasks() const;

  // Throws UnknownGoldSet, AlreadyQualified, NotQualified (rejection is final).
  Annotator run_qualification(const std::string& annotator_id, const std::map<std::string, Choice>& answers);

  // Sticky: repeats the outstanding task until the annotator judges it.
  // Throws NotQualified.
  std::optional<AnnotationTask> next_task(const std::string& annotator_id, Criterion criterion);

  // Throws UnknownTask, NotQualified, DuplicateJudgment, TaskComplete.
  Judgment submit_judgment(const JudgmentRequest& request);

  ExportResult export_judgments(Criterion criterion) const;

  struct CriterionProgress {
    std::size_t complete = 0;
    std::size_t incomplete = 0;
    std::size_t judgments = 0;
  };
  struct Progress {
    std::size_t tasks = 0;
    std::map<Criterion, CriterionProgress> per_criterion;
    std::map<std::string, std::pair<Annotator, std::size_t>> annotators;  // annotator, judgments
  };
  Progress progress() const;

  std::optional<Annotator> annotator(const std::string& id) const;
  std::size_t log_lines() const;
  std::size_t replay_skipped() const { return replay_skipped_; }

  // Canonical dump of the complete mutable state; equal strings mean equal state.
  std::string snapshot() const;

 private:
  struct TaskState {
    ComparisonItem item;
    bool left_is_ground_truth = true;
  };
  using Key = std::pair<std::string, Criterion>;  // annotator or task id, criterion

  void replay();
  void append(const std::string& line);
  bool apply_event(std::string_view line);
  const TaskState* find_task(const std::string& task_id) const;
  AnnotationTask payload(const TaskState& task, Criterion criterion) const;
  std::size_t reservations(const std::string& task_id, Criterion criterion, const std::string& except) const;
  Qualification status_of(const std::string& annotator_id) const;

  ServiceConfig config_;
  Clock clock_;
  std::vector<TaskState> tasks_;             // dispatch order (seeded shuffle)
  std::map<std::string, std::size_t> index_;  // task id -> position in tasks_
  std::vector<GoldItem> gold_;

  mutable std::shared_mutex mutex_;
  std::ofstream log_;
  std::size_t log_lines_ = 0;
  std::size_t replay_skipped_ = 0;
  std::map<std::string, Annotator> annotators_;
  std::map<Key, std::vector<Judgment>> judgments_;  // (task, criterion)
  std::set<std::tuple<std::string, std::string, Criterion>> judged_;  // task, annotator, criterion
  std::map<Key, std::string> assignments_;  // (annotator, criterion) -> task
};

// HTTP front end over an AnnotationStore (see README for the endpoints).
class AnnotationServer {
 public:
  explicit AnnotationServer(AnnotationStore& store);
  ~AnnotationServer();

  // Blocking. Returns false if the address cannot be bound.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port and returns it, or -1; call listen_after_bind() to serve.
  int bind_any(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace facetcoh
