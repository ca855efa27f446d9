#include "facetcoh/annotation.hpp"

#include "facetcoh/error.hpp"
#include "facetcoh/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <istream>
#include <mutex>
#include <random>

namespace facetcoh {

using nlohmann::json;

std::string_view to_string(Choice c) { return c == Choice::Left ? "left" : "right"; }

Choice choice_from_string(std::string_view s) {
  if (s == "left") return Choice::Left;
  if (s == "right") return Choice::Right;
  throw Error(Errc::InvalidArgument, "choice must be left or right, got '" + std::string(s) + "'");
}

std::string_view to_string(Qualification q) {
  switch (q) {
    case Qualification::Unqualified: return "unqualified";
    case Qualification::Qualified: return "qualified";
    case Qualification::Rejected: return "rejected";
  }
  return "unqualified";
}

namespace {

Qualification qualification_from_string(std::string_view s) {
  if (s == "qualified") return Qualification::Qualified;
  if (s == "rejected") return Qualification::Rejected;
  if (s == "unqualified") return Qualification::Unqualified;
  throw Error(Errc::Parse, "unknown qualification status '" + std::string(s) + "'");
}

std::string_view side_name(Side s) { return s == Side::A ? "A" : "B"; }

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::vector<ComparisonItem> comparison_items(const Pairing& pairing) {
  std::vector<ComparisonItem> items;
  items.reserve(pairing.pairs.size());
  for (std::size_t i = 0; i < pairing.pairs.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "t%04zu", i + 1);
    const auto& p = pairing.pairs[i];
    items.push_back({id, p.reference->query.text(), p.reference->facets.raw_texts(), p.candidate->facets.raw_texts()});
  }
  return items;
}

std::vector<GoldItem> read_gold_jsonl(std::istream& in) {
  std::vector<GoldItem> gold;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line.front() == '#') continue;
    try {
      const json j = json::parse(line);
      gold.push_back({j.at("id").get<std::string>(), j.value("query", std::string()),
                      j.at("left").get<std::vector<std::string>>(), j.at("right").get<std::vector<std::string>>(),
                      criterion_from_string(j.value("criterion", std::string("coherency"))),
                      choice_from_string(j.at("answer").get<std::string>())});
    } catch (const json::exception& e) {
      throw Error(Errc::Parse, "gold line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return gold;
}

// ---- export -----------------------------------------------------------------

std::string export_to_json(const ExportResult& result) {
  json j;
  j["criterion"] = std::string(to_string(result.criterion));
  j["complete"] = json::array();
  for (const auto& c : result.complete) {
    json judgments = json::array();
    for (const auto& [annotator, side] : c.judgments)
      judgments.push_back({{"annotator", annotator}, {"choice", std::string(side_name(side))}});
    j["complete"].push_back({{"task_id", c.task_id}, {"query", c.query}, {"judgments", judgments}});
  }
  j["incomplete"] = result.incomplete;
  return j.dump(2) + "\n";
}

ExportResult export_from_json(std::string_view text) {
  ExportResult out;
  try {
    const json j = json::parse(text);
    out.criterion = criterion_from_string(j.at("criterion").get<std::string>());
    for (const auto& c : j.at("complete")) {
      ResolvedComparison rc{c.at("task_id").get<std::string>(), c.value("query", std::string()), {}};
      for (const auto& jd : c.at("judgments")) {
        const auto side = jd.at("choice").get<std::string>();
        if (side != "A" && side != "B") throw Error(Errc::Parse, "resolved choice must be A or B");
        rc.judgments.emplace_back(jd.at("annotator").get<std::string>(), side == "A" ? Side::A : Side::B);
      }
      out.complete.push_back(std::move(rc));
    }
    out.incomplete = j.value("incomplete", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw Error(Errc::Parse, std::string("malformed export: ") + e.what());
  }
  return out;
}

std::vector<TaskJudgments> to_task_judgments(const ExportResult& result) {
  std::vector<TaskJudgments> out;
  for (const auto& c : result.complete) {
    TaskJudgments t{c.task_id, {}};
    for (const auto& [annotator, side] : c.judgments) t.choices.push_back(side);
    out.push_back(std::move(t));
  }
  for (const auto& id : result.incomplete) out.push_back({id, {}});
  return out;
}

// ---- store ------------------------------------------------------------------

AnnotationStore::AnnotationStore(std::vector<ComparisonItem> items, std::vector<GoldItem> gold, ServiceConfig config,
                                 Clock clock)
    : config_(std::move(config)), clock_(clock ? std::move(clock) : Clock(utc_now)), gold_(std::move(gold)) {
  if (config_.judgments_per_task < 1) throw Error(Errc::InvalidArgument, "judgments_per_task must be >= 1");
  for (auto& item : items) {
    if (index_.contains(item.task_id)) throw Error(Errc::InvalidArgument, "duplicate task id " + item.task_id);
    const bool left_gt = (mix(config_.seed ^ fnv1a64(item.task_id)) & 1U) == 0;
    index_[item.task_id] = 0;
    tasks_.push_back({std::move(item), left_gt});
  }
  // Seeded dispatch order, so positions carry no information about the source.
  std::mt19937_64 rng(mix(config_.seed));
  for (std::size_t i = tasks_.size(); i > 1; --i) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % i;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    std::swap(tasks_[i - 1], tasks_[static_cast<std::size_t>(x % i)]);
  }
  for (std::size_t i = 0; i < tasks_.size(); ++i) index_[tasks_[i].item.task_id] = i;

  if (!config_.log_path.empty()) {
    replay();
    log_.open(config_.log_path, std::ios::app | std::ios::binary);
    if (!log_) throw Error(Errc::Io, "cannot open judgment log " + config_.log_path);
  }
}

void AnnotationStore::replay() {
  std::ifstream in(config_.log_path, std::ios::binary);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (apply_event(line)) ++log_lines_;
    else ++replay_skipped_;
  }
}

void AnnotationStore::append(const std::string& line) {
  if (log_.is_open()) {
    log_ << line << '\n';
    log_.flush();
    if (!log_) throw Error(Errc::Io, "failed to append to judgment log " + config_.log_path);
  }
  ++log_lines_;
}

bool AnnotationStore::apply_event(std::string_view line) {
  try {
    const json j = json::parse(line);
    const auto event = j.at("event").get<std::string>();
    if (event == "qualification") {
      Annotator a{j.at("annotator").get<std::string>(), qualification_from_string(j.at("status").get<std::string>()),
                  j.at("score").get<double>()};
      annotators_[a.id] = a;
    } else if (event == "assign") {
      const auto task = j.at("task").get<std::string>();
      if (!find_task(task)) return false;
      assignments_[{j.at("annotator").get<std::string>(), criterion_from_string(j.at("criterion").get<std::string>())}] =
          task;
    } else if (event == "judgment") {
      Judgment jd{j.at("task").get<std::string>(), j.at("annotator").get<std::string>(),
                  criterion_from_string(j.at("criterion").get<std::string>()),
                  choice_from_string(j.at("choice").get<std::string>()), j.value("received_at", std::string())};
      if (!find_task(jd.task_id)) return false;
      if (!judged_.emplace(jd.task_id, jd.annotator_id, jd.criterion).second) return false;
      const auto it = assignments_.find({jd.annotator_id, jd.criterion});
      if (it != assignments_.end() && it->second == jd.task_id) assignments_.erase(it);
      judgments_[{jd.task_id, jd.criterion}].push_back(std::move(jd));
    } else {
      return false;
    }
    return true;
  } catch (const json::exception&) {
    return false;  // torn final line after a crash, or foreign content
  } catch (const Error&) {
    return false;
  }
}

const AnnotationStore::TaskState* AnnotationStore::find_task(const std::string& task_id) const {
  const auto it = index_.find(task_id);
  return it == index_.end() ? nullptr : &tasks_[it->second];
}

AnnotationTask AnnotationStore::payload(const TaskState& task, Criterion criterion) const {
  AnnotationTask t{task.item.task_id, task.item.query, criterion, {}, {}};
  t.left = task.left_is_ground_truth ? task.item.ground_truth : task.item.generated;
  t.right = task.left_is_ground_truth ? task.item.generated : task.item.ground_truth;
  return t;
}

std::size_t AnnotationStore::reservations(const std::string& task_id, Criterion criterion,
                                          const std::string& except) const {
  std::size_t n = 0;
  for (const auto& [key, task] : assignments_)
    if (key.second == criterion && task == task_id && key.first != except) ++n;
  return n;
}

Qualification AnnotationStore::status_of(const std::string& annotator_id) const {
  const auto it = annotators_.find(annotator_id);
  return it == annotators_.end() ? Qualification::Unqualified : it->second.qualification;
}

std::vector<GoldItem> AnnotationStore::gold_tasks() const {
  auto out = gold_;
  for (auto& g : out) g.answer = Choice::Left;
  return out;
}

Annotator AnnotationStore::run_qualification(const std::string& annotator_id,
                                             const std::map<std::string, Choice>& answers) {
  if (annotator_id.empty()) throw Error(Errc::InvalidArgument, "annotator id is empty");
  std::unique_lock lock(mutex_);
  if (gold_.empty()) throw Error(Errc::UnknownGoldSet, "no gold set configured");
  const auto status = status_of(annotator_id);
  if (status == Qualification::Qualified) throw Error(Errc::AlreadyQualified, annotator_id + " is already qualified");
  if (status == Qualification::Rejected) throw Error(Errc::NotQualified, annotator_id + " failed qualification");

  std::size_t correct = 0;
  for (const auto& g : gold_) {
    const auto it = answers.find(g.id);
    if (it != answers.end() && it->second == g.answer) ++correct;
  }
  Annotator a{annotator_id, Qualification::Rejected,
              static_cast<double>(correct) / static_cast<double>(gold_.size())};
  if (a.score >= config_.qualification_threshold) a.qualification = Qualification::Qualified;

  append(json{{"event", "qualification"},
              {"annotator", a.id},
              {"score", a.score},
              {"status", std::string(to_string(a.qualification))}}
             .dump());
  annotators_[a.id] = a;
  return a;
}

std::optional<AnnotationTask> AnnotationStore::next_task(const std::string& annotator_id, Criterion criterion) {
  std::unique_lock lock(mutex_);
  if (status_of(annotator_id) != Qualification::Qualified)
    throw Error(Errc::NotQualified, annotator_id + " is not qualified");

  const Key key{annotator_id, criterion};
  if (const auto it = assignments_.find(key); it != assignments_.end()) {
    const TaskState* task = find_task(it->second);
    const auto judged = judgments_.count({it->second, criterion}) ? judgments_.at({it->second, criterion}).size() : 0;
    if (task && judged < config_.judgments_per_task) return payload(*task, criterion);
  }

  const TaskState* chosen = nullptr;
  std::size_t chosen_judged = 0;
  for (const auto& task : tasks_) {
    const auto& id = task.item.task_id;
    if (judged_.contains({id, annotator_id, criterion})) continue;
    const auto jit = judgments_.find({id, criterion});
    const std::size_t judged = jit == judgments_.end() ? 0 : jit->second.size();
    if (judged + reservations(id, criterion, annotator_id) >= config_.judgments_per_task) continue;
    // Prefer tasks that already have judgments so pairs complete first.
    if (!chosen || judged > chosen_judged) {
      chosen = &task;
      chosen_judged = judged;
    }
  }
  if (!chosen) {
    assignments_.erase(key);
    return std::nullopt;
  }
  append(json{{"event", "assign"},
              {"annotator", annotator_id},
              {"criterion", std::string(to_string(criterion))},
              {"task", chosen->item.task_id}}
             .dump());
  assignments_[key] = chosen->item.task_id;
  return payload(*chosen, criterion);
}

Judgment AnnotationStore::submit_judgment(const JudgmentRequest& request) {
  std::unique_lock lock(mutex_);
  if (!find_task(request.task_id)) throw Error(Errc::UnknownTask, "no task " + request.task_id);
  if (status_of(request.annotator_id) != Qualification::Qualified)
    throw Error(Errc::NotQualified, request.annotator_id + " is not qualified");
  if (judged_.contains({request.task_id, request.annotator_id, request.criterion}))
    throw Error(Errc::DuplicateJudgment, request.annotator_id + " already judged " + request.task_id + " for " +
                                             std::string(to_string(request.criterion)));
  const auto jit = judgments_.find({request.task_id, request.criterion});
  if (jit != judgments_.end() && jit->second.size() >= config_.judgments_per_task)
    throw Error(Errc::TaskComplete, request.task_id + " already has all its judgments");

  Judgment jd{request.task_id, request.annotator_id, request.criterion, request.choice, clock_()};
  const std::string line = json{{"event", "judgment"},
                                {"task", jd.task_id},
                                {"annotator", jd.annotator_id},
                                {"criterion", std::string(to_string(jd.criterion))},
                                {"choice", std::string(to_string(jd.choice))},
                                {"received_at", jd.received_at}}
                               .dump();
  append(line);
  const bool applied = apply_event(line);
  (void)applied;
  return jd;
}

ExportResult AnnotationStore::export_judgments(Criterion criterion) const {
  std::shared_lock lock(mutex_);
  ExportResult out;
  out.criterion = criterion;
  std::vector<const TaskState*> by_id;
  for (const auto& t : tasks_) by_id.push_back(&t);
  std::sort(by_id.begin(), by_id.end(),
            [](const TaskState* a, const TaskState* b) { return a->item.task_id < b->item.task_id; });
  for (const auto* task : by_id) {
    const auto it = judgments_.find({task->item.task_id, criterion});
    if (it == judgments_.end() || it->second.size() != config_.judgments_per_task) {
      out.incomplete.push_back(task->item.task_id);
      continue;
    }
    ResolvedComparison rc{task->item.task_id, task->item.query, {}};
    for (const auto& jd : it->second) {
      const bool picked_left = jd.choice == Choice::Left;
      const Side side = picked_left == task->left_is_ground_truth ? Side::A : Side::B;
      rc.judgments.emplace_back(jd.annotator_id, side);
    }
    out.complete.push_back(std::move(rc));
  }
  return out;
}

AnnotationStore::Progress AnnotationStore::progress() const {
  std::shared_lock lock(mutex_);
  Progress p;
  p.tasks = tasks_.size();
  for (const auto criterion : {Criterion::Coherency, Criterion::Quality}) {
    auto& cp = p.per_criterion[criterion];
    for (const auto& t : tasks_) {
      const auto it = judgments_.find({t.item.task_id, criterion});
      const std::size_t n = it == judgments_.end() ? 0 : it->second.size();
      cp.judgments += n;
      if (n >= config_.judgments_per_task) ++cp.complete;
      else ++cp.incomplete;
    }
  }
  for (const auto& [id, a] : annotators_) p.annotators[id] = {a, 0};
  for (const auto& [task, annotator, criterion] : judged_) {
    auto& entry = p.annotators[annotator];
    entry.first.id = annotator;
    ++entry.second;
  }
  return p;
}

std::optional<Annotator> AnnotationStore::annotator(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = annotators_.find(id);
  if (it == annotators_.end()) return std::nullopt;
  return it->second;
}

std::size_t AnnotationStore::log_lines() const {
  std::shared_lock lock(mutex_);
  return log_lines_;
}

std::string AnnotationStore::snapshot() const {
  std::shared_lock lock(mutex_);
  json j;
  j["annotators"] = json::object();
  for (const auto& [id, a] : annotators_)
    j["annotators"][id] = {{"status", std::string(to_string(a.qualification))}, {"score", a.score}};
  j["assignments"] = json::array();
  for (const auto& [key, task] : assignments_)
    j["assignments"].push_back({key.first, std::string(to_string(key.second)), task});
  j["judgments"] = json::array();
  for (const auto& [key, list] : judgments_)
    for (const auto& jd : list)
      j["judgments"].push_back({jd.task_id, jd.annotator_id, std::string(to_string(jd.criterion)),
                                std::string(to_string(jd.choice)), jd.received_at});
  j["log_lines"] = log_lines_;
  return j.dump();
}

}  // namespace facetcoh
