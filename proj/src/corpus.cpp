#include "facetcoh/corpus.hpp"

#include "facetcoh/error.hpp"
#include "facetcoh/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace facetcoh {

using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      cells.emplace_back(line.substr(start));
      return cells;
    }
    cells.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

void chomp(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(first, last - first + 1));
}

bool skippable(const std::string& line) {
  return trim(line).empty() || line.front() == '#';
}

Source parse_source(const std::string& label) {
  constexpr std::string_view prefix = "generated:";
  if (label == "ground_truth") return Source::ground_truth();
  if (label.rfind(prefix, 0) == 0) return Source::generated(label.substr(prefix.size()));
  throw Error(Errc::Parse, "unknown source '" + label + "'");
}

std::vector<std::string> string_list(const json& j, const char* field) {
  if (!j.contains(field) || !j.at(field).is_array())
    throw Error(Errc::Parse, std::string("field '") + field + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& item : j.at(field)) {
    if (!item.is_string()) throw Error(Errc::Parse, std::string("field '") + field + "' must contain strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace

Query::Query(std::string text) : text_(std::move(text)), normalized_(normalize_facet(text_)) {
  if (normalized_.empty()) throw Error(Errc::InvalidArgument, "query text is empty");
  id_ = hex64(fnv1a64(normalized_));
}

Facet::Facet(std::string raw) : raw_(std::move(raw)), normalized_(normalize_facet(raw_)), terms_(tokenize(raw_)) {
  if (terms_.empty()) throw Error(Errc::EmptyFacet, "facet '" + raw_ + "' has no tokens");
}

FacetSet::FacetSet(std::vector<Facet> facets) : facets_(std::move(facets)) {
  std::sort(facets_.begin(), facets_.end(), [](const Facet& a, const Facet& b) {
    if (a.normalized() != b.normalized()) return a.normalized() < b.normalized();
    return a.raw() < b.raw();
  });
}

FacetSet FacetSet::from_texts(const std::vector<std::string>& texts) {
  std::vector<Facet> facets;
  facets.reserve(texts.size());
  for (const auto& t : texts) facets.emplace_back(t);
  return FacetSet(std::move(facets));
}

std::vector<std::string> FacetSet::raw_texts() const {
  std::vector<std::string> out;
  out.reserve(facets_.size());
  for (const auto& f : facets_) out.push_back(f.raw());
  return out;
}

DocumentList::DocumentList(std::vector<std::string> snippets, std::size_t limit) : snippets_(std::move(snippets)) {
  if (snippets_.size() > limit) snippets_.resize(limit);
}

std::string Source::label() const {
  return kind == Kind::GroundTruth ? std::string("ground_truth") : "generated:" + provider;
}

ParseResult parse_clarification_tsv(std::istream& in) {
  static constexpr std::array<const char*, 7> kRequired = {"query",    "question", "option_1", "option_2",
                                                           "option_3", "option_4", "option_5"};
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::MissingHeader, "input has no header row");
  chomp(line);
  const auto header = split_tabs(line);
  std::array<std::size_t, kRequired.size()> column{};
  for (std::size_t r = 0; r < kRequired.size(); ++r) {
    const auto it = std::find(header.begin(), header.end(), kRequired[r]);
    if (it == header.end()) throw Error(Errc::MissingHeader, std::string("missing required column '") + kRequired[r] + "'");
    column[r] = static_cast<std::size_t>(it - header.begin());
  }

  ParseResult result;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    chomp(line);
    if (trim(line).empty()) continue;
    const auto cells = split_tabs(line);
    auto cell = [&](std::size_t r) -> std::string {
      return column[r] < cells.size() ? cells[column[r]] : std::string();
    };
    try {
      const std::string query_text = trim(cell(0));
      if (query_text.empty()) throw Error(Errc::InvalidArgument, "empty query");
      std::vector<std::string> options;
      for (std::size_t r = 2; r < kRequired.size(); ++r) {
        auto option = trim(cell(r));
        if (!option.empty()) options.push_back(std::move(option));
      }
      if (options.empty()) throw Error(Errc::EmptySet, "no non-empty options");
      result.records.push_back(ClarificationRecord{Query(query_text), trim(cell(1)), FacetSet::from_texts(options),
                                                   std::nullopt, Source::ground_truth()});
    } catch (const Error& e) {
      result.errors.push_back({line_no, e.what()});
    }
  }
  return result;
}

ParseResult load_generated_facets(std::istream& in, std::string_view provider_name) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    chomp(line);
    if (skippable(line)) continue;
    try {
      const json j = json::parse(line);
      if (!j.contains("query") || !j.at("query").is_string()) throw Error(Errc::Parse, "missing string field 'query'");
      const auto facets = string_list(j, "facets");
      if (facets.empty()) throw Error(Errc::EmptySet, "facet list is empty");
      result.records.push_back(ClarificationRecord{Query(j.at("query").get<std::string>()), std::string(),
                                                   FacetSet::from_texts(facets), std::nullopt,
                                                   Source::generated(std::string(provider_name))});
    } catch (const json::exception& e) {
      result.errors.push_back({line_no, std::string("Parse: ") + e.what()});
    } catch (const Error& e) {
      result.errors.push_back({line_no, e.what()});
    }
  }
  return result;
}

std::vector<RowError> attach_documents(std::istream& in, std::vector<ClarificationRecord>& records) {
  std::map<std::string, std::vector<ClarificationRecord*>> by_id;
  for (auto& r : records) by_id[r.query.id()].push_back(&r);

  std::vector<RowError> errors;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    chomp(line);
    if (skippable(line)) continue;
    try {
      const json j = json::parse(line);
      if (!j.contains("query") || !j.at("query").is_string()) throw Error(Errc::Parse, "missing string field 'query'");
      const Query q(j.at("query").get<std::string>());
      const DocumentList docs(string_list(j, "documents"));
      if (const auto it = by_id.find(q.id()); it != by_id.end())
        for (auto* r : it->second) r->documents = docs;
    } catch (const json::exception& e) {
      errors.push_back({line_no, std::string("Parse: ") + e.what()});
    } catch (const Error& e) {
      errors.push_back({line_no, e.what()});
    }
  }
  return errors;
}

void write_records_jsonl(std::ostream& out, const std::vector<ClarificationRecord>& records) {
  for (const auto& r : records) {
    json j;
    j["query"] = r.query.text();
    j["question"] = r.question;
    j["facets"] = r.facets.raw_texts();
    j["source"] = r.source.label();
    if (r.documents) j["documents"] = r.documents->snippets();
    out << j.dump() << '\n';
  }
}

ParseResult read_records_jsonl(std::istream& in) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    chomp(line);
    if (skippable(line)) continue;
    try {
      const json j = json::parse(line);
      ClarificationRecord r{Query(j.at("query").get<std::string>()), j.value("question", std::string()),
                            FacetSet::from_texts(string_list(j, "facets")), std::nullopt,
                            parse_source(j.value("source", std::string("ground_truth")))};
      if (r.facets.empty()) throw Error(Errc::EmptySet, "facet list is empty");
      if (j.contains("documents")) r.documents = DocumentList(string_list(j, "documents"));
      result.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      result.errors.push_back({line_no, std::string("Parse: ") + e.what()});
    } catch (const Error& e) {
      result.errors.push_back({line_no, e.what()});
    }
  }
  return result;
}

Pairing pair_records(const std::vector<ClarificationRecord>& references,
                     const std::vector<ClarificationRecord>& candidates) {
  std::map<std::string, std::vector<const ClarificationRecord*>> pending;
  for (const auto& c : candidates) pending[c.query.id()].push_back(&c);
  std::map<std::string, std::size_t> used;

  Pairing out;
  for (const auto& r : references) {
    const auto it = pending.find(r.query.id());
    auto& k = used[r.query.id()];
    if (it == pending.end() || k >= it->second.size()) {
      out.unpaired.push_back(r.query.text());
      continue;
    }
    out.pairs.push_back({&r, it->second[k++]});
  }
  for (const auto& [id, list] : pending) {
    const std::size_t k = used.count(id) ? used.at(id) : 0;
    for (std::size_t i = k; i < list.size(); ++i) out.unpaired.push_back(list[i]->query.text());
  }
  return out;
}

}  // namespace facetcoh
