#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace facetcoh {

class Query {
 public:
  explicit Query(std::string text);

  const std::string& text() const noexcept { return text_; }
  const std::string& normalized() const noexcept { return normalized_; }
  // 16 hex digits of FNV-1a over the normalized text.
  const std::string& id() const noexcept { return id_; }

  friend bool operator==(const Query& a, const Query& b) { return a.text_ == b.text_; }

 private:
  std::string text_;
  std::string normalized_;
  std::string id_;
};

class Facet {
 public:
  // Throws Error(EmptyFacet) when the text has no tokens.
  explicit Facet(std::string raw);

  const std::string& raw() const noexcept { return raw_; }
  const std::string& normalized() const noexcept { return normalized_; }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  std::size_t length() const noexcept { return terms_.size(); }

  friend bool operator==(const Facet& a, const Facet& b) { return a.raw_ == b.raw_; }

 private:
  std::string raw_;
  std::string normalized_;
  std::vector<std::string> terms_;
};

// Unordered multiset of facets. Iteration follows a canonical order
// (normalized text, then raw) so every consumer is insensitive to input order.
// Duplicates are kept: the weak labeler needs to see them.
class FacetSet {
 public:
  FacetSet() = default;
  explicit FacetSet(std::vector<Facet> facets);
  static FacetSet from_texts(const std::vector<std::string>& texts);

  std::size_t size() const noexcept { return facets_.size(); }
  bool empty() const noexcept { return facets_.empty(); }
  const Facet& operator[](std::size_t i) const { return facets_[i]; }
  auto begin() const noexcept { return facets_.begin(); }
  auto end() const noexcept { return facets_.end(); }
  std::vector<std::string> raw_texts() const;

  friend bool operator==(const FacetSet& a, const FacetSet& b) { return a.facets_ == b.facets_; }

 private:
  std::vector<Facet> facets_;
};

inline constexpr std::size_t kMaxDocuments = 10;
inline constexpr std::size_t kMaxMimicsFacets = 5;

class DocumentList {
 public:
  DocumentList() = default;
  // Keeps at most `limit` snippets, in input order.
  explicit DocumentList(std::vector<std::string> snippets, std::size_t limit = kMaxDocuments);

  const std::vector<std::string>& snippets() const noexcept { return snippets_; }
  std::size_t size() const noexcept { return snippets_.size(); }

  friend bool operator==(const DocumentList&, const DocumentList&) = default;

 private:
  std::vector<std::string> snippets_;
};

struct Source {
  enum class Kind { GroundTruth, Generated };
  Kind kind = Kind::GroundTruth;
  std::string provider;  // non-empty only for Generated

  static Source ground_truth() { return {}; }
  static Source generated(std::string provider_name) { return {Kind::Generated, std::move(provider_name)}; }
  std::string label() const;

  friend bool operator==(const Source&, const Source&) = default;
};

struct ClarificationRecord {
  Query query;
  std::string question;
  FacetSet facets;
  std::optional<DocumentList> documents;
  Source source;

  friend bool operator==(const ClarificationRecord&, const ClarificationRecord&) = default;
};

struct RowError {
  std::size_t line = 0;  // 1-based physical line number, header is line 1
  std::string reason;
};

struct ParseResult {
  std::vector<ClarificationRecord> records;
  std::vector<RowError> errors;
};

// Header-driven: required columns are query, question, option_1..option_5 in
// any order; other columns are ignored. Throws Error(MissingHeader).
ParseResult parse_clarification_tsv(std::istream& in);

// Line-delimited {"query": ..., "facets": [...]} records.
ParseResult load_generated_facets(std::istream& in, std::string_view provider_name);

// Line-delimited {"query": ..., "documents": [...]} records; attaches to every
// record with a matching query id. Returns per-line errors.
std::vector<RowError> attach_documents(std::istream& in, std::vector<ClarificationRecord>& records);

// Lossless record serialization, one JSON object per line.
void write_records_jsonl(std::ostream& out, const std::vector<ClarificationRecord>& records);
ParseResult read_records_jsonl(std::istream& in);

struct RecordPair {
  const ClarificationRecord* reference = nullptr;
  const ClarificationRecord* candidate = nullptr;
};

struct Pairing {
  std::vector<RecordPair> pairs;
  std::vector<std::string> unpaired;  // query texts left without a partner
};

// The k-th reference occurrence of a query id pairs with the k-th candidate
// occurrence; leftovers on either side are reported as unpaired.
Pairing pair_records(const std::vector<ClarificationRecord>& references,
                     const std::vector<ClarificationRecord>& candidates);

}  // namespace facetcoh
