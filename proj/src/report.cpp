#include "facetcoh/report.hpp"

#include "facetcoh/error.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

namespace facetcoh {

using nlohmann::json;

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string metric_pairs_jsonl(const MetricReport& report) {
  std::ostringstream out;
  for (const auto& p : report.pairs) {
    json j;
    j["query"] = p.query;
    j["query_id"] = p.query_id;
    j["m"] = p.reference_size;
    j["m_candidate"] = p.candidate_size;
    j["bleu"] = p.bleu.per_n;
    j["brevity_penalty"] = p.bleu.brevity_penalty;
    j["meteor"] = p.meteor.value;
    j["meteor_matches"] = p.meteor.matches;
    j["meteor_chunks"] = p.meteor.chunks;
    j["bertscore_like"] = {{"precision", p.semantic.precision}, {"recall", p.semantic.recall}, {"f1", p.semantic.f1}};
    if (p.reference_coherency) j["coherency_gt"] = *p.reference_coherency;
    if (p.candidate_coherency) j["coherency_gen"] = *p.candidate_coherency;
    out << j.dump() << '\n';
  }
  return out.str();
}

std::string metric_table_tsv(const MetricReport& report) {
  bool coherency = false;
  for (const auto& r : report.by_m) coherency = coherency || r.reference_coherent_fraction.has_value();
  std::ostringstream out;
  out << "M\tbleu1\tbleu2\tbleu3\tbleu4\tbertscore_like\tmeteor\tpairs";
  if (coherency) out << "\tcoherency_gt\tcoherency_gen";
  out << '\n';
  for (const auto& r : report.by_m) {
    out << r.m;
    for (const double b : r.bleu) out << '\t' << fixed(b);
    out << '\t' << fixed(r.semantic_f1) << '\t' << fixed(r.meteor) << '\t' << r.pairs;
    if (coherency)
      out << '\t' << fixed(r.reference_coherent_fraction.value_or(0.0)) << '\t'
          << fixed(r.candidate_coherent_fraction.value_or(0.0));
    out << '\n';
  }
  return out.str();
}

std::string prevalence_table_tsv(const std::vector<PrevalenceRow>& rows) {
  std::ostringstream out;
  out << "M\trecords\tincoherent\tprevalence\n";
  for (const auto& r : rows) {
    out << (r.m ? std::to_string(*r.m) : std::string("all")) << '\t' << r.records << '\t' << r.incoherent << '\t'
        << fixed(r.fraction) << '\n';
  }
  return out.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(Errc::Io, "failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(Errc::Io, "cannot move output into place: " + path.string());
  }
}

StagedOutputs::StagedOutputs(std::filesystem::path dir) : dir_(std::move(dir)) {}

void StagedOutputs::add(const std::string& name, std::string content) { files_[name] = std::move(content); }

void StagedOutputs::commit() {
  if (files_.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(Errc::Io, "cannot create output directory " + dir_.string());
  for (const auto& [name, content] : files_) write_file_atomic(dir_ / name, content);
}

}  // namespace facetcoh
