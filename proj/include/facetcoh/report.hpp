#pragma once

#include "facetcoh/coherency.hpp"
#include "facetcoh/metrics.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace facetcoh {

// One JSON object per pair.
std::string metric_pairs_jsonl(const MetricReport& report);

// Tab-separated table with one row per reference-set size:
// M, bleu1..bleu4, bertscore_like, meteor, pairs [, coherency_gt, coherency_gen].
std::string metric_table_tsv(const MetricReport& report);

std::string prevalence_table_tsv(const std::vector<PrevalenceRow>& rows);

// Collects output files and publishes them only on commit(), each through a
// temporary file in the target directory followed by a rename. Anything not
// committed is discarded.
class StagedOutputs {
 public:
  explicit StagedOutputs(std::filesystem::path dir);

  void add(const std::string& name, std::string content);
  void commit();
  const std::map<std::string, std::string>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> files_;
};

void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace facetcoh
