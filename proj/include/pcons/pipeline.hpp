#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pcons/consistency_metrics.hpp"
#include "pcons/run_manager.hpp"

namespace pcons {

/// Artifact locations under an output directory.
struct OutputLayout {
  std::filesystem::path root;

  std::filesystem::path labels() const { return root / "scores" / "labels.jsonl"; }
  std::filesystem::path records() const { return root / "analysis" / "consistency_records.jsonl"; }
  std::filesystem::path aggregates() const { return root / "analysis" / "aggregates.json"; }
  std::filesystem::path report_dir() const { return root / "report"; }
};

/// JSONL artifacts carry a sidecar "<file>.meta.json" holding the config
/// hash; readers refuse files produced under another config.
void write_labels(const OutputLayout& layout, const std::string& config_hash, const std::vector<LabelRecord>& labels);
std::vector<LabelRecord> read_labels(const OutputLayout& layout, const std::string& config_hash);

void write_analysis(const OutputLayout& layout, const std::string& config_hash,
                    const std::vector<ConsistencyRecord>& records);
std::vector<ConsistencyRecord> read_records(const OutputLayout& layout, const std::string& config_hash);

}  // namespace pcons
