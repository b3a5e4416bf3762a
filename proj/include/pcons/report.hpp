#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcons/consistency_metrics.hpp"
#include "pcons/persona_catalog.hpp"
#include "pcons/run_config.hpp"
#include "pcons/stat_analysis.hpp"

namespace pcons {

// ---------------------------------------------------------------------------
// Entropy table

enum class ColorClass { green, orange, red };
std::string_view to_string(ColorClass c);

/// green below 0.25, orange in [0.25, 0.5), red from 0.5.
ColorClass color_class(double value);

/// "0.18 ± 0.25"
std::string format_mean_std(double mean, double std);

inline constexpr std::string_view kEmptyCell = "-";

struct EntropyTable {
  std::string model;
  std::vector<std::string> rows;     // evaluation categories
  std::vector<std::string> columns;  // persona categories, then custom persona ids
  std::vector<std::vector<std::optional<EntropyAggregate>>> cells;  // [row][column]
  std::vector<std::string> warnings;

  const std::optional<EntropyAggregate>& cell(std::string_view row, std::string_view column) const;

  /// Long form: one line per cell with mean, both stds and color class.
  std::string render_csv() const;
  std::string render_markdown() const;
  std::string render_html() const;
};

/// Rows and regular columns follow catalog order; custom personas present in
/// `records` get a column each.
EntropyTable build_entropy_table(const PersonaCatalog& catalog, const std::vector<ConsistencyRecord>& records,
                                 const std::string& model);

// ---------------------------------------------------------------------------
// Heatmaps

/// One heatmap column: every persona carrying `label` on `axis`. Custom
/// personas form single-member columns with an empty axis.
struct HeatmapColumn {
  std::string persona_category;
  std::string axis;
  std::string label;
  std::vector<std::string> personas;

  std::string title() const;
};

struct CharacteristicHeatmap {
  std::string model;
  std::vector<std::string> rows;  // binary evaluation axes
  std::vector<HeatmapColumn> columns;
  std::vector<std::vector<std::optional<double>>> values;  // [row][column]
  std::vector<std::string> warnings;

  std::optional<double> value(std::string_view axis, std::string_view column_title) const;
  std::string render_csv() const;
};

struct OccupationHeatmap {
  std::string model;
  std::vector<std::string> labels;  // occupation classes
  std::vector<HeatmapColumn> columns;
  std::vector<std::optional<std::vector<double>>> probabilities;
  std::vector<std::optional<OccupationIntensity>> modes;
  std::vector<std::string> warnings;

  std::string render_csv() const;
};

std::vector<HeatmapColumn> heatmap_columns(const PersonaCatalog& catalog, const std::vector<PersonaSpec>& personas);

/// Scores are averaged over dimensions per persona, then over the personas
/// of each column.
CharacteristicHeatmap build_characteristic_heatmap(const PersonaCatalog& catalog,
                                                   const std::vector<PersonaSpec>& personas,
                                                   const std::vector<ConsistencyRecord>& records,
                                                   const std::string& model);

/// Occupation probabilities averaged the same way, then reduced to mode and
/// intensity. Empty when the catalog has no six-class axis.
OccupationHeatmap build_occupation_heatmap(const PersonaCatalog& catalog, const std::vector<PersonaSpec>& personas,
                                           const std::vector<ConsistencyRecord>& records, const std::string& model);

// ---------------------------------------------------------------------------
// Statistics report

struct StatsInputs {
  std::vector<std::string> models;
  std::vector<std::string> dimensions;
  std::vector<std::string> categories;  // evaluation categories
  StatsConfig stats;
  std::uint64_t seed = 0;
};

struct ComparisonResult {
  std::string name;
  std::string description;
  std::optional<stats::WilcoxonResult> wilcoxon;
  std::string error;
};

/// Builds the paired sample for two cell selectors. Units are personas,
/// refined by model when both sides share it and by dimension under
/// persona_dimension pairing when both sides share it.
stats::PairedSample paired_sample(const std::vector<ConsistencyRecord>& records, const ComparisonSpec& spec,
                                  PairingKey pairing);

ComparisonResult run_comparison(const std::vector<ConsistencyRecord>& records, const ComparisonSpec& spec,
                                const StatsConfig& config);

struct RankTable {
  std::string title;
  std::string block_description;
  std::vector<std::string> treatments;
  std::optional<stats::NemenyiResult> intra;
  std::optional<stats::NemenyiResult> inter;
  std::size_t intra_blocks = 0;
  std::size_t inter_blocks = 0;
  std::string intra_error;
  std::string inter_error;
};

/// Treatments are models (blocks: evaluation category x dimension) or
/// dimensions (blocks: evaluation category x model). Block values are mean
/// cell entropies, negated so the most consistent treatment ranks highest.
enum class RankBy { model, dimension };
RankTable build_rank_table(const std::vector<ConsistencyRecord>& records, const StatsInputs& inputs, RankBy by);

struct CiEntry {
  std::string model;  // "*" pools models
  std::string dimension;
  std::string scope;  // intra | inter
  std::size_t n = 0;
  std::optional<stats::BootstrapInterval> interval;
};

struct StatsReport {
  std::vector<ComparisonResult> comparisons;
  std::vector<RankTable> rank_tables;
  std::vector<CiEntry> intervals;

  nlohmann::json to_json() const;
  std::string render_markdown() const;
};

/// Intra-vs-inter Wilcoxon per model and per dimension, configured
/// comparisons, Friedman + Nemenyi rank tables and bootstrap intervals of
/// per-dimension means. Failures are reported per entry.
StatsReport build_stats_report(const std::vector<ConsistencyRecord>& records, const StatsInputs& inputs);

// ---------------------------------------------------------------------------
// Artifact emission

struct ReportArtifacts {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
};

/// Writes every table, heatmap and the stats report under `dir`.
ReportArtifacts emit_reports(const Experiment& experiment, const std::vector<ConsistencyRecord>& records,
                             const std::filesystem::path& dir);

}  // namespace pcons
