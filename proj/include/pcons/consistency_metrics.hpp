#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcons/persona_catalog.hpp"

namespace pcons {

/// Label counts for one cell on one axis. Neutral judgments are kept apart
/// from pole counts; unjudged responses are tracked but never enter `total`.
struct LabelDistribution {
  std::string axis;
  std::vector<std::string> labels;
  std::vector<std::size_t> counts;
  std::size_t neutral = 0;
  std::size_t excluded = 0;

  LabelDistribution() = default;
  LabelDistribution(std::string axis_id, std::vector<std::string> axis_labels);
  explicit LabelDistribution(const CharacteristicAxis& axis);

  static LabelDistribution from_counts(const CharacteristicAxis& axis,
                                       const std::map<std::string, std::size_t>& counts,
                                       std::size_t neutral = 0);

  void add(const std::string& label, std::size_t n = 1);
  void add_neutral(std::size_t n = 1) { neutral += n; }
  void add_excluded(std::size_t n = 1) { excluded += n; }
  void merge(const LabelDistribution& other);

  std::size_t total() const;
  std::size_t count(const std::string& label) const;
  double exclusion_rate() const;
};

/// P(x) = (count[x] + neutral / |X|) / total.
std::vector<double> effective_distribution(const LabelDistribution& dist);

/// Shannon entropy of `probabilities` divided by ln(label_count).
double normalized_entropy(std::span<const double> probabilities, std::size_t label_count);
double normalized_entropy(const LabelDistribution& dist);

/// Effective probability of the first declared label (neutral counted at 1/2).
double characteristic_score(const LabelDistribution& dist);

struct OccupationIntensity {
  std::string mode;
  double intensity = 0.0;
  std::vector<std::string> tied;  // every label sharing the maximum, declared order
  bool tie() const { return tied.size() > 1; }
};

OccupationIntensity occupation_intensity(const LabelDistribution& dist);
/// Mode and intensity of an already-effective probability vector.
OccupationIntensity intensity_of(const std::vector<std::string>& labels, std::span<const double> probabilities);

/// One (model, persona, evaluation axis, dimension) cell. The system prompt
/// id is the persona id.
struct ConsistencyRecord {
  std::string model;
  std::string persona_id;
  std::string persona_category;
  std::string evaluation_category;
  std::string axis;
  std::string dimension;
  double entropy = 0.0;
  std::optional<double> characteristic_score;
  std::optional<std::string> mode;
  std::optional<double> intensity;
  std::vector<double> probabilities;
  std::size_t sample_size = 0;
  std::size_t neutral_count = 0;
  std::size_t excluded_count = 0;

  const std::string& system_prompt_id() const { return persona_id; }
  bool intra() const { return evaluation_category == persona_category; }
};

void to_json(nlohmann::json& j, const ConsistencyRecord& r);
void from_json(const nlohmann::json& j, ConsistencyRecord& r);

ConsistencyRecord make_record(std::string model, const PersonaSpec& persona, const CharacteristicAxis& axis,
                              std::string dimension, const LabelDistribution& dist);

struct EntropyAggregate {
  double mean = 0.0;
  double std_over_dimensions = 0.0;
  double std_over_cells = 0.0;
  std::map<std::string, double> per_dimension;
  std::size_t cells = 0;
};

/// Two-level mean for one (persona category, evaluation category) block:
/// axes and system prompts are averaged within each dimension, then the
/// per-dimension means are averaged. Stds are population stds.
EntropyAggregate aggregate_entropy(std::span<const ConsistencyRecord> records);

double mean_of(std::span<const double> v);
double population_std(std::span<const double> v);

}  // namespace pcons
