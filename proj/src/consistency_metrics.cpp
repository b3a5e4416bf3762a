#include "pcons/consistency_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcons/error.hpp"

namespace pcons {

LabelDistribution::LabelDistribution(std::string axis_id, std::vector<std::string> axis_labels)
    : axis(std::move(axis_id)), labels(std::move(axis_labels)), counts(labels.size(), 0) {}

LabelDistribution::LabelDistribution(const CharacteristicAxis& a) : LabelDistribution(a.id, a.labels) {}

LabelDistribution LabelDistribution::from_counts(const CharacteristicAxis& axis,
                                                 const std::map<std::string, std::size_t>& counts,
                                                 std::size_t neutral) {
  LabelDistribution d(axis);
  for (const auto& [label, n] : counts) d.add(label, n);
  d.neutral = neutral;
  return d;
}

void LabelDistribution::add(const std::string& label, std::size_t n) {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw Error(ErrorCode::unknown_axis, "label '" + label + "' is not on axis '" + axis + "'");
  counts[static_cast<std::size_t>(it - labels.begin())] += n;
}

void LabelDistribution::merge(const LabelDistribution& other) {
  if (other.labels != labels) throw Error(ErrorCode::precondition, "cannot merge distributions of different axes");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  neutral += other.neutral;
  excluded += other.excluded;
}

std::size_t LabelDistribution::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0}) + neutral;
}

std::size_t LabelDistribution::count(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  return it == labels.end() ? 0 : counts[static_cast<std::size_t>(it - labels.begin())];
}

double LabelDistribution::exclusion_rate() const {
  auto all = total() + excluded;
  return all == 0 ? 0.0 : static_cast<double>(excluded) / static_cast<double>(all);
}

std::vector<double> effective_distribution(const LabelDistribution& dist) {
  const auto total = dist.total();
  if (total == 0) throw Error(ErrorCode::empty_cell, "axis '" + dist.axis + "': cell has no judged responses");
  const double n = static_cast<double>(total);
  const double share = static_cast<double>(dist.neutral) / static_cast<double>(dist.labels.size());
  std::vector<double> p(dist.labels.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = (static_cast<double>(dist.counts[i]) + share) / n;
  return p;
}

double normalized_entropy(std::span<const double> probabilities, std::size_t label_count) {
  if (label_count < 2) throw Error(ErrorCode::malformed_distribution, "entropy needs at least 2 labels");
  if (probabilities.size() != label_count)
    throw Error(ErrorCode::malformed_distribution, "probability vector length does not match label count");
  double sum = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0) || p > 1.0 + 1e-12) throw Error(ErrorCode::malformed_distribution, "probability out of [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::malformed_distribution, "probabilities do not sum to 1");
  // uniform vectors are exactly 1
  if (std::all_of(probabilities.begin(), probabilities.end(), [&](double p) { return p == probabilities[0]; }))
    return 1.0;
  double h = 0.0;
  for (double p : probabilities)
    if (p > 0.0) h -= p * std::log(p);
  const double e = h / std::log(static_cast<double>(label_count));
  return std::clamp(e, 0.0, 1.0);
}

double normalized_entropy(const LabelDistribution& dist) {
  auto p = effective_distribution(dist);
  return normalized_entropy(p, dist.labels.size());
}

double characteristic_score(const LabelDistribution& dist) {
  if (dist.labels.size() != 2)
    throw Error(ErrorCode::wrong_axis, "characteristic score needs a binary axis; '" + dist.axis + "' has " +
                                           std::to_string(dist.labels.size()) + " labels");
  return effective_distribution(dist).front();
}

OccupationIntensity intensity_of(const std::vector<std::string>& labels, std::span<const double> probabilities) {
  OccupationIntensity out;
  const double best = *std::max_element(probabilities.begin(), probabilities.end());
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (std::abs(probabilities[i] - best) <= 1e-12) out.tied.push_back(labels[i]);
  out.mode = out.tied.front();
  out.intensity = best;
  return out;
}

OccupationIntensity occupation_intensity(const LabelDistribution& dist) {
  if (dist.labels.size() != 6)
    throw Error(ErrorCode::wrong_axis, "occupation intensity needs a six-class axis; '" + dist.axis + "' has " +
                                           std::to_string(dist.labels.size()) + " labels");
  auto p = effective_distribution(dist);
  return intensity_of(dist.labels, p);
}

void to_json(nlohmann::json& j, const ConsistencyRecord& r) {
  j = nlohmann::json{{"model", r.model},
                     {"persona_id", r.persona_id},
                     {"persona_category", r.persona_category},
                     {"evaluation_category", r.evaluation_category},
                     {"axis", r.axis},
                     {"dimension", r.dimension},
                     {"system_prompt_id", r.persona_id},
                     {"entropy", r.entropy},
                     {"probabilities", r.probabilities},
                     {"sample_size", r.sample_size},
                     {"neutral_count", r.neutral_count},
                     {"excluded_count", r.excluded_count}};
  if (r.characteristic_score) j["characteristic_score"] = *r.characteristic_score;
  if (r.mode) j["mode"] = *r.mode;
  if (r.intensity) j["intensity"] = *r.intensity;
}

void from_json(const nlohmann::json& j, ConsistencyRecord& r) {
  j.at("model").get_to(r.model);
  j.at("persona_id").get_to(r.persona_id);
  j.at("persona_category").get_to(r.persona_category);
  j.at("evaluation_category").get_to(r.evaluation_category);
  j.at("axis").get_to(r.axis);
  j.at("dimension").get_to(r.dimension);
  j.at("entropy").get_to(r.entropy);
  r.probabilities = j.value("probabilities", std::vector<double>{});
  j.at("sample_size").get_to(r.sample_size);
  r.neutral_count = j.value("neutral_count", std::size_t{0});
  r.excluded_count = j.value("excluded_count", std::size_t{0});
  if (j.contains("characteristic_score")) r.characteristic_score = j.at("characteristic_score").get<double>();
  if (j.contains("mode")) r.mode = j.at("mode").get<std::string>();
  if (j.contains("intensity")) r.intensity = j.at("intensity").get<double>();
}

ConsistencyRecord make_record(std::string model, const PersonaSpec& persona, const CharacteristicAxis& axis,
                              std::string dimension, const LabelDistribution& dist) {
  ConsistencyRecord r;
  r.model = std::move(model);
  r.persona_id = persona.id;
  r.persona_category = persona.category_id;
  r.evaluation_category = axis.category_id;
  r.axis = axis.id;
  r.dimension = std::move(dimension);
  r.probabilities = effective_distribution(dist);
  r.entropy = normalized_entropy(r.probabilities, dist.labels.size());
  if (dist.labels.size() == 2) r.characteristic_score = r.probabilities.front();
  if (dist.labels.size() == 6) {
    auto oi = intensity_of(dist.labels, r.probabilities);
    r.mode = oi.mode;
    r.intensity = oi.intensity;
  }
  r.sample_size = dist.total();
  r.neutral_count = dist.neutral;
  r.excluded_count = dist.excluded;
  return r;
}

double mean_of(std::span<const double> v) {
  // Running mean: exact when every element is equal.
  double m = 0.0;
  std::size_t k = 0;
  for (double x : v) m += (x - m) / static_cast<double>(++k);
  return m;
}

double population_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

EntropyAggregate aggregate_entropy(std::span<const ConsistencyRecord> records) {
  if (records.empty()) throw Error(ErrorCode::empty_aggregate, "no consistency records to aggregate");
  // dimension -> system prompt -> axis entropies
  std::map<std::string, std::map<std::string, std::vector<double>>> grouped;
  for (const auto& r : records) grouped[r.dimension][r.persona_id].push_back(r.entropy);

  EntropyAggregate agg;
  std::vector<double> dim_means;
  std::vector<double> cells;
  for (const auto& [dim, by_prompt] : grouped) {
    std::vector<double> prompt_means;
    for (const auto& [prompt, axes] : by_prompt) {
      double m = mean_of(axes);
      prompt_means.push_back(m);
      cells.push_back(m);
    }
    double dm = mean_of(prompt_means);
    agg.per_dimension[dim] = dm;
    dim_means.push_back(dm);
  }
  agg.mean = mean_of(dim_means);
  agg.std_over_dimensions = population_std(dim_means);
  agg.std_over_cells = population_std(cells);
  agg.cells = cells.size();
  return agg;
}

}  // namespace pcons
