#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcons/model_gateway.hpp"
#include "pcons/persona_catalog.hpp"
#include "pcons/scoring.hpp"
#include "pcons/stat_analysis.hpp"
#include "pcons/task_dimensions.hpp"

namespace pcons {

inline constexpr int kConfigSchemaVersion = 1;

enum class PairingKey { persona_dimension, persona };

/// Selects cells for one side of a configured comparison. Unset fields
/// match everything.
struct CellSelector {
  std::optional<std::string> model;
  std::optional<std::string> dimension;
  std::optional<bool> intra;
};

struct ComparisonSpec {
  std::string name;
  CellSelector a;
  CellSelector b;
  stats::Alternative alternative = stats::Alternative::less;
};

struct StatsConfig {
  PairingKey pairing = PairingKey::persona_dimension;
  double alpha = 0.05;
  std::size_t bootstrap_resamples = 10000;
  double bootstrap_level = 0.95;
  stats::ZeroMethod zero_method = stats::ZeroMethod::pratt;
  std::vector<ComparisonSpec> comparisons;  // in addition to the defaults
};

struct RunConfig {
  std::vector<ModelEndpoint> subjects;
  std::optional<ModelEndpoint> judge;
  std::optional<ModelEndpoint> interlocutor;
  std::optional<std::string> interlocutor_system_prompt;
  bool allow_self_judge = false;

  std::optional<std::filesystem::path> categories_file;
  std::vector<std::string> persona_categories;
  std::optional<std::filesystem::path> custom_personas;
  std::vector<DimensionKind> dimensions;
  std::size_t runs = kDefaultRuns;
  std::optional<std::filesystem::path> prompts_file;
  std::vector<std::filesystem::path> instrument_files;

  std::size_t concurrency = 4;
  int likert_retries = 2;
  int judge_retries = 2;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  std::map<DimensionKind, int> max_tokens;
  std::size_t chat_prompt_count = kChatPromptCount;
  bool allow_prompt_count_mismatch = false;
  bool judge_flip_order = false;
  std::optional<JudgeTemplates> judge_templates;
  StatsConfig stats;

  /// Source document, kept for hashing.
  nlohmann::json document;
  std::filesystem::path base_dir;

  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  /// Every validation failure, empty when the config is usable.
  std::vector<std::string> validate() const;

  std::vector<std::string> subject_names() const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Everything a config refers to, loaded and cross-checked.
struct Experiment {
  RunConfig config;
  PersonaCatalog catalog;
  std::vector<PersonaSpec> personas;
  std::map<std::string, SurveyInstrument> instruments;  // by evaluation category
  PromptSet prompts;
  std::string config_hash;

  const PersonaSpec* find_persona(const std::string& id) const;
  const SurveyInstrument* instrument_by_id(const std::string& id) const;
};

/// Loads referenced files and validates; throws Error(configuration) with
/// every problem listed.
Experiment load_experiment(RunConfig config);

/// Stable hash over the result-relevant parts of the config and the
/// contents of the files it references.
std::string config_hash(const RunConfig& config);

}  // namespace pcons
