#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcons/model_gateway.hpp"
#include "pcons/persona_catalog.hpp"

namespace pcons {

enum class DimensionKind { survey, essay, social_media, singlechat, multichat };

inline constexpr DimensionKind kAllDimensions[] = {DimensionKind::survey, DimensionKind::essay,
                                                   DimensionKind::social_media, DimensionKind::singlechat,
                                                   DimensionKind::multichat};

std::string_view to_string(DimensionKind kind);
DimensionKind parse_dimension(std::string_view text);
bool is_judged(DimensionKind kind);  // everything except survey

inline constexpr std::size_t kDefaultRuns = 5;
inline constexpr std::size_t kChatPromptCount = 8;

// ---------------------------------------------------------------------------
// Survey instruments

struct LikertScale {
  int min = 1;
  int max = 5;
  /// Anchor phrase per scale point, min first. May be empty.
  std::vector<std::string> anchors;

  int reverse(int value) const { return min + max - value; }
  bool contains(int value) const { return value >= min && value <= max; }
};

struct SurveyItem {
  std::string id;
  std::string text;
  std::string axis;
  /// Multi-class axes only: the class this item scores.
  std::string target;
  bool reverse_scored = false;
  double weight = 1.0;
};

/// Per-axis thresholding for binary axes. Totals above `midpoint` map to
/// `high_label`, below to the other label, equal to neutral.
struct AxisThreshold {
  std::optional<double> midpoint;
  std::string high_label;
};

struct SurveyInstrument {
  std::string id;
  std::string category_id;
  LikertScale scale;
  std::vector<SurveyItem> items;
  std::map<std::string, AxisThreshold> thresholds;
  std::string prompt_template;

  static SurveyInstrument from_json(const nlohmann::json& j);
  static SurveyInstrument load(const std::filesystem::path& path);

  /// Throws invalid_instrument when items reference unknown axes or a
  /// threshold falls outside the attainable total range.
  void validate(const PersonaCategory& category) const;

  const SurveyItem* find_item(std::string_view item_id) const;
  /// Attainable (min, max) weighted total for a binary axis.
  std::pair<double, double> total_range(const std::string& axis) const;
  double midpoint(const std::string& axis) const;
  std::string render_item(const SurveyItem& item) const;
};

// ---------------------------------------------------------------------------
// Prompt sets

struct Prompt {
  std::string id;
  std::string text;
};

/// Open-response prompt texts keyed by "essay", "social_media", "chat".
struct PromptSet {
  std::map<std::string, std::vector<Prompt>> sets;

  static PromptSet from_json(const nlohmann::json& j);
  static PromptSet load(const std::filesystem::path& path);
  /// Throws configuration error when the set is absent or empty.
  const std::vector<Prompt>& get(std::string_view name) const;
};

// ---------------------------------------------------------------------------
// Task units and transcripts

struct TaskUnit {
  std::string model;
  PersonaSpec persona;
  DimensionKind dimension = DimensionKind::essay;
  std::string prompt_id;
  std::string prompt_text;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::string interlocutor;   // multichat only
  std::string instrument_id;  // survey only
  std::string item_id;        // survey only

  /// Idempotency key: model|persona|dimension|prompt|run.
  std::string key() const;
};

std::string make_unit_key(std::string_view model, std::string_view persona, DimensionKind dim,
                          std::string_view prompt_id, std::size_t run);
std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view key);

enum class TranscriptRole { system, persona_llm, interlocutor, user };
std::string_view to_string(TranscriptRole role);

struct TranscriptMessage {
  TranscriptRole role = TranscriptRole::user;
  std::string text;
};

/// Messages start at the instruction (index 0); the persona system prompt is
/// held separately, so persona replies sit at {1} or {1, 3}.
struct Transcript {
  DimensionKind dimension = DimensionKind::essay;
  std::string system_prompt;
  std::vector<TranscriptMessage> messages;
  std::vector<std::size_t> persona_reply_indices;

  /// Throws precondition when the reply-count invariant is violated.
  void validate() const;
  const std::string& instruction() const;
  /// Persona replies joined by a blank line.
  std::string persona_text() const;
};

void to_json(nlohmann::json& j, const Transcript& t);
void from_json(const nlohmann::json& j, Transcript& t);

struct Diagnostics {
  std::vector<std::string> warnings;
};

std::vector<TaskUnit> build_survey_tasks(const std::string& model, const SurveyInstrument& instrument,
                                         const PersonaSpec& persona, std::size_t runs, std::uint64_t base_seed = 0);

std::vector<TaskUnit> build_generation_tasks(const std::string& model, DimensionKind kind,
                                             const PersonaSpec& persona, std::size_t runs,
                                             const PromptSet& prompts, std::uint64_t base_seed = 0);

struct ChatPlanOptions {
  std::string interlocutor;  // required for multichat
  std::size_t expected_prompts = kChatPromptCount;
  bool allow_prompt_count_mismatch = false;  // silences the count warning
};

std::vector<TaskUnit> build_chat_tasks(const std::string& model, DimensionKind kind, const PersonaSpec& persona,
                                       std::size_t runs, const PromptSet& prompts, const ChatPlanOptions& options,
                                       std::uint64_t base_seed = 0, Diagnostics* diagnostics = nullptr);

struct ElicitationOptions {
  std::optional<std::string> interlocutor_system_prompt;
  std::map<DimensionKind, int> max_tokens;

  std::optional<int> max_tokens_for(DimensionKind kind) const;
};

/// Messages sent to the subject model for a single-reply unit.
std::vector<ChatMessage> subject_messages(const TaskUnit& unit);

/// Single-reply elicitation (survey, essay, social media, singlechat).
Transcript run_single(Gateway& gateway, const TaskUnit& unit, const ElicitationOptions& options = {});

/// Persona answer, interlocutor reply, persona follow-up with full history.
/// Any gateway failure propagates; no partial transcript is returned.
Transcript run_multichat(Gateway& gateway, const TaskUnit& unit, const ElicitationOptions& options = {});

Transcript elicit(Gateway& gateway, const TaskUnit& unit, const ElicitationOptions& options = {});

}  // namespace pcons
