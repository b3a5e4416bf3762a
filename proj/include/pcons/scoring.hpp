#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcons/model_gateway.hpp"
#include "pcons/persona_catalog.hpp"
#include "pcons/task_dimensions.hpp"

namespace pcons {

// ---------------------------------------------------------------------------
// Survey scoring

/// First in-range integer in `text`, else the earliest anchor phrase.
/// Throws unparseable_answer when neither is present.
int parse_likert(std::string_view text, const LikertScale& scale);

struct SurveyAnswerSheet {
  std::string instrument_id;
  std::map<std::string, int> answers;   // item id -> scale value
  std::vector<std::string> provenance;  // transcript keys

  bool complete_for(const SurveyInstrument& instrument) const;
};

enum class LabelSource { survey_key, judge };
std::string_view to_string(LabelSource source);

struct AxisLabelResult {
  std::string axis;
  std::optional<std::string> label;  // empty -> neutral
  LabelSource source = LabelSource::survey_key;
  bool tie = false;                  // occupation argmax tie, broken by class order
  std::map<std::string, double> totals;

  bool neutral() const { return !label.has_value(); }
};

/// Scored value for one answer, applying reversal: x -> min + max - x.
double item_score(const SurveyItem& item, int answer, const LikertScale& scale);

std::vector<AxisLabelResult> score_survey(const SurveyInstrument& instrument, const PersonaCategory& category,
                                          const SurveyAnswerSheet& sheet);

// ---------------------------------------------------------------------------
// LLM judge

struct JudgeTemplates {
  std::string system;
  std::string single;        // {instruction} {response} {options}
  std::string conversation;  // {instruction} {response} {interlocutor} {final_response} {options}

  static const JudgeTemplates& standard();
  static JudgeTemplates from_json(const nlohmann::json& j);
};

struct JudgePrompt {
  std::string system;
  std::string user;
};

struct JudgeOptions {
  bool flip_order = false;  // reverse option order for bias audits
  const JudgeTemplates* templates = nullptr;  // standard() when null
};

/// Option text for one axis, e.g. "happy or sad".
std::string judge_option_text(const CharacteristicAxis& axis, bool flip_order = false);

JudgePrompt build_judge_prompt(DimensionKind dimension, const Transcript& transcript,
                               const CharacteristicAxis& axis, const JudgeOptions& options = {});

struct Judgment {
  std::string axis;
  std::string choice;
  int confidence = 0;
  bool neutral = false;
  std::string raw;
  std::string response_id;
};

inline constexpr int kMinConfidence = 1;
inline constexpr int kMaxConfidence = 4;
inline bool is_neutral_confidence(int confidence) { return confidence <= 2; }

/// Canonical structured output: {choice:<option>,confidence:<n>}.
std::string format_judgment(const CharacteristicAxis& axis, const std::string& label, int confidence);

/// Throws judge_parse when choice or confidence is missing, ambiguous or
/// does not map onto the axis.
Judgment parse_judgment(std::string_view raw, const CharacteristicAxis& axis);

/// Maps a free-text choice onto a canonical label; nullopt if none or
/// several labels match.
std::optional<std::string> canonical_choice(std::string_view choice, const CharacteristicAxis& axis);

struct JudgeTarget {
  std::string response_id;
  Transcript transcript;
};

struct JudgeOutcome {
  std::string response_id;
  std::string axis;
  std::optional<Judgment> judgment;
  std::string error;
  int attempts = 0;
};

struct JudgeAllOptions {
  std::vector<std::string> subject_endpoints;
  bool allow_self_judge = false;
  int parse_retries = 2;
  std::size_t threads = 4;
  JudgeOptions prompt;
};

/// Throws configuration when the judge is also a subject and no override
/// is set.
void check_judge_guard(const std::string& judge, const std::vector<std::string>& subjects, bool allow_self_judge);

Judgment judge_one(Gateway& gateway, const std::string& judge_endpoint, const JudgeTarget& target,
                   const CharacteristicAxis& axis, const JudgeAllOptions& options, int* attempts = nullptr);

/// One outcome per (target, axis), in target-major order.
std::vector<JudgeOutcome> judge_all(Gateway& gateway, const std::string& judge_endpoint,
                                    const std::vector<JudgeTarget>& targets,
                                    const std::vector<const CharacteristicAxis*>& axes,
                                    const JudgeAllOptions& options = {});

// ---------------------------------------------------------------------------
// Judge validation

struct KappaResult {
  double kappa = 0.0;
  double observed_agreement = 0.0;
  double expected_agreement = 0.0;
  std::size_t n = 0;
  bool degenerate = false;  // expected agreement is 1: kappa undefined
};

KappaResult cohen_kappa(const std::vector<std::pair<std::string, std::string>>& pairs);

}  // namespace pcons
