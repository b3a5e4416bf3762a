#include "pcons/scoring.hpp"

#include <cctype>
#include <cmath>
#include <limits>
#include <set>

#include <spdlog/spdlog.h>

#include "pcons/error.hpp"
#include "pcons/parallel.hpp"
#include "pcons/text_util.hpp"

namespace pcons {

namespace {

constexpr double kTotalEps = 1e-9;

/// Integer tokens in order of appearance; decimals are skipped.
std::vector<long long> integer_tokens(std::string_view text) {
  std::vector<long long> out;
  for (std::size_t i = 0; i < text.size();) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
    const bool decimal_tail = j + 1 < text.size() && text[j] == '.' && std::isdigit(static_cast<unsigned char>(text[j + 1]));
    const bool decimal_head = i >= 2 && text[i - 1] == '.' && std::isdigit(static_cast<unsigned char>(text[i - 2]));
    const bool glued = i > 0 && std::isalpha(static_cast<unsigned char>(text[i - 1]));
    if (!decimal_tail && !decimal_head && !glued && j - i <= 9) {
      long long v = std::stoll(std::string(text.substr(i, j - i)));
      const bool negative = i > 0 && text[i - 1] == '-' && (i == 1 || !std::isalnum(static_cast<unsigned char>(text[i - 2])));
      out.push_back(negative ? -v : v);
    }
    i = j;
  }
  return out;
}

std::string normalize_choice(std::string_view raw) {
  std::string s = to_lower(trim(raw));
  auto strip = [](char c) { return c == '"' || c == '\'' || c == '[' || c == ']' || c == '*' || c == '`' || c == '.' || c == ' '; };
  while (!s.empty() && strip(s.front())) s.erase(s.begin());
  while (!s.empty() && strip(s.back())) s.pop_back();
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += c;
  }
  return out;
}

std::vector<std::string> names_for(const CharacteristicAxis& axis, const std::string& label) {
  std::vector<std::string> names{to_lower(label), to_lower(replace_all(label, "_", " ")),
                                 to_lower(axis.judge_option(label)), to_lower(axis.phrase(label))};
  if (auto it = axis.synonyms.find(label); it != axis.synonyms.end())
    for (const auto& s : it->second) names.push_back(to_lower(s));
  return names;
}

/// Values following `keyword` + ':' or '=' in `lower`, raw (unnormalized).
std::vector<std::string> field_values(std::string_view lower, std::string_view original, std::string_view keyword) {
  std::vector<std::string> out;
  for (auto pos = find_word(lower, keyword); pos != std::string_view::npos;
       pos = find_word(lower, keyword, pos + keyword.size())) {
    std::size_t i = pos + keyword.size();
    while (i < lower.size() && (lower[i] == '"' || lower[i] == '\'' || lower[i] == ' ' || lower[i] == '*')) ++i;
    if (i >= lower.size() || (lower[i] != ':' && lower[i] != '=')) continue;
    ++i;
    while (i < lower.size() && (lower[i] == ' ' || lower[i] == '\t')) ++i;
    char quote = 0;
    if (i < lower.size() && (lower[i] == '"' || lower[i] == '\'')) quote = lower[i++];
    std::size_t end = i;
    while (end < lower.size()) {
      const char c = lower[end];
      if (quote ? c == quote : (c == ',' || c == '}' || c == '\n' || c == ';')) break;
      ++end;
    }
    out.emplace_back(original.substr(i, end - i));
  }
  return out;
}

[[noreturn]] void judge_parse_error(const std::string& axis, const std::string& msg, std::string_view raw) {
  throw Error(ErrorCode::judge_parse, "axis '" + axis + "': " + msg + " in judge reply: " +
                                          std::string(raw.substr(0, 200)));
}

/// Single-pass {placeholder} substitution; unknown braces are copied through.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] == '{') {
      auto close = tmpl.find('}', i);
      if (close != std::string_view::npos) {
        auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Survey

int parse_likert(std::string_view text, const LikertScale& scale) {
  for (long long v : integer_tokens(text))
    if (v >= scale.min && v <= scale.max) return static_cast<int>(v);

  const std::string lower = to_lower(text);
  std::size_t best_pos = std::string::npos, best_len = 0;
  int best_value = 0;
  for (std::size_t i = 0; i < scale.anchors.size(); ++i) {
    const auto anchor = to_lower(trim(scale.anchors[i]));
    const auto pos = find_word(lower, anchor);
    if (pos == std::string::npos) continue;
    if (pos < best_pos || (pos == best_pos && anchor.size() > best_len)) {
      best_pos = pos;
      best_len = anchor.size();
      best_value = scale.min + static_cast<int>(i);
    }
  }
  if (best_pos != std::string::npos) return best_value;
  throw Error(ErrorCode::unparseable_answer, "no scale value in answer: " + std::string(text.substr(0, 120)));
}

bool SurveyAnswerSheet::complete_for(const SurveyInstrument& instrument) const {
  for (const auto& item : instrument.items)
    if (!answers.contains(item.id)) return false;
  return true;
}

std::string_view to_string(LabelSource source) {
  return source == LabelSource::survey_key ? "survey_key" : "judge";
}

double item_score(const SurveyItem& item, int answer, const LikertScale& scale) {
  const int value = item.reverse_scored ? scale.reverse(answer) : answer;
  return item.weight * static_cast<double>(value);
}

std::vector<AxisLabelResult> score_survey(const SurveyInstrument& instrument, const PersonaCategory& category,
                                          const SurveyAnswerSheet& sheet) {
  if (sheet.instrument_id != instrument.id)
    throw Error(ErrorCode::precondition, "answer sheet for '" + sheet.instrument_id + "' scored against '" +
                                             instrument.id + "'");
  for (const auto& item : instrument.items) {
    auto it = sheet.answers.find(item.id);
    if (it == sheet.answers.end())
      throw Error(ErrorCode::incomplete_survey, "instrument '" + instrument.id + "': item '" + item.id + "' unanswered");
    if (!instrument.scale.contains(it->second))
      throw Error(ErrorCode::precondition, "item '" + item.id + "' answer " + std::to_string(it->second) +
                                               " is off the scale");
  }

  std::vector<AxisLabelResult> out;
  for (const auto& axis : category.axes) {
    AxisLabelResult res;
    res.axis = axis.id;
    res.source = LabelSource::survey_key;
    bool used = false;
    if (axis.is_binary()) {
      double total = 0.0;
      for (const auto& item : instrument.items) {
        if (item.axis != axis.id) continue;
        used = true;
        total += item_score(item, sheet.answers.at(item.id), instrument.scale);
      }
      if (!used) continue;
      res.totals["total"] = total;
      const double mid = instrument.midpoint(axis.id);
      std::string high = axis.labels[0];
      if (auto it = instrument.thresholds.find(axis.id); it != instrument.thresholds.end() && !it->second.high_label.empty())
        high = it->second.high_label;
      const std::string low = high == axis.labels[0] ? axis.labels[1] : axis.labels[0];
      if (total > mid + kTotalEps)
        res.label = high;
      else if (total < mid - kTotalEps)
        res.label = low;
    } else {
      for (const auto& label : axis.labels) res.totals[label] = 0.0;
      for (const auto& item : instrument.items) {
        if (item.axis != axis.id) continue;
        used = true;
        res.totals[item.target] += item_score(item, sheet.answers.at(item.id), instrument.scale);
      }
      if (!used) continue;
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& label : axis.labels) {
        const double t = res.totals[label];
        if (t > best + kTotalEps) {
          best = t;
          res.label = label;
          res.tie = false;
        } else if (std::abs(t - best) <= kTotalEps) {
          res.tie = true;
        }
      }
      if (res.tie)
        spdlog::debug("instrument {} axis {}: class tie broken in favour of '{}'", instrument.id, axis.id, *res.label);
    }
    out.push_back(std::move(res));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Judge

const JudgeTemplates& JudgeTemplates::standard() {
  static const JudgeTemplates t{
      "You will help annotating a dataset. Answer the questions as asked, do not provide extra explanations, only "
      "choose one of the provided options.",
      "Below you can find a question and the answer is written by a person. {instruction}\n{response}\nIs the "
      "person who wrote this {options}\nYou **must** between one of the options. First output this category, then "
      "generate a confidence score, where 1 is Very unconfident, 2 is unconfident, 3 is confident, 4 is very "
      "confident. Use the following structured output and fill in [category] and [confidence_score]: "
      "{choice:[category],confidence:[confidence_score]}",
      "Below you can find the conversation between an assistant and person\nassistant: {instruction}\nperson: "
      "{response}\nassistant: {interlocutor}\nperson: {final_response}\nIs the person who wrote this "
      "{options}\nYou **must** between one of the options. First output this category, then generate a confidence "
      "score, where 1 is Very unconfident, 2 is unconfident, 3 is confident, 4 is very confident. Use the following "
      "structured output and fill in [category] and [confidence_score]: "
      "{choice:[category],confidence:[confidence_score]}"};
  return t;
}

JudgeTemplates JudgeTemplates::from_json(const nlohmann::json& j) {
  const auto& d = standard();
  return JudgeTemplates{j.value("system", d.system), j.value("single", d.single),
                        j.value("conversation", d.conversation)};
}

std::string judge_option_text(const CharacteristicAxis& axis, bool flip_order) {
  if (!flip_order && !axis.judge_question.empty()) return axis.judge_question;
  std::vector<std::string> labels = axis.labels;
  if (flip_order) std::reverse(labels.begin(), labels.end());
  std::string out = axis.judge_prefix;
  for (std::size_t i = 0; i < labels.size(); ++i) out += (i ? " or " : "") + axis.judge_option(labels[i]);
  return out;
}

JudgePrompt build_judge_prompt(DimensionKind dimension, const Transcript& transcript,
                               const CharacteristicAxis& axis, const JudgeOptions& options) {
  if (!is_judged(dimension)) throw Error(ErrorCode::precondition, "survey responses are scored by key, not judged");
  if (transcript.dimension != dimension)
    throw Error(ErrorCode::precondition, "transcript dimension does not match the judged dimension");
  transcript.validate();
  if (axis.labels.size() < 2) throw Error(ErrorCode::unknown_axis, "axis '" + axis.id + "' is not judgeable");

  const auto& tmpl = options.templates ? *options.templates : JudgeTemplates::standard();
  std::map<std::string, std::string> values{{"instruction", transcript.instruction()},
                                            {"options", judge_option_text(axis, options.flip_order)}};
  JudgePrompt out;
  out.system = tmpl.system;
  if (dimension == DimensionKind::multichat) {
    values["response"] = transcript.messages.at(transcript.persona_reply_indices[0]).text;
    values["interlocutor"] = transcript.messages.at(transcript.persona_reply_indices[0] + 1).text;
    values["final_response"] = transcript.messages.at(transcript.persona_reply_indices[1]).text;
    out.user = render_template(tmpl.conversation, values);
  } else {
    values["response"] = transcript.persona_text();
    out.user = render_template(tmpl.single, values);
  }
  return out;
}

std::string format_judgment(const CharacteristicAxis& axis, const std::string& label, int confidence) {
  if (!axis.has_label(label)) throw Error(ErrorCode::unknown_axis, "label '" + label + "' not on axis '" + axis.id + "'");
  return "{choice:" + axis.judge_option(label) + ",confidence:" + std::to_string(confidence) + "}";
}

std::optional<std::string> canonical_choice(std::string_view choice, const CharacteristicAxis& axis) {
  const auto norm = normalize_choice(choice);
  if (norm.empty()) return std::nullopt;
  std::set<std::string> exact, partial;
  for (const auto& label : axis.labels) {
    for (const auto& name : names_for(axis, label)) {
      if (name == norm) exact.insert(label);
      if (find_word(norm, name) != std::string::npos) partial.insert(label);
    }
  }
  if (exact.size() == 1) return *exact.begin();
  if (exact.empty() && partial.size() == 1) return *partial.begin();
  return std::nullopt;
}

Judgment parse_judgment(std::string_view raw, const CharacteristicAxis& axis) {
  const std::string lower = to_lower(raw);

  std::set<std::string> labels;
  const auto choices = field_values(lower, raw, "choice");
  if (choices.empty()) judge_parse_error(axis.id, "missing choice", raw);
  for (const auto& c : choices) {
    auto label = canonical_choice(c, axis);
    if (!label) judge_parse_error(axis.id, "choice '" + c + "' does not map to one label", raw);
    labels.insert(*label);
  }
  if (labels.size() != 1) judge_parse_error(axis.id, "conflicting choices", raw);

  std::set<int> confidences;
  for (const auto& c : field_values(lower, raw, "confidence")) {
    auto ints = integer_tokens(c);
    if (ints.size() != 1) judge_parse_error(axis.id, "confidence '" + c + "' is not a single integer", raw);
    confidences.insert(static_cast<int>(ints.front()));
  }
  if (confidences.empty()) judge_parse_error(axis.id, "missing confidence", raw);
  if (confidences.size() != 1) judge_parse_error(axis.id, "conflicting confidences", raw);
  const int confidence = *confidences.begin();
  if (confidence < kMinConfidence || confidence > kMaxConfidence)
    judge_parse_error(axis.id, "confidence " + std::to_string(confidence) + " outside 1..4", raw);

  Judgment j;
  j.axis = axis.id;
  j.choice = *labels.begin();
  j.confidence = confidence;
  j.neutral = is_neutral_confidence(confidence);
  j.raw = std::string(raw);
  return j;
}

void check_judge_guard(const std::string& judge, const std::vector<std::string>& subjects, bool allow_self_judge) {
  for (const auto& s : subjects) {
    if (s != judge) continue;
    if (!allow_self_judge)
      throw Error(ErrorCode::configuration, "judge endpoint '" + judge +
                                                "' is also a subject; set allow_self_judge to override");
    spdlog::warn("judge endpoint '{}' also serves as a subject (self-preference risk)", judge);
  }
}

Judgment judge_one(Gateway& gateway, const std::string& judge_endpoint, const JudgeTarget& target,
                   const CharacteristicAxis& axis, const JudgeAllOptions& options, int* attempts) {
  const auto prompt = build_judge_prompt(target.transcript.dimension, target.transcript, axis, options.prompt);
  const std::vector<ChatMessage> messages{{ChatRole::system, prompt.system}, {ChatRole::user, prompt.user}};
  const auto key = target.response_id + "#" + axis.id;
  for (int attempt = 0;; ++attempt) {
    if (attempts) *attempts = attempt + 1;
    auto reply = gateway.complete(judge_endpoint, messages, {key, derive_seed(attempt, key), std::nullopt});
    try {
      auto j = parse_judgment(reply.text, axis);
      j.response_id = target.response_id;
      return j;
    } catch (const Error& e) {
      if (attempt >= options.parse_retries) throw;
      spdlog::info("re-judging {} after parse failure: {}", key, e.what());
    }
  }
}

std::vector<JudgeOutcome> judge_all(Gateway& gateway, const std::string& judge_endpoint,
                                    const std::vector<JudgeTarget>& targets,
                                    const std::vector<const CharacteristicAxis*>& axes,
                                    const JudgeAllOptions& options) {
  check_judge_guard(judge_endpoint, options.subject_endpoints, options.allow_self_judge);
  std::vector<JudgeOutcome> out(targets.size() * axes.size());
  parallel_for(out.size(), options.threads, [&](std::size_t i) {
    const auto& target = targets[i / axes.size()];
    const auto& axis = *axes[i % axes.size()];
    auto& o = out[i];
    o.response_id = target.response_id;
    o.axis = axis.id;
    try {
      o.judgment = judge_one(gateway, judge_endpoint, target, axis, options, &o.attempts);
    } catch (const Error& e) {
      o.error = e.what();
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Kappa

KappaResult cohen_kappa(const std::vector<std::pair<std::string, std::string>>& pairs) {
  if (pairs.size() < 2) throw Error(ErrorCode::insufficient_data, "kappa needs at least 2 rated pairs");
  std::map<std::string, double> first, second;
  std::size_t agree = 0;
  for (const auto& [a, b] : pairs) {
    first[a] += 1.0;
    second[b] += 1.0;
    agree += a == b;
  }
  const double n = static_cast<double>(pairs.size());
  KappaResult r;
  r.n = pairs.size();
  r.observed_agreement = static_cast<double>(agree) / n;
  for (const auto& [label, count] : first)
    if (auto it = second.find(label); it != second.end()) r.expected_agreement += (count / n) * (it->second / n);
  if (std::abs(1.0 - r.expected_agreement) < 1e-15) {
    r.degenerate = true;
    r.kappa = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.kappa = (r.observed_agreement - r.expected_agreement) / (1.0 - r.expected_agreement);
  return r;
}

}  // namespace pcons
