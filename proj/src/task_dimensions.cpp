#include "pcons/task_dimensions.hpp"

#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "pcons/error.hpp"
#include "pcons/text_util.hpp"

namespace pcons {

namespace {

constexpr std::string_view kDefaultSurveyTemplate =
    "Please indicate how much you agree with the following statement, using a scale from {min} ({min_anchor}) to "
    "{max} ({max_anchor}). Answer with a single number.\nStatement: {item}";

[[noreturn]] void instrument_error(const std::string& msg) { throw Error(ErrorCode::invalid_instrument, msg); }

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::configuration, path.string() + ": " + e.what());
  }
}

TranscriptRole parse_role(std::string_view s) {
  if (s == "system") return TranscriptRole::system;
  if (s == "persona_llm") return TranscriptRole::persona_llm;
  if (s == "interlocutor") return TranscriptRole::interlocutor;
  if (s == "user") return TranscriptRole::user;
  throw Error(ErrorCode::store_corruption, "unknown transcript role '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(DimensionKind kind) {
  switch (kind) {
    case DimensionKind::survey: return "survey";
    case DimensionKind::essay: return "essay";
    case DimensionKind::social_media: return "social_media";
    case DimensionKind::singlechat: return "singlechat";
    case DimensionKind::multichat: return "multichat";
  }
  return "essay";
}

DimensionKind parse_dimension(std::string_view text) {
  for (auto d : kAllDimensions)
    if (to_string(d) == text) return d;
  throw Error(ErrorCode::configuration, "unknown dimension '" + std::string(text) + "'");
}

bool is_judged(DimensionKind kind) { return kind != DimensionKind::survey; }

std::string_view to_string(TranscriptRole role) {
  switch (role) {
    case TranscriptRole::system: return "system";
    case TranscriptRole::persona_llm: return "persona_llm";
    case TranscriptRole::interlocutor: return "interlocutor";
    case TranscriptRole::user: return "user";
  }
  return "user";
}

// ---------------------------------------------------------------------------
// SurveyInstrument

SurveyInstrument SurveyInstrument::from_json(const nlohmann::json& j) {
  try {
    SurveyInstrument ins;
    ins.id = j.at("id").get<std::string>();
    ins.category_id = j.at("category").get<std::string>();
    const auto& s = j.at("scale");
    ins.scale.min = s.at("min").get<int>();
    ins.scale.max = s.at("max").get<int>();
    ins.scale.anchors = s.value("anchors", std::vector<std::string>{});
    ins.prompt_template = j.value("prompt_template", std::string(kDefaultSurveyTemplate));
    if (j.contains("thresholds")) {
      for (const auto& [axis, t] : j.at("thresholds").items()) {
        AxisThreshold th;
        if (t.contains("midpoint")) th.midpoint = t.at("midpoint").get<double>();
        th.high_label = t.value("high_label", std::string());
        ins.thresholds[axis] = th;
      }
    }
    for (const auto& it : j.at("items")) {
      SurveyItem item;
      item.id = it.at("id").get<std::string>();
      item.text = it.at("text").get<std::string>();
      item.axis = it.at("axis").get<std::string>();
      item.target = it.value("target", std::string());
      item.reverse_scored = it.value("reverse", false);
      item.weight = it.value("weight", 1.0);
      ins.items.push_back(std::move(item));
    }
    return ins;
  } catch (const nlohmann::json::exception& e) {
    instrument_error(std::string("malformed instrument: ") + e.what());
  }
}

SurveyInstrument SurveyInstrument::load(const std::filesystem::path& path) { return from_json(read_json(path)); }

const SurveyItem* SurveyInstrument::find_item(std::string_view item_id) const {
  for (const auto& item : items)
    if (item.id == item_id) return &item;
  return nullptr;
}

std::pair<double, double> SurveyInstrument::total_range(const std::string& axis) const {
  double lo = 0.0, hi = 0.0;
  for (const auto& item : items) {
    if (item.axis != axis) continue;
    const double a = item.weight * scale.min, b = item.weight * scale.max;
    lo += std::min(a, b);
    hi += std::max(a, b);
  }
  return {lo, hi};
}

double SurveyInstrument::midpoint(const std::string& axis) const {
  if (auto it = thresholds.find(axis); it != thresholds.end() && it->second.midpoint) return *it->second.midpoint;
  auto [lo, hi] = total_range(axis);
  return (lo + hi) / 2.0;
}

void SurveyInstrument::validate(const PersonaCategory& category) const {
  if (id.empty()) instrument_error("instrument with empty id");
  if (category.id != category_id)
    instrument_error("instrument '" + id + "' belongs to '" + category_id + "', not '" + category.id + "'");
  if (items.empty()) instrument_error("instrument '" + id + "' has no items");
  if (scale.min >= scale.max) instrument_error("instrument '" + id + "': scale min must be below max");
  if (!scale.anchors.empty() && scale.anchors.size() != static_cast<std::size_t>(scale.max - scale.min + 1))
    instrument_error("instrument '" + id + "': anchors must cover every scale point");

  std::set<std::string> ids;
  std::map<std::string, std::set<std::string>> targets;
  for (const auto& item : items) {
    if (!ids.insert(item.id).second) instrument_error("instrument '" + id + "' repeats item '" + item.id + "'");
    const auto* axis = category.find_axis(item.axis);
    if (axis == nullptr) instrument_error("item '" + item.id + "' references unknown axis '" + item.axis + "'");
    if (item.weight == 0.0) instrument_error("item '" + item.id + "' has zero weight");
    if (!axis->is_binary()) {
      if (!axis->has_label(item.target))
        instrument_error("item '" + item.id + "' must target one of the classes of axis '" + axis->id + "'");
      if (item.weight < 0.0) instrument_error("item '" + item.id + "': class items need positive weights");
      targets[axis->id].insert(item.target);
    }
  }
  for (const auto& axis : category.axes) {
    bool used = false;
    for (const auto& item : items) used = used || item.axis == axis.id;
    if (!used) continue;
    if (axis.is_binary()) {
      auto [lo, hi] = total_range(axis.id);
      const double mid = midpoint(axis.id);
      if (!(mid > lo && mid < hi))
        instrument_error("instrument '" + id + "': threshold for axis '" + axis.id + "' lies outside (" +
                         std::to_string(lo) + ", " + std::to_string(hi) + ")");
      if (auto it = thresholds.find(axis.id); it != thresholds.end() && !it->second.high_label.empty() &&
                                               !axis.has_label(it->second.high_label))
        instrument_error("instrument '" + id + "': unknown high_label for axis '" + axis.id + "'");
    } else if (targets[axis.id].size() != axis.labels.size()) {
      instrument_error("instrument '" + id + "': every class of axis '" + axis.id + "' needs at least one item");
    }
  }
  for (const auto& [axis, _] : thresholds)
    if (category.find_axis(axis) == nullptr) instrument_error("threshold for unknown axis '" + axis + "'");
}

std::string SurveyInstrument::render_item(const SurveyItem& item) const {
  std::string out = prompt_template;
  const std::string min_anchor = scale.anchors.empty() ? "lowest" : scale.anchors.front();
  const std::string max_anchor = scale.anchors.empty() ? "highest" : scale.anchors.back();
  std::string listing;
  for (std::size_t i = 0; i < scale.anchors.size(); ++i)
    listing += (i ? ", " : "") + std::to_string(scale.min + static_cast<int>(i)) + " = " + scale.anchors[i];
  out = replace_all(out, "{min_anchor}", min_anchor);
  out = replace_all(out, "{max_anchor}", max_anchor);
  out = replace_all(out, "{min}", std::to_string(scale.min));
  out = replace_all(out, "{max}", std::to_string(scale.max));
  out = replace_all(out, "{anchors}", listing);
  return replace_all(out, "{item}", item.text);
}

// ---------------------------------------------------------------------------
// PromptSet

PromptSet PromptSet::from_json(const nlohmann::json& j) {
  PromptSet ps;
  try {
    for (const auto& [name, list] : j.items()) {
      if (name == "schema_version") continue;
      std::vector<Prompt> prompts;
      std::set<std::string> ids;
      for (std::size_t i = 0; i < list.size(); ++i) {
        Prompt p;
        if (list[i].is_string()) {
          p.id = name + "-" + std::to_string(i + 1);
          p.text = list[i].get<std::string>();
        } else {
          p.id = list[i].at("id").get<std::string>();
          p.text = list[i].at("text").get<std::string>();
        }
        if (trim(p.text).empty()) throw Error(ErrorCode::configuration, "empty prompt in set '" + name + "'");
        if (!ids.insert(p.id).second) throw Error(ErrorCode::configuration, "duplicate prompt id '" + p.id + "'");
        prompts.push_back(std::move(p));
      }
      ps.sets[name] = std::move(prompts);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::configuration, std::string("malformed prompt set: ") + e.what());
  }
  return ps;
}

PromptSet PromptSet::load(const std::filesystem::path& path) { return from_json(read_json(path)); }

const std::vector<Prompt>& PromptSet::get(std::string_view name) const {
  auto it = sets.find(std::string(name));
  if (it == sets.end() || it->second.empty())
    throw Error(ErrorCode::configuration, "prompt set '" + std::string(name) + "' is not configured");
  return it->second;
}

// ---------------------------------------------------------------------------
// Task units

std::string make_unit_key(std::string_view model, std::string_view persona, DimensionKind dim,
                          std::string_view prompt_id, std::size_t run) {
  std::string key;
  key.append(model).append("|").append(persona).append("|").append(to_string(dim)).append("|");
  key.append(prompt_id).append("|").append(std::to_string(run));
  return key;
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::string_view key) {
  return mix64(fnv1a64(key) ^ mix64(base_seed));
}

std::string TaskUnit::key() const { return make_unit_key(model, persona.id, dimension, prompt_id, run); }

std::vector<TaskUnit> build_survey_tasks(const std::string& model, const SurveyInstrument& instrument,
                                         const PersonaSpec& persona, std::size_t runs, std::uint64_t base_seed) {
  if (instrument.items.empty()) instrument_error("instrument '" + instrument.id + "' has no items");
  std::vector<TaskUnit> out;
  out.reserve(instrument.items.size() * runs);
  for (const auto& item : instrument.items) {
    for (std::size_t run = 0; run < runs; ++run) {
      TaskUnit u;
      u.model = model;
      u.persona = persona;
      u.dimension = DimensionKind::survey;
      u.instrument_id = instrument.id;
      u.item_id = item.id;
      u.prompt_id = instrument.id + "/" + item.id;
      u.prompt_text = instrument.render_item(item);
      u.run = run;
      u.seed = derive_seed(base_seed, u.key());
      out.push_back(std::move(u));
    }
  }
  return out;
}

namespace {

std::vector<TaskUnit> prompt_major_units(const std::string& model, DimensionKind kind, const PersonaSpec& persona,
                                         std::size_t runs, const std::vector<Prompt>& prompts,
                                         std::uint64_t base_seed, const std::string& interlocutor) {
  std::vector<TaskUnit> out;
  out.reserve(prompts.size() * runs);
  for (const auto& p : prompts) {
    for (std::size_t run = 0; run < runs; ++run) {
      TaskUnit u;
      u.model = model;
      u.persona = persona;
      u.dimension = kind;
      u.prompt_id = p.id;
      u.prompt_text = p.text;
      u.run = run;
      u.interlocutor = interlocutor;
      u.seed = derive_seed(base_seed, u.key());
      out.push_back(std::move(u));
    }
  }
  return out;
}

}  // namespace

std::vector<TaskUnit> build_generation_tasks(const std::string& model, DimensionKind kind,
                                             const PersonaSpec& persona, std::size_t runs,
                                             const PromptSet& prompts, std::uint64_t base_seed) {
  if (kind != DimensionKind::essay && kind != DimensionKind::social_media)
    throw Error(ErrorCode::precondition, "generation tasks are essay or social_media, not " +
                                             std::string(to_string(kind)));
  return prompt_major_units(model, kind, persona, runs, prompts.get(to_string(kind)), base_seed, {});
}

std::vector<TaskUnit> build_chat_tasks(const std::string& model, DimensionKind kind, const PersonaSpec& persona,
                                       std::size_t runs, const PromptSet& prompts, const ChatPlanOptions& options,
                                       std::uint64_t base_seed, Diagnostics* diagnostics) {
  if (kind != DimensionKind::singlechat && kind != DimensionKind::multichat)
    throw Error(ErrorCode::precondition, "chat tasks are singlechat or multichat, not " +
                                             std::string(to_string(kind)));
  if (kind == DimensionKind::multichat && options.interlocutor.empty())
    throw Error(ErrorCode::configuration, "multichat needs an interlocutor endpoint");
  const auto& chat = prompts.get("chat");
  if (chat.size() != options.expected_prompts && !options.allow_prompt_count_mismatch) {
    auto msg = "chat prompt set has " + std::to_string(chat.size()) + " prompts, expected " +
               std::to_string(options.expected_prompts);
    spdlog::warn("{}", msg);
    if (diagnostics) diagnostics->warnings.push_back(std::move(msg));
  }
  return prompt_major_units(model, kind, persona, runs, chat, base_seed,
                            kind == DimensionKind::multichat ? options.interlocutor : std::string());
}

// ---------------------------------------------------------------------------
// Transcripts and elicitation

void Transcript::validate() const {
  const std::size_t expected = dimension == DimensionKind::multichat ? 2 : 1;
  std::size_t persona = 0, interlocutor = 0;
  for (const auto& m : messages) {
    persona += m.role == TranscriptRole::persona_llm;
    interlocutor += m.role == TranscriptRole::interlocutor;
  }
  if (persona != expected || persona_reply_indices.size() != expected)
    throw Error(ErrorCode::precondition, std::string(to_string(dimension)) + " transcript needs " +
                                             std::to_string(expected) + " persona replies");
  for (auto idx : persona_reply_indices)
    if (idx >= messages.size() || messages[idx].role != TranscriptRole::persona_llm)
      throw Error(ErrorCode::precondition, "persona reply index does not point at a persona reply");
  if (dimension == DimensionKind::multichat) {
    const auto a = persona_reply_indices[0], b = persona_reply_indices[1];
    if (interlocutor != 1 || b != a + 2 || messages[a + 1].role != TranscriptRole::interlocutor)
      throw Error(ErrorCode::precondition, "multichat transcript needs one interlocutor reply between persona turns");
  } else if (interlocutor != 0) {
    throw Error(ErrorCode::precondition, "single-reply transcript must not contain interlocutor turns");
  }
  if (messages.empty() || messages.front().role != TranscriptRole::user)
    throw Error(ErrorCode::precondition, "transcript must start with the instruction");
}

const std::string& Transcript::instruction() const {
  if (messages.empty()) throw Error(ErrorCode::precondition, "empty transcript");
  return messages.front().text;
}

std::string Transcript::persona_text() const {
  std::string out;
  for (std::size_t i = 0; i < persona_reply_indices.size(); ++i) {
    if (i) out += "\n\n";
    out += messages.at(persona_reply_indices[i]).text;
  }
  return out;
}

void to_json(nlohmann::json& j, const Transcript& t) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : t.messages) msgs.push_back({{"role", std::string(to_string(m.role))}, {"text", m.text}});
  j = nlohmann::json{{"dimension", std::string(to_string(t.dimension))},
                     {"system_prompt", t.system_prompt},
                     {"messages", std::move(msgs)},
                     {"persona_reply_indices", t.persona_reply_indices}};
}

void from_json(const nlohmann::json& j, Transcript& t) {
  t.dimension = parse_dimension(j.at("dimension").get<std::string>());
  t.system_prompt = j.at("system_prompt").get<std::string>();
  t.messages.clear();
  for (const auto& m : j.at("messages"))
    t.messages.push_back({parse_role(m.at("role").get<std::string>()), m.at("text").get<std::string>()});
  t.persona_reply_indices = j.at("persona_reply_indices").get<std::vector<std::size_t>>();
}

std::optional<int> ElicitationOptions::max_tokens_for(DimensionKind kind) const {
  if (auto it = max_tokens.find(kind); it != max_tokens.end()) return it->second;
  return std::nullopt;
}

std::vector<ChatMessage> subject_messages(const TaskUnit& unit) {
  return {{ChatRole::system, unit.persona.system_prompt}, {ChatRole::user, unit.prompt_text}};
}

Transcript run_single(Gateway& gateway, const TaskUnit& unit, const ElicitationOptions& options) {
  if (unit.dimension == DimensionKind::multichat)
    throw Error(ErrorCode::precondition, "run_single called on a multichat unit");
  CallOptions call{unit.key(), unit.seed, options.max_tokens_for(unit.dimension)};
  auto reply = gateway.complete(unit.model, subject_messages(unit), call);
  Transcript t;
  t.dimension = unit.dimension;
  t.system_prompt = unit.persona.system_prompt;
  t.messages = {{TranscriptRole::user, unit.prompt_text}, {TranscriptRole::persona_llm, std::move(reply.text)}};
  t.persona_reply_indices = {1};
  return t;
}

Transcript run_multichat(Gateway& gateway, const TaskUnit& unit, const ElicitationOptions& options) {
  if (unit.dimension != DimensionKind::multichat)
    throw Error(ErrorCode::precondition, "run_multichat needs a multichat unit");
  if (unit.interlocutor.empty()) throw Error(ErrorCode::configuration, "multichat unit without interlocutor");
  const auto key = unit.key();
  const auto max_tokens = options.max_tokens_for(DimensionKind::multichat);

  // 1. persona answers the initial prompt
  auto history = subject_messages(unit);
  auto first = gateway.complete(unit.model, history, {key, unit.seed, max_tokens});

  // 2. interlocutor (no persona) engages with that answer
  std::vector<ChatMessage> other;
  if (options.interlocutor_system_prompt) other.push_back({ChatRole::system, *options.interlocutor_system_prompt});
  other.push_back({ChatRole::assistant, unit.prompt_text});
  other.push_back({ChatRole::user, first.text});
  auto reply = gateway.complete(unit.interlocutor, other, {key, mix64(unit.seed + 1), max_tokens});

  // 3. persona responds once more with the full history
  history.push_back({ChatRole::assistant, first.text});
  history.push_back({ChatRole::user, reply.text});
  auto second = gateway.complete(unit.model, history, {key, mix64(unit.seed + 2), max_tokens});

  Transcript t;
  t.dimension = DimensionKind::multichat;
  t.system_prompt = unit.persona.system_prompt;
  t.messages = {{TranscriptRole::user, unit.prompt_text},
                {TranscriptRole::persona_llm, std::move(first.text)},
                {TranscriptRole::interlocutor, std::move(reply.text)},
                {TranscriptRole::persona_llm, std::move(second.text)}};
  t.persona_reply_indices = {1, 3};
  return t;
}

Transcript elicit(Gateway& gateway, const TaskUnit& unit, const ElicitationOptions& options) {
  return unit.dimension == DimensionKind::multichat ? run_multichat(gateway, unit, options)
                                                    : run_single(gateway, unit, options);
}

}  // namespace pcons
