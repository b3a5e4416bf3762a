#include "pcons/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "pcons/error.hpp"
#include "pcons/text_util.hpp"

namespace pcons {

namespace {

CellSelector selector_from_json(const nlohmann::json& j) {
  CellSelector s;
  if (j.contains("model")) s.model = j.at("model").get<std::string>();
  if (j.contains("dimension")) s.dimension = j.at("dimension").get<std::string>();
  if (j.contains("scope")) {
    const auto scope = j.at("scope").get<std::string>();
    if (scope == "intra") s.intra = true;
    else if (scope == "inter") s.intra = false;
    else if (scope != "all") throw Error(ErrorCode::configuration, "comparison scope must be intra, inter or all");
  }
  return s;
}

std::string file_digest(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "missing:" + p.filename().string();
  std::stringstream buf;
  buf << in.rdbuf();
  return hex64(fnv1a64(buf.str()));
}

bool same_backend(const ModelEndpoint& a, const ModelEndpoint& b) {
  if (a.name == b.name) return true;
  return a.kind == EndpointKind::http_chat && b.kind == EndpointKind::http_chat && a.base_url == b.base_url &&
         a.remote_model() == b.remote_model();
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  c.document = j;
  c.base_dir = base_dir;
  try {
    const int version = j.value("schema_version", kConfigSchemaVersion);
    if (version != kConfigSchemaVersion)
      throw Error(ErrorCode::configuration, "unsupported config schema_version " + std::to_string(version));
    for (const auto& s : j.value("subjects", nlohmann::json::array())) c.subjects.push_back(endpoint_from_json(s));
    if (j.contains("judge")) c.judge = endpoint_from_json(j.at("judge"));
    if (j.contains("interlocutor")) c.interlocutor = endpoint_from_json(j.at("interlocutor"));
    if (j.contains("interlocutor_system_prompt") && !j.at("interlocutor_system_prompt").is_null())
      c.interlocutor_system_prompt = j.at("interlocutor_system_prompt").get<std::string>();
    c.allow_self_judge = j.value("allow_self_judge", false);
    if (j.contains("categories_file")) c.categories_file = j.at("categories_file").get<std::string>();
    c.persona_categories = j.value("persona_categories", std::vector<std::string>{});
    if (j.contains("custom_personas")) c.custom_personas = j.at("custom_personas").get<std::string>();
    for (const auto& d : j.value("dimensions", std::vector<std::string>{})) c.dimensions.push_back(parse_dimension(d));
    const auto runs = j.value("runs", static_cast<long long>(kDefaultRuns));
    c.runs = runs < 0 ? 0 : static_cast<std::size_t>(runs);
    if (j.contains("prompts")) c.prompts_file = j.at("prompts").get<std::string>();
    for (const auto& p : j.value("instruments", std::vector<std::string>{})) c.instrument_files.emplace_back(p);
    c.concurrency = j.value("concurrency", c.concurrency);
    c.likert_retries = j.value("likert_retries", c.likert_retries);
    c.judge_retries = j.value("judge_retries", c.judge_retries);
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", std::string("out"));
    for (const auto& [dim, n] : j.value("max_tokens", nlohmann::json::object()).items())
      c.max_tokens[parse_dimension(dim)] = n.get<int>();
    c.chat_prompt_count = j.value("chat_prompt_count", c.chat_prompt_count);
    c.allow_prompt_count_mismatch = j.value("allow_prompt_count_mismatch", false);
    c.judge_flip_order = j.value("judge_flip_order", false);
    if (j.contains("judge_templates")) c.judge_templates = JudgeTemplates::from_json(j.at("judge_templates"));
    if (j.contains("stats")) {
      const auto& s = j.at("stats");
      const auto pairing = s.value("pairing", std::string("persona_dimension"));
      if (pairing == "persona_dimension") c.stats.pairing = PairingKey::persona_dimension;
      else if (pairing == "persona") c.stats.pairing = PairingKey::persona;
      else throw Error(ErrorCode::configuration, "stats.pairing must be persona_dimension or persona");
      c.stats.alpha = s.value("alpha", c.stats.alpha);
      c.stats.bootstrap_resamples = s.value("bootstrap_resamples", c.stats.bootstrap_resamples);
      c.stats.bootstrap_level = s.value("bootstrap_level", c.stats.bootstrap_level);
      const auto zeros = s.value("zero_method", std::string("pratt"));
      if (zeros == "pratt") c.stats.zero_method = stats::ZeroMethod::pratt;
      else if (zeros == "wilcox") c.stats.zero_method = stats::ZeroMethod::wilcox;
      else throw Error(ErrorCode::configuration, "stats.zero_method must be pratt or wilcox");
      for (const auto& cmp : s.value("comparisons", nlohmann::json::array())) {
        ComparisonSpec spec;
        spec.name = cmp.at("name").get<std::string>();
        spec.a = selector_from_json(cmp.at("a"));
        spec.b = selector_from_json(cmp.at("b"));
        const auto alt = cmp.value("alternative", std::string("less"));
        if (alt == "less") spec.alternative = stats::Alternative::less;
        else if (alt == "greater") spec.alternative = stats::Alternative::greater;
        else throw Error(ErrorCode::configuration, "comparison alternative must be less or greater");
        c.stats.comparisons.push_back(std::move(spec));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::configuration, std::string("malformed config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::configuration, path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
  return (p.is_absolute() || base_dir.empty() ? p : base_dir / p).lexically_normal();
}

std::vector<std::string> RunConfig::subject_names() const {
  std::vector<std::string> out;
  for (const auto& s : subjects) out.push_back(s.name);
  return out;
}

std::vector<std::string> RunConfig::validate() const {
  std::vector<std::string> errors;
  if (subjects.empty()) errors.push_back("no subject endpoints configured");
  std::set<std::string> names;
  for (const auto& s : subjects)
    if (!names.insert(s.name).second) errors.push_back("duplicate subject endpoint '" + s.name + "'");
  if (!judge) {
    errors.push_back("no judge endpoint configured");
  } else {
    for (const auto& s : subjects)
      if (same_backend(*judge, s) && !allow_self_judge)
        errors.push_back("judge endpoint '" + judge->name + "' is also subject '" + s.name +
                         "' (set allow_self_judge to override)");
    if (interlocutor && interlocutor->name == judge->name && !same_backend(*interlocutor, *judge))
      errors.push_back("interlocutor and judge share the name '" + judge->name + "'");
  }
  if (interlocutor)
    for (const auto& s : subjects)
      if (s.name == interlocutor->name && !same_backend(s, *interlocutor))
        errors.push_back("interlocutor and subject share the name '" + s.name + "'");
  if (dimensions.empty()) errors.push_back("dimension list is empty");
  std::set<DimensionKind> dims(dimensions.begin(), dimensions.end());
  if (dims.size() != dimensions.size()) errors.push_back("dimension list has duplicates");
  if (runs < 1) errors.push_back("runs must be at least 1");
  if (persona_categories.empty() && !custom_personas) errors.push_back("no persona categories or custom personas");
  if (dims.contains(DimensionKind::multichat) && !interlocutor)
    errors.push_back("multichat requires an interlocutor endpoint");
  if (dims.contains(DimensionKind::survey) && instrument_files.empty())
    errors.push_back("survey dimension requires instrument files");
  const bool needs_prompts = dims.contains(DimensionKind::essay) || dims.contains(DimensionKind::social_media) ||
                             dims.contains(DimensionKind::singlechat) || dims.contains(DimensionKind::multichat);
  if (needs_prompts && !prompts_file) errors.push_back("open-response dimensions require a prompts file");
  if (concurrency == 0) errors.push_back("concurrency must be at least 1");
  if (likert_retries < 0 || judge_retries < 0) errors.push_back("retry counts must be non-negative");
  if (!(stats.alpha > 0.0 && stats.alpha < 1.0)) errors.push_back("stats.alpha must lie in (0,1)");
  return errors;
}

const PersonaSpec* Experiment::find_persona(const std::string& id) const {
  for (const auto& p : personas)
    if (p.id == id) return &p;
  return nullptr;
}

const SurveyInstrument* Experiment::instrument_by_id(const std::string& id) const {
  for (const auto& [_, ins] : instruments)
    if (ins.id == id) return &ins;
  return nullptr;
}

Experiment load_experiment(RunConfig config) {
  auto errors = config.validate();
  Experiment ex;
  auto attempt = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
  };
  attempt([&] {
    ex.catalog = config.categories_file ? PersonaCatalog::load(config.resolve(*config.categories_file))
                                        : PersonaCatalog::standard();
  });
  for (const auto& id : config.persona_categories) {
    attempt([&] {
      auto personas = enumerate_personas(ex.catalog.category(id));
      ex.personas.insert(ex.personas.end(), personas.begin(), personas.end());
    });
  }
  if (config.custom_personas)
    attempt([&] {
      auto custom = load_custom_personas(config.resolve(*config.custom_personas));
      ex.personas.insert(ex.personas.end(), custom.begin(), custom.end());
    });
  for (const auto& file : config.instrument_files) {
    attempt([&] {
      auto ins = SurveyInstrument::load(config.resolve(file));
      ins.validate(ex.catalog.category(ins.category_id));
      if (ex.instruments.contains(ins.category_id))
        throw Error(ErrorCode::configuration, "two instruments for category '" + ins.category_id + "'");
      ex.instruments.emplace(ins.category_id, std::move(ins));
    });
  }
  if (config.prompts_file) attempt([&] { ex.prompts = PromptSet::load(config.resolve(*config.prompts_file)); });

  std::set<std::string> ids;
  for (const auto& p : ex.personas)
    if (!ids.insert(p.id).second) errors.push_back("duplicate persona id '" + p.id + "'");

  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw Error(ErrorCode::configuration, msg);
  }
  ex.config_hash = config_hash(config);
  ex.config = std::move(config);
  return ex;
}

std::string config_hash(const RunConfig& config) {
  nlohmann::json doc = config.document;
  // Execution knobs that do not change results.
  for (const char* k : {"output_dir", "concurrency"}) doc.erase(k);
  for (auto* group : {&doc["subjects"], &doc["judge"], &doc["interlocutor"]}) {
    auto strip = [](nlohmann::json& e) {
      if (!e.is_object()) return;
      for (const char* k : {"max_concurrency", "requests_per_second", "retry", "timeout_ms", "api_key_env"}) e.erase(k);
      if (e.contains("script")) e["script"].erase("delay_ms");
    };
    if (group->is_array())
      for (auto& e : *group) strip(e);
    else
      strip(*group);
  }
  doc["seed"] = config.seed;
  nlohmann::json files = nlohmann::json::object();
  if (config.categories_file) files["categories"] = file_digest(config.resolve(*config.categories_file));
  if (config.custom_personas) files["custom_personas"] = file_digest(config.resolve(*config.custom_personas));
  if (config.prompts_file) files["prompts"] = file_digest(config.resolve(*config.prompts_file));
  for (const auto& f : config.instrument_files) files["instrument:" + f.string()] = file_digest(config.resolve(f));
  doc["files"] = files;
  return hex64(fnv1a64(doc.dump()));
}

}  // namespace pcons
