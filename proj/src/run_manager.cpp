#include "pcons/run_manager.hpp"

#include <algorithm>
#include <mutex>
#include <set>
#include <tuple>

#include <spdlog/spdlog.h>

#include "pcons/error.hpp"
#include "pcons/parallel.hpp"
#include "pcons/scoring.hpp"
#include "pcons/text_util.hpp"

namespace pcons {

namespace {

bool wanted(const std::vector<std::string>& filter, const std::string& name) {
  return filter.empty() || std::find(filter.begin(), filter.end(), name) != filter.end();
}

bool wanted(const std::vector<DimensionKind>& filter, DimensionKind d) {
  return filter.empty() || std::find(filter.begin(), filter.end(), d) != filter.end();
}

ElicitationOptions elicitation_options(const RunConfig& config) {
  ElicitationOptions o;
  o.interlocutor_system_prompt = config.interlocutor_system_prompt;
  o.max_tokens = config.max_tokens;
  return o;
}

UnitRecord base_record(const TaskUnit& unit) {
  UnitRecord r;
  r.key = unit.key();
  r.model = unit.model;
  r.persona_id = unit.persona.id;
  r.persona_category = unit.persona.category_id;
  r.dimension = std::string(to_string(unit.dimension));
  r.prompt_id = unit.prompt_id;
  r.run = unit.run;
  r.seed = unit.seed;
  r.instrument_id = unit.instrument_id;
  r.item_id = unit.item_id;
  return r;
}

void dedupe(std::vector<std::string>& v) {
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (auto& s : v)
    if (seen.insert(s).second) out.push_back(std::move(s));
  v = std::move(out);
}

}  // namespace

// ---------------------------------------------------------------------------
// Planning

Plan plan(const Experiment& experiment, const PlanFilter& filter) {
  const auto& cfg = experiment.config;
  const auto names = cfg.subject_names();
  for (const auto& m : filter.models)
    if (std::find(names.begin(), names.end(), m) == names.end())
      throw Error(ErrorCode::configuration, "--model '" + m + "' is not a configured subject");
  for (auto d : filter.dimensions)
    if (std::find(cfg.dimensions.begin(), cfg.dimensions.end(), d) == cfg.dimensions.end())
      throw Error(ErrorCode::configuration,
                  "dimension '" + std::string(to_string(d)) + "' is not part of the configuration");

  Plan p;
  ChatPlanOptions chat;
  chat.interlocutor = cfg.interlocutor ? cfg.interlocutor->name : std::string{};
  chat.expected_prompts = cfg.chat_prompt_count;
  chat.allow_prompt_count_mismatch = cfg.allow_prompt_count_mismatch;
  const std::size_t axes = experiment.catalog.all_axes().size();

  for (const auto& model : names) {
    if (!wanted(filter.models, model)) continue;
    for (const auto& persona : experiment.personas) {
      for (const auto dim : cfg.dimensions) {
        if (!wanted(filter.dimensions, dim)) continue;
        std::vector<TaskUnit> units;
        switch (dim) {
          case DimensionKind::survey:
            for (const auto& category : experiment.catalog.categories()) {
              const auto it = experiment.instruments.find(category.id);
              if (it == experiment.instruments.end()) continue;
              auto part = build_survey_tasks(model, it->second, persona, cfg.runs, cfg.seed);
              units.insert(units.end(), part.begin(), part.end());
            }
            break;
          case DimensionKind::essay:
          case DimensionKind::social_media:
            units = build_generation_tasks(model, dim, persona, cfg.runs, experiment.prompts, cfg.seed);
            break;
          case DimensionKind::singlechat:
          case DimensionKind::multichat:
            units = build_chat_tasks(model, dim, persona, cfg.runs, experiment.prompts, chat, cfg.seed,
                                     &p.diagnostics);
            break;
        }
        for (auto& u : units) {
          if (u.dimension == DimensionKind::multichat) {
            p.subject_requests += 2;
            p.interlocutor_requests += 1;
          } else {
            p.subject_requests += 1;
          }
          if (is_judged(u.dimension)) {
            ++p.judged_units;
            p.judge_requests += axes;
          }
          p.units.push_back(std::move(u));
        }
      }
    }
  }
  dedupe(p.diagnostics.warnings);
  return p;
}

void register_endpoints(Gateway& gateway, const RunConfig& config) {
  auto add = [&](const ModelEndpoint& e) {
    if (!gateway.has_endpoint(e.name)) gateway.add_endpoint(e);
  };
  for (const auto& s : config.subjects) add(s);
  if (config.judge) add(*config.judge);
  if (config.interlocutor) add(*config.interlocutor);
}

// ---------------------------------------------------------------------------
// Execution

nlohmann::json ExecutionSummary::to_json() const {
  return {{"planned", planned}, {"ok", ok},           {"failed", failed},
          {"partial", partial}, {"skipped", skipped}, {"not_started", not_started},
          {"interrupted", interrupted}};
}

nlohmann::json JudgeSummary::to_json() const {
  return {{"units", units},     {"ok", ok},
          {"failed", failed},   {"skipped", skipped},
          {"not_started", not_started}, {"interrupted", interrupted}};
}

namespace {

UnitRecord run_unit(const Experiment& experiment, const TaskUnit& unit, Gateway& gateway,
                    const ElicitationOptions& eo, int likert_retries) {
  UnitRecord rec = base_record(unit);
  rec.started_at = utc_timestamp();
  try {
    if (unit.dimension == DimensionKind::survey) {
      const auto* ins = experiment.instrument_by_id(unit.instrument_id);
      if (!ins) throw Error(ErrorCode::configuration, "unknown instrument '" + unit.instrument_id + "'");
      TaskUnit attempt_unit = unit;
      std::string last_error;
      for (int attempt = 0; attempt <= likert_retries; ++attempt) {
        if (attempt > 0) attempt_unit.seed = mix64(unit.seed + static_cast<std::uint64_t>(attempt));
        rec.attempts = attempt + 1;
        rec.transcript = run_single(gateway, attempt_unit, eo);
        try {
          rec.survey_answer = parse_likert(rec.transcript->persona_text(), ins->scale);
          break;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::unparseable_answer) throw;
          last_error = e.what();
        }
      }
      if (rec.survey_answer) {
        rec.status = RecordStatus::ok;
      } else {
        rec.status = RecordStatus::partial;
        rec.error = last_error;
      }
    } else {
      rec.attempts = 1;
      rec.transcript = elicit(gateway, unit, eo);
      rec.status = RecordStatus::ok;
    }
  } catch (const Error& e) {
    rec.status = RecordStatus::failed;
    rec.error = std::string(to_string(e.code())) + ": " + e.what();
    rec.transcript.reset();
    rec.survey_answer.reset();
  }
  rec.finished_at = utc_timestamp();
  return rec;
}

}  // namespace

ExecutionSummary execute(const Experiment& experiment, const std::vector<TaskUnit>& units, Gateway& gateway,
                         ResultStore& store, const ExecutionOptions& options) {
  ExecutionSummary summary;
  summary.planned = units.size();
  std::vector<const TaskUnit*> pending;
  for (const auto& u : units) {
    if (store.unit_ok(u.key()))
      ++summary.skipped;
    else
      pending.push_back(&u);
  }
  spdlog::info("executing {} of {} units ({} already complete)", pending.size(), units.size(), summary.skipped);

  const auto eo = elicitation_options(experiment.config);
  std::mutex mu;
  parallel_for(pending.size(), options.concurrency, [&](std::size_t i) {
    if (options.stop && options.stop->load()) {
      std::lock_guard lock(mu);
      ++summary.not_started;
      summary.interrupted = true;
      return;
    }
    const auto rec = run_unit(experiment, *pending[i], gateway, eo, options.likert_retries);
    store.append(rec);
    std::lock_guard lock(mu);
    switch (rec.status) {
      case RecordStatus::ok: ++summary.ok; break;
      case RecordStatus::failed:
        ++summary.failed;
        spdlog::warn("unit {} failed: {}", rec.key, rec.error);
        break;
      case RecordStatus::partial:
        ++summary.partial;
        spdlog::warn("unit {} partial: {}", rec.key, rec.error);
        break;
    }
    if (options.on_record) options.on_record(rec);
  });
  return summary;
}

JudgeSummary run_judge_stage(const Experiment& experiment, const std::vector<TaskUnit>& units, Gateway& gateway,
                             ResultStore& store, const JudgeStageOptions& options) {
  const auto& cfg = experiment.config;
  if (!cfg.judge) throw Error(ErrorCode::configuration, "no judge endpoint configured");
  const std::string judge = cfg.judge->name;
  check_judge_guard(judge, cfg.subject_names(), cfg.allow_self_judge);

  JudgeAllOptions jo;
  jo.subject_endpoints = cfg.subject_names();
  jo.allow_self_judge = cfg.allow_self_judge;
  jo.parse_retries = options.parse_retries;
  jo.prompt.flip_order = options.flip_order;
  jo.prompt.templates = options.templates;

  const auto axes = experiment.catalog.all_axes();
  JudgeSummary summary;
  struct Work {
    UnitRecord unit;
    const CharacteristicAxis* axis;
  };
  std::vector<Work> work;
  for (const auto& u : units) {
    if (!is_judged(u.dimension)) continue;
    const auto rec = store.unit(u.key());
    if (!rec || rec->status != RecordStatus::ok || !rec->transcript) continue;
    ++summary.units;
    for (const auto* axis : axes) {
      if (store.judgment_ok(judgment_key(rec->key, axis->id)))
        ++summary.skipped;
      else
        work.push_back({*rec, axis});
    }
  }
  spdlog::info("judging {} (unit, axis) pairs with '{}' ({} already labelled)", work.size(), judge,
               summary.skipped);

  std::mutex mu;
  parallel_for(work.size(), options.concurrency, [&](std::size_t i) {
    if (options.stop && options.stop->load()) {
      std::lock_guard lock(mu);
      ++summary.not_started;
      summary.interrupted = true;
      return;
    }
    const auto& w = work[i];
    JudgmentRecord rec;
    rec.key = judgment_key(w.unit.key, w.axis->id);
    rec.unit_key = w.unit.key;
    rec.axis = w.axis->id;
    rec.model = w.unit.model;
    rec.persona_id = w.unit.persona_id;
    rec.dimension = w.unit.dimension;
    rec.judge = judge;
    rec.started_at = utc_timestamp();
    try {
      rec.judgment = judge_one(gateway, judge, JudgeTarget{w.unit.key, *w.unit.transcript}, *w.axis, jo,
                               &rec.attempts);
      rec.status = RecordStatus::ok;
    } catch (const Error& e) {
      rec.status = RecordStatus::failed;
      rec.error = std::string(to_string(e.code())) + ": " + e.what();
    }
    rec.finished_at = utc_timestamp();
    store.append(rec);
    std::lock_guard lock(mu);
    if (rec.status == RecordStatus::ok) {
      ++summary.ok;
    } else {
      ++summary.failed;
      spdlog::warn("judgment {} failed: {}", rec.key, rec.error);
    }
  });
  return summary;
}

// ---------------------------------------------------------------------------
// Scoring and analysis

void to_json(nlohmann::json& j, const LabelRecord& r) {
  j = nlohmann::json{{"model", r.model},
                     {"persona", r.persona_id},
                     {"persona_category", r.persona_category},
                     {"dimension", r.dimension},
                     {"evaluation_category", r.evaluation_category},
                     {"axis", r.axis},
                     {"label", r.label ? nlohmann::json(*r.label) : nlohmann::json(nullptr)},
                     {"excluded", r.excluded},
                     {"source", r.source}};
  if (r.tie) j["tie"] = true;
  if (!r.reason.empty()) j["reason"] = r.reason;
}

void from_json(const nlohmann::json& j, LabelRecord& r) {
  r.model = j.at("model").get<std::string>();
  r.persona_id = j.at("persona").get<std::string>();
  r.persona_category = j.at("persona_category").get<std::string>();
  r.dimension = j.at("dimension").get<std::string>();
  r.evaluation_category = j.at("evaluation_category").get<std::string>();
  r.axis = j.at("axis").get<std::string>();
  r.label.reset();
  if (!j.at("label").is_null()) r.label = j.at("label").get<std::string>();
  r.excluded = j.value("excluded", false);
  r.tie = j.value("tie", false);
  r.source = j.value("source", std::string{});
  r.reason = j.value("reason", std::string{});
}

std::vector<LabelRecord> score_labels(const Experiment& experiment, const std::vector<TaskUnit>& units,
                                      const ResultStore& store, Diagnostics* diagnostics) {
  std::vector<LabelRecord> out;
  const auto axes = experiment.catalog.all_axes();

  struct Sheet {
    const TaskUnit* first = nullptr;
    SurveyAnswerSheet answers;
    std::size_t missing = 0;
  };
  std::vector<std::string> sheet_order;
  std::map<std::string, Sheet> sheets;

  auto label_for = [](const TaskUnit& u, const CharacteristicAxis& axis) {
    LabelRecord l;
    l.model = u.model;
    l.persona_id = u.persona.id;
    l.persona_category = u.persona.category_id;
    l.dimension = std::string(to_string(u.dimension));
    l.evaluation_category = axis.category_id;
    l.axis = axis.id;
    return l;
  };

  std::size_t unjudged = 0;
  for (const auto& u : units) {
    const auto key = u.key();
    const auto rec = store.unit(key);
    if (u.dimension == DimensionKind::survey) {
      const std::string sheet_id = u.model + "|" + u.persona.id + "|" + u.instrument_id + "|" + std::to_string(u.run);
      auto [it, fresh] = sheets.try_emplace(sheet_id);
      if (fresh) {
        sheet_order.push_back(sheet_id);
        it->second.first = &u;
        it->second.answers.instrument_id = u.instrument_id;
      }
      if (rec && rec->status == RecordStatus::ok && rec->survey_answer) {
        it->second.answers.answers[u.item_id] = *rec->survey_answer;
        it->second.answers.provenance.push_back(key);
      } else {
        ++it->second.missing;
      }
      continue;
    }
    const bool usable = rec && rec->status == RecordStatus::ok;
    for (const auto* axis : axes) {
      auto l = label_for(u, *axis);
      l.source = key;
      if (!usable) {
        l.excluded = true;
        l.reason = rec ? "unit " + std::string(to_string(rec->status)) : "unit missing";
      } else if (const auto j = store.judgment(judgment_key(key, axis->id));
                 j && j->status == RecordStatus::ok && j->judgment) {
        if (!j->judgment->neutral) l.label = j->judgment->choice;
      } else {
        l.excluded = true;
        l.reason = "unjudged";
        ++unjudged;
      }
      out.push_back(std::move(l));
    }
  }

  std::size_t incomplete = 0;
  for (const auto& id : sheet_order) {
    const auto& sheet = sheets.at(id);
    const auto& u = *sheet.first;
    const auto* ins = experiment.instrument_by_id(u.instrument_id);
    if (!ins) throw Error(ErrorCode::configuration, "unknown instrument '" + u.instrument_id + "'");
    const auto& category = experiment.catalog.category(ins->category_id);
    if (sheet.answers.complete_for(*ins)) {
      for (const auto& result : score_survey(*ins, category, sheet.answers)) {
        auto l = label_for(u, *category.find_axis(result.axis));
        l.source = id;
        l.label = result.label;
        l.tie = result.tie;
        out.push_back(std::move(l));
      }
    } else {
      ++incomplete;
      for (const auto& axis : category.axes) {
        auto l = label_for(u, axis);
        l.source = id;
        l.excluded = true;
        l.reason = "incomplete survey (" + std::to_string(sheet.missing) + " of " +
                   std::to_string(ins->items.size()) + " items missing)";
        out.push_back(std::move(l));
      }
    }
  }
  if (diagnostics) {
    if (unjudged) diagnostics->warnings.push_back(std::to_string(unjudged) + " responses lack a judgment");
    if (incomplete) diagnostics->warnings.push_back(std::to_string(incomplete) + " survey sheets are incomplete");
  }
  return out;
}

std::vector<ConsistencyRecord> build_consistency_records(const Experiment& experiment,
                                                         const std::vector<LabelRecord>& labels,
                                                         Diagnostics* diagnostics) {
  const auto& cfg = experiment.config;
  const auto models = cfg.subject_names();
  const auto axes = experiment.catalog.all_axes();
  auto index_of = [](const auto& seq, const auto& value, auto proj) -> std::size_t {
    for (std::size_t i = 0; i < seq.size(); ++i)
      if (proj(seq[i]) == value) return i;
    return seq.size();
  };

  using Key = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>;
  std::map<Key, LabelDistribution> cells;
  std::size_t dropped = 0;
  for (const auto& l : labels) {
    const auto m = index_of(models, l.model, [](const auto& s) { return s; });
    const auto p = index_of(experiment.personas, l.persona_id, [](const PersonaSpec& s) { return s.id; });
    const auto d = index_of(cfg.dimensions, parse_dimension(l.dimension), [](DimensionKind k) { return k; });
    const auto a = index_of(axes, l.axis, [](const CharacteristicAxis* x) { return x->id; });
    if (m == models.size() || p == experiment.personas.size() || d == cfg.dimensions.size() || a == axes.size()) {
      ++dropped;
      continue;
    }
    auto [it, fresh] = cells.try_emplace(Key{m, p, d, a}, *axes[a]);
    auto& dist = it->second;
    if (l.excluded)
      dist.add_excluded();
    else if (!l.label)
      dist.add_neutral();
    else
      dist.add(*l.label);
  }

  std::vector<ConsistencyRecord> out;
  std::size_t empty = 0;
  for (const auto& [key, dist] : cells) {
    const auto [m, p, d, a] = key;
    if (dist.total() == 0) {
      ++empty;
      continue;
    }
    out.push_back(make_record(models[m], experiment.personas[p], *axes[a], std::string(to_string(cfg.dimensions[d])),
                              dist));
  }
  if (diagnostics) {
    if (dropped)
      diagnostics->warnings.push_back(std::to_string(dropped) + " labels reference models, personas or axes "
                                                                "outside the configuration");
    if (empty)
      diagnostics->warnings.push_back(std::to_string(empty) + " cells have no usable labels and were skipped");
  }
  return out;
}

std::string persona_column(const ConsistencyRecord& record) {
  return record.persona_category == kCustomCategory ? record.persona_id : record.persona_category;
}

std::vector<AggregateCell> aggregate_cells(const std::vector<ConsistencyRecord>& records) {
  std::vector<std::tuple<std::string, std::string, std::string>> order;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<ConsistencyRecord>> groups;
  for (const auto& r : records) {
    const auto key = std::make_tuple(r.model, r.evaluation_category, persona_column(r));
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) order.push_back(key);
    it->second.push_back(r);
  }
  std::vector<AggregateCell> out;
  for (const auto& key : order) {
    AggregateCell c;
    std::tie(c.model, c.evaluation_category, c.persona_column) = key;
    c.aggregate = aggregate_entropy(groups.at(key));
    out.push_back(std::move(c));
  }
  return out;
}

void to_json(nlohmann::json& j, const AggregateCell& c) {
  j = nlohmann::json{{"model", c.model},
                     {"evaluation_category", c.evaluation_category},
                     {"persona_column", c.persona_column},
                     {"mean", c.aggregate.mean},
                     {"std_over_dimensions", c.aggregate.std_over_dimensions},
                     {"std_over_cells", c.aggregate.std_over_cells},
                     {"per_dimension", c.aggregate.per_dimension},
                     {"cells", c.aggregate.cells}};
}

CoverageReport coverage(const std::vector<TaskUnit>& units, const ResultStore& store) {
  CoverageReport c;
  c.planned = units.size();
  std::set<std::string> keys;
  for (const auto& u : units) {
    const auto key = u.key();
    keys.insert(key);
    const auto rec = store.unit(key);
    if (!rec) {
      ++c.missing;
      continue;
    }
    switch (rec->status) {
      case RecordStatus::ok: ++c.ok; break;
      case RecordStatus::failed: ++c.failed; break;
      case RecordStatus::partial: ++c.partial; break;
    }
  }
  for (const auto& r : store.units())
    if (!keys.contains(r.key)) ++c.orphans;
  return c;
}

}  // namespace pcons
