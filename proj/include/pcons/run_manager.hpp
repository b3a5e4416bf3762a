#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pcons/consistency_metrics.hpp"
#include "pcons/model_gateway.hpp"
#include "pcons/result_store.hpp"
#include "pcons/run_config.hpp"

namespace pcons {

// ---------------------------------------------------------------------------
// Planning

struct PlanFilter {
  std::vector<std::string> models;           // empty = all subjects
  std::vector<DimensionKind> dimensions;     // empty = all configured
};

struct Plan {
  std::vector<TaskUnit> units;
  Diagnostics diagnostics;
  std::size_t subject_requests = 0;       // one per single-reply unit, two per multichat unit
  std::size_t interlocutor_requests = 0;  // one per multichat unit
  std::size_t judged_units = 0;
  std::size_t judge_requests = 0;         // judged units x evaluation axes

  std::size_t total_requests() const { return subject_requests + interlocutor_requests + judge_requests; }
};

/// models x personas x dimensions x prompts x runs, in that nesting order.
/// Survey prompts are the items of every configured instrument.
Plan plan(const Experiment& experiment, const PlanFilter& filter = {});

/// Registers the subject, judge and interlocutor endpoints of a config.
void register_endpoints(Gateway& gateway, const RunConfig& config);

// ---------------------------------------------------------------------------
// Execution

struct ExecutionOptions {
  std::size_t concurrency = 4;
  int likert_retries = 2;
  /// Checked before each unit starts; in-flight units still complete and
  /// are written.
  const std::atomic<bool>* stop = nullptr;
  std::function<void(const UnitRecord&)> on_record;
};

struct ExecutionSummary {
  std::size_t planned = 0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::size_t partial = 0;
  std::size_t skipped = 0;      // already ok in the store
  std::size_t not_started = 0;  // left over after a stop request
  bool interrupted = false;

  nlohmann::json to_json() const;
};

/// Runs every unit without an ok record. Gateway failures become failed
/// records; a survey answer that stays unparseable after re-elicitation
/// becomes a partial record. Store write failures abort with the unit key.
ExecutionSummary execute(const Experiment& experiment, const std::vector<TaskUnit>& units, Gateway& gateway,
                         ResultStore& store, const ExecutionOptions& options = {});

struct JudgeStageOptions {
  std::size_t concurrency = 4;
  int parse_retries = 2;
  bool flip_order = false;
  const JudgeTemplates* templates = nullptr;
  const std::atomic<bool>* stop = nullptr;
};

struct JudgeSummary {
  std::size_t units = 0;  // judged-dimension units with an ok transcript
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;
  std::size_t not_started = 0;
  bool interrupted = false;

  nlohmann::json to_json() const;
};

/// Labels every ok open-response unit on every evaluation axis.
JudgeSummary run_judge_stage(const Experiment& experiment, const std::vector<TaskUnit>& units, Gateway& gateway,
                             ResultStore& store, const JudgeStageOptions& options = {});

// ---------------------------------------------------------------------------
// Scoring and analysis

/// One label for one (model, persona, dimension, axis) observation.
struct LabelRecord {
  std::string model;
  std::string persona_id;
  std::string persona_category;
  std::string dimension;
  std::string evaluation_category;
  std::string axis;
  std::optional<std::string> label;  // nullopt with !excluded -> neutral
  bool excluded = false;
  bool tie = false;
  std::string source;  // unit key or survey sheet id
  std::string reason;  // why excluded

  bool neutral() const { return !excluded && !label; }
};

void to_json(nlohmann::json& j, const LabelRecord& r);
void from_json(const nlohmann::json& j, LabelRecord& r);

/// Turns stored units and judgments into labels. Survey answers are grouped
/// into sheets per (model, persona, instrument, run); incomplete sheets and
/// unjudged responses yield excluded labels.
std::vector<LabelRecord> score_labels(const Experiment& experiment, const std::vector<TaskUnit>& units,
                                      const ResultStore& store, Diagnostics* diagnostics = nullptr);

/// Pools labels per (model, persona, dimension, axis) over prompts and runs.
std::vector<ConsistencyRecord> build_consistency_records(const Experiment& experiment,
                                                         const std::vector<LabelRecord>& labels,
                                                         Diagnostics* diagnostics = nullptr);

/// Column of the entropy table a persona belongs to: its category, or its
/// own id for custom personas.
std::string persona_column(const ConsistencyRecord& record);

struct AggregateCell {
  std::string model;
  std::string evaluation_category;
  std::string persona_column;
  EntropyAggregate aggregate;
};

/// Two-level aggregate per (model, evaluation category, persona column).
std::vector<AggregateCell> aggregate_cells(const std::vector<ConsistencyRecord>& records);

void to_json(nlohmann::json& j, const AggregateCell& c);

/// Plan keys with no record and store keys outside the plan.
struct CoverageReport {
  std::size_t planned = 0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::size_t partial = 0;
  std::size_t missing = 0;
  std::size_t orphans = 0;
};
CoverageReport coverage(const std::vector<TaskUnit>& units, const ResultStore& store);

}  // namespace pcons
