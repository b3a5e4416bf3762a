// Command-line driver: plan -> run -> judge -> score -> analyze -> report.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "pcons/error.hpp"
#include "pcons/pipeline.hpp"
#include "pcons/report.hpp"
#include "pcons/run_manager.hpp"
#include "pcons/text_util.hpp"

namespace fs = std::filesystem;
using namespace pcons;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitFailures = 2;
constexpr int kExitCorruption = 3;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct Options {
  std::string config;
  bool resume = false;
  std::vector<std::string> models;
  std::string dimensions;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  bool verbose = false;
  bool quiet = false;
  bool list_keys = false;
  std::string human_csv;
};

struct Session {
  Experiment experiment;
  OutputLayout layout;
  PlanFilter filter;
};

Session open_session(const Options& opt) {
  auto config = RunConfig::load(opt.config);
  if (opt.seed) {
    config.seed = *opt.seed;
    config.document["seed"] = *opt.seed;
  }
  if (!opt.output_dir.empty()) config.output_dir = opt.output_dir;
  Session s;
  s.layout.root = config.resolve(config.output_dir);
  s.experiment = load_experiment(std::move(config));
  s.filter.models = opt.models;
  if (!opt.dimensions.empty())
    for (const auto& d : split(opt.dimensions, ','))
      if (!trim(d).empty()) s.filter.dimensions.push_back(parse_dimension(trim(d)));
  return s;
}

void print_plan(const Plan& p, const Experiment& ex) {
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  for (const auto& u : p.units) ++counts[{u.model, std::string(to_string(u.dimension))}];
  std::printf("plan: %zu units (config %s)\n", p.units.size(), ex.config_hash.c_str());
  for (const auto& [k, n] : counts) std::printf("  %-24s %-13s %zu\n", k.first.c_str(), k.second.c_str(), n);
  std::printf("estimated requests: %zu subject, %zu interlocutor, %zu judge (%zu judged units), %zu total\n",
              p.subject_requests, p.interlocutor_requests, p.judge_requests, p.judged_units, p.total_requests());
  for (const auto& w : p.diagnostics.warnings) spdlog::warn("{}", w);
}

ResultStore open_store(const Session& s, bool resume) {
  auto store = ResultStore::open(s.layout.root, s.experiment.config_hash);
  const auto& rep = store.open_report();
  if (!resume && rep.unit_lines + rep.judgment_lines > 0)
    throw Error(ErrorCode::configuration,
                "store " + s.layout.root.string() + " already holds records; pass --resume to continue it");
  return store;
}

int cmd_plan(const Options& opt) {
  auto s = open_session(opt);
  const auto p = plan(s.experiment, s.filter);
  print_plan(p, s.experiment);
  if (opt.list_keys)
    for (const auto& u : p.units) std::printf("%s\n", u.key().c_str());
  return kExitOk;
}

int cmd_run(const Options& opt) {
  auto s = open_session(opt);
  const auto p = plan(s.experiment, s.filter);
  print_plan(p, s.experiment);
  auto store = open_store(s, opt.resume);
  Gateway gateway;
  register_endpoints(gateway, s.experiment.config);
  ExecutionOptions eo;
  eo.concurrency = s.experiment.config.concurrency;
  eo.likert_retries = s.experiment.config.likert_retries;
  eo.stop = &g_stop;
  const auto summary = execute(s.experiment, p.units, gateway, store, eo);
  std::printf("%s\n", summary.to_json().dump().c_str());
  if (summary.interrupted) spdlog::warn("interrupted; rerun with --resume to finish the remaining units");
  return summary.failed + summary.partial > 0 || summary.interrupted ? kExitFailures : kExitOk;
}

int cmd_judge(const Options& opt) {
  auto s = open_session(opt);
  const auto p = plan(s.experiment, s.filter);
  auto store = ResultStore::open(s.layout.root, s.experiment.config_hash);
  Gateway gateway;
  register_endpoints(gateway, s.experiment.config);
  JudgeStageOptions jo;
  jo.concurrency = s.experiment.config.concurrency;
  jo.parse_retries = s.experiment.config.judge_retries;
  jo.flip_order = s.experiment.config.judge_flip_order;
  if (s.experiment.config.judge_templates) jo.templates = &*s.experiment.config.judge_templates;
  jo.stop = &g_stop;
  const auto summary = run_judge_stage(s.experiment, p.units, gateway, store, jo);
  std::printf("%s\n", summary.to_json().dump().c_str());
  return summary.failed > 0 || summary.interrupted ? kExitFailures : kExitOk;
}

int cmd_score(const Options& opt) {
  auto s = open_session(opt);
  const auto p = plan(s.experiment);
  auto store = ResultStore::open(s.layout.root, s.experiment.config_hash);
  store.require_single_config();
  Diagnostics diag;
  const auto labels = score_labels(s.experiment, p.units, store, &diag);
  write_labels(s.layout, s.experiment.config_hash, labels);
  std::size_t neutral = 0, excluded = 0;
  for (const auto& l : labels) {
    neutral += l.neutral();
    excluded += l.excluded;
  }
  const auto cov = coverage(p.units, store);
  for (const auto& w : diag.warnings) spdlog::warn("{}", w);
  if (cov.orphans) spdlog::warn("{} store records are not part of the plan", cov.orphans);
  std::printf("labels: %zu (%zu neutral, %zu excluded) -> %s\n", labels.size(), neutral, excluded,
              s.layout.labels().c_str());
  std::printf("coverage: %zu planned, %zu ok, %zu failed, %zu partial, %zu missing\n", cov.planned, cov.ok,
              cov.failed, cov.partial, cov.missing);
  return kExitOk;
}

int cmd_analyze(const Options& opt) {
  auto s = open_session(opt);
  auto store = ResultStore::open(s.layout.root, s.experiment.config_hash);
  store.require_single_config();
  const auto labels = read_labels(s.layout, s.experiment.config_hash);
  Diagnostics diag;
  const auto records = build_consistency_records(s.experiment, labels, &diag);
  write_analysis(s.layout, s.experiment.config_hash, records);
  for (const auto& w : diag.warnings) spdlog::warn("{}", w);
  std::printf("consistency records: %zu -> %s\n", records.size(), s.layout.records().c_str());
  return kExitOk;
}

int cmd_report(const Options& opt) {
  auto s = open_session(opt);
  const auto records = read_records(s.layout, s.experiment.config_hash);
  const auto artifacts = emit_reports(s.experiment, records, s.layout.report_dir());
  for (const auto& w : artifacts.warnings) spdlog::warn("{}", w);
  for (const auto& f : artifacts.files) std::printf("%s\n", f.c_str());
  return kExitOk;
}

int cmd_validate_judge(const Options& opt) {
  auto s = open_session(opt);
  auto store = ResultStore::open(s.layout.root, s.experiment.config_hash);
  std::ifstream in(opt.human_csv);
  if (!in) throw Error(ErrorCode::io, "cannot read " + opt.human_csv);
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> by_axis;
  std::vector<std::pair<std::string, std::string>> all;
  std::string line;
  std::size_t line_no = 0, missing = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 3) throw Error(ErrorCode::configuration, opt.human_csv + ":" + std::to_string(line_no) +
                                                                  ": expected response_id,axis,label");
    const std::string id(trim(f[0])), axis(trim(f[1])), human(trim(f[2]));
    if (line_no == 1 && id == "response_id") continue;
    const auto j = store.judgment(judgment_key(id, axis));
    if (!j || j->status != RecordStatus::ok || !j->judgment) {
      ++missing;
      continue;
    }
    const std::string machine = j->judgment->neutral ? "neutral" : j->judgment->choice;
    by_axis[axis].emplace_back(human, machine);
    all.emplace_back(human, machine);
  }
  auto kappa_json = [](const std::vector<std::pair<std::string, std::string>>& pairs) {
    nlohmann::json j{{"n", pairs.size()}};
    try {
      const auto k = cohen_kappa(pairs);
      j["kappa"] = k.degenerate ? nlohmann::json(nullptr) : nlohmann::json(k.kappa);
      j["observed_agreement"] = k.observed_agreement;
      j["expected_agreement"] = k.expected_agreement;
      j["degenerate"] = k.degenerate;
    } catch (const Error& e) {
      j["error"] = e.what();
    }
    return j;
  };
  nlohmann::json out{{"overall", kappa_json(all)}, {"unmatched_rows", missing}, {"axes", nlohmann::json::object()}};
  for (const auto& [axis, pairs] : by_axis) out["axes"][axis] = kappa_json(pairs);
  std::printf("%s\n", out.dump(2).c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Persona consistency harness"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_flag("-v,--verbose", opt.verbose, "Debug logging");
  app.add_flag("-q,--quiet", opt.quiet, "Only warnings and errors");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Override the configured seed (changes the config hash)");
    sub->add_option("--output-dir", opt.output_dir, "Override the configured output directory");
  };
  auto add_selection = [&](CLI::App* sub) {
    sub->add_option("--model", opt.models, "Restrict to these subject endpoints")->delimiter(',');
    sub->add_option("--dimensions", opt.dimensions, "Comma-separated dimensions to include");
  };

  auto* plan_cmd = app.add_subcommand("plan", "Print the task plan and request estimate");
  add_common(plan_cmd);
  add_selection(plan_cmd);
  plan_cmd->add_flag("--keys", opt.list_keys, "List every idempotency key");

  auto* run_cmd = app.add_subcommand("run", "Elicit responses for every planned unit");
  add_common(run_cmd);
  add_selection(run_cmd);
  run_cmd->add_flag("--resume", opt.resume, "Continue an existing store, skipping completed units");

  auto* judge_cmd = app.add_subcommand("judge", "Label open-ended responses with the judge");
  add_common(judge_cmd);
  add_selection(judge_cmd);
  judge_cmd->add_flag("--resume", opt.resume, "Accepted for symmetry; judging always skips labelled pairs");

  auto* score_cmd = app.add_subcommand("score", "Score surveys and collect judge labels");
  add_common(score_cmd);
  auto* analyze_cmd = app.add_subcommand("analyze", "Compute per-cell entropy records and aggregates");
  add_common(analyze_cmd);
  auto* report_cmd = app.add_subcommand("report", "Write tables, heatmap data and statistics");
  add_common(report_cmd);
  auto* kappa_cmd = app.add_subcommand("validate-judge", "Cohen's kappa between judge and human labels");
  add_common(kappa_cmd);
  kappa_cmd->add_option("--human", opt.human_csv, "CSV with response_id,axis,label")
      ->required()
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  auto logger = spdlog::stderr_color_mt("pcons");
  spdlog::set_default_logger(logger);
  spdlog::set_level(opt.verbose ? spdlog::level::debug : opt.quiet ? spdlog::level::warn : spdlog::level::info);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  try {
    if (*plan_cmd) return cmd_plan(opt);
    if (*run_cmd) return cmd_run(opt);
    if (*judge_cmd) return cmd_judge(opt);
    if (*score_cmd) return cmd_score(opt);
    if (*analyze_cmd) return cmd_analyze(opt);
    if (*report_cmd) return cmd_report(opt);
    if (*kappa_cmd) return cmd_validate_judge(opt);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.code() == ErrorCode::store_corruption ? kExitCorruption : kExitValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  }
  return kExitValidation;
}
