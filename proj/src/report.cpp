#include "pcons/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "pcons/error.hpp"
#include "pcons/run_manager.hpp"
#include "pcons/text_util.hpp"

namespace fs = std::filesystem;

namespace pcons {

// ---------------------------------------------------------------------------
// Entropy table

std::string_view to_string(ColorClass c) {
  switch (c) {
    case ColorClass::green: return "green";
    case ColorClass::orange: return "orange";
    case ColorClass::red: return "red";
  }
  return "red";
}

ColorClass color_class(double value) {
  if (value < 0.25) return ColorClass::green;
  if (value < 0.5) return ColorClass::orange;
  return ColorClass::red;
}

std::string format_mean_std(double mean, double std) { return fmt::format("{:.2f} ± {:.2f}", mean, std); }

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  return "\"" + replace_all(std::string(s), "\"", "\"\"") + "\"";
}

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) { return fmt::format("{:.6f}", v); }

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string{}; }

}  // namespace

const std::optional<EntropyAggregate>& EntropyTable::cell(std::string_view row, std::string_view column) const {
  static const std::optional<EntropyAggregate> none;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] != row) continue;
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c] == column) return cells[r][c];
  }
  return none;
}

std::string EntropyTable::render_csv() const {
  std::string out = "model,evaluation_category,persona_column,mean,std_over_dimensions,std_over_cells,cells,color,display\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto& cell = cells[r][c];
      out += csv_field(model) + "," + csv_field(rows[r]) + "," + csv_field(columns[c]) + ",";
      if (cell) {
        out += num(cell->mean) + "," + num(cell->std_over_dimensions) + "," + num(cell->std_over_cells) + "," +
               std::to_string(cell->cells) + "," + std::string(to_string(color_class(cell->mean))) + "," +
               format_mean_std(cell->mean, cell->std_over_dimensions) + "\n";
      } else {
        out += ",,,0,," + std::string(kEmptyCell) + "\n";
      }
    }
  }
  return out;
}

std::string EntropyTable::render_markdown() const {
  std::string out = "### " + model + "\n\n| evaluation \\ persona |";
  for (const auto& c : columns) out += " " + c + " |";
  out += "\n|---|";
  for (std::size_t c = 0; c < columns.size(); ++c) out += "---|";
  out += "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += "| " + rows[r] + " |";
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto& cell = cells[r][c];
      if (cell)
        out += " " + format_mean_std(cell->mean, cell->std_over_dimensions) + " (" +
               std::string(to_string(color_class(cell->mean))) + ") |";
      else
        out += " " + std::string(kEmptyCell) + " |";
    }
    out += "\n";
  }
  for (const auto& w : warnings) out += "\n> warning: " + w + "\n";
  return out;
}

std::string EntropyTable::render_html() const {
  std::string out = "<table class=\"entropy\">\n<caption>" + html_escape(model) +
                    "</caption>\n<tr><th>evaluation \\ persona</th>";
  for (const auto& c : columns) out += "<th>" + html_escape(c) + "</th>";
  out += "</tr>\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += "<tr><th>" + html_escape(rows[r]) + "</th>";
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto& cell = cells[r][c];
      if (cell)
        out += "<td class=\"" + std::string(to_string(color_class(cell->mean))) + "\">" +
               format_mean_std(cell->mean, cell->std_over_dimensions) + "</td>";
      else
        out += "<td class=\"empty\">" + std::string(kEmptyCell) + "</td>";
    }
    out += "</tr>\n";
  }
  out += "</table>\n";
  return out;
}

EntropyTable build_entropy_table(const PersonaCatalog& catalog, const std::vector<ConsistencyRecord>& records,
                                 const std::string& model) {
  EntropyTable t;
  t.model = model;
  for (const auto& c : catalog.categories()) {
    t.rows.push_back(c.id);
    t.columns.push_back(c.id);
  }
  std::vector<ConsistencyRecord> mine;
  for (const auto& r : records) {
    if (r.model != model) continue;
    mine.push_back(r);
    const auto col = persona_column(r);
    if (std::find(t.columns.begin(), t.columns.end(), col) == t.columns.end()) t.columns.push_back(col);
  }
  std::map<std::pair<std::string, std::string>, EntropyAggregate> agg;
  for (auto& cell : aggregate_cells(mine)) agg[{cell.evaluation_category, cell.persona_column}] = cell.aggregate;
  t.cells.assign(t.rows.size(), std::vector<std::optional<EntropyAggregate>>(t.columns.size()));
  std::size_t empty = 0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      if (const auto it = agg.find({t.rows[r], t.columns[c]}); it != agg.end())
        t.cells[r][c] = it->second;
      else
        ++empty;
    }
  }
  if (empty)
    t.warnings.push_back(fmt::format("model '{}': {} of {} table cells have no data", model, empty,
                                     t.rows.size() * t.columns.size()));
  return t;
}

// ---------------------------------------------------------------------------
// Heatmaps

std::string HeatmapColumn::title() const {
  if (axis.empty()) return label;
  return persona_category + ":" + label;
}

std::vector<HeatmapColumn> heatmap_columns(const PersonaCatalog& catalog, const std::vector<PersonaSpec>& personas) {
  std::vector<HeatmapColumn> out;
  std::set<std::string> present;
  for (const auto& p : personas) present.insert(p.category_id);
  for (const auto& category : catalog.categories()) {
    if (!present.contains(category.id)) continue;
    for (const auto& axis : category.axes) {
      for (const auto& label : axis.walk_order()) {
        HeatmapColumn col{category.id, axis.id, label, {}};
        for (const auto& p : personas)
          if (p.category_id == category.id && p.has_component(axis.id, label)) col.personas.push_back(p.id);
        out.push_back(std::move(col));
      }
    }
  }
  for (const auto& p : personas)
    if (p.is_custom()) out.push_back(HeatmapColumn{std::string(kCustomCategory), "", p.id, {p.id}});
  return out;
}

namespace {

// persona -> axis -> per-dimension records of one model.
using RecordIndex = std::map<std::string, std::map<std::string, std::vector<const ConsistencyRecord*>>>;

RecordIndex index_records(const std::vector<ConsistencyRecord>& records, const std::string& model) {
  RecordIndex idx;
  for (const auto& r : records)
    if (r.model == model) idx[r.persona_id][r.axis].push_back(&r);
  return idx;
}

}  // namespace

std::optional<double> CharacteristicHeatmap::value(std::string_view axis, std::string_view column_title) const {
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] != axis) continue;
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c].title() == column_title) return values[r][c];
  }
  return std::nullopt;
}

std::string CharacteristicHeatmap::render_csv() const {
  std::string out = "axis";
  for (const auto& c : columns) out += "," + csv_field(c.title());
  out += "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += csv_field(rows[r]);
    for (std::size_t c = 0; c < columns.size(); ++c) out += "," + opt_num(values[r][c]);
    out += "\n";
  }
  return out;
}

std::string OccupationHeatmap::render_csv() const {
  std::string out = "column,personas,mode,intensity,tie";
  for (const auto& l : labels) out += "," + csv_field(l);
  out += "\n";
  for (std::size_t c = 0; c < columns.size(); ++c) {
    out += csv_field(columns[c].title()) + "," + std::to_string(columns[c].personas.size()) + ",";
    if (modes[c]) {
      out += csv_field(modes[c]->mode) + "," + num(modes[c]->intensity) + "," + (modes[c]->tie() ? "1" : "0");
      for (double p : *probabilities[c]) out += "," + num(p);
    } else {
      out += ",,";
      for (std::size_t i = 0; i < labels.size(); ++i) out += ",";
    }
    out += "\n";
  }
  return out;
}

CharacteristicHeatmap build_characteristic_heatmap(const PersonaCatalog& catalog,
                                                   const std::vector<PersonaSpec>& personas,
                                                   const std::vector<ConsistencyRecord>& records,
                                                   const std::string& model) {
  CharacteristicHeatmap h;
  h.model = model;
  for (const auto* axis : catalog.all_axes())
    if (axis->is_binary()) h.rows.push_back(axis->id);
  h.columns = heatmap_columns(catalog, personas);
  const auto idx = index_records(records, model);
  h.values.assign(h.rows.size(), std::vector<std::optional<double>>(h.columns.size()));
  std::size_t empty = 0;
  for (std::size_t r = 0; r < h.rows.size(); ++r) {
    for (std::size_t c = 0; c < h.columns.size(); ++c) {
      std::vector<double> per_persona;
      for (const auto& pid : h.columns[c].personas) {
        const auto pit = idx.find(pid);
        if (pit == idx.end()) continue;
        const auto ait = pit->second.find(h.rows[r]);
        if (ait == pit->second.end()) continue;
        std::vector<double> dims;
        for (const auto* rec : ait->second)
          if (rec->characteristic_score) dims.push_back(*rec->characteristic_score);
        if (!dims.empty()) per_persona.push_back(mean_of(dims));
      }
      if (per_persona.empty())
        ++empty;
      else
        h.values[r][c] = mean_of(per_persona);
    }
  }
  if (empty) h.warnings.push_back(fmt::format("model '{}': {} heatmap entries have no data", model, empty));
  return h;
}

OccupationHeatmap build_occupation_heatmap(const PersonaCatalog& catalog, const std::vector<PersonaSpec>& personas,
                                           const std::vector<ConsistencyRecord>& records, const std::string& model) {
  OccupationHeatmap h;
  h.model = model;
  const CharacteristicAxis* occ = nullptr;
  for (const auto* axis : catalog.all_axes())
    if (axis->labels.size() == 6) occ = axis;
  if (!occ) return h;
  h.labels = occ->labels;
  h.columns = heatmap_columns(catalog, personas);
  const auto idx = index_records(records, model);
  std::size_t empty = 0;
  for (const auto& col : h.columns) {
    std::vector<std::vector<double>> per_persona;
    for (const auto& pid : col.personas) {
      const auto pit = idx.find(pid);
      if (pit == idx.end()) continue;
      const auto ait = pit->second.find(occ->id);
      if (ait == pit->second.end() || ait->second.empty()) continue;
      std::vector<double> mean(h.labels.size(), 0.0);
      for (std::size_t i = 0; i < mean.size(); ++i) {
        std::vector<double> v;
        for (const auto* rec : ait->second) v.push_back(rec->probabilities.at(i));
        mean[i] = mean_of(v);
      }
      per_persona.push_back(std::move(mean));
    }
    if (per_persona.empty()) {
      ++empty;
      h.probabilities.emplace_back();
      h.modes.emplace_back();
      continue;
    }
    std::vector<double> probs(h.labels.size(), 0.0);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      std::vector<double> v;
      for (const auto& p : per_persona) v.push_back(p[i]);
      probs[i] = mean_of(v);
    }
    h.modes.push_back(intensity_of(h.labels, probs));
    h.probabilities.push_back(std::move(probs));
  }
  if (empty) h.warnings.push_back(fmt::format("model '{}': {} occupation columns have no data", model, empty));
  return h;
}

// ---------------------------------------------------------------------------
// Statistics

namespace {

bool matches(const CellSelector& s, const ConsistencyRecord& r) {
  if (s.model && *s.model != r.model) return false;
  if (s.dimension && *s.dimension != r.dimension) return false;
  if (s.intra && *s.intra != r.intra()) return false;
  return true;
}

std::string describe(const CellSelector& s) {
  std::vector<std::string> parts;
  if (s.model) parts.push_back("model=" + *s.model);
  if (s.dimension) parts.push_back("dimension=" + *s.dimension);
  if (s.intra) parts.push_back(*s.intra ? "intra" : "inter");
  if (parts.empty()) return "all";
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
  return out;
}

}  // namespace

stats::PairedSample paired_sample(const std::vector<ConsistencyRecord>& records, const ComparisonSpec& spec,
                                  PairingKey pairing) {
  const bool by_model = spec.a.model == spec.b.model;
  const bool by_dimension = pairing == PairingKey::persona_dimension && spec.a.dimension == spec.b.dimension;
  auto unit_of = [&](const ConsistencyRecord& r) {
    std::string key = r.persona_id;
    if (by_model) key = r.model + "|" + key;
    if (by_dimension) key += "|" + r.dimension;
    return key;
  };
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : records) {
    const bool in_a = matches(spec.a, r);
    const bool in_b = matches(spec.b, r);
    if (!in_a && !in_b) continue;
    const auto key = unit_of(r);
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) order.push_back(key);
    if (in_a) it->second.first.push_back(r.entropy);
    if (in_b) it->second.second.push_back(r.entropy);
  }
  stats::PairedSample s;
  s.label_a = describe(spec.a);
  s.label_b = describe(spec.b);
  for (const auto& key : order) {
    const auto& [a, b] = groups.at(key);
    if (a.empty() || b.empty()) continue;
    s.pairs.emplace_back(mean_of(a), mean_of(b));
    s.units.push_back(key);
  }
  return s;
}

ComparisonResult run_comparison(const std::vector<ConsistencyRecord>& records, const ComparisonSpec& spec,
                                const StatsConfig& config) {
  ComparisonResult out;
  out.name = spec.name;
  out.description = describe(spec.a) + (spec.alternative == stats::Alternative::less ? " < " : " > ") +
                    describe(spec.b);
  try {
    const auto sample = paired_sample(records, spec, config.pairing);
    if (sample.pairs.empty())
      throw Error(ErrorCode::incomplete_matrix, "no unit has cells on both sides of the comparison");
    out.wilcoxon = stats::wilcoxon_one_sided(sample, spec.alternative, config.zero_method);
  } catch (const Error& e) {
    out.error = e.what();
  }
  return out;
}

RankTable build_rank_table(const std::vector<ConsistencyRecord>& records, const StatsInputs& inputs, RankBy by) {
  RankTable t;
  const auto& treatments = by == RankBy::model ? inputs.models : inputs.dimensions;
  const auto& others = by == RankBy::model ? inputs.dimensions : inputs.models;
  t.title = by == RankBy::model ? "models" : "dimensions";
  t.block_description = by == RankBy::model ? "evaluation category x dimension" : "evaluation category x model";
  t.treatments = treatments;

  // (intra, category, other, treatment) -> entropies
  std::map<std::tuple<bool, std::string, std::string, std::string>, std::vector<double>> cells;
  for (const auto& r : records) {
    const auto& treatment = by == RankBy::model ? r.model : r.dimension;
    const auto& other = by == RankBy::model ? r.dimension : r.model;
    cells[{r.intra(), r.evaluation_category, other, treatment}].push_back(r.entropy);
  }

  auto build = [&](bool intra, std::size_t& blocks_used, std::string& error) -> std::optional<stats::NemenyiResult> {
    stats::BlockedMatrix m;
    m.treatments = treatments;
    std::size_t dropped = 0;
    for (const auto& category : inputs.categories) {
      for (const auto& other : others) {
        std::vector<double> row;
        for (const auto& tr : treatments) {
          const auto it = cells.find({intra, category, other, tr});
          if (it == cells.end()) break;
          row.push_back(-mean_of(it->second));
        }
        if (row.size() != treatments.size()) {
          ++dropped;
          continue;
        }
        m.blocks.push_back(category + "/" + other);
        m.values.push_back(std::move(row));
      }
    }
    blocks_used = m.values.size();
    try {
      if (treatments.size() < 2)
        throw Error(ErrorCode::incomplete_matrix, "ranking needs at least 2 treatments");
      if (m.values.size() < 2)
        throw Error(ErrorCode::incomplete_matrix,
                    fmt::format("ranking needs at least 2 complete blocks ({} dropped as incomplete)", dropped));
      return stats::nemenyi(m, inputs.stats.alpha);
    } catch (const Error& e) {
      error = e.what();
      return std::nullopt;
    }
  };
  t.intra = build(true, t.intra_blocks, t.intra_error);
  t.inter = build(false, t.inter_blocks, t.inter_error);
  return t;
}

namespace {

nlohmann::json wilcoxon_json(const stats::WilcoxonResult& w) {
  return {{"status", stats::to_string(w.status)}, {"statistic", w.statistic}, {"p_value", w.p_value},
          {"n", w.n},                             {"n_nonzero", w.n_nonzero},  {"exact", w.exact},
          {"z", w.z}};
}

nlohmann::json nemenyi_json(const stats::NemenyiResult& n) {
  return {{"mean_ranks", n.mean_ranks},
          {"q_alpha", n.q_alpha},
          {"critical_difference", n.critical_difference},
          {"significant", n.significant},
          {"alpha", n.alpha},
          {"friedman_significant", n.friedman_significant},
          {"friedman_p", n.friedman_p}};
}

}  // namespace

nlohmann::json StatsReport::to_json() const {
  nlohmann::json j;
  j["comparisons"] = nlohmann::json::array();
  for (const auto& c : comparisons) {
    nlohmann::json e{{"name", c.name}, {"description", c.description}};
    if (c.wilcoxon) e["wilcoxon"] = wilcoxon_json(*c.wilcoxon);
    if (!c.error.empty()) e["error"] = c.error;
    j["comparisons"].push_back(std::move(e));
  }
  j["rank_tables"] = nlohmann::json::array();
  for (const auto& t : rank_tables) {
    nlohmann::json e{{"title", t.title},
                     {"blocks", t.block_description},
                     {"treatments", t.treatments},
                     {"intra_blocks", t.intra_blocks},
                     {"inter_blocks", t.inter_blocks}};
    if (t.intra) e["intra"] = nemenyi_json(*t.intra);
    if (t.inter) e["inter"] = nemenyi_json(*t.inter);
    if (!t.intra_error.empty()) e["intra_error"] = t.intra_error;
    if (!t.inter_error.empty()) e["inter_error"] = t.inter_error;
    j["rank_tables"].push_back(std::move(e));
  }
  j["intervals"] = nlohmann::json::array();
  for (const auto& ci : intervals) {
    nlohmann::json e{{"model", ci.model}, {"dimension", ci.dimension}, {"scope", ci.scope}, {"n", ci.n}};
    if (ci.interval)
      e["interval"] = {{"mean", ci.interval->mean},
                       {"lo", ci.interval->lo},
                       {"hi", ci.interval->hi},
                       {"level", ci.interval->level},
                       {"resamples", ci.interval->resamples}};
    j["intervals"].push_back(std::move(e));
  }
  return j;
}

std::string StatsReport::render_markdown() const {
  std::string out = "## Wilcoxon signed-rank tests (one-sided)\n\n| comparison | hypothesis | status | W+ | n | p |\n"
                    "|---|---|---|---|---|---|\n";
  for (const auto& c : comparisons) {
    if (c.wilcoxon)
      out += fmt::format("| {} | {} | {} | {:.1f} | {} | {:.4g}{} |\n", c.name, c.description,
                         stats::to_string(c.wilcoxon->status), c.wilcoxon->statistic, c.wilcoxon->n,
                         c.wilcoxon->p_value, c.wilcoxon->exact ? " (exact)" : "");
    else
      out += fmt::format("| {} | {} | error: {} | | | |\n", c.name, c.description, c.error);
  }
  for (const auto& t : rank_tables) {
    out += fmt::format("\n## Nemenyi rankings of {}\n\nBlocks: {}. Higher rank = more consistent.\n\n", t.title,
                       t.block_description);
    out += "| treatment | intra rank | inter rank |\n|---|---|---|\n";
    for (std::size_t i = 0; i < t.treatments.size(); ++i) {
      const auto rank = [&](const std::optional<stats::NemenyiResult>& n) {
        return n ? fmt::format("{:.2f}", n->mean_ranks[i]) : std::string(kEmptyCell);
      };
      out += "| " + t.treatments[i] + " | " + rank(t.intra) + " | " + rank(t.inter) + " |\n";
    }
    const auto summary = [&](const char* scope, const std::optional<stats::NemenyiResult>& n, std::size_t blocks,
                             const std::string& err) {
      if (n)
        out += fmt::format("\n{}: {} blocks, Friedman p = {:.4g}, CD = {:.3f}\n", scope, blocks, n->friedman_p,
                           n->critical_difference);
      else
        out += fmt::format("\n{}: {}\n", scope, err);
    };
    summary("intra", t.intra, t.intra_blocks, t.intra_error);
    summary("inter", t.inter, t.inter_blocks, t.inter_error);
  }
  out += "\n## Bootstrap intervals of dimension means\n\n| model | dimension | scope | n | mean | lo | hi |\n"
         "|---|---|---|---|---|---|---|\n";
  for (const auto& ci : intervals) {
    if (ci.interval)
      out += fmt::format("| {} | {} | {} | {} | {:.3f} | {:.3f} | {:.3f} |\n", ci.model, ci.dimension, ci.scope, ci.n,
                         ci.interval->mean, ci.interval->lo, ci.interval->hi);
    else
      out += fmt::format("| {} | {} | {} | 0 | {} | | |\n", ci.model, ci.dimension, ci.scope, kEmptyCell);
  }
  return out;
}

StatsReport build_stats_report(const std::vector<ConsistencyRecord>& records, const StatsInputs& inputs) {
  StatsReport rep;
  for (const auto& m : inputs.models) {
    ComparisonSpec spec{"intra_vs_inter/" + m, {m, std::nullopt, true}, {m, std::nullopt, false},
                        stats::Alternative::less};
    rep.comparisons.push_back(run_comparison(records, spec, inputs.stats));
  }
  for (const auto& d : inputs.dimensions) {
    ComparisonSpec spec{"intra_vs_inter/dimension/" + d, {std::nullopt, d, true}, {std::nullopt, d, false},
                        stats::Alternative::less};
    rep.comparisons.push_back(run_comparison(records, spec, inputs.stats));
  }
  for (const auto& spec : inputs.stats.comparisons) rep.comparisons.push_back(run_comparison(records, spec, inputs.stats));

  rep.rank_tables.push_back(build_rank_table(records, inputs, RankBy::model));
  rep.rank_tables.push_back(build_rank_table(records, inputs, RankBy::dimension));

  std::vector<std::string> models = inputs.models;
  models.push_back("*");
  for (const auto& m : models) {
    for (const auto& d : inputs.dimensions) {
      for (const bool intra : {true, false}) {
        std::vector<double> values;
        for (const auto& r : records)
          if ((m == "*" || r.model == m) && r.dimension == d && r.intra() == intra) values.push_back(r.entropy);
        CiEntry ci{m, d, intra ? "intra" : "inter", values.size(), std::nullopt};
        if (!values.empty())
          ci.interval = stats::bootstrap_ci(values, inputs.stats.bootstrap_level, inputs.stats.bootstrap_resamples,
                                            derive_seed(inputs.seed, "ci|" + m + "|" + d + "|" + ci.scope));
        rep.intervals.push_back(std::move(ci));
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Artifact emission

namespace {

void write_text(const fs::path& p, const std::string& text, ReportArtifacts& out) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::io, "cannot write " + p.string());
  f << text;
  out.files.push_back(p);
}

}  // namespace

ReportArtifacts emit_reports(const Experiment& experiment, const std::vector<ConsistencyRecord>& records,
                             const fs::path& dir) {
  ReportArtifacts out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create " + dir.string() + ": " + ec.message());

  const auto models = experiment.config.subject_names();
  std::string md = "# Persona consistency report\n\nCells show mean ± std of normalized entropy over dimensions. "
                   "green < 0.25, orange < 0.5, red otherwise.\n\n";
  std::string html = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><style>\n"
                     "td.green{background:#b7e1a1}td.orange{background:#ffd08a}td.red{background:#f4a3a3}\n"
                     "td,th{padding:4px 8px;border:1px solid #999}table{border-collapse:collapse;margin:1em 0}\n"
                     "</style></head><body>\n";
  for (const auto& m : models) {
    const auto stem = sanitize_filename(m);
    const auto table = build_entropy_table(experiment.catalog, records, m);
    write_text(dir / ("entropy_table_" + stem + ".csv"), table.render_csv(), out);
    md += table.render_markdown() + "\n";
    html += table.render_html();
    out.warnings.insert(out.warnings.end(), table.warnings.begin(), table.warnings.end());

    const auto heat = build_characteristic_heatmap(experiment.catalog, experiment.personas, records, m);
    write_text(dir / ("heatmap_characteristic_" + stem + ".csv"), heat.render_csv(), out);
    out.warnings.insert(out.warnings.end(), heat.warnings.begin(), heat.warnings.end());
    const auto occ = build_occupation_heatmap(experiment.catalog, experiment.personas, records, m);
    if (!occ.labels.empty()) {
      write_text(dir / ("heatmap_occupation_" + stem + ".csv"), occ.render_csv(), out);
      out.warnings.insert(out.warnings.end(), occ.warnings.begin(), occ.warnings.end());
    }
  }
  html += "</body></html>\n";
  write_text(dir / "entropy_tables.md", md, out);
  write_text(dir / "entropy_tables.html", html, out);

  StatsInputs inputs;
  inputs.models = models;
  for (auto d : experiment.config.dimensions) inputs.dimensions.emplace_back(to_string(d));
  for (const auto& c : experiment.catalog.categories()) inputs.categories.push_back(c.id);
  inputs.stats = experiment.config.stats;
  inputs.seed = experiment.config.seed;
  const auto report = build_stats_report(records, inputs);
  write_text(dir / "stats.json", report.to_json().dump(2) + "\n", out);
  write_text(dir / "stats.md", report.render_markdown(), out);
  return out;
}

}  // namespace pcons
