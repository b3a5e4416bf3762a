#include "pcons/persona_catalog.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "pcons/error.hpp"
#include "pcons/text_util.hpp"

namespace pcons {

namespace {

constexpr std::string_view kStandardCategoriesJson =
#include "pcons/standard_categories.inc"
    ;

[[noreturn]] void category_error(const std::string& msg) {
  throw Error(ErrorCode::invalid_category, msg);
}

// Expected shape of the four standard categories: axis count and labels per axis.
struct StandardShape {
  std::string_view id;
  std::size_t axes;
  std::size_t labels_per_axis;
};

constexpr StandardShape kStandardShapes[] = {
    {"happiness", 1, 2},
    {"occupation", 1, 6},
    {"personality", 5, 2},
    {"political", 2, 2},
};

void validate_axis(const CharacteristicAxis& axis) {
  if (axis.id.empty()) category_error("axis with empty id in category '" + axis.category_id + "'");
  if (axis.labels.size() < 2) category_error("axis '" + axis.id + "' needs at least 2 labels");
  std::set<std::string> seen;
  for (const auto& label : axis.labels) {
    if (label.empty()) category_error("axis '" + axis.id + "' has an empty label");
    if (!seen.insert(label).second) category_error("axis '" + axis.id + "' repeats label '" + label + "'");
  }
  for (const auto& [label, phrase] : axis.phrases) {
    if (!seen.contains(label)) category_error("axis '" + axis.id + "' phrase for unknown label '" + label + "'");
    if (phrase.empty()) category_error("axis '" + axis.id + "' has an empty phrase for '" + label + "'");
  }
  if (!axis.enumeration_order.empty()) {
    std::set<std::string> order(axis.enumeration_order.begin(), axis.enumeration_order.end());
    if (order != seen || axis.enumeration_order.size() != axis.labels.size())
      category_error("axis '" + axis.id + "' enumeration_order must be a permutation of its labels");
  }
  for (const auto& [label, _] : axis.judge_options)
    if (!seen.contains(label)) category_error("axis '" + axis.id + "' judge option for unknown label '" + label + "'");
  for (const auto& [label, _] : axis.synonyms)
    if (!seen.contains(label)) category_error("axis '" + axis.id + "' synonyms for unknown label '" + label + "'");
}

CharacteristicAxis axis_from_json(const nlohmann::json& j, const std::string& category_id) {
  CharacteristicAxis axis;
  axis.category_id = category_id;
  axis.id = j.at("id").get<std::string>();
  axis.labels = j.at("labels").get<std::vector<std::string>>();
  if (j.contains("phrases")) axis.phrases = j.at("phrases").get<std::map<std::string, std::string>>();
  if (j.contains("enumeration_order"))
    axis.enumeration_order = j.at("enumeration_order").get<std::vector<std::string>>();
  if (j.contains("judge_question")) axis.judge_question = j.at("judge_question").get<std::string>();
  axis.judge_prefix = j.value("judge_prefix", std::string());
  if (j.contains("judge_options"))
    axis.judge_options = j.at("judge_options").get<std::map<std::string, std::string>>();
  if (j.contains("synonyms"))
    axis.synonyms = j.at("synonyms").get<std::map<std::string, std::vector<std::string>>>();
  return axis;
}

PersonaSpec make_custom(std::string id, std::string description) {
  if (trim(description).empty()) throw Error(ErrorCode::invalid_persona, "empty custom persona entry");
  PersonaSpec spec;
  spec.id = std::move(id);
  spec.category_id = std::string(kCustomCategory);
  spec.descriptor = std::string(trim(description));
  spec.system_prompt = render_system_prompt(spec);
  return spec;
}

}  // namespace

std::size_t CharacteristicAxis::label_index(std::string_view label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  return it == labels.end() ? std::string::npos : static_cast<std::size_t>(it - labels.begin());
}

bool CharacteristicAxis::has_label(std::string_view label) const {
  return label_index(label) != std::string::npos;
}

const std::string& CharacteristicAxis::phrase(const std::string& label) const {
  auto it = phrases.find(label);
  return it == phrases.end() ? label : it->second;
}

const std::string& CharacteristicAxis::judge_option(const std::string& label) const {
  auto it = judge_options.find(label);
  return it == judge_options.end() ? phrase(label) : it->second;
}

const std::vector<std::string>& CharacteristicAxis::walk_order() const {
  return enumeration_order.empty() ? labels : enumeration_order;
}

const CharacteristicAxis* PersonaCategory::find_axis(std::string_view axis_id) const {
  for (const auto& axis : axes)
    if (axis.id == axis_id) return &axis;
  return nullptr;
}

std::size_t PersonaCategory::persona_count() const {
  std::size_t n = 1;
  for (const auto& axis : axes) n *= axis.labels.size();
  return n;
}

bool PersonaSpec::has_component(const std::string& axis, const std::string& label) const {
  auto it = components.find(axis);
  return it != components.end() && it->second == label;
}

PersonaCategory make_category(std::string id, std::vector<CharacteristicAxis> axes) {
  if (id.empty()) category_error("category with empty id");
  if (id == kCustomCategory) category_error("'custom' is reserved for free-text personas");
  if (axes.empty()) category_error("category '" + id + "' has no axes");
  std::set<std::string> axis_ids;
  for (auto& axis : axes) {
    axis.category_id = id;
    validate_axis(axis);
    if (!axis_ids.insert(axis.id).second) category_error("category '" + id + "' repeats axis '" + axis.id + "'");
  }
  for (const auto& shape : kStandardShapes) {
    if (shape.id != id) continue;
    if (axes.size() != shape.axes)
      category_error("category '" + id + "' must have " + std::to_string(shape.axes) + " axes");
    for (const auto& axis : axes)
      if (axis.labels.size() != shape.labels_per_axis)
        category_error("axis '" + axis.id + "' must have " + std::to_string(shape.labels_per_axis) + " labels");
  }
  return PersonaCategory{std::move(id), std::move(axes)};
}

std::string join_descriptor(const std::vector<std::string>& fragments) {
  if (fragments.empty()) return {};
  if (fragments.size() == 1) return fragments.front();
  if (fragments.size() == 2) return fragments[0] + " and " + fragments[1];
  std::string out;
  for (std::size_t i = 0; i + 1 < fragments.size(); ++i) out += fragments[i] + ", ";
  return out + "and " + fragments.back();
}

std::vector<PersonaSpec> enumerate_personas(const PersonaCategory& category) {
  std::vector<PersonaSpec> out;
  out.reserve(category.persona_count());
  std::vector<std::size_t> digits(category.axes.size(), 0);
  while (true) {
    PersonaSpec spec;
    spec.category_id = category.id;
    std::vector<std::string> fragments;
    std::string id_tail;
    for (std::size_t a = 0; a < category.axes.size(); ++a) {
      const auto& axis = category.axes[a];
      const auto& label = axis.walk_order()[digits[a]];
      spec.components[axis.id] = label;
      fragments.push_back(axis.phrase(label));
      id_tail += (a == 0 ? "" : "-") + label;
    }
    spec.id = category.id + "/" + id_tail;
    spec.descriptor = join_descriptor(fragments);
    spec.system_prompt = render_system_prompt(spec);
    out.push_back(std::move(spec));

    // Odometer increment, last axis fastest.
    std::size_t a = category.axes.size();
    while (a > 0) {
      --a;
      if (++digits[a] < category.axes[a].labels.size()) break;
      digits[a] = 0;
      if (a == 0) return out;
    }
    if (category.axes.empty()) return out;
  }
}

std::string render_system_prompt(const PersonaSpec& persona) {
  if (trim(persona.descriptor).empty())
    throw Error(ErrorCode::invalid_persona, "persona '" + persona.id + "' has an empty descriptor");
  return std::string(kSystemPromptPrefix) + persona.descriptor;
}

std::vector<PersonaSpec> parse_custom_personas(std::string_view text, bool json) {
  std::vector<PersonaSpec> out;
  if (json) {
    if (trim(text).empty()) return out;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::invalid_persona, std::string("custom persona file is not valid JSON: ") + e.what());
    }
    if (doc.is_object() && doc.contains("personas")) doc = doc.at("personas");
    if (!doc.is_array()) throw Error(ErrorCode::invalid_persona, "custom persona JSON must be an array");
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const auto& entry = doc[i];
      std::string default_id = "custom/" + std::to_string(i + 1);
      if (entry.is_string()) {
        out.push_back(make_custom(default_id, entry.get<std::string>()));
      } else if (entry.is_object() && entry.contains("description")) {
        std::string id = entry.contains("id") ? "custom/" + entry.at("id").get<std::string>() : default_id;
        out.push_back(make_custom(id, entry.at("description").get<std::string>()));
      } else {
        throw Error(ErrorCode::invalid_persona, "custom persona entry " + std::to_string(i + 1) + " is malformed");
      }
    }
    return out;
  }
  std::vector<std::string> lines;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty())
      throw Error(ErrorCode::invalid_persona, "empty custom persona entry on line " + std::to_string(i + 1));
    out.push_back(make_custom("custom/" + std::to_string(i + 1), lines[i]));
  }
  return out;
}

std::vector<PersonaSpec> load_custom_personas(const std::filesystem::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read custom persona file " + source.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_custom_personas(buf.str(), source.extension() == ".json");
}

PersonaCatalog::PersonaCatalog(std::vector<PersonaCategory> categories) : categories_(std::move(categories)) {
  std::set<std::string> ids, axes;
  for (const auto& c : categories_) {
    if (!ids.insert(c.id).second) category_error("duplicate category '" + c.id + "'");
    for (const auto& a : c.axes)
      if (!axes.insert(a.id).second) category_error("axis id '" + a.id + "' used by more than one category");
  }
}

PersonaCatalog PersonaCatalog::from_json(const nlohmann::json& doc) {
  try {
    int version = doc.value("schema_version", 0);
    if (version != kCategorySchemaVersion)
      category_error("unsupported category schema_version " + std::to_string(version));
    std::vector<PersonaCategory> categories;
    for (const auto& c : doc.at("categories")) {
      std::string id = c.at("id").get<std::string>();
      std::vector<CharacteristicAxis> axes;
      for (const auto& a : c.at("axes")) axes.push_back(axis_from_json(a, id));
      categories.push_back(make_category(id, std::move(axes)));
    }
    return PersonaCatalog(std::move(categories));
  } catch (const nlohmann::json::exception& e) {
    category_error(std::string("malformed category document: ") + e.what());
  }
}

PersonaCatalog PersonaCatalog::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot read category file " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    category_error(path.string() + ": " + e.what());
  }
}

const PersonaCatalog& PersonaCatalog::standard() {
  static const PersonaCatalog catalog = from_json(nlohmann::json::parse(kStandardCategoriesJson));
  return catalog;
}

std::string_view PersonaCatalog::standard_json() { return kStandardCategoriesJson; }

const PersonaCategory* PersonaCatalog::find_category(std::string_view id) const {
  for (const auto& c : categories_)
    if (c.id == id) return &c;
  return nullptr;
}

const PersonaCategory& PersonaCatalog::category(std::string_view id) const {
  if (const auto* c = find_category(id)) return *c;
  throw Error(ErrorCode::invalid_category, "unknown persona category '" + std::string(id) + "'");
}

std::vector<const CharacteristicAxis*> PersonaCatalog::all_axes() const {
  std::vector<const CharacteristicAxis*> out;
  for (const auto& c : categories_)
    for (const auto& a : c.axes) out.push_back(&a);
  return out;
}

const CharacteristicAxis& PersonaCatalog::axis(std::string_view axis_id) const {
  for (const auto& c : categories_)
    if (const auto* a = c.find_axis(axis_id)) return *a;
  throw Error(ErrorCode::unknown_axis, "unknown axis '" + std::string(axis_id) + "'");
}

}  // namespace pcons
