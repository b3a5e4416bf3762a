#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace pcons {

inline constexpr std::string_view kSystemPromptPrefix = "You are a character who is ";
inline constexpr std::string_view kCustomCategory = "custom";
inline constexpr int kCategorySchemaVersion = 1;

/// One trait dimension that personas are assigned on and responses are
/// labelled on. Labels are identifiers; their declared order fixes the
/// orientation of characteristic scores (the first label scores 1).
struct CharacteristicAxis {
  std::string id;
  std::string category_id;
  std::vector<std::string> labels;
  /// Persona phrase fragment per label, e.g. "introvert" -> "introverted".
  std::map<std::string, std::string> phrases;
  /// Order in which labels are walked during enumeration. Empty means
  /// declared order.
  std::vector<std::string> enumeration_order;
  /// Option wording shown to the judge, e.g. "happy or sad".
  std::string judge_question;
  /// Prepended to the option list when it is rebuilt from `judge_options`.
  std::string judge_prefix;
  /// Per-label wording inside the judge question.
  std::map<std::string, std::string> judge_options;
  /// Extra spellings accepted when parsing judge output.
  std::map<std::string, std::vector<std::string>> synonyms;

  bool is_binary() const { return labels.size() == 2; }
  std::size_t label_index(std::string_view label) const;  // npos if absent
  bool has_label(std::string_view label) const;
  const std::string& phrase(const std::string& label) const;
  const std::string& judge_option(const std::string& label) const;
  const std::vector<std::string>& walk_order() const;
};

struct PersonaCategory {
  std::string id;
  std::vector<CharacteristicAxis> axes;

  const CharacteristicAxis* find_axis(std::string_view axis_id) const;
  std::size_t persona_count() const;
};

struct PersonaSpec {
  std::string id;
  std::string category_id;
  /// axis id -> label. Empty for custom personas.
  std::map<std::string, std::string> components;
  std::string descriptor;
  std::string system_prompt;

  bool is_custom() const { return category_id == kCustomCategory; }
  bool has_component(const std::string& axis, const std::string& label) const;
};

/// Validates and builds a category. Throws Error(invalid_category) when an
/// axis is malformed or the standard-category shape is violated.
PersonaCategory make_category(std::string id, std::vector<CharacteristicAxis> axes);

/// Full Cartesian product of axis labels. The first axis varies slowest.
std::vector<PersonaSpec> enumerate_personas(const PersonaCategory& category);

/// Joins phrase fragments: "a", "a and b", "a, b, and c".
std::string join_descriptor(const std::vector<std::string>& fragments);

std::string render_system_prompt(const PersonaSpec& persona);

/// Reads custom personas from a JSON array (strings or {id, description})
/// or a plain-text file with one description per line.
std::vector<PersonaSpec> load_custom_personas(const std::filesystem::path& source);
std::vector<PersonaSpec> parse_custom_personas(std::string_view text, bool json);

/// Category registry loaded from a versioned JSON document.
class PersonaCatalog {
 public:
  PersonaCatalog() = default;
  explicit PersonaCatalog(std::vector<PersonaCategory> categories);

  static PersonaCatalog from_json(const nlohmann::json& doc);
  static PersonaCatalog load(const std::filesystem::path& path);
  /// The four categories (happiness, occupation, personality, political).
  static const PersonaCatalog& standard();
  static std::string_view standard_json();

  const std::vector<PersonaCategory>& categories() const { return categories_; }
  const PersonaCategory& category(std::string_view id) const;
  const PersonaCategory* find_category(std::string_view id) const;
  /// Every axis across all categories, in category order.
  std::vector<const CharacteristicAxis*> all_axes() const;
  const CharacteristicAxis& axis(std::string_view axis_id) const;

 private:
  std::vector<PersonaCategory> categories_;
};

}  // namespace pcons
