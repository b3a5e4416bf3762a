#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "pcons/error.hpp"
#include "pcons/persona_catalog.hpp"
#include "support/fixtures.hpp"

using namespace pcons;

namespace {

std::vector<PersonaSpec> personas_of(std::string_view category) {
  return enumerate_personas(PersonaCatalog::standard().category(category));
}

}  // namespace

TEST(PersonaCatalog, StandardCategoryCounts) {
  EXPECT_EQ(personas_of("happiness").size(), 2u);
  EXPECT_EQ(personas_of("occupation").size(), 6u);
  EXPECT_EQ(personas_of("personality").size(), 32u);
  EXPECT_EQ(personas_of("political").size(), 4u);
}

TEST(PersonaCatalog, HappinessPersonasInOrder) {
  const auto p = personas_of("happiness");
  EXPECT_EQ(p[0].system_prompt, "You are a character who is happy");
  EXPECT_EQ(p[1].system_prompt, "You are a character who is sad");
  EXPECT_EQ(p[0].components.at("happiness"), "happy");
}

TEST(PersonaCatalog, OccupationPromptUsesArticle) {
  const auto p = personas_of("occupation");
  EXPECT_EQ(p[0].system_prompt, "You are a character who is a pilot");
  EXPECT_EQ(p[1].system_prompt, "You are a character who is an economist");
}

TEST(PersonaCatalog, PoliticalCrossProduct) {
  const auto p = personas_of("political");
  ASSERT_EQ(p.size(), 4u);
  EXPECT_EQ(p[0].components.at("economic"), "left");
  EXPECT_EQ(p[0].components.at("social"), "libertarian");
  EXPECT_EQ(p[1].components.at("economic"), "left");
  EXPECT_EQ(p[1].components.at("social"), "authoritarian");
  EXPECT_EQ(p[3].components.at("economic"), "right");
  EXPECT_EQ(p[3].components.at("social"), "authoritarian");
  EXPECT_NE(p[0].descriptor.find(" and "), std::string::npos);
}

TEST(PersonaCatalog, PersonalityIdsUniqueAndEveryComponentInHalf) {
  const auto p = personas_of("personality");
  std::set<std::string> ids;
  for (const auto& s : p) ids.insert(s.id);
  EXPECT_EQ(ids.size(), 32u);
  for (const auto& axis : PersonaCatalog::standard().category("personality").axes)
    for (const auto& label : axis.labels) {
      std::size_t n = 0;
      for (const auto& s : p) n += s.has_component(axis.id, label);
      EXPECT_EQ(n, 16u) << axis.id << "=" << label;
    }
}

TEST(PersonaCatalog, EmptyDescriptorIsRejected) {
  PersonaSpec spec;
  spec.id = "x";
  spec.descriptor = "  ";
  try {
    render_system_prompt(spec);
    FAIL() << "expected invalid_persona";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_persona);
  }
}

TEST(PersonaCatalog, JoinDescriptor) {
  EXPECT_EQ(join_descriptor({"a"}), "a");
  EXPECT_EQ(join_descriptor({"a", "b"}), "a and b");
  EXPECT_EQ(join_descriptor({"a", "b", "c"}), "a, b, and c");
}

TEST(PersonaCatalog, AllAxesCountsNine) {
  EXPECT_EQ(PersonaCatalog::standard().all_axes().size(), 9u);
  EXPECT_EQ(PersonaCatalog::standard().axis("happiness").labels.front(), "happy");
}

TEST(CustomPersonas, PlainTextPreservesOrder) {
  const auto p = parse_custom_personas("one\ntwo\nthree\nfour\nfive\n", false);
  ASSERT_EQ(p.size(), 5u);
  EXPECT_EQ(p[0].descriptor, "one");
  EXPECT_EQ(p[4].descriptor, "five");
  EXPECT_TRUE(p[0].is_custom());
}

TEST(CustomPersonas, EmptyInputGivesEmptyList) {
  EXPECT_TRUE(parse_custom_personas("", false).empty());
  EXPECT_TRUE(parse_custom_personas("", true).empty());
}

TEST(CustomPersonas, JsonEntriesAndIds) {
  const auto p = parse_custom_personas(
      R"(["a policy advisor working on strategies for coastal towns", {"id": "nurse", "description": "a night nurse"}])",
      true);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].system_prompt, "You are a character who is a policy advisor working on strategies for coastal towns");
  EXPECT_EQ(p[1].id, "custom/nurse");
}

TEST(CustomPersonas, BlankLineInsideFileIsRejected) {
  EXPECT_THROW(parse_custom_personas("one\n\nthree\n", false), Error);
}

TEST(CustomPersonas, LoadFromFile) {
  fixture::TempDir tmp;
  const auto file = tmp.path() / "people.txt";
  std::ofstream(file) << "a pilot who hates flying\nan economist\n";
  const auto p = load_custom_personas(file);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[1].descriptor, "an economist");
}

TEST(CategoryValidation, MalformedAxisRejected) {
  CharacteristicAxis axis;
  axis.id = "mood";
  axis.labels = {"up"};
  try {
    make_category("custom-mood", {axis});
    FAIL() << "expected invalid_category";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_category);
  }
}
