#include <random>

#include <gtest/gtest.h>

#include "pcons/consistency_metrics.hpp"
#include "pcons/error.hpp"
#include "support/oracles.hpp"

using namespace pcons;

namespace {

const CharacteristicAxis& happiness() { return PersonaCatalog::standard().axis("happiness"); }
const CharacteristicAxis& occupation() { return PersonaCatalog::standard().axis("occupation"); }

LabelDistribution binary(std::size_t a, std::size_t b, std::size_t neutral) {
  return LabelDistribution::from_counts(happiness(), {{"happy", a}, {"sad", b}}, neutral);
}

ConsistencyRecord rec(std::string dim, double entropy, std::string persona = "p") {
  ConsistencyRecord r;
  r.model = "m";
  r.persona_id = std::move(persona);
  r.persona_category = "happiness";
  r.evaluation_category = "happiness";
  r.axis = "happiness";
  r.dimension = std::move(dim);
  r.entropy = entropy;
  return r;
}

}  // namespace

TEST(EffectiveDistribution, NeutralRedistribution) {
  const auto p = effective_distribution(binary(3, 1, 2));
  EXPECT_NEAR(p[0], 4.0 / 6.0, 1e-15);
  EXPECT_NEAR(p[1], 2.0 / 6.0, 1e-15);
  EXPECT_EQ(effective_distribution(binary(5, 0, 0)), (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(effective_distribution(binary(0, 0, 6)), (std::vector<double>{0.5, 0.5}));
}

TEST(EffectiveDistribution, EmptyCellIsError) {
  try {
    effective_distribution(binary(0, 0, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_cell);
  }
}

TEST(EffectiveDistribution, ExcludedNeverEntersTotal) {
  auto d = binary(3, 1, 0);
  d.add_excluded(10);
  EXPECT_EQ(d.total(), 4u);
  EXPECT_NEAR(effective_distribution(d)[0], 0.75, 1e-15);
  EXPECT_NEAR(d.exclusion_rate(), 10.0 / 14.0, 1e-15);
}

TEST(NormalizedEntropy, Examples) {
  const std::vector<double> one{1.0, 0.0}, half{0.5, 0.5}, quarter{0.75, 0.25};
  EXPECT_EQ(normalized_entropy(one, 2), 0.0);
  EXPECT_EQ(normalized_entropy(half, 2), 1.0);
  EXPECT_NEAR(normalized_entropy(quarter, 2), oracle::binary_entropy(0.75), 1e-12);
  EXPECT_NEAR(normalized_entropy(quarter, 2), 0.811278124459133, 1e-12);
  const std::vector<double> uniform6(6, 1.0 / 6.0);
  EXPECT_NEAR(normalized_entropy(uniform6, 6), 1.0, 1e-15);
}

TEST(NormalizedEntropy, MalformedInputIsError) {
  const std::vector<double> bad{0.7, 0.7}, neg{1.5, -0.5}, short_p{1.0};
  EXPECT_THROW(normalized_entropy(bad, 2), Error);
  EXPECT_THROW(normalized_entropy(neg, 2), Error);
  EXPECT_THROW(normalized_entropy(short_p, 2), Error);
}

TEST(NormalizedEntropy, ExhaustiveBinaryMatchesOracle) {
  for (std::size_t total = 1; total <= 8; ++total)
    for (std::size_t a = 0; a <= total; ++a)
      for (std::size_t b = 0; a + b <= total; ++b) {
        const std::size_t n = total - a - b;
        EXPECT_NEAR(normalized_entropy(binary(a, b, n)), oracle::entropy({a, b}, n), 1e-12)
            << a << "," << b << "," << n;
      }
}

TEST(NormalizedEntropy, RandomSixClassMatchesOracle) {
  std::mt19937 rng(77);
  std::uniform_int_distribution<std::size_t> c(0, 12);
  for (int t = 0; t < 1000; ++t) {
    std::map<std::string, std::size_t> counts;
    std::vector<std::size_t> raw;
    for (const auto& l : occupation().labels) {
      raw.push_back(c(rng));
      counts[l] = raw.back();
    }
    const std::size_t n = c(rng);
    std::size_t total = n;
    for (auto x : raw) total += x;
    if (total == 0) continue;
    EXPECT_NEAR(normalized_entropy(LabelDistribution::from_counts(occupation(), counts, n)), oracle::entropy(raw, n),
                1e-12);
  }
}

TEST(NormalizedEntropy, AddingNeutralToUnanimousCellRaisesEntropy) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<std::size_t> c(1, 200);
  for (int t = 0; t < 500; ++t) {
    const auto n = c(rng);
    const double before = normalized_entropy(binary(n, 0, 0));
    const double after = normalized_entropy(binary(n, 0, 1));
    EXPECT_EQ(before, 0.0);
    EXPECT_GT(after, before);
  }
}

TEST(CharacteristicScore, Examples) {
  EXPECT_EQ(characteristic_score(binary(7, 0, 0)), 1.0);
  EXPECT_EQ(characteristic_score(binary(0, 0, 5)), 0.5);
  EXPECT_EQ(characteristic_score(binary(2, 2, 0)), 0.5);
  EXPECT_EQ(normalized_entropy(binary(0, 0, 5)), 1.0);
}

TEST(CharacteristicScore, NonBinaryAxisIsWrongAxis) {
  try {
    characteristic_score(LabelDistribution::from_counts(occupation(), {{"social", 3}}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::wrong_axis);
  }
}

TEST(OccupationIntensity, Examples) {
  auto all_social = occupation_intensity(LabelDistribution::from_counts(occupation(), {{"social", 9}}));
  EXPECT_EQ(all_social.mode, "social");
  EXPECT_EQ(all_social.intensity, 1.0);

  std::map<std::string, std::size_t> uniform;
  for (const auto& l : occupation().labels) uniform[l] = 2;
  const auto u = occupation_intensity(LabelDistribution::from_counts(occupation(), uniform));
  EXPECT_NEAR(u.intensity, 1.0 / 6.0, 1e-15);
  EXPECT_TRUE(u.tie());
  EXPECT_EQ(u.mode, "realistic");

  const auto m = occupation_intensity(LabelDistribution::from_counts(occupation(), {{"artistic", 3}, {"social", 1}}, 2));
  EXPECT_EQ(m.mode, "artistic");
  EXPECT_NEAR(m.intensity, (3.0 + 2.0 / 6.0) / 6.0, 1e-15);
  EXPECT_FALSE(m.tie());
}

TEST(Aggregate, ConstantZero) {
  std::vector<ConsistencyRecord> r = {rec("essay", 0), rec("survey", 0), rec("essay", 0, "q")};
  const auto a = aggregate_entropy(r);
  EXPECT_EQ(a.mean, 0.0);
  EXPECT_EQ(a.std_over_dimensions, 0.0);
}

TEST(Aggregate, TwoLevelMean) {
  // essay cells average to 0.2, survey cells to 0.4; the survey dimension
  // has three cells but still weighs as one dimension.
  std::vector<ConsistencyRecord> r = {rec("essay", 0.1), rec("essay", 0.3, "q"), rec("survey", 0.4),
                                      rec("survey", 0.2, "q"), rec("survey", 0.6, "r")};
  const auto a = aggregate_entropy(r);
  EXPECT_NEAR(a.mean, 0.3, 1e-15);
  EXPECT_NEAR(a.std_over_dimensions, 0.1, 1e-15);
  EXPECT_NEAR(a.per_dimension.at("essay"), 0.2, 1e-15);
  EXPECT_NEAR(a.per_dimension.at("survey"), 0.4, 1e-15);
  EXPECT_EQ(a.cells, 5u);
  const std::vector<double> all{0.1, 0.3, 0.4, 0.2, 0.6};
  EXPECT_NEAR(a.std_over_cells, population_std(all), 1e-15);
}

TEST(Aggregate, EmptyIsError) {
  try {
    aggregate_entropy({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_aggregate);
  }
}

TEST(Record, MakeRecordAndJsonRoundTrip) {
  const auto persona = enumerate_personas(PersonaCatalog::standard().category("happiness"))[0];
  auto dist = binary(3, 1, 2);
  dist.add_excluded(1);
  const auto r = make_record("m", persona, happiness(), "essay", dist);
  EXPECT_TRUE(r.intra());
  EXPECT_EQ(r.system_prompt_id(), persona.id);
  EXPECT_EQ(r.sample_size, 6u);
  EXPECT_EQ(r.neutral_count, 2u);
  EXPECT_EQ(r.excluded_count, 1u);
  ASSERT_TRUE(r.characteristic_score);
  EXPECT_NEAR(*r.characteristic_score, 4.0 / 6.0, 1e-15);
  const auto back = nlohmann::json(r).get<ConsistencyRecord>();
  EXPECT_EQ(back.entropy, r.entropy);
  EXPECT_EQ(back.probabilities, r.probabilities);
  EXPECT_EQ(back.characteristic_score, r.characteristic_score);
}
