#include <random>

#include <gtest/gtest.h>

#include "pcons/error.hpp"
#include "pcons/scoring.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace pcons;

namespace {

const PersonaCatalog& catalog() { return PersonaCatalog::standard(); }

SurveyInstrument instrument(const std::string& name) {
  return SurveyInstrument::load(fixture::data_dir() / "instruments" / (name + ".json"));
}

oracle::Key key_of(const SurveyInstrument& inst) {
  oracle::Key k;
  k.lo = inst.scale.min;
  k.hi = inst.scale.max;
  for (const auto& it : inst.items) k.items.push_back({it.id, it.axis, it.target, it.reverse_scored, it.weight});
  for (const auto& [axis, t] : inst.thresholds) {
    if (t.midpoint) k.midpoints[axis] = *t.midpoint;
    if (!t.high_label.empty()) k.high_label[axis] = t.high_label;
  }
  return k;
}

SurveyAnswerSheet uniform_sheet(const SurveyInstrument& inst, int value) {
  SurveyAnswerSheet s;
  s.instrument_id = inst.id;
  for (const auto& it : inst.items) s.answers[it.id] = value;
  return s;
}

std::optional<std::string> label_for(const std::vector<AxisLabelResult>& results, const std::string& axis) {
  for (const auto& r : results)
    if (r.axis == axis) return r.label;
  ADD_FAILURE() << "no result for " << axis;
  return std::nullopt;
}

Transcript single(DimensionKind dim, std::string prompt, std::string reply) {
  Transcript t;
  t.dimension = dim;
  t.system_prompt = "You are a character who is happy";
  t.messages = {{TranscriptRole::user, std::move(prompt)}, {TranscriptRole::persona_llm, std::move(reply)}};
  t.persona_reply_indices = {1};
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Likert parsing

TEST(ParseLikert, InRangeInteger) {
  LikertScale s{1, 7, {}};
  EXPECT_EQ(parse_likert("I'd say 6 out of 7", s), 6);
  EXPECT_EQ(parse_likert("7", s), 7);
  EXPECT_EQ(parse_likert("Out of 10 I pick 3", s), 3);
}

TEST(ParseLikert, AnchorPhrase) {
  const auto inst = instrument("happiness");
  EXPECT_EQ(parse_likert("I strongly agree with that.", inst.scale), inst.scale.max);
  EXPECT_EQ(parse_likert("Somewhat disagree, honestly", inst.scale), 3);
}

TEST(ParseLikert, NothingUsable) {
  try {
    parse_likert("maybe", LikertScale{1, 5, {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unparseable_answer);
  }
}

// ---------------------------------------------------------------------------
// Survey scoring

TEST(ScoreSurvey, AllMaxIsHappy) {
  const auto inst = instrument("happiness");
  const auto r = score_survey(inst, catalog().category("happiness"), uniform_sheet(inst, inst.scale.max));
  EXPECT_EQ(label_for(r, "happiness"), "happy");
}

TEST(ScoreSurvey, AllMinWithReversalIsSad) {
  const auto inst = instrument("happiness");
  const auto sheet = uniform_sheet(inst, inst.scale.min);
  const auto r = score_survey(inst, catalog().category("happiness"), sheet);
  const auto expected = oracle::rescore(key_of(inst), sheet.answers, {{"happiness", {"happy", "sad"}}});
  EXPECT_EQ(label_for(r, "happiness"), expected.at("happiness"));
  EXPECT_EQ(label_for(r, "happiness"), "sad");
  // three items at 1 plus the reversed h4 mapped 1 -> 7
  EXPECT_DOUBLE_EQ(r.front().totals.at("total"), 10.0);
}

TEST(ScoreSurvey, OccupationArgmax) {
  const auto inst = instrument("occupation");
  auto sheet = uniform_sheet(inst, 2);
  for (const auto& it : inst.items)
    if (it.target == "artistic") sheet.answers[it.id] = 5;
  EXPECT_EQ(label_for(score_survey(inst, catalog().category("occupation"), sheet), "occupation"), "artistic");
}

TEST(ScoreSurvey, IncompleteSheet) {
  const auto inst = instrument("happiness");
  auto sheet = uniform_sheet(inst, 4);
  sheet.answers.erase("h2");
  EXPECT_FALSE(sheet.complete_for(inst));
  try {
    score_survey(inst, catalog().category("happiness"), sheet);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::incomplete_survey);
  }
}

TEST(ScoreSurvey, RandomSheetsMatchBruteForceRescorer) {
  std::mt19937 rng(20240611);
  for (const char* name : {"happiness", "occupation", "personality", "political"}) {
    const auto inst = instrument(name);
    const auto& cat = catalog().category(inst.category_id);
    std::map<std::string, std::vector<std::string>> axis_labels;
    for (const auto& a : cat.axes) axis_labels[a.id] = a.labels;
    std::uniform_int_distribution<int> pick(inst.scale.min, inst.scale.max);
    for (int trial = 0; trial < 1000; ++trial) {
      SurveyAnswerSheet sheet;
      sheet.instrument_id = inst.id;
      for (const auto& it : inst.items) sheet.answers[it.id] = pick(rng);
      const auto got = score_survey(inst, cat, sheet);
      const auto want = oracle::rescore(key_of(inst), sheet.answers, axis_labels);
      ASSERT_EQ(got.size(), want.size()) << name;
      for (const auto& r : got) ASSERT_EQ(r.label, want.at(r.axis)) << name << " trial " << trial << " axis " << r.axis;
    }
  }
}

TEST(ScoreSurvey, MidpointSheetIsNeutral) {
  const auto inst = instrument("personality");
  const int mid = (inst.scale.min + inst.scale.max) / 2;
  const auto r = score_survey(inst, catalog().category("personality"), uniform_sheet(inst, mid));
  for (const auto& x : r) EXPECT_TRUE(x.neutral()) << x.axis;
}

// ---------------------------------------------------------------------------
// Judge prompts and parsing

TEST(JudgePrompt, SinglechatListsHappinessOptions) {
  const auto t = single(DimensionKind::singlechat, "What music do you like?", "Upbeat pop!");
  const auto p = build_judge_prompt(DimensionKind::singlechat, t, catalog().axis("happiness"));
  EXPECT_NE(p.user.find("happy or sad"), std::string::npos);
  EXPECT_NE(p.user.find("Upbeat pop!"), std::string::npos);
  EXPECT_NE(p.user.find("What music do you like?"), std::string::npos);
}

TEST(JudgePrompt, OccupationListsAllSixClasses) {
  const auto t = single(DimensionKind::essay, "Write an essay", "I fly planes.");
  const auto& axis = catalog().axis("occupation");
  const auto p = build_judge_prompt(DimensionKind::essay, t, axis);
  EXPECT_NE(p.user.find("a realistic occupation (i.e. pilot)"), std::string::npos);
  for (const auto& label : axis.labels) EXPECT_NE(p.user.find(axis.judge_option(label)), std::string::npos) << label;
}

TEST(JudgePrompt, MultichatShowsConversation) {
  Transcript t;
  t.dimension = DimensionKind::multichat;
  t.system_prompt = "You are a character who is sad";
  t.messages = {{TranscriptRole::user, "How are you?"},
                {TranscriptRole::persona_llm, "FIRST-TURN"},
                {TranscriptRole::interlocutor, "INTERLOCUTOR-TURN"},
                {TranscriptRole::persona_llm, "SECOND-TURN"}};
  t.persona_reply_indices = {1, 3};
  const auto p = build_judge_prompt(DimensionKind::multichat, t, catalog().axis("happiness"));
  const auto a = p.user.find("FIRST-TURN"), b = p.user.find("INTERLOCUTOR-TURN"), c = p.user.find("SECOND-TURN");
  ASSERT_NE(a, std::string::npos);
  ASSERT_NE(b, std::string::npos);
  ASSERT_NE(c, std::string::npos);
  EXPECT_LT(a, b);
  EXPECT_LT(b, c);
  EXPECT_NE(p.user.find("conversation"), std::string::npos);
}

TEST(JudgePrompt, FlipOrderReversesOptions) {
  EXPECT_EQ(judge_option_text(catalog().axis("happiness"), true), "sad or happy");
}

TEST(ParseJudgment, CanonicalForms) {
  const auto& axis = catalog().axis("happiness");
  auto j = parse_judgment("{choice: happy, confidence: 4}", axis);
  EXPECT_EQ(j.choice, "happy");
  EXPECT_EQ(j.confidence, 4);
  EXPECT_FALSE(j.neutral);
  j = parse_judgment("{choice: sad, confidence: 2}", axis);
  EXPECT_EQ(j.choice, "sad");
  EXPECT_EQ(j.confidence, 2);
  EXPECT_TRUE(j.neutral);
}

TEST(ParseJudgment, MissingChoiceIsError) {
  try {
    parse_judgment("{confidence: 3}", catalog().axis("happiness"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::judge_parse);
  }
}

TEST(ParseJudgment, WrappedInProseAndJson) {
  const auto& axis = catalog().axis("economic");
  EXPECT_EQ(parse_judgment("Sure. {choice: economically right, confidence: 3} Hope that helps", axis).choice, "right");
  EXPECT_EQ(parse_judgment(R"({"choice": "left", "confidence": 4})", axis).choice, "left");
  EXPECT_THROW(parse_judgment("{choice: happy, confidence: 4}", axis), Error);
  EXPECT_THROW(parse_judgment("{choice: left, confidence: 9}", axis), Error);
}

TEST(ParseJudgment, RoundTripEveryAxisLabelConfidence) {
  std::size_t n = 0;
  for (const auto* axis : catalog().all_axes())
    for (const auto& label : axis->labels)
      for (int c = kMinConfidence; c <= kMaxConfidence; ++c) {
        const auto j = parse_judgment(format_judgment(*axis, label, c), *axis);
        EXPECT_EQ(j.choice, label);
        EXPECT_EQ(j.confidence, c);
        EXPECT_EQ(j.neutral, c <= 2);
        ++n;
      }
  EXPECT_EQ(n, (2u * 8u + 6u) * 4u);
}

// ---------------------------------------------------------------------------
// judge_all

TEST(JudgeAll, OneTranscriptNineAxes) {
  Gateway gw;
  const auto& cat = catalog();
  auto judge = fixture::marker_judge(cat);
  auto ep = scripted_backend("judge", judge);
  gw.add_endpoint(ep.endpoint, ep.backend);
  const auto outcomes = judge_all(gw, "judge", {{"r1", single(DimensionKind::essay, "Essay", "[[happy]] text")}},
                                  cat.all_axes(), {.subject_endpoints = {"subject"}});
  ASSERT_EQ(outcomes.size(), 9u);
  EXPECT_EQ(outcomes[0].axis, "happiness");
  ASSERT_TRUE(outcomes[0].judgment);
  EXPECT_EQ(outcomes[0].judgment->choice, "happy");
  EXPECT_FALSE(outcomes[0].judgment->neutral);
  for (std::size_t i = 1; i < outcomes.size(); ++i) {
    ASSERT_TRUE(outcomes[i].judgment) << outcomes[i].error;
    EXPECT_TRUE(outcomes[i].judgment->neutral);
  }
}

TEST(JudgeAll, FixedJudgeGivesIdenticalHappinessJudgments) {
  Gateway gw;
  gw.add_endpoint(scripted_backend("judge", nlohmann::json{{"default", "{choice: happy, confidence: 4}"}}).endpoint);
  std::vector<JudgeTarget> targets;
  for (int i = 0; i < 6; ++i) targets.push_back({"r" + std::to_string(i), single(DimensionKind::essay, "E", "x")});
  const auto out = judge_all(gw, "judge", targets, {&catalog().axis("happiness")}, {.subject_endpoints = {"s"}});
  ASSERT_EQ(out.size(), 6u);
  for (const auto& o : out) {
    ASSERT_TRUE(o.judgment);
    EXPECT_EQ(o.judgment->choice, "happy");
    EXPECT_EQ(o.judgment->confidence, 4);
  }
}

TEST(JudgeAll, UnparseableAfterRetriesIsUnjudged) {
  Gateway gw;
  gw.add_endpoint(scripted_backend("judge", nlohmann::json{{"default", "I cannot say."}}).endpoint);
  const auto out = judge_all(gw, "judge", {{"r", single(DimensionKind::essay, "E", "x")}},
                             {&catalog().axis("happiness")}, {.subject_endpoints = {"s"}, .parse_retries = 2});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_FALSE(out[0].judgment);
  EXPECT_EQ(out[0].attempts, 3);
  EXPECT_FALSE(out[0].error.empty());
}

TEST(JudgeAll, SelfJudgingNeedsOverride) {
  EXPECT_THROW(check_judge_guard("m", {"m", "n"}, false), Error);
  EXPECT_NO_THROW(check_judge_guard("m", {"m", "n"}, true));
  EXPECT_NO_THROW(check_judge_guard("j", {"m", "n"}, false));
}

// ---------------------------------------------------------------------------
// Kappa

TEST(Kappa, PerfectAgreement) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int i = 0; i < 10; ++i) pairs.emplace_back(i % 3 ? "happy" : "sad", i % 3 ? "happy" : "sad");
  const auto k = cohen_kappa(pairs);
  EXPECT_DOUBLE_EQ(k.kappa, 1.0);
  EXPECT_DOUBLE_EQ(oracle::kappa(pairs), 1.0);
}

TEST(Kappa, BalancedIndependenceIsZero) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const char* a : {"happy", "sad"})
    for (const char* b : {"happy", "sad"})
      for (int r = 0; r < 5; ++r) pairs.emplace_back(a, b);
  const auto k = cohen_kappa(pairs);
  EXPECT_NEAR(k.kappa, oracle::kappa(pairs), 1e-12);
  EXPECT_NEAR(k.kappa, 0.0, 1e-12);
}

TEST(Kappa, RandomTablesMatchOracle) {
  std::mt19937 rng(5);
  const std::vector<std::string> labels = {"a", "b", "c"};
  std::uniform_int_distribution<int> pick(0, 2);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (int i = 0; i < 30; ++i) pairs.emplace_back(labels[pick(rng)], labels[pick(rng)]);
    const auto k = cohen_kappa(pairs);
    if (k.degenerate) continue;
    EXPECT_NEAR(k.kappa, oracle::kappa(pairs), 1e-12);
  }
}

TEST(Kappa, SingleLabelEverywhereIsDegenerate) {
  const auto k = cohen_kappa({{"happy", "happy"}, {"happy", "happy"}});
  EXPECT_TRUE(k.degenerate);
}
