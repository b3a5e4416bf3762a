#include <fstream>

#include <gtest/gtest.h>

#include "pcons/error.hpp"
#include "pcons/parallel.hpp"
#include "pcons/result_store.hpp"
#include "support/fixtures.hpp"

using namespace pcons;
namespace fs = std::filesystem;

namespace {

UnitRecord unit(std::string key, RecordStatus status = RecordStatus::ok, std::string model = "m/1") {
  UnitRecord r;
  r.key = std::move(key);
  r.model = std::move(model);
  r.persona_id = "happiness/happy";
  r.persona_category = "happiness";
  r.dimension = "essay";
  r.prompt_id = "essay-day";
  r.status = status;
  if (status == RecordStatus::ok) {
    Transcript t;
    t.dimension = DimensionKind::essay;
    t.system_prompt = "You are a character who is happy";
    t.messages = {{TranscriptRole::user, "q"}, {TranscriptRole::persona_llm, "a"}};
    t.persona_reply_indices = {1};
    r.transcript = t;
  } else {
    r.error = "transport: down";
  }
  return r;
}

JudgmentRecord judgment(const std::string& unit_key, const std::string& axis) {
  JudgmentRecord r;
  r.unit_key = unit_key;
  r.key = judgment_key(unit_key, axis);
  r.axis = axis;
  r.model = "m/1";
  r.dimension = "essay";
  r.judge = "j";
  Judgment j;
  j.axis = axis;
  j.choice = "happy";
  j.confidence = 4;
  r.judgment = j;
  return r;
}

fs::path only_shard(const fs::path& dir, const char* stream) {
  for (const auto& e : fs::directory_iterator(dir / "store" / stream)) return e.path();
  return {};
}

void append_raw(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::app);
  out << text;
}

}  // namespace

TEST(ResultStore, AppendAndReopen) {
  fixture::TempDir tmp;
  {
    auto store = ResultStore::open(tmp.path(), "h1");
    store.append(unit("k1", RecordStatus::failed));
    store.append(unit("k1"));
    store.append(unit("k2", RecordStatus::failed));
    store.append(judgment("k1", "happiness"));
    EXPECT_TRUE(store.unit_ok("k1"));
    EXPECT_FALSE(store.unit_ok("k2"));
  }
  auto store = ResultStore::open(tmp.path(), "h1");
  EXPECT_EQ(store.open_report().unit_lines, 3u);
  EXPECT_EQ(store.open_report().judgment_lines, 1u);
  EXPECT_TRUE(store.unit_ok("k1"));
  EXPECT_EQ(store.unit("k2")->status, RecordStatus::failed);
  EXPECT_EQ(store.line_count("k1"), 2u);
  EXPECT_EQ(store.units().size(), 2u);
  EXPECT_TRUE(store.judgment_ok("k1#happiness"));
  EXPECT_EQ(store.judgment("k1#happiness")->judgment->choice, "happy");
  EXPECT_TRUE(store.duplicate_ok_keys().empty());
  EXPECT_EQ(store.unit("k1")->config_hash, "h1");
  EXPECT_TRUE(fs::exists(tmp.path() / "store" / "index.jsonl"));
}

TEST(ResultStore, SecondOkAppendRefused) {
  fixture::TempDir tmp;
  auto store = ResultStore::open(tmp.path(), "h");
  store.append(unit("k"));
  try {
    store.append(unit("k"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::precondition);
  }
}

TEST(ResultStore, TornTrailingLineIsTruncated) {
  fixture::TempDir tmp;
  {
    auto store = ResultStore::open(tmp.path(), "h");
    store.append(unit("k1"));
    store.append(unit("k2"));
  }
  const auto shard = only_shard(tmp.path(), "units");
  const auto size = fs::file_size(shard);
  append_raw(shard, R"({"key":"k3","model":"m/1","sta)");
  auto store = ResultStore::open(tmp.path(), "h");
  EXPECT_EQ(store.open_report().repaired_shards, 1u);
  EXPECT_EQ(store.open_report().unit_lines, 2u);
  EXPECT_EQ(fs::file_size(shard), size);
  store.append(unit("k3"));
  EXPECT_TRUE(store.unit_ok("k3"));
}

TEST(ResultStore, MalformedMiddleLineIsCorruption) {
  fixture::TempDir tmp;
  {
    auto store = ResultStore::open(tmp.path(), "h");
    store.append(unit("k1"));
  }
  const auto shard = only_shard(tmp.path(), "units");
  auto later = unit("k9");
  later.config_hash = "h";
  append_raw(shard, "{not json}\n" + nlohmann::json(later).dump() + "\n");
  try {
    auto store = ResultStore::open(tmp.path(), "h");
    FAIL() << "a malformed complete line must not be repaired silently";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::store_corruption);
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}

TEST(ResultStore, ManifestMismatchIsCorruption) {
  fixture::TempDir tmp;
  { ResultStore::open(tmp.path(), "h1"); }
  try {
    ResultStore::open(tmp.path(), "h2");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::store_corruption);
  }
  EXPECT_EQ(ResultStore::open_existing(tmp.path()).config_hash(), "h1");
}

TEST(ResultStore, ForeignRecordsAreDetected) {
  fixture::TempDir tmp;
  {
    auto store = ResultStore::open(tmp.path(), "h");
    store.append(unit("k1"));
  }
  auto rec = unit("k2");
  rec.config_hash = "other";
  append_raw(only_shard(tmp.path(), "units"), nlohmann::json(rec).dump() + "\n");
  auto store = ResultStore::open(tmp.path(), "h");
  EXPECT_EQ(store.open_report().foreign_hashes, (std::vector<std::string>{"other"}));
  EXPECT_THROW(store.require_single_config(), Error);
}

TEST(ResultStore, DuplicateOkWrittenExternallyIsReported) {
  fixture::TempDir tmp;
  {
    auto store = ResultStore::open(tmp.path(), "h");
    store.append(unit("k1"));
  }
  auto rec = unit("k1");
  rec.config_hash = "h";
  append_raw(only_shard(tmp.path(), "units"), nlohmann::json(rec).dump() + "\n");
  auto store = ResultStore::open(tmp.path(), "h");
  EXPECT_EQ(store.duplicate_ok_keys(), (std::vector<std::string>{"k1"}));
}

TEST(ResultStore, ShardsPerModelAndDimension) {
  fixture::TempDir tmp;
  auto store = ResultStore::open(tmp.path(), "h");
  store.append(unit("a", RecordStatus::ok, "org/model:1"));
  store.append(unit("b", RecordStatus::ok, "other"));
  std::size_t shards = 0;
  for (const auto& e : fs::directory_iterator(tmp.path() / "store" / "units")) {
    ++shards;
    const auto name = e.path().filename().string();
    EXPECT_EQ(name.find('/'), std::string::npos);
    EXPECT_EQ(name.find(':'), std::string::npos);
  }
  EXPECT_EQ(shards, 2u);
}

TEST(ResultStore, ConcurrentAppendsKeepEveryLine) {
  fixture::TempDir tmp;
  {
    auto store = ResultStore::open(tmp.path(), "h");
    parallel_for(400, 8, [&](std::size_t i) { store.append(unit("k" + std::to_string(i))); });
  }
  auto store = ResultStore::open(tmp.path(), "h");
  EXPECT_EQ(store.open_report().unit_lines, 400u);
  EXPECT_EQ(store.open_report().repaired_shards, 0u);
  EXPECT_TRUE(store.duplicate_ok_keys().empty());
}

TEST(ResultStore, RecordJsonRoundTrip) {
  auto r = unit("k");
  r.survey_answer = 5;
  r.instrument_id = "happiness-short";
  r.item_id = "h1";
  const auto back = nlohmann::json(r).get<UnitRecord>();
  EXPECT_EQ(back.key, r.key);
  EXPECT_EQ(back.survey_answer, 5);
  EXPECT_EQ(back.item_id, "h1");
  EXPECT_EQ(back.transcript->persona_text(), "a");
  EXPECT_THROW(parse_record_status("done"), Error);
}
