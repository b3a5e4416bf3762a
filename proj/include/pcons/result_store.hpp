#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pcons/scoring.hpp"
#include "pcons/task_dimensions.hpp"

namespace pcons {

inline constexpr int kStoreSchemaVersion = 1;

enum class RecordStatus { ok, failed, partial };
std::string_view to_string(RecordStatus s);
RecordStatus parse_record_status(std::string_view s);

/// Outcome of one task unit. Survey units also carry the parsed answer.
struct UnitRecord {
  std::string key;
  std::string model;
  std::string persona_id;
  std::string persona_category;
  std::string dimension;
  std::string prompt_id;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::string instrument_id;
  std::string item_id;
  RecordStatus status = RecordStatus::ok;
  std::optional<Transcript> transcript;
  std::optional<int> survey_answer;
  std::string error;
  int attempts = 0;
  std::string started_at;
  std::string finished_at;
  std::string config_hash;
};

void to_json(nlohmann::json& j, const UnitRecord& r);
void from_json(const nlohmann::json& j, UnitRecord& r);

/// One judge label for one (unit, axis).
struct JudgmentRecord {
  std::string key;  // unit key + "#" + axis
  std::string unit_key;
  std::string axis;
  std::string model;
  std::string persona_id;
  std::string dimension;
  std::string judge;
  RecordStatus status = RecordStatus::ok;
  std::optional<Judgment> judgment;
  std::string error;
  int attempts = 0;
  std::string started_at;
  std::string finished_at;
  std::string config_hash;
};

void to_json(nlohmann::json& j, const JudgmentRecord& r);
void from_json(const nlohmann::json& j, JudgmentRecord& r);

std::string judgment_key(std::string_view unit_key, std::string_view axis);
std::string utc_timestamp();

struct StoreOpenReport {
  std::size_t unit_lines = 0;
  std::size_t judgment_lines = 0;
  std::size_t repaired_shards = 0;  // torn trailing lines truncated
  std::vector<std::string> foreign_hashes;  // config hashes other than the manifest's
};

/// Append-only JSONL store sharded per (model, dimension). The shards are
/// authoritative; index.jsonl (key -> shard offset) is rebuilt on open and
/// extended on every append. A key may gather failed attempts but at most
/// one ok record.
class ResultStore {
 public:
  /// Opens or creates the store under `dir`. Throws store_corruption when the
  /// manifest was written for another config hash or a shard line is
  /// malformed; a torn final line is truncated with a warning.
  static ResultStore open(const std::filesystem::path& dir, const std::string& config_hash);
  /// Opens an existing store without binding a config (inspection only).
  static ResultStore open_existing(const std::filesystem::path& dir);

  ResultStore(ResultStore&&) noexcept;
  ResultStore& operator=(ResultStore&&) noexcept;
  ~ResultStore();

  const std::filesystem::path& dir() const;
  const std::string& config_hash() const;
  const StoreOpenReport& open_report() const;

  bool unit_ok(const std::string& key) const;
  /// The ok record when present, else the latest attempt.
  std::optional<UnitRecord> unit(const std::string& key) const;
  std::vector<UnitRecord> units() const;  // one per key, key order

  bool judgment_ok(const std::string& key) const;
  std::optional<JudgmentRecord> judgment(const std::string& key) const;
  std::vector<JudgmentRecord> judgments() const;

  /// Thread-safe. Throws precondition when the key already has an ok record
  /// and io when the write fails.
  void append(const UnitRecord& record);
  void append(const JudgmentRecord& record);

  /// Keys holding more than one ok record (corruption by external writers).
  std::vector<std::string> duplicate_ok_keys() const;
  /// Total lines per key, for audits.
  std::size_t line_count(const std::string& key) const;

  /// Throws store_corruption when any record carries a different config hash.
  void require_single_config() const;

 private:
  struct Impl;
  explicit ResultStore(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

}  // namespace pcons
