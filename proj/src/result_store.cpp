#include "pcons/result_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "pcons/error.hpp"
#include "pcons/text_util.hpp"

namespace fs = std::filesystem;

namespace pcons {

std::string_view to_string(RecordStatus s) {
  switch (s) {
    case RecordStatus::ok: return "ok";
    case RecordStatus::failed: return "failed";
    case RecordStatus::partial: return "partial";
  }
  return "ok";
}

RecordStatus parse_record_status(std::string_view s) {
  if (s == "ok") return RecordStatus::ok;
  if (s == "failed") return RecordStatus::failed;
  if (s == "partial") return RecordStatus::partial;
  throw Error(ErrorCode::store_corruption, "unknown record status '" + std::string(s) + "'");
}

void to_json(nlohmann::json& j, const UnitRecord& r) {
  j = nlohmann::json{{"key", r.key},
                     {"model", r.model},
                     {"persona", r.persona_id},
                     {"persona_category", r.persona_category},
                     {"dimension", r.dimension},
                     {"prompt_id", r.prompt_id},
                     {"run", r.run},
                     {"seed", r.seed},
                     {"status", to_string(r.status)},
                     {"attempts", r.attempts},
                     {"started_at", r.started_at},
                     {"finished_at", r.finished_at},
                     {"config_hash", r.config_hash}};
  if (!r.instrument_id.empty()) j["instrument"] = r.instrument_id;
  if (!r.item_id.empty()) j["item"] = r.item_id;
  if (r.transcript) j["transcript"] = *r.transcript;
  if (r.survey_answer) j["survey_answer"] = *r.survey_answer;
  if (!r.error.empty()) j["error"] = r.error;
}

void from_json(const nlohmann::json& j, UnitRecord& r) {
  r.key = j.at("key").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.persona_id = j.at("persona").get<std::string>();
  r.persona_category = j.value("persona_category", std::string{});
  r.dimension = j.at("dimension").get<std::string>();
  r.prompt_id = j.value("prompt_id", std::string{});
  r.run = j.value("run", std::size_t{0});
  r.seed = j.value("seed", std::uint64_t{0});
  r.instrument_id = j.value("instrument", std::string{});
  r.item_id = j.value("item", std::string{});
  r.status = parse_record_status(j.at("status").get<std::string>());
  r.transcript.reset();
  if (j.contains("transcript")) r.transcript = j.at("transcript").get<Transcript>();
  r.survey_answer.reset();
  if (j.contains("survey_answer")) r.survey_answer = j.at("survey_answer").get<int>();
  r.error = j.value("error", std::string{});
  r.attempts = j.value("attempts", 0);
  r.started_at = j.value("started_at", std::string{});
  r.finished_at = j.value("finished_at", std::string{});
  r.config_hash = j.value("config_hash", std::string{});
}

void to_json(nlohmann::json& j, const JudgmentRecord& r) {
  j = nlohmann::json{{"key", r.key},
                     {"unit_key", r.unit_key},
                     {"axis", r.axis},
                     {"model", r.model},
                     {"persona", r.persona_id},
                     {"dimension", r.dimension},
                     {"judge", r.judge},
                     {"status", to_string(r.status)},
                     {"attempts", r.attempts},
                     {"started_at", r.started_at},
                     {"finished_at", r.finished_at},
                     {"config_hash", r.config_hash}};
  if (r.judgment) {
    j["judgment"] = {{"choice", r.judgment->choice},
                     {"confidence", r.judgment->confidence},
                     {"neutral", r.judgment->neutral},
                     {"raw", r.judgment->raw}};
  }
  if (!r.error.empty()) j["error"] = r.error;
}

void from_json(const nlohmann::json& j, JudgmentRecord& r) {
  r.key = j.at("key").get<std::string>();
  r.unit_key = j.at("unit_key").get<std::string>();
  r.axis = j.at("axis").get<std::string>();
  r.model = j.value("model", std::string{});
  r.persona_id = j.value("persona", std::string{});
  r.dimension = j.value("dimension", std::string{});
  r.judge = j.value("judge", std::string{});
  r.status = parse_record_status(j.at("status").get<std::string>());
  r.judgment.reset();
  if (j.contains("judgment")) {
    const auto& g = j.at("judgment");
    Judgment out;
    out.axis = r.axis;
    out.choice = g.at("choice").get<std::string>();
    out.confidence = g.at("confidence").get<int>();
    out.neutral = g.value("neutral", is_neutral_confidence(out.confidence));
    out.raw = g.value("raw", std::string{});
    out.response_id = r.unit_key;
    r.judgment = std::move(out);
  }
  r.error = j.value("error", std::string{});
  r.attempts = j.value("attempts", 0);
  r.started_at = j.value("started_at", std::string{});
  r.finished_at = j.value("finished_at", std::string{});
  r.config_hash = j.value("config_hash", std::string{});
}

std::string judgment_key(std::string_view unit_key, std::string_view axis) {
  return std::string(unit_key) + "#" + std::string(axis);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

namespace {

constexpr const char* kUnitsStream = "units";
constexpr const char* kJudgmentsStream = "judgments";

template <class Record>
struct KeyState {
  std::optional<Record> ok;
  std::optional<Record> latest;
  std::size_t lines = 0;
  std::size_t ok_lines = 0;
};

std::string shard_name(std::string_view model, std::string_view dimension) {
  return sanitize_filename(model) + "__" + std::string(dimension) + ".jsonl";
}

[[noreturn]] void corrupt(const std::string& msg) { throw Error(ErrorCode::store_corruption, msg); }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

struct ResultStore::Impl {
  fs::path dir;
  std::string hash;
  StoreOpenReport report;

  mutable std::mutex mu;
  std::map<std::string, KeyState<UnitRecord>> units;
  std::map<std::string, KeyState<JudgmentRecord>> judgments;
  std::set<std::string> foreign;

  std::mutex fd_mu;
  std::map<std::string, int> fds;
  std::map<std::string, std::unique_ptr<std::mutex>> shard_mu;
  std::mutex index_mu;
  int index_fd = -1;

  ~Impl() {
    for (auto& [_, fd] : fds) ::close(fd);
    if (index_fd >= 0) ::close(index_fd);
  }

  fs::path store_dir() const { return dir / "store"; }

  template <class Record>
  void absorb(std::map<std::string, KeyState<Record>>& into, Record rec) {
    auto& st = into[rec.key];
    ++st.lines;
    if (rec.config_hash != hash) foreign.insert(rec.config_hash);
    if (rec.status == RecordStatus::ok) {
      ++st.ok_lines;
      if (!st.ok) st.ok = rec;
    }
    st.latest = std::move(rec);
  }

  nlohmann::json index_entry(const char* stream, const std::string& key, const std::string& shard,
                             std::uint64_t offset, RecordStatus status) const {
    return {{"stream", stream}, {"key", key}, {"shard", shard}, {"offset", offset}, {"status", to_string(status)}};
  }

  // Reads every shard of one stream. Returns index entries in file order.
  template <class Record>
  void load_stream(const char* stream, std::map<std::string, KeyState<Record>>& into, std::size_t& line_total,
                   std::string& index_text) {
    const fs::path sdir = store_dir() / stream;
    if (!fs::exists(sdir)) return;
    std::vector<fs::path> shards;
    for (const auto& e : fs::directory_iterator(sdir))
      if (e.is_regular_file() && e.path().extension() == ".jsonl") shards.push_back(e.path());
    std::sort(shards.begin(), shards.end());
    for (const auto& shard : shards) {
      std::string text = read_file(shard);
      if (!text.empty() && text.back() != '\n') {
        const auto cut = text.rfind('\n');
        const std::size_t keep = cut == std::string::npos ? 0 : cut + 1;
        spdlog::warn("truncating torn trailing line in {} ({} bytes)", shard.string(), text.size() - keep);
        fs::resize_file(shard, keep);
        text.resize(keep);
        ++report.repaired_shards;
      }
      const std::string rel = std::string(stream) + "/" + shard.filename().string();
      std::size_t pos = 0;
      std::size_t line_no = 0;
      while (pos < text.size()) {
        const auto end = text.find('\n', pos);
        const std::string_view line(text.data() + pos, end - pos);
        ++line_no;
        if (!trim(line).empty()) {
          Record rec;
          try {
            rec = nlohmann::json::parse(line).get<Record>();
          } catch (const nlohmann::json::exception& e) {
            corrupt(shard.string() + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
          } catch (const Error& e) {
            corrupt(shard.string() + ":" + std::to_string(line_no) + ": " + e.what());
          }
          index_text += index_entry(stream, rec.key, rel, pos, rec.status).dump() + "\n";
          absorb(into, std::move(rec));
          ++line_total;
        }
        pos = end + 1;
      }
    }
  }

  void load() {
    std::string index_text;
    load_stream(kUnitsStream, units, report.unit_lines, index_text);
    load_stream(kJudgmentsStream, judgments, report.judgment_lines, index_text);
    report.foreign_hashes.assign(foreign.begin(), foreign.end());
    const fs::path index = store_dir() / "index.jsonl";
    {
      std::ofstream out(index, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorCode::io, "cannot write " + index.string());
      out << index_text;
    }
    index_fd = ::open(index.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (index_fd < 0) throw Error(ErrorCode::io, "cannot open " + index.string() + ": " + std::strerror(errno));
  }

  static void write_all(int fd, const std::string& data, const std::string& key) {
    std::size_t done = 0;
    while (done < data.size()) {
      const auto n = ::write(fd, data.data() + done, data.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::io, "store write failed for key '" + key + "': " + std::strerror(errno));
      }
      done += static_cast<std::size_t>(n);
    }
  }

  void write_line(const char* stream, const std::string& shard, const std::string& key, RecordStatus status,
                  const std::string& line) {
    const std::string rel = std::string(stream) + "/" + shard;
    int fd = -1;
    std::mutex* smu = nullptr;
    {
      std::lock_guard lock(fd_mu);
      auto it = fds.find(rel);
      if (it == fds.end()) {
        const fs::path path = store_dir() / rel;
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        const int opened = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
        if (opened < 0)
          throw Error(ErrorCode::io,
                      "cannot open shard " + path.string() + " for key '" + key + "': " + std::strerror(errno));
        it = fds.emplace(rel, opened).first;
        shard_mu.emplace(rel, std::make_unique<std::mutex>());
      }
      fd = it->second;
      smu = shard_mu.at(rel).get();
    }
    std::uint64_t offset = 0;
    {
      std::lock_guard lock(*smu);
      const auto end = ::lseek(fd, 0, SEEK_END);
      offset = end < 0 ? 0 : static_cast<std::uint64_t>(end);
      write_all(fd, line + "\n", key);
    }
    std::lock_guard lock(index_mu);
    write_all(index_fd, index_entry(stream, key, rel, offset, status).dump() + "\n", key);
  }
};

ResultStore::ResultStore(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
ResultStore::ResultStore(ResultStore&&) noexcept = default;
ResultStore& ResultStore::operator=(ResultStore&&) noexcept = default;
ResultStore::~ResultStore() = default;

ResultStore ResultStore::open(const fs::path& dir, const std::string& config_hash) {
  auto impl = std::make_unique<Impl>();
  impl->dir = dir;
  impl->hash = config_hash;
  const fs::path sdir = impl->store_dir();
  std::error_code ec;
  fs::create_directories(sdir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create " + sdir.string() + ": " + ec.message());
  const fs::path manifest = sdir / "manifest.json";
  if (fs::exists(manifest)) {
    nlohmann::json m;
    try {
      m = nlohmann::json::parse(read_file(manifest));
    } catch (const nlohmann::json::exception& e) {
      corrupt("malformed manifest " + manifest.string() + ": " + e.what());
    }
    const auto stored = m.value("config_hash", std::string{});
    if (stored != config_hash)
      corrupt("store " + dir.string() + " was produced by config " + stored + ", current config is " + config_hash);
  } else {
    std::ofstream out(manifest);
    if (!out) throw Error(ErrorCode::io, "cannot write " + manifest.string());
    out << nlohmann::json{{"schema_version", kStoreSchemaVersion},
                          {"config_hash", config_hash},
                          {"created_at", utc_timestamp()}}
               .dump(2)
        << "\n";
  }
  impl->load();
  return ResultStore(std::move(impl));
}

ResultStore ResultStore::open_existing(const fs::path& dir) {
  const fs::path manifest = dir / "store" / "manifest.json";
  if (!fs::exists(manifest)) throw Error(ErrorCode::io, "no result store under " + dir.string());
  std::string hash;
  try {
    hash = nlohmann::json::parse(read_file(manifest)).value("config_hash", std::string{});
  } catch (const nlohmann::json::exception& e) {
    corrupt("malformed manifest " + manifest.string() + ": " + e.what());
  }
  return open(dir, hash);
}

const fs::path& ResultStore::dir() const { return impl_->dir; }
const std::string& ResultStore::config_hash() const { return impl_->hash; }
const StoreOpenReport& ResultStore::open_report() const { return impl_->report; }

bool ResultStore::unit_ok(const std::string& key) const {
  std::lock_guard lock(impl_->mu);
  const auto it = impl_->units.find(key);
  return it != impl_->units.end() && it->second.ok.has_value();
}

std::optional<UnitRecord> ResultStore::unit(const std::string& key) const {
  std::lock_guard lock(impl_->mu);
  const auto it = impl_->units.find(key);
  if (it == impl_->units.end()) return std::nullopt;
  return it->second.ok ? it->second.ok : it->second.latest;
}

std::vector<UnitRecord> ResultStore::units() const {
  std::lock_guard lock(impl_->mu);
  std::vector<UnitRecord> out;
  out.reserve(impl_->units.size());
  for (const auto& [_, st] : impl_->units) out.push_back(st.ok ? *st.ok : *st.latest);
  return out;
}

bool ResultStore::judgment_ok(const std::string& key) const {
  std::lock_guard lock(impl_->mu);
  const auto it = impl_->judgments.find(key);
  return it != impl_->judgments.end() && it->second.ok.has_value();
}

std::optional<JudgmentRecord> ResultStore::judgment(const std::string& key) const {
  std::lock_guard lock(impl_->mu);
  const auto it = impl_->judgments.find(key);
  if (it == impl_->judgments.end()) return std::nullopt;
  return it->second.ok ? it->second.ok : it->second.latest;
}

std::vector<JudgmentRecord> ResultStore::judgments() const {
  std::lock_guard lock(impl_->mu);
  std::vector<JudgmentRecord> out;
  out.reserve(impl_->judgments.size());
  for (const auto& [_, st] : impl_->judgments) out.push_back(st.ok ? *st.ok : *st.latest);
  return out;
}

void ResultStore::append(const UnitRecord& record) {
  if (record.key.empty()) throw Error(ErrorCode::precondition, "unit record without key");
  if (unit_ok(record.key))
    throw Error(ErrorCode::precondition, "unit '" + record.key + "' already has an ok record");
  UnitRecord rec = record;
  rec.config_hash = impl_->hash;
  const nlohmann::json j = rec;
  impl_->write_line(kUnitsStream, shard_name(rec.model, rec.dimension), rec.key, rec.status, j.dump());
  std::lock_guard lock(impl_->mu);
  impl_->absorb(impl_->units, std::move(rec));
}

void ResultStore::append(const JudgmentRecord& record) {
  if (record.key.empty()) throw Error(ErrorCode::precondition, "judgment record without key");
  if (judgment_ok(record.key))
    throw Error(ErrorCode::precondition, "judgment '" + record.key + "' already has an ok record");
  JudgmentRecord rec = record;
  rec.config_hash = impl_->hash;
  const nlohmann::json j = rec;
  impl_->write_line(kJudgmentsStream, shard_name(rec.model, rec.dimension), rec.key, rec.status, j.dump());
  std::lock_guard lock(impl_->mu);
  impl_->absorb(impl_->judgments, std::move(rec));
}

std::vector<std::string> ResultStore::duplicate_ok_keys() const {
  std::lock_guard lock(impl_->mu);
  std::vector<std::string> out;
  for (const auto& [k, st] : impl_->units)
    if (st.ok_lines > 1) out.push_back(k);
  for (const auto& [k, st] : impl_->judgments)
    if (st.ok_lines > 1) out.push_back(k);
  return out;
}

std::size_t ResultStore::line_count(const std::string& key) const {
  std::lock_guard lock(impl_->mu);
  if (const auto it = impl_->units.find(key); it != impl_->units.end()) return it->second.lines;
  if (const auto it = impl_->judgments.find(key); it != impl_->judgments.end()) return it->second.lines;
  return 0;
}

void ResultStore::require_single_config() const {
  std::lock_guard lock(impl_->mu);
  if (impl_->foreign.empty()) return;
  std::string list;
  for (const auto& h : impl_->foreign) list += (list.empty() ? "" : ", ") + (h.empty() ? "<none>" : h);
  corrupt("store " + impl_->dir.string() + " mixes records from configs " + list + " with current config " +
          impl_->hash);
}

}  // namespace pcons
