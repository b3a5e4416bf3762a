#include "pcons/pipeline.hpp"

#include <fstream>

#include "pcons/error.hpp"

namespace fs = std::filesystem;

namespace pcons {

namespace {

fs::path meta_path(const fs::path& file) { return file.string() + ".meta.json"; }

template <class T>
void write_jsonl(const fs::path& file, const std::string& config_hash, const std::vector<T>& rows) {
  std::error_code ec;
  fs::create_directories(file.parent_path(), ec);
  if (ec) throw Error(ErrorCode::io, "cannot create " + file.parent_path().string() + ": " + ec.message());
  {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + file.string());
    for (const auto& r : rows) out << nlohmann::json(r).dump() << "\n";
  }
  std::ofstream meta(meta_path(file), std::ios::trunc);
  if (!meta) throw Error(ErrorCode::io, "cannot write " + meta_path(file).string());
  meta << nlohmann::json{{"config_hash", config_hash}, {"count", rows.size()}}.dump(2) << "\n";
}

template <class T>
std::vector<T> read_jsonl(const fs::path& file, const std::string& config_hash, const char* producer) {
  std::ifstream meta(meta_path(file));
  if (!meta || !fs::exists(file))
    throw Error(ErrorCode::precondition, file.string() + " not found; run '" + producer + "' first");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::store_corruption, "malformed " + meta_path(file).string() + ": " + e.what());
  }
  const auto stored = m.value("config_hash", std::string{});
  if (stored != config_hash)
    throw Error(ErrorCode::store_corruption, file.string() + " was produced by config " + stored +
                                                 ", current config is " + config_hash);
  std::ifstream in(file, std::ios::binary);
  std::vector<T> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      rows.push_back(nlohmann::json::parse(line).get<T>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::store_corruption, file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (rows.size() != m.value("count", rows.size()))
    throw Error(ErrorCode::store_corruption, file.string() + " is truncated");
  return rows;
}

}  // namespace

void write_labels(const OutputLayout& layout, const std::string& config_hash, const std::vector<LabelRecord>& labels) {
  write_jsonl(layout.labels(), config_hash, labels);
}

std::vector<LabelRecord> read_labels(const OutputLayout& layout, const std::string& config_hash) {
  return read_jsonl<LabelRecord>(layout.labels(), config_hash, "score");
}

void write_analysis(const OutputLayout& layout, const std::string& config_hash,
                    const std::vector<ConsistencyRecord>& records) {
  write_jsonl(layout.records(), config_hash, records);
  std::ofstream out(layout.aggregates(), std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + layout.aggregates().string());
  out << nlohmann::json{{"config_hash", config_hash}, {"cells", aggregate_cells(records)}}.dump(2) << "\n";
}

std::vector<ConsistencyRecord> read_records(const OutputLayout& layout, const std::string& config_hash) {
  return read_jsonl<ConsistencyRecord>(layout.records(), config_hash, "analyze");
}

}  // namespace pcons
