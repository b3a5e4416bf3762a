#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "pcons/model_gateway.hpp"
#include "pcons/persona_catalog.hpp"
#include "pcons/scoring.hpp"

namespace fixture {

namespace fs = std::filesystem;

inline fs::path data_dir() { return fs::path(PCONS_DATA_DIR); }

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<unsigned> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = fs::temp_directory_path() /
            ("pcons-test-" + std::to_string(stamp) + "-" + std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

/// Subject replies carry "[[label]]" markers; this judge picks the marked
/// label with confidence 4 and answers neutrally when no label is marked.
inline pcons::ScriptedBackend::Fn marker_judge(const pcons::PersonaCatalog& catalog) {
  return [&catalog](const std::vector<pcons::ChatMessage>& messages, std::uint64_t) {
    const std::string& user = messages.back().content;
    const pcons::CharacteristicAxis* asked = nullptr;
    std::size_t best = 0;
    for (const auto* axis : catalog.all_axes()) {
      const auto options = pcons::judge_option_text(*axis);
      if (user.find(options) != std::string::npos && options.size() > best) {
        asked = axis;
        best = options.size();
      }
    }
    if (!asked) return std::string("{choice:none,confidence:1}");
    for (const auto& label : asked->labels)
      if (user.find("[[" + label + "]]") != std::string::npos)
        return pcons::format_judgment(*asked, label, 4);
    return pcons::format_judgment(*asked, asked->labels.front(), 1);
  };
}

/// Minimal valid config: one scripted subject, a scripted judge and an
/// interlocutor, resolved against the data directory.
inline nlohmann::json base_config() {
  const auto data = data_dir();
  return {
      {"schema_version", 1},
      {"subjects",
       {{{"name", "mock-a"},
         {"kind", "scripted"},
         {"script", {{"rules", {{{"match", {{"user", "scale from"}}}, {"reply", "3"}}}},
                     {"default", "A plain answer [[happy]]."}}}}}},
      {"judge", {{"name", "mock-judge"}, {"kind", "scripted"}, {"script", {{"default", "{choice:x,confidence:1}"}}}}},
      {"interlocutor", {{"name", "mock-talker"}, {"kind", "scripted"}, {"script", {{"default", "Tell me more."}}}}},
      {"persona_categories", {"happiness"}},
      {"dimensions", {"singlechat"}},
      {"runs", 5},
      {"prompts", (data / "prompts.json").string()},
      {"instruments",
       {(data / "instruments/happiness.json").string(), (data / "instruments/occupation.json").string(),
        (data / "instruments/personality.json").string(), (data / "instruments/political.json").string()}},
      {"seed", 11},
  };
}

}  // namespace fixture
