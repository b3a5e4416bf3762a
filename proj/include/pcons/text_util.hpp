#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pcons {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string replace_all(std::string text, std::string_view from, std::string_view to);
std::vector<std::string> split(std::string_view s, char sep);

/// Position of `needle` in `haystack` where it is not flanked by letters or
/// digits, searching from `from`. Case-sensitive. npos if absent.
std::size_t find_word(std::string_view haystack, std::string_view needle, std::size_t from = 0);

/// 64-bit FNV-1a. Stable across platforms; used for config hashes and
/// scripted-backend prompt keys.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Keeps [A-Za-z0-9._-] and replaces the rest with '_'; appends a short
/// hash when anything changed so distinct names stay distinct.
std::string sanitize_filename(std::string_view name);

/// SplitMix64 finalizer, for deriving independent streams from hashes.
std::uint64_t mix64(std::uint64_t x);

}  // namespace pcons
