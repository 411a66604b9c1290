#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace changelens {

std::string_view trim(std::string_view s);
bool is_blank(std::string_view s);
std::string to_lower(std::string_view s);

// Whitespace tokenization (log lines).
std::vector<std::string> split_whitespace(std::string_view s);

// Lowercased alphanumeric word tokens (embeddings, similarity).
std::vector<std::string> word_tokens(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

bool contains_digit(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// 64-bit FNV-1a; stable across platforms.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Four significant digits, as used in every rendered prompt.
std::string format_sig4(double v);

// Lowercase, trim, strip punctuation, collapse whitespace.
std::string normalize_answer(std::string_view s);

std::string iso8601_utc(std::int64_t epoch_seconds);

}  // namespace changelens
