#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "avs/core.hpp"

namespace avs::llm {

struct ParsedAction {
  ActionKind kind = ActionKind::exploit;
  std::string reasoning;
  std::string raw;
};

struct ParsedVerdict {
  bool matched = false;
  std::optional<std::string> reasoning;
  std::string raw;
};

struct ParsedReformulation {
  std::string text;
  std::optional<std::string> reasoning;
  std::string raw;
};

inline constexpr std::size_t kDefaultWordCap = 30;

/// First balanced `{...}` in `raw` that parses as a JSON object.
std::optional<nlohmann::json> first_json_object(std::string_view raw);

// All parsers throw ParseFailure on non-conforming input and nothing else.

ParsedAction parse_action(std::string_view raw);
ParsedVerdict parse_verdict(std::string_view raw, bool with_reasoning);
ParsedReformulation parse_reformulation(std::string_view raw,
                                        std::size_t word_cap = kDefaultWordCap);

// Conforming outputs for each grammar; parse(format(x)) == x.

std::string format_action(ActionKind kind, std::string_view reasoning);
std::string format_verdict(bool matched, const std::optional<std::string>& reasoning);
std::string format_reformulation(std::string_view text,
                                 const std::optional<std::string>& reasoning);

std::size_t word_count(std::string_view text);

/// Words from `wordlist` that occur as whole words (case-insensitive) in `text`.
/// Entries containing an apostrophe, such as "n't", match as word suffixes.
std::vector<std::string> negation_words_in(std::string_view text,
                                           std::span<const std::string> wordlist);

std::vector<std::string> default_negation_words();

}  // namespace avs::llm
