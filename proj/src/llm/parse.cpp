#include "avs/llm/parse.hpp"

#include <algorithm>
#include <cctype>

#include "avs/errors.hpp"

namespace avs::llm {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

/// End offset (exclusive) of the balanced object starting at `open`, honoring
/// JSON string escapes; npos if unbalanced.
std::size_t match_object(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

/// Value of the first key equal to `key` ignoring case.
const nlohmann::json* field(const nlohmann::json& obj, std::string_view key) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (lower(it.key()) == key) return &it.value();
  }
  return nullptr;
}

std::optional<std::string> string_field(const nlohmann::json& obj, std::string_view key) {
  const auto* v = field(obj, key);
  if (!v || !v->is_string()) return std::nullopt;
  return v->get<std::string>();
}

std::string dump(const nlohmann::json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace

std::optional<nlohmann::json> first_json_object(std::string_view raw) {
  for (std::size_t open = raw.find('{'); open != std::string_view::npos;
       open = raw.find('{', open + 1)) {
    std::size_t end = match_object(raw, open);
    if (end == std::string_view::npos) continue;
    auto parsed = nlohmann::json::parse(raw.substr(open, end - open), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
  }
  return std::nullopt;
}

ParsedAction parse_action(std::string_view raw) {
  auto obj = first_json_object(raw);
  if (!obj) throw ParseFailure("no JSON object in action output");
  auto action = string_field(*obj, "action");
  if (!action) throw ParseFailure("action output lacks a string \"action\" field");
  auto value = lower(trim(*action));
  ParsedAction out;
  if (value == "exploit") {
    out.kind = ActionKind::exploit;
  } else if (value == "explore") {
    out.kind = ActionKind::explore;
  } else {
    throw ParseFailure("invalid action value '" + *action + "'");
  }
  out.reasoning = string_field(*obj, "reasoning").value_or("");
  out.raw = std::string(raw);
  return out;
}

ParsedVerdict parse_verdict(std::string_view raw, bool with_reasoning) {
  ParsedVerdict out;
  out.raw = std::string(raw);
  if (with_reasoning) {
    auto obj = first_json_object(raw);
    if (!obj) throw ParseFailure("no JSON object in evaluation output");
    auto eval = string_field(*obj, "evaluation");
    if (!eval) throw ParseFailure("evaluation output lacks an \"Evaluation\" field");
    auto value = lower(trim(*eval));
    if (value != "matched" && value != "unmatched") {
      throw ParseFailure("invalid evaluation value '" + *eval + "'");
    }
    out.matched = value == "matched";
    out.reasoning = string_field(*obj, "reasoning").value_or("");
    return out;
  }

  const std::string text = lower(raw);
  for (std::size_t i = 0; i < text.size();) {
    if (!is_word_char(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_char(text[j])) ++j;
    std::string_view word(text.data() + i, j - i);
    if (word == "matched" || word == "unmatched") {
      out.matched = word == "matched";
      return out;
    }
    i = j;
  }
  throw ParseFailure("no whole-word \"matched\" or \"unmatched\" in evaluation output");
}

ParsedReformulation parse_reformulation(std::string_view raw, std::size_t word_cap) {
  constexpr std::string_view open_tag = "<reformulate>", close_tag = "</reformulate>";
  auto open = raw.find(open_tag);
  if (open == std::string_view::npos) throw ParseFailure("missing <reformulate> tag");
  auto body_start = open + open_tag.size();
  auto close = raw.find(close_tag, body_start);
  if (close == std::string_view::npos) throw ParseFailure("missing </reformulate> tag");

  ParsedReformulation out;
  out.raw = std::string(raw);
  out.text = trim(raw.substr(body_start, close - body_start));
  if (out.text.empty()) throw ParseFailure("empty reformulation");
  if (std::size_t n = word_count(out.text); n > word_cap) {
    throw ParseFailure("reformulation has " + std::to_string(n) + " words, cap is " +
                       std::to_string(word_cap));
  }

  constexpr std::string_view think_open = "<think>", think_close = "</think>";
  if (auto t = raw.find(think_open); t != std::string_view::npos) {
    auto start = t + think_open.size();
    if (auto e = raw.find(think_close, start); e != std::string_view::npos) {
      auto reasoning = trim(raw.substr(start, e - start));
      if (!reasoning.empty()) out.reasoning = std::move(reasoning);
    }
  }
  return out;
}

std::string format_action(ActionKind kind, std::string_view reasoning) {
  nlohmann::json j;
  j["action"] = std::string(to_string(kind));
  j["reasoning"] = std::string(reasoning);
  return dump(j);
}

std::string format_verdict(bool matched, const std::optional<std::string>& reasoning) {
  const char* word = matched ? "matched" : "unmatched";
  if (!reasoning) return word;
  nlohmann::json j;
  j["Evaluation"] = word;
  j["reasoning"] = *reasoning;
  return dump(j);
}

std::string format_reformulation(std::string_view text,
                                 const std::optional<std::string>& reasoning) {
  std::string out;
  if (reasoning) out += "<think>\n" + *reasoning + "\n</think>\n\n";
  out += "<reformulate>\n";
  out += text;
  out += "\n</reformulate>";
  return out;
}

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

std::vector<std::string> negation_words_in(std::string_view text,
                                           std::span<const std::string> wordlist) {
  const std::string lowered = lower(text);
  std::vector<std::string> words;
  for (std::size_t i = 0; i < lowered.size();) {
    if (!is_word_char(lowered[i]) && lowered[i] != '\'') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < lowered.size() && (is_word_char(lowered[j]) || lowered[j] == '\'')) ++j;
    words.emplace_back(lowered, i, j - i);
    i = j;
  }

  std::vector<std::string> found;
  for (const auto& entry : wordlist) {
    const std::string needle = lower(entry);
    bool hit = std::any_of(words.begin(), words.end(), [&](const std::string& w) {
      if (needle.find('\'') != std::string::npos) return w.ends_with(needle);
      return w == needle;
    });
    if (hit) found.push_back(entry);
  }
  return found;
}

std::vector<std::string> default_negation_words() {
  return {"not", "no", "without", "never", "none", "nobody", "nothing", "neither", "nor",
          "cannot", "n't"};
}

}  // namespace avs::llm
