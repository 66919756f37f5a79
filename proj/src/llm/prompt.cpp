#include "avs/llm/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "avs/errors.hpp"

#ifndef AVS_PROMPT_DIR_DEFAULT
#define AVS_PROMPT_DIR_DEFAULT "prompts"
#endif

namespace avs::llm {

std::string_view to_string(TemplateName name) {
  switch (name) {
    case TemplateName::eval: return "eval";
    case TemplateName::evalReasoning: return "evalReasoning";
    case TemplateName::action: return "action";
    case TemplateName::refine: return "refine";
    case TemplateName::refineMemory: return "refineMemory";
  }
  return "?";
}

TemplateName template_name_from_string(std::string_view s) {
  for (auto name : kAllTemplates) {
    if (to_string(name) == s) return name;
  }
  throw InputError("unknown prompt template '" + std::string(s) + "'");
}

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

/// Calls fn(offset, length, name) for each `{identifier}` in body.
template <typename Fn>
void scan_placeholders(std::string_view body, Fn&& fn) {
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '{' || i + 1 >= body.size() || !is_ident_start(body[i + 1])) continue;
    std::size_t j = i + 1;
    while (j < body.size() && is_ident(body[j])) ++j;
    if (j < body.size() && body[j] == '}') {
      fn(i, j + 1 - i, body.substr(i + 1, j - i - 1));
      i = j;
    }
  }
}

}  // namespace

PromptTemplate::PromptTemplate(TemplateName name, std::string body)
    : name_(name), body_(std::move(body)) {
  scan_placeholders(body_, [&](std::size_t, std::size_t, std::string_view ph) {
    if (std::find(std::begin(kPlaceholders), std::end(kPlaceholders), ph) ==
        std::end(kPlaceholders)) {
      throw InvariantViolation("template " + std::string(to_string(name_)) +
                               " uses undeclared placeholder {" + std::string(ph) + "}");
    }
    if (std::find(placeholders_.begin(), placeholders_.end(), ph) == placeholders_.end()) {
      placeholders_.emplace_back(ph);
    }
  });
}

std::string render(const PromptTemplate& tmpl, const Bindings& bindings) {
  const std::string& body = tmpl.body();
  std::string out;
  out.reserve(body.size() + 256);
  std::size_t cursor = 0;
  scan_placeholders(body, [&](std::size_t at, std::size_t len, std::string_view ph) {
    auto it = bindings.find(ph);
    if (it == bindings.end()) throw MissingPlaceholder(std::string(ph));
    out.append(body, cursor, at - cursor);
    if (ph == "memory_bank" && it->second.empty()) {
      out += kNoHistory;
    } else {
      out += it->second;
    }
    cursor = at + len;
  });
  out.append(body, cursor, std::string::npos);
  return out;
}

std::filesystem::path PromptLibrary::default_dir() {
  if (const char* env = std::getenv("AVS_PROMPT_DIR"); env && *env) return env;
  return AVS_PROMPT_DIR_DEFAULT;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
  PromptLibrary lib;
  for (auto name : kAllTemplates) {
    auto path = dir / (std::string(to_string(name)) + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open prompt template " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    lib.templates_.emplace(name, PromptTemplate(name, ss.str()));
  }
  return lib;
}

const PromptTemplate& PromptLibrary::get(TemplateName name) const { return templates_.at(name); }

std::string serialize_memory(const MemoryBank& memory) {
  if (memory.empty()) return std::string(kNoHistory);
  std::string out;
  char buf[96];
  for (const auto& e : memory.entries()) {
    if (!out.empty()) out += '\n';
    out += "step " + std::to_string(e.iteration) + ": query ";
    out += nlohmann::json(e.query.text).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    std::snprintf(buf, sizeof buf, " precision %.3f window [%zu, %zu)", e.precision,
                  e.window.start, e.window.end);
    out += buf;
  }
  return out;
}

std::string format_eval_summary(const EvalSummary& summary) {
  return "k=" + std::to_string(summary.examined) + " matched=" + std::to_string(summary.matched) +
         " unmatched=" + std::to_string(summary.unmatched);
}

}  // namespace avs::llm
