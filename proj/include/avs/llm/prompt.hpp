#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "avs/core.hpp"

namespace avs::llm {

enum class TemplateName { eval, evalReasoning, action, refine, refineMemory };

std::string_view to_string(TemplateName name);
TemplateName template_name_from_string(std::string_view s);
inline constexpr TemplateName kAllTemplates[] = {TemplateName::eval, TemplateName::evalReasoning,
                                                 TemplateName::action, TemplateName::refine,
                                                 TemplateName::refineMemory};

/// Placeholder names a template body may use.
inline constexpr std::string_view kPlaceholders[] = {
    "query", "eval_summary", "original_query", "Video_path", "memory_bank",
    "action_decision_reasoning"};

inline constexpr std::string_view kNoHistory = "(no history)";

using Bindings = std::map<std::string, std::string, std::less<>>;

/// A prompt body with `{name}` placeholders. Brace groups that are not a bare
/// identifier (such as the JSON answer skeletons) are literal text.
class PromptTemplate {
 public:
  /// Throws InvariantViolation if the body uses an undeclared placeholder.
  PromptTemplate(TemplateName name, std::string body);

  TemplateName name() const noexcept { return name_; }
  const std::string& body() const noexcept { return body_; }
  /// Distinct placeholder names in order of first use.
  const std::vector<std::string>& placeholders() const noexcept { return placeholders_; }

 private:
  TemplateName name_;
  std::string body_;
  std::vector<std::string> placeholders_;
};

/// Substitutes every placeholder. An empty `memory_bank` binding renders as
/// "(no history)". Throws MissingPlaceholder for an unbound name.
std::string render(const PromptTemplate& tmpl, const Bindings& bindings);

/// The five templates, loaded from `<dir>/<name>.txt`.
class PromptLibrary {
 public:
  static PromptLibrary load(const std::filesystem::path& dir);
  /// Directory from $AVS_PROMPT_DIR, else the install-time default.
  static std::filesystem::path default_dir();

  const PromptTemplate& get(TemplateName name) const;

 private:
  std::map<TemplateName, PromptTemplate> templates_;
};

/// One line per memory entry, oldest first:
///   step 0: query "..." precision 0.640 window [0, 50)
/// The query text is JSON-quoted. Empty memory yields "(no history)".
std::string serialize_memory(const MemoryBank& memory);

/// "k=50 matched=3 unmatched=47"
std::string format_eval_summary(const EvalSummary& summary);

}  // namespace avs::llm
