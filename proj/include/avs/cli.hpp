#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "avs/core.hpp"
#include "avs/orchestrator.hpp"

namespace avs::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `avs` tool. Writes human output to `out`, diagnostics to
/// `err`, and returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// One topic of a topics file: `id<TAB>text[<TAB>v1,v2,...]`. Blank lines and
/// lines starting with '#' are skipped.
struct TopicLine {
  std::string id;
  std::string text;
  std::vector<float> embedding;
};

std::vector<TopicLine> parse_topics(std::string_view text, const std::string& source = "topics");
std::string format_topics(const std::vector<TopicLine>& topics);

/// Human-readable account of a trace. `only_iteration` (1-based, 0 for all)
/// restricts the output to one iteration.
std::string narrate(const RunTrace& trace, std::size_t only_iteration = 0);

/// Reads a trace written by `run` or `simulate`: either the final JSON
/// document or the incremental JSON-lines file. Throws InputError naming the
/// first record that fails to decode.
RunTrace load_trace(const std::filesystem::path& path);

}  // namespace avs::cli
