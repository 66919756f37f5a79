#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "avs/agents.hpp"
#include "avs/core.hpp"

namespace avs {

struct AgentBindings {
  std::shared_ptr<const RetrievalAgent> retrieval;
  std::shared_ptr<const ReasoningAgent> reasoning;
  std::shared_ptr<const ReformulationAgent> reformulation;
  std::shared_ptr<const OrchestrationAgent> orchestration;
};

struct TopicRun {
  std::string topic;
  Query original;
  EngineConfig config;
  AgentBindings agents;

  void validate() const;
};

/// One pass of the loop: the evaluation of the current slice and the decision
/// that followed it. `action` is empty only when the loop stopped right after
/// this evaluation.
struct IterationRecord {
  std::size_t iteration = 0;
  Query query;
  ExaminationWindow window;
  EvalSummary summary;
  double precision = 0.0;
  std::optional<Action> action;
  /// Set when an explore decision could not produce a new query and the
  /// iteration fell back to exploiting.
  bool reformulation_fallback = false;
  std::optional<Query> reformulation;
  std::vector<CandidateId> matched;
  std::vector<CandidateId> unmatched;
  std::vector<Verdict> verdicts;

  bool operator==(const IterationRecord&) const = default;
};

enum class TerminationReason { reached_L, exhausted_T, corpus_exhausted, agent_failure };

std::string_view to_string(TerminationReason r);
TerminationReason termination_from_string(std::string_view s);

struct RunTrace {
  std::string topic;
  EngineConfig config;
  std::vector<IterationRecord> iterations;
  SubmissionList submission{1};
  MemoryBank memory;
  TerminationReason termination = TerminationReason::exhausted_T;
  std::optional<std::string> error;

  bool operator==(const RunTrace&) const = default;
};

/// Called after each iteration; lets callers persist the trace incrementally.
using RecordSink = std::function<void(const std::string& topic, const IterationRecord&)>;

/// Runs the explore/exploit loop for one topic. Agent failures that survive one
/// retry end the run with termination agent_failure; the partial trace is
/// returned with `error` set.
RunTrace run_topic(const TopicRun& run, const RecordSink& sink = {});

/// Pads `submission` up to `length` with the best-ranked candidates of
/// `last_list` that are neither excluded nor already submitted.
SubmissionList finalize_submission(SubmissionList submission, const RankedList& last_list,
                                   const ExclusionSet& excluded, std::size_t length);

struct BatchResult {
  RunTrace trace;
  bool ok = true;
  std::string error;
};

/// Runs every topic with at most `parallelism` topics in flight. Results come
/// back in input order and equal sequential run_topic output.
std::vector<BatchResult> run_batch(const std::vector<TopicRun>& topics, std::size_t parallelism,
                                   const RecordSink& sink = {});

nlohmann::json to_json(const IterationRecord& r);
IterationRecord iteration_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunTrace& t);
/// Throws InputError naming the first record that fails to decode.
RunTrace run_trace_from_json(const nlohmann::json& j);

}  // namespace avs
