#include "avs/orchestrator.hpp"

#include <atomic>
#include <thread>

#include "avs/errors.hpp"

namespace avs {

std::string_view to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::reached_L: return "reached_L";
    case TerminationReason::exhausted_T: return "exhausted_T";
    case TerminationReason::corpus_exhausted: return "corpus_exhausted";
    case TerminationReason::agent_failure: return "agent_failure";
  }
  return "?";
}

TerminationReason termination_from_string(std::string_view s) {
  for (auto r : {TerminationReason::reached_L, TerminationReason::exhausted_T,
                 TerminationReason::corpus_exhausted, TerminationReason::agent_failure}) {
    if (to_string(r) == s) return r;
  }
  throw InputError("unknown termination reason '" + std::string(s) + "'");
}

void TopicRun::validate() const {
  if (topic.empty()) throw InvariantViolation("topic id is empty");
  original.validate();
  config.validate();
  if (!agents.retrieval || !agents.reasoning || !agents.reformulation || !agents.orchestration) {
    throw InvariantViolation("topic " + topic + " is missing an agent binding");
  }
}

namespace {

/// Wraps a failure that survived the retry policy.
struct AgentFailure {
  std::string message;
};

template <typename F>
auto call_agent(const char* role, F&& call) -> decltype(call()) {
  try {
    try {
      return call();
    } catch (const TransientError&) {
      return call();
    }
  } catch (const std::exception& e) {
    throw AgentFailure{std::string(role) + " agent failed: " + e.what()};
  }
}

}  // namespace

RunTrace run_topic(const TopicRun& run, const RecordSink& sink) {
  run.validate();
  const auto& cfg = run.config;
  const std::size_t k = cfg.examination_length;

  RunTrace trace;
  trace.topic = run.topic;
  trace.config = cfg;
  trace.submission = SubmissionList(cfg.submission_length);

  ExclusionSet excluded;
  ExaminationWindow window = reset_window(k);
  Query query = run.original;
  std::vector<CandidateId> all_matched;
  std::vector<CandidateId> all_unmatched;
  bool stopped = false;

  try {
    RankedList ranked =
        call_agent("retrieval", [&] { return run.agents.retrieval->retrieve(query, excluded, k); });

    for (std::size_t t = 1; t <= cfg.max_iterations; ++t) {
      auto slice = ranked.head(k);
      if (slice.empty()) {
        trace.termination = TerminationReason::corpus_exhausted;
        stopped = true;
        break;
      }

      // Relevance is always judged against the user's original query.
      Judgment judgment = call_agent(
          "reasoning", [&] { return run.agents.reasoning->judge(run.original, slice); });
      if (judgment.verdicts.size() != slice.size()) {
        throw InvariantViolation("reasoning agent returned a partial judgment");
      }
      EvalSummary summary = judgment.summary();
      double precision = precision_of(summary);

      excluded = update_search_space(std::move(excluded), slice);
      trace.memory.append({t - 1, query, precision, summary, window});
      trace.submission = append_submission(std::move(trace.submission), judgment.matched);
      all_matched.insert(all_matched.end(), judgment.matched.begin(), judgment.matched.end());
      all_unmatched.insert(all_unmatched.end(), judgment.unmatched.begin(),
                           judgment.unmatched.end());

      IterationRecord record;
      record.iteration = t - 1;
      record.query = query;
      record.window = window;
      record.summary = summary;
      record.precision = precision;
      record.matched = std::move(judgment.matched);
      record.unmatched = std::move(judgment.unmatched);
      record.verdicts = std::move(judgment.verdicts);

      if (trace.submission.full()) {
        trace.termination = TerminationReason::reached_L;
        stopped = true;
        trace.iterations.push_back(std::move(record));
        if (sink) sink(trace.topic, trace.iterations.back());
        break;
      }

      Action action = call_agent(
          "orchestration", [&] { return run.agents.orchestration->decide(summary, query); });

      if (action.kind == ActionKind::explore) {
        ReformulationRequest request{run.original, query, trace.memory, action.reasoning,
                                     all_matched, all_unmatched};
        std::optional<Query> next;
        std::string failure;
        for (int attempt = 0; attempt < 2 && !next; ++attempt) {
          try {
            Query candidate = run.agents.reformulation->reformulate(request);
            if (candidate.text == query.text) {
              failure = "reformulation repeated the previous query";
              continue;
            }
            candidate.origin = QueryOrigin::reformulated;
            next = std::move(candidate);
          } catch (const DuplicateReformulation& e) {
            failure = e.what();
          } catch (const ParseFailure& e) {
            failure = e.what();
          } catch (const TransientError& e) {
            if (attempt == 1) {
              throw AgentFailure{std::string("reformulation agent failed: ") + e.what()};
            }
            failure = e.what();
          } catch (const std::exception& e) {
            throw AgentFailure{std::string("reformulation agent failed: ") + e.what()};
          }
        }
        if (next) {
          query = std::move(*next);
          record.reformulation = query;
          window = reset_window(k);
        } else {
          record.reformulation_fallback = true;
          action.kind = ActionKind::exploit;
          action.reasoning += " [reformulation unavailable (" + failure + "); exploiting]";
          window = advance_window(window, k);
        }
      } else {
        window = advance_window(window, k);
      }
      record.action = std::move(action);

      trace.iterations.push_back(std::move(record));
      if (sink) sink(trace.topic, trace.iterations.back());

      ranked = call_agent("retrieval",
                          [&] { return run.agents.retrieval->retrieve(query, excluded, k); });
    }
    if (!stopped) trace.termination = TerminationReason::exhausted_T;

    if (!trace.submission.full()) {
      std::size_t missing = cfg.submission_length - trace.submission.size();
      RankedList last = call_agent(
          "retrieval", [&] { return run.agents.retrieval->retrieve(query, excluded, missing); });
      trace.submission = finalize_submission(std::move(trace.submission), last, excluded,
                                             cfg.submission_length);
    }
  } catch (const AgentFailure& e) {
    trace.termination = TerminationReason::agent_failure;
    trace.error = e.message;
  }
  return trace;
}

SubmissionList finalize_submission(SubmissionList submission, const RankedList& last_list,
                                   const ExclusionSet& excluded, std::size_t length) {
  if (submission.size() > length) throw InvariantViolation("submission longer than L");
  std::vector<CandidateId> padding;
  for (const auto& c : last_list.entries()) {
    if (submission.size() + padding.size() >= length) break;
    if (excluded.contains(c.id) || submission.contains(c.id)) continue;
    padding.push_back(c.id);
  }
  submission.append(padding, Provenance::padding);
  return submission;
}

std::vector<BatchResult> run_batch(const std::vector<TopicRun>& topics, std::size_t parallelism,
                                   const RecordSink& sink) {
  if (parallelism < 1) throw InvariantViolation("parallelism must be >= 1");
  if (topics.empty()) throw InvariantViolation("batch has no topics");

  std::vector<BatchResult> results(topics.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < topics.size(); i = next++) {
      try {
        results[i].trace = run_topic(topics[i], sink);
        if (results[i].trace.error) {
          results[i].ok = false;
          results[i].error = *results[i].trace.error;
        }
      } catch (const std::exception& e) {
        results[i].trace.topic = topics[i].topic;
        results[i].ok = false;
        results[i].error = e.what();
      }
    }
  };

  std::size_t n = std::min(parallelism, topics.size());
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
  }
  return results;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json verdicts_to_json(const std::vector<Verdict>& verdicts) {
  auto arr = nlohmann::json::array();
  for (const auto& v : verdicts) {
    nlohmann::json j{{"id", v.candidate}, {"matched", v.matched}};
    if (v.reasoning) j["reasoning"] = *v.reasoning;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

nlohmann::json to_json(const IterationRecord& r) {
  nlohmann::json j{{"iteration", r.iteration},
                   {"query", to_json(r.query)},
                   {"window", {r.window.start, r.window.end}},
                   {"examined", r.summary.examined},
                   {"matched_count", r.summary.matched},
                   {"unmatched_count", r.summary.unmatched},
                   {"precision", r.precision},
                   {"action", nullptr},
                   {"reformulation", nullptr},
                   {"fallback", r.reformulation_fallback},
                   {"matched", r.matched},
                   {"unmatched", r.unmatched},
                   {"verdicts", verdicts_to_json(r.verdicts)}};
  if (r.action) {
    j["action"] = {{"kind", to_string(r.action->kind)}, {"reasoning", r.action->reasoning}};
  }
  if (r.reformulation) j["reformulation"] = to_json(*r.reformulation);
  return j;
}

IterationRecord iteration_record_from_json(const nlohmann::json& j) {
  IterationRecord r;
  r.iteration = j.at("iteration").get<std::size_t>();
  r.query = query_from_json(j.at("query"));
  const auto& w = j.at("window");
  r.window = {w.at(0).get<std::size_t>(), w.at(1).get<std::size_t>()};
  r.summary = {j.at("examined").get<std::size_t>(), j.at("matched_count").get<std::size_t>(),
               j.at("unmatched_count").get<std::size_t>()};
  r.summary.validate();
  r.precision = j.at("precision").get<double>();
  if (const auto& a = j.at("action"); !a.is_null()) {
    r.action = Action{action_kind_from_string(a.at("kind").get<std::string>()),
                      a.at("reasoning").get<std::string>()};
  }
  if (const auto& q = j.at("reformulation"); !q.is_null()) r.reformulation = query_from_json(q);
  r.reformulation_fallback = j.value("fallback", false);
  r.matched = j.at("matched").get<std::vector<CandidateId>>();
  r.unmatched = j.at("unmatched").get<std::vector<CandidateId>>();
  if (r.matched.size() != r.summary.matched || r.unmatched.size() != r.summary.unmatched) {
    throw InputError("matched/unmatched lists disagree with counts");
  }
  for (const auto& v : j.value("verdicts", nlohmann::json::array())) {
    Verdict verdict{v.at("id").get<std::string>(), v.at("matched").get<bool>(), std::nullopt};
    if (v.contains("reasoning")) verdict.reasoning = v.at("reasoning").get<std::string>();
    r.verdicts.push_back(std::move(verdict));
  }
  return r;
}

nlohmann::json to_json(const RunTrace& t) {
  auto iterations = nlohmann::json::array();
  for (const auto& r : t.iterations) iterations.push_back(to_json(r));
  auto submission = nlohmann::json::array();
  for (const auto& e : t.submission.entries()) {
    submission.push_back({{"id", e.id}, {"provenance", to_string(e.provenance)}});
  }
  nlohmann::json j{{"topic", t.topic},
                   {"config",
                    {{"T", t.config.max_iterations},
                     {"k", t.config.examination_length},
                     {"L", t.config.submission_length}}},
                   {"termination", to_string(t.termination)},
                   {"iterations", iterations},
                   {"submission", submission},
                   {"memory", to_json(t.memory).at("memory")}};
  if (t.error) j["error"] = *t.error;
  return j;
}

RunTrace run_trace_from_json(const nlohmann::json& j) {
  RunTrace t;
  try {
    t.topic = j.at("topic").get<std::string>();
    const auto& c = j.at("config");
    t.config = {c.at("T").get<std::size_t>(), c.at("k").get<std::size_t>(),
                c.at("L").get<std::size_t>()};
    t.config.validate();
    t.termination = termination_from_string(j.at("termination").get<std::string>());
    if (j.contains("error")) t.error = j.at("error").get<std::string>();
  } catch (const std::exception& e) {
    throw InputError(std::string("trace header: ") + e.what());
  }

  const auto& iterations = j.contains("iterations") ? j.at("iterations") : nlohmann::json::array();
  for (std::size_t i = 0; i < iterations.size(); ++i) {
    try {
      t.iterations.push_back(iteration_record_from_json(iterations.at(i)));
    } catch (const std::exception& e) {
      throw InputError("trace record " + std::to_string(i) + ": " + e.what());
    }
  }

  try {
    t.submission = SubmissionList(t.config.submission_length);
    for (const auto& e : j.at("submission")) {
      CandidateId id = e.at("id").get<std::string>();
      t.submission.append(std::span<const CandidateId>(&id, 1),
                          provenance_from_string(e.at("provenance").get<std::string>()));
    }
    t.memory = memory_bank_from_json({{"memory", j.at("memory")}});
  } catch (const std::exception& e) {
    throw InputError(std::string("trace submission/memory: ") + e.what());
  }
  return t;
}

}  // namespace avs
