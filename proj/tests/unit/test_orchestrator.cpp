#include "doctest.h"

#include <atomic>
#include <memory>
#include <mutex>
#include <random>

#include "avs/errors.hpp"
#include "avs/orchestrator.hpp"
#include "avs/random.hpp"
#include "support.hpp"

using namespace avs;

namespace {

std::shared_ptr<CorpusIndex> random_corpus(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> g;
  std::vector<CandidateId> ids;
  std::vector<float> v;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("c" + std::to_string(i));
    for (std::size_t j = 0; j < d; ++j) v.push_back(g(rng));
  }
  return std::make_shared<CorpusIndex>(ids, v, d);
}

std::shared_ptr<RelevanceSet> every_nth(const CorpusIndex& index, std::size_t n) {
  auto rel = std::make_shared<RelevanceSet>();
  for (std::size_t r = 0; r < index.size(); r += n) rel->insert(index.id(r));
  return rel;
}

TopicRun make_run(std::shared_ptr<CorpusIndex> index, std::shared_ptr<const ReasoningAgent> judge,
                  EngineConfig cfg, double threshold = 0.2, const std::string& topic = "301") {
  std::vector<float> q(index->dimension(), 0.0f);
  q[0] = 1.0f;
  return {topic,
          Query::original("topic " + topic, q),
          cfg,
          {std::make_shared<EmbeddingRetrievalAgent>(index, nullptr), std::move(judge),
           std::make_shared<CentroidNudgeReformulator>(index, 0.5),
           std::make_shared<ThresholdOrchestrator>(threshold)}};
}

class FlakyReasoning final : public ReasoningAgent {
 public:
  FlakyReasoning(int failures, bool transient) : left_(failures), transient_(transient) {}
  Judgment judge(const Query& q, std::span<const ScoredCandidate> slice) const override {
    if (left_-- > 0) {
      if (transient_) throw TransportError("timeout");
      throw std::runtime_error("model crashed");
    }
    return AcceptAllReasoningAgent().judge(q, slice);
  }

 private:
  mutable std::atomic<int> left_;
  bool transient_;
};

}  // namespace

TEST_CASE("oracle loop over twenty iterations") {
  auto index = random_corpus(2000, 8, 3);
  auto rel = every_nth(*index, 4);
  auto run = make_run(index, std::make_shared<OracleReasoningAgent>(rel), {20, 10, 1000});
  auto trace = run_topic(run);
  CHECK(testing::trace_violations(trace, run.original, index.get()).empty());
  CHECK(trace.iterations.size() == 20);
  CHECK(trace.termination == TerminationReason::exhausted_T);
  CHECK(trace.submission.size() == 1000);
  std::size_t matched = 0;
  for (const auto& r : trace.iterations) matched += r.summary.matched;
  CHECK(trace.submission.matched_count() == matched);
  for (std::size_t i = 0; i < matched; ++i) CHECK(rel->contains(trace.submission.entries()[i].id));
}

TEST_CASE("all-unmatched topics examine exactly T*k candidates") {
  auto index = random_corpus(500, 6, 5);
  auto none = std::make_shared<RelevanceSet>();
  auto run = make_run(index, std::make_shared<OracleReasoningAgent>(none), {7, 10, 100});
  auto trace = run_topic(run);
  CHECK(testing::trace_violations(trace, run.original, index.get()).empty());
  std::size_t examined = 0;
  for (const auto& r : trace.iterations) {
    examined += r.summary.examined;
    REQUIRE(r.action);
    CHECK(r.action->kind == ActionKind::explore);
  }
  CHECK(examined == 70);
  CHECK(trace.submission.matched_count() == 0);
  CHECK(trace.submission.size() == 100);
}

TEST_CASE("loop stops as soon as the submission is full") {
  auto index = random_corpus(300, 4, 7);
  auto run = make_run(index, std::make_shared<AcceptAllReasoningAgent>(), {60, 50, 120});
  auto trace = run_topic(run);
  CHECK(trace.termination == TerminationReason::reached_L);
  CHECK(trace.iterations.size() == 3);
  CHECK_FALSE(trace.iterations.back().action.has_value());
  CHECK(trace.submission.size() == 120);
  CHECK(trace.submission.matched_count() == 120);
  CHECK(testing::trace_violations(trace, run.original, index.get()).empty());
}

TEST_CASE("a small corpus runs dry") {
  auto index = random_corpus(25, 4, 9);
  auto none = std::make_shared<RelevanceSet>();
  auto run = make_run(index, std::make_shared<OracleReasoningAgent>(none), {60, 10, 100}, 0.0);
  auto trace = run_topic(run);
  CHECK(trace.termination == TerminationReason::corpus_exhausted);
  CHECK(trace.iterations.size() == 3);
  CHECK(trace.iterations.back().summary.examined == 5);
  CHECK(trace.submission.size() == 0);
}

TEST_CASE("finalize_submission pads from the last list") {
  SubmissionList s(5);
  std::vector<CandidateId> m{"a", "b"};
  s.append(m, Provenance::matched);
  ExclusionSet ex;
  std::vector<CandidateId> seen{"a", "b", "x"};
  ex.add(seen);
  RankedList last({{"x", 0.9}, {"y", 0.8}, {"a", 0.7}, {"z", 0.6}, {"w", 0.5}, {"v", 0.4}});
  auto out = finalize_submission(s, last, ex, 5);
  std::vector<CandidateId> ids;
  for (const auto& e : out.entries()) ids.push_back(e.id);
  CHECK(ids == std::vector<CandidateId>{"a", "b", "y", "z", "w"});
  CHECK(out.entries()[2].provenance == Provenance::padding);
  CHECK(finalize_submission(s, RankedList(), ex, 5).size() == 2);
}

TEST_CASE("transient agent errors get one retry") {
  auto index = random_corpus(200, 4, 11);
  auto ok = run_topic(make_run(index, std::make_shared<FlakyReasoning>(1, true), {3, 10, 100}));
  CHECK(ok.termination == TerminationReason::exhausted_T);
  CHECK_FALSE(ok.error);

  auto twice = run_topic(make_run(index, std::make_shared<FlakyReasoning>(2, true), {3, 10, 100}));
  CHECK(twice.termination == TerminationReason::agent_failure);
  REQUIRE(twice.error);
  CHECK(twice.error->find("reasoning") != std::string::npos);

  auto hard = run_topic(make_run(index, std::make_shared<FlakyReasoning>(1, false), {3, 10, 100}));
  CHECK(hard.termination == TerminationReason::agent_failure);
  CHECK(hard.iterations.empty());
}

TEST_CASE("batch results are deterministic and isolate failures") {
  auto index = random_corpus(1500, 8, 13);
  std::vector<TopicRun> runs;
  for (int t = 0; t < 6; ++t) {
    auto rel = every_nth(*index, 3 + t);
    runs.push_back(make_run(index, std::make_shared<OracleReasoningAgent>(rel), {8, 20, 300}, 0.3,
                            std::to_string(400 + t)));
  }
  runs.push_back(make_run(index, std::make_shared<FlakyReasoning>(5, false), {8, 20, 300}, 0.3,
                          "broken"));
  std::mutex m;
  std::size_t records = 0;
  auto sink = [&](const std::string&, const IterationRecord&) {
    std::lock_guard lock(m);
    ++records;
  };
  auto seq = run_batch(runs, 1);
  auto par = run_batch(runs, 4, sink);
  REQUIRE(seq.size() == runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    CHECK(seq[i].trace == par[i].trace);
    CHECK(seq[i].ok == par[i].ok);
  }
  CHECK_FALSE(seq.back().ok);
  CHECK(seq.back().trace.topic == "broken");
  std::size_t expected = 0;
  for (const auto& r : seq) expected += r.trace.iterations.size();
  CHECK(records == expected);
  CHECK_THROWS_AS(run_batch(runs, 0), InvariantViolation);
  CHECK_THROWS_AS(run_batch({}, 1), InvariantViolation);
}

TEST_CASE("traces round-trip through JSON") {
  auto index = random_corpus(600, 8, 17);
  auto rel = every_nth(*index, 5);
  auto trace = run_topic(make_run(index, std::make_shared<OracleReasoningAgent>(rel), {6, 10, 80}));
  auto back = run_trace_from_json(nlohmann::json::parse(to_json(trace).dump()));
  CHECK(back == trace);
  auto j = to_json(trace);
  j["iterations"][2]["window"] = "oops";
  try {
    run_trace_from_json(j);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}
