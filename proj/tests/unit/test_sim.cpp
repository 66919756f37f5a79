#include "doctest.h"

#include "avs/errors.hpp"
#include "avs/sim.hpp"
#include "support.hpp"

using namespace avs;
using namespace avs::sim;

namespace {

WorldParams small(WorldKind kind = WorldKind::standard) {
  WorldParams p = kind == WorldKind::two_cluster ? WorldParams::two_cluster_defaults() : WorldParams{};
  p.topics = 3;
  p.dimension = 16;
  if (kind == WorldKind::two_cluster) {
    p.distractors_per_topic = 300;
    p.targets_per_topic = 60;
    p.corpus_size = 3 * 360;
  } else {
    p.corpus_size = 2000;
  }
  return p;
}

}  // namespace

TEST_CASE("worlds are deterministic per seed") {
  auto a = generate_world(small());
  auto b = generate_world(small());
  CHECK(a.corpus->ids() == b.corpus->ids());
  CHECK(a.qrels == b.qrels);
  for (std::size_t r = 0; r < a.corpus->size(); r += 97) {
    auto va = a.corpus->vector(r), vb = b.corpus->vector(r);
    CHECK(std::equal(va.begin(), va.end(), vb.begin()));
  }
  auto p = small();
  p.seed = 2;
  CHECK_FALSE(generate_world(p).qrels == a.qrels);
}

TEST_CASE("relevance is the cosine threshold over the whole corpus") {
  auto w = generate_world(small(WorldKind::two_cluster));
  for (const auto& t : w.topics) {
    std::size_t expected = 0;
    for (std::size_t r = 0; r < w.corpus->size(); ++r) {
      bool rel = dot(w.corpus->vector(r), t.intent) >= w.params.relevance_threshold;
      expected += rel;
      CHECK(rel == t.relevant->contains(w.corpus->id(r)));
    }
    CHECK(w.qrels.relevant_count(t.id) == expected);
  }
}

TEST_CASE("standard defaults give 50 to 200 relevant per topic") {
  auto w = generate_world(WorldParams{});
  CHECK(w.topics.size() == 30);
  for (const auto& t : w.topics) {
    auto n = w.qrels.relevant_count(t.id);
    CHECK(n >= 50);
    CHECK(n <= 200);
  }
}

TEST_CASE("infeasible and invalid worlds are rejected") {
  auto p = small();
  p.relevance_threshold = 0.99999;
  p.planted_spread_min = 2.0;
  CHECK_THROWS_AS(generate_world(p), InputError);
  p = small();
  p.corpus_size = 10;
  CHECK_THROWS_AS(p.validate(), InputError);
  CHECK_THROWS_AS(world_kind_from_string("flat"), InputError);
  PolicyConfig bad;
  bad.alpha = 2.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("world parameters round-trip through config") {
  auto p = WorldParams::two_cluster_defaults();
  p.seed = 42;
  p.query_angle_deg = 55.0;
  auto back = WorldParams::from_config(p.to_config());
  CHECK(back.kind == WorldKind::two_cluster);
  CHECK(back.seed == 42);
  CHECK(back.query_angle_deg == 55.0);
  CHECK(back.corpus_size == p.corpus_size);
}

TEST_CASE("simulated runs satisfy the loop invariants") {
  auto w = generate_world(small());
  EngineConfig cfg{10, 20, 200};
  for (auto policy : {OrchestratorPolicy::threshold, OrchestratorPolicy::always_explore,
                      OrchestratorPolicy::always_exploit}) {
    PolicyConfig pc;
    pc.orchestrator = policy;
    pc.tpr = 0.9;
    pc.fpr = 0.1;
    auto runs = make_topic_runs(w, pc, cfg);
    REQUIRE(runs.size() == 3);
    auto results = run_batch(runs, 2);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      CHECK(results[i].ok);
      auto violations = testing::trace_violations(results[i].trace, runs[i].original, w.corpus.get());
      for (const auto& v : violations) FAIL_CHECK(v);
    }
  }
}

TEST_CASE("accumulated ground-truth curve") {
  Qrels q = parse_qrels("t 0 a 1\nt 0 c 1\nt 0 d 1\n");
  std::vector<CandidateId> ranked{"a", "b", "c", "d", "e"};
  CHECK(accumulated_gt_curve(ranked, q, "t", 2, 4) == std::vector<std::size_t>{1, 3, 3, 3});
  CHECK_THROWS_AS(accumulated_gt_curve(ranked, q, "t", 0, 1), InvariantViolation);
}

TEST_CASE("ablation suite shapes") {
  auto p = small();
  SuiteOptions o;
  o.seeds = {1, 2};
  o.config = {5, 20, 100};
  o.sensitivity_grid = {{5, 20}, {4, 25}};
  auto arms = stacking_arms();
  REQUIRE(arms.size() == 4);
  CHECK(arms[0].retrieval_only);
  auto report = ablation_suite(p, arms, o);
  CHECK(report.arms.size() == 4);
  CHECK(report.comparisons.size() == 3);
  CHECK(report.sensitivity.size() == 2);
  CHECK(report.arms[0].per_seed.size() == 2);
  CHECK(report.curves.at("full").size() == 5);
  CHECK(report.arms[3].mean >= report.arms[0].mean);

  auto single = ablation_suite(p, {arms[3]}, o);
  CHECK(single.comparisons.empty());
  o.seeds.clear();
  CHECK_THROWS_AS(ablation_suite(p, arms, o), InputError);
}
