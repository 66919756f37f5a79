#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "avs/agents.hpp"
#include "avs/config.hpp"
#include "avs/corpus.hpp"
#include "avs/eval.hpp"
#include "avs/orchestrator.hpp"

namespace avs::sim {

enum class WorldKind {
  /// Relevant candidates planted around each intent with graded closeness, so
  /// the initial query ranks relevant and near-miss candidates interleaved.
  standard,
  /// The initial query sits nearer a distractor cluster with no relevant
  /// members than to the fully relevant target cluster.
  two_cluster,
};

std::string_view to_string(WorldKind kind);
WorldKind world_kind_from_string(std::string_view s);

struct WorldParams {
  WorldKind kind = WorldKind::standard;
  std::size_t dimension = 64;
  std::size_t corpus_size = 10000;
  std::size_t topics = 30;
  /// A candidate is relevant to a topic iff cos(candidate, intent) >= this.
  double relevance_threshold = 0.5;
  /// tan of the angle between the initial query and the intent (standard).
  double query_drift = 1.5;

  // standard
  std::size_t planted_per_topic = 150;
  double planted_spread_min = 0.3;
  double planted_spread_max = 2.5;

  // two_cluster
  std::size_t distractors_per_topic = 2500;
  std::size_t targets_per_topic = 200;
  /// Angle in degrees between the initial query and the intent; the rest of
  /// the query points at the distractor centre.
  double query_angle_deg = 70.0;
  double distractor_spread_min = 0.3;
  double distractor_spread_max = 2.0;
  double target_spread_min = 0.3;
  double target_spread_max = 1.0;

  std::uint64_t seed = 1;

  /// The two-cluster world at the scale used by the exploration benchmark:
  /// d=32, 30 topics, corpus made of the planted clusters only.
  static WorldParams two_cluster_defaults();

  void validate() const;
  /// Reads keys such as `kind`, `dimension`, `corpus_size`, `rho`, `seed`.
  static WorldParams from_config(const KeyValueConfig& cfg, WorldParams defaults);
  static WorldParams from_config(const KeyValueConfig& cfg);
  KeyValueConfig to_config() const;
};

struct TopicSpec {
  std::string id;
  std::string text;
  std::vector<float> intent;
  std::vector<float> initial_query;
  std::shared_ptr<const RelevanceSet> relevant;
};

struct SyntheticWorld {
  WorldParams params;
  std::shared_ptr<const CorpusIndex> corpus;
  std::vector<TopicSpec> topics;
  /// Relevant candidates only (grade 1); everything else is nonrelevant.
  Qrels qrels;
};

/// Deterministic for a fixed seed. Throws InputError when a topic ends up with
/// no relevant candidate.
SyntheticWorld generate_world(const WorldParams& params);

enum class OrchestratorPolicy { always_exploit, always_explore, threshold };

std::string_view to_string(OrchestratorPolicy p);
OrchestratorPolicy policy_from_string(std::string_view s);

struct PolicyConfig {
  OrchestratorPolicy orchestrator = OrchestratorPolicy::threshold;
  double threshold = 0.2;
  double alpha = 0.5;
  double tpr = 1.0;
  double fpr = 0.0;
  /// Skip the reasoning agent entirely: every examined candidate is accepted.
  bool accept_all = false;

  void validate() const;
};

/// Binds simulated agents to every topic of the world.
std::vector<TopicRun> make_topic_runs(const SyntheticWorld& world, const PolicyConfig& policy,
                                      const EngineConfig& config, std::size_t retrieval_workers = 1);

/// Ranked ids of the final submission.
std::vector<CandidateId> submission_ids(const RunTrace& trace);

/// Cumulative relevant count at the end of each of `bins` bins of `bin_size`
/// ranks. A short submission leaves the curve flat past its end.
std::vector<std::size_t> accumulated_gt_curve(std::span<const CandidateId> ranked,
                                              const Qrels& qrels, const std::string& topic,
                                              std::size_t bin_size, std::size_t bins);
std::vector<std::size_t> accumulated_gt_curve(const RunTrace& trace, const Qrels& qrels);

/// Retrieval-only ranking: the initial query's top-L over the full corpus.
std::vector<CandidateId> retrieval_only_ranking(const SyntheticWorld& world, const TopicSpec& topic,
                                                std::size_t length);

/// One arm of an ablation: either plain retrieval, or the loop under a policy.
struct Arm {
  std::string name;
  bool retrieval_only = false;
  PolicyConfig policy;
};

/// The agent-stacking arms: retrieval only, + reasoning (always exploit),
/// + reformulation (always explore), full stack (threshold orchestration).
std::vector<Arm> stacking_arms(double threshold = 0.2, double alpha = 0.5, double tpr = 1.0,
                               double fpr = 0.0);

struct ArmTopicResult {
  std::string topic;
  double ap = 0.0;
  std::vector<std::size_t> curve;
};

/// Runs one arm over every topic of a world.
std::vector<ArmTopicResult> run_arm(const SyntheticWorld& world, const Arm& arm,
                                    const EngineConfig& config, std::size_t parallelism = 1);

struct SuiteOptions {
  std::vector<std::uint64_t> seeds;
  EngineConfig config;
  /// (T, k) pairs evaluated with `sensitivity_arm`.
  std::vector<std::pair<std::size_t, std::size_t>> sensitivity_grid;
  std::string sensitivity_arm = "full";
  std::size_t parallelism = 1;
};

struct ArmSummary {
  std::string name;
  std::vector<double> per_seed;  // mean AP over topics, one value per seed
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct SensitivityPoint {
  std::size_t T = 0;
  std::size_t k = 0;
  std::vector<double> per_seed;
  double mean = 0.0;
};

struct SuiteReport {
  std::vector<ArmSummary> arms;
  /// Each arm against the first, paired over seeds. Empty for a single arm.
  std::vector<PairComparison> comparisons;
  std::vector<SensitivityPoint> sensitivity;
  /// Mean accumulated-GT curve per arm over seeds and topics.
  std::map<std::string, std::vector<double>> curves;

  std::string to_tsv() const;
  std::string curves_tsv() const;
  nlohmann::json to_json() const;
};

/// Regenerates the world for every seed (world seed replaced by each entry of
/// `options.seeds`) and runs every arm on it.
SuiteReport ablation_suite(const WorldParams& world, const std::vector<Arm>& arms,
                           const SuiteOptions& options);

}  // namespace avs::sim
