#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "avs/core.hpp"

namespace avs {

enum class Judgment3 { relevant, nonrelevant, unjudged };

/// Relevance judgments keyed by (topic, candidate). Absent pairs are unjudged.
/// The raw integer grade is kept so files round-trip unchanged.
class Qrels {
 public:
  void set(const std::string& topic, const CandidateId& candidate, int grade);
  Judgment3 judgment(const std::string& topic, const CandidateId& candidate) const;
  std::size_t relevant_count(const std::string& topic) const;
  std::vector<CandidateId> relevant(const std::string& topic) const;
  std::vector<std::string> topics() const;
  bool has_topic(const std::string& topic) const { return grades_.contains(topic); }

  /// Grades per topic, ordered by candidate id.
  const std::map<std::string, std::map<CandidateId, int>>& grades() const noexcept {
    return grades_;
  }

  bool operator==(const Qrels&) const = default;

 private:
  std::map<std::string, std::map<CandidateId, int>> grades_;
};

struct RunEntry {
  CandidateId candidate;
  std::size_t rank = 0;
  double score = 0.0;
  std::string tag;

  bool operator==(const RunEntry&) const = default;
};

/// Ranked results per topic. Ranks are 1..n in order, scores non-increasing.
class RunFile {
 public:
  /// Replaces the topic's entries after validating them.
  void set_topic(const std::string& topic, std::vector<RunEntry> entries);
  const std::map<std::string, std::vector<RunEntry>>& topics() const noexcept { return topics_; }
  std::vector<CandidateId> ranking(const std::string& topic) const;

  bool operator==(const RunFile&) const = default;

 private:
  std::map<std::string, std::vector<RunEntry>> topics_;
};

/// Builds a run entry list from an ordered id list; score = n - rank + 1.
std::vector<RunEntry> ranked_entries(std::span<const CandidateId> ids, const std::string& tag);

// TREC interchange. Qrels lines: `topic 0 candidate grade`; run lines:
// `topic Q0 candidate rank score tag`. Both space-separated, newline-terminated.
Qrels parse_qrels(std::string_view text, const std::string& source = "qrels");
Qrels read_qrels(const std::filesystem::path& path);
std::string format_qrels(const Qrels& qrels);
void write_qrels(const std::filesystem::path& path, const Qrels& qrels);

/// `max_per_topic` of 0 means unlimited.
RunFile parse_run(std::string_view text, const std::string& source = "run",
                  std::size_t max_per_topic = 0);
RunFile read_run(const std::filesystem::path& path, std::size_t max_per_topic = 0);
std::string format_run(const RunFile& run);
void write_run(const std::filesystem::path& path, const RunFile& run);

/// Exact AP with unjudged candidates counted as nonrelevant. Zero when the
/// topic has no relevant candidates. Throws InputError on duplicate ids.
double average_precision(std::span<const CandidateId> ranked, const Qrels& qrels,
                         const std::string& topic);

/// A judging pool split into strata; candidates of stratum s were sent for
/// judgment with probability `rate`. Pool members absent from the qrels were
/// not sampled. Candidates outside every stratum count as nonrelevant.
struct Stratum {
  double rate = 1.0;
  std::unordered_set<CandidateId> members;
};

struct SamplingPlan {
  std::vector<Stratum> strata;

  /// One stratum holding every judged candidate of the topic at rate 1.
  static SamplingPlan complete(const Qrels& qrels, const std::string& topic);
  void validate() const;
};

/// Stratified inferred AP. Reduces exactly to average_precision when every
/// pool member is judged at rate 1.
double inferred_ap(std::span<const CandidateId> ranked, const Qrels& qrels,
                   const std::string& topic, const SamplingPlan& plan);

double mean_score(std::span<const double> scores);

/// Flat mean over all topics, and mean of per-set means.
struct SetMeans {
  double flat = 0.0;
  double mean_of_sets = 0.0;
  std::map<std::string, double> per_set;
  std::map<std::string, std::size_t> per_set_count;
};

SetMeans set_means(const std::map<std::string, double>& topic_scores,
                   const std::map<std::string, std::string>& topic_to_set);

struct PairComparison {
  std::string a;
  std::string b;
  std::size_t wins = 0;
  std::size_t ties = 0;
  std::size_t losses = 0;
  double win_rate = 0.0;
  double mean_difference = 0.0;
  double p_value = 1.0;
  bool exact = true;
};

struct ComparisonReport {
  std::string metric;
  std::vector<std::string> runs;
  std::vector<std::string> topics;
  /// scores[r][t] for run r and topic t.
  std::vector<std::vector<double>> scores;
  std::vector<double> means;
  std::vector<PairComparison> pairs;

  std::string to_tsv() const;
  nlohmann::json to_json() const;
};

/// Two-sided paired randomization test on the mean difference. Enumerates all
/// sign flips for up to `exact_limit` topics, otherwise draws `samples` random
/// flips from `seed`.
double paired_randomization_p(std::span<const double> a, std::span<const double> b,
                              std::size_t exact_limit = 20, std::size_t samples = 100000,
                              std::uint64_t seed = 7, bool* exact = nullptr);

struct NamedRun {
  std::string name;
  RunFile run;
};

/// Scores each run on the shared topics (present in the qrels and in every
/// run), then compares every pair. Uses exact AP unless `sampling` supplies a
/// plan per topic, in which case inferred AP is reported.
ComparisonReport compare_runs(std::span<const NamedRun> runs, const Qrels& qrels,
                              const std::map<std::string, SamplingPlan>* sampling = nullptr);

/// Comparison over precomputed per-topic scores (rows aligned by topic).
ComparisonReport compare_scores(std::vector<std::string> names, std::vector<std::string> topics,
                                std::vector<std::vector<double>> scores, std::string metric);

}  // namespace avs
