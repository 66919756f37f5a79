#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "avs/core.hpp"
#include "avs/corpus.hpp"

namespace avs {

// The four agent roles are independent interfaces so that any one of them can
// be swapped or disabled on its own. Implementations must be safe to call
// concurrently from several topic runs.

struct Verdict {
  CandidateId candidate;
  bool matched = false;
  std::optional<std::string> reasoning;

  bool operator==(const Verdict&) const = default;
};

/// Partition of one examined slice. Both lists keep ranked order.
struct Judgment {
  std::vector<CandidateId> matched;
  std::vector<CandidateId> unmatched;
  std::vector<Verdict> verdicts;

  EvalSummary summary() const { return {verdicts.size(), matched.size(), unmatched.size()}; }
};

/// Builds a Judgment from one verdict per slice entry, in slice order. Throws
/// InvariantViolation if the verdicts do not line up with the slice.
Judgment assemble_judgment(std::span<const ScoredCandidate> slice, std::vector<Verdict> verdicts);

class RetrievalAgent {
 public:
  virtual ~RetrievalAgent() = default;
  /// Top-`limit` non-excluded candidates for `query`, best first.
  virtual RankedList retrieve(const Query& query, const ExclusionSet& excluded,
                              std::size_t limit) const = 0;
};

class ReasoningAgent {
 public:
  virtual ~ReasoningAgent() = default;
  virtual Judgment judge(const Query& query, std::span<const ScoredCandidate> slice) const = 0;
};

/// Everything a reformulator may consult. `matched` and `unmatched` hold every
/// candidate judged so far in the topic, oldest first.
struct ReformulationRequest {
  const Query& original;
  const Query& previous;
  const MemoryBank& memory;
  std::string_view decision_reasoning;
  std::span<const CandidateId> matched;
  std::span<const CandidateId> unmatched;
};

class ReformulationAgent {
 public:
  virtual ~ReformulationAgent() = default;
  /// Returns a reformulated query that differs from `request.previous`, or
  /// throws DuplicateReformulation.
  virtual Query reformulate(const ReformulationRequest& request) const = 0;
};

class OrchestrationAgent {
 public:
  virtual ~OrchestrationAgent() = default;
  virtual Action decide(const EvalSummary& summary, const Query& current) const = 0;
};

// ---------------------------------------------------------------------------
// Retrieval

class QueryEncoder {
 public:
  virtual ~QueryEncoder() = default;
  virtual std::vector<float> encode(const Query& query) const = 0;
};

/// Exact cosine search over a CorpusIndex. Queries that carry an embedding use
/// it directly; text-only queries go through the encoder.
class EmbeddingRetrievalAgent final : public RetrievalAgent {
 public:
  EmbeddingRetrievalAgent(std::shared_ptr<const CorpusIndex> index,
                          std::shared_ptr<const QueryEncoder> encoder = nullptr,
                          std::size_t workers = 1);

  RankedList retrieve(const Query& query, const ExclusionSet& excluded,
                      std::size_t limit) const override;

  const CorpusIndex& index() const { return *index_; }

 private:
  std::shared_ptr<const CorpusIndex> index_;
  std::shared_ptr<const QueryEncoder> encoder_;
  std::size_t workers_;
};

// ---------------------------------------------------------------------------
// Simulated reasoning

using RelevanceSet = std::unordered_set<CandidateId>;

/// Judges exactly by ground truth.
class OracleReasoningAgent final : public ReasoningAgent {
 public:
  explicit OracleReasoningAgent(std::shared_ptr<const RelevanceSet> relevant);
  Judgment judge(const Query& query, std::span<const ScoredCandidate> slice) const override;

 private:
  std::shared_ptr<const RelevanceSet> relevant_;
};

/// Ground truth passed through independent Bernoulli noise: a relevant
/// candidate is matched with probability `tpr`, an irrelevant one with `fpr`.
/// Each draw is a hash of (seed, candidate id), so verdicts do not depend on
/// call order.
class NoisyReasoningAgent final : public ReasoningAgent {
 public:
  NoisyReasoningAgent(std::shared_ptr<const RelevanceSet> relevant, double tpr, double fpr,
                      std::uint64_t seed);
  Judgment judge(const Query& query, std::span<const ScoredCandidate> slice) const override;
  bool verdict_for(const CandidateId& id) const;

 private:
  std::shared_ptr<const RelevanceSet> relevant_;
  double tpr_;
  double fpr_;
  std::uint64_t seed_;
};

/// Accepts every candidate. Stands in for "no reasoning agent".
class AcceptAllReasoningAgent final : public ReasoningAgent {
 public:
  Judgment judge(const Query& query, std::span<const ScoredCandidate> slice) const override;
};

// ---------------------------------------------------------------------------
// Simulated orchestration

/// Exploit while precision >= threshold, explore otherwise. A threshold of 0
/// never explores.
class ThresholdOrchestrator final : public OrchestrationAgent {
 public:
  explicit ThresholdOrchestrator(double threshold);
  Action decide(const EvalSummary& summary, const Query& current) const override;

 private:
  double threshold_;
};

class AlwaysExploreOrchestrator final : public OrchestrationAgent {
 public:
  Action decide(const EvalSummary& summary, const Query& current) const override;
};

// ---------------------------------------------------------------------------
// Simulated reformulation

/// Moves the query vector a fraction `alpha` of the way toward the centroid of
/// the matched candidates, then renormalizes. With nothing matched yet it
/// steps away from the centroid of the unmatched ones instead.
class CentroidNudgeReformulator final : public ReformulationAgent {
 public:
  CentroidNudgeReformulator(std::shared_ptr<const CorpusIndex> index, double alpha);
  Query reformulate(const ReformulationRequest& request) const override;

 private:
  std::vector<double> centroid(std::span<const CandidateId> ids) const;

  std::shared_ptr<const CorpusIndex> index_;
  double alpha_;
};

}  // namespace avs
