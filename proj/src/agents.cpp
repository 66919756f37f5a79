#include "avs/agents.hpp"

#include <cmath>
#include <cstdio>

#include "avs/errors.hpp"
#include "avs/random.hpp"

namespace avs {

Judgment assemble_judgment(std::span<const ScoredCandidate> slice, std::vector<Verdict> verdicts) {
  if (verdicts.size() != slice.size()) {
    throw InvariantViolation("expected one verdict per examined candidate");
  }
  Judgment j;
  for (std::size_t i = 0; i < slice.size(); ++i) {
    if (verdicts[i].candidate != slice[i].id) {
      throw InvariantViolation("verdict order does not match slice at " + std::to_string(i));
    }
    (verdicts[i].matched ? j.matched : j.unmatched).push_back(slice[i].id);
  }
  j.verdicts = std::move(verdicts);
  return j;
}

EmbeddingRetrievalAgent::EmbeddingRetrievalAgent(std::shared_ptr<const CorpusIndex> index,
                                                 std::shared_ptr<const QueryEncoder> encoder,
                                                 std::size_t workers)
    : index_(std::move(index)), encoder_(std::move(encoder)), workers_(workers) {
  if (!index_) throw InvariantViolation("retrieval agent needs a corpus index");
}

RankedList EmbeddingRetrievalAgent::retrieve(const Query& query, const ExclusionSet& excluded,
                                             std::size_t limit) const {
  std::vector<float> vec;
  if (!query.embedding.empty()) {
    vec = normalized(query.embedding);
  } else if (encoder_) {
    vec = normalized(encoder_->encode(query));
  } else {
    throw InvariantViolation("query has no embedding and no encoder is configured");
  }
  return top_k(*index_, vec, excluded, limit, workers_);
}

OracleReasoningAgent::OracleReasoningAgent(std::shared_ptr<const RelevanceSet> relevant)
    : relevant_(std::move(relevant)) {
  if (!relevant_) throw InvariantViolation("oracle needs a relevance set");
}

Judgment OracleReasoningAgent::judge(const Query&, std::span<const ScoredCandidate> slice) const {
  std::vector<Verdict> verdicts;
  verdicts.reserve(slice.size());
  for (const auto& c : slice) verdicts.push_back({c.id, relevant_->contains(c.id), std::nullopt});
  return assemble_judgment(slice, std::move(verdicts));
}

NoisyReasoningAgent::NoisyReasoningAgent(std::shared_ptr<const RelevanceSet> relevant, double tpr,
                                         double fpr, std::uint64_t seed)
    : relevant_(std::move(relevant)), tpr_(tpr), fpr_(fpr), seed_(seed) {
  if (!relevant_) throw InvariantViolation("noisy oracle needs a relevance set");
  if (!(tpr_ >= 0.0 && tpr_ <= 1.0 && fpr_ >= 0.0 && fpr_ <= 1.0)) {
    throw InvariantViolation("noise rates must lie in [0,1]");
  }
}

bool NoisyReasoningAgent::verdict_for(const CandidateId& id) const {
  double u = unit_interval(derive_seed(seed_, fnv1a(id)));
  return u < (relevant_->contains(id) ? tpr_ : fpr_);
}

Judgment NoisyReasoningAgent::judge(const Query&, std::span<const ScoredCandidate> slice) const {
  std::vector<Verdict> verdicts;
  verdicts.reserve(slice.size());
  for (const auto& c : slice) verdicts.push_back({c.id, verdict_for(c.id), std::nullopt});
  return assemble_judgment(slice, std::move(verdicts));
}

Judgment AcceptAllReasoningAgent::judge(const Query&, std::span<const ScoredCandidate> slice) const {
  std::vector<Verdict> verdicts;
  verdicts.reserve(slice.size());
  for (const auto& c : slice) verdicts.push_back({c.id, true, std::nullopt});
  return assemble_judgment(slice, std::move(verdicts));
}

ThresholdOrchestrator::ThresholdOrchestrator(double threshold) : threshold_(threshold) {
  if (!(threshold_ >= 0.0 && threshold_ <= 1.0)) {
    throw InvariantViolation("threshold must lie in [0,1]");
  }
}

Action ThresholdOrchestrator::decide(const EvalSummary& summary, const Query&) const {
  double p = precision_of(summary);
  char buf[160];
  if (p >= threshold_) {
    std::snprintf(buf, sizeof buf, "precision %.3f >= %.3f: keep the current query", p, threshold_);
    return {ActionKind::exploit, buf};
  }
  std::snprintf(buf, sizeof buf, "precision %.3f < %.3f: refine the query", p, threshold_);
  return {ActionKind::explore, buf};
}

Action AlwaysExploreOrchestrator::decide(const EvalSummary& summary, const Query&) const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "precision %.3f: reformulate every iteration",
                precision_of(summary));
  return {ActionKind::explore, buf};
}

CentroidNudgeReformulator::CentroidNudgeReformulator(std::shared_ptr<const CorpusIndex> index,
                                                     double alpha)
    : index_(std::move(index)), alpha_(alpha) {
  if (!index_) throw InvariantViolation("reformulator needs a corpus index");
  if (!(alpha_ >= 0.0 && alpha_ <= 1.0)) throw InvariantViolation("alpha must lie in [0,1]");
}

std::vector<double> CentroidNudgeReformulator::centroid(std::span<const CandidateId> ids) const {
  std::vector<double> c(index_->dimension(), 0.0);
  for (const auto& id : ids) {
    auto row = index_->row_of(id);
    if (!row) throw InvariantViolation("unknown candidate " + id);
    auto v = index_->vector(*row);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += v[i];
  }
  for (auto& x : c) x /= static_cast<double>(ids.size());
  return c;
}

Query CentroidNudgeReformulator::reformulate(const ReformulationRequest& req) const {
  const auto& prev = req.previous.embedding;
  if (prev.size() != index_->dimension()) {
    throw InvariantViolation("previous query has no embedding of corpus dimension");
  }
  std::vector<double> next(prev.begin(), prev.end());
  std::string why;
  if (!req.matched.empty()) {
    auto c = centroid(req.matched);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += alpha_ * (c[i] - next[i]);
    why = "moved toward the centroid of " + std::to_string(req.matched.size()) + " matched";
  } else if (!req.unmatched.empty()) {
    auto c = centroid(req.unmatched);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += alpha_ * (next[i] - c[i]);
    why = "moved away from the centroid of " + std::to_string(req.unmatched.size()) + " unmatched";
  } else {
    throw DuplicateReformulation("no judged candidates to steer by");
  }

  double norm = 0.0;
  for (double x : next) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw DuplicateReformulation("nudge collapsed the query vector");
  std::vector<float> embedding(next.size());
  for (std::size_t i = 0; i < next.size(); ++i) embedding[i] = static_cast<float>(next[i] / norm);
  if (embedding == prev) throw DuplicateReformulation("nudge left the query unchanged");

  char step[48];
  std::snprintf(step, sizeof step, " (alpha %.2f)", alpha_);
  return Query::reformulated(req.original.text + " #r" + std::to_string(req.memory.size()),
                             why + step, std::move(embedding));
}

}  // namespace avs
