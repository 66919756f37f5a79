// Independent oracles and trace checkers shared by the unit and acceptance
// suites. Nothing here calls the code paths it is used to check.
#pragma once

#include <algorithm>
#include <cstdio>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "avs/corpus.hpp"
#include "avs/orchestrator.hpp"

namespace avs::testing {

/// Scores every non-excluded row, sorts the whole corpus and truncates.
inline std::vector<ScoredCandidate> brute_force_top_k(const CorpusIndex& index,
                                                      std::span<const float> query,
                                                      const std::unordered_set<CandidateId>& excluded,
                                                      std::size_t limit) {
  std::vector<ScoredCandidate> all;
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (excluded.contains(index.id(r))) continue;
    all.push_back({index.id(r), dot(query, index.vector(r))});
  }
  std::sort(all.begin(), all.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  if (all.size() > limit) all.resize(limit);
  return all;
}

/// AP from the pairwise form: (1/R) sum over relevant i of
/// sum over relevant j ranked at or above i of 1/rank(i).
inline double oracle_ap(const std::vector<bool>& relevant_at, std::size_t total_relevant) {
  if (total_relevant == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < relevant_at.size(); ++i) {
    if (!relevant_at[i]) continue;
    for (std::size_t j = 0; j <= i; ++j) {
      if (relevant_at[j]) sum += 1.0 / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(total_relevant);
}

/// Checks every loop invariant of a finished trace. With `index` set, every
/// examined slice and the padding are also compared against brute-force
/// retrieval. Returns one message per violation.
inline std::vector<std::string> trace_violations(const RunTrace& trace, const Query& original,
                                                 const CorpusIndex* index = nullptr) {
  std::vector<std::string> out;
  auto fail = [&](std::size_t i, const std::string& what) {
    out.push_back(trace.topic + " record " + std::to_string(i) + ": " + what);
  };
  const auto& cfg = trace.config;
  const std::size_t k = cfg.examination_length;
  const std::size_t L = cfg.submission_length;
  const auto& recs = trace.iterations;

  if (recs.size() > cfg.max_iterations) fail(recs.size(), "more than T iterations");
  if (trace.memory.size() != recs.size()) fail(recs.size(), "memory size != record count");
  if (trace.termination == TerminationReason::exhausted_T && recs.size() != cfg.max_iterations) {
    fail(recs.size(), "exhausted_T before T iterations");
  }

  std::unordered_set<CandidateId> examined;
  std::vector<CandidateId> matched_all;
  std::unordered_set<CandidateId> unmatched_all;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    const bool last = i + 1 == recs.size();
    if (r.iteration != i) fail(i, "iteration index out of sequence");
    if (i == 0 && !(r.window == ExaminationWindow{0, k})) fail(i, "first window is not [0,k)");
    if (i == 0 && !(r.query == original)) fail(i, "first query is not the original");

    std::vector<CandidateId> m, u;
    for (const auto& v : r.verdicts) {
      if (!examined.insert(v.candidate).second) fail(i, "judged twice: " + v.candidate);
      (v.matched ? m : u).push_back(v.candidate);
    }
    if (m != r.matched || u != r.unmatched) fail(i, "matched/unmatched do not partition the slice");
    if (r.verdicts.empty() || r.verdicts.size() > k) fail(i, "slice size outside [1,k]");
    if (r.summary.examined != r.verdicts.size() || r.summary.matched != m.size() ||
        r.summary.unmatched != u.size()) {
      fail(i, "summary disagrees with verdicts");
    }
    if (!r.verdicts.empty() &&
        r.precision != static_cast<double>(m.size()) / static_cast<double>(r.verdicts.size())) {
      fail(i, "precision != matched/examined");
    }
    if (index) {
      std::unordered_set<CandidateId> before = examined;
      for (const auto& v : r.verdicts) before.erase(v.candidate);
      auto expect = brute_force_top_k(*index, normalized(r.query.embedding), before, k);
      bool same = expect.size() == r.verdicts.size();
      for (std::size_t j = 0; same && j < expect.size(); ++j) {
        same = expect[j].id == r.verdicts[j].candidate;
      }
      if (!same) fail(i, "examined slice is not the head of the re-retrieved ranking");
    }
    if (i < trace.memory.size()) {
      const auto& e = trace.memory.entries()[i];
      if (e.iteration != r.iteration || !(e.query == r.query) || e.precision != r.precision ||
          !(e.summary == r.summary) || !(e.window == r.window)) {
        fail(i, "memory entry differs from record");
      }
    }
    matched_all.insert(matched_all.end(), m.begin(), m.end());
    unmatched_all.insert(u.begin(), u.end());

    if (matched_all.size() >= L) {
      if (!last) fail(i, "loop continued after |y| >= L");
      if (trace.termination != TerminationReason::reached_L) fail(i, "|y| >= L without reached_L");
      if (r.action) fail(i, "decision taken after |y| >= L");
    } else if (!last || trace.termination != TerminationReason::agent_failure) {
      if (!r.action) fail(i, "missing action");
    }
    if (!last && r.action) {
      const auto& n = recs[i + 1];
      if (r.action->kind == ActionKind::explore) {
        if (r.reformulation_fallback) fail(i, "explore recorded with fallback flag");
        if (!(n.window == ExaminationWindow{0, k})) fail(i, "explore did not reset the window");
        if (n.query.text == r.query.text) fail(i, "explore kept the query");
        if (!r.reformulation || !(*r.reformulation == n.query)) fail(i, "reformulation not used");
      } else {
        if (n.window.start != r.window.start + k || n.window.end != r.window.end + k) {
          fail(i, "exploit did not advance the window by k");
        }
        if (!(n.query == r.query)) fail(i, "exploit changed the query");
      }
    }
  }
  if (trace.termination == TerminationReason::reached_L && matched_all.size() < L) {
    fail(recs.size(), "reached_L with fewer than L matched");
  }

  const auto& sub = trace.submission.entries();
  if (sub.size() > L) fail(recs.size(), "submission longer than L");
  std::size_t expect_matched = std::min(L, matched_all.size());
  std::set<CandidateId> seen;
  std::vector<CandidateId> padding;
  for (std::size_t j = 0; j < sub.size(); ++j) {
    if (!seen.insert(sub[j].id).second) fail(recs.size(), "duplicate submission id");
    if (j < expect_matched) {
      if (sub[j].provenance != Provenance::matched || sub[j].id != matched_all[j]) {
        fail(recs.size(), "matched prefix differs from judged matches at " + std::to_string(j));
      }
    } else {
      if (sub[j].provenance != Provenance::padding) fail(recs.size(), "matched entry after padding");
      if (examined.contains(sub[j].id)) fail(recs.size(), "padding reuses an examined candidate");
      padding.push_back(sub[j].id);
    }
    if (sub[j].provenance == Provenance::matched && unmatched_all.contains(sub[j].id)) {
      fail(recs.size(), "judged-unmatched id in matched portion");
    }
  }
  if (index && trace.termination != TerminationReason::agent_failure) {
    std::size_t available = index->size() - examined.size();
    std::size_t want = std::min(L, expect_matched + available);
    if (sub.size() != want) fail(recs.size(), "submission not filled to L");
    if (!recs.empty() && expect_matched < L) {
      const Query& last_query = recs.back().reformulation ? *recs.back().reformulation
                                                          : recs.back().query;
      auto expect = brute_force_top_k(*index, normalized(last_query.embedding), examined,
                                      L - expect_matched);
      bool same = expect.size() == padding.size();
      for (std::size_t j = 0; same && j < expect.size(); ++j) same = expect[j].id == padding[j];
      if (!same) fail(recs.size(), "padding is not the top of the final ranking");
    }
  }
  return out;
}

}  // namespace avs::testing
