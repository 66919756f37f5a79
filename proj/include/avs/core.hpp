#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"

namespace avs {

using CandidateId = std::string;

enum class QueryOrigin { original, reformulated };

std::string_view to_string(QueryOrigin origin);
QueryOrigin query_origin_from_string(std::string_view s);

/// A search query. `embedding` is optional: text-only queries are encoded by
/// the retrieval agent, simulated queries carry their vector directly.
struct Query {
  std::string text;
  QueryOrigin origin = QueryOrigin::original;
  std::string reasoning;
  std::vector<float> embedding;

  static Query original(std::string text, std::vector<float> embedding = {});
  static Query reformulated(std::string text, std::string reasoning,
                            std::vector<float> embedding = {});

  /// Throws InvariantViolation if text is empty or an original query carries
  /// reasoning.
  void validate() const;

  bool operator==(const Query&) const = default;
};

struct ScoredCandidate {
  CandidateId id;
  double score = 0.0;

  bool operator==(const ScoredCandidate&) const = default;
};

/// Strict ranking order: descending score, ties by ascending id.
inline bool ranks_before(const ScoredCandidate& a, const ScoredCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

/// Ordered retrieval output. Scores are non-increasing, ids unique, ties broken
/// by ascending id.
class RankedList {
 public:
  RankedList() = default;

  /// Takes entries already in ranking order; throws InvariantViolation otherwise.
  explicit RankedList(std::vector<ScoredCandidate> entries);

  /// Sorts arbitrary scored candidates into ranking order.
  static RankedList from_unsorted(std::vector<ScoredCandidate> entries);

  const std::vector<ScoredCandidate>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const ScoredCandidate& operator[](std::size_t i) const { return entries_[i]; }

  /// The first min(n, size) entries.
  std::span<const ScoredCandidate> head(std::size_t n) const;

  bool operator==(const RankedList&) const = default;

 private:
  std::vector<ScoredCandidate> entries_;
};

struct EvalSummary {
  std::size_t examined = 0;
  std::size_t matched = 0;
  std::size_t unmatched = 0;

  void validate() const;
  bool operator==(const EvalSummary&) const = default;
};

/// Fraction of examined candidates that matched. Divides by the actual
/// examined count, which is smaller than k only for the last slice of an
/// exhausted corpus.
double precision_of(const EvalSummary& summary);

/// Half-open span [start, end) of a query's ranking that has been examined.
struct ExaminationWindow {
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const ExaminationWindow&) const = default;
};

ExaminationWindow advance_window(ExaminationWindow window, std::size_t k);
ExaminationWindow reset_window(std::size_t k);

struct MemoryEntry {
  std::size_t iteration = 0;
  Query query;
  double precision = 0.0;
  EvalSummary summary;
  ExaminationWindow window;

  bool operator==(const MemoryEntry&) const = default;
};

/// Append-only, iteration-monotone history of query performance.
class MemoryBank {
 public:
  const std::vector<MemoryEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  /// Throws InvariantViolation on a non-increasing iteration or an entry whose
  /// precision disagrees with its summary.
  void append(MemoryEntry entry);

  bool operator==(const MemoryBank&) const = default;

 private:
  std::vector<MemoryEntry> entries_;
};

MemoryBank update_memory(MemoryBank memory, MemoryEntry entry);

enum class ActionKind { exploit, explore };

std::string_view to_string(ActionKind kind);
ActionKind action_kind_from_string(std::string_view s);

struct Action {
  ActionKind kind = ActionKind::exploit;
  std::string reasoning;

  bool operator==(const Action&) const = default;
};

enum class Provenance { matched, padding };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct SubmissionEntry {
  CandidateId id;
  Provenance provenance = Provenance::matched;

  bool operator==(const SubmissionEntry&) const = default;
};

/// Accumulated answer list, capped at `capacity` (L). Matched entries always
/// precede padding entries; ids never repeat.
class SubmissionList {
 public:
  explicit SubmissionList(std::size_t capacity);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool full() const noexcept { return entries_.size() >= capacity_; }
  const std::vector<SubmissionEntry>& entries() const noexcept { return entries_; }
  bool contains(const CandidateId& id) const { return ids_.contains(id); }
  std::size_t matched_count() const noexcept;

  /// Appends in order until capacity is reached; returns how many were taken.
  /// Throws InvariantViolation on a duplicate id or on matched-after-padding.
  std::size_t append(std::span<const CandidateId> ids, Provenance provenance);

  bool operator==(const SubmissionList& other) const {
    return capacity_ == other.capacity_ && entries_ == other.entries_;
  }

 private:
  std::size_t capacity_;
  std::vector<SubmissionEntry> entries_;
  std::unordered_set<CandidateId> ids_;
};

SubmissionList append_submission(SubmissionList submission,
                                 std::span<const CandidateId> matched);

/// Loop bounds: T iterations, k candidates examined per iteration, L entries
/// in the submission.
struct EngineConfig {
  std::size_t max_iterations = 60;
  std::size_t examination_length = 50;
  std::size_t submission_length = 1000;

  void validate() const;
  bool operator==(const EngineConfig&) const = default;
};

// Serialization. JSON uses stable field names; the text form is one
// tab-separated record per line with backslash escapes.

nlohmann::json to_json(const Query& q);
Query query_from_json(const nlohmann::json& j);

nlohmann::json to_json(const MemoryEntry& e);
MemoryEntry memory_entry_from_json(const nlohmann::json& j);

nlohmann::json to_json(const MemoryBank& m);
MemoryBank memory_bank_from_json(const nlohmann::json& j);

std::string memory_bank_to_text(const MemoryBank& m);
MemoryBank memory_bank_from_text(std::string_view text);

/// Backslash-escapes tab, newline, carriage return and backslash.
std::string escape_field(std::string_view s);
std::string unescape_field(std::string_view s);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace avs
