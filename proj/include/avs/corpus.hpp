#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "avs/core.hpp"

namespace avs {

/// Dense unit-normalized embeddings for every candidate in a collection,
/// stored row-major.
class CorpusIndex {
 public:
  CorpusIndex() = default;

  /// `vectors` is row-major, ids.size() * dimension floats. Rows are
  /// normalized to unit length when `normalize` is set; otherwise each row must
  /// already have norm 1 +- 1e-6.
  CorpusIndex(std::vector<CandidateId> ids, std::vector<float> vectors, std::size_t dimension,
              bool normalize = true);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dimension() const noexcept { return dimension_; }
  const std::vector<CandidateId>& ids() const noexcept { return ids_; }
  const CandidateId& id(std::size_t row) const { return ids_[row]; }
  std::span<const float> vector(std::size_t row) const {
    return {vectors_.data() + row * dimension_, dimension_};
  }
  std::optional<std::size_t> row_of(const CandidateId& id) const;
  bool contains(const CandidateId& id) const { return rows_.contains(id); }

 private:
  std::vector<CandidateId> ids_;
  std::vector<float> vectors_;
  std::size_t dimension_ = 0;
  std::unordered_map<CandidateId, std::size_t> rows_;
};

// Binary matrix layout, little-endian:
//   magic "AVSM" | u32 version (1) | u64 count | u32 dimension | count*dimension f32
// The id list is a separate UTF-8 file with one id per line in row order.
inline constexpr char kMatrixMagic[4] = {'A', 'V', 'S', 'M'};
inline constexpr std::uint32_t kMatrixVersion = 1;

CorpusIndex load_corpus(const std::filesystem::path& matrix, const std::filesystem::path& id_list,
                        bool normalize = true);
void save_corpus(const CorpusIndex& index, const std::filesystem::path& matrix,
                 const std::filesystem::path& id_list);

/// Loads a directory of `<id>.vec` files, each holding whitespace-separated
/// floats. Rows are ordered by id.
CorpusIndex load_corpus_directory(const std::filesystem::path& dir, bool normalize = true);

/// Candidates already examined by the reasoning agent. Only grows.
class ExclusionSet {
 public:
  bool contains(const CandidateId& id) const { return ids_.contains(id); }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::unordered_set<CandidateId>& ids() const noexcept { return ids_; }

  /// Throws InvariantViolation if any id is already excluded.
  void add(std::span<const CandidateId> ids);

 private:
  std::unordered_set<CandidateId> ids_;
};

ExclusionSet update_search_space(ExclusionSet space, std::span<const ScoredCandidate> examined);

/// Exact top-`limit` cosine search over the non-excluded rows. `workers` > 1
/// partitions the scan; the merged result is identical to the sequential one.
RankedList top_k(const CorpusIndex& index, std::span<const float> query,
                 const ExclusionSet& excluded, std::size_t limit, std::size_t workers = 1);

/// Returns a unit-length copy; throws InvariantViolation on a zero vector.
std::vector<float> normalized(std::span<const float> v);

double dot(std::span<const float> a, std::span<const float> b);

}  // namespace avs
