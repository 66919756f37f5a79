#include "avs/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>
#include <thread>

#include "avs/errors.hpp"

namespace avs {

namespace fs = std::filesystem;

double dot(std::span<const float> a, std::span<const float> b) {
  // Eight fixed float lanes folded in double; the summation order depends only
  // on the length, so every caller sees the same value for the same pair.
  float lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) lane[j] += a[i + j] * b[i + j];
  }
  for (; i < n; ++i) lane[i % 8] += a[i] * b[i];
  double acc = 0.0;
  for (float x : lane) acc += x;
  return acc;
}

std::vector<float> normalized(std::span<const float> v) {
  double norm = std::sqrt(dot(v, v));
  if (norm == 0.0 || !std::isfinite(norm)) throw InvariantViolation("cannot normalize zero vector");
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

CorpusIndex::CorpusIndex(std::vector<CandidateId> ids, std::vector<float> vectors,
                         std::size_t dimension, bool normalize)
    : ids_(std::move(ids)), vectors_(std::move(vectors)), dimension_(dimension) {
  if (dimension_ < 1) throw InvariantViolation("corpus dimension must be >= 1");
  if (vectors_.size() != ids_.size() * dimension_) {
    throw InvariantViolation("corpus has " + std::to_string(ids_.size()) + " ids but " +
                             std::to_string(vectors_.size()) + " floats");
  }
  rows_.reserve(ids_.size());
  for (std::size_t r = 0; r < ids_.size(); ++r) {
    if (ids_[r].empty()) throw InvariantViolation("empty candidate id at row " + std::to_string(r));
    if (!rows_.emplace(ids_[r], r).second) {
      throw InvariantViolation("duplicate candidate id " + ids_[r]);
    }
    std::span<float> row(vectors_.data() + r * dimension_, dimension_);
    double norm = std::sqrt(dot(row, row));
    if (normalize) {
      if (norm == 0.0) throw InvariantViolation("zero vector for candidate " + ids_[r]);
      for (auto& x : row) x = static_cast<float>(x / norm);
    } else if (std::abs(norm - 1.0) > 1e-6) {
      throw InvariantViolation("vector for candidate " + ids_[r] + " is not unit length");
    }
  }
}

std::optional<std::size_t> CorpusIndex::row_of(const CandidateId& id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

namespace {

static_assert(std::endian::native == std::endian::little, "matrix format is little-endian");

template <typename T>
void read_pod(std::istream& in, T& value, const fs::path& path) {
  if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) {
    throw InputError(path.string() + ": truncated header");
  }
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

std::vector<CandidateId> read_id_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open id list " + path.string());
  std::vector<CandidateId> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw FormatError(path.string(), line_no, "empty candidate id");
    ids.push_back(std::move(line));
  }
  return ids;
}

}  // namespace

CorpusIndex load_corpus(const fs::path& matrix, const fs::path& id_list, bool normalize) {
  std::ifstream in(matrix, std::ios::binary);
  if (!in) throw InputError("cannot open corpus matrix " + matrix.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMatrixMagic)) {
    throw InputError(matrix.string() + ": bad magic");
  }
  std::uint32_t version = 0, dimension = 0;
  std::uint64_t count = 0;
  read_pod(in, version, matrix);
  if (version != kMatrixVersion) {
    throw InputError(matrix.string() + ": unsupported version " + std::to_string(version));
  }
  read_pod(in, count, matrix);
  read_pod(in, dimension, matrix);
  std::vector<float> data(count * dimension);
  if (!in.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(float)))) {
    throw InputError(matrix.string() + ": truncated matrix body");
  }
  auto ids = read_id_list(id_list);
  if (ids.size() != count) {
    throw InputError(id_list.string() + ": " + std::to_string(ids.size()) + " ids for " +
                     std::to_string(count) + " rows");
  }
  try {
    return CorpusIndex(std::move(ids), std::move(data), dimension, normalize);
  } catch (const InvariantViolation& e) {
    throw InputError(matrix.string() + ": " + e.what());
  }
}

void save_corpus(const CorpusIndex& index, const fs::path& matrix, const fs::path& id_list) {
  std::ofstream out(matrix, std::ios::binary);
  if (!out) throw InputError("cannot write " + matrix.string());
  out.write(kMatrixMagic, 4);
  write_pod(out, kMatrixVersion);
  write_pod(out, static_cast<std::uint64_t>(index.size()));
  write_pod(out, static_cast<std::uint32_t>(index.dimension()));
  for (std::size_t r = 0; r < index.size(); ++r) {
    auto v = index.vector(r);
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  std::ofstream ids(id_list);
  if (!ids) throw InputError("cannot write " + id_list.string());
  for (const auto& id : index.ids()) ids << id << '\n';
}

CorpusIndex load_corpus_directory(const fs::path& dir, bool normalize) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".vec") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.stem() < b.stem(); });
  std::vector<CandidateId> ids;
  std::vector<float> data;
  std::size_t dimension = 0;
  for (const auto& file : files) {
    std::ifstream in(file);
    std::vector<float> row;
    float x;
    while (in >> x) row.push_back(x);
    if (!in.eof()) throw InputError(file.string() + ": non-numeric content");
    if (row.empty()) throw InputError(file.string() + ": empty vector");
    if (dimension == 0) dimension = row.size();
    if (row.size() != dimension) throw InputError(file.string() + ": dimension mismatch");
    ids.push_back(file.stem().string());
    data.insert(data.end(), row.begin(), row.end());
  }
  if (ids.empty()) throw InputError(dir.string() + ": no .vec files");
  return CorpusIndex(std::move(ids), std::move(data), dimension, normalize);
}

void ExclusionSet::add(std::span<const CandidateId> ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids_.contains(ids[i]) || std::find(ids.begin(), ids.begin() + i, ids[i]) != ids.begin() + i) {
      throw InvariantViolation("candidate examined twice: " + ids[i]);
    }
  }
  ids_.insert(ids.begin(), ids.end());
}

ExclusionSet update_search_space(ExclusionSet space, std::span<const ScoredCandidate> examined) {
  std::vector<CandidateId> ids;
  ids.reserve(examined.size());
  for (const auto& c : examined) ids.push_back(c.id);
  space.add(ids);
  return space;
}

namespace {

struct Hit {
  double score;
  std::size_t row;
};

// Scans rows [begin, end) and keeps the best `limit` hits.
std::vector<Hit> scan(const CorpusIndex& index, std::span<const float> query,
                      const std::vector<bool>& skip, std::size_t begin, std::size_t end,
                      std::size_t limit) {
  // Same order as ranks_before without materializing candidates.
  auto worse = [&](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return index.id(a.row) < index.id(b.row);
  };
  // Max-heap under `worse` keeps the weakest retained hit on top.
  std::priority_queue<Hit, std::vector<Hit>, decltype(worse)> heap(worse);
  for (std::size_t r = begin; r < end; ++r) {
    if (skip[r]) continue;
    Hit h{dot(query, index.vector(r)), r};
    if (heap.size() < limit) {
      heap.push(h);
    } else if (worse(h, heap.top())) {
      heap.pop();
      heap.push(h);
    }
  }
  std::vector<Hit> out;
  out.reserve(heap.size());
  while (!heap.empty()) {
    out.push_back(heap.top());
    heap.pop();
  }
  return out;
}

}  // namespace

RankedList top_k(const CorpusIndex& index, std::span<const float> query,
                 const ExclusionSet& excluded, std::size_t limit, std::size_t workers) {
  if (limit < 1) throw InvariantViolation("retrieval limit must be >= 1");
  if (query.size() != index.dimension()) {
    throw InvariantViolation("query dimension " + std::to_string(query.size()) +
                             " != corpus dimension " + std::to_string(index.dimension()));
  }
  std::vector<bool> skip(index.size(), false);
  for (const auto& id : excluded.ids()) {
    auto row = index.row_of(id);
    if (!row) throw InvariantViolation("excluded id not in corpus: " + id);
    skip[*row] = true;
  }

  workers = std::max<std::size_t>(1, std::min(workers, index.size()));
  std::vector<Hit> hits;
  if (workers == 1) {
    hits = scan(index, query, skip, 0, index.size(), limit);
  } else {
    std::vector<std::vector<Hit>> partial(workers);
    std::vector<std::jthread> threads;
    std::size_t chunk = (index.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      std::size_t begin = std::min(index.size(), w * chunk);
      std::size_t end = std::min(index.size(), begin + chunk);
      threads.emplace_back([&, w, begin, end] {
        partial[w] = scan(index, query, skip, begin, end, limit);
      });
    }
    threads.clear();
    for (auto& p : partial) hits.insert(hits.end(), p.begin(), p.end());
  }

  std::vector<ScoredCandidate> entries;
  entries.reserve(hits.size());
  for (const auto& h : hits) entries.push_back({index.id(h.row), h.score});
  std::sort(entries.begin(), entries.end(), ranks_before);
  if (entries.size() > limit) entries.resize(limit);
  return RankedList(std::move(entries));
}

}  // namespace avs
