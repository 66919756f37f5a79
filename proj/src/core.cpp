#include "avs/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "avs/errors.hpp"

namespace avs {

std::string_view to_string(QueryOrigin origin) {
  return origin == QueryOrigin::original ? "original" : "reformulated";
}

QueryOrigin query_origin_from_string(std::string_view s) {
  if (s == "original") return QueryOrigin::original;
  if (s == "reformulated") return QueryOrigin::reformulated;
  throw InputError("unknown query origin '" + std::string(s) + "'");
}

Query Query::original(std::string text, std::vector<float> embedding) {
  Query q{std::move(text), QueryOrigin::original, {}, std::move(embedding)};
  q.validate();
  return q;
}

Query Query::reformulated(std::string text, std::string reasoning,
                          std::vector<float> embedding) {
  Query q{std::move(text), QueryOrigin::reformulated, std::move(reasoning),
          std::move(embedding)};
  q.validate();
  return q;
}

void Query::validate() const {
  if (text.empty()) throw InvariantViolation("query text is empty");
  if (origin == QueryOrigin::original && !reasoning.empty()) {
    throw InvariantViolation("original query carries reformulation reasoning");
  }
}

RankedList::RankedList(std::vector<ScoredCandidate> entries) : entries_(std::move(entries)) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!seen.insert(entries_[i].id).second) {
      throw InvariantViolation("duplicate candidate in ranked list: " + entries_[i].id);
    }
    if (i > 0 && !ranks_before(entries_[i - 1], entries_[i])) {
      throw InvariantViolation("ranked list out of order at position " + std::to_string(i));
    }
  }
}

RankedList RankedList::from_unsorted(std::vector<ScoredCandidate> entries) {
  std::sort(entries.begin(), entries.end(), ranks_before);
  return RankedList(std::move(entries));
}

std::span<const ScoredCandidate> RankedList::head(std::size_t n) const {
  return std::span<const ScoredCandidate>(entries_).first(std::min(n, entries_.size()));
}

void EvalSummary::validate() const {
  if (examined < 1) throw InvariantViolation("evaluation summary with nothing examined");
  if (matched + unmatched != examined) {
    throw InvariantViolation("matched + unmatched != examined");
  }
}

double precision_of(const EvalSummary& summary) {
  summary.validate();
  return static_cast<double>(summary.matched) / static_cast<double>(summary.examined);
}

ExaminationWindow advance_window(ExaminationWindow window, std::size_t k) {
  return {window.start + k, window.end + k};
}

ExaminationWindow reset_window(std::size_t k) {
  if (k < 1) throw InvariantViolation("examination length must be >= 1");
  return {0, k};
}

void MemoryBank::append(MemoryEntry entry) {
  if (!entries_.empty() && entry.iteration <= entries_.back().iteration) {
    throw InvariantViolation("memory iteration " + std::to_string(entry.iteration) +
                             " does not follow " + std::to_string(entries_.back().iteration));
  }
  if (std::abs(entry.precision - precision_of(entry.summary)) > 1e-12) {
    throw InvariantViolation("memory precision disagrees with its summary");
  }
  if (entry.window.end <= entry.window.start) {
    throw InvariantViolation("memory entry with empty window");
  }
  entries_.push_back(std::move(entry));
}

MemoryBank update_memory(MemoryBank memory, MemoryEntry entry) {
  memory.append(std::move(entry));
  return memory;
}

std::string_view to_string(ActionKind kind) {
  return kind == ActionKind::exploit ? "exploit" : "explore";
}

ActionKind action_kind_from_string(std::string_view s) {
  if (s == "exploit") return ActionKind::exploit;
  if (s == "explore") return ActionKind::explore;
  throw InputError("unknown action '" + std::string(s) + "'");
}

std::string_view to_string(Provenance p) {
  return p == Provenance::matched ? "matched" : "padding";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "matched") return Provenance::matched;
  if (s == "padding") return Provenance::padding;
  throw InputError("unknown provenance '" + std::string(s) + "'");
}

SubmissionList::SubmissionList(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ < 1) throw InvariantViolation("submission capacity must be >= 1");
}

std::size_t SubmissionList::matched_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(),
                    [](const SubmissionEntry& e) { return e.provenance == Provenance::matched; }));
}

std::size_t SubmissionList::append(std::span<const CandidateId> ids, Provenance provenance) {
  if (provenance == Provenance::matched && !entries_.empty() &&
      entries_.back().provenance == Provenance::padding) {
    throw InvariantViolation("matched entry appended after padding");
  }
  for (const auto& id : ids) {
    if (ids_.contains(id)) throw InvariantViolation("duplicate submission id: " + id);
  }
  std::size_t taken = 0;
  for (const auto& id : ids) {
    if (full()) break;
    if (!ids_.insert(id).second) throw InvariantViolation("duplicate submission id: " + id);
    entries_.push_back({id, provenance});
    ++taken;
  }
  return taken;
}

SubmissionList append_submission(SubmissionList submission,
                                 std::span<const CandidateId> matched) {
  submission.append(matched, Provenance::matched);
  return submission;
}

void EngineConfig::validate() const {
  if (max_iterations < 1) throw InvariantViolation("T must be >= 1");
  if (examination_length < 1) throw InvariantViolation("k must be >= 1");
  if (submission_length < 1) throw InvariantViolation("L must be >= 1");
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const Query& q) {
  nlohmann::json j{{"text", q.text}, {"origin", to_string(q.origin)}, {"reasoning", q.reasoning}};
  if (!q.embedding.empty()) j["embedding"] = q.embedding;
  return j;
}

Query query_from_json(const nlohmann::json& j) {
  Query q;
  q.text = j.at("text").get<std::string>();
  q.origin = query_origin_from_string(j.at("origin").get<std::string>());
  q.reasoning = j.value("reasoning", std::string{});
  if (j.contains("embedding")) q.embedding = j.at("embedding").get<std::vector<float>>();
  q.validate();
  return q;
}

nlohmann::json to_json(const MemoryEntry& e) {
  return {{"iteration", e.iteration},
          {"query", to_json(e.query)},
          {"precision", e.precision},
          {"examined", e.summary.examined},
          {"matched", e.summary.matched},
          {"unmatched", e.summary.unmatched},
          {"window", {e.window.start, e.window.end}}};
}

MemoryEntry memory_entry_from_json(const nlohmann::json& j) {
  MemoryEntry e;
  e.iteration = j.at("iteration").get<std::size_t>();
  e.query = query_from_json(j.at("query"));
  e.precision = j.at("precision").get<double>();
  e.summary = {j.at("examined").get<std::size_t>(), j.at("matched").get<std::size_t>(),
               j.at("unmatched").get<std::size_t>()};
  const auto& w = j.at("window");
  e.window = {w.at(0).get<std::size_t>(), w.at(1).get<std::size_t>()};
  return e;
}

nlohmann::json to_json(const MemoryBank& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : m.entries()) arr.push_back(to_json(e));
  return {{"memory", arr}};
}

MemoryBank memory_bank_from_json(const nlohmann::json& j) {
  MemoryBank m;
  for (const auto& e : j.at("memory")) m.append(memory_entry_from_json(e));
  return m;
}

std::string escape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i == s.size()) throw InputError("dangling escape");
    switch (s[i]) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default: throw InputError(std::string("unknown escape \\") + s[i]);
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

namespace {

std::string format_embedding(const std::vector<float>& v) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v[i]);
    out.append(buf, ptr);
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, std::size_t line) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw FormatError("memory", line, "bad number '" + std::string(s) + "'");
  }
  return value;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    auto next = line.find(sep, pos);
    fields.push_back(line.substr(pos, next == std::string_view::npos ? next : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return fields;
}

}  // namespace

// iteration \t examined \t matched \t unmatched \t precision \t start \t end
//   \t origin \t text \t reasoning \t embedding
std::string memory_bank_to_text(const MemoryBank& m) {
  std::ostringstream out;
  for (const auto& e : m.entries()) {
    out << e.iteration << '\t' << e.summary.examined << '\t' << e.summary.matched << '\t'
        << e.summary.unmatched << '\t' << format_double(e.precision) << '\t' << e.window.start
        << '\t' << e.window.end << '\t' << to_string(e.query.origin) << '\t'
        << escape_field(e.query.text) << '\t' << escape_field(e.query.reasoning) << '\t'
        << format_embedding(e.query.embedding) << '\n';
  }
  return out.str();
}

MemoryBank memory_bank_from_text(std::string_view text) {
  MemoryBank m;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != 11) throw FormatError("memory", line_no, "expected 11 fields");
    MemoryEntry e;
    e.iteration = parse_number<std::size_t>(f[0], line_no);
    e.summary = {parse_number<std::size_t>(f[1], line_no), parse_number<std::size_t>(f[2], line_no),
                 parse_number<std::size_t>(f[3], line_no)};
    e.precision = parse_number<double>(f[4], line_no);
    e.window = {parse_number<std::size_t>(f[5], line_no), parse_number<std::size_t>(f[6], line_no)};
    e.query.origin = query_origin_from_string(f[7]);
    e.query.text = unescape_field(f[8]);
    e.query.reasoning = unescape_field(f[9]);
    if (!f[10].empty()) {
      for (auto v : split(f[10], ',')) e.query.embedding.push_back(parse_number<float>(v, line_no));
    }
    try {
      e.query.validate();
      m.append(std::move(e));
    } catch (const InvariantViolation& err) {
      throw FormatError("memory", line_no, err.what());
    }
  }
  return m;
}

}  // namespace avs
