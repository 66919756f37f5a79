#include "avs/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "avs/errors.hpp"
#include "avs/random.hpp"

namespace avs {

namespace fs = std::filesystem;

void Qrels::set(const std::string& topic, const CandidateId& candidate, int grade) {
  auto [it, inserted] = grades_[topic].emplace(candidate, grade);
  if (!inserted) throw InputError("duplicate judgment for " + topic + "/" + candidate);
}

Judgment3 Qrels::judgment(const std::string& topic, const CandidateId& candidate) const {
  auto t = grades_.find(topic);
  if (t == grades_.end()) return Judgment3::unjudged;
  auto c = t->second.find(candidate);
  if (c == t->second.end()) return Judgment3::unjudged;
  return c->second > 0 ? Judgment3::relevant : Judgment3::nonrelevant;
}

std::size_t Qrels::relevant_count(const std::string& topic) const {
  auto t = grades_.find(topic);
  if (t == grades_.end()) return 0;
  return static_cast<std::size_t>(std::count_if(t->second.begin(), t->second.end(),
                                                [](const auto& kv) { return kv.second > 0; }));
}

std::vector<CandidateId> Qrels::relevant(const std::string& topic) const {
  std::vector<CandidateId> out;
  if (auto t = grades_.find(topic); t != grades_.end()) {
    for (const auto& [id, grade] : t->second) {
      if (grade > 0) out.push_back(id);
    }
  }
  return out;
}

std::vector<std::string> Qrels::topics() const {
  std::vector<std::string> out;
  for (const auto& [topic, _] : grades_) out.push_back(topic);
  return out;
}

void RunFile::set_topic(const std::string& topic, std::vector<RunEntry> entries) {
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].rank != i + 1) {
      throw InputError("topic " + topic + ": expected rank " + std::to_string(i + 1) + ", got " +
                       std::to_string(entries[i].rank));
    }
    if (i > 0 && entries[i].score > entries[i - 1].score) {
      throw InputError("topic " + topic + ": score increases at rank " + std::to_string(i + 1));
    }
    if (!seen.insert(entries[i].candidate).second) {
      throw InputError("topic " + topic + ": duplicate candidate " + entries[i].candidate);
    }
  }
  topics_[topic] = std::move(entries);
}

std::vector<CandidateId> RunFile::ranking(const std::string& topic) const {
  std::vector<CandidateId> out;
  if (auto it = topics_.find(topic); it != topics_.end()) {
    for (const auto& e : it->second) out.push_back(e.candidate);
  }
  return out;
}

std::vector<RunEntry> ranked_entries(std::span<const CandidateId> ids, const std::string& tag) {
  std::vector<RunEntry> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.push_back({ids[i], i + 1, static_cast<double>(ids.size() - i), tag});
  }
  return out;
}

namespace {

std::vector<std::string_view> fields_of(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i == line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_num(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (!fields_of(line).empty()) fn(line, line_no);
    pos = end + 1;
  }
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

}  // namespace

Qrels parse_qrels(std::string_view text, const std::string& source) {
  Qrels qrels;
  for_each_line(text, [&](std::string_view line, std::size_t no) {
    auto f = fields_of(line);
    if (f.size() != 4) throw FormatError(source, no, "expected 'topic iteration candidate grade'");
    int grade = 0;
    if (!parse_num(f[3], grade)) throw FormatError(source, no, "bad grade '" + std::string(f[3]) + "'");
    try {
      qrels.set(std::string(f[0]), std::string(f[2]), grade);
    } catch (const InputError& e) {
      throw FormatError(source, no, e.what());
    }
  });
  return qrels;
}

Qrels read_qrels(const fs::path& path) { return parse_qrels(slurp(path), path.string()); }

std::string format_qrels(const Qrels& qrels) {
  std::string out;
  for (const auto& [topic, grades] : qrels.grades()) {
    for (const auto& [id, grade] : grades) {
      out += topic;
      out += " 0 ";
      out += id;
      out += ' ';
      out += std::to_string(grade);
      out += '\n';
    }
  }
  return out;
}

void write_qrels(const fs::path& path, const Qrels& qrels) { spit(path, format_qrels(qrels)); }

RunFile parse_run(std::string_view text, const std::string& source, std::size_t max_per_topic) {
  std::map<std::string, std::vector<RunEntry>> pending;
  std::map<std::string, std::size_t> first_line;
  for_each_line(text, [&](std::string_view line, std::size_t no) {
    auto f = fields_of(line);
    if (f.size() != 6) throw FormatError(source, no, "expected 'topic Q0 candidate rank score tag'");
    RunEntry e;
    e.candidate = std::string(f[2]);
    e.tag = std::string(f[5]);
    if (!parse_num(f[3], e.rank)) throw FormatError(source, no, "bad rank '" + std::string(f[3]) + "'");
    if (!parse_num(f[4], e.score) || !std::isfinite(e.score)) {
      throw FormatError(source, no, "bad score '" + std::string(f[4]) + "'");
    }
    auto& entries = pending[std::string(f[0])];
    first_line.emplace(std::string(f[0]), no);
    if (e.rank != entries.size() + 1) {
      throw FormatError(source, no, "expected rank " + std::to_string(entries.size() + 1) +
                                        ", got " + std::to_string(e.rank));
    }
    if (!entries.empty() && e.score > entries.back().score) {
      throw FormatError(source, no, "score increases with rank");
    }
    if (max_per_topic && entries.size() >= max_per_topic) {
      throw FormatError(source, no, "more than " + std::to_string(max_per_topic) + " entries");
    }
    entries.push_back(std::move(e));
  });
  RunFile run;
  for (auto& [topic, entries] : pending) {
    try {
      run.set_topic(topic, std::move(entries));
    } catch (const InputError& e) {
      throw FormatError(source, first_line[topic], e.what());
    }
  }
  return run;
}

RunFile read_run(const fs::path& path, std::size_t max_per_topic) {
  return parse_run(slurp(path), path.string(), max_per_topic);
}

std::string format_run(const RunFile& run) {
  std::string out;
  for (const auto& [topic, entries] : run.topics()) {
    for (const auto& e : entries) {
      out += topic;
      out += " Q0 ";
      out += e.candidate;
      out += ' ';
      out += std::to_string(e.rank);
      out += ' ';
      out += format_double(e.score);
      out += ' ';
      out += e.tag;
      out += '\n';
    }
  }
  return out;
}

void write_run(const fs::path& path, const RunFile& run) { spit(path, format_run(run)); }

// ---------------------------------------------------------------------------
// Metrics

namespace {

void reject_duplicates(std::span<const CandidateId> ranked) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(ranked.size());
  for (const auto& id : ranked) {
    if (!seen.insert(id).second) throw InputError("duplicate id in ranking: " + id);
  }
}

}  // namespace

double average_precision(std::span<const CandidateId> ranked, const Qrels& qrels,
                         const std::string& topic) {
  reject_duplicates(ranked);
  std::size_t total = qrels.relevant_count(topic);
  if (total == 0) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (qrels.judgment(topic, ranked[i]) == Judgment3::relevant) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(total);
}

SamplingPlan SamplingPlan::complete(const Qrels& qrels, const std::string& topic) {
  Stratum s;
  s.rate = 1.0;
  if (auto it = qrels.grades().find(topic); it != qrels.grades().end()) {
    for (const auto& [id, _] : it->second) s.members.insert(id);
  }
  return {{std::move(s)}};
}

void SamplingPlan::validate() const {
  std::unordered_set<std::string_view> seen;
  for (const auto& s : strata) {
    if (!(s.rate > 0.0 && s.rate <= 1.0)) {
      throw InputError("sampling rate must lie in (0,1], got " + format_double(s.rate));
    }
    for (const auto& id : s.members) {
      if (!seen.insert(id).second) throw InputError("candidate in two strata: " + id);
    }
  }
}

double inferred_ap(std::span<const CandidateId> ranked, const Qrels& qrels,
                   const std::string& topic, const SamplingPlan& plan) {
  plan.validate();
  reject_duplicates(ranked);

  std::unordered_map<std::string_view, std::size_t> stratum_of;
  for (std::size_t s = 0; s < plan.strata.size(); ++s) {
    for (const auto& id : plan.strata[s].members) stratum_of.emplace(id, s);
  }

  // Estimated number of relevant candidates in the whole pool.
  double total = 0.0;
  if (auto it = qrels.grades().find(topic); it != qrels.grades().end()) {
    for (const auto& [id, grade] : it->second) {
      auto s = stratum_of.find(id);
      if (s == stratum_of.end()) throw InputError("judged candidate outside the pool: " + id);
      if (grade > 0) total += 1.0 / plan.strata[s->second].rate;
    }
  }
  if (total == 0.0) return 0.0;

  const std::size_t n_strata = plan.strata.size();
  std::vector<std::size_t> pooled_above(n_strata, 0), judged_above(n_strata, 0),
      relevant_above(n_strata, 0);
  double sum = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    auto s = stratum_of.find(ranked[i]);
    Judgment3 j = qrels.judgment(topic, ranked[i]);
    if (s != stratum_of.end() && j == Judgment3::relevant) {
      const double k = static_cast<double>(i + 1);
      double relevant_estimate = 0.0;
      // Relevance rate above k per stratum is (rel + e) / (judged + 2e) taken
      // in the limit e -> 0: the sample rate, or 1/2 with nothing judged.
      for (std::size_t t = 0; t < n_strata; ++t) {
        double rate = judged_above[t] > 0 ? static_cast<double>(relevant_above[t]) /
                                                static_cast<double>(judged_above[t])
                                          : 0.5;
        relevant_estimate += static_cast<double>(pooled_above[t]) * rate;
      }
      double precision = (1.0 + relevant_estimate) / k;
      sum += precision / plan.strata[s->second].rate;
    }
    if (s != stratum_of.end()) {
      ++pooled_above[s->second];
      if (j != Judgment3::unjudged) ++judged_above[s->second];
      if (j == Judgment3::relevant) ++relevant_above[s->second];
    }
  }
  return std::clamp(sum / total, 0.0, 1.0);
}

double mean_score(std::span<const double> scores) {
  if (scores.empty()) throw InputError("mean over an empty score set");
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

SetMeans set_means(const std::map<std::string, double>& topic_scores,
                   const std::map<std::string, std::string>& topic_to_set) {
  if (topic_scores.empty()) throw InputError("mean over an empty score set");
  SetMeans out;
  std::map<std::string, double> sums;
  double flat = 0.0;
  for (const auto& [topic, score] : topic_scores) {
    flat += score;
    auto it = topic_to_set.find(topic);
    const std::string set = it == topic_to_set.end() ? std::string("(unassigned)") : it->second;
    sums[set] += score;
    ++out.per_set_count[set];
  }
  out.flat = flat / static_cast<double>(topic_scores.size());
  double of_sets = 0.0;
  for (const auto& [set, sum] : sums) {
    out.per_set[set] = sum / static_cast<double>(out.per_set_count[set]);
    of_sets += out.per_set[set];
  }
  out.mean_of_sets = of_sets / static_cast<double>(sums.size());
  return out;
}

// ---------------------------------------------------------------------------
// Run comparison

double paired_randomization_p(std::span<const double> a, std::span<const double> b,
                              std::size_t exact_limit, std::size_t samples, std::uint64_t seed,
                              bool* exact) {
  if (a.size() != b.size()) throw InvariantViolation("paired samples differ in length");
  const std::size_t n = a.size();
  if (n == 0) throw InputError("randomization test over zero topics");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double observed = std::abs(std::accumulate(d.begin(), d.end(), 0.0));
  const double slack = 1e-12 * std::max(1.0, observed);

  auto extreme = [&](std::uint64_t signs) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (signs >> i & 1U) ? -d[i] : d[i];
    return std::abs(s) >= observed - slack;
  };

  if (n <= exact_limit && n < 63) {
    if (exact) *exact = true;
    const std::uint64_t total = std::uint64_t{1} << n;
    std::uint64_t count = 0;
    for (std::uint64_t signs = 0; signs < total; ++signs) count += extreme(signs);
    return static_cast<double>(count) / static_cast<double>(total);
  }

  if (exact) *exact = false;
  Rng rng(seed);
  std::size_t count = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += (rng() & 1U) ? -d[i] : d[i];
    count += std::abs(sum) >= observed - slack;
  }
  return static_cast<double>(count + 1) / static_cast<double>(samples + 1);
}

ComparisonReport compare_scores(std::vector<std::string> names, std::vector<std::string> topics,
                                std::vector<std::vector<double>> scores, std::string metric) {
  if (topics.empty()) throw InputError("runs share no topics");
  ComparisonReport report;
  report.metric = std::move(metric);
  report.runs = std::move(names);
  report.topics = std::move(topics);
  report.scores = std::move(scores);
  for (const auto& row : report.scores) report.means.push_back(mean_score(row));

  constexpr double kTie = 1e-12;
  for (std::size_t i = 0; i < report.runs.size(); ++i) {
    for (std::size_t j = i + 1; j < report.runs.size(); ++j) {
      PairComparison pc;
      pc.a = report.runs[i];
      pc.b = report.runs[j];
      for (std::size_t t = 0; t < report.topics.size(); ++t) {
        double diff = report.scores[i][t] - report.scores[j][t];
        if (std::abs(diff) <= kTie) {
          ++pc.ties;
        } else if (diff > 0) {
          ++pc.wins;
        } else {
          ++pc.losses;
        }
      }
      pc.win_rate = static_cast<double>(pc.wins) / static_cast<double>(report.topics.size());
      pc.mean_difference = report.means[i] - report.means[j];
      pc.p_value = paired_randomization_p(report.scores[i], report.scores[j], 20, 100000, 7,
                                          &pc.exact);
      report.pairs.push_back(pc);
    }
  }
  return report;
}

ComparisonReport compare_runs(std::span<const NamedRun> runs, const Qrels& qrels,
                              const std::map<std::string, SamplingPlan>* sampling) {
  if (runs.empty()) throw InputError("no runs to evaluate");
  std::vector<std::string> topics;
  for (const auto& [topic, _] : runs.front().run.topics()) {
    bool shared = qrels.has_topic(topic);
    for (const auto& r : runs) shared = shared && r.run.topics().contains(topic);
    if (shared) topics.push_back(topic);
  }
  if (topics.empty()) throw InputError("runs and qrels share no topics");

  std::vector<std::string> names;
  std::vector<std::vector<double>> scores;
  for (const auto& r : runs) {
    names.push_back(r.name);
    std::vector<double> row;
    for (const auto& topic : topics) {
      auto ranking = r.run.ranking(topic);
      if (sampling) {
        auto plan = sampling->find(topic);
        if (plan == sampling->end()) throw InputError("no sampling plan for topic " + topic);
        row.push_back(inferred_ap(ranking, qrels, topic, plan->second));
      } else {
        row.push_back(average_precision(ranking, qrels, topic));
      }
    }
    scores.push_back(std::move(row));
  }
  return compare_scores(std::move(names), std::move(topics), std::move(scores),
                        sampling ? "infAP" : "AP");
}

std::string ComparisonReport::to_tsv() const {
  std::ostringstream out;
  out << "topic";
  for (const auto& r : runs) out << '\t' << r;
  out << '\n';
  char buf[32];
  for (std::size_t t = 0; t < topics.size(); ++t) {
    out << topics[t];
    for (std::size_t r = 0; r < runs.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%.4f", scores[r][t]);
      out << '\t' << buf;
    }
    out << '\n';
  }
  out << "mean";
  for (double m : means) {
    std::snprintf(buf, sizeof buf, "%.4f", m);
    out << '\t' << buf;
  }
  out << '\n';
  if (!pairs.empty()) {
    out << "\nrun_a\trun_b\twins\tties\tlosses\twin_rate\tmean_diff\tp_value\n";
    for (const auto& p : pairs) {
      out << p.a << '\t' << p.b << '\t' << p.wins << '\t' << p.ties << '\t' << p.losses;
      std::snprintf(buf, sizeof buf, "\t%.4f", p.win_rate);
      out << buf;
      std::snprintf(buf, sizeof buf, "\t%.4f", p.mean_difference);
      out << buf;
      std::snprintf(buf, sizeof buf, "\t%.4g", p.p_value);
      out << buf << '\n';
    }
  }
  return out.str();
}

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json j;
  j["metric"] = metric;
  j["topics"] = topics;
  auto runs_json = nlohmann::json::array();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    nlohmann::json per_topic;
    for (std::size_t t = 0; t < topics.size(); ++t) per_topic[topics[t]] = scores[r][t];
    runs_json.push_back({{"name", runs[r]}, {"mean", means[r]}, {"per_topic", per_topic}});
  }
  j["runs"] = runs_json;
  auto pairs_json = nlohmann::json::array();
  for (const auto& p : pairs) {
    pairs_json.push_back({{"a", p.a},
                          {"b", p.b},
                          {"wins", p.wins},
                          {"ties", p.ties},
                          {"losses", p.losses},
                          {"win_rate", p.win_rate},
                          {"mean_difference", p.mean_difference},
                          {"p_value", p.p_value},
                          {"exact", p.exact}});
  }
  j["pairs"] = pairs_json;
  return j;
}

}  // namespace avs
