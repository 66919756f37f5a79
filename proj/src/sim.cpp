#include "avs/sim.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "avs/errors.hpp"
#include "avs/random.hpp"

namespace avs::sim {

std::string_view to_string(WorldKind kind) {
  return kind == WorldKind::standard ? "standard" : "two_cluster";
}

WorldKind world_kind_from_string(std::string_view s) {
  if (s == "standard") return WorldKind::standard;
  if (s == "two_cluster") return WorldKind::two_cluster;
  throw InputError("unknown world kind '" + std::string(s) + "'");
}

WorldParams WorldParams::two_cluster_defaults() {
  WorldParams p;
  p.kind = WorldKind::two_cluster;
  p.dimension = 32;
  p.corpus_size = p.topics * (p.distractors_per_topic + p.targets_per_topic);
  return p;
}

void WorldParams::validate() const {
  if (dimension < 2) throw InputError("world dimension must be >= 2");
  if (topics < 1) throw InputError("world needs at least one topic");
  if (!(relevance_threshold > 0.0 && relevance_threshold < 1.0)) {
    throw InputError("relevance threshold must lie in (0,1)");
  }
  std::size_t planted = kind == WorldKind::standard
                            ? topics * planted_per_topic
                            : topics * (distractors_per_topic + targets_per_topic);
  if (corpus_size < planted) {
    throw InputError("corpus_size " + std::to_string(corpus_size) + " is smaller than the " +
                     std::to_string(planted) + " planted candidates");
  }
  if (planted_spread_min < 0 || planted_spread_max < planted_spread_min ||
      distractor_spread_min < 0 || distractor_spread_max < distractor_spread_min ||
      target_spread_min < 0 || target_spread_max < target_spread_min) {
    throw InputError("spread ranges must be non-negative and ordered");
  }
}

WorldParams WorldParams::from_config(const KeyValueConfig& c, WorldParams d) {
  WorldParams p = d;
  p.kind = world_kind_from_string(c.get_string("kind", std::string(to_string(d.kind))));
  p.dimension = static_cast<std::size_t>(c.get_int("dimension", static_cast<long long>(d.dimension)));
  p.corpus_size =
      static_cast<std::size_t>(c.get_int("corpus_size", static_cast<long long>(d.corpus_size)));
  p.topics = static_cast<std::size_t>(c.get_int("topics", static_cast<long long>(d.topics)));
  p.relevance_threshold = c.get_double("rho", d.relevance_threshold);
  p.query_drift = c.get_double("query_drift", d.query_drift);
  p.planted_per_topic = static_cast<std::size_t>(
      c.get_int("planted_per_topic", static_cast<long long>(d.planted_per_topic)));
  p.planted_spread_min = c.get_double("planted_spread_min", d.planted_spread_min);
  p.planted_spread_max = c.get_double("planted_spread_max", d.planted_spread_max);
  p.distractors_per_topic = static_cast<std::size_t>(
      c.get_int("distractors_per_topic", static_cast<long long>(d.distractors_per_topic)));
  p.targets_per_topic = static_cast<std::size_t>(
      c.get_int("targets_per_topic", static_cast<long long>(d.targets_per_topic)));
  p.query_angle_deg = c.get_double("query_angle_deg", d.query_angle_deg);
  p.distractor_spread_min = c.get_double("distractor_spread_min", d.distractor_spread_min);
  p.distractor_spread_max = c.get_double("distractor_spread_max", d.distractor_spread_max);
  p.target_spread_min = c.get_double("target_spread_min", d.target_spread_min);
  p.target_spread_max = c.get_double("target_spread_max", d.target_spread_max);
  p.seed = static_cast<std::uint64_t>(c.get_int("seed", static_cast<long long>(d.seed)));
  return p;
}

WorldParams WorldParams::from_config(const KeyValueConfig& c) { return from_config(c, WorldParams{}); }

KeyValueConfig WorldParams::to_config() const {
  KeyValueConfig c;
  c.set("kind", std::string(to_string(kind)));
  c.set("dimension", std::to_string(dimension));
  c.set("corpus_size", std::to_string(corpus_size));
  c.set("topics", std::to_string(topics));
  c.set("rho", format_double(relevance_threshold));
  c.set("query_drift", format_double(query_drift));
  c.set("planted_per_topic", std::to_string(planted_per_topic));
  c.set("planted_spread_min", format_double(planted_spread_min));
  c.set("planted_spread_max", format_double(planted_spread_max));
  c.set("distractors_per_topic", std::to_string(distractors_per_topic));
  c.set("targets_per_topic", std::to_string(targets_per_topic));
  c.set("query_angle_deg", format_double(query_angle_deg));
  c.set("distractor_spread_min", format_double(distractor_spread_min));
  c.set("distractor_spread_max", format_double(distractor_spread_max));
  c.set("target_spread_min", format_double(target_spread_min));
  c.set("target_spread_max", format_double(target_spread_max));
  c.set("seed", std::to_string(seed));
  return c;
}

namespace {

using Vec = std::vector<double>;

Vec gaussian(Rng& rng, std::size_t d, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Vec v(d);
  for (auto& x : v) x = normal(rng);
  return v;
}

void normalize(Vec& v) {
  double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  for (auto& x : v) x /= n;
}

Vec random_unit(Rng& rng, std::size_t d) {
  Vec v = gaussian(rng, d, 1.0);
  normalize(v);
  return v;
}

/// Random unit vector orthogonal to `axis` (unit).
Vec orthogonal_unit(Rng& rng, const Vec& axis) {
  Vec v = gaussian(rng, axis.size(), 1.0);
  double proj = std::inner_product(v.begin(), v.end(), axis.begin(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * axis[i];
  normalize(v);
  return v;
}

/// normalize(center + s * g) with g ~ N(0, I/d) and s ~ U[lo, hi].
Vec around(Rng& rng, const Vec& center, double lo, double hi) {
  std::uniform_real_distribution<double> spread(lo, hi);
  double s = spread(rng);
  Vec g = gaussian(rng, center.size(), 1.0 / std::sqrt(static_cast<double>(center.size())));
  Vec v(center.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = center[i] + s * g[i];
  normalize(v);
  return v;
}

std::vector<float> to_float(const Vec& v) { return {v.begin(), v.end()}; }

}  // namespace

SyntheticWorld generate_world(const WorldParams& params) {
  params.validate();
  const std::size_t d = params.dimension;

  std::vector<CandidateId> ids;
  std::vector<float> data;
  data.reserve(params.corpus_size * d);
  auto add = [&](CandidateId id, const Vec& v) {
    ids.push_back(std::move(id));
    data.insert(data.end(), v.begin(), v.end());
  };

  SyntheticWorld world;
  world.params = params;
  std::vector<Vec> intents;
  for (std::size_t t = 0; t < params.topics; ++t) {
    Rng rng(derive_seed(params.seed, "topic", t));
    TopicSpec spec;
    spec.id = std::to_string(1001 + t);
    spec.text = "synthetic topic " + spec.id;
    Vec intent = random_unit(rng, d);
    Vec query(d);
    const std::string prefix = "t" + spec.id + "_";

    if (params.kind == WorldKind::standard) {
      Vec drift = orthogonal_unit(rng, intent);
      for (std::size_t i = 0; i < d; ++i) query[i] = intent[i] + params.query_drift * drift[i];
      normalize(query);
      for (std::size_t j = 0; j < params.planted_per_topic; ++j) {
        add(prefix + "p" + std::to_string(j),
            around(rng, intent, params.planted_spread_min, params.planted_spread_max));
      }
    } else {
      Vec distractor = orthogonal_unit(rng, intent);
      const double angle = params.query_angle_deg * std::acos(-1.0) / 180.0;
      for (std::size_t i = 0; i < d; ++i) {
        query[i] = std::cos(angle) * intent[i] + std::sin(angle) * distractor[i];
      }
      normalize(query);
      for (std::size_t j = 0; j < params.distractors_per_topic; ++j) {
        add(prefix + "a" + std::to_string(j),
            around(rng, distractor, params.distractor_spread_min, params.distractor_spread_max));
      }
      for (std::size_t j = 0; j < params.targets_per_topic; ++j) {
        add(prefix + "b" + std::to_string(j),
            around(rng, intent, params.target_spread_min, params.target_spread_max));
      }
    }
    spec.intent = to_float(intent);
    spec.initial_query = to_float(query);
    intents.push_back(std::move(intent));
    world.topics.push_back(std::move(spec));
  }

  Rng background(derive_seed(params.seed, "background"));
  for (std::size_t j = ids.size(), n = 0; j < params.corpus_size; ++j, ++n) {
    add("bg" + std::to_string(n), random_unit(background, d));
  }

  auto corpus = std::make_shared<CorpusIndex>(std::move(ids), std::move(data), d, true);
  for (std::size_t t = 0; t < world.topics.size(); ++t) {
    auto relevant = std::make_shared<RelevanceSet>();
    const auto& intent = world.topics[t].intent;
    for (std::size_t r = 0; r < corpus->size(); ++r) {
      if (dot(corpus->vector(r), intent) >= params.relevance_threshold) {
        relevant->insert(corpus->id(r));
        world.qrels.set(world.topics[t].id, corpus->id(r), 1);
      }
    }
    if (relevant->empty()) {
      throw InputError("topic " + world.topics[t].id + " has no candidate with cosine >= " +
                       format_double(params.relevance_threshold));
    }
    world.topics[t].relevant = std::move(relevant);
  }
  world.corpus = std::move(corpus);
  return world;
}

std::string_view to_string(OrchestratorPolicy p) {
  switch (p) {
    case OrchestratorPolicy::always_exploit: return "always_exploit";
    case OrchestratorPolicy::always_explore: return "always_explore";
    case OrchestratorPolicy::threshold: return "threshold";
  }
  return "?";
}

OrchestratorPolicy policy_from_string(std::string_view s) {
  for (auto p : {OrchestratorPolicy::always_exploit, OrchestratorPolicy::always_explore,
                 OrchestratorPolicy::threshold}) {
    if (to_string(p) == s) return p;
  }
  throw InputError("unknown orchestrator policy '" + std::string(s) + "'");
}

void PolicyConfig::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(threshold) || !in_unit(alpha) || !in_unit(tpr) || !in_unit(fpr)) {
    throw InputError("policy threshold, alpha and noise rates must lie in [0,1]");
  }
}

std::vector<TopicRun> make_topic_runs(const SyntheticWorld& world, const PolicyConfig& policy,
                                      const EngineConfig& config, std::size_t retrieval_workers) {
  policy.validate();
  auto retrieval =
      std::make_shared<EmbeddingRetrievalAgent>(world.corpus, nullptr, retrieval_workers);
  auto reformulation = std::make_shared<CentroidNudgeReformulator>(world.corpus, policy.alpha);
  std::shared_ptr<const OrchestrationAgent> orchestration;
  switch (policy.orchestrator) {
    case OrchestratorPolicy::always_exploit:
      orchestration = std::make_shared<ThresholdOrchestrator>(0.0);
      break;
    case OrchestratorPolicy::always_explore:
      orchestration = std::make_shared<AlwaysExploreOrchestrator>();
      break;
    case OrchestratorPolicy::threshold:
      orchestration = std::make_shared<ThresholdOrchestrator>(policy.threshold);
      break;
  }

  std::vector<TopicRun> runs;
  for (std::size_t t = 0; t < world.topics.size(); ++t) {
    const auto& spec = world.topics[t];
    std::shared_ptr<const ReasoningAgent> reasoning;
    if (policy.accept_all) {
      reasoning = std::make_shared<AcceptAllReasoningAgent>();
    } else if (policy.tpr == 1.0 && policy.fpr == 0.0) {
      reasoning = std::make_shared<OracleReasoningAgent>(spec.relevant);
    } else {
      reasoning = std::make_shared<NoisyReasoningAgent>(
          spec.relevant, policy.tpr, policy.fpr, derive_seed(world.params.seed, "noise", t));
    }
    runs.push_back({spec.id, Query::original(spec.text, spec.initial_query), config,
                    {retrieval, reasoning, reformulation, orchestration}});
  }
  return runs;
}

std::vector<CandidateId> submission_ids(const RunTrace& trace) {
  std::vector<CandidateId> ids;
  ids.reserve(trace.submission.size());
  for (const auto& e : trace.submission.entries()) ids.push_back(e.id);
  return ids;
}

std::vector<std::size_t> accumulated_gt_curve(std::span<const CandidateId> ranked,
                                              const Qrels& qrels, const std::string& topic,
                                              std::size_t bin_size, std::size_t bins) {
  if (bin_size < 1) throw InvariantViolation("bin size must be >= 1");
  std::vector<std::size_t> curve(bins, 0);
  std::size_t hits = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    for (std::size_t i = b * bin_size; i < (b + 1) * bin_size && i < ranked.size(); ++i) {
      if (qrels.judgment(topic, ranked[i]) == Judgment3::relevant) ++hits;
    }
    curve[b] = hits;
  }
  return curve;
}

std::vector<std::size_t> accumulated_gt_curve(const RunTrace& trace, const Qrels& qrels) {
  const auto& cfg = trace.config;
  auto ids = submission_ids(trace);
  return accumulated_gt_curve(ids, qrels, trace.topic, cfg.examination_length,
                              cfg.submission_length / cfg.examination_length);
}

std::vector<CandidateId> retrieval_only_ranking(const SyntheticWorld& world, const TopicSpec& topic,
                                                std::size_t length) {
  auto ranked = top_k(*world.corpus, topic.initial_query, ExclusionSet{}, length);
  std::vector<CandidateId> ids;
  for (const auto& e : ranked.entries()) ids.push_back(e.id);
  return ids;
}

std::vector<Arm> stacking_arms(double threshold, double alpha, double tpr, double fpr) {
  PolicyConfig base;
  base.threshold = threshold;
  base.alpha = alpha;
  base.tpr = tpr;
  base.fpr = fpr;
  Arm retrieval{"retrieval_only", true, base};
  Arm reasoning{"reasoning", false, base};
  reasoning.policy.orchestrator = OrchestratorPolicy::always_exploit;
  Arm reformulation{"reformulation", false, base};
  reformulation.policy.orchestrator = OrchestratorPolicy::always_explore;
  Arm full{"full", false, base};
  full.policy.orchestrator = OrchestratorPolicy::threshold;
  return {retrieval, reasoning, reformulation, full};
}

std::vector<ArmTopicResult> run_arm(const SyntheticWorld& world, const Arm& arm,
                                    const EngineConfig& config, std::size_t parallelism) {
  config.validate();
  const std::size_t bin = config.examination_length;
  const std::size_t bins = config.submission_length / bin;
  std::vector<ArmTopicResult> out;
  if (arm.retrieval_only) {
    for (const auto& topic : world.topics) {
      auto ids = retrieval_only_ranking(world, topic, config.submission_length);
      out.push_back({topic.id, average_precision(ids, world.qrels, topic.id),
                     accumulated_gt_curve(ids, world.qrels, topic.id, bin, bins)});
    }
    return out;
  }
  auto results = run_batch(make_topic_runs(world, arm.policy, config), parallelism);
  for (const auto& r : results) {
    if (!r.ok) throw std::runtime_error("simulated topic " + r.trace.topic + " failed: " + r.error);
    auto ids = submission_ids(r.trace);
    out.push_back({r.trace.topic, average_precision(ids, world.qrels, r.trace.topic),
                   accumulated_gt_curve(ids, world.qrels, r.trace.topic, bin, bins)});
  }
  return out;
}

SuiteReport ablation_suite(const WorldParams& world_params, const std::vector<Arm>& arms,
                           const SuiteOptions& options) {
  if (arms.empty()) throw InputError("ablation needs at least one arm");
  if (options.seeds.empty()) throw InputError("ablation needs at least one seed");
  const Arm* sensitivity_arm = nullptr;
  for (const auto& a : arms) {
    if (a.name == options.sensitivity_arm) sensitivity_arm = &a;
  }
  if (!options.sensitivity_grid.empty() && !sensitivity_arm) {
    throw InputError("sensitivity arm '" + options.sensitivity_arm + "' is not among the arms");
  }

  SuiteReport report;
  std::vector<std::vector<double>> paired(arms.size());
  std::vector<std::string> units;
  report.arms.resize(arms.size());
  for (std::size_t a = 0; a < arms.size(); ++a) report.arms[a].name = arms[a].name;
  report.sensitivity.resize(options.sensitivity_grid.size());
  std::size_t curve_samples = 0;

  for (auto seed : options.seeds) {
    WorldParams p = world_params;
    p.seed = seed;
    SyntheticWorld world = generate_world(p);
    for (std::size_t a = 0; a < arms.size(); ++a) {
      auto results = run_arm(world, arms[a], options.config, options.parallelism);
      std::vector<double> aps;
      auto& curve = report.curves[arms[a].name];
      for (const auto& r : results) {
        aps.push_back(r.ap);
        paired[a].push_back(r.ap);
        if (a == 0) units.push_back(std::to_string(seed) + "/" + r.topic);
        if (curve.size() < r.curve.size()) curve.resize(r.curve.size(), 0.0);
        for (std::size_t b = 0; b < r.curve.size(); ++b) curve[b] += static_cast<double>(r.curve[b]);
      }
      report.arms[a].per_seed.push_back(mean_score(aps));
    }
    curve_samples += world.topics.size();

    for (std::size_t g = 0; g < options.sensitivity_grid.size(); ++g) {
      auto [T, k] = options.sensitivity_grid[g];
      EngineConfig cfg = options.config;
      cfg.max_iterations = T;
      cfg.examination_length = k;
      auto results = run_arm(world, *sensitivity_arm, cfg, options.parallelism);
      std::vector<double> aps;
      for (const auto& r : results) aps.push_back(r.ap);
      report.sensitivity[g].T = T;
      report.sensitivity[g].k = k;
      report.sensitivity[g].per_seed.push_back(mean_score(aps));
    }
  }

  for (auto& [name, curve] : report.curves) {
    for (auto& x : curve) x /= static_cast<double>(curve_samples);
  }
  for (auto& arm : report.arms) {
    arm.mean = mean_score(arm.per_seed);
    double half = 0.0;
    if (arm.per_seed.size() > 1) {
      double var = 0.0;
      for (double x : arm.per_seed) var += (x - arm.mean) * (x - arm.mean);
      var /= static_cast<double>(arm.per_seed.size() - 1);
      half = 1.96 * std::sqrt(var / static_cast<double>(arm.per_seed.size()));
    }
    arm.ci_low = arm.mean - half;
    arm.ci_high = arm.mean + half;
  }
  for (auto& point : report.sensitivity) point.mean = mean_score(point.per_seed);

  if (arms.size() > 1) {
    for (std::size_t a = 1; a < arms.size(); ++a) {
      auto cmp = compare_scores({arms[a].name, arms[0].name}, units, {paired[a], paired[0]}, "AP");
      report.comparisons.push_back(cmp.pairs.front());
    }
  }
  return report;
}

std::string SuiteReport::to_tsv() const {
  std::ostringstream out;
  char buf[128];
  out << "arm\tmean_ap\tci_low\tci_high\tseeds\n";
  for (const auto& a : arms) {
    std::snprintf(buf, sizeof buf, "\t%.4f\t%.4f\t%.4f\t%zu\n", a.mean, a.ci_low, a.ci_high,
                  a.per_seed.size());
    out << a.name << buf;
  }
  if (!comparisons.empty()) {
    out << "\narm\tbaseline\twins\tties\tlosses\tmean_diff\tp_value\n";
    for (const auto& c : comparisons) {
      std::snprintf(buf, sizeof buf, "\t%zu\t%zu\t%zu\t%.4f\t%.4g\n", c.wins, c.ties, c.losses,
                    c.mean_difference, c.p_value);
      out << c.a << '\t' << c.b << buf;
    }
  }
  if (!sensitivity.empty()) {
    out << "\nT\tk\tmean_ap\n";
    for (const auto& s : sensitivity) {
      std::snprintf(buf, sizeof buf, "%zu\t%zu\t%.4f\n", s.T, s.k, s.mean);
      out << buf;
    }
  }
  return out.str();
}

std::string SuiteReport::curves_tsv() const {
  std::ostringstream out;
  out << "bin";
  std::size_t bins = 0;
  for (const auto& [name, curve] : curves) {
    out << '\t' << name;
    bins = std::max(bins, curve.size());
  }
  out << '\n';
  char buf[32];
  for (std::size_t b = 0; b < bins; ++b) {
    out << b + 1;
    for (const auto& [name, curve] : curves) {
      std::snprintf(buf, sizeof buf, "\t%.2f", b < curve.size() ? curve[b] : 0.0);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::json SuiteReport::to_json() const {
  nlohmann::json j;
  for (const auto& a : arms) {
    j["arms"].push_back({{"name", a.name},
                         {"mean_ap", a.mean},
                         {"ci", {a.ci_low, a.ci_high}},
                         {"per_seed", a.per_seed}});
  }
  j["comparisons"] = nlohmann::json::array();
  for (const auto& c : comparisons) {
    j["comparisons"].push_back({{"arm", c.a},
                                {"baseline", c.b},
                                {"wins", c.wins},
                                {"ties", c.ties},
                                {"losses", c.losses},
                                {"mean_difference", c.mean_difference},
                                {"p_value", c.p_value}});
  }
  j["sensitivity"] = nlohmann::json::array();
  for (const auto& s : sensitivity) {
    j["sensitivity"].push_back({{"T", s.T}, {"k", s.k}, {"mean_ap", s.mean}, {"per_seed", s.per_seed}});
  }
  j["curves"] = curves;
  return j;
}

}  // namespace avs::sim
