#include "avs/cli.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "CLI11.hpp"
#include "avs/config.hpp"
#include "avs/corpus.hpp"
#include "avs/errors.hpp"
#include "avs/eval.hpp"
#include "avs/llm/agents.hpp"
#include "avs/llm/client.hpp"
#include "avs/llm/parse.hpp"
#include "avs/llm/prompt.hpp"
#include "avs/random.hpp"
#include "avs/sim.hpp"

namespace avs::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Topics and traces

std::vector<TopicLine> parse_topics(std::string_view text, const std::string& source) {
  std::vector<TopicLine> out;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      auto tab = line.find('\t', pos);
      fields.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (fields.size() < 2 || fields.size() > 3) {
      throw FormatError(source, no, "expected 'id<TAB>text[<TAB>vector]'");
    }
    TopicLine t{fields[0], fields[1], {}};
    if (t.id.empty() || t.text.empty()) throw FormatError(source, no, "empty topic id or text");
    if (t.id.find_first_of(" \t") != std::string::npos) {
      throw FormatError(source, no, "topic id contains whitespace");
    }
    if (!seen.insert(t.id).second) throw FormatError(source, no, "duplicate topic " + t.id);
    if (fields.size() == 3 && !fields[2].empty()) {
      std::istringstream vs(fields[2]);
      std::string item;
      while (std::getline(vs, item, ',')) {
        char* end = nullptr;
        float x = std::strtof(item.c_str(), &end);
        if (item.empty() || end != item.c_str() + item.size()) {
          throw FormatError(source, no, "bad vector component '" + item + "'");
        }
        t.embedding.push_back(x);
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::string format_topics(const std::vector<TopicLine>& topics) {
  std::string out;
  char buf[32];
  for (const auto& t : topics) {
    out += t.id + '\t' + t.text;
    if (!t.embedding.empty()) {
      out += '\t';
      for (std::size_t i = 0; i < t.embedding.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g", t.embedding[i]);
        out += (i ? "," : "") + std::string(buf);
      }
    }
    out += '\n';
  }
  return out;
}

std::string narrate(const RunTrace& trace, std::size_t only_iteration) {
  std::ostringstream out;
  char buf[160];
  std::size_t matched = trace.submission.matched_count();
  out << "topic " << trace.topic << ": " << trace.iterations.size() << " iterations";
  if (trace.submission.size() == 0 && !trace.iterations.empty()) {
    out << ", partial trace without a submission\n";
  } else {
    out << ", termination " << to_string(trace.termination) << ", submission "
        << trace.submission.size() << " (" << matched << " matched, "
        << trace.submission.size() - matched << " padding)\n";
  }
  if (trace.error) out << "error: " << *trace.error << '\n';
  if (trace.iterations.empty()) {
    out << "no iterations\n";
    return out.str();
  }
  bool any = false;
  for (const auto& r : trace.iterations) {
    const std::size_t t = r.iteration + 1;
    if (only_iteration && t != only_iteration) continue;
    any = true;
    out << "\niteration " << t << "  window [" << r.window.start << ", " << r.window.end << ")\n";
    out << "  query (" << to_string(r.query.origin) << "): " << r.query.text << '\n';
    std::snprintf(buf, sizeof buf, "  examined %zu: %zu matched, %zu unmatched, precision %.3f\n",
                  r.summary.examined, r.summary.matched, r.summary.unmatched, r.precision);
    out << buf;
    for (const auto& v : r.verdicts) {
      if (v.reasoning && !v.reasoning->empty()) {
        out << "    " << v.candidate << ' ' << (v.matched ? "matched" : "unmatched") << ": "
            << *v.reasoning << '\n';
      }
    }
    if (r.action) {
      out << "  action: " << to_string(r.action->kind);
      if (!r.action->reasoning.empty()) out << " (" << r.action->reasoning << ')';
      out << '\n';
    } else {
      out << "  action: none, the loop stopped here\n";
    }
    if (r.reformulation) {
      out << "  reformulated: " << r.reformulation->text << '\n';
      if (!r.reformulation->reasoning.empty()) {
        out << "  reformulation reasoning: " << r.reformulation->reasoning << '\n';
      }
    }
  }
  if (!any) out << "no iterations match the filter\n";
  return out.str();
}

RunTrace load_trace(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open trace " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), {});
  auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw InputError(path.string() + ": empty trace file");

  // A single JSON document is a final trace.
  auto whole = nlohmann::json::parse(text, nullptr, false);
  if (!whole.is_discarded()) {
    if (whole.is_object() && whole.contains("iterations")) return run_trace_from_json(whole);
    if (!(whole.is_object() && whole.contains("record"))) {
      throw InputError(path.string() + ": not a trace document");
    }
  }

  // Otherwise one {"topic": ..., "record": {...}} object per line.
  RunTrace trace;
  std::istringstream lines(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(lines, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    try {
      if (j.is_discarded() || !j.is_object() || !j.contains("record")) {
        throw InputError("not a JSON trace record");
      }
      if (trace.topic.empty()) trace.topic = j.value("topic", "");
      trace.iterations.push_back(iteration_record_from_json(j.at("record")));
    } catch (const std::exception& e) {
      throw InputError(path.string() + ": trace record " + std::to_string(no) + ": " + e.what());
    }
  }
  // Incremental files carry no submission or termination.
  return trace;
}

namespace {

// ---------------------------------------------------------------------------
// Configuration

/// Flag values are collected as text and merged over the config file.
struct FlagSet {
  std::vector<std::pair<std::string, CLI::Option*>> options;
  std::map<std::string, std::string> storage;

  void add(CLI::App& app, const std::string& key, const std::string& flag, const std::string& help) {
    options.emplace_back(key, app.add_option(flag, storage[key], help));
  }
  void add_flag(CLI::App& app, const std::string& key, const std::string& flag,
                const std::string& help) {
    options.emplace_back(key, app.add_flag(flag, help));
  }
  void apply(KeyValueConfig& cfg) const {
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      auto it = storage.find(key);
      cfg.set(key, it != storage.end() && !it->second.empty() ? it->second : std::string("true"));
    }
  }
};

KeyValueConfig defaults() {
  KeyValueConfig c;
  c.set("T", "60");
  c.set("k", "50");
  c.set("L", "1000");
  c.set("parallelism", "1");
  c.set("backend", "sim");
  c.set("seed", "1");
  c.set("tag", "avs");
  c.set("out", "runs");
  c.set("orchestrator", "threshold");
  c.set("threshold", "0.2");
  c.set("alpha", "0.5");
  c.set("tpr", "1");
  c.set("fpr", "0");
  c.set("api_key_env", "AVS_API_KEY");
  return c;
}

KeyValueConfig merge(const std::string& config_path, const FlagSet& flags) {
  KeyValueConfig cfg = defaults();
  if (!config_path.empty()) {
    auto file = KeyValueConfig::load(config_path);
    for (const auto& [k, v] : file.values()) cfg.set(k, v);
  }
  flags.apply(cfg);
  return cfg;
}

std::size_t get_size(const KeyValueConfig& cfg, const std::string& key, long long fallback) {
  long long v = cfg.get_int(key, fallback);
  if (v < 0) throw InputError("config key " + key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

EngineConfig engine_config(const KeyValueConfig& cfg) {
  EngineConfig e;
  e.max_iterations = get_size(cfg, "T", 60);
  e.examination_length = get_size(cfg, "k", 50);
  e.submission_length = get_size(cfg, "L", 1000);
  try {
    e.validate();
  } catch (const InvariantViolation& ex) {
    throw InputError(ex.what());
  }
  return e;
}

sim::PolicyConfig policy_config(const KeyValueConfig& cfg) {
  sim::PolicyConfig p;
  p.orchestrator = sim::policy_from_string(cfg.get_string("orchestrator", "threshold"));
  p.threshold = cfg.get_double("threshold", p.threshold);
  p.alpha = cfg.get_double("alpha", p.alpha);
  p.tpr = cfg.get_double("tpr", p.tpr);
  p.fpr = cfg.get_double("fpr", p.fpr);
  p.accept_all = cfg.get_bool("accept_all", false);
  p.validate();
  return p;
}

sim::WorldParams world_params(const KeyValueConfig& cfg) {
  KeyValueConfig sub;
  for (const auto& [k, v] : cfg.values()) {
    if (k.rfind("world.", 0) == 0) sub.set(k.substr(6), v);
  }
  auto kind = sim::world_kind_from_string(sub.get_string("kind", "standard"));
  auto base = kind == sim::WorldKind::two_cluster ? sim::WorldParams::two_cluster_defaults()
                                                  : sim::WorldParams{};
  auto p = sim::WorldParams::from_config(sub, base);
  if (!sub.contains("corpus_size") && kind == sim::WorldKind::two_cluster) {
    p.corpus_size = p.topics * (p.distractors_per_topic + p.targets_per_topic);
  }
  p.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Output

std::string timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

fs::path make_output_dir(const KeyValueConfig& cfg, const std::string& command) {
  fs::path root = cfg.get_string("out", "runs");
  fs::path dir = root / (command + "-" + timestamp());
  for (int n = 2; fs::exists(dir); ++n) {
    dir = root / (command + "-" + timestamp() + "-" + std::to_string(n));
  }
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::string file_stem_for(const std::string& topic) {
  std::string s = topic;
  for (auto& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return s;
}

void echo_config(const KeyValueConfig& cfg, const fs::path& dir, std::ostream& out) {
  std::string text = cfg.to_text();
  write_file(dir / "config.toml", text);
  out << "# effective configuration (" << (dir / "config.toml").string() << ")\n" << text;
}

/// Runs the batch with incremental per-topic JSONL traces and writes the final
/// traces, the run file and a status table. Returns the exit code.
int execute(const std::vector<TopicRun>& runs, std::size_t parallelism, const fs::path& dir,
            const std::string& tag, const Qrels* qrels, std::ostream& out) {
  fs::create_directories(dir / "traces");
  std::mutex mutex;
  std::unordered_map<std::string, std::ofstream> streams;
  RecordSink sink = [&](const std::string& topic, const IterationRecord& record) {
    nlohmann::json line{{"topic", topic}, {"record", to_json(record)}};
    std::lock_guard lock(mutex);
    auto it = streams.find(topic);
    if (it == streams.end()) {
      it = streams.emplace(topic, std::ofstream(dir / "traces" / (file_stem_for(topic) + ".jsonl")))
               .first;
    }
    it->second << line.dump() << '\n';
    it->second.flush();
  };
  auto results = run_batch(runs, parallelism, sink);
  streams.clear();

  RunFile run_file;
  std::ostringstream status;
  status << "topic\ttermination\titerations\tmatched\tpadding\terror\n";
  std::size_t failures = 0;
  std::map<std::string, double> scores;
  for (const auto& r : results) {
    const auto& trace = r.trace;
    write_file(dir / "traces" / (file_stem_for(trace.topic) + ".json"), to_json(trace).dump(2) + "\n");
    bool failed = !r.ok || trace.termination == TerminationReason::agent_failure;
    failures += failed;
    std::size_t matched = trace.submission.matched_count();
    std::string error = !r.ok ? r.error : trace.error.value_or("");
    status << trace.topic << '\t' << (r.ok ? std::string(to_string(trace.termination)) : "error")
           << '\t' << trace.iterations.size() << '\t' << matched << '\t'
           << trace.submission.size() - matched << '\t' << error << '\n';
    auto ids = sim::submission_ids(trace);
    if (!ids.empty()) run_file.set_topic(trace.topic, ranked_entries(ids, tag));
    if (qrels && qrels->has_topic(trace.topic)) {
      scores[trace.topic] = average_precision(ids, *qrels, trace.topic);
    }
  }
  write_run(dir / "run.txt", run_file);
  write_file(dir / "status.tsv", status.str());
  if (!scores.empty()) {
    std::ostringstream s;
    s << "topic\tAP\n";
    char buf[32];
    double sum = 0.0;
    for (const auto& [topic, ap] : scores) {
      std::snprintf(buf, sizeof buf, "%.4f", ap);
      s << topic << '\t' << buf << '\n';
      sum += ap;
    }
    std::snprintf(buf, sizeof buf, "%.4f", sum / static_cast<double>(scores.size()));
    s << "mean\t" << buf << '\n';
    write_file(dir / "scores.tsv", s.str());
    out << "mean AP over " << scores.size() << " topics: " << buf << '\n';
  }
  out << results.size() - failures << " of " << results.size() << " topics completed; outputs in "
      << dir.string() << '\n';
  return failures == 0 ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------------------
// Subcommands

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

std::shared_ptr<const CorpusIndex> load_corpus_any(const std::string& path_text) {
  fs::path path = path_text;
  if (!fs::exists(path)) throw InputError("corpus not found: " + path.string());
  if (fs::is_directory(path)) return std::make_shared<CorpusIndex>(load_corpus_directory(path));
  fs::path ids = path;
  ids.replace_extension(".ids");
  if (!fs::exists(ids)) throw InputError("corpus id list not found: " + ids.string());
  return std::make_shared<CorpusIndex>(load_corpus(path, ids));
}

std::string require(const KeyValueConfig& cfg, const std::string& key) {
  auto v = cfg.get(key);
  if (!v || v->empty()) throw InputError("missing required setting '" + key + "'");
  return *v;
}

int cmd_run(const KeyValueConfig& cfg, std::ostream& out) {
  // Everything is loaded and checked before the output directory exists.
  EngineConfig engine = engine_config(cfg);
  auto topics = parse_topics(slurp(require(cfg, "topics")), require(cfg, "topics"));
  if (topics.empty()) throw InputError("topics file has no topics");
  auto corpus = load_corpus_any(require(cfg, "corpus"));
  std::optional<Qrels> qrels;
  if (auto q = cfg.get("qrels"); q && !q->empty()) qrels = read_qrels(*q);
  const std::string backend = cfg.get_string("backend", "sim");
  const std::size_t parallelism = std::max<std::size_t>(1, get_size(cfg, "parallelism", 1));
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));

  std::vector<TopicRun> runs;
  auto retrieval_for = [&](std::shared_ptr<const QueryEncoder> encoder) {
    return std::make_shared<EmbeddingRetrievalAgent>(corpus, std::move(encoder),
                                                     get_size(cfg, "retrieval_workers", 1));
  };
  if (backend == "sim") {
    if (!qrels) throw InputError("backend 'sim' judges from qrels; pass --qrels");
    auto policy = policy_config(cfg);
    auto retrieval = retrieval_for(nullptr);
    auto reformulation = std::make_shared<CentroidNudgeReformulator>(corpus, policy.alpha);
    std::shared_ptr<const OrchestrationAgent> orchestration;
    if (policy.orchestrator == sim::OrchestratorPolicy::always_explore) {
      orchestration = std::make_shared<AlwaysExploreOrchestrator>();
    } else {
      orchestration = std::make_shared<ThresholdOrchestrator>(
          policy.orchestrator == sim::OrchestratorPolicy::threshold ? policy.threshold : 0.0);
    }
    for (std::size_t i = 0; i < topics.size(); ++i) {
      const auto& t = topics[i];
      if (t.embedding.size() != corpus->dimension()) {
        throw InputError("topic " + t.id + ": backend 'sim' needs a query vector of dimension " +
                         std::to_string(corpus->dimension()));
      }
      auto rel = qrels->relevant(t.id);
      auto relevant = std::make_shared<RelevanceSet>(rel.begin(), rel.end());
      std::shared_ptr<const ReasoningAgent> reasoning;
      if (policy.accept_all) {
        reasoning = std::make_shared<AcceptAllReasoningAgent>();
      } else if (policy.tpr == 1.0 && policy.fpr == 0.0) {
        reasoning = std::make_shared<OracleReasoningAgent>(relevant);
      } else {
        reasoning = std::make_shared<NoisyReasoningAgent>(relevant, policy.tpr, policy.fpr,
                                                          derive_seed(seed, "noise", i));
      }
      runs.push_back({t.id, Query::original(t.text, t.embedding), engine,
                      {retrieval, reasoning, reformulation, orchestration}});
    }
  } else if (backend == "http") {
    llm::BackendConfig b;
    b.endpoint = require(cfg, "endpoint");
    b.model = cfg.get_string("model", "");
    const std::string key_env = cfg.get_string("api_key_env", "AVS_API_KEY");
    if (const char* key = std::getenv(key_env.c_str())) b.api_key = key;
    b.timeout = std::chrono::milliseconds(cfg.get_int("timeout_ms", 60000));
    b.max_tokens = static_cast<int>(cfg.get_int("max_tokens", 512));
    b.reformulation_temperature = cfg.get_double("reformulation_temperature", 0.7);
    llm::ChatRequest probe = b.request("probe", 0.0);
    try {
      probe.validate();
    } catch (const InvariantViolation& e) {
      throw InputError(e.what());
    }
    auto prompt_dir = cfg.get_string("prompts", llm::PromptLibrary::default_dir().string());
    auto prompts = std::make_shared<const llm::PromptLibrary>(llm::PromptLibrary::load(prompt_dir));
    llm::ClientOptions options;
    options.max_in_flight = static_cast<int>(cfg.get_int("max_in_flight", 8));
    auto video_root = require(cfg, "video_root");

    bool need_encoder = std::any_of(topics.begin(), topics.end(),
                                    [](const TopicLine& t) { return t.embedding.empty(); });
    if (need_encoder) require(cfg, "embed_endpoint");
    std::size_t frames = get_size(cfg, "frames", 0);
    llm::ReasoningOptions ro;
    ro.with_reasoning = cfg.get_bool("with_reasoning", false);
    ro.frames = frames;
    ro.parallelism = get_size(cfg, "judge_parallelism", 4);
    llm::ReformulationOptions fo;
    fo.use_memory = cfg.get_bool("use_memory", true);
    fo.word_cap = get_size(cfg, "word_cap", 30);
    if (cfg.get_bool("negation_check", true)) fo.negation_words = llm::default_negation_words();

    // Validation is over; from here on the run writes outputs.
    fs::path dir = make_output_dir(cfg, "run");
    options.audit_log = dir / "audit.jsonl";
    auto client = std::make_shared<llm::ChatClient>(options);
    std::shared_ptr<const QueryEncoder> encoder;
    if (need_encoder || cfg.contains("embed_endpoint")) {
      encoder = std::make_shared<llm::HttpQueryEncoder>(client, require(cfg, "embed_endpoint"),
                                                        cfg.get_string("embed_model", ""),
                                                        b.api_key, b.timeout);
    }
    auto retrieval = retrieval_for(encoder);
    auto reasoning = std::make_shared<llm::LlmReasoningAgent>(
        client, b, prompts, llm::directory_evidence(video_root, frames > 0), ro);
    auto orchestration = std::make_shared<llm::LlmOrchestrator>(client, b, prompts);
    auto reformulation = std::make_shared<llm::LlmReformulator>(client, b, prompts, fo);
    for (const auto& t : topics) {
      runs.push_back({t.id, Query::original(t.text, t.embedding), engine,
                      {retrieval, reasoning, reformulation, orchestration}});
    }
    echo_config(cfg, dir, out);
    int code = execute(runs, parallelism, dir, cfg.get_string("tag", "avs"),
                       qrels ? &*qrels : nullptr, out);
    auto usage = client->usage();
    out << "backend calls " << usage.calls << ", failures " << usage.failures << ", tokens "
        << usage.prompt_tokens << "+" << usage.completion_tokens << '\n';
    return code;
  } else {
    throw InputError("unknown backend '" + backend + "' (expected sim or http)");
  }

  fs::path dir = make_output_dir(cfg, "run");
  echo_config(cfg, dir, out);
  return execute(runs, parallelism, dir, cfg.get_string("tag", "avs"), qrels ? &*qrels : nullptr,
                 out);
}

int cmd_simulate(const KeyValueConfig& cfg, bool export_world, std::ostream& out) {
  EngineConfig engine = engine_config(cfg);
  auto params = world_params(cfg);
  auto policy = policy_config(cfg);
  const std::size_t parallelism = std::max<std::size_t>(1, get_size(cfg, "parallelism", 1));
  auto world = sim::generate_world(params);
  auto runs = sim::make_topic_runs(world, policy, engine);

  fs::path dir = make_output_dir(cfg, "simulate");
  echo_config(cfg, dir, out);
  write_qrels(dir / "qrels.txt", world.qrels);
  if (export_world) {
    save_corpus(*world.corpus, dir / "corpus.avsm", dir / "corpus.ids");
    std::vector<TopicLine> topics;
    for (const auto& t : world.topics) topics.push_back({t.id, t.text, t.initial_query});
    write_file(dir / "topics.tsv", format_topics(topics));
  }
  int code = execute(runs, parallelism, dir, cfg.get_string("tag", "avs"), &world.qrels, out);

  // Accumulated ground truth per topic, one column per bin.
  std::ostringstream curves;
  const std::size_t bins = engine.submission_length / engine.examination_length;
  curves << "topic";
  for (std::size_t b = 1; b <= bins; ++b) curves << "\tbin" << b;
  curves << '\n';
  for (const auto& t : world.topics) {
    auto trace = load_trace(dir / "traces" / (file_stem_for(t.id) + ".json"));
    auto curve = sim::accumulated_gt_curve(trace, world.qrels);
    curves << t.id;
    for (auto c : curve) curves << '\t' << c;
    curves << '\n';
  }
  write_file(dir / "curves.tsv", curves.str());
  return code;
}

int cmd_ablate(const KeyValueConfig& cfg, std::ostream& out) {
  EngineConfig engine = engine_config(cfg);
  auto params = world_params(cfg);
  auto policy = policy_config(cfg);
  sim::SuiteOptions options;
  options.config = engine;
  options.parallelism = std::max<std::size_t>(1, get_size(cfg, "parallelism", 1));
  const std::size_t seeds = get_size(cfg, "seeds", 5);
  if (seeds == 0) throw InputError("seeds must be >= 1");
  for (std::size_t s = 0; s < seeds; ++s) options.seeds.push_back(params.seed + s);
  std::string grid = cfg.get_string("grid", "60x50,30x100,50x100");
  std::istringstream gs(grid);
  std::string cell;
  while (std::getline(gs, cell, ',')) {
    auto x = cell.find('x');
    if (x == std::string::npos) throw InputError("grid cell '" + cell + "' is not TxK");
    KeyValueConfig tmp;
    tmp.set("T", cell.substr(0, x));
    tmp.set("k", cell.substr(x + 1));
    tmp.set("L", std::to_string(engine.submission_length));
    auto e = engine_config(tmp);
    options.sensitivity_grid.emplace_back(e.max_iterations, e.examination_length);
  }
  auto arms = sim::stacking_arms(policy.threshold, policy.alpha, policy.tpr, policy.fpr);

  fs::path dir = make_output_dir(cfg, "ablate");
  echo_config(cfg, dir, out);
  auto report = sim::ablation_suite(params, arms, options);
  write_file(dir / "report.tsv", report.to_tsv());
  write_file(dir / "report.json", report.to_json().dump(2) + "\n");
  write_file(dir / "curves.tsv", report.curves_tsv());
  out << report.to_tsv() << "outputs in " << dir.string() << '\n';
  return kExitOk;
}

int cmd_evaluate(const KeyValueConfig& cfg, const std::vector<std::string>& run_paths,
                 const std::string& sets_path, const std::string& strata_path, std::ostream& out) {
  if (run_paths.empty()) throw InputError("evaluate needs at least one run file");
  Qrels qrels = read_qrels(require(cfg, "qrels"));
  std::vector<NamedRun> runs;
  std::set<std::string> names;
  for (const auto& p : run_paths) {
    std::string name = fs::path(p).stem().string();
    for (int n = 2; names.contains(name); ++n) name = fs::path(p).stem().string() + "#" + std::to_string(n);
    names.insert(name);
    runs.push_back({name, read_run(p, get_size(cfg, "L", 1000))});
  }
  std::map<std::string, SamplingPlan> plans;
  if (!strata_path.empty()) {
    // Lines: topic stratum rate candidate
    std::istringstream in(slurp(strata_path));
    std::string line;
    std::size_t no = 0;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    while (std::getline(in, line)) {
      ++no;
      std::istringstream ls(line);
      std::string topic, stratum, candidate;
      double rate = 0;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      if (!(ls >> topic >> stratum >> rate >> candidate)) {
        throw FormatError(strata_path, no, "expected 'topic stratum rate candidate'");
      }
      auto& plan = plans[topic];
      auto [it, inserted] = index.emplace(std::make_pair(topic, stratum), plan.strata.size());
      if (inserted) plan.strata.push_back({rate, {}});
      if (plan.strata[it->second].rate != rate) {
        throw FormatError(strata_path, no, "stratum " + stratum + " has two sampling rates");
      }
      plan.strata[it->second].members.insert(candidate);
    }
    for (auto& [topic, plan] : plans) {
      try {
        plan.validate();
      } catch (const std::exception& e) {
        throw InputError(strata_path + ": topic " + topic + ": " + e.what());
      }
    }
  }
  std::map<std::string, std::string> sets;
  if (!sets_path.empty()) {
    std::istringstream in(slurp(sets_path));
    std::string topic, set;
    while (in >> topic >> set) sets[topic] = set;
  }
  auto report = compare_runs(runs, qrels, plans.empty() ? nullptr : &plans);

  fs::path dir = make_output_dir(cfg, "evaluate");
  echo_config(cfg, dir, out);
  std::string tsv = report.to_tsv();
  if (!sets.empty()) {
    std::ostringstream s;
    s << "\nrun\tflat_mean\tmean_of_sets\n";
    char buf[64];
    for (std::size_t r = 0; r < report.runs.size(); ++r) {
      std::map<std::string, double> per_topic;
      for (std::size_t t = 0; t < report.topics.size(); ++t) {
        per_topic[report.topics[t]] = report.scores[r][t];
      }
      auto m = set_means(per_topic, sets);
      std::snprintf(buf, sizeof buf, "\t%.4f\t%.4f\n", m.flat, m.mean_of_sets);
      s << report.runs[r] << buf;
    }
    tsv += s.str();
  }
  write_file(dir / "report.tsv", tsv);
  write_file(dir / "report.json", report.to_json().dump(2) + "\n");
  out << report.metric << " over " << report.topics.size() << " topics\n" << tsv;
  return kExitOk;
}

int cmd_trace(const std::string& path, std::size_t iteration, std::ostream& out) {
  out << narrate(load_trace(path), iteration);
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-agent explore/exploit video search: run, simulate, evaluate, ablate, trace"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  std::string config_path;
  FlagSet flags;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Key/value config file; flags override it")
        ->check(CLI::ExistingFile);
    flags.add(*sub, "out", "--out", "Root directory for the timestamped output directory");
  };
  auto engine = [&](CLI::App* sub) {
    flags.add(*sub, "T", "--T", "Maximum iterations (default 60)");
    flags.add(*sub, "k", "--k", "Candidates examined per iteration (default 50)");
    flags.add(*sub, "L", "--L", "Submission length (default 1000)");
    flags.add(*sub, "parallelism", "--parallelism", "Topics run concurrently");
    flags.add(*sub, "seed", "--seed", "Root seed");
  };
  auto policy = [&](CLI::App* sub) {
    flags.add(*sub, "orchestrator", "--orchestrator",
              "Simulated orchestrator: threshold, always_exploit or always_explore");
    flags.add(*sub, "threshold", "--threshold", "Exploit while precision >= threshold");
    flags.add(*sub, "alpha", "--alpha", "Centroid nudge step");
    flags.add(*sub, "tpr", "--tpr", "Simulated reasoning true-positive rate");
    flags.add(*sub, "fpr", "--fpr", "Simulated reasoning false-positive rate");
  };

  auto* run_cmd = app.add_subcommand("run", "Run the loop over a topics file and a corpus");
  common(run_cmd);
  engine(run_cmd);
  policy(run_cmd);
  flags.add(*run_cmd, "topics", "--topics", "Topics file: id<TAB>text[<TAB>vector]");
  flags.add(*run_cmd, "corpus", "--corpus", "Corpus matrix (.avsm, ids beside it) or .vec directory");
  flags.add(*run_cmd, "qrels", "--qrels", "Qrels; required by the sim backend, scored if given");
  flags.add(*run_cmd, "backend", "--backend", "sim or http");
  flags.add(*run_cmd, "endpoint", "--endpoint", "Chat-completions URL for the http backend");
  flags.add(*run_cmd, "tag", "--tag", "Run tag written to the run file");

  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic world and run the loop on it");
  common(sim_cmd);
  engine(sim_cmd);
  policy(sim_cmd);
  flags.add(*sim_cmd, "world.kind", "--world", "standard or two_cluster");
  bool export_world = false;
  sim_cmd->add_flag("--export", export_world, "Also write corpus.avsm, corpus.ids and topics.tsv");

  auto* eval_cmd = app.add_subcommand("evaluate", "Score run files against qrels");
  common(eval_cmd);
  flags.add(*eval_cmd, "qrels", "--qrels", "Qrels file");
  flags.add(*eval_cmd, "L", "--L", "Maximum entries per topic in a run (default 1000)");
  std::vector<std::string> run_paths;
  eval_cmd->add_option("runs", run_paths, "Run files")->check(CLI::ExistingFile);
  std::string sets_path, strata_path;
  eval_cmd->add_option("--sets", sets_path, "Topic-to-set map for per-set means")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--strata", strata_path,
                       "Sampling strata (topic stratum rate candidate); reports inferred AP")
      ->check(CLI::ExistingFile);

  auto* ablate_cmd = app.add_subcommand("ablate", "Agent-stacking ablation and (T,k) sensitivity");
  common(ablate_cmd);
  engine(ablate_cmd);
  policy(ablate_cmd);
  flags.add(*ablate_cmd, "world.kind", "--world", "standard or two_cluster");
  flags.add(*ablate_cmd, "seeds", "--seeds", "Number of world seeds (default 5)");
  flags.add(*ablate_cmd, "grid", "--grid", "Sensitivity grid, e.g. 60x50,30x100,50x100");

  auto* trace_cmd = app.add_subcommand("trace", "Print the reasoning trace of one topic");
  std::string trace_path;
  std::size_t iteration = 0;
  trace_cmd->add_option("trace", trace_path, "Trace file (.json or .jsonl)")->required();
  trace_cmd->add_option("--iteration", iteration, "Show only this iteration (1-based)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (trace_cmd->parsed()) return cmd_trace(trace_path, iteration, out);
    KeyValueConfig cfg = merge(config_path, flags);
    if (run_cmd->parsed()) return cmd_run(cfg, out);
    if (sim_cmd->parsed()) return cmd_simulate(cfg, export_world, out);
    if (ablate_cmd->parsed()) return cmd_ablate(cfg, out);
    if (eval_cmd->parsed()) return cmd_evaluate(cfg, run_paths, sets_path, strata_path, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitPartial;
  }
  return kExitUsage;
}

}  // namespace avs::cli
