#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "avs/cli.hpp"
#include "avs/errors.hpp"
#include "avs/orchestrator.hpp"

using namespace avs;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "avs");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

fs::path only_subdir(const fs::path& root) {
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) dirs.push_back(e.path());
  REQUIRE(dirs.size() == 1);
  return dirs[0];
}

}  // namespace

TEST_CASE("topics files") {
  auto t = cli::parse_topics("# header\n1001\ta dog\n1002\ta cat\t1,0.5,-2\n\n");
  REQUIRE(t.size() == 2);
  CHECK(t[1].embedding == std::vector<float>{1.0f, 0.5f, -2.0f});
  CHECK(cli::parse_topics(cli::format_topics(t)).size() == 2);
  CHECK(cli::parse_topics(cli::format_topics(t))[1].embedding == t[1].embedding);
  CHECK_THROWS_AS(cli::parse_topics("1001 no tab\n"), FormatError);
  CHECK_THROWS_AS(cli::parse_topics("1\ta\n1\tb\n"), FormatError);
  CHECK_THROWS_AS(cli::parse_topics("1\ta\t1,x\n"), FormatError);
}

TEST_CASE("usage errors exit 2 and create nothing") {
  TempDir tmp("avs_cli_usage");
  auto out = (tmp.path / "out").string();
  CHECK(invoke({}).code == cli::kExitUsage);
  CHECK(invoke({"frobnicate"}).code == cli::kExitUsage);

  write(tmp.path / "topics.tsv", "1\ta dog\t1,0\n");
  auto r = invoke({"run", "--topics", (tmp.path / "topics.tsv").string(), "--corpus",
                   (tmp.path / "missing.avsm").string(), "--qrels", "x", "--out", out});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("missing.avsm") != std::string::npos);
  CHECK_FALSE(fs::exists(out));

  r = invoke({"simulate", "--T", "0", "--out", out});
  CHECK(r.code == cli::kExitUsage);
  CHECK_FALSE(fs::exists(out));

  write(tmp.path / "bad.toml", "T = sixty\n");
  r = invoke({"simulate", "--config", (tmp.path / "bad.toml").string(), "--out", out});
  CHECK(r.code == cli::kExitUsage);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("simulate, re-run, evaluate and trace") {
  TempDir tmp("avs_cli_flow");
  auto root = tmp.path / "out";
  write(tmp.path / "w.toml", "k = 25\n[world]\ncorpus_size = 1500\ntopics = 2\ndimension = 12\n");

  auto sim = invoke({"simulate", "--config", (tmp.path / "w.toml").string(), "--T", "8", "--L",
                     "200", "--export", "--out", root.string()});
  REQUIRE(sim.code == cli::kExitOk);
  CHECK(sim.out.find("T = 8") != std::string::npos);
  CHECK(sim.out.find("k = 25") != std::string::npos);
  CHECK(sim.out.find("L = 200") != std::string::npos);
  auto sdir = only_subdir(root);
  for (auto f : {"config.toml", "qrels.txt", "run.txt", "status.tsv", "curves.tsv", "corpus.avsm",
                 "corpus.ids", "topics.tsv", "traces/1001.json", "traces/1001.jsonl"}) {
    CHECK_MESSAGE(fs::exists(sdir / f), f);
  }

  // The exported world replays to the same run file.
  auto root2 = tmp.path / "out2";
  auto run = invoke({"run", "--topics", (sdir / "topics.tsv").string(), "--corpus",
                     (sdir / "corpus.avsm").string(), "--qrels", (sdir / "qrels.txt").string(),
                     "--T", "8", "--k", "25", "--L", "200", "--out", root2.string()});
  REQUIRE(run.code == cli::kExitOk);
  auto rdir = only_subdir(root2);
  std::ifstream a(sdir / "run.txt"), b(rdir / "run.txt");
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);

  auto ev = invoke({"evaluate", "--qrels", (sdir / "qrels.txt").string(), (sdir / "run.txt").string(),
                    "--out", (tmp.path / "out3").string()});
  CHECK(ev.code == cli::kExitOk);
  CHECK(ev.out.find("mean") != std::string::npos);

  auto tr = invoke({"trace", (sdir / "traces" / "1001.json").string(), "--iteration", "2"});
  CHECK(tr.code == cli::kExitOk);
  CHECK(tr.out.find("iteration 2") != std::string::npos);
  CHECK(tr.out.find("iteration 1 ") == std::string::npos);
  auto partial = invoke({"trace", (sdir / "traces" / "1001.jsonl").string()});
  CHECK(partial.out.find("partial trace") != std::string::npos);
  CHECK(cli::load_trace(sdir / "traces" / "1001.jsonl").iterations ==
        cli::load_trace(sdir / "traces" / "1001.json").iterations);
}

TEST_CASE("default configuration is echoed") {
  TempDir tmp("avs_cli_defaults");
  write(tmp.path / "w.toml", "[world]\ncorpus_size = 1200\ntopics = 1\ndimension = 8\n");
  auto r = invoke({"simulate", "--config", (tmp.path / "w.toml").string(), "--out",
                   (tmp.path / "o").string()});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find("T = 60") != std::string::npos);
  CHECK(r.out.find("k = 50") != std::string::npos);
  CHECK(r.out.find("L = 1000") != std::string::npos);
}

TEST_CASE("trace narration") {
  RunTrace empty;
  empty.topic = "9";
  CHECK(cli::narrate(empty).find("no iterations") != std::string::npos);

  TempDir tmp("avs_cli_trace");
  write(tmp.path / "bad.jsonl", "{\"topic\":\"1\",\"record\":{}}\n");
  try {
    cli::load_trace(tmp.path / "bad.jsonl");
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("record 1") != std::string::npos);
  }
  write(tmp.path / "empty.json", "");
  CHECK_THROWS_AS(cli::load_trace(tmp.path / "empty.json"), InputError);
}
