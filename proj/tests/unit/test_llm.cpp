#include "doctest.h"

#include <atomic>
#include <functional>
#include <thread>

#include <httplib.h>

#include "avs/errors.hpp"
#include "avs/llm/agents.hpp"
#include "avs/llm/client.hpp"
#include "avs/llm/parse.hpp"
#include "avs/llm/prompt.hpp"

using namespace avs;
using namespace avs::llm;
using nlohmann::json;

namespace {

/// Local chat-completions stub. `reply` maps the prompt text to the model
/// output, or to an HTTP status when it returns a negative number.
class Stub {
 public:
  using Reply = std::function<std::pair<int, std::string>(const std::string& prompt)>;

  explicit Stub(Reply reply) : reply_(std::move(reply)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls_;
      auto body = json::parse(req.body);
      const auto& content = body["messages"][0]["content"];
      std::string prompt = content.is_string() ? content.get<std::string>()
                                               : content[0]["text"].get<std::string>();
      if (content.is_array()) attachments_ = content.size() - 1;
      auto [status, text] = reply_(prompt);
      res.status = status;
      json message = json::object({{"role", "assistant"}, {"content", text}});
      json out = json::object();
      out["choices"] = json::array({json::object({{"message", message}})});
      out["usage"] = json::object({{"prompt_tokens", 11}, {"completion_tokens", 3}});
      res.set_content(status == 200 ? out.dump() : "oops", "application/json");
    });
    server_.Post("/v1/embeddings", [this](const httplib::Request&, httplib::Response& res) {
      ++calls_;
      res.set_content(R"({"data":[{"embedding":[1.0,0.0]}]})", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Stub() {
    server_.stop();
    thread_.join();
  }

  std::string url(const std::string& path = "/v1/chat/completions") const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }
  int calls() const { return calls_; }
  std::size_t attachments() const { return attachments_; }

 private:
  Reply reply_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> calls_{0};
  std::atomic<std::size_t> attachments_{0};
};

BackendConfig backend(const Stub& stub) {
  BackendConfig b;
  b.endpoint = stub.url();
  b.model = "stub";
  b.timeout = std::chrono::milliseconds(3000);
  return b;
}

std::shared_ptr<const PromptLibrary> prompts() {
  return std::make_shared<const PromptLibrary>(PromptLibrary::load(PromptLibrary::default_dir()));
}

ClientOptions fast() {
  ClientOptions o;
  o.backoff = std::chrono::milliseconds(1);
  return o;
}

}  // namespace

TEST_CASE("templates render every placeholder") {
  PromptTemplate t(TemplateName::action, "Q: {query}\nS: {eval_summary}\n{ \"action\": 1 }");
  CHECK(t.placeholders() == std::vector<std::string>{"query", "eval_summary"});
  CHECK(render(t, {{"query", "a cat"}, {"eval_summary", "k=50 matched=3 unmatched=47"}}) ==
        "Q: a cat\nS: k=50 matched=3 unmatched=47\n{ \"action\": 1 }");
  try {
    render(t, {{"eval_summary", "x"}});
    FAIL("expected MissingPlaceholder");
  } catch (const MissingPlaceholder& e) {
    CHECK(e.name() == "query");
  }
  CHECK_THROWS_AS(PromptTemplate(TemplateName::eval, "{bogus}"), InvariantViolation);

  PromptTemplate mem(TemplateName::refineMemory, "History: {memory_bank}");
  CHECK(render(mem, {{"memory_bank", ""}}) == "History: (no history)");

  auto lib = prompts();
  for (auto name : kAllTemplates) CHECK_FALSE(lib->get(name).body().empty());
  CHECK(lib->get(TemplateName::eval).placeholders() ==
        std::vector<std::string>{"query", "Video_path"});
}

TEST_CASE("memory serialization and eval summary") {
  MemoryBank m;
  CHECK(serialize_memory(m) == "(no history)");
  m.append({0, Query::original("a \"red\" car"), 0.64, {50, 32, 18}, {0, 50}});
  m.append({1, Query::reformulated("b", "r"), 0.06, {50, 3, 47}, {0, 50}});
  CHECK(serialize_memory(m) ==
        "step 0: query \"a \\\"red\\\" car\" precision 0.640 window [0, 50)\n"
        "step 1: query \"b\" precision 0.060 window [0, 50)");
  CHECK(format_eval_summary({50, 3, 47}) == "k=50 matched=3 unmatched=47");
}

TEST_CASE("output parsers") {
  auto a = parse_action("Sure!\n{\n  \"action\": \"Explore\",\n  \"reasoning\": \"only 3 hits\"\n}");
  CHECK(a.kind == ActionKind::explore);
  CHECK(a.reasoning == "only 3 hits");
  CHECK_THROWS_AS(parse_action("{\"action\": \"wait\"}"), ParseFailure);
  CHECK_THROWS_AS(parse_action("explore"), ParseFailure);

  CHECK(parse_verdict("Unmatched.", false).matched == false);
  CHECK(parse_verdict("The answer: matched", false).matched == true);
  CHECK_THROWS_AS(parse_verdict("mismatched", false), ParseFailure);
  auto v = parse_verdict("{\"Evaluation\": \"matched\", \"reasoning\": \"a dog\"}", true);
  CHECK(v.matched);
  CHECK(v.reasoning == "a dog");
  CHECK_THROWS_AS(parse_verdict("matched", true), ParseFailure);

  auto r = parse_reformulation("<think>\nwhy\n</think>\n<reformulate>\n a dog surfing \n</reformulate>");
  CHECK(r.text == "a dog surfing");
  CHECK(r.reasoning == "why");
  CHECK_THROWS_AS(parse_reformulation("<reformulate></reformulate>"), ParseFailure);
  CHECK_THROWS_AS(parse_reformulation("<reformulate>a b c</reformulate>", 2), ParseFailure);
  CHECK_THROWS_AS(parse_reformulation("a dog"), ParseFailure);

  CHECK(parse_reformulation(format_reformulation("x y", std::string("z"))).reasoning == "z");
  CHECK(parse_action(format_action(ActionKind::exploit, "ok")).kind == ActionKind::exploit);
  CHECK(parse_verdict(format_verdict(false, std::nullopt), false).matched == false);
}

TEST_CASE("negation words") {
  auto words = default_negation_words();
  CHECK(negation_words_in("a man not wearing a hat", words) == std::vector<std::string>{"not"});
  CHECK(negation_words_in("he doesn't smile", words) == std::vector<std::string>{"n't"});
  CHECK(negation_words_in("Nothing but net", words) == std::vector<std::string>{"nothing"});
  CHECK(negation_words_in("a notable knot in the north", words).empty());
}

TEST_CASE("chat client against a local stub") {
  SUBCASE("echo") {
    Stub stub([](const std::string& p) { return std::pair{200, "echo: " + p}; });
    ChatClient client(fast());
    auto res = client.complete(backend(stub).request("hello", 0.0));
    CHECK(res.content == "echo: hello");
    CHECK(res.prompt_tokens == 11);
    CHECK(client.usage().calls == 1);
    CHECK(client.usage().completion_tokens == 3);
  }
  SUBCASE("500 then 200 is retried") {
    std::atomic<int> n{0};
    Stub stub([&](const std::string&) {
      return n++ == 0 ? std::pair{500, std::string()} : std::pair{200, std::string("fine")};
    });
    ChatClient client(fast());
    CHECK(client.complete(backend(stub).request("x", 0.0)).content == "fine");
    CHECK(stub.calls() == 2);
  }
  SUBCASE("persistent 500 fails after one retry") {
    Stub stub([](const std::string&) { return std::pair{503, std::string()}; });
    ChatClient client(fast());
    CHECK_THROWS_AS(client.complete(backend(stub).request("x", 0.0)), TransportError);
    CHECK(stub.calls() == 2);
    CHECK(client.usage().failures == 1);
  }
  SUBCASE("unreachable host") {
    int port;
    {
      httplib::Server probe;
      port = probe.bind_to_any_port("127.0.0.1");
    }
    ChatClient client(fast());
    ChatRequest req;
    req.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    req.messages.push_back({"user", "x", {}});
    req.timeout = std::chrono::milliseconds(500);
    CHECK_THROWS_AS(client.complete(req), TransportError);
  }
  CHECK_THROWS_AS(split_url("localhost:8000"), InputError);
  CHECK(split_url("https://h:1/a/b").second == "/a/b");
}

TEST_CASE("LLM agents drive prompts through the stub") {
  Stub stub([](const std::string& p) {
    if (p.find("Video path") != std::string::npos) {
      return std::pair{200, std::string(p.find("good") != std::string::npos ? "matched" : "unmatched")};
    }
    if (p.find("rank list satisfactory") != std::string::npos) {
      return std::pair{200, std::string(p.find("matched=0") != std::string::npos
                                            ? "{\"action\": \"explore\", \"reasoning\": \"none\"}"
                                            : "no idea")};
    }
    if (p.find("not yet") != std::string::npos) {
      return std::pair{200, std::string("<reformulate>a dog that is not wet</reformulate>")};
    }
    return std::pair{200, std::string("<think>broaden</think><reformulate>a dog near water</reformulate>")};
  });
  auto client = std::make_shared<ChatClient>(fast());
  auto b = backend(stub);

  LlmReasoningAgent judge(client, b, prompts(), directory_evidence("/videos", false));
  std::vector<ScoredCandidate> slice{{"good1", 0.9}, {"bad1", 0.8}, {"good2", 0.7}};
  auto j = judge.judge(Query::original("dogs"), slice);
  CHECK(j.matched == std::vector<CandidateId>{"good1", "good2"});

  LlmOrchestrator orch(client, b, prompts());
  CHECK(orch.decide({50, 0, 50}, Query::original("q")).kind == ActionKind::explore);
  auto fallback = orch.decide({50, 9, 41}, Query::original("q"));
  CHECK(fallback.kind == ActionKind::exploit);
  CHECK(fallback.reasoning == "parse-failure default");

  ReformulationOptions ro;
  ro.negation_words = default_negation_words();
  LlmReformulator refine(client, b, prompts(), ro);
  MemoryBank memory;
  auto original = Query::original("a dog");
  std::vector<CandidateId> none;
  auto q = refine.reformulate({original, original, memory, "low precision", none, none});
  CHECK(q.text == "a dog near water");
  CHECK(q.reasoning == "broaden");
  CHECK(q.origin == QueryOrigin::reformulated);

  auto stubborn = Query::original("not yet");
  CHECK_THROWS_AS(refine.reformulate({stubborn, stubborn, memory, "r", none, none}), ParseFailure);

  HttpQueryEncoder enc(client, stub.url("/v1/embeddings"), "", "", std::chrono::milliseconds(2000));
  int before = stub.calls();
  CHECK(enc.encode(Query::original("x")) == std::vector<float>{1.0f, 0.0f});
  enc.encode(Query::original("x"));
  CHECK(stub.calls() == before + 1);
}

TEST_CASE("backend errors become unmatched verdicts") {
  Stub stub([](const std::string&) { return std::pair{500, std::string()}; });
  auto client = std::make_shared<ChatClient>(fast());
  ReasoningOptions opts;
  opts.parallelism = 2;
  LlmReasoningAgent judge(client, backend(stub), prompts(), directory_evidence("/v", false), opts);
  std::vector<ScoredCandidate> slice{{"a", 0.9}, {"b", 0.8}};
  auto j = judge.judge(Query::original("q"), slice);
  CHECK(j.matched.empty());
  CHECK(j.verdicts[0].reasoning == "backend-error");
}
