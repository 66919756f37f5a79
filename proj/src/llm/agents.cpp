#include "avs/llm/agents.hpp"

#include <atomic>
#include <thread>

#include "avs/errors.hpp"
#include "avs/llm/parse.hpp"

namespace avs::llm {

namespace fs = std::filesystem;

ChatRequest BackendConfig::request(std::string prompt, double temperature) const {
  ChatRequest r;
  r.endpoint = endpoint;
  r.model = model;
  r.api_key = api_key;
  r.timeout = timeout;
  r.max_tokens = max_tokens;
  r.temperature = temperature;
  r.messages.push_back({"user", std::move(prompt), {}});
  return r;
}

EvidenceResolver directory_evidence(fs::path root, bool attach_frames) {
  return [root = std::move(root), attach_frames](const CandidateId& id) {
    VideoEvidence ev;
    ev.path = (root / id).string();
    if (attach_frames) ev.frame_dir = root / id;
    return ev;
  };
}

LlmReasoningAgent::LlmReasoningAgent(std::shared_ptr<ChatClient> client, BackendConfig backend,
                                     std::shared_ptr<const PromptLibrary> prompts,
                                     EvidenceResolver evidence, ReasoningOptions options)
    : client_(std::move(client)),
      backend_(std::move(backend)),
      prompts_(std::move(prompts)),
      evidence_(std::move(evidence)),
      options_(options) {
  if (!client_ || !prompts_ || !evidence_) {
    throw InvariantViolation("reasoning agent needs a client, prompts and an evidence resolver");
  }
}

Verdict LlmReasoningAgent::judge_one(const Query& query, const CandidateId& id) const {
  const auto& tmpl = prompts_->get(options_.with_reasoning ? TemplateName::evalReasoning
                                                           : TemplateName::eval);
  try {
    VideoEvidence ev = evidence_(id);
    ChatRequest req = backend_.request(
        render(tmpl, {{"query", query.text}, {"Video_path", ev.path}}),
        backend_.decision_temperature);
    if (options_.frames > 0 && ev.frame_dir) {
      req.messages.front().attachments = sample_frame_attachments(*ev.frame_dir, options_.frames);
    }
    for (int attempt = 0; attempt < 2; ++attempt) {
      try {
        auto parsed = parse_verdict(client_->complete(req).content, options_.with_reasoning);
        return {id, parsed.matched, parsed.reasoning};
      } catch (const ParseFailure&) {
      }
    }
    return {id, false, options_.with_reasoning ? std::optional<std::string>("parse-failure")
                                               : std::nullopt};
  } catch (const std::exception&) {
    return {id, false, std::string("backend-error")};
  }
}

Judgment LlmReasoningAgent::judge(const Query& query, std::span<const ScoredCandidate> slice) const {
  std::vector<Verdict> verdicts(slice.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < slice.size(); i = next++) {
      verdicts[i] = judge_one(query, slice[i].id);
    }
  };
  std::size_t n = std::clamp<std::size_t>(options_.parallelism, 1, std::max<std::size_t>(1, slice.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
  }
  return assemble_judgment(slice, std::move(verdicts));
}

LlmOrchestrator::LlmOrchestrator(std::shared_ptr<ChatClient> client, BackendConfig backend,
                                 std::shared_ptr<const PromptLibrary> prompts)
    : client_(std::move(client)), backend_(std::move(backend)), prompts_(std::move(prompts)) {
  if (!client_ || !prompts_) throw InvariantViolation("orchestrator needs a client and prompts");
}

Action LlmOrchestrator::decide(const EvalSummary& summary, const Query& current) const {
  auto prompt = render(prompts_->get(TemplateName::action),
                       {{"query", current.text}, {"eval_summary", format_eval_summary(summary)}});
  auto req = backend_.request(std::move(prompt), backend_.decision_temperature);
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      auto parsed = parse_action(client_->complete(req).content);
      if (parsed.reasoning.empty()) parsed.reasoning = "(no reasoning given)";
      return {parsed.kind, parsed.reasoning};
    } catch (const ParseFailure&) {
    }
  }
  return {ActionKind::exploit, "parse-failure default"};
}

LlmReformulator::LlmReformulator(std::shared_ptr<ChatClient> client, BackendConfig backend,
                                 std::shared_ptr<const PromptLibrary> prompts,
                                 ReformulationOptions options)
    : client_(std::move(client)),
      backend_(std::move(backend)),
      prompts_(std::move(prompts)),
      options_(std::move(options)) {
  if (!client_ || !prompts_) throw InvariantViolation("reformulator needs a client and prompts");
}

Query LlmReformulator::reformulate(const ReformulationRequest& request) const {
  std::string prompt;
  if (options_.use_memory) {
    prompt = render(prompts_->get(TemplateName::refineMemory),
                    {{"memory_bank", serialize_memory(request.memory)},
                     {"action_decision_reasoning", std::string(request.decision_reasoning)},
                     {"original_query", request.original.text},
                     {"query", request.previous.text}});
  } else {
    prompt = render(prompts_->get(TemplateName::refine),
                    {{"original_query", request.original.text}, {"query", request.previous.text}});
  }
  auto req = backend_.request(std::move(prompt), backend_.reformulation_temperature);

  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      auto parsed = parse_reformulation(client_->complete(req).content, options_.word_cap);
      auto negations = negation_words_in(parsed.text, options_.negation_words);
      if (!negations.empty()) {
        last_error = "reformulation uses negation word '" + negations.front() + "'";
        continue;
      }
      if (parsed.text == request.previous.text) {
        last_error = "reformulation repeated the previous query";
        continue;
      }
      std::string reasoning = parsed.reasoning.value_or("");
      if (reasoning.empty()) reasoning = "(no reasoning given)";
      return Query::reformulated(parsed.text, std::move(reasoning));
    } catch (const ParseFailure& e) {
      last_error = e.what();
    }
  }
  throw ParseFailure(last_error);
}

HttpQueryEncoder::HttpQueryEncoder(std::shared_ptr<ChatClient> client, std::string endpoint,
                                   std::string model, std::string api_key,
                                   std::chrono::milliseconds timeout)
    : client_(std::move(client)),
      endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      api_key_(std::move(api_key)),
      timeout_(timeout) {
  if (!client_ || endpoint_.empty()) throw InvariantViolation("encoder needs a client and endpoint");
}

std::vector<float> HttpQueryEncoder::encode(const Query& query) const {
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(query.text); it != cache_.end()) return it->second;
  }
  nlohmann::json body{{"input", query.text}};
  if (!model_.empty()) body["model"] = model_;
  auto reply = client_->post_json(endpoint_, body, timeout_, api_key_);
  std::vector<float> vec;
  try {
    vec = reply.at("data").at(0).at("embedding").get<std::vector<float>>();
  } catch (const std::exception&) {
    throw TransportError("malformed embeddings reply from " + endpoint_);
  }
  if (vec.empty()) throw TransportError("empty embedding from " + endpoint_);
  std::lock_guard lock(cache_mutex_);
  cache_.emplace(query.text, vec);
  return vec;
}

}  // namespace avs::llm
