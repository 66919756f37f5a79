#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "avs/agents.hpp"
#include "avs/llm/client.hpp"
#include "avs/llm/prompt.hpp"

namespace avs::llm {

/// Where and how to call the model.
struct BackendConfig {
  std::string endpoint;
  std::string model;
  std::string api_key;
  std::chrono::milliseconds timeout{60000};
  int max_tokens = 512;
  /// Used for verdict and action prompts.
  double decision_temperature = 0.0;
  double reformulation_temperature = 0.7;

  ChatRequest request(std::string prompt, double temperature) const;
};

/// Video evidence for a candidate: a path placed into the prompt and,
/// optionally, a directory of frames to attach.
struct VideoEvidence {
  std::string path;
  std::optional<std::filesystem::path> frame_dir;
};

using EvidenceResolver = std::function<VideoEvidence(const CandidateId&)>;

/// Resolves `<root>/<id>`; with `attach_frames` the same path doubles as the
/// frame directory.
EvidenceResolver directory_evidence(std::filesystem::path root, bool attach_frames);

struct ReasoningOptions {
  bool with_reasoning = false;  // use the evalReasoning template
  std::size_t frames = 0;       // frames to inline per candidate; 0 sends the path only
  std::size_t parallelism = 4;  // concurrent candidate judgments
};

/// Judges each candidate of a slice with one single-shot prompt. A candidate
/// whose output cannot be parsed after one retry is unmatched; one whose
/// backend call fails is unmatched with reasoning "backend-error".
class LlmReasoningAgent final : public ReasoningAgent {
 public:
  LlmReasoningAgent(std::shared_ptr<ChatClient> client, BackendConfig backend,
                    std::shared_ptr<const PromptLibrary> prompts, EvidenceResolver evidence,
                    ReasoningOptions options = {});

  Judgment judge(const Query& query, std::span<const ScoredCandidate> slice) const override;

 private:
  Verdict judge_one(const Query& query, const CandidateId& id) const;

  std::shared_ptr<ChatClient> client_;
  BackendConfig backend_;
  std::shared_ptr<const PromptLibrary> prompts_;
  EvidenceResolver evidence_;
  ReasoningOptions options_;
};

/// Asks the model for exploit/explore. Unparseable output after one retry
/// defaults to exploit.
class LlmOrchestrator final : public OrchestrationAgent {
 public:
  LlmOrchestrator(std::shared_ptr<ChatClient> client, BackendConfig backend,
                  std::shared_ptr<const PromptLibrary> prompts);

  Action decide(const EvalSummary& summary, const Query& current) const override;

 private:
  std::shared_ptr<ChatClient> client_;
  BackendConfig backend_;
  std::shared_ptr<const PromptLibrary> prompts_;
};

struct ReformulationOptions {
  /// refineMemory (with memory bank and decision reasoning) or the plain refine
  /// template.
  bool use_memory = true;
  std::size_t word_cap = 30;
  std::vector<std::string> negation_words;  // empty disables the check
};

/// Textual reformulation. Outputs with missing tags, too many words or a
/// negation word get one retry; a second failure throws ParseFailure.
class LlmReformulator final : public ReformulationAgent {
 public:
  LlmReformulator(std::shared_ptr<ChatClient> client, BackendConfig backend,
                  std::shared_ptr<const PromptLibrary> prompts, ReformulationOptions options);

  Query reformulate(const ReformulationRequest& request) const override;

 private:
  std::shared_ptr<ChatClient> client_;
  BackendConfig backend_;
  std::shared_ptr<const PromptLibrary> prompts_;
  ReformulationOptions options_;
};

/// Text encoder behind an embeddings endpoint (`{"input": text}` in,
/// `data[0].embedding` out). Results are cached by text.
class HttpQueryEncoder final : public QueryEncoder {
 public:
  HttpQueryEncoder(std::shared_ptr<ChatClient> client, std::string endpoint, std::string model,
                   std::string api_key, std::chrono::milliseconds timeout);
  std::vector<float> encode(const Query& query) const override;

 private:
  std::shared_ptr<ChatClient> client_;
  std::string endpoint_;
  std::string model_;
  std::string api_key_;
  std::chrono::milliseconds timeout_;
  mutable std::mutex cache_mutex_;
  mutable std::unordered_map<std::string, std::vector<float>> cache_;
};

}  // namespace avs::llm
