#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "json.hpp"

namespace avs::llm {

struct ChatMessage {
  std::string role;
  std::string content;
  /// Image data URIs or URLs sent alongside the text.
  std::vector<std::string> attachments;
};

struct ChatRequest {
  std::string endpoint;  // full URL of the chat-completions route
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_tokens = 512;
  std::chrono::milliseconds timeout{60000};
  std::string api_key;

  void validate() const;
  nlohmann::json body() const;
};

struct ChatResponse {
  std::string content;
  double latency_ms = 0.0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ClientOptions {
  /// Extra attempts after a transient failure.
  int retries = 1;
  std::chrono::milliseconds backoff{200};
  /// Upper bound on concurrent requests across all callers.
  int max_in_flight = 8;
  /// When set, every request/response pair is appended here as JSON lines.
  std::optional<std::filesystem::path> audit_log;
};

struct UsageTotals {
  std::int64_t calls = 0;
  std::int64_t failures = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double latency_ms = 0.0;
};

/// Chat-completions client over HTTP(S). Safe for concurrent use.
class ChatClient {
 public:
  explicit ChatClient(ClientOptions options = {});
  ~ChatClient();

  ChatClient(const ChatClient&) = delete;
  ChatClient& operator=(const ChatClient&) = delete;

  /// Returns the first choice's message content. Throws TransportError once
  /// retries are exhausted on timeouts, non-2xx statuses or bad envelopes.
  ChatResponse complete(const ChatRequest& request);

  /// POSTs a JSON body and returns the decoded JSON reply, with the same retry
  /// and in-flight rules as complete().
  nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                           std::chrono::milliseconds timeout, const std::string& api_key = {});

  UsageTotals usage() const;

 private:
  std::string send_once(const std::string& url, const std::string& payload,
                        std::chrono::milliseconds timeout, const std::string& api_key);
  std::string send(const std::string& url, const std::string& payload,
                   std::chrono::milliseconds timeout, const std::string& api_key);
  void audit(const nlohmann::json& entry);

  ClientOptions options_;
  std::counting_semaphore<1024> in_flight_;
  std::mutex audit_mutex_;
  std::ofstream audit_out_;
  mutable std::mutex usage_mutex_;
  UsageTotals usage_;
};

/// Splits "http://host:port/path" into ("http://host:port", "/path").
std::pair<std::string, std::string> split_url(const std::string& url);

/// `count` image files sampled uniformly from a frame directory, as base64
/// data URIs in file-name order.
std::vector<std::string> sample_frame_attachments(const std::filesystem::path& dir,
                                                  std::size_t count);

}  // namespace avs::llm
