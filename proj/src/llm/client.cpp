#include "avs/llm/client.hpp"

#include <algorithm>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "avs/errors.hpp"

namespace avs::llm {

namespace fs = std::filesystem;
using json = nlohmann::json;

void ChatRequest::validate() const {
  if (endpoint.empty()) throw InvariantViolation("chat request has no endpoint");
  if (timeout.count() <= 0) throw InvariantViolation("chat request timeout must be positive");
  if (messages.empty()) throw InvariantViolation("chat request has no messages");
}

json ChatRequest::body() const {
  json msgs = json::array();
  for (const auto& m : messages) {
    if (m.attachments.empty()) {
      msgs.push_back({{"role", m.role}, {"content", m.content}});
      continue;
    }
    json parts = json::array();
    parts.push_back({{"type", "text"}, {"text", m.content}});
    for (const auto& a : m.attachments) {
      parts.push_back({{"type", "image_url"}, {"image_url", {{"url", a}}}});
    }
    msgs.push_back({{"role", m.role}, {"content", parts}});
  }
  json j{{"messages", msgs}, {"temperature", temperature}, {"max_tokens", max_tokens}};
  if (!model.empty()) j["model"] = model;
  return j;
}

std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw InputError("endpoint is not an absolute URL: " + url);
  auto path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, "/"};
  return {url.substr(0, path), url.substr(path)};
}

ChatClient::ChatClient(ClientOptions options)
    : options_(std::move(options)), in_flight_(std::clamp(options_.max_in_flight, 1, 1024)) {
  if (options_.audit_log) {
    audit_out_.open(*options_.audit_log, std::ios::app);
    if (!audit_out_) throw InputError("cannot open audit log " + options_.audit_log->string());
  }
}

ChatClient::~ChatClient() = default;

UsageTotals ChatClient::usage() const {
  std::lock_guard lock(usage_mutex_);
  return usage_;
}

void ChatClient::audit(const json& entry) {
  if (!audit_out_.is_open()) return;
  std::lock_guard lock(audit_mutex_);
  audit_out_ << entry.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  audit_out_.flush();
}

std::string ChatClient::send_once(const std::string& url, const std::string& payload,
                                  std::chrono::milliseconds timeout, const std::string& api_key) {
  auto [base, path] = split_url(url);
  httplib::Client cli(base);
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

  in_flight_.acquire();
  auto result = cli.Post(path, headers, payload, "application/json");
  in_flight_.release();

  if (!result) {
    throw TransportError("request to " + url + " failed: " + httplib::to_string(result.error()));
  }
  if (result->status < 200 || result->status >= 300) {
    throw TransportError("request to " + url + " returned HTTP " + std::to_string(result->status));
  }
  return result->body;
}

std::string ChatClient::send(const std::string& url, const std::string& payload,
                             std::chrono::milliseconds timeout, const std::string& api_key) {
  for (int attempt = 0;; ++attempt) {
    try {
      return send_once(url, payload, timeout, api_key);
    } catch (const TransientError& e) {
      audit({{"url", url}, {"attempt", attempt}, {"error", e.what()}});
      if (attempt >= options_.retries) throw;
      std::this_thread::sleep_for(options_.backoff * (1 << attempt));
    }
  }
}

ChatResponse ChatClient::complete(const ChatRequest& request) {
  request.validate();
  const std::string payload = request.body().dump(-1, ' ', false, json::error_handler_t::replace);

  for (int attempt = 0;; ++attempt) {
    auto start = std::chrono::steady_clock::now();
    try {
      std::string body = send(request.endpoint, payload, request.timeout, request.api_key);
      ChatResponse response;
      response.latency_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
              .count();
      auto envelope = json::parse(body, nullptr, false);
      const json* content = nullptr;
      if (!envelope.is_discarded() && envelope.is_object() && envelope.contains("choices") &&
          envelope["choices"].is_array() && !envelope["choices"].empty() &&
          envelope["choices"][0].is_object()) {
        const auto& choice = envelope["choices"][0];
        if (choice.contains("message") && choice["message"].is_object() &&
            choice["message"].contains("content") && choice["message"]["content"].is_string()) {
          content = &choice["message"]["content"];
        }
      }
      if (!content) throw TransportError("malformed chat-completions envelope");
      response.content = content->get<std::string>();
      if (envelope.contains("usage") && envelope["usage"].is_object()) {
        const auto& usage = envelope["usage"];
        auto count = [&](const char* key) -> std::int64_t {
          return usage.contains(key) && usage[key].is_number_integer() ? usage[key].get<std::int64_t>()
                                                                       : 0;
        };
        response.prompt_tokens = count("prompt_tokens");
        response.completion_tokens = count("completion_tokens");
      }
      {
        std::lock_guard lock(usage_mutex_);
        ++usage_.calls;
        usage_.prompt_tokens += response.prompt_tokens;
        usage_.completion_tokens += response.completion_tokens;
        usage_.latency_ms += response.latency_ms;
      }
      audit({{"url", request.endpoint},
             {"request", json::parse(payload, nullptr, false)},
             {"response", response.content},
             {"latency_ms", response.latency_ms},
             {"prompt_tokens", response.prompt_tokens},
             {"completion_tokens", response.completion_tokens}});
      return response;
    } catch (const TransientError& e) {
      // send() has already spent its retries on transport errors; only a bad
      // envelope reaches here with attempts left.
      bool envelope_error = std::string_view(e.what()).starts_with("malformed");
      if (!envelope_error || attempt >= options_.retries) {
        std::lock_guard lock(usage_mutex_);
        ++usage_.failures;
        throw;
      }
    }
  }
}

json ChatClient::post_json(const std::string& url, const json& body,
                           std::chrono::milliseconds timeout, const std::string& api_key) {
  std::string reply = send(url, body.dump(-1, ' ', false, json::error_handler_t::replace), timeout,
                           api_key);
  auto parsed = json::parse(reply, nullptr, false);
  if (parsed.is_discarded()) throw TransportError("non-JSON reply from " + url);
  return parsed;
}

std::vector<std::string> sample_frame_attachments(const fs::path& dir, std::size_t count) {
  if (!fs::is_directory(dir)) throw InputError("frame directory not found: " + dir.string());
  std::vector<fs::path> frames;
  for (const auto& entry : fs::directory_iterator(dir)) {
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (entry.is_regular_file() && (ext == ".jpg" || ext == ".jpeg" || ext == ".png")) {
      frames.push_back(entry.path());
    }
  }
  std::sort(frames.begin(), frames.end());
  if (frames.empty()) throw InputError("no frames in " + dir.string());
  count = std::min(count, frames.size());

  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& path = frames[(2 * i + 1) * frames.size() / (2 * count)];
    std::ifstream in(path, std::ios::binary);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    const char* mime = ext == ".png" ? "image/png" : "image/jpeg";
    out.push_back(std::string("data:") + mime + ";base64," +
                  httplib::detail::base64_encode(bytes.str()));
  }
  return out;
}

}  // namespace avs::llm
