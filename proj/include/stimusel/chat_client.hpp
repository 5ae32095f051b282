#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

namespace stimusel {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_delay{250};
  double backoff_factor = 2.0;
};

/// Minimal chat-completion interface. Implementations must be safe to
/// call from multiple threads.
class ChatClient {
 public:
  virtual ~ChatClient() = default;

  /// Returns the assistant text for the given conversation. Throws Error
  /// on transport failure (after retries) or an empty response.
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;

  /// Stable identifier recorded in artifact provenance.
  virtual std::string id() const = 0;
};

/// 16-hex-digit key (FNV-1a 64 over roles and contents) naming the
/// fixture file for a request.
std::string fixture_key(const std::vector<ChatMessage>& messages);

/// Replays responses recorded under `dir` as <fixture_key>.json files of
/// the form {"request": [{"role":..., "content":...}], "response": "..."}.
class FixtureChatClient final : public ChatClient {
 public:
  explicit FixtureChatClient(std::filesystem::path dir);

  std::string complete(const std::vector<ChatMessage>& messages) override;
  std::string id() const override;

  /// Records a response for a request; used to build fixture sets.
  static void record(const std::filesystem::path& dir, const std::vector<ChatMessage>& messages,
                     const std::string& response);

 private:
  std::filesystem::path dir_;
};

struct HttpChatConfig {
  std::string url;          // e.g. http://host:port/v1/chat/completions
  std::string model = "gpt-3.5-turbo";
  std::string api_key;      // empty: no Authorization header
  RetryPolicy retry;
  std::chrono::seconds timeout{60};
};

/// POSTs {"model", "messages":[{"role","content"}...]} and reads
/// choices[0].message.content, retrying transport failures and
/// 429/5xx statuses with exponential backoff.
class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(HttpChatConfig config);

  std::string complete(const std::vector<ChatMessage>& messages) override;
  std::string id() const override;

 private:
  HttpChatConfig config_;
  std::string scheme_host_;
  std::string path_;
};

}  // namespace stimusel
