#include "stimusel/chat_client.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "stimusel/error.hpp"

namespace stimusel {

namespace {

using nlohmann::json;

std::uint64_t fnv1a64(std::uint64_t hash, const std::string& s) {
  constexpr std::uint64_t kPrime = 1099511628211ull;
  for (unsigned char c : s) {
    hash ^= c;
    hash *= kPrime;
  }
  return hash;
}

json messages_to_json(const std::vector<ChatMessage>& messages) {
  json arr = json::array();
  for (const auto& m : messages) arr.push_back({{"role", m.role}, {"content", m.content}});
  return arr;
}

}  // namespace

std::string fixture_key(const std::vector<ChatMessage>& messages) {
  std::uint64_t hash = 1469598103934665603ull;  // FNV offset basis
  for (const auto& m : messages) {
    hash = fnv1a64(hash, m.role);
    hash = fnv1a64(hash, "\x1f");
    hash = fnv1a64(hash, m.content);
    hash = fnv1a64(hash, "\x1e");
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return std::string(buf);
}

FixtureChatClient::FixtureChatClient(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!std::filesystem::is_directory(dir_))
    throw Error("fixture directory does not exist: " + dir_.string());
}

std::string FixtureChatClient::complete(const std::vector<ChatMessage>& messages) {
  const std::string key = fixture_key(messages);
  const auto path = dir_ / (key + ".json");
  std::ifstream in(path);
  if (!in)
    throw Error("no fixture recorded for request " + key + " (expected " + path.string() + ")");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error("malformed fixture file " + path.string() + ": " + e.what());
  }
  if (!doc.contains("response") || !doc["response"].is_string())
    throw Error("fixture file missing string 'response': " + path.string());
  const std::string response = doc["response"].get<std::string>();
  if (response.empty()) throw Error("fixture response is empty: " + path.string());
  return response;
}

std::string FixtureChatClient::id() const { return "fixture:" + dir_.filename().string(); }

void FixtureChatClient::record(const std::filesystem::path& dir,
                               const std::vector<ChatMessage>& messages,
                               const std::string& response) {
  std::filesystem::create_directories(dir);
  const auto path = dir / (fixture_key(messages) + ".json");
  json doc{{"request", messages_to_json(messages)}, {"response", response}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write fixture file: " + path.string());
  out << doc.dump(2) << "\n";
}

HttpChatClient::HttpChatClient(HttpChatConfig config) : config_(std::move(config)) {
  // Split "<scheme>://<host>[:port]</path>" for httplib's client/path API.
  const auto scheme_end = config_.url.find("://");
  if (scheme_end == std::string::npos)
    throw Error("chat endpoint URL must include a scheme: " + config_.url);
  const auto path_start = config_.url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    scheme_host_ = config_.url;
    path_ = "/";
  } else {
    scheme_host_ = config_.url.substr(0, path_start);
    path_ = config_.url.substr(path_start);
  }
}

std::string HttpChatClient::complete(const std::vector<ChatMessage>& messages) {
  const json body{{"model", config_.model}, {"messages", messages_to_json(messages)}};
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!config_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + config_.api_key);

  std::string last_failure;
  auto delay = config_.retry.initial_delay;
  for (int attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(delay);
      delay = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(delay.count()) * config_.retry.backoff_factor));
    }

    httplib::Client client(scheme_host_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    auto res = client.Post(path_, headers, payload, "application/json");
    if (!res) {
      last_failure = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_failure = "server returned status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw Error("chat endpoint " + config_.url + " returned status " +
                  std::to_string(res->status) + ": " + res->body);

    try {
      const json doc = json::parse(res->body);
      const std::string content =
          doc.at("choices").at(0).at("message").at("content").get<std::string>();
      if (content.empty()) throw Error("chat endpoint returned an empty message");
      return content;
    } catch (const json::exception& e) {
      throw Error("unexpected chat response shape from " + config_.url + ": " + e.what());
    }
  }
  throw Error("chat request to " + config_.url + " failed after " +
              std::to_string(config_.retry.max_attempts) + " attempts (" + last_failure + ")");
}

std::string HttpChatClient::id() const { return "http:" + config_.url + "#" + config_.model; }

}  // namespace stimusel
