#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cctype>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "stimusel/chat_client.hpp"
#include "stimusel/error.hpp"
#include "test_util.hpp"

using testutil::TempDir;

using stimusel::ChatMessage;
using stimusel::Error;
using stimusel::FixtureChatClient;
using stimusel::HttpChatClient;
using stimusel::HttpChatConfig;

namespace {

// Serves canned handlers on an ephemeral localhost port.
class LocalServer {
 public:
  explicit LocalServer(httplib::Server::Handler handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~LocalServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

HttpChatConfig fast_config(const std::string& url) {
  HttpChatConfig config;
  config.url = url;
  config.retry.initial_delay = std::chrono::milliseconds(5);
  config.timeout = std::chrono::seconds(5);
  return config;
}

std::string ok_body(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"content", content}}}}}}}.dump();
}

}  // namespace

TEST_CASE("fixture keys are stable 16-digit hex strings") {
  const std::vector<ChatMessage> messages{{"system", "be brief"}, {"user", "hello"}};
  const std::string key = stimusel::fixture_key(messages);
  REQUIRE(key == stimusel::fixture_key(messages));
  REQUIRE(key.size() == 16);
  for (char c : key) REQUIRE(std::isxdigit(static_cast<unsigned char>(c)));
}

TEST_CASE("fixture keys separate roles from contents") {
  // Without separators these three would hash the same byte stream.
  const std::string a = stimusel::fixture_key({{"a", "bc"}});
  const std::string b = stimusel::fixture_key({{"ab", "c"}});
  const std::string c = stimusel::fixture_key({{"a", "b"}, {"c", ""}});
  REQUIRE(a != b);
  REQUIRE(a != c);
  REQUIRE(b != c);
}

TEST_CASE("recorded fixtures replay their response") {
  TempDir dir("fixtures");
  const std::vector<ChatMessage> messages{{"user", "caption frame"}};
  FixtureChatClient::record(dir.path(), messages, "a dog naps in the sun \xc3\xa9");
  FixtureChatClient client(dir.path());
  REQUIRE(client.complete(messages) == "a dog naps in the sun \xc3\xa9");
  REQUIRE(client.id() == "fixture:" + dir.path().filename().string());
}

TEST_CASE("a missing fixture names its key") {
  TempDir dir("fixtures");
  FixtureChatClient client(dir.path());
  const std::vector<ChatMessage> messages{{"user", "never recorded"}};
  try {
    client.complete(messages);
    REQUIRE(false);
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find(stimusel::fixture_key(messages)) != std::string::npos);
  }
}

TEST_CASE("a malformed fixture file is reported") {
  TempDir dir("fixtures");
  const std::vector<ChatMessage> messages{{"user", "broken"}};
  std::ofstream(dir.path() / (stimusel::fixture_key(messages) + ".json")) << "{not json";
  FixtureChatClient client(dir.path());
  REQUIRE_THROWS_AS(client.complete(messages), Error);
}

TEST_CASE("an empty recorded response is rejected at replay") {
  TempDir dir("fixtures");
  const std::vector<ChatMessage> messages{{"user", "void"}};
  FixtureChatClient::record(dir.path(), messages, "");
  FixtureChatClient client(dir.path());
  REQUIRE_THROWS_AS(client.complete(messages), Error);
}

TEST_CASE("a missing fixture directory fails at construction") {
  REQUIRE_THROWS_AS(FixtureChatClient("/definitely/not/a/real/dir"), Error);
}

TEST_CASE("fixture replay is safe across threads") {
  TempDir dir("fixtures");
  const std::vector<ChatMessage> messages{{"user", "parallel"}};
  FixtureChatClient::record(dir.path(), messages, "same answer");
  FixtureChatClient client(dir.path());
  std::atomic<int> hits{0};
  std::vector<std::thread> pool;
  for (int i = 0; i < 4; ++i)
    pool.emplace_back([&] {
      if (client.complete(messages) == "same answer") ++hits;
    });
  for (auto& t : pool) t.join();
  REQUIRE(hits.load() == 4);
}

TEST_CASE("http client posts the expected body and reads the content") {
  std::string seen_body;
  std::string seen_auth;
  LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    if (req.has_header("Authorization")) seen_auth = req.get_header_value("Authorization");
    res.set_content(ok_body("the reply"), "application/json");
  });

  HttpChatConfig config = fast_config(server.url());
  config.model = "test-model";
  config.api_key = "sk-local";
  HttpChatClient client(config);
  REQUIRE(client.complete({{"system", "s"}, {"user", "u"}}) == "the reply");

  const auto body = nlohmann::json::parse(seen_body);
  REQUIRE(body["model"] == "test-model");
  REQUIRE(body["messages"].size() == 2);
  REQUIRE(body["messages"][0]["role"] == "system");
  REQUIRE(body["messages"][1]["content"] == "u");
  REQUIRE(seen_auth == "Bearer sk-local");
  REQUIRE(client.id().find("test-model") != std::string::npos);
}

TEST_CASE("retryable statuses are retried until success") {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    const int n = ++calls;
    if (n == 1) {
      res.status = 500;
    } else if (n == 2) {
      res.status = 429;
    } else {
      res.set_content(ok_body("third time"), "application/json");
    }
  });

  HttpChatClient client(fast_config(server.url()));
  REQUIRE(client.complete({{"user", "try"}}) == "third time");
  REQUIRE(calls.load() == 3);
}

TEST_CASE("persistent server errors exhaust the retry budget") {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 503;
  });

  HttpChatClient client(fast_config(server.url()));
  try {
    client.complete({{"user", "doomed"}});
    REQUIRE(false);
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("3 attempts") != std::string::npos);
  }
  REQUIRE(calls.load() == 3);
}

TEST_CASE("client errors other than 429 fail without retry") {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 404;
    res.set_content("no such route", "text/plain");
  });

  HttpChatClient client(fast_config(server.url()));
  REQUIRE_THROWS_AS(client.complete({{"user", "x"}}), Error);
  REQUIRE(calls.load() == 1);
}

TEST_CASE("an unexpected response shape fails without retry") {
  std::atomic<int> calls{0};
  LocalServer server([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.set_content("{\"weird\": true}", "application/json");
  });

  HttpChatClient client(fast_config(server.url()));
  REQUIRE_THROWS_AS(client.complete({{"user", "x"}}), Error);
  REQUIRE(calls.load() == 1);
}

TEST_CASE("transport failures are retried then surfaced") {
  // Nothing listens on the reserved port, so every attempt fails fast.
  HttpChatConfig config = fast_config("http://127.0.0.1:1/v1/chat/completions");
  config.retry.max_attempts = 2;
  config.timeout = std::chrono::seconds(1);
  HttpChatClient client(config);
  try {
    client.complete({{"user", "nobody home"}});
    REQUIRE(false);
  } catch (const Error& e) {
    REQUIRE(std::string(e.what()).find("2 attempts") != std::string::npos);
  }
}

TEST_CASE("endpoint URLs must carry a scheme") {
  HttpChatConfig config;
  config.url = "127.0.0.1:8080/v1/chat/completions";
  REQUIRE_THROWS_AS(HttpChatClient{config}, Error);
}
