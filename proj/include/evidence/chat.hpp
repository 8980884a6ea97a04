#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace evidence {

/// A chat-completions call failed at the transport or HTTP level.
class TransportError : public std::runtime_error {
public:
  TransportError(const std::string& what, int status = 0,
                 std::optional<int> retry_after_s = std::nullopt)
      : std::runtime_error(what), status(status), retry_after_s(retry_after_s) {}

  int status; ///< HTTP status, 0 when no response arrived
  std::optional<int> retry_after_s;
};

/// Strict cassette replay found no recording for a request.
class CassetteMiss : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Sends one OpenAI-style chat-completions request body and returns the
/// decoded response body.
class ChatTransport {
public:
  virtual ~ChatTransport() = default;
  virtual nlohmann::json complete(const nlohmann::json& request) = 0;
};

struct Endpoint {
  std::string scheme_host_port; ///< "http://127.0.0.1:8000"
  std::string path_prefix;      ///< "/v1"
};

/// Splits "http://host:port/prefix" into the parts httplib wants.
Endpoint split_url(const std::string& url);

class HttpChatTransport final : public ChatTransport {
public:
  HttpChatTransport(std::string base_url, std::string token,
                    std::chrono::seconds timeout = std::chrono::seconds(60));

  nlohmann::json complete(const nlohmann::json& request) override;

  /// GET {base}/models with a short timeout; true on any 2xx.
  bool probe(std::chrono::milliseconds timeout = std::chrono::milliseconds(1500)) const;

private:
  Endpoint endpoint_;
  std::string token_;
  std::chrono::seconds timeout_;
};

/// Canonical cassette key for a request: SHA-256 over its compact dump.
std::string cassette_key(const nlohmann::json& request);

/// Line-delimited record/replay store of {key, request, response}.
/// Replay mode serves recorded responses by key and throws CassetteMiss for
/// unknown requests. Record mode forwards to the inner transport and appends
/// each new exchange to the file.
class CassetteTransport final : public ChatTransport {
public:
  enum class Mode { Replay, Record };

  static std::unique_ptr<CassetteTransport> replay(const std::filesystem::path& path);
  static std::unique_ptr<CassetteTransport> record(const std::filesystem::path& path,
                                                   std::shared_ptr<ChatTransport> inner);

  nlohmann::json complete(const nlohmann::json& request) override;

  std::size_t size() const;

private:
  CassetteTransport(Mode mode, std::filesystem::path path, std::shared_ptr<ChatTransport> inner);
  void load();

  Mode mode_;
  std::filesystem::path path_;
  std::shared_ptr<ChatTransport> inner_;
  mutable std::mutex mu_;
  std::map<std::string, nlohmann::json> entries_;
};

/// choices[0].message.content, or TransportError when the body has no text.
std::string message_text(const nlohmann::json& response);

} // namespace evidence
