#include "evidence/chat.hpp"

#include <fstream>

#include <httplib.h>

#include "evidence/hashing.hpp"
#include "evidence/jsonl.hpp"

namespace evidence {

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw std::invalid_argument("endpoint URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  if (path_start == std::string::npos) {
    e.scheme_host_port = url;
  } else {
    e.scheme_host_port = url.substr(0, path_start);
    e.path_prefix = url.substr(path_start);
  }
  while (!e.path_prefix.empty() && e.path_prefix.back() == '/')
    e.path_prefix.pop_back();
  return e;
}

HttpChatTransport::HttpChatTransport(std::string base_url, std::string token,
                                     std::chrono::seconds timeout)
    : endpoint_(split_url(base_url)), token_(std::move(token)), timeout_(timeout) {}

nlohmann::json HttpChatTransport::complete(const nlohmann::json& request) {
  httplib::Client cli(endpoint_.scheme_host_port);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);
  if (!token_.empty())
    cli.set_bearer_token_auth(token_);

  auto res = cli.Post(endpoint_.path_prefix + "/chat/completions", request.dump(),
                      "application/json");
  if (!res)
    throw TransportError("chat request to " + endpoint_.scheme_host_port +
                         " failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    std::optional<int> retry_after;
    if (res->has_header("Retry-After")) {
      try {
        retry_after = std::stoi(res->get_header_value("Retry-After"));
      } catch (const std::exception&) {
      }
    }
    throw TransportError("chat endpoint returned HTTP " + std::to_string(res->status), res->status,
                         retry_after);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw TransportError(std::string("chat endpoint returned invalid JSON: ") + e.what(),
                         res->status);
  }
}

bool HttpChatTransport::probe(std::chrono::milliseconds timeout) const {
  httplib::Client cli(endpoint_.scheme_host_port);
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  if (!token_.empty())
    cli.set_bearer_token_auth(token_);
  auto res = cli.Get(endpoint_.path_prefix + "/models");
  return res && res->status >= 200 && res->status < 300;
}

std::string cassette_key(const nlohmann::json& request) { return sha256_hex(request.dump()); }

CassetteTransport::CassetteTransport(Mode mode, std::filesystem::path path,
                                     std::shared_ptr<ChatTransport> inner)
    : mode_(mode), path_(std::move(path)), inner_(std::move(inner)) {}

std::unique_ptr<CassetteTransport> CassetteTransport::replay(const std::filesystem::path& path) {
  std::unique_ptr<CassetteTransport> t(new CassetteTransport(Mode::Replay, path, nullptr));
  t->load();
  return t;
}

std::unique_ptr<CassetteTransport> CassetteTransport::record(const std::filesystem::path& path,
                                                             std::shared_ptr<ChatTransport> inner) {
  std::unique_ptr<CassetteTransport> t(new CassetteTransport(Mode::Record, path, std::move(inner)));
  if (std::filesystem::exists(path))
    t->load();
  return t;
}

void CassetteTransport::load() {
  for (auto& [line_no, row] : read_jsonl(path_)) {
    if (!row.contains("request") || !row.contains("response"))
      throw std::runtime_error(path_.string() + ":" + std::to_string(line_no) +
                               ": cassette entry needs request and response");
    const std::string key = row.value("key", cassette_key(row["request"]));
    entries_[key] = std::move(row["response"]);
  }
}

nlohmann::json CassetteTransport::complete(const nlohmann::json& request) {
  const std::string key = cassette_key(request);
  {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(key); it != entries_.end())
      return it->second;
  }
  if (mode_ == Mode::Replay)
    throw CassetteMiss("cassette " + path_.string() + " has no entry for request " + key);

  nlohmann::json response = inner_->complete(request);
  std::lock_guard lock(mu_);
  if (entries_.emplace(key, response).second) {
    if (path_.has_parent_path())
      std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out << nlohmann::json{{"key", key}, {"request", request}, {"response", response}}.dump()
        << '\n';
  }
  return response;
}

std::size_t CassetteTransport::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::string message_text(const nlohmann::json& response) {
  try {
    const auto& content = response.at("choices").at(0).at("message").at("content");
    if (content.is_string())
      return content.get<std::string>();
  } catch (const nlohmann::json::exception&) {
  }
  throw TransportError("chat response has no choices[0].message.content");
}

} // namespace evidence
