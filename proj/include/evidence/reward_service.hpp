#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "evidence/judge.hpp"
#include "evidence/rewards.hpp"

namespace evidence {

struct JudgeConfig {
  std::string endpoint; ///< base URL, e.g. http://judge:8000/v1
  std::string model;
  std::string token;
  std::chrono::seconds timeout{30};
  int max_attempts = 3;
  std::filesystem::path prompt_path; ///< empty: built-in template
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8088;
  std::size_t max_batch = 1024;
  std::size_t judge_max_in_flight = 8;
  std::chrono::seconds deadline{60};
  std::string auth_token;
  std::optional<JudgeConfig> judge;
  std::filesystem::path access_log; ///< empty: stderr
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the JSON service config. Secrets are never stored in the file:
/// "auth_token_env" and "judge.token_env" name environment variables.
///
///   {"bind": {"host": "0.0.0.0", "port": 8088}, "max_batch": 1024,
///    "deadline_s": 60, "auth_token_env": "REWARD_TOKEN",
///    "access_log": "access.jsonl",
///    "judge": {"endpoint": "...", "model": "...", "token_env": "...",
///              "timeout_s": 30, "max_in_flight": 8, "max_attempts": 3,
///              "prompt": "templates/judge_prompt_v1.txt"}}
ServiceConfig service_config_from_json(const nlohmann::json& j, const EnvLookup& env);
ServiceConfig load_service_config(const std::filesystem::path& path);

/// Wire format of one ground truth; throws std::invalid_argument.
///   {"answer_kind": "mcq" | "open_ended", "answer": "B", "boxes": [[...]],
///    "dims": {"width", "height"}, "options": ["A", "B", ...], "question": "..."}
GroundTruth ground_truth_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RewardBreakdown& r);

/// Hash over the reward formula, parser and judge prompt versions.
std::string reward_spec_hash(const std::string& judge_prompt_hash);

struct HttpReply {
  int status = 200;
  nlohmann::json body;
  std::map<std::string, std::string> headers;
};

/// Stateless scoring endpoint. Request handling is exposed as plain
/// functions so it can be exercised without sockets; start() binds it
/// to HTTP.
class RewardService {
public:
  RewardService(ServiceConfig config, std::shared_ptr<JudgeClient> judge,
                std::string judge_prompt_hash = PromptTemplate::builtin_judge().hash(),
                std::function<bool()> judge_probe = {});
  ~RewardService();

  RewardService(const RewardService&) = delete;
  RewardService& operator=(const RewardService&) = delete;

  /// POST /v1/rewards
  HttpReply handle_rewards(const std::string& body, const std::string& authorization) const;
  /// GET /v1/health
  HttpReply handle_health() const;

  const std::string& spec_hash() const { return spec_hash_; }

  /// Binds and serves on a background thread; returns the bound port
  /// (config port 0 picks a free one).
  int start();
  void stop();

  void set_access_log(std::ostream* out);

private:
  struct Server;

  void log_access(const nlohmann::json& line) const;

  ServiceConfig config_;
  std::shared_ptr<JudgeClient> judge_;
  std::function<bool()> judge_probe_;
  std::string spec_hash_;
  std::chrono::steady_clock::time_point started_;
  std::unique_ptr<Server> server_;
  mutable std::mutex log_mu_;
  std::ostream* access_log_ = nullptr;
};

/// Builds the judge client described by `config.judge`, or nullptr.
std::shared_ptr<ChatJudge> make_judge(const ServiceConfig& config);

} // namespace evidence
