#include "evidence/reward_service.hpp"

#include <cstdlib>
#include <iostream>
#include <thread>

#include <httplib.h>

#include "evidence/hashing.hpp"
#include "evidence/jsonl.hpp"

namespace evidence {

namespace {

/// Failed request with a status and the offending item, if any.
struct RequestError {
  int status;
  std::string message;
  std::optional<std::size_t> index;
};

HttpReply error_reply(const RequestError& e) {
  HttpReply r;
  r.status = e.status;
  r.body = {{"error", e.message}};
  if (e.index)
    r.body["index"] = *e.index;
  return r;
}

/// Fails judge calls once the request deadline has passed.
class DeadlineJudge final : public JudgeClient {
public:
  DeadlineJudge(JudgeClient& inner, std::chrono::steady_clock::time_point deadline)
      : inner_(inner), deadline_(deadline) {}

  JudgeVerdict judge(const JudgeQuery& q) override {
    if (std::chrono::steady_clock::now() > deadline_)
      throw JudgeUnavailable("request deadline exceeded", 0, std::nullopt);
    return inner_.judge(q);
  }
  std::string model_id() const override { return inner_.model_id(); }

private:
  JudgeClient& inner_;
  std::chrono::steady_clock::time_point deadline_;
};

std::optional<std::string> getenv_lookup(const std::string& name) {
  if (const char* v = std::getenv(name.c_str()))
    return std::string(v);
  return std::nullopt;
}

} // namespace

ServiceConfig service_config_from_json(const nlohmann::json& j, const EnvLookup& env) {
  ServiceConfig c;
  if (j.contains("bind")) {
    c.host = j["bind"].value("host", c.host);
    c.port = j["bind"].value("port", c.port);
  }
  c.max_batch = j.value("max_batch", c.max_batch);
  c.deadline = std::chrono::seconds(j.value("deadline_s", 60));
  c.access_log = j.value("access_log", "");
  if (j.contains("auth_token_env"))
    c.auth_token = env(j["auth_token_env"].get<std::string>()).value_or("");
  if (j.contains("judge") && !j["judge"].is_null()) {
    const auto& jj = j["judge"];
    JudgeConfig jc;
    jc.endpoint = jj.value("endpoint", "");
    jc.model = jj.value("model", "");
    if (jj.contains("token_env"))
      jc.token = env(jj["token_env"].get<std::string>()).value_or("");
    jc.timeout = std::chrono::seconds(jj.value("timeout_s", 30));
    jc.max_attempts = jj.value("max_attempts", 3);
    jc.prompt_path = jj.value("prompt", "");
    c.judge_max_in_flight = jj.value("max_in_flight", c.judge_max_in_flight);
    c.judge = jc;
  }
  return c;
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  return service_config_from_json(nlohmann::json::parse(read_text(path)), getenv_lookup);
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  if (!j.is_object())
    throw std::invalid_argument("ground_truth must be an object");
  const std::string kind = j.value("answer_kind", "mcq");
  if (!j.contains("answer") || !j["answer"].is_string())
    throw std::invalid_argument("ground_truth.answer must be a string");
  const std::string answer = j["answer"].get<std::string>();

  BoxSet boxes;
  if (j.contains("boxes")) {
    if (!j["boxes"].is_array())
      throw std::invalid_argument("ground_truth.boxes must be an array");
    for (const auto& b : j["boxes"]) {
      if (!b.is_array() || b.size() != 4 ||
          !std::all_of(b.begin(), b.end(), [](const auto& v) { return v.is_number(); }))
        throw std::invalid_argument("each box must be 4 numbers");
      boxes.emplace_back(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                         b[3].get<double>());
    }
  }
  if (j.contains("dims"))
    ImageDims(j["dims"].at("width").get<long>(), j["dims"].at("height").get<long>());

  if (kind == "mcq") {
    LetterSet allowed = all_letters();
    if (j.contains("options")) {
      allowed.clear();
      for (const auto& o : j["options"]) {
        auto l = o.is_string() ? OptionLetter::from(o.get<std::string>()) : std::nullopt;
        if (!l)
          throw std::invalid_argument("options must be letters A-F");
        allowed.insert(*l);
      }
    }
    auto letter = OptionLetter::from(answer);
    if (!letter)
      throw std::invalid_argument("mcq answer must be a letter A-F");
    return GroundTruth::multiple_choice(*letter, std::move(boxes), std::move(allowed));
  }
  if (kind == "open_ended")
    return GroundTruth::open_ended(answer, std::move(boxes), j.value("question", ""));
  throw std::invalid_argument("answer_kind must be mcq or open_ended");
}

nlohmann::json to_json(const RewardBreakdown& r) {
  return {{"acc", r.acc},
          {"format", r.format},
          {"iou_recall", r.iou_recall},
          {"iou_precision", r.iou_precision},
          {"iou", r.iou},
          {"total", r.total}};
}

std::string reward_spec_hash(const std::string& judge_prompt_hash) {
  return sha256_hex(std::string(kRewardFormulaVersion) + "|" + std::string(kParserVersion) + "|" +
                    judge_prompt_hash);
}

struct RewardService::Server {
  httplib::Server http;
  std::thread thread;
};

RewardService::RewardService(ServiceConfig config, std::shared_ptr<JudgeClient> judge,
                             std::string judge_prompt_hash, std::function<bool()> judge_probe)
    : config_(std::move(config)), judge_(std::move(judge)), judge_probe_(std::move(judge_probe)),
      spec_hash_(reward_spec_hash(judge_prompt_hash)), started_(std::chrono::steady_clock::now()),
      access_log_(&std::cerr) {}

RewardService::~RewardService() { stop(); }

void RewardService::set_access_log(std::ostream* out) {
  std::lock_guard lock(log_mu_);
  access_log_ = out;
}

void RewardService::log_access(const nlohmann::json& line) const {
  std::lock_guard lock(log_mu_);
  if (access_log_)
    *access_log_ << line.dump() << '\n' << std::flush;
}

HttpReply RewardService::handle_rewards(const std::string& body,
                                        const std::string& authorization) const {
  const auto start = std::chrono::steady_clock::now();
  std::size_t batch = 0;
  HttpReply reply;
  nlohmann::json means;

  try {
    if (!config_.auth_token.empty() && authorization != "Bearer " + config_.auth_token)
      throw RequestError{401, "missing or invalid bearer token", std::nullopt};

    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      throw RequestError{400, std::string("body is not valid JSON: ") + e.what(), std::nullopt};
    }
    if (!req.is_object() || !req.contains("items") || !req["items"].is_array())
      throw RequestError{400, "body must be an object with an items array", std::nullopt};

    const auto& raw_items = req["items"];
    batch = raw_items.size();
    if (batch == 0)
      throw RequestError{400, "items must not be empty", std::nullopt};
    if (batch > config_.max_batch)
      throw RequestError{413,
                         "batch of " + std::to_string(batch) + " exceeds limit " +
                             std::to_string(config_.max_batch),
                         std::nullopt};

    const nlohmann::json opts = req.value("options", nlohmann::json::object());
    const bool judge_enabled = opts.value("judge", false);
    std::optional<std::size_t> group_size;
    if (opts.contains("group_size") && !opts["group_size"].is_null()) {
      if (!opts["group_size"].is_number_integer() || opts["group_size"].get<long>() < 2)
        throw RequestError{400, "group_size must be an integer >= 2", std::nullopt};
      group_size = opts["group_size"].get<std::size_t>();
      if (batch % *group_size != 0)
        throw RequestError{400, "batch size must be divisible by group_size", std::nullopt};
    }

    std::vector<ScoreItem> items;
    items.reserve(batch);
    bool needs_judge = false;
    for (std::size_t i = 0; i < batch; ++i) {
      const auto& it = raw_items[i];
      try {
        if (!it.is_object() || !it.contains("response_text") || !it["response_text"].is_string())
          throw std::invalid_argument("response_text must be a string");
        if (!it.contains("ground_truth"))
          throw std::invalid_argument("missing ground_truth");
        items.push_back({it["response_text"].get<std::string>(),
                         ground_truth_from_json(it["ground_truth"])});
      } catch (const std::exception& e) {
        throw RequestError{400, std::string("item ") + std::to_string(i) + ": " + e.what(), i};
      }
      needs_judge = needs_judge || items.back().ground_truth.kind == AnswerKind::OpenEnded;
    }

    std::optional<DeadlineJudge> judge;
    if (needs_judge) {
      if (!judge_enabled || !judge_)
        throw RequestError{422,
                           judge_ ? "open-ended items need options.judge = true"
                                  : "open-ended items need a judge but none is configured",
                           std::nullopt};
      judge.emplace(*judge_, start + config_.deadline);
    }

    const std::vector<ScoredItem> scored =
        score_batch(items, judge ? &*judge : nullptr, config_.judge_max_in_flight);

    std::vector<double> advantages;
    if (group_size) {
      for (std::size_t g = 0; g < batch; g += *group_size) {
        std::vector<double> totals;
        for (std::size_t i = g; i < g + *group_size; ++i)
          totals.push_back(scored[i].reward.total);
        auto a = compute_advantages(totals);
        advantages.insert(advantages.end(), a.begin(), a.end());
      }
    }

    nlohmann::json out_items = nlohmann::json::array();
    RewardBreakdown sum;
    for (std::size_t i = 0; i < batch; ++i) {
      const ScoredItem& s = scored[i];
      nlohmann::json item = {
          {"reward", to_json(s.reward)},
          {"diagnostics",
           {{"format_ok", s.parsed.format_ok},
            {"choice", s.parsed.choice ? nlohmann::json(s.parsed.choice->str()) : nlohmann::json()},
            {"boxes", s.parsed.boxes.size()},
            {"skipped_invalid_boxes", s.parsed.skipped_invalid_boxes},
            {"judged", s.diagnostics.judged},
            {"judge_nonconforming", s.diagnostics.judge_nonconforming}}}};
      if (group_size)
        item["advantage"] = advantages[i];
      out_items.push_back(std::move(item));
      sum.acc += s.reward.acc;
      sum.format += s.reward.format;
      sum.iou += s.reward.iou;
      sum.total += s.reward.total;
    }
    const double n = static_cast<double>(batch);
    means = {{"acc", sum.acc / n}, {"format", sum.format / n}, {"iou", sum.iou / n},
             {"total", sum.total / n}};

    reply.body = {{"items", std::move(out_items)},
                  {"meta",
                   {{"version", EVIDENCE_VERSION},
                    {"reward_spec_hash", spec_hash_},
                    {"judge_model", judge_ ? nlohmann::json(judge_->model_id()) : nlohmann::json()},
                    {"count", batch}}}};
  } catch (const RequestError& e) {
    reply = error_reply(e);
  } catch (const JudgeUnavailable& e) {
    reply = error_reply({502, std::string("judge upstream failure: ") + e.what(), std::nullopt});
    reply.headers["Retry-After"] = std::to_string(e.retry_after_s.value_or(5));
  } catch (const std::exception& e) {
    reply = error_reply({500, e.what(), std::nullopt});
  }

  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  log_access({{"path", "/v1/rewards"},
              {"status", reply.status},
              {"batch_size", batch},
              {"latency_ms", ms},
              {"reward_means", means}});
  return reply;
}

HttpReply RewardService::handle_health() const {
  HttpReply r;
  const double uptime =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  nlohmann::json judge = {{"configured", judge_ != nullptr}};
  bool degraded = false;
  if (config_.judge && !judge_) {
    degraded = true;
    judge["reachable"] = false;
  } else if (judge_) {
    judge["model"] = judge_->model_id();
    const bool reachable = judge_probe_ ? judge_probe_() : true;
    judge["reachable"] = reachable;
    degraded = !reachable;
  }
  r.body = {{"status", degraded ? "degraded" : "ok"},
            {"version", EVIDENCE_VERSION},
            {"uptime_s", uptime},
            {"reward_spec_hash", spec_hash_},
            {"judge", judge}};
  return r;
}

int RewardService::start() {
  if (server_)
    throw std::logic_error("reward service already started");
  server_ = std::make_unique<Server>();
  auto& http = server_->http;

  auto send = [](httplib::Response& res, const HttpReply& reply) {
    res.status = reply.status;
    for (const auto& [k, v] : reply.headers)
      res.set_header(k, v);
    res.set_content(reply.body.dump(), "application/json");
  };
  http.Post("/v1/rewards", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, handle_rewards(req.body, req.get_header_value("Authorization")));
  });
  http.Get("/v1/health", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, handle_health());
  });
  http.set_payload_max_length(256u << 20);

  int port = config_.port;
  if (port == 0) {
    port = http.bind_to_any_port(config_.host);
  } else if (!http.bind_to_port(config_.host, port)) {
    port = -1;
  }
  if (port < 0) {
    server_.reset();
    throw std::runtime_error("cannot bind " + config_.host + ":" + std::to_string(config_.port));
  }
  server_->thread = std::thread([this] { server_->http.listen_after_bind(); });
  server_->http.wait_until_ready();
  return port;
}

void RewardService::stop() {
  if (!server_)
    return;
  server_->http.stop();
  if (server_->thread.joinable())
    server_->thread.join();
  server_.reset();
}

std::shared_ptr<ChatJudge> make_judge(const ServiceConfig& config) {
  if (!config.judge || config.judge->endpoint.empty() || config.judge->model.empty())
    return nullptr;
  const JudgeConfig& jc = *config.judge;
  auto transport = std::make_shared<HttpChatTransport>(jc.endpoint, jc.token, jc.timeout);
  PromptTemplate prompt = jc.prompt_path.empty() ? PromptTemplate::builtin_judge()
                                                 : PromptTemplate::from_file(jc.prompt_path);
  return std::make_shared<ChatJudge>(std::move(transport), jc.model, std::move(prompt),
                                     jc.max_attempts);
}

} // namespace evidence
