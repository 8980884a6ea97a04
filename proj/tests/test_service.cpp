#include <doctest.h>

#include <sstream>

#include <httplib.h>

#include "evidence/reward_service.hpp"
#include "fakes.hpp"
#include "golden.hpp"

using namespace evidence;

namespace {

nlohmann::json request_for(const std::vector<golden::Item>& items, bool judge = false) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& it : items)
    arr.push_back(it.wire);
  return {{"items", arr}, {"options", {{"judge", judge}}}};
}

ServiceConfig local_config() {
  ServiceConfig c;
  c.port = 0;
  return c;
}

/// Judge that always fails like an overloaded upstream.
class DownJudge final : public JudgeClient {
public:
  JudgeVerdict judge(const JudgeQuery&) override { throw JudgeUnavailable("upstream 503", 3, 11); }
  std::string model_id() const override { return "down"; }
};

} // namespace

TEST_CASE("config parsing reads secrets from the environment") {
  auto j = nlohmann::json::parse(R"({"bind": {"host": "0.0.0.0", "port": 9000}, "max_batch": 64,
    "deadline_s": 5, "auth_token_env": "TOK",
    "judge": {"endpoint": "http://judge:8000/v1", "model": "jm", "token_env": "JTOK", "max_in_flight": 3}})");
  auto c = service_config_from_json(j, [](const std::string& name) -> std::optional<std::string> {
    if (name == "TOK")
      return "s3cret";
    if (name == "JTOK")
      return "jt";
    return std::nullopt;
  });
  CHECK(c.host == "0.0.0.0");
  CHECK(c.port == 9000);
  CHECK(c.max_batch == 64);
  CHECK(c.deadline == std::chrono::seconds(5));
  CHECK(c.auth_token == "s3cret");
  REQUIRE(c.judge);
  CHECK(c.judge->token == "jt");
  CHECK(c.judge_max_in_flight == 3);
  CHECK(make_judge(c)->model_id() == "jm");
  CHECK(make_judge(ServiceConfig{}) == nullptr);
}

TEST_CASE("split_url") {
  auto e = split_url("http://judge:8000/v1");
  CHECK(e.scheme_host_port == "http://judge:8000");
  CHECK(e.path_prefix == "/v1");
  CHECK(split_url("https://x.org").path_prefix.empty());
  CHECK_THROWS(split_url("judge:8000"));
}

TEST_CASE("in-process handler matches score_batch") {
  const auto items = golden::suite(true);
  auto judge = std::make_shared<fakes::ExactJudge>();
  RewardService svc(local_config(), judge);
  svc.set_access_log(nullptr);
  auto reply = svc.handle_rewards(request_for(items, true).dump(), "");
  REQUIRE(reply.status == 200);

  std::vector<ScoreItem> in;
  for (const auto& it : items)
    in.push_back(it.in_process);
  const auto expected = score_batch(in, judge.get());
  REQUIRE(reply.body["items"].size() == items.size());
  for (size_t i = 0; i < items.size(); ++i) {
    const auto& got = reply.body["items"][i];
    REQUIRE(got["reward"] == to_json(expected[i].reward));
    REQUIRE(got["diagnostics"]["format_ok"] == expected[i].parsed.format_ok);
  }
  CHECK(reply.body["meta"]["reward_spec_hash"] == svc.spec_hash());
  CHECK(reply.body["meta"]["judge_model"] == "exact-judge");
  CHECK(reply.body["meta"]["count"] == items.size());
}

TEST_CASE("group advantages") {
  auto items = golden::suite(false);
  items.resize(8);
  RewardService svc(local_config(), nullptr);
  svc.set_access_log(nullptr);
  auto req = request_for(items);
  req["options"]["group_size"] = 4;
  auto reply = svc.handle_rewards(req.dump(), "");
  REQUIRE(reply.status == 200);
  for (size_t g = 0; g < 8; g += 4) {
    std::vector<double> totals;
    for (size_t i = g; i < g + 4; ++i)
      totals.push_back(reply.body["items"][i]["reward"]["total"].get<double>());
    const auto adv = compute_advantages(totals);
    for (size_t i = 0; i < 4; ++i)
      CHECK(reply.body["items"][g + i]["advantage"].get<double>() == adv[i]);
  }
  req["options"]["group_size"] = 3;
  CHECK(svc.handle_rewards(req.dump(), "").status == 400);
  req["options"]["group_size"] = 1;
  CHECK(svc.handle_rewards(req.dump(), "").status == 400);
}

TEST_CASE("request errors") {
  auto items = golden::suite(false);
  items.resize(5);
  ServiceConfig cfg = local_config();
  cfg.max_batch = 4;
  RewardService svc(cfg, nullptr);
  std::ostringstream log;
  svc.set_access_log(&log);

  CHECK(svc.handle_rewards("{not json", "").status == 400);
  CHECK(svc.handle_rewards(R"({"items": []})", "").status == 400);
  CHECK(svc.handle_rewards(R"({"foo": 1})", "").status == 400);
  CHECK(svc.handle_rewards(request_for(items).dump(), "").status == 413);

  items.resize(4);
  auto req = request_for(items);
  req["items"][3]["ground_truth"]["boxes"] = {{5, 5, 5, 9}};
  auto bad = svc.handle_rewards(req.dump(), "");
  CHECK(bad.status == 400);
  CHECK(bad.body["index"] == 3);

  req = request_for(items);
  req["items"][1]["ground_truth"]["answer"] = "Z";
  CHECK(svc.handle_rewards(req.dump(), "").body["index"] == 1);

  auto open = golden::suite(true);
  std::vector<golden::Item> last(open.end() - 2, open.end());
  CHECK(svc.handle_rewards(request_for(last, true).dump(), "").status == 422);

  // one access-log line per request, no response text
  std::istringstream lines(log.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("status"));
    CHECK(j.contains("latency_ms"));
    CHECK(line.find("<think>") == std::string::npos);
    ++n;
  }
  CHECK(n == 7);
}

TEST_CASE("judge is opt-in per request and failures map to 502") {
  auto open = golden::suite(true);
  std::vector<golden::Item> last(open.end() - 2, open.end());
  RewardService with_judge(local_config(), std::make_shared<fakes::ExactJudge>());
  with_judge.set_access_log(nullptr);
  CHECK(with_judge.handle_rewards(request_for(last, false).dump(), "").status == 422);
  CHECK(with_judge.handle_rewards(request_for(last, true).dump(), "").status == 200);

  RewardService down(local_config(), std::make_shared<DownJudge>());
  down.set_access_log(nullptr);
  auto r = down.handle_rewards(request_for(last, true).dump(), "");
  CHECK(r.status == 502);
  CHECK(r.headers.at("Retry-After") == "11");
}

TEST_CASE("bearer token") {
  ServiceConfig cfg = local_config();
  cfg.auth_token = "tok";
  RewardService svc(cfg, nullptr);
  svc.set_access_log(nullptr);
  auto items = golden::suite(false);
  items.resize(1);
  const auto body = request_for(items).dump();
  CHECK(svc.handle_rewards(body, "").status == 401);
  CHECK(svc.handle_rewards(body, "Bearer nope").status == 401);
  CHECK(svc.handle_rewards(body, "Bearer tok").status == 200);
}

TEST_CASE("health") {
  RewardService plain(local_config(), nullptr);
  auto h = plain.handle_health().body;
  CHECK(h["status"] == "ok");
  CHECK(h["judge"]["configured"] == false);
  CHECK(h["reward_spec_hash"].get<std::string>().size() == 64);

  RewardService reachable(local_config(), std::make_shared<fakes::ExactJudge>(),
                          PromptTemplate::builtin_judge().hash(), [] { return true; });
  CHECK(reachable.handle_health().body["status"] == "ok");

  RewardService unreachable(local_config(), std::make_shared<fakes::ExactJudge>(),
                            PromptTemplate::builtin_judge().hash(), [] { return false; });
  auto d = unreachable.handle_health().body;
  CHECK(d["status"] == "degraded");
  CHECK(d["judge"]["reachable"] == false);

  // the hash follows the judge prompt
  RewardService other(local_config(), nullptr, "different");
  CHECK(other.spec_hash() != plain.spec_hash());
}

TEST_CASE("over HTTP: parity, gzip, status codes") {
  const auto items = golden::suite(true);
  auto judge = std::make_shared<fakes::ExactJudge>();
  ServiceConfig cfg = local_config();
  cfg.auth_token = "tok";
  RewardService svc(cfg, judge);
  svc.set_access_log(nullptr);
  const int port = svc.start();
  REQUIRE(port > 0);

  httplib::Client cli("127.0.0.1", port);
  cli.set_bearer_token_auth("tok");
  const auto body = request_for(items, true).dump();
  const auto local = svc.handle_rewards(body, "Bearer tok");

  auto res = cli.Post("/v1/rewards", body, "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  auto remote = nlohmann::json::parse(res->body);
  CHECK(remote["items"] == local.body["items"]);

  cli.set_compress(true);
  auto gz = cli.Post("/v1/rewards", body, "application/json");
  REQUIRE(gz);
  CHECK(gz->status == 200);
  CHECK(nlohmann::json::parse(gz->body)["items"] == local.body["items"]);
  cli.set_compress(false);

  auto h = cli.Get("/v1/health");
  REQUIRE(h);
  CHECK(nlohmann::json::parse(h->body)["status"] == "ok");

  httplib::Client anon("127.0.0.1", port);
  auto denied = anon.Post("/v1/rewards", body, "application/json");
  REQUIRE(denied);
  CHECK(denied->status == 401);

  svc.stop();
}

TEST_CASE("1024-item batch without judge") {
  auto base = golden::suite(false);
  std::vector<golden::Item> items;
  for (size_t i = 0; items.size() < 1024; ++i)
    items.push_back(base[i % base.size()]);
  RewardService svc(local_config(), nullptr);
  svc.set_access_log(nullptr);
  const int port = svc.start();
  httplib::Client cli("127.0.0.1", port);
  const auto t0 = std::chrono::steady_clock::now();
  auto res = cli.Post("/v1/rewards", request_for(items).dump(), "application/json");
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(nlohmann::json::parse(res->body)["items"].size() == 1024);
  CHECK(s < 10.0);
}
