#include "evidence/judge.hpp"

#include <algorithm>
#include <cctype>
#include <thread>

namespace evidence {

JudgeVerdict parse_verdict(const std::string& text) {
  std::string s;
  for (char c : text)
    s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  auto junk = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) || std::ispunct(static_cast<unsigned char>(c));
  };
  while (!s.empty() && junk(s.front()))
    s.erase(s.begin());
  while (!s.empty() && junk(s.back()))
    s.pop_back();

  JudgeVerdict v;
  v.raw = text;
  if (s == "correct") {
    v.correct = true;
  } else if (s == "incorrect") {
    v.correct = false;
  } else {
    v.correct = false;
    v.conforming = false;
  }
  return v;
}

ChatJudge::ChatJudge(std::shared_ptr<ChatTransport> transport, std::string model,
                     PromptTemplate prompt, int max_attempts)
    : transport_(std::move(transport)), model_(std::move(model)), prompt_(std::move(prompt)),
      max_attempts_(std::max(1, max_attempts)) {}

nlohmann::json ChatJudge::build_request(const JudgeQuery& query) const {
  const std::string content = prompt_.render(
      {{"question", query.question}, {"reference", query.reference}, {"prediction", query.prediction}});
  return {{"model", model_},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
          {"temperature", 0},
          {"max_tokens", 8}};
}

JudgeVerdict ChatJudge::judge(const JudgeQuery& query) {
  const nlohmann::json request = build_request(query);
  std::optional<int> retry_after;
  std::string last_error;
  for (int attempt = 1; attempt <= max_attempts_; ++attempt) {
    try {
      return parse_verdict(message_text(transport_->complete(request)));
    } catch (const CassetteMiss& e) {
      throw JudgeUnavailable(e.what(), attempt, std::nullopt);
    } catch (const TransportError& e) {
      last_error = e.what();
      retry_after = e.retry_after_s;
      if (attempt < max_attempts_)
        std::this_thread::sleep_for(std::chrono::milliseconds(50 * attempt));
    }
  }
  throw JudgeUnavailable("judge unavailable after " + std::to_string(max_attempts_) +
                             " attempts: " + last_error,
                         max_attempts_, retry_after);
}

} // namespace evidence
