#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "evidence/chat.hpp"
#include "evidence/prompt_template.hpp"

namespace evidence {

struct JudgeQuery {
  std::string question;
  std::string reference;
  std::string prediction;
};

struct JudgeVerdict {
  bool correct = false;
  bool conforming = true;
  std::string raw;
};

/// The judge could not be reached after all retries.
class JudgeUnavailable : public std::runtime_error {
public:
  JudgeUnavailable(const std::string& what, int attempts, std::optional<int> retry_after_s)
      : std::runtime_error(what), attempts(attempts), retry_after_s(retry_after_s) {}

  int attempts;
  std::optional<int> retry_after_s;
};

class JudgeClient {
public:
  virtual ~JudgeClient() = default;
  virtual JudgeVerdict judge(const JudgeQuery& query) = 0;
  virtual std::string model_id() const = 0;
};

/// Maps judge output to a verdict: after trimming, lowercasing and dropping
/// surrounding punctuation, "correct" and "incorrect" conform; anything else
/// is non-conforming and counts as incorrect.
JudgeVerdict parse_verdict(const std::string& text);

/// Judge backed by an OpenAI-compatible chat endpoint.
class ChatJudge final : public JudgeClient {
public:
  ChatJudge(std::shared_ptr<ChatTransport> transport, std::string model,
            PromptTemplate prompt = PromptTemplate::builtin_judge(), int max_attempts = 3);

  JudgeVerdict judge(const JudgeQuery& query) override;
  std::string model_id() const override { return model_; }

  nlohmann::json build_request(const JudgeQuery& query) const;

private:
  std::shared_ptr<ChatTransport> transport_;
  std::string model_;
  PromptTemplate prompt_;
  int max_attempts_;
};

} // namespace evidence
