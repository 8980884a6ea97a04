#pragma once

// Scripted models for exercising the evaluation harness.

#include <map>

#include "evidence/harness.hpp"
#include "fakes.hpp"

namespace models {

inline std::string oracle_response(const evidence::BenchmarkSample& s) {
  std::vector<evidence::ThinkPiece> think;
  for (const auto& b : s.target_boxes) {
    think.emplace_back(std::string("the target is at "));
    think.emplace_back(b);
  }
  return evidence::render_response(think, s.answer.str());
}

inline std::string always_a_response(const evidence::BenchmarkSample&) {
  return "<think>guessing</think><answer>A</answer>";
}

class FnModel final : public evidence::ModelClient {
public:
  FnModel(std::string id, std::function<std::string(const evidence::BenchmarkSample&)> fn)
      : id_(std::move(id)), fn_(std::move(fn)) {}
  std::string answer(const evidence::BenchmarkSample& s, const std::string&, std::uint64_t) override {
    return fn_(s);
  }
  std::string model_id() const override { return id_; }

private:
  std::string id_;
  std::function<std::string(const evidence::BenchmarkSample&)> fn_;
};

/// Chat endpoint that finds the sample by its question text inside the
/// prompt and replies with `fn(sample)`.
inline std::shared_ptr<fakes::ScriptedChat>
chat_for(std::span<const evidence::BenchmarkSample> samples,
         std::function<std::string(const evidence::BenchmarkSample&)> fn) {
  std::vector<evidence::BenchmarkSample> copy(samples.begin(), samples.end());
  return std::make_shared<fakes::ScriptedChat>([copy, fn](const nlohmann::json& req) {
    const auto prompt = fakes::prompt_of(req);
    for (const auto& s : copy)
      if (prompt.find(s.question) != std::string::npos)
        return fn(s);
    return std::string("<think>unknown</think><answer>none</answer>");
  });
}

} // namespace models
