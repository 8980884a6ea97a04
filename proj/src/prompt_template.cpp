#include "evidence/prompt_template.hpp"

#include "evidence/builtin_templates.hpp"
#include "evidence/hashing.hpp"
#include "evidence/jsonl.hpp"

namespace evidence {

PromptTemplate PromptTemplate::builtin_judge() {
  return {std::string(builtin::kJudgePromptName), std::string(builtin::kJudgePrompt)};
}

PromptTemplate PromptTemplate::builtin_eval() {
  return {std::string(builtin::kEvalPromptName), std::string(builtin::kEvalPrompt)};
}

PromptTemplate PromptTemplate::from_file(const std::filesystem::path& path) {
  return {path.stem().string(), read_text(path)};
}

std::string PromptTemplate::hash() const { return sha256_hex(text); }

std::string PromptTemplate::render(const std::map<std::string, std::string>& vars) const {
  std::string out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    const size_t open = text.find("{{", i);
    if (open == std::string::npos) {
      out.append(text, i, std::string::npos);
      break;
    }
    const size_t close = text.find("}}", open + 2);
    if (close == std::string::npos) {
      out.append(text, i, std::string::npos);
      break;
    }
    out.append(text, i, open - i);
    const std::string key = text.substr(open + 2, close - open - 2);
    if (auto it = vars.find(key); it != vars.end())
      out += it->second;
    else
      out.append(text, open, close + 2 - open);
    i = close + 2;
  }
  return out;
}

} // namespace evidence
