#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace evidence {

/// Text with {{name}} placeholders. Templates are versioned by name and
/// identified in reports and hashes by the SHA-256 of their text.
struct PromptTemplate {
  std::string name;
  std::string text;

  static PromptTemplate builtin_judge();
  static PromptTemplate builtin_eval();
  /// Name is the file stem.
  static PromptTemplate from_file(const std::filesystem::path& path);

  std::string hash() const;

  /// Replaces every {{key}}; unknown placeholders are left as written.
  std::string render(const std::map<std::string, std::string>& vars) const;
};

} // namespace evidence
