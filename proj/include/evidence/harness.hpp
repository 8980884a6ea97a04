#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evidence/chat.hpp"
#include "evidence/geometry.hpp"
#include "evidence/prompt_template.hpp"
#include "evidence/response_parser.hpp"

namespace evidence {

enum class Protocol { Perception, Reasoning };

enum class Category {
  Attributes,
  Material,
  PhysicalState,
  ObjectRetrieval,
  OCR,
  PerspectiveTransform,
  Ordering,
  ContactOcclusion,
  SpatialContainment,
  Comparison,
};

inline constexpr std::array<Category, 10> kAllCategories{
    Category::Attributes,         Category::Material,         Category::PhysicalState,
    Category::ObjectRetrieval,    Category::OCR,              Category::PerspectiveTransform,
    Category::Ordering,           Category::ContactOcclusion, Category::SpatialContainment,
    Category::Comparison,
};

std::string_view to_string(Category c);
std::string_view to_string(Protocol p);
std::optional<Category> parse_category(std::string_view s);
std::optional<Protocol> parse_protocol(std::string_view s);
Protocol protocol_of(Category c);

struct OptionEntry {
  OptionLetter letter;
  std::string text;
};

struct BenchmarkSample {
  std::string id;
  std::string image_ref;
  ImageDims dims{1, 1};
  Category category = Category::Attributes;
  Protocol protocol = Protocol::Perception;
  std::string question;
  std::vector<OptionEntry> options;
  OptionLetter answer{'A'};
  BoxSet target_boxes;

  LetterSet letters() const;
};

/// Validates one dataset row; throws std::invalid_argument describing the
/// first violation.
BenchmarkSample sample_from_json(const nlohmann::json& row);
nlohmann::json to_json(const BenchmarkSample& s);

class DatasetError : public std::runtime_error {
public:
  DatasetError(const std::string& what, std::vector<std::string> problems)
      : std::runtime_error(what), problems(std::move(problems)) {}
  std::vector<std::string> problems; ///< "line N: ..." for at most ten lines
};

/// Reads a line-delimited dataset. Throws DatasetError listing the first ten
/// offending lines, or std::runtime_error if the file cannot be read.
std::vector<BenchmarkSample> load_dataset(const std::filesystem::path& path);

/// The model under test.
class ModelClient {
public:
  virtual ~ModelClient() = default;
  /// Returns the raw response text; throws TransportError on failure.
  virtual std::string answer(const BenchmarkSample& sample, const std::string& prompt,
                             std::uint64_t seed) = 0;
  virtual std::string model_id() const = 0;
};

/// ModelClient over an OpenAI-compatible chat endpoint. Local images are
/// read from `image_root` and inlined as base64 data URLs; http(s) refs are
/// passed through as URLs.
class ChatModelClient final : public ModelClient {
public:
  struct Options {
    std::string model;
    std::filesystem::path image_root;
    bool attach_images = true;
    int max_tokens = 2048;
  };

  ChatModelClient(std::shared_ptr<ChatTransport> transport, Options options);

  std::string answer(const BenchmarkSample& sample, const std::string& prompt,
                     std::uint64_t seed) override;
  std::string model_id() const override { return options_.model; }

  nlohmann::json build_request(const BenchmarkSample& sample, const std::string& prompt,
                               std::uint64_t seed) const;

private:
  std::shared_ptr<ChatTransport> transport_;
  Options options_;
};

std::string render_prompt(const PromptTemplate& tpl, const BenchmarkSample& sample);

struct EvalRecord {
  std::string id;
  ParsedResponse parsed;
  bool correct = false;
  double question_iou = 0.0;        ///< dual (recall + precision) / 2
  double question_iou_recall = 0.0; ///< recall term alone, for comparison
  double latency_s = 0.0;
  bool unanswered = false;
  int attempts = 0;
};

nlohmann::json to_json(const EvalRecord& r);
/// Rebuilds a record, re-parsing the stored response against the sample's
/// option letters.
EvalRecord record_from_json(const nlohmann::json& row, const BenchmarkSample& sample);
std::vector<EvalRecord> load_records(const std::filesystem::path& path,
                                     std::span<const BenchmarkSample> samples);

/// Dual IoU between the response's boxes and the targets; 0 without boxes.
double question_iou(const ParsedResponse& parsed, std::span<const Box> gt_boxes);

/// Scores one response against a sample (no model call).
EvalRecord score_sample(const BenchmarkSample& sample, std::string response_text);

struct EvalOptions {
  PromptTemplate prompt = PromptTemplate::builtin_eval();
  std::uint64_t seed = 0;
  std::size_t max_parallel = 4;
  int max_attempts = 3;
  std::chrono::milliseconds retry_backoff{200};
};

/// Queries the model once per sample with bounded parallelism. Transport
/// failures are retried up to `max_attempts`; a sample that still fails is
/// recorded as unanswered (incorrect, IoU 0). Records come back in sample
/// order.
std::vector<EvalRecord> evaluate(ModelClient& model, std::span<const BenchmarkSample> samples,
                                 const EvalOptions& options);

/// Verdicts keyed by sample id, one entry per model (or attempt).
using VerdictTable = std::map<std::string, std::vector<bool>>;

/// Appends each record's correctness to `table`.
void add_verdicts(VerdictTable& table, std::span<const EvalRecord> records);

class MissingVerdicts : public std::runtime_error {
public:
  MissingVerdicts(const std::string& what, std::vector<std::string> ids)
      : std::runtime_error(what), ids(std::move(ids)) {}
  std::vector<std::string> ids;
};

/// Drops samples every reference model answered correctly. Each sample needs
/// exactly `models` verdicts; otherwise throws MissingVerdicts.
std::vector<BenchmarkSample> consensus_filter(std::span<const BenchmarkSample> samples,
                                              const VerdictTable& verdicts, std::size_t models = 4);

} // namespace evidence
