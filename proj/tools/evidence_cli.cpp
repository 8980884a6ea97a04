// evidence: command-line front end for the reward engine, benchmark harness
// and data pipeline.

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "evidence/conformance.hpp"
#include "evidence/data_pipeline.hpp"
#include "evidence/hashing.hpp"
#include "evidence/jsonl.hpp"
#include "evidence/report.hpp"
#include "evidence/reward_service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace evidence;

namespace {

struct Common {
  std::uint64_t seed = 0;
  fs::path config;
  fs::path out;
};

json load_config(const fs::path& p) {
  if (p.empty())
    return json::object();
  return json::parse(read_text(p));
}

std::string env_or_empty(const json& j, const char* key) {
  if (!j.contains(key))
    return {};
  const char* v = std::getenv(j[key].get<std::string>().c_str());
  return v ? v : "";
}

PromptTemplate eval_prompt(const json& cfg) {
  if (cfg.contains("prompt"))
    return PromptTemplate::from_file(cfg["prompt"].get<std::string>());
  return PromptTemplate::builtin_eval();
}

VerdictTable read_verdicts(const std::vector<fs::path>& files) {
  VerdictTable table;
  for (const auto& f : files)
    for (const auto& [line_no, row] : read_jsonl(f)) {
      if (!row.contains("id") || !row.contains("correct"))
        throw std::runtime_error(f.string() + ":" + std::to_string(line_no) +
                                 ": verdict rows need id and correct");
      table[row["id"].get<std::string>()].push_back(row["correct"].get<bool>());
    }
  return table;
}

void write_rows(const fs::path& out, const std::vector<json>& rows) {
  if (out.empty())
    std::cout << to_jsonl(rows);
  else
    write_text(out, to_jsonl(rows));
}

void write_reports(const fs::path& dir, const EvalReport& rep) {
  write_text(dir / "report.json", render_json(rep));
  write_text(dir / "report.csv", render_category_csv(rep));
  write_text(dir / "report.md", render_markdown(rep));
  write_text(dir / "histograms.csv", render_histogram_csv(rep));
}

int eval_run(const Common& c, const fs::path& dataset, const fs::path& cassette,
             const std::string& cassette_mode) {
  const json cfg = load_config(c.config);
  const json model_cfg = cfg.value("model", json::object());
  auto samples = load_dataset(dataset);

  std::shared_ptr<ChatTransport> transport;
  if (cassette_mode == "replay") {
    transport = CassetteTransport::replay(cassette);
  } else {
    auto http = std::make_shared<HttpChatTransport>(
        model_cfg.value("endpoint", "http://127.0.0.1:8000/v1"), env_or_empty(model_cfg, "token_env"),
        std::chrono::seconds(model_cfg.value("timeout_s", 120)));
    if (cassette_mode == "record")
      transport = CassetteTransport::record(cassette, http);
    else
      transport = http;
  }

  ChatModelClient::Options mo;
  mo.model = model_cfg.value("name", "model-under-test");
  mo.image_root = model_cfg.value("image_root", fs::path(dataset).parent_path().string());
  mo.attach_images = model_cfg.value("attach_images", true);
  mo.max_tokens = model_cfg.value("max_tokens", 2048);
  ChatModelClient model(transport, mo);

  EvalOptions eo;
  eo.prompt = eval_prompt(cfg);
  eo.seed = c.seed;
  eo.max_parallel = cfg.value("max_parallel", 4);
  eo.max_attempts = cfg.value("max_attempts", 3);
  const auto records = evaluate(model, samples, eo);

  std::vector<json> rows;
  for (const auto& r : records)
    rows.push_back(to_json(r));
  const fs::path dir = c.out.empty() ? fs::path("eval_out") : c.out;
  write_text(dir / "records.jsonl", to_jsonl(rows));
  const ReportMeta meta{mo.model, eo.prompt.name, eo.prompt.hash(), c.seed};
  write_text(dir / "run.json", json{{"model", meta.model_id},
                                    {"prompt_template", meta.prompt_name},
                                    {"prompt_sha256", meta.prompt_hash},
                                    {"seed", meta.seed},
                                    {"dataset", dataset.string()}}
                                   .dump(2) +
                                   "\n");
  const EvalReport rep = build_report(records, samples, meta);
  write_reports(dir, rep);
  std::cout << render_markdown(rep);
  return 0;
}

int eval_report(const Common& c, const fs::path& dataset, const fs::path& records_path,
                fs::path run_meta) {
  const auto samples = load_dataset(dataset);
  const auto records = load_records(records_path, samples);
  if (run_meta.empty() && fs::exists(records_path.parent_path() / "run.json"))
    run_meta = records_path.parent_path() / "run.json";
  ReportMeta meta;
  meta.seed = c.seed;
  if (!run_meta.empty()) {
    const json m = json::parse(read_text(run_meta));
    meta.model_id = m.value("model", "");
    meta.prompt_name = m.value("prompt_template", "");
    meta.prompt_hash = m.value("prompt_sha256", "");
    meta.seed = m.value("seed", c.seed);
  }
  const EvalReport rep = build_report(records, samples, meta);
  write_reports(c.out.empty() ? fs::path("eval_report") : c.out, rep);
  std::cout << render_markdown(rep);
  return 0;
}

int eval_filter_consensus(const Common& c, const fs::path& dataset,
                          const std::vector<fs::path>& records, std::size_t models) {
  const auto samples = load_dataset(dataset);
  const auto kept = consensus_filter(samples, read_verdicts(records), models);
  std::vector<json> rows;
  for (const auto& s : kept)
    rows.push_back(to_json(s));
  write_rows(c.out, rows);
  std::cerr << "kept " << kept.size() << " of " << samples.size() << " samples\n";
  return 0;
}

int parser_conformance(const Common& c, const fs::path& corpus) {
  const auto cases = load_conformance_corpus(corpus);
  const auto results = run_conformance(cases);
  std::size_t failed = 0;
  std::vector<json> rows;
  for (const auto& r : results) {
    rows.push_back({{"line", r.line_no}, {"pass", r.pass}, {"detail", r.detail}});
    if (!r.pass) {
      ++failed;
      std::cout << "FAIL line " << r.line_no << ": " << r.detail << "\n";
    }
  }
  if (!c.out.empty())
    write_text(c.out, to_jsonl(rows));
  std::cout << results.size() - failed << "/" << results.size() << " cases pass\n";
  return failed == 0 ? 0 : 1;
}

std::vector<Trajectory> read_trajectories(const fs::path& in) {
  std::vector<Trajectory> out;
  for (const auto& [line_no, row] : read_jsonl(in)) {
    try {
      out.push_back(trajectory_from_json(row));
    } catch (const std::exception& e) {
      throw std::runtime_error(in.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<json> to_rows(const std::vector<Trajectory>& ts) {
  std::vector<json> rows;
  for (const auto& t : ts)
    rows.push_back(to_json(t));
  return rows;
}

volatile std::sig_atomic_t g_stop = 0;

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traceable-evidence reward engine, benchmark harness and data pipeline"};
  app.require_subcommand(1);
  Common c;
  app.add_option("--seed", c.seed, "Run seed")->capture_default_str();
  app.add_option("--config", c.config, "JSON config file");
  app.add_option("--out", c.out, "Output file or directory");

  // eval
  auto* eval = app.add_subcommand("eval", "Benchmark evaluation")->require_subcommand(1);
  eval->fallthrough();
  fs::path dataset, cassette, records_path, run_meta;
  std::string cassette_mode = "off";
  auto* run = eval->add_subcommand("run", "Query a model over a dataset and score it");
  run->fallthrough();
  run->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
  run->add_option("--cassette", cassette, "Transcript cassette file");
  run->add_option("--cassette-mode", cassette_mode, "off | record | replay")
      ->check(CLI::IsMember({"off", "record", "replay"}));

  auto* report = eval->add_subcommand("report", "Rebuild reports from persisted records");
  report->fallthrough();
  report->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
  report->add_option("--records", records_path)->required()->check(CLI::ExistingFile);
  report->add_option("--run-meta", run_meta);

  std::vector<fs::path> record_files;
  std::size_t models = 4;
  auto* consensus = eval->add_subcommand("filter-consensus",
                                         "Drop questions every reference model answered correctly");
  consensus->fallthrough();
  consensus->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
  consensus->add_option("--records", record_files, "Records or verdict files, one per model")
      ->required();
  consensus->add_option("--models", models)->capture_default_str();

  // parser
  auto* parser = app.add_subcommand("parser", "Response parser tools")->require_subcommand(1);
  parser->fallthrough();
  fs::path corpus;
  auto* conf = parser->add_subcommand("conformance", "Check the parser against a fixture corpus");
  conf->fallthrough();
  conf->add_option("--in,--corpus", corpus)->required()->check(CLI::ExistingFile);

  // data
  auto* data = app.add_subcommand("data", "Dataset construction")->require_subcommand(1);
  data->fallthrough();
  fs::path in;
  bool round = false;
  double fraction = 4.7 / 35.0, ceiling = 0.1;
  std::size_t k = 1;
  fs::path verdicts;
  std::string counting_format = "json";

  auto* denorm = data->add_subcommand("denormalize", "Normalized trajectories to absolute boxes");
  denorm->add_flag("--round", round, "Round coordinates half away from zero");
  auto* multibox = data->add_subcommand("filter-multibox", "Keep trajectories with 2+ boxes");
  auto* reflect = data->add_subcommand("inject-reflection", "Insert decoy boxes with a marker");
  reflect->add_option("--fraction", fraction, "Share of trajectories to perturb")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  reflect->add_option("--iou-ceiling", ceiling)->check(CLI::Range(0.0, 0.999))->capture_default_str();
  auto* hard = data->add_subcommand("filter-hard", "Keep samples the reference model always missed");
  hard->add_option("--verdicts", verdicts)->required()->check(CLI::ExistingFile);
  hard->add_option("--k", k)->check(CLI::PositiveNumber)->capture_default_str();
  auto* counting = data->add_subcommand("make-counting", "Build counting multiple-choice samples");
  counting->add_option("--format", counting_format, "json | visdrone-manifest")
      ->check(CLI::IsMember({"json", "visdrone-manifest"}));
  for (auto* sub : {denorm, multibox, reflect, hard, counting}) {
    sub->fallthrough();
    sub->add_option("--in", in)->required()->check(CLI::ExistingFile);
  }

  // serve
  std::string host;
  int port = -1;
  auto* serve = app.add_subcommand("serve", "Run the HTTP reward service");
  serve->fallthrough();
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return eval_run(c, dataset, cassette, cassette_mode);
    if (report->parsed())
      return eval_report(c, dataset, records_path, run_meta);
    if (consensus->parsed())
      return eval_filter_consensus(c, dataset, record_files, models);
    if (conf->parsed())
      return parser_conformance(c, corpus);

    if (denorm->parsed()) {
      std::vector<json> rows;
      for (const auto& [line_no, row] : read_jsonl(in))
        rows.push_back(to_json(trajectory_from_normalized(
            row, round ? Rounding::HalfAwayFromZero : Rounding::None)));
      write_rows(c.out, rows);
      return 0;
    }
    if (multibox->parsed()) {
      const auto ts = read_trajectories(in);
      const auto kept = filter_multibox(ts);
      write_rows(c.out, to_rows(kept));
      std::cerr << "kept " << kept.size() << " of " << ts.size() << " trajectories\n";
      return 0;
    }
    if (reflect->parsed()) {
      ReflectionOptions opts;
      opts.iou_ceiling = ceiling;
      std::vector<Trajectory> out;
      std::size_t injected = 0;
      for (auto& t : read_trajectories(in)) {
        if (t.box_count() > 0 && selected_for_reflection(t.id, c.seed, fraction)) {
          out.push_back(inject_reflection(t, c.seed, opts));
          out.back().extra["reflective"] = true;
          ++injected;
        } else {
          out.push_back(std::move(t));
        }
      }
      write_rows(c.out, to_rows(out));
      std::cerr << "injected decoys into " << injected << " of " << out.size() << "\n";
      return 0;
    }
    if (hard->parsed()) {
      std::vector<json> rows;
      for (auto& [line_no, row] : read_jsonl(in))
        rows.push_back(std::move(row));
      const auto kept = filter_hard(rows, read_verdicts({verdicts}), k);
      write_rows(c.out, kept);
      std::cerr << "kept " << kept.size() << " of " << rows.size() << " samples\n";
      return 0;
    }
    if (counting->parsed()) {
      std::vector<json> rows;
      std::size_t total = 0;
      for (const auto& [line_no, row] : read_jsonl(in)) {
        ++total;
        CountingAnnotation a;
        if (counting_format == "json") {
          a = counting_annotation_from_json(row);
        } else {
          const fs::path ann = in.parent_path() / row.at("annotation").get<std::string>();
          a = parse_visdrone_annotation(
              read_text(ann), row.at("id").get<std::string>(), row.value("image", ""),
              ImageDims(row.at("dims").at("width").get<long>(), row.at("dims").at("height").get<long>()));
        }
        if (auto s = make_counting_mcq(a, c.seed))
          rows.push_back(to_json(*s));
      }
      write_rows(c.out, rows);
      std::cerr << "built " << rows.size() << " counting samples from " << total << " images\n";
      return 0;
    }

    if (serve->parsed()) {
      ServiceConfig cfg = c.config.empty() ? ServiceConfig{} : load_service_config(c.config);
      if (!host.empty())
        cfg.host = host;
      if (port >= 0)
        cfg.port = port;
      auto judge = make_judge(cfg);
      std::string prompt_hash = PromptTemplate::builtin_judge().hash();
      std::function<bool()> probe;
      if (cfg.judge) {
        if (!cfg.judge->prompt_path.empty())
          prompt_hash = PromptTemplate::from_file(cfg.judge->prompt_path).hash();
        if (judge) {
          auto transport = std::make_shared<HttpChatTransport>(cfg.judge->endpoint, cfg.judge->token);
          probe = [transport] { return transport->probe(); };
        }
      }
      std::ofstream log_file;
      RewardService service(cfg, judge, prompt_hash, probe);
      if (!cfg.access_log.empty()) {
        log_file.open(cfg.access_log, std::ios::app);
        service.set_access_log(&log_file);
      }
      const int bound = service.start();
      std::cerr << "reward service listening on " << cfg.host << ":" << bound << " (spec "
                << service.spec_hash().substr(0, 12) << ")\n";
      std::signal(SIGINT, [](int) { g_stop = 1; });
      std::signal(SIGTERM, [](int) { g_stop = 1; });
      while (!g_stop)
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
      service.stop();
      return 0;
    }
  } catch (const DatasetError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
