#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aqo/cli.hpp"
#include "aqo/harness.hpp"

using namespace aqo;

namespace {

int run(const std::vector<std::string>& args, std::string* out_text = nullptr,
        std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run_command(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

std::string write_minimal_config(const std::string& path, std::uint64_t seed = 7) {
  std::ofstream f(path);
  f << R"({"seed": )" << seed << R"(, "embedding": {"dim": 48},
          "difficulty": {"latent_dim": 4, "head_hidden": 6},
          "allocator": {"hidden": 8}, "router": {"hidden": 8, "proj_dim": 4}})";
  return path;
}

}  // namespace

TEST_CASE("unknown commands exit 2 with usage") {
  std::string err;
  CHECK(run({"frobnicate"}, nullptr, &err) == 2);
  CHECK(err.find("usage:") != std::string::npos);
  CHECK(run({}) == 2);
  CHECK(run({"route", "--bogus-flag", "x"}) == 2);
}

TEST_CASE("a missing config file exits 3 and names the path") {
  std::string err;
  CHECK(run({"route", "--query", "2+2", "--config", "/no/such/config.json"}, nullptr, &err) ==
        3);
  CHECK(err.find("/no/such/config.json") != std::string::npos);
}

TEST_CASE("config validation failures exit 3 and name the field") {
  const std::string path = "cli_bad_config.json";
  {
    std::ofstream f(path);
    f << R"({"allocator": {"tau": 1.7}})";
  }
  std::string err;
  CHECK(run({"route", "--query", "2+2", "--config", path}, nullptr, &err) == 3);
  CHECK(err.find("allocator.tau") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("route on a fresh engine prints difficulty one half and depth three") {
  const std::string path = write_minimal_config("cli_route_config.json");
  std::string out;
  REQUIRE(run({"route", "--query", "2+2", "--config", path}, &out) == 0);
  const auto plan = nlohmann::json::parse(out);
  CHECK(plan["difficulty"].get<double>() == 0.5);
  CHECK(plan["depth"].get<int>() == 3);  // ceil(0.5 * 5)
  std::remove(path.c_str());
}

TEST_CASE("flags override config values") {
  const std::string path = write_minimal_config("cli_flags_config.json");
  std::string out;
  REQUIRE(run({"route", "--query", "2+2", "--config", path, "--l-max", "2"}, &out) == 0);
  const auto plan = nlohmann::json::parse(out);
  CHECK(plan["depth"].get<int>() == 1);  // ceil(0.5 * 2)
  std::remove(path.c_str());
}

TEST_CASE("route output is byte-identical across runs with the same seed") {
  const std::string path = write_minimal_config("cli_repro_config.json");
  std::string out1, out2;
  REQUIRE(run({"route", "--query", "Compute 17 - 5.", "--config", path, "--seed", "9"},
              &out1) == 0);
  REQUIRE(run({"route", "--query", "Compute 17 - 5.", "--config", path, "--seed", "9"},
              &out2) == 0);
  CHECK(out1 == out2);
  std::remove(path.c_str());
}

TEST_CASE("gradcheck command passes on a fresh install") {
  std::string out;
  CHECK(run({"gradcheck"}, &out) == 0);
  CHECK(out.find("FAIL") == std::string::npos);
}

TEST_CASE("write_report json round-trips and table lists models") {
  harness::EvalReport report;
  report.total_records = 3;
  report.accuracy = 2.0 / 3.0;
  report.mean_cost_usd = 0.002;
  report.cost_per_query = {0.001, 0.002, 0.003};
  report.model_selection_counts["alpha"] = 4;
  report.model_selection_counts["beta"] = 2;
  report.difficulty_histogram.assign(10, 0);

  const std::string path = "cli_report_test.json";
  cli::write_report(report, path, cli::ReportFormat::Json);
  std::ifstream in(path);
  nlohmann::json parsed = nlohmann::json::parse(in);
  CHECK(parsed["total_records"] == 3);
  CHECK(parsed["accuracy"].get<double>() == doctest::Approx(2.0 / 3.0));
  CHECK(parsed["model_selection_counts"]["alpha"] == 4);
  std::remove(path.c_str());

  const std::string table_path = "cli_report_test.txt";
  cli::write_report(report, table_path, cli::ReportFormat::Table);
  std::ifstream tin(table_path);
  std::stringstream buffer;
  buffer << tin.rdbuf();
  CHECK(buffer.str().find("alpha") != std::string::npos);
  CHECK(buffer.str().find("beta") != std::string::npos);
  std::remove(table_path.c_str());
}

TEST_CASE("an empty report serializes with a null accuracy and zero counts") {
  harness::EvalReport report;
  report.difficulty_histogram.assign(10, 0);
  const std::string path = "cli_empty_report.json";
  cli::write_report(report, path, cli::ReportFormat::Json);
  std::ifstream in(path);
  nlohmann::json parsed = nlohmann::json::parse(in);
  CHECK(parsed["accuracy"].is_null());
  CHECK(parsed["total_records"] == 0);
  std::remove(path.c_str());
}

TEST_CASE("eval requires a dataset path") {
  const std::string path = write_minimal_config("cli_eval_config.json");
  std::string err;
  CHECK(run({"eval", "--config", path}, nullptr, &err) == 3);
  CHECK(err.find("paths.eval_dataset") != std::string::npos);
  std::remove(path.c_str());
}

TEST_CASE("eval runs end to end against the simulator backend") {
  const auto corpus = harness::generate_synthetic_corpus(12, 3);
  const std::string data_path = "cli_eval_data.jsonl";
  harness::save_dataset(data_path, corpus);
  const std::string config_path = "cli_eval_full_config.json";
  {
    std::ofstream f(config_path);
    f << R"({"seed": 3, "embedding": {"dim": 48},
            "difficulty": {"latent_dim": 4, "head_hidden": 6},
            "allocator": {"hidden": 8}, "router": {"hidden": 8, "proj_dim": 4},
            "paths": {"eval_dataset": ")"
      << data_path << R"(", "report": "cli_eval_report.json"}})";
  }
  std::string out;
  REQUIRE(run({"eval", "--config", config_path}, &out) == 0);
  std::ifstream in("cli_eval_report.json");
  REQUIRE(in.good());
  nlohmann::json report = nlohmann::json::parse(in);
  CHECK(report["total_records"] == 12);
  std::remove(config_path.c_str());
  std::remove(data_path.c_str());
  std::remove("cli_eval_report.json");
}

TEST_CASE("eval emits the table format on request") {
  const auto corpus = harness::generate_synthetic_corpus(6, 4);
  const std::string data_path = "cli_table_data.jsonl";
  harness::save_dataset(data_path, corpus);
  const std::string config_path = "cli_table_config.json";
  {
    std::ofstream f(config_path);
    f << R"({"seed": 4, "embedding": {"dim": 48},
            "difficulty": {"latent_dim": 4, "head_hidden": 6},
            "allocator": {"hidden": 8}, "router": {"hidden": 8, "proj_dim": 4},
            "paths": {"eval_dataset": ")"
      << data_path << R"("}})";
  }
  std::string out;
  REQUIRE(run({"eval", "--config", config_path, "--format", "table"}, &out) == 0);
  CHECK(out.find("accuracy") != std::string::npos);
  CHECK(out.find("sim-ultra") != std::string::npos);
  std::string err;
  CHECK(run({"eval", "--config", config_path, "--format", "yaml"}, nullptr, &err) == 2);
  std::remove(config_path.c_str());
  std::remove(data_path.c_str());
}

TEST_CASE("train resumes from an existing checkpoint") {
  const auto corpus = harness::generate_synthetic_corpus(8, 6);
  const std::string data_path = "cli_resume_data.jsonl";
  harness::save_dataset(data_path, corpus);
  const std::string config_path = "cli_resume_config.json";
  {
    std::ofstream f(config_path);
    f << R"({"seed": 6, "embedding": {"dim": 48},
            "difficulty": {"latent_dim": 4, "head_hidden": 6},
            "allocator": {"hidden": 8}, "router": {"hidden": 8, "proj_dim": 4},
            "optimizer": {"episodes": 4},
            "paths": {"train_dataset": ")"
      << data_path << R"(", "checkpoint": "cli_resume_ckpt.json"}})";
  }
  REQUIRE(run({"train", "--config", config_path}) == 0);
  std::string err;
  REQUIRE(run({"train", "--config", config_path}, nullptr, &err) == 0);
  CHECK(err.find("resumed from checkpoint") != std::string::npos);
  std::remove(config_path.c_str());
  std::remove(data_path.c_str());
  std::remove("cli_resume_ckpt.json");
}

TEST_CASE("train writes a line-delimited JSON episode log") {
  const auto corpus = harness::generate_synthetic_corpus(6, 8);
  const std::string data_path = "cli_log_data.jsonl";
  harness::save_dataset(data_path, corpus);
  const std::string config_path = "cli_log_config.json";
  {
    std::ofstream f(config_path);
    f << R"({"seed": 8, "embedding": {"dim": 48},
            "difficulty": {"latent_dim": 4, "head_hidden": 6},
            "allocator": {"hidden": 8}, "router": {"hidden": 8, "proj_dim": 4},
            "optimizer": {"episodes": 3},
            "paths": {"train_dataset": ")"
      << data_path << R"(", "log": "cli_train_log.jsonl"}})";
  }
  REQUIRE(run({"train", "--config", config_path}) == 0);
  std::ifstream log("cli_train_log.jsonl");
  REQUIRE(log.good());
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto entry = nlohmann::json::parse(line);
    CHECK(entry.contains("episode"));
    CHECK(entry.contains("query_id"));
    CHECK(entry["rewards"].is_array());
    CHECK(entry.contains("baseline"));
    CHECK(entry.contains("mean_cost_usd"));
    CHECK(entry.contains("d"));
    ++lines;
  }
  CHECK(lines == 3);
  std::remove(config_path.c_str());
  std::remove(data_path.c_str());
  std::remove("cli_train_log.jsonl");
}

TEST_CASE("train over an exhausted scripted backend skips every episode but completes") {
  const auto corpus = harness::generate_synthetic_corpus(6, 11);
  const std::string data_path = "cli_scripted_data.jsonl";
  harness::save_dataset(data_path, corpus);
  const std::string fixtures_path = "cli_scripted_fixtures.json";
  {
    std::ofstream f(fixtures_path);
    f << "{}";  // no recorded prompts: every backend call fails
  }
  const std::string config_path = "cli_scripted_config.json";
  {
    std::ofstream f(config_path);
    f << R"({"seed": 11, "embedding": {"dim": 48},
            "difficulty": {"latent_dim": 4, "head_hidden": 6},
            "allocator": {"hidden": 8}, "router": {"hidden": 8, "proj_dim": 4},
            "optimizer": {"episodes": 3},
            "default_backend": "scripted:)"
      << fixtures_path << R"(",
            "paths": {"train_dataset": ")"
      << data_path << R"("}})";
  }
  std::string out;
  REQUIRE(run({"train", "--config", config_path}, &out) == 0);
  CHECK(out.find("skipped 3") != std::string::npos);
  std::remove(config_path.c_str());
  std::remove(data_path.c_str());
  std::remove(fixtures_path.c_str());
}

TEST_CASE("train runs episodes against the simulator and checkpoints") {
  const auto corpus = harness::generate_synthetic_corpus(12, 5);
  const std::string data_path = "cli_train_data.jsonl";
  harness::save_dataset(data_path, corpus);
  const std::string config_path = "cli_train_config.json";
  {
    std::ofstream f(config_path);
    f << R"({"seed": 5, "embedding": {"dim": 48},
            "difficulty": {"latent_dim": 4, "head_hidden": 6},
            "allocator": {"hidden": 8}, "router": {"hidden": 8, "proj_dim": 4},
            "optimizer": {"episodes": 6},
            "paths": {"train_dataset": ")"
      << data_path << R"(", "checkpoint": "cli_train_ckpt.json"}})";
  }
  std::string out;
  REQUIRE(run({"train", "--config", config_path}, &out) == 0);
  CHECK(out.find("episodes 6") != std::string::npos);
  std::ifstream ckpt("cli_train_ckpt.json");
  CHECK(ckpt.good());
  std::remove(config_path.c_str());
  std::remove(data_path.c_str());
  std::remove("cli_train_ckpt.json");
}
