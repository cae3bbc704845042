#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "aqo/calc.hpp"
#include "aqo/engine.hpp"
#include "aqo/harness.hpp"

using namespace aqo;
using harness::DatasetRecord;
using harness::TaskKind;

TEST_CASE("dataset loading") {
  const std::string path = "dataset_test.jsonl";

  SUBCASE("empty file loads an empty list") {
    std::ofstream(path).close();
    CHECK(harness::load_dataset(path).empty());
  }
  SUBCASE("one valid line loads one record") {
    {
      std::ofstream out(path);
      out << R"({"id":"q1","question":"2+2?","gold_answer":"4","task_kind":"numeric"})" << "\n";
    }
    const auto records = harness::load_dataset(path);
    REQUIRE(records.size() == 1);
    CHECK(records[0].id == "q1");
    CHECK(records[0].task_kind == TaskKind::Numeric);
    CHECK(!records[0].true_difficulty.has_value());
  }
  SUBCASE("a missing field is reported with its name and line number") {
    {
      std::ofstream out(path);
      out << R"({"id":"q1","question":"2+2?","gold_answer":"4","task_kind":"numeric"})" << "\n";
      out << R"({"id":"q2","question":"3+3?","task_kind":"numeric"})" << "\n";
    }
    try {
      harness::load_dataset(path);
      FAIL("expected an error");
    } catch (const std::exception& e) {
      const std::string what = e.what();
      CHECK(what.find("gold_answer") != std::string::npos);
      CHECK(what.find("line 2") != std::string::npos);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("train/test split is seeded, exhaustive, and disjoint") {
  std::vector<DatasetRecord> records;
  for (int i = 0; i < 100; ++i)
    records.push_back({"id-" + std::to_string(i), "q", "a", TaskKind::Numeric, {}});

  auto [train1, test1] = harness::split_train_test(records, {1, 4}, 7);
  CHECK(train1.size() == 20);
  CHECK(test1.size() == 80);

  auto [train2, test2] = harness::split_train_test(records, {1, 4}, 7);
  for (std::size_t i = 0; i < train1.size(); ++i) CHECK(train1[i].id == train2[i].id);

  std::set<std::string> ids;
  for (const auto& r : train1) ids.insert(r.id);
  for (const auto& r : test1) ids.insert(r.id);
  CHECK(ids.size() == 100);
}

TEST_CASE("answer checking") {
  DatasetRecord numeric{"q", "?", "42", TaskKind::Numeric, {}};
  CHECK(harness::check_answer("42", numeric).correct == 1);
  CHECK(harness::check_answer("42.0000001", numeric).correct == 1);
  CHECK(harness::check_answer("41.9", numeric).correct == 0);

  const auto flagged = harness::check_answer("forty-two", numeric);
  CHECK(flagged.correct == 0);
  CHECK(flagged.parse_flag);

  DatasetRecord money{"q", "?", "1234", TaskKind::Numeric, {}};
  CHECK(harness::check_answer("$1,234", money).correct == 1);

  DatasetRecord text{"q", "?", "Paris", TaskKind::ExactText, {}};
  CHECK(harness::check_answer("  paris ", text).correct == 1);
  CHECK(harness::check_answer("London", text).correct == 0);
  CHECK_FALSE(harness::check_answer("London", text).parse_flag);
}

namespace {

struct SimFixture {
  std::shared_ptr<embedding::HashingProvider> provider =
      std::make_shared<embedding::HashingProvider>(16, 1);
  alloc::OperatorCatalog catalog = builtin_catalog(*provider);
  std::vector<router::ModelCard> pool = builtin_sim_pool(*provider);

  // Single-op plan: protocol by name, model capability planted directly.
  alloc::WorkflowPlan plan(const std::string& op, std::size_t pool_index,
                           std::size_t depth = 1) {
    alloc::WorkflowPlan p;
    for (std::size_t l = 0; l < depth; ++l) {
      alloc::LayerSelection sel;
      sel.normalized_scores.assign(catalog.size(), 0.0);
      for (std::size_t i = 0; i < catalog.size(); ++i)
        if (catalog.operators[i].name == op) {
          sel.chosen.push_back(i);
          sel.normalized_scores[i] = 1.0;
        }
      p.layers.push_back(std::move(sel));
      router::RoutingDecision d;
      d.operator_index = 0;
      d.pool_index = pool_index;
      d.model_name = pool[pool_index].name;
      d.probabilities.assign(pool.size(), 1.0 / static_cast<double>(pool.size()));
      p.assignments.push_back({d});
    }
    return p;
  }
};

}  // namespace

TEST_CASE("simulator closed forms") {
  SimFixture fx;
  harness::SimEnvironment env = harness::SimEnvironment::defaults();
  env.beta = 1.0;

  // capacity = capability * multiplier(cot = 1.0) at depth 1
  const auto plan = fx.plan("cot", 1);  // sim-mini, capability 0.8
  CHECK(env.capacity(plan, fx.catalog, fx.pool) == doctest::Approx(0.8));

  SUBCASE("capacity equal to the threshold gives one half") {
    DatasetRecord rec{"q", "?", "1", TaskKind::Numeric, 0.8};
    CHECK(env.success_probability(plan, fx.catalog, fx.pool, 0.8) == doctest::Approx(0.5));
  }
  SUBCASE("a steep slope turns the sigmoid into a step") {
    env.alpha = 1e9;
    CHECK(env.success_probability(plan, fx.catalog, fx.pool, 0.5) == doctest::Approx(1.0));
    CHECK(env.success_probability(plan, fx.catalog, fx.pool, 0.99) ==
          doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("the depth bonus scales capacity") {
    const auto deep = fx.plan("cot", 1, 3);
    CHECK(env.capacity(deep, fx.catalog, fx.pool) == doctest::Approx(0.8 * 1.2));
  }
}

TEST_CASE("simulated outcomes match the closed-form rate and meter real cost") {
  SimFixture fx;
  harness::SimEnvironment env = harness::SimEnvironment::defaults();
  env.alpha = 8.0;
  env.beta = 1.0;
  const auto plan = fx.plan("self_consistency", 2);  // 5 calls on sim-pro
  DatasetRecord rec{"q", "?", "1", TaskKind::Numeric, 0.9};

  const double p = env.success_probability(plan, fx.catalog, fx.pool, 0.9);
  Rng rng(123);
  int hits = 0;
  const int n = 50000;
  double cost = -1.0;
  for (int i = 0; i < n; ++i) {
    const auto outcome = harness::simulate_outcome(plan, rec, env, fx.catalog, fx.pool, rng);
    hits += outcome.success;
    CHECK(outcome.trace.size() == 5);
    if (cost < 0) {
      cost = outcome.cost_usd;
      // per-call budget at sim-pro prices, through the real ledger
      exec::PricingTable pricing = exec::make_pricing(fx.pool);
      double expected = 0.0;
      for (const auto& call : outcome.trace) expected += exec::record_cost(call, pricing);
      CHECK(outcome.cost_usd == expected);
    } else {
      CHECK(outcome.cost_usd == cost);  // deterministic budget
    }
  }
  CHECK(std::abs(static_cast<double>(hits) / n - p) <= 0.01);
}

TEST_CASE("spearman closed forms") {
  CHECK(harness::spearman(std::vector<double>{1, 2, 3, 4},
                          std::vector<double>{10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(harness::spearman(std::vector<double>{1, 2, 3},
                          std::vector<double>{3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(harness::spearman(std::vector<double>{1, 2, 3},
                          std::vector<double>{1, 3, 2}) == doctest::Approx(0.5));

  bool constant = false;
  CHECK(harness::spearman(std::vector<double>{5, 5, 5}, std::vector<double>{1, 2, 3},
                          &constant) == 0.0);
  CHECK(constant);
}

TEST_CASE("evaluate aggregates utilities, costs, and selections") {
  SimFixture fx;
  std::vector<DatasetRecord> records;
  for (int i = 0; i < 10; ++i)
    records.push_back({"r-" + std::to_string(i), "q", "1", TaskKind::Numeric, 0.5});

  harness::Planner planner = [&](const DatasetRecord&) {
    harness::PlannedQuery out;
    out.plan = fx.plan("cot", 0, 2);
    out.estimate.d = 0.35;
    out.estimate.z = {0.0};
    return out;
  };
  harness::PlanRunner runner = [](const alloc::WorkflowPlan&, const DatasetRecord&) {
    harness::PlanOutcome o;
    o.utility = 1.0;
    o.cost_usd = 0.001;
    return o;
  };
  const auto report = harness::evaluate(planner, runner, records, fx.pool);
  CHECK(report.accuracy.value() == doctest::Approx(1.0));
  CHECK(report.mean_cost_usd == doctest::Approx(0.001));
  CHECK(report.mean_depth == doctest::Approx(2.0));
  CHECK(report.model_selection_counts.at("sim-nano") == 20);  // 10 records x 2 layers
  CHECK(report.model_selection_counts.at("sim-ultra") == 0);
  std::size_t hist_total = 0;
  for (auto c : report.difficulty_histogram) hist_total += c;
  CHECK(hist_total == 10);
  CHECK(report.difficulty_histogram[3] == 10);  // d = 0.35 lands in bin 3

  const auto empty = harness::evaluate(planner, runner, {}, fx.pool);
  CHECK(!empty.accuracy.has_value());
  CHECK(empty.cost_per_query.empty());
}

TEST_CASE("report serialization round trips") {
  harness::EvalReport report;
  report.total_records = 2;
  report.accuracy = 0.5;
  report.mean_cost_usd = 0.25;
  report.cost_per_query = {0.1, 0.4};
  report.model_selection_counts["m"] = 3;
  report.difficulty_histogram.assign(10, 0);
  report.difficulty_histogram[4] = 2;
  const std::string json = harness::report_to_json(report);
  CHECK(json.find("\"accuracy\": 0.5") != std::string::npos);
  const std::string table = harness::report_to_table(report);
  CHECK(table.find("m") != std::string::npos);
}

TEST_CASE("synthetic corpus is deterministic with planted difficulties and exact golds") {
  const auto a = harness::generate_synthetic_corpus(60, 9);
  const auto b = harness::generate_synthetic_corpus(60, 9);
  REQUIRE(a.size() == 60);
  std::size_t easy = 0, medium = 0, hard = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].question == b[i].question);
    CHECK(a[i].gold_answer == b[i].gold_answer);
    REQUIRE(a[i].true_difficulty.has_value());
    CHECK(*a[i].true_difficulty > 0.0);
    CHECK(*a[i].true_difficulty < 1.0);
    if (a[i].id.rfind("easy-", 0) == 0) ++easy;
    if (a[i].id.rfind("medium-", 0) == 0) ++medium;
    if (a[i].id.rfind("hard-", 0) == 0) ++hard;

    // The gold answer is the evaluated expression embedded in the question.
    const std::string& q = a[i].question;
    const auto start = q.find("of ") + 3;
    const auto end = q.rfind('.');
    const double expected = eval_arithmetic(q.substr(start, end - start));
    CHECK(a[i].gold_answer == format_number(expected));
  }
  CHECK(easy == 20);
  CHECK(medium == 20);
  CHECK(hard == 20);
}

TEST_CASE("hard tier questions are longer than easy tier questions on average") {
  const auto corpus = harness::generate_synthetic_corpus(300, 3);
  double easy_len = 0, hard_len = 0;
  std::size_t n_easy = 0, n_hard = 0;
  for (const auto& r : corpus) {
    if (r.id.rfind("easy-", 0) == 0) {
      easy_len += static_cast<double>(r.question.size());
      ++n_easy;
    } else if (r.id.rfind("hard-", 0) == 0) {
      hard_len += static_cast<double>(r.question.size());
      ++n_hard;
    }
  }
  CHECK(easy_len / static_cast<double>(n_easy) < hard_len / static_cast<double>(n_hard));
}
