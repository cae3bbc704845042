#include "aqo/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "aqo/calc.hpp"

namespace aqo::harness {

using numerics::ContractViolation;

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "numeric") return TaskKind::Numeric;
  if (s == "exact_text") return TaskKind::ExactText;
  throw std::runtime_error("unknown task_kind: " + s);
}

std::string to_string(TaskKind k) {
  return k == TaskKind::Numeric ? "numeric" : "exact_text";
}

std::vector<DatasetRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  std::vector<DatasetRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json entry;
    try {
      entry = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("load_dataset: " + path + " line " + std::to_string(line_no) +
                               ": " + e.what());
    }
    auto require = [&](const char* field) -> const nlohmann::json& {
      if (!entry.contains(field))
        throw std::runtime_error("load_dataset: " + path + " line " + std::to_string(line_no) +
                                 ": missing field '" + field + "'");
      return entry.at(field);
    };
    DatasetRecord rec;
    rec.id = require("id").get<std::string>();
    rec.question = require("question").get<std::string>();
    rec.gold_answer = require("gold_answer").get<std::string>();
    rec.task_kind = task_kind_from_string(require("task_kind").get<std::string>());
    if (entry.contains("true_difficulty")) {
      rec.true_difficulty = entry["true_difficulty"].get<double>();
      if (!(*rec.true_difficulty > 0.0 && *rec.true_difficulty < 1.0))
        throw std::runtime_error("load_dataset: " + path + " line " + std::to_string(line_no) +
                                 ": true_difficulty must be in (0,1)");
    }
    if (rec.gold_answer.empty())
      throw std::runtime_error("load_dataset: " + path + " line " + std::to_string(line_no) +
                               ": gold_answer is empty");
    records.push_back(std::move(rec));
  }
  return records;
}

void save_dataset(const std::string& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  for (const auto& rec : records) {
    nlohmann::ordered_json entry;
    entry["id"] = rec.id;
    entry["question"] = rec.question;
    entry["gold_answer"] = rec.gold_answer;
    entry["task_kind"] = to_string(rec.task_kind);
    if (rec.true_difficulty) entry["true_difficulty"] = *rec.true_difficulty;
    out << entry.dump() << '\n';
  }
}

std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> split_train_test(
    const std::vector<DatasetRecord>& records, std::pair<int, int> ratio, std::uint64_t seed) {
  if (records.empty()) throw ContractViolation("split_train_test: no records");
  if (ratio.first < 1 || ratio.second < 0)
    throw ContractViolation("split_train_test: invalid ratio");
  std::vector<DatasetRecord> shuffled = records;
  Rng rng(Rng(seed).fork(0x73706c6974));
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.next_below(i)]);
  const double frac =
      static_cast<double>(ratio.first) / static_cast<double>(ratio.first + ratio.second);
  const std::size_t n_train = static_cast<std::size_t>(
      std::llround(static_cast<double>(shuffled.size()) * frac));
  std::vector<DatasetRecord> train(shuffled.begin(),
                                   shuffled.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<DatasetRecord> test(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train),
                                  shuffled.end());
  return {std::move(train), std::move(test)};
}

namespace {

std::string trim_copy(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string fold(const std::string& s) {
  std::string out = trim_copy(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool parse_numeric(const std::string& text, double* out) {
  std::string cleaned;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == '$') continue;
    cleaned.push_back(c);
  }
  if (cleaned.empty()) return false;
  if (cleaned.front() == '+') cleaned.erase(cleaned.begin());
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cleaned.data(), cleaned.data() + cleaned.size(), v);
  if (ec != std::errc{} || ptr != cleaned.data() + cleaned.size()) return false;
  *out = v;
  return true;
}

}  // namespace

AnswerCheck check_answer(const std::string& predicted, const DatasetRecord& record) {
  if (record.task_kind == TaskKind::ExactText)
    return {fold(predicted) == fold(record.gold_answer) ? 1 : 0, false};

  double p = 0.0, g = 0.0;
  if (!parse_numeric(predicted, &p)) return {0, true};
  if (!parse_numeric(record.gold_answer, &g)) return {0, true};
  if (p == g) return {1, false};
  const double rel = std::abs(p - g) / std::max(std::abs(p), std::abs(g));
  return {rel <= 1e-6 ? 1 : 0, false};
}

SimEnvironment SimEnvironment::defaults() {
  SimEnvironment env;
  env.protocol_multipliers = {
      {Protocol::Cot, 1.0},           {Protocol::Debate, 1.25},
      {Protocol::SelfConsistency, 1.15}, {Protocol::SelfRefine, 1.2},
      {Protocol::Ensemble, 1.2},      {Protocol::Testing, 1.05},
      {Protocol::React, 1.1},
  };
  return env;
}

double SimEnvironment::multiplier(Protocol p) const {
  auto it = protocol_multipliers.find(p);
  return it == protocol_multipliers.end() ? 1.0 : it->second;
}

double SimEnvironment::capacity(const alloc::WorkflowPlan& plan,
                                const alloc::OperatorCatalog& catalog,
                                const std::vector<router::ModelCard>& pool) const {
  if (!plan.has_assignments())
    throw ContractViolation("SimEnvironment: plan has no model assignments");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    for (std::size_t i = 0; i < plan.layers[l].chosen.size(); ++i) {
      const auto& op = catalog.operators[plan.layers[l].chosen[i]];
      const auto& card = pool[plan.assignments[l][i].pool_index];
      sum += card.sim_capability * multiplier(op.protocol);
      ++count;
    }
  }
  const double mean = sum / static_cast<double>(count);
  return mean * (1.0 + 0.1 * (static_cast<double>(plan.depth()) - 1.0));
}

double SimEnvironment::success_probability(const alloc::WorkflowPlan& plan,
                                           const alloc::OperatorCatalog& catalog,
                                           const std::vector<router::ModelCard>& pool,
                                           double true_difficulty) const {
  return numerics::sigmoid(alpha * (capacity(plan, catalog, pool) - beta * true_difficulty));
}

SimOutcome simulate_outcome(const alloc::WorkflowPlan& plan, const DatasetRecord& record,
                            const SimEnvironment& env, const alloc::OperatorCatalog& catalog,
                            const std::vector<router::ModelCard>& pool, Rng& rng) {
  if (!record.true_difficulty)
    throw ContractViolation("simulate_outcome: record has no planted difficulty");
  SimOutcome out;
  out.probability = env.success_probability(plan, catalog, pool, *record.true_difficulty);
  out.success = rng.next_double() < out.probability ? 1 : 0;

  exec::PricingTable pricing = exec::make_pricing(pool);
  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    for (std::size_t i = 0; i < plan.layers[l].chosen.size(); ++i) {
      const auto& op = catalog.operators[plan.layers[l].chosen[i]];
      const int calls = exec::ProtocolSpec::defaults(op.protocol).max_calls();
      for (int c = 0; c < calls; ++c) {
        exec::BackendCall call;
        call.model_name = plan.assignments[l][i].model_name;
        call.prompt_tokens = env.prompt_tokens_per_call;
        call.completion_tokens = env.completion_tokens_per_call;
        out.cost_usd += exec::record_cost(call, pricing);
        out.trace.push_back(std::move(call));
      }
    }
  }
  return out;
}

EvalReport evaluate(const Planner& planner, const PlanRunner& runner,
                    const std::vector<DatasetRecord>& records,
                    const std::vector<router::ModelCard>& pool) {
  EvalReport report;
  report.total_records = records.size();
  report.difficulty_histogram.assign(10, 0);
  for (const auto& card : pool) report.model_selection_counts[card.name] = 0;
  if (records.empty()) return report;

  double utility_sum = 0.0;
  double cost_sum = 0.0;
  double depth_sum = 0.0;
  for (const auto& record : records) {
    PlannedQuery planned = planner(record);
    const std::size_t bin = std::min<std::size_t>(
        9, static_cast<std::size_t>(planned.estimate.d * 10.0));
    ++report.difficulty_histogram[bin];
    depth_sum += static_cast<double>(planned.plan.depth());
    for (const auto& layer : planned.plan.assignments)
      for (const auto& decision : layer) ++report.model_selection_counts[decision.model_name];

    PlanOutcome outcome = runner(planned.plan, record);
    if (outcome.failed) report.failed_records.push_back(record.id);
    if (outcome.parse_flag) ++report.parse_flag_count;
    utility_sum += outcome.utility;
    cost_sum += outcome.cost_usd;
    report.cost_per_query.push_back(outcome.cost_usd);
  }
  report.accuracy = utility_sum / static_cast<double>(records.size());
  report.mean_cost_usd = cost_sum / static_cast<double>(records.size());
  report.mean_depth = depth_sum / static_cast<double>(records.size());
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json root;
  root["total_records"] = report.total_records;
  if (report.accuracy) root["accuracy"] = *report.accuracy;
  else root["accuracy"] = nullptr;
  root["mean_cost_usd"] = report.mean_cost_usd;
  root["mean_depth"] = report.mean_depth;
  root["cost_per_query"] = report.cost_per_query;
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (const auto& [name, count] : report.model_selection_counts) counts[name] = count;
  root["model_selection_counts"] = std::move(counts);
  root["difficulty_histogram"] = report.difficulty_histogram;
  root["failed_records"] = report.failed_records;
  root["parse_flag_count"] = report.parse_flag_count;
  return root.dump(2);
}

std::string report_to_table(const EvalReport& report) {
  std::ostringstream out;
  out << "records          " << report.total_records << '\n';
  out << "accuracy         ";
  if (report.accuracy) out << *report.accuracy;
  else out << "n/a";
  out << '\n';
  out << "mean_cost_usd    " << report.mean_cost_usd << '\n';
  out << "mean_depth       " << report.mean_depth << '\n';
  out << "failures         " << report.failed_records.size() << '\n';
  out << "parse_flags      " << report.parse_flag_count << '\n';
  out << "model selections:" << '\n';
  std::size_t width = 5;
  for (const auto& [name, count] : report.model_selection_counts)
    width = std::max(width, name.size());
  for (const auto& [name, count] : report.model_selection_counts) {
    out << "  " << name;
    for (std::size_t i = name.size(); i < width + 2; ++i) out << ' ';
    out << count << '\n';
  }
  return out.str();
}

double spearman(std::span<const double> xs, std::span<const double> ys, bool* constant_input) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw ContractViolation("spearman: need equal lengths >= 2");
  if (constant_input) *constant_input = false;

  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };

  const auto rx = ranks(xs);
  const auto ry = ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mean = (n + 1.0) / 2.0;
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (rx[i] - mean) * (ry[i] - mean);
    dx += (rx[i] - mean) * (rx[i] - mean);
    dy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (dx == 0.0 || dy == 0.0) {
    if (constant_input) *constant_input = true;
    return 0.0;
  }
  return num / std::sqrt(dx * dy);
}

namespace {

// Marsaglia-Tsang gamma sampler (shape >= 1 via boost for shape < 1).
double sample_gamma(double shape, Rng& rng) {
  if (shape < 1.0) {
    const double u = rng.next_double();
    return sample_gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.next_double();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_beta(double a, double b, Rng& rng) {
  const double x = sample_gamma(a, rng);
  const double y = sample_gamma(b, rng);
  return x / (x + y);
}

}  // namespace

std::vector<DatasetRecord> generate_synthetic_corpus(std::size_t count, std::uint64_t seed) {
  Rng rng(Rng(seed).fork(0x636f72707573));
  std::vector<DatasetRecord> records;
  records.reserve(count);
  const char* tiers[3] = {"easy", "medium", "hard"};
  // Easy and medium sit well inside the solvable range; hard concentrates
  // near the top so depth and strong models genuinely matter there.
  const double beta_params[3][2] = {{2.0, 12.0}, {6.0, 18.0}, {24.0, 1.5}};

  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t tier = i % 3;
    double d = sample_beta(beta_params[tier][0], beta_params[tier][1], rng);
    d = std::clamp(d, 0.02, 0.98);

    // Expression size tracks planted difficulty so the text carries signal.
    const int terms = 1 + static_cast<int>(std::lround(d * 9.0));
    std::string expr = std::to_string(1 + rng.next_below(99));
    for (int t = 0; t < terms; ++t) {
      const double which = rng.next_double();
      if (which < 0.25) expr += " * " + std::to_string(2 + rng.next_below(8));
      else if (which < 0.6) expr += " + " + std::to_string(1 + rng.next_below(99));
      else expr += " - " + std::to_string(1 + rng.next_below(99));
    }

    DatasetRecord rec;
    rec.id = std::string(tiers[tier]) + "-" + std::to_string(i);
    rec.question = "Compute the value of " + expr + ".";
    rec.gold_answer = format_number(eval_arithmetic(expr));
    rec.task_kind = TaskKind::Numeric;
    rec.true_difficulty = d;
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace aqo::harness
