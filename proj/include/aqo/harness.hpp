#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aqo/allocator.hpp"
#include "aqo/difficulty.hpp"
#include "aqo/executor.hpp"
#include "aqo/protocol.hpp"
#include "aqo/rng.hpp"

namespace aqo::harness {

enum class TaskKind { Numeric, ExactText };

TaskKind task_kind_from_string(const std::string& s);
std::string to_string(TaskKind k);

struct DatasetRecord {
  std::string id;
  std::string question;
  std::string gold_answer;
  TaskKind task_kind = TaskKind::Numeric;
  std::optional<double> true_difficulty;  // synthetic corpora only
};

// Line-delimited JSON: {"id","question","gold_answer","task_kind","true_difficulty"?}
std::vector<DatasetRecord> load_dataset(const std::string& path);
void save_dataset(const std::string& path, const std::vector<DatasetRecord>& records);

// Seeded shuffle then split; ratio (train_parts, test_parts).
std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> split_train_test(
    const std::vector<DatasetRecord>& records, std::pair<int, int> ratio, std::uint64_t seed);

struct AnswerCheck {
  int correct = 0;        // 1 when the prediction matches the gold answer
  bool parse_flag = false;  // numeric prediction that failed to parse
};

AnswerCheck check_answer(const std::string& predicted, const DatasetRecord& record);

// Offline success model: p = sigmoid(alpha * (capacity(plan) - beta * d*)),
// capacity = mean over operators of (sim_capability * protocol multiplier)
// scaled by (1 + 0.1 * (depth - 1)).
struct SimEnvironment {
  double alpha = 8.0;
  double beta = 1.0;
  std::map<Protocol, double> protocol_multipliers;  // missing entries default to 1.0
  long prompt_tokens_per_call = 300;
  long completion_tokens_per_call = 150;
  std::uint64_t seed = 0;

  static SimEnvironment defaults();
  double multiplier(Protocol p) const;
  double capacity(const alloc::WorkflowPlan& plan, const alloc::OperatorCatalog& catalog,
                  const std::vector<router::ModelCard>& pool) const;
  double success_probability(const alloc::WorkflowPlan& plan,
                             const alloc::OperatorCatalog& catalog,
                             const std::vector<router::ModelCard>& pool,
                             double true_difficulty) const;
};

struct SimOutcome {
  int success = 0;
  double probability = 0.0;
  double cost_usd = 0.0;
  std::vector<exec::BackendCall> trace;
};

// Bernoulli draw on the closed-form p; synthetic token usage is the
// per-protocol full call budget, metered through the real cost ledger.
SimOutcome simulate_outcome(const alloc::WorkflowPlan& plan, const DatasetRecord& record,
                            const SimEnvironment& env, const alloc::OperatorCatalog& catalog,
                            const std::vector<router::ModelCard>& pool, Rng& rng);

struct EvalReport {
  std::size_t total_records = 0;
  std::optional<double> accuracy;  // null when there are no records
  double mean_cost_usd = 0.0;
  std::vector<double> cost_per_query;  // aligned with input record order
  std::map<std::string, std::size_t> model_selection_counts;
  std::vector<std::size_t> difficulty_histogram;  // 10 bins over [0,1)
  double mean_depth = 0.0;
  std::vector<std::string> failed_records;
  std::size_t parse_flag_count = 0;
};

struct PlanOutcome {
  double utility = 0.0;
  double cost_usd = 0.0;
  bool failed = false;
  bool parse_flag = false;
};

struct PlannedQuery {
  alloc::WorkflowPlan plan;
  difficulty::DifficultyEstimate estimate;
};

using Planner = std::function<PlannedQuery(const DatasetRecord&)>;
using PlanRunner = std::function<PlanOutcome(const alloc::WorkflowPlan&, const DatasetRecord&)>;

// Deterministic-mode evaluation: one plan per record, outcomes aggregated.
EvalReport evaluate(const Planner& planner, const PlanRunner& runner,
                    const std::vector<DatasetRecord>& records,
                    const std::vector<router::ModelCard>& pool);

std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

// Rank correlation with average ranks for ties; a constant input yields 0
// and sets *constant_input.
double spearman(std::span<const double> xs, std::span<const double> ys,
                bool* constant_input = nullptr);

// Arithmetic questions with planted difficulty. Tier (easy/medium/hard)
// picks a Beta distribution for d*; expression size scales with d* so the
// text carries a recoverable difficulty signal. Tier is encoded in the id.
std::vector<DatasetRecord> generate_synthetic_corpus(std::size_t count, std::uint64_t seed);

}  // namespace aqo::harness
