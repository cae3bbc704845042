#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aqo/allocator.hpp"
#include "aqo/backends.hpp"
#include "aqo/protocol.hpp"

namespace aqo::exec {

struct BackendCall {
  std::string model_name;
  std::vector<Message> messages;
  std::string response_text;
  long prompt_tokens = 0;
  long completion_tokens = 0;
  double latency_seconds = 0.0;  // recorded per call, not part of the cost ledger
};

struct ExecutionResult {
  std::string final_answer;
  std::vector<std::vector<std::string>> per_layer_outputs;  // [layer][operator]
  std::vector<BackendCall> trace;
  double cost_usd = 0.0;
  std::optional<int> success;  // filled by the harness after answer checking
};

class ExecutionError : public std::runtime_error {
public:
  ExecutionError(const std::string& what, ExecutionResult partial)
      : std::runtime_error(what), partial(std::move(partial)) {}
  ExecutionResult partial;
};

// Call pattern parameters for one protocol instance.
struct ProtocolSpec {
  Protocol protocol = Protocol::Cot;
  int debaters = 3;
  int debate_rounds = 2;
  int sc_paths = 5;
  int refine_max_iters = 5;
  int ensemble_agents = 3;
  int react_max_steps = 3;

  static ProtocolSpec defaults(Protocol p);
  void validate() const;
  // Full-budget call count (no early stopping); the simulator meters with this.
  int max_calls() const;
};

struct Pricing {
  double price_prompt = 0.0;      // USD per 1e6 tokens
  double price_completion = 0.0;  // USD per 1e6 tokens
};

using PricingTable = std::map<std::string, Pricing>;

PricingTable make_pricing(const std::vector<router::ModelCard>& pool);

// usd = (prompt_tokens * price_prompt + completion_tokens * price_completion) / 1e6
double record_cost(const BackendCall& call, const PricingTable& pricing);

// Inputs visible to one operator: the query plus all previous-layer outputs.
struct OperatorContext {
  std::string query;
  std::vector<std::pair<std::string, std::string>> prior_outputs;  // (operator, text)
};

struct ProtocolRun {
  std::string output_text;
  std::vector<BackendCall> calls;
};

// Backend failure inside a protocol; carries the calls completed so far so
// their cost is still metered.
class ProtocolError : public BackendError {
public:
  ProtocolError(const std::string& what, std::vector<BackendCall> partial)
      : BackendError(what), partial_calls(std::move(partial)) {}
  std::vector<BackendCall> partial_calls;
};

ProtocolRun run_protocol(const ProtocolSpec& spec, const OperatorContext& context,
                         const std::string& model, Backend& backend);

// Last line starting with "ANSWER:"; falls back to the last non-empty line.
std::string extract_answer(const std::string& text);

// Most frequent answer after trim + case fold; ties go to the earliest
// occurrence. Returns the original (unnormalized) text of the winner.
std::string majority_vote(const std::vector<std::string>& answers);

// Runs the plan layer by layer. Operators inside one layer may run on up to
// `parallelism` threads; the trace is assembled in chosen order regardless.
// A fully failed layer aborts with ExecutionError carrying the partial trace.
ExecutionResult execute_plan(const alloc::WorkflowPlan& plan,
                             const alloc::OperatorCatalog& catalog, const std::string& query,
                             const BackendRegistry& backends, const PricingTable& pricing,
                             int parallelism = 1);

}  // namespace aqo::exec
