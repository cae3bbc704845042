#include "aqo/executor.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <deque>
#include <numeric>
#include <thread>

#include "aqo/calc.hpp"

namespace aqo::exec {

using numerics::ContractViolation;

ProtocolSpec ProtocolSpec::defaults(Protocol p) {
  ProtocolSpec spec;
  spec.protocol = p;
  return spec;
}

void ProtocolSpec::validate() const {
  if (debaters < 1 || debate_rounds < 1 || debate_rounds > 2)
    throw ContractViolation("ProtocolSpec: debate allows at most two rounds");
  if (sc_paths < 1 || refine_max_iters < 1 || refine_max_iters > 5)
    throw ContractViolation("ProtocolSpec: self_refine allows at most five iterations");
  if (ensemble_agents < 2 || react_max_steps < 1)
    throw ContractViolation("ProtocolSpec: invalid agent counts");
}

int ProtocolSpec::max_calls() const {
  switch (protocol) {
    case Protocol::Cot: return 1;
    case Protocol::Debate: return debaters * debate_rounds + 1;
    case Protocol::SelfConsistency: return sc_paths;
    case Protocol::SelfRefine: return 1 + 2 * refine_max_iters;
    case Protocol::Ensemble:
      return ensemble_agents + ensemble_agents * (ensemble_agents - 1) / 2;
    case Protocol::Testing: return 2;
    case Protocol::React: return react_max_steps;
  }
  return 1;
}

PricingTable make_pricing(const std::vector<router::ModelCard>& pool) {
  PricingTable table;
  for (const auto& card : pool)
    table[card.name] = Pricing{card.price_prompt, card.price_completion};
  return table;
}

double record_cost(const BackendCall& call, const PricingTable& pricing) {
  auto it = pricing.find(call.model_name);
  if (it == pricing.end())
    throw ContractViolation("record_cost: no pricing entry for model '" + call.model_name + "'");
  return (static_cast<double>(call.prompt_tokens) * it->second.price_prompt +
          static_cast<double>(call.completion_tokens) * it->second.price_completion) /
         1e6;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string to_lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '\n') {
      lines.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  return lines;
}

constexpr const char* kAnswerDirective =
    "Finish with a final line formatted exactly as 'ANSWER: <final answer>'.";

std::string question_block(const OperatorContext& context) {
  std::string out = "Question: " + context.query;
  if (!context.prior_outputs.empty()) {
    out += "\n\nContext from the previous step:";
    for (const auto& [op, text] : context.prior_outputs)
      out += "\n[" + op + "] " + text;
  }
  return out;
}

class CallRecorder {
public:
  CallRecorder(const std::string& model, Backend& backend)
      : model_(model), backend_(backend) {}

  // Performs the call and appends it to the transcript. The deque keeps
  // returned references valid across later calls.
  const BackendCall& call(const std::string& system, const std::string& user) {
    std::vector<Message> messages;
    if (!system.empty()) messages.push_back({"system", system});
    messages.push_back({"user", user});
    const auto started = std::chrono::steady_clock::now();
    BackendResponse resp = backend_.complete(model_, messages);
    BackendCall rec;
    rec.model_name = model_;
    rec.messages = std::move(messages);
    rec.response_text = std::move(resp.text);
    rec.prompt_tokens = resp.prompt_tokens;
    rec.completion_tokens = resp.completion_tokens;
    rec.latency_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    calls_.push_back(std::move(rec));
    return calls_.back();
  }

  std::vector<BackendCall> take() {
    return {std::make_move_iterator(calls_.begin()), std::make_move_iterator(calls_.end())};
  }

private:
  std::string model_;
  Backend& backend_;
  std::deque<BackendCall> calls_;
};

bool reflection_approves(const std::string& text) {
  for (const auto& line : split_lines(text)) {
    const std::string t = to_lower(trim(line));
    if (t.empty()) continue;
    return t == "approved";
  }
  return false;
}

std::string run_cot(CallRecorder& rec, const OperatorContext& ctx) {
  const std::string system =
      std::string("Solve the problem. Think step by step and show your reasoning. ") +
      kAnswerDirective;
  return rec.call(system, question_block(ctx)).response_text;
}

std::string run_self_consistency(CallRecorder& rec, const OperatorContext& ctx, int paths) {
  std::vector<std::string> answers;
  std::vector<std::string> outputs;
  for (int i = 1; i <= paths; ++i) {
    const std::string system = "Solve the problem. Think step by step; this is reasoning path " +
                               std::to_string(i) + " of " + std::to_string(paths) +
                               ", explore it independently. " + kAnswerDirective;
    const auto& call = rec.call(system, question_block(ctx));
    outputs.push_back(call.response_text);
    answers.push_back(extract_answer(call.response_text));
  }
  const std::string winner = majority_vote(answers);
  // Keep the full path whose answer won, so later layers see the reasoning.
  for (std::size_t i = 0; i < answers.size(); ++i)
    if (answers[i] == winner) return outputs[i];
  return outputs.front();
}

std::string run_debate(CallRecorder& rec, const OperatorContext& ctx, int debaters, int rounds) {
  std::string transcript;
  for (int round = 1; round <= rounds; ++round) {
    for (int d = 1; d <= debaters; ++d) {
      const std::string system =
          "You are debater " + std::to_string(d) + " of " + std::to_string(debaters) +
          " in round " + std::to_string(round) + " of " + std::to_string(rounds) +
          ". Argue for the answer you believe is correct, addressing the other debaters' "
          "points. " +
          kAnswerDirective;
      std::string user = question_block(ctx);
      if (!transcript.empty()) user += "\n\nDebate so far:" + transcript;
      const auto& call = rec.call(system, user);
      transcript += "\n[round " + std::to_string(round) + ", debater " + std::to_string(d) +
                    "] " + call.response_text;
    }
  }
  const std::string judge_system =
      std::string("You are the judge of a debate. Weigh the arguments and produce the best "
                  "final answer. ") +
      kAnswerDirective;
  const auto& judge = rec.call(judge_system, question_block(ctx) + "\n\nDebate:" + transcript);
  return judge.response_text;
}

std::string run_self_refine(CallRecorder& rec, const OperatorContext& ctx, int max_iters) {
  const std::string draft_system =
      std::string("Solve the problem. Think step by step. ") + kAnswerDirective;
  std::string current = rec.call(draft_system, question_block(ctx)).response_text;
  for (int iter = 1; iter <= max_iters; ++iter) {
    const std::string reflect_system =
        "Review the candidate answer for mistakes or gaps. If it is correct and complete, "
        "reply with the single word APPROVED. Otherwise, list the problems.";
    const auto& reflection =
        rec.call(reflect_system, question_block(ctx) + "\n\nCandidate answer:\n" + current);
    if (reflection_approves(reflection.response_text)) break;
    const std::string revise_system =
        std::string("Revise the candidate answer using the critique. ") + kAnswerDirective;
    current = rec.call(revise_system, question_block(ctx) + "\n\nCandidate answer:\n" + current +
                                          "\n\nCritique:\n" + reflection.response_text)
                  .response_text;
  }
  return current;
}

std::string run_ensemble(CallRecorder& rec, const OperatorContext& ctx, int agents) {
  std::vector<std::string> outputs;
  for (int i = 1; i <= agents; ++i) {
    const std::string system = "You are solver " + std::to_string(i) + " of " +
                               std::to_string(agents) + ". Answer independently. " +
                               kAnswerDirective;
    outputs.push_back(rec.call(system, question_block(ctx)).response_text);
  }
  // Pairwise ranking over all pairs; winner by win count, ties to the
  // earliest candidate.
  std::vector<int> wins(outputs.size(), 0);
  for (std::size_t a = 0; a < outputs.size(); ++a) {
    for (std::size_t b = a + 1; b < outputs.size(); ++b) {
      const std::string judge_system =
          "Compare two candidate answers to the same question. Reply with a final line "
          "'ANSWER: A' if candidate A is better, or 'ANSWER: B' if candidate B is better.";
      const auto& judge =
          rec.call(judge_system, question_block(ctx) + "\n\nCandidate A:\n" + outputs[a] +
                                     "\n\nCandidate B:\n" + outputs[b]);
      const std::string verdict = to_lower(extract_answer(judge.response_text));
      if (verdict == "b") ++wins[b];
      else ++wins[a];  // unparseable verdicts count for the earlier candidate
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < wins.size(); ++i)
    if (wins[i] > wins[best]) best = i;
  return outputs[best];
}

std::string run_testing(CallRecorder& rec, const OperatorContext& ctx) {
  const std::string draft_system =
      std::string("Solve the problem; if it asks for code, write the code. ") + kAnswerDirective;
  const auto& draft = rec.call(draft_system, question_block(ctx));
  const std::string test_system =
      "Write test cases that check the candidate solution. Output only the test cases; do not "
      "include an ANSWER line.";
  const auto& tests =
      rec.call(test_system, question_block(ctx) + "\n\nCandidate solution:\n" +
                                draft.response_text);
  return draft.response_text + "\n\n[tests]\n" + tests.response_text;
}

std::string run_react(CallRecorder& rec, const OperatorContext& ctx, int max_steps) {
  const std::string system =
      "Solve the problem step by step. You may use a calculator by writing a line "
      "'TOOL: calc <expression>'; its result will be returned as an observation. When you are "
      "confident, finish with a final line 'ANSWER: <final answer>'.";
  std::string transcript;
  std::string last;
  for (int step = 0; step < max_steps; ++step) {
    std::string user = question_block(ctx);
    if (!transcript.empty()) user += "\n\nScratchpad:" + transcript;
    last = rec.call(system, user).response_text;
    transcript += "\n" + last;
    bool has_answer = false;
    bool invoked_tool = false;
    for (const auto& line : split_lines(last)) {
      const std::string t = trim(line);
      if (t.rfind("ANSWER:", 0) == 0) has_answer = true;
      if (t.rfind("TOOL: calc", 0) == 0) {
        const std::string expr = trim(t.substr(std::string("TOOL: calc").size()));
        std::string observation;
        try {
          observation = format_number(eval_arithmetic(expr));
        } catch (const CalcError& e) {
          observation = std::string("error: ") + e.what();
        }
        transcript += "\nOBSERVATION: " + observation;
        invoked_tool = true;
      }
    }
    if (has_answer || !invoked_tool) break;
  }
  return last;
}

}  // namespace

std::string extract_answer(const std::string& text) {
  const auto lines = split_lines(text);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    const std::string t = trim(*it);
    if (t.rfind("ANSWER:", 0) == 0) return trim(t.substr(7));
  }
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    const std::string t = trim(*it);
    if (!t.empty()) return t;
  }
  return "";
}

std::string majority_vote(const std::vector<std::string>& answers) {
  if (answers.empty()) throw ContractViolation("majority_vote: empty answer list");
  std::vector<std::string> keys;
  keys.reserve(answers.size());
  for (const auto& a : answers) keys.push_back(to_lower(trim(a)));
  std::size_t best = 0;
  std::size_t best_count = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    std::size_t count = 0;
    for (const auto& k : keys)
      if (k == keys[i]) ++count;
    if (count > best_count) {  // ties keep the earliest occurrence
      best = i;
      best_count = count;
    }
  }
  return answers[best];
}

ProtocolRun run_protocol(const ProtocolSpec& spec, const OperatorContext& context,
                         const std::string& model, Backend& backend) {
  spec.validate();
  if (context.query.empty()) throw ContractViolation("run_protocol: empty context");
  CallRecorder rec(model, backend);
  std::string output;
  try {
    switch (spec.protocol) {
      case Protocol::Cot: output = run_cot(rec, context); break;
      case Protocol::Debate:
        output = run_debate(rec, context, spec.debaters, spec.debate_rounds);
        break;
      case Protocol::SelfConsistency:
        output = run_self_consistency(rec, context, spec.sc_paths);
        break;
      case Protocol::SelfRefine:
        output = run_self_refine(rec, context, spec.refine_max_iters);
        break;
      case Protocol::Ensemble: output = run_ensemble(rec, context, spec.ensemble_agents); break;
      case Protocol::Testing: output = run_testing(rec, context); break;
      case Protocol::React: output = run_react(rec, context, spec.react_max_steps); break;
    }
  } catch (const BackendError& e) {
    throw ProtocolError(e.what(), rec.take());
  }
  return ProtocolRun{std::move(output), rec.take()};
}

ExecutionResult execute_plan(const alloc::WorkflowPlan& plan,
                             const alloc::OperatorCatalog& catalog, const std::string& query,
                             const BackendRegistry& backends, const PricingTable& pricing,
                             int parallelism) {
  if (!plan.has_assignments())
    throw ContractViolation("execute_plan: plan has no model assignments");
  if (plan.assignments.size() != plan.layers.size())
    throw ContractViolation("execute_plan: assignment layout mismatch");
  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    for (std::size_t i = 0; i < plan.layers[l].chosen.size(); ++i) {
      const auto& model = plan.assignments[l][i].model_name;
      backends.resolve(model);
      if (!pricing.count(model))
        throw ContractViolation("execute_plan: no pricing entry for model '" + model + "'");
    }
  }

  ExecutionResult result;
  std::vector<std::pair<std::string, std::string>> previous_outputs;
  std::vector<char> last_layer_ok;

  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    const auto& layer = plan.layers[l];
    const std::size_t width = layer.chosen.size();
    struct OpOutcome {
      bool ok = false;
      std::string output;
      std::vector<BackendCall> calls;
      std::string error;
    };
    std::vector<OpOutcome> outcomes(width);

    OperatorContext ctx;
    ctx.query = query;
    ctx.prior_outputs = previous_outputs;

    auto run_one = [&](std::size_t i) {
      const auto& op = catalog.operators[layer.chosen[i]];
      const auto& model = plan.assignments[l][i].model_name;
      try {
        ProtocolRun run = run_protocol(ProtocolSpec::defaults(op.protocol), ctx, model,
                                       backends.resolve(model));
        outcomes[i] = {true, std::move(run.output_text), std::move(run.calls), ""};
      } catch (const ProtocolError& e) {
        outcomes[i] = {false, "", e.partial_calls, e.what()};
      } catch (const BackendError& e) {
        outcomes[i] = {false, "", {}, e.what()};
      }
    };

    if (parallelism > 1 && width > 1) {
      std::atomic<std::size_t> next{0};
      auto worker = [&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= width) return;
          run_one(i);
        }
      };
      std::vector<std::thread> threads;
      const std::size_t n =
          std::min<std::size_t>(static_cast<std::size_t>(parallelism), width);
      for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
      for (auto& t : threads) t.join();
    } else {
      for (std::size_t i = 0; i < width; ++i) run_one(i);
    }

    // Trace in chosen order regardless of completion order.
    std::vector<std::string> layer_outputs;
    std::vector<std::pair<std::string, std::string>> next_outputs;
    std::vector<char> ok_mask(width, 0);
    bool any_ok = false;
    std::string first_error;
    for (std::size_t i = 0; i < width; ++i) {
      for (auto& call : outcomes[i].calls) {
        result.cost_usd += record_cost(call, pricing);
        result.trace.push_back(std::move(call));
      }
      if (outcomes[i].ok) {
        any_ok = true;
        ok_mask[i] = 1;
        layer_outputs.push_back(outcomes[i].output);
        next_outputs.emplace_back(catalog.operators[layer.chosen[i]].name, outcomes[i].output);
      } else {
        layer_outputs.push_back("");
        if (first_error.empty()) first_error = outcomes[i].error;
      }
    }
    result.per_layer_outputs.push_back(std::move(layer_outputs));
    if (!any_ok)
      throw ExecutionError("execute_plan: layer " + std::to_string(l + 1) +
                               " failed entirely: " + first_error,
                           std::move(result));
    previous_outputs = std::move(next_outputs);
    last_layer_ok = std::move(ok_mask);
  }

  // Final answer: majority vote over last-layer answers, ordered by
  // descending operator score so ties resolve to the highest-scored operator.
  const auto& last_layer = plan.layers.back();
  const auto& last_outputs = result.per_layer_outputs.back();
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < last_outputs.size(); ++i)
    if (last_layer_ok[i]) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return last_layer.normalized_scores[last_layer.chosen[a]] >
           last_layer.normalized_scores[last_layer.chosen[b]];
  });
  std::vector<std::string> answers;
  for (std::size_t i : order) answers.push_back(extract_answer(last_outputs[i]));
  result.final_answer = majority_vote(answers);
  return result;
}

}  // namespace aqo::exec
