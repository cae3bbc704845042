#include "aqo/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace aqo::alloc {

using numerics::ContractViolation;
using numerics::Matrix;
using numerics::Vec;

// The stopping comparison treats mass equal to tau as reached.
static bool reached(double cumulative, double tau) { return cumulative >= tau; }

void OperatorCatalog::validate() const {
  if (operators.empty()) throw ContractViolation("OperatorCatalog: catalog is empty");
  for (std::size_t i = 0; i < operators.size(); ++i) {
    if (operators[i].embedding.dim != operators[0].embedding.dim)
      throw ContractViolation("OperatorCatalog: inconsistent embedding dims");
    for (std::size_t j = i + 1; j < operators.size(); ++j)
      if (operators[i].name == operators[j].name)
        throw ContractViolation("OperatorCatalog: duplicate operator name " + operators[i].name);
  }
}

OperatorCatalog load_catalog(const std::string& profile_path,
                             const embedding::Provider& provider) {
  OperatorCatalog catalog;
  for (auto& profile : embedding::load_profiles(profile_path)) {
    OperatorSpec spec;
    spec.name = profile.operator_name;
    spec.protocol = protocol_from_string(profile.operator_name);
    spec.embedding = provider.embed(profile.description + "\n" + profile.interface_text);
    spec.profile = std::move(profile);
    catalog.operators.push_back(std::move(spec));
  }
  catalog.validate();
  return catalog;
}

std::size_t WorkflowPlan::operator_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.chosen.size();
  return n;
}

std::size_t adapt_depth(double d, std::size_t l_max) {
  if (!(d > 0.0 && d < 1.0)) throw ContractViolation("adapt_depth: d must be in (0,1)");
  if (l_max < 1) throw ContractViolation("adapt_depth: l_max must be >= 1");
  const double scaled = std::ceil(d * static_cast<double>(l_max));
  return std::max<std::size_t>(1, static_cast<std::size_t>(scaled));
}

std::vector<std::size_t> select_layer(std::span<const double> normalized_scores, double tau) {
  if (normalized_scores.empty()) throw ContractViolation("select_layer: empty scores");
  if (!(tau > 0.0 && tau < 1.0)) throw ContractViolation("select_layer: tau must be in (0,1)");
  std::vector<std::size_t> order(normalized_scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return normalized_scores[a] > normalized_scores[b];
  });
  std::vector<std::size_t> chosen;
  double cum = 0.0;
  for (std::size_t idx : order) {
    chosen.push_back(idx);
    cum += normalized_scores[idx];
    if (reached(cum, tau)) break;
  }
  return chosen;
}

AllocatorPolicy::AllocatorPolicy(AllocatorConfig config) : config_(config) {
  if (config_.l_max < 1) throw ContractViolation("AllocatorPolicy: l_max must be >= 1");
  if (!(config_.tau > 0.0 && config_.tau < 1.0))
    throw ContractViolation("AllocatorPolicy: tau must be in (0,1)");
  const std::size_t input_dim =
      config_.latent_dim + config_.embed_dim * (2 + (config_.l_max - 1));
  ffn_spec_ = {{{input_dim, config_.hidden, numerics::Activation::Relu},
                {config_.hidden, 1, numerics::Activation::Identity}}};
  ffn_ = numerics::make_params(ffn_spec_);
  Rng init(Rng(config_.seed).fork(0x616c6c6f63));
  numerics::init_xavier(ffn_spec_, ffn_, init);
}

Vec AllocatorPolicy::assemble_input(std::span<const double> z,
                                    const embedding::EmbeddingVector& query_vec,
                                    const embedding::EmbeddingVector& candidate,
                                    const std::vector<Vec>& history) const {
  if (z.size() != config_.latent_dim)
    throw ContractViolation("score_operators: latent dim mismatch");
  if (query_vec.dim != config_.embed_dim || candidate.dim != config_.embed_dim)
    throw ContractViolation("score_operators: embedding dim mismatch");
  if (history.size() >= config_.l_max)
    throw ContractViolation("score_operators: history length must be < l_max");

  Vec input;
  input.reserve(config_.latent_dim + config_.embed_dim * (2 + (config_.l_max - 1)));
  input.insert(input.end(), z.begin(), z.end());
  input.insert(input.end(), query_vec.values.begin(), query_vec.values.end());
  input.insert(input.end(), candidate.values.begin(), candidate.values.end());
  for (std::size_t slot = 0; slot + 1 < config_.l_max; ++slot) {
    if (slot < history.size()) {
      if (history[slot].size() != config_.embed_dim)
        throw ContractViolation("score_operators: history slot dim mismatch");
      input.insert(input.end(), history[slot].begin(), history[slot].end());
    } else {
      input.insert(input.end(), config_.embed_dim, 0.0);
    }
  }
  return input;
}

Vec AllocatorPolicy::raw_scores(std::span<const double> z,
                                const embedding::EmbeddingVector& query_vec,
                                const std::vector<Vec>& history, const OperatorCatalog& catalog,
                                std::vector<numerics::ForwardTape>* tapes) const {
  catalog.validate();
  Vec raw(catalog.size());
  if (tapes) tapes->clear();
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    const Vec input = assemble_input(z, query_vec, catalog.operators[i].embedding, history);
    auto [out, tape] = numerics::forward(ffn_spec_, ffn_, input);
    raw[i] = out[0];
    if (tapes) tapes->push_back(std::move(tape));
  }
  return raw;
}

Vec AllocatorPolicy::score_operators(std::span<const double> z,
                                     const embedding::EmbeddingVector& query_vec,
                                     const std::vector<Vec>& history,
                                     const OperatorCatalog& catalog) const {
  return numerics::softmax(raw_scores(z, query_vec, history, catalog, nullptr));
}

LayerSelection AllocatorPolicy::sample_layer(const Vec& normalized_scores, double tau,
                                             Rng& rng) const {
  if (!(tau > 0.0 && tau < 1.0)) throw ContractViolation("sample_layer: tau must be in (0,1)");
  LayerSelection sel;
  sel.normalized_scores = normalized_scores;
  std::vector<std::size_t> remaining(normalized_scores.size());
  std::iota(remaining.begin(), remaining.end(), 0);
  double remaining_mass = 0.0;
  for (double s : normalized_scores) remaining_mass += s;
  double cum = 0.0;
  while (!remaining.empty()) {
    const double u = rng.next_double() * remaining_mass;
    double acc = 0.0;
    std::size_t pick_pos = remaining.size() - 1;
    for (std::size_t pos = 0; pos < remaining.size(); ++pos) {
      acc += normalized_scores[remaining[pos]];
      if (u < acc) {
        pick_pos = pos;
        break;
      }
    }
    const std::size_t idx = remaining[pick_pos];
    sel.log_prob += std::log(normalized_scores[idx] / remaining_mass);
    sel.chosen.push_back(idx);
    cum += normalized_scores[idx];
    remaining_mass -= normalized_scores[idx];
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick_pos));
    if (reached(cum, tau)) break;
  }
  return sel;
}

LayerSelection AllocatorPolicy::select_layer_deterministic(const Vec& normalized_scores,
                                                           double tau) const {
  LayerSelection sel;
  sel.normalized_scores = normalized_scores;
  sel.chosen = select_layer(normalized_scores, tau);
  sel.log_prob = sequence_log_prob(normalized_scores, sel.chosen, tau);
  return sel;
}

double AllocatorPolicy::sequence_log_prob(const Vec& normalized_scores,
                                          const std::vector<std::size_t>& chosen, double tau) {
  if (chosen.empty()) throw ContractViolation("sequence_log_prob: empty selection");
  std::vector<bool> used(normalized_scores.size(), false);
  double remaining_mass = 0.0;
  for (double s : normalized_scores) remaining_mass += s;
  double cum = 0.0;
  double lp = 0.0;
  for (std::size_t j = 0; j < chosen.size(); ++j) {
    const std::size_t idx = chosen[j];
    if (idx >= normalized_scores.size() || used[idx])
      throw ContractViolation("sequence_log_prob: invalid draw sequence");
    if (reached(cum, tau))
      throw ContractViolation("sequence_log_prob: draws continue past the stopping point");
    lp += std::log(normalized_scores[idx] / remaining_mass);
    used[idx] = true;
    cum += normalized_scores[idx];
    remaining_mass -= normalized_scores[idx];
  }
  if (!reached(cum, tau) && std::any_of(used.begin(), used.end(), [](bool b) { return !b; }))
    throw ContractViolation("sequence_log_prob: sequence stops before reaching tau");
  return lp;
}

Vec AllocatorPolicy::sum_embeddings(const std::vector<std::size_t>& chosen,
                                    const OperatorCatalog& catalog) {
  Vec sum(catalog.operators[0].embedding.dim, 0.0);
  for (std::size_t idx : chosen) {
    const auto& e = catalog.operators[idx].embedding;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += e.values[i];
  }
  return sum;
}

WorkflowPlan AllocatorPolicy::build_plan(const embedding::EmbeddingVector& query_vec,
                                         const difficulty::DifficultyEstimate& estimate,
                                         const OperatorCatalog& catalog, double tau,
                                         std::size_t l_max, PlanMode mode, Rng& rng) const {
  catalog.validate();
  if (l_max > config_.l_max)
    throw ContractViolation("build_plan: l_max exceeds the policy's configured maximum");
  WorkflowPlan plan;
  plan.difficulty_used = estimate.d;
  const std::size_t depth = adapt_depth(estimate.d, l_max);
  std::vector<Vec> history;
  for (std::size_t l = 0; l < depth; ++l) {
    const Vec scores = score_operators(estimate.z, query_vec, history, catalog);
    LayerSelection sel = mode == PlanMode::Deterministic
                             ? select_layer_deterministic(scores, tau)
                             : sample_layer(scores, tau, rng);
    history.push_back(sum_embeddings(sel.chosen, catalog));
    plan.log_prob_total += sel.log_prob;
    plan.layers.push_back(std::move(sel));
  }
  return plan;
}

double AllocatorPolicy::layers_log_prob(const WorkflowPlan& plan,
                                        const embedding::EmbeddingVector& query_vec,
                                        const difficulty::DifficultyEstimate& estimate,
                                        const OperatorCatalog& catalog, double tau) const {
  double lp = 0.0;
  std::vector<Vec> history;
  for (const auto& layer : plan.layers) {
    const Vec scores = score_operators(estimate.z, query_vec, history, catalog);
    lp += sequence_log_prob(scores, layer.chosen, tau);
    history.push_back(sum_embeddings(layer.chosen, catalog));
  }
  return lp;
}

void AllocatorPolicy::accumulate_grad_log_prob(const WorkflowPlan& plan,
                                               const embedding::EmbeddingVector& query_vec,
                                               const difficulty::DifficultyEstimate& estimate,
                                               const OperatorCatalog& catalog, double tau,
                                               double coeff, std::vector<Matrix>& grads) const {
  if (grads.size() != 2 * ffn_spec_.layers.size())
    throw ContractViolation("accumulate_grad_log_prob: gradient layout mismatch");
  std::vector<Vec> history;
  for (const auto& layer : plan.layers) {
    std::vector<numerics::ForwardTape> tapes;
    const Vec raw = raw_scores(estimate.z, query_vec, history, catalog, &tapes);
    const Vec scores = numerics::softmax(raw);
    sequence_log_prob(scores, layer.chosen, tau);  // validates the recorded trajectory

    // d log P(sequence) / d raw score_i = sum over draws of
    // (1[i == drawn] - renormalized prob of i among remaining).
    Vec dscore(raw.size(), 0.0);
    std::vector<bool> used(raw.size(), false);
    double remaining_mass = 1.0;
    for (std::size_t idx : layer.chosen) {
      for (std::size_t i = 0; i < raw.size(); ++i)
        if (!used[i]) dscore[i] -= scores[i] / remaining_mass;
      dscore[idx] += 1.0;
      used[idx] = true;
      remaining_mass -= scores[idx];
    }

    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (dscore[i] == 0.0) continue;
      const Vec out_grad{coeff * dscore[i]};
      auto [g, unused] = numerics::backward(ffn_spec_, ffn_, tapes[i], out_grad);
      // grads layout: W1, W2, b1, b2
      for (std::size_t w = 0; w < g.weights.size(); ++w)
        for (std::size_t v = 0; v < g.weights[w].values.size(); ++v)
          grads[w].values[v] += g.weights[w].values[v];
      const std::size_t bias_base = g.weights.size();
      for (std::size_t b = 0; b < g.biases.size(); ++b)
        for (std::size_t v = 0; v < g.biases[b].values.size(); ++v)
          grads[bias_base + b].values[v] += g.biases[b].values[v];
    }
    history.push_back(sum_embeddings(layer.chosen, catalog));
  }
}

std::vector<Matrix*> AllocatorPolicy::parameters() {
  return {&ffn_.weights[0], &ffn_.weights[1], &ffn_.biases[0], &ffn_.biases[1]};
}

std::vector<const Matrix*> AllocatorPolicy::parameters() const {
  return {&ffn_.weights[0], &ffn_.weights[1], &ffn_.biases[0], &ffn_.biases[1]};
}

std::vector<Matrix> AllocatorPolicy::zero_gradients() const {
  std::vector<Matrix> out;
  for (const Matrix* p : parameters()) out.emplace_back(p->rows, p->cols);
  return out;
}

std::string plan_to_json(const WorkflowPlan& plan, const OperatorCatalog& catalog) {
  nlohmann::ordered_json root;
  root["depth"] = plan.depth();
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    nlohmann::ordered_json layer;
    nlohmann::ordered_json ops = nlohmann::ordered_json::array();
    for (std::size_t idx : plan.layers[l].chosen) ops.push_back(catalog.operators[idx].name);
    layer["operators"] = std::move(ops);
    nlohmann::ordered_json models = nlohmann::ordered_json::array();
    if (l < plan.assignments.size())
      for (const auto& a : plan.assignments[l]) models.push_back(a.model_name);
    layer["models"] = std::move(models);
    layers.push_back(std::move(layer));
  }
  root["layers"] = std::move(layers);
  root["log_prob"] = plan.log_prob_total;
  root["difficulty"] = plan.difficulty_used;
  return root.dump(2);
}

}  // namespace aqo::alloc
