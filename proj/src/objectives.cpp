#include "mssvm/objectives.hpp"

#include <charconv>
#include <cmath>

#include "mssvm/parallel.hpp"

namespace mssvm {

void TemperaturePair::validate() const {
  if (!std::isfinite(eps_y) || !std::isfinite(eps_h) || eps_y < 0.0 || eps_h < 0.0)
    throw ConfigError("temperatures must be finite and non-negative");
}

TemperaturePair FamilyPreset::temps() const {
  switch (kind) {
    case Kind::mssvm: return {0.0, 1.0};
    case Kind::lssvm: return {0.0, 0.0};
    case Kind::hcrf:
    case Kind::loss_augmented_likelihood: return {1.0, 1.0};
    case Kind::eps_extension: return {eps, eps};
  }
  return {};
}

std::string FamilyPreset::name() const {
  switch (kind) {
    case Kind::mssvm: return "mssvm";
    case Kind::lssvm: return "lssvm";
    case Kind::hcrf: return "hcrf";
    case Kind::loss_augmented_likelihood: return "lal";
    case Kind::eps_extension: {
      char buf[64];
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, eps);
      return "eps:" + std::string(buf, end);
    }
  }
  return {};
}

FamilyPreset FamilyPreset::parse(std::string_view text) {
  if (text == "mssvm") return {Kind::mssvm};
  if (text == "lssvm") return {Kind::lssvm};
  if (text == "hcrf") return {Kind::hcrf};
  if (text == "lal") return {Kind::loss_augmented_likelihood};
  if (text.starts_with("eps:")) {
    const std::string_view num = text.substr(4);
    double eps = 0.0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), eps);
    if (ec != std::errc{} || ptr != num.data() + num.size())
      throw ConfigError("bad eps value in family '" + std::string(text) + "'");
    if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("eps-extension needs eps in (0, 1)");
    return {Kind::eps_extension, eps};
  }
  throw ConfigError("unknown family '" + std::string(text) + "'");
}

std::string_view backend_name(Backend b) { return b == Backend::bp ? "bp" : "enumerate"; }

Backend parse_backend(std::string_view text) {
  if (text == "bp") return Backend::bp;
  if (text == "enumerate") return Backend::enumerate;
  throw ConfigError("unknown backend '" + std::string(text) + "'");
}

ObjectiveConfig ObjectiveConfig::from_preset(const FamilyPreset& preset, double C) {
  ObjectiveConfig cfg;
  cfg.C = C;
  cfg.temps = preset.temps();
  cfg.loss_enabled = preset.loss_enabled();
  return cfg;
}

void ObjectiveConfig::validate() const {
  if (!std::isfinite(C) || C < 0.0) throw ConfigError("C must be finite and non-negative");
  temps.validate();
  if (threads < 1) throw ConfigError("threads must be positive");
}

namespace {

struct SideResult {
  double value = 0.0;
  std::vector<double> expectation;
};

InferenceResult run_side(const LogPotentials& pot, const EnumerationQuery& query,
                         Backend backend, BeliefPropagation& engine) {
  if (pot.num_vars() == 0) {
    InferenceResult r;
    r.log_partition = pot.constant;
    return r;
  }
  if (backend == Backend::enumerate) return enumerate(pot, query);
  return engine.run(pot, VariableWeights::by_role(pot, query.eps_y, query.eps_h));
}

}  // namespace

Objective::Objective(const FactorGraph& graph, std::span<const Instance> data,
                     ObjectiveConfig cfg)
    : graph_(graph), data_(data), cfg_(cfg) {
  cfg_.validate();
  if (data_.empty()) throw ConfigError("objective needs at least one instance");
  for (const Instance& inst : data_) {
    validate_instance(graph_, inst);
    if (labeled_nodes(graph_, inst).empty())
      throw InvalidAssignment("instance has no labeled output node");
  }
  plus_engines_.assign(data_.size(), BeliefPropagation(cfg_.bp));
  minus_engines_.assign(data_.size(), BeliefPropagation(cfg_.bp));
}

void Objective::compute(const WeightVector& w, std::size_t i, bool plus, bool minus,
                        bool expectations, Slot& out) {
  const Instance& inst = data_[i];
  const LogPotentials pot = condition(graph_, w, inst);
  out.calls = 0;
  if (plus) {
    const LogPotentials aug = cfg_.loss_enabled ? loss_augment(pot, inst, 1.0) : pot;
    EnumerationQuery q{QueryKind::annealed_joint, cfg_.temps.eps_y, cfg_.temps.eps_h,
                       cfg_.max_states};
    const InferenceResult r = run_side(aug, q, cfg_.backend, plus_engines_[i]);
    ++out.calls;
    out.plus = r.log_partition;
    if (expectations)
      out.plus_expectation = expected_features(graph_, inst, to_marginals(graph_, aug, r));
  }
  if (minus) {
    const std::vector<int> gold = gold_values(pot, inst);
    const LogPotentials reduced = clamp(pot, gold);
    EnumerationQuery q{QueryKind::annealed_joint, 0.0, cfg_.temps.eps_h, cfg_.max_states};
    const InferenceResult r = run_side(reduced, q, cfg_.backend, minus_engines_[i]);
    ++out.calls;
    out.minus = r.log_partition;
    if (expectations) {
      const InferenceResult full = expand_clamped(pot, gold, reduced, r);
      out.minus_expectation = expected_features(graph_, inst, to_marginals(graph_, pot, full));
    }
  }
}

DataTerms Objective::data_terms(const WeightVector& w, bool plus, bool minus,
                                bool expectations) {
  if (w.dim() != graph_.dim())
    throw DimensionError("weight dimension " + std::to_string(w.dim()) + " != template " +
                         std::to_string(graph_.dim()));
  std::vector<Slot> slots(data_.size());
  parallel_for(data_.size(), cfg_.threads,
               [&](std::size_t i) { compute(w, i, plus, minus, expectations, slots[i]); });

  DataTerms out;
  const auto dim = static_cast<std::size_t>(graph_.dim());
  if (expectations && plus) out.plus_expectation.assign(dim, 0.0);
  if (expectations && minus) out.minus_expectation.assign(dim, 0.0);
  for (const Slot& s : slots) {
    out.plus += s.plus;
    out.minus += s.minus;
    out.inference_calls += s.calls;
    for (std::size_t k = 0; k < s.plus_expectation.size(); ++k)
      out.plus_expectation[k] += s.plus_expectation[k];
    for (std::size_t k = 0; k < s.minus_expectation.size(); ++k)
      out.minus_expectation[k] += s.minus_expectation[k];
  }
  return out;
}

Evaluation Objective::evaluate(const WeightVector& w, bool with_gradient) {
  Evaluation ev;
  // C == 0 leaves only the regularizer; skip inference entirely.
  if (cfg_.C == 0.0) {
    ev.objective = 0.5 * w.squared_norm();
    if (with_gradient) ev.gradient.assign(w.values().begin(), w.values().end());
    return ev;
  }
  const DataTerms t = data_terms(w, true, true, with_gradient);
  ev.objective = 0.5 * w.squared_norm() + cfg_.C * (t.plus - t.minus);
  ev.inference_calls = t.inference_calls;
  if (with_gradient) {
    ev.gradient.resize(static_cast<std::size_t>(w.dim()));
    for (std::size_t k = 0; k < ev.gradient.size(); ++k)
      ev.gradient[k] = w[static_cast<int>(k)] +
                       cfg_.C * (t.plus_expectation[k] - t.minus_expectation[k]);
  }
  if (!std::isfinite(ev.objective)) throw NumericalError("objective is not finite");
  return ev;
}

std::pair<double, double> Objective::instance_terms(const WeightVector& w, std::size_t i) {
  Slot s;
  compute(w, i, true, true, false, s);
  return {s.plus, s.minus};
}

double unified_objective(const FactorGraph& graph, const WeightVector& w,
                         std::span<const Instance> data, const ObjectiveConfig& cfg) {
  return Objective(graph, data, cfg).evaluate(w, false).objective;
}

std::vector<double> unified_gradient(const FactorGraph& graph, const WeightVector& w,
                                     std::span<const Instance> data,
                                     const ObjectiveConfig& cfg) {
  return Objective(graph, data, cfg).evaluate(w, true).gradient;
}

Assignment predict(const FactorGraph& graph, const WeightVector& w, const Instance& inst,
                   double eps_h, Backend backend, const BpOptions& bp) {
  if (!std::isfinite(eps_h) || eps_h < 0.0) throw ConfigError("eps_h must be non-negative");
  const LogPotentials pot = condition(graph, w, inst);
  Assignment out(static_cast<std::size_t>(graph.num_nodes()), -1);
  bool any_output = false;
  for (VarRole r : pot.role) any_output = any_output || r == VarRole::output;
  if (!any_output) return out;

  InferenceResult r;
  if (backend == Backend::enumerate) {
    r = enumerate(pot, {QueryKind::marginal_map, 0.0, eps_h});
  } else {
    r = mixed_product(pot, VariableWeights::by_role(pot, 0.0, eps_h), bp);
  }
  for (int v = 0; v < pot.num_vars(); ++v)
    if (pot.role[v] == VarRole::output) out[pot.node[v]] = r.decoding[v];
  return out;
}

double lemma1_gap(const FactorGraph& graph, const WeightVector& w, const Instance& inst,
                  const TemperaturePair& temps) {
  ObjectiveConfig cfg;
  cfg.temps = temps;
  cfg.loss_enabled = true;
  cfg.backend = Backend::enumerate;
  Objective obj(graph, std::span<const Instance>(&inst, 1), cfg);
  const auto [plus, minus] = obj.instance_terms(w, 0);
  const Assignment yhat = predict(graph, w, inst, temps.eps_h, Backend::enumerate);
  const std::vector<int> nodes = labeled_nodes(graph, inst);
  return (plus - minus) - hamming_loss(inst.label, yhat, nodes);
}

}  // namespace mssvm
