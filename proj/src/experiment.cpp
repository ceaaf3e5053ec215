#include "mssvm/experiment.hpp"

#include <cmath>

#include "mssvm/parallel.hpp"

namespace mssvm {

using nlohmann::json;

json MetricsReport::to_json() const {
  return {{"accuracy", accuracy}, {"test_loglik", test_loglik}, {"errors", errors},
          {"labeled", labeled},   {"instances", instances},     {"loglik_exact", loglik_exact}};
}

namespace {

double log_partition(const LogPotentials& pot, bool exact, const BpOptions& bp) {
  if (pot.num_vars() == 0) return pot.constant;
  if (exact) return enumerate(pot, {QueryKind::log_partition}).log_partition;
  return sum_product(pot, bp).log_partition;
}

}  // namespace

double log_likelihood(const FactorGraph& graph, const WeightVector& w, const Instance& inst,
                      const BpOptions& bp, std::uint64_t exact_states, bool* exact) {
  const LogPotentials pot = condition(graph, w, inst);
  std::uint64_t states = 1;
  bool small = true;
  for (int c : pot.cardinality) {
    states *= static_cast<std::uint64_t>(c);
    if (states > exact_states) {
      small = false;
      break;
    }
  }
  if (exact) *exact = small;
  const LogPotentials clamped = clamp(pot, gold_values(pot, inst));
  return log_partition(clamped, small, bp) - log_partition(pot, small, bp);
}

MetricsReport evaluate_model(const FactorGraph& graph, const WeightVector& w,
                             std::span<const Instance> data, double eps_h, Backend backend,
                             const BpOptions& bp, int threads, std::uint64_t exact_states) {
  struct Row {
    std::int64_t errors = 0, labeled = 0;
    double loglik = 0.0;
    bool exact = true;
  };
  std::vector<Row> rows(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const std::vector<int> nodes = labeled_nodes(graph, data[i]);
    const Assignment yhat = predict(graph, w, data[i], eps_h, backend, bp);
    rows[i].errors = hamming_loss(data[i].label, yhat, nodes);
    rows[i].labeled = static_cast<std::int64_t>(nodes.size());
    rows[i].loglik = log_likelihood(graph, w, data[i], bp, exact_states, &rows[i].exact);
  });
  MetricsReport r;
  r.instances = static_cast<int>(data.size());
  for (const Row& row : rows) {
    r.errors += row.errors;
    r.labeled += row.labeled;
    r.test_loglik += row.loglik;
    r.loglik_exact = r.loglik_exact && row.exact;
  }
  r.accuracy = r.labeled ? 100.0 * (1.0 - static_cast<double>(r.errors) / r.labeled) : 0.0;
  return r;
}

ObjectiveConfig MethodSpec::objective(const ObjectiveConfig& base) const {
  ObjectiveConfig cfg = base;
  cfg.temps = temps ? *temps : family.temps();
  cfg.loss_enabled = family.loss_enabled();
  return cfg;
}

MethodResult run_method(const FactorGraph& graph, std::span<const Instance> train,
                        std::span<const Instance> test, const MethodSpec& method,
                        const ObjectiveConfig& base, std::optional<double> eval_eps_h) {
  const ObjectiveConfig obj = method.objective(base);
  TrainingResult tr = mssvm::train(graph, train, method.training, obj);
  MethodResult out{method.label(), tr.weights, std::move(tr.trace), {}};
  const double eps_h = eval_eps_h ? *eval_eps_h : obj.temps.eps_h;
  out.metrics = evaluate_model(graph, out.weights, test, eps_h, obj.backend, obj.bp, obj.threads);
  return out;
}

TrialData make_trial_data(const DataSource& source, const LabelImage& truth, int trial) {
  if (const auto* gen = std::get_if<GeneratorConfig>(&source)) {
    GeneratorConfig cfg = *gen;
    cfg.seed += static_cast<std::uint64_t>(trial);
    SimulatedData d = simulate(cfg);
    return {std::move(d.graph), std::move(d.train), std::move(d.test)};
  }
  ImageConfig cfg = std::get<ImageConfig>(source);
  cfg.seed += static_cast<std::uint64_t>(trial);
  ImageData d = make_image_dataset(cfg, truth);
  return {std::move(d.graph), std::move(d.train), std::move(d.test)};
}

Summary summarize(const std::vector<MetricsReport>& runs) {
  Summary s;
  s.trials = static_cast<int>(runs.size());
  if (runs.empty()) return s;
  for (const MetricsReport& r : runs) {
    s.mean_accuracy += r.accuracy;
    s.mean_loglik += r.test_loglik;
  }
  s.mean_accuracy /= s.trials;
  s.mean_loglik /= s.trials;
  if (s.trials > 1) {
    for (const MetricsReport& r : runs) {
      s.std_accuracy += (r.accuracy - s.mean_accuracy) * (r.accuracy - s.mean_accuracy);
      s.std_loglik += (r.test_loglik - s.mean_loglik) * (r.test_loglik - s.mean_loglik);
    }
    s.std_accuracy = std::sqrt(s.std_accuracy / (s.trials - 1));
    s.std_loglik = std::sqrt(s.std_loglik / (s.trials - 1));
  }
  return s;
}

std::vector<std::vector<MetricsReport>> run_trials(const DataSource& source,
                                                   const LabelImage& truth,
                                                   const std::vector<MethodSpec>& methods,
                                                   const ObjectiveConfig& base, int trials,
                                                   int threads) {
  if (trials < 1) throw ConfigError("trials must be at least 1");
  std::vector<std::vector<MetricsReport>> out(methods.size(),
                                              std::vector<MetricsReport>(trials));
  parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t t) {
    const TrialData d = make_trial_data(source, truth, static_cast<int>(t));
    for (std::size_t m = 0; m < methods.size(); ++m)
      out[m][t] = run_method(d.graph, d.train, d.test, methods[m], base).metrics;
  });
  return out;
}

json to_json(const GeneratorConfig& c) {
  return {{"topology", c.topology == Topology::hidden_chain ? "chain" : "grid"},
          {"positions", c.positions},
          {"rows", c.rows},
          {"cols", c.cols},
          {"cardinality", c.cardinality},
          {"sigma",
           {{"x", c.sigma.x}, {"y", c.sigma.y}, {"h", c.sigma.h},
            {"xy", c.sigma.xy}, {"xh", c.sigma.xh}, {"yh", c.sigma.yh}}},
          {"n_train", c.n_train},
          {"n_test", c.n_test},
          {"seed", c.seed},
          {"sampler", c.sampler == SamplerKind::automatic ? "auto"
                      : c.sampler == SamplerKind::exact   ? "exact"
                                                          : "gibbs"},
          {"gibbs", {{"burn_in", c.gibbs.burn_in}, {"thin", c.gibbs.thin}}},
          {"max_table", c.max_table}};
}

json to_json(const ImageConfig& c) {
  return {{"topology", "image"},
          {"height", c.height},
          {"width", c.width},
          {"labels", c.labels},
          {"noise_sigma", c.noise_sigma},
          {"missing_fraction", c.missing_fraction},
          {"test_missing_fraction", c.test_missing_fraction},
          {"n_train", c.n_train},
          {"n_test", c.n_test},
          {"seed", c.seed}};
}

json to_json(const TrainingConfig& c) {
  return {{"trainer", trainer_name(c.trainer)},
          {"iterations", c.iterations},
          {"learning_rate", c.learning_rate},
          {"inner_tolerance", c.inner_tolerance},
          {"max_inner", c.max_inner},
          {"seed", c.seed},
          {"deterministic", c.deterministic},
          {"decay", c.decay}};
}

json to_json(const ObjectiveConfig& c) {
  return {{"C", c.C},
          {"eps_y", c.temps.eps_y},
          {"eps_h", c.temps.eps_h},
          {"loss_enabled", c.loss_enabled},
          {"backend", backend_name(c.backend)},
          {"bp",
           {{"max_iterations", c.bp.max_iterations},
            {"tolerance", c.bp.tolerance},
            {"damping", c.bp.damping},
            {"warm_start", c.bp.warm_start}}}};
}

}  // namespace mssvm
