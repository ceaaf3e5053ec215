#include "mssvm/training.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>

#include "mssvm/parallel.hpp"

namespace mssvm {

std::string_view trainer_name(Trainer t) { return t == Trainer::sgd ? "sgd" : "cccp"; }

Trainer parse_trainer(std::string_view text) {
  if (text == "sgd") return Trainer::sgd;
  if (text == "cccp") return Trainer::cccp;
  throw ConfigError("unknown trainer '" + std::string(text) + "'");
}

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0 && learning_rate < 1.0))
    throw ConfigError("learning rate must lie in (0, 1)");
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (max_inner < 1) throw ConfigError("max_inner must be at least 1");
  if (!std::isfinite(inner_tolerance)) throw ConfigError("inner tolerance must be finite");
}

void TrainingTrace::write_csv(std::ostream& out) const {
  out << "iter,objective,grad_norm,train_err,wall_ms,inference_calls\n";
  const auto old = out.precision(17);
  for (const TraceRow& r : rows)
    out << r.iter << ',' << r.objective << ',' << r.grad_norm << ',' << r.train_err << ','
        << r.wall_ms << ',' << r.inference_calls << '\n';
  out.precision(old);
}

HammingCount hamming_errors(const FactorGraph& graph, const WeightVector& w,
                            std::span<const Instance> data, double eps_h, Backend backend,
                            const BpOptions& bp, int threads) {
  std::vector<HammingCount> per(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const std::vector<int> nodes = labeled_nodes(graph, data[i]);
    const Assignment yhat = predict(graph, w, data[i], eps_h, backend, bp);
    per[i] = {hamming_loss(data[i].label, yhat, nodes), static_cast<std::int64_t>(nodes.size())};
  });
  HammingCount total;
  for (const HammingCount& h : per) {
    total.errors += h.errors;
    total.labeled += h.labeled;
  }
  return total;
}

namespace {

using Clock = std::chrono::steady_clock;

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool small_enough(const FactorGraph& graph, std::uint64_t limit) {
  std::uint64_t states = 1;
  for (const Node& n : graph.nodes()) {
    if (n.role == NodeRole::observed) continue;
    states *= static_cast<std::uint64_t>(n.cardinality);
    if (states > limit) return false;
  }
  return true;
}

// Shared bookkeeping for both trainers.
class Recorder {
 public:
  Recorder(const FactorGraph& graph, std::span<const Instance> data, const TrainingConfig& cfg,
           const ObjectiveConfig& obj)
      : graph_(graph), data_(data), cfg_(cfg), obj_(obj), start_(Clock::now()) {
    if (obj.backend == Backend::bp && obj.C > 0.0 &&
        small_enough(graph, cfg.exact_trace_states)) {
      ObjectiveConfig exact = obj;
      exact.backend = Backend::enumerate;
      exact_.emplace(graph, data, exact);
    }
  }

  // Appends a row for weights w whose data terms are `terms`. Returns
  // false (and marks the trace aborted) on non-finite values.
  bool record(int iter, const WeightVector& w, const DataTerms& terms, std::int64_t calls) {
    std::vector<double> grad(w.values().begin(), w.values().end());
    for (std::size_t k = 0; k < terms.plus_expectation.size(); ++k)
      grad[k] += obj_.C * (terms.plus_expectation[k] - terms.minus_expectation[k]);
    TraceRow row;
    row.iter = iter;
    row.objective = 0.5 * w.squared_norm() + obj_.C * (terms.plus - terms.minus);
    if (exact_) row.objective = exact_->evaluate(w, false).objective;
    row.grad_norm = norm(grad);
    row.train_err = cfg_.track_error ? hamming_errors(graph_, w, data_, obj_.temps.eps_h,
                                                      obj_.backend, obj_.bp, obj_.threads)
                                           .rate()
                                     : std::nan("");
    row.inference_calls = calls;
    row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
    if (!std::isfinite(row.objective) || !std::isfinite(row.grad_norm)) {
      trace.aborted = true;
      trace.diagnostic = "non-finite objective or gradient at iteration " + std::to_string(iter);
      return false;
    }
    trace.rows.push_back(row);
    return true;
  }

  void abort(int iter, const std::string& what) {
    trace.aborted = true;
    trace.diagnostic = "iteration " + std::to_string(iter) + ": " + what;
  }

  TrainingTrace trace;

 private:
  const FactorGraph& graph_;
  std::span<const Instance> data_;
  const TrainingConfig& cfg_;
  const ObjectiveConfig& obj_;
  Clock::time_point start_;
  std::optional<Objective> exact_;
};

// Data terms at w; with C == 0 the data part is skipped.
DataTerms terms_at(Objective& o, const WeightVector& w, bool plus, bool minus) {
  if (o.config().C == 0.0) {
    DataTerms t;
    t.plus_expectation.assign(static_cast<std::size_t>(w.dim()), 0.0);
    t.minus_expectation.assign(static_cast<std::size_t>(w.dim()), 0.0);
    return t;
  }
  return o.data_terms(w, plus, minus, true);
}

std::vector<double> start(const TrainingConfig& cfg, std::size_t dim) {
  if (cfg.initial_weights.empty()) return std::vector<double>(dim, 0.0);
  if (cfg.initial_weights.size() != dim) throw DimensionError("initial weights have the wrong length");
  WeightVector checked(cfg.initial_weights);  // rejects non-finite entries
  return cfg.initial_weights;
}

double step_size(const TrainingConfig& cfg, int t) {
  return cfg.decay ? cfg.learning_rate / std::sqrt(t + 1.0) : cfg.learning_rate;
}

}  // namespace

TrainingResult sgd_train(const FactorGraph& graph, std::span<const Instance> data,
                         const TrainingConfig& cfg, const ObjectiveConfig& obj) {
  cfg.validate();
  Objective o(graph, data, obj);
  Recorder rec(graph, data, cfg, obj);
  const auto dim = static_cast<std::size_t>(graph.dim());
  std::vector<double> w = start(cfg, dim);
  std::int64_t calls = 0;

  for (int t = 0;; ++t) {
    const WeightVector wt(w);
    DataTerms terms;
    try {
      terms = terms_at(o, wt, true, true);
    } catch (const NumericalError& e) {
      rec.abort(t, e.what());
      break;
    }
    calls += terms.inference_calls;
    std::vector<double> data_grad(dim);
    for (std::size_t k = 0; k < dim; ++k)
      data_grad[k] = obj.C * (terms.plus_expectation[k] - terms.minus_expectation[k]);
    if (!all_finite(data_grad)) {
      rec.abort(t, "non-finite gradient");
      break;
    }
    if (!rec.record(t, wt, terms, calls) || t == cfg.iterations) break;
    const double eta = step_size(cfg, t);
    std::vector<double> next(dim);
    for (std::size_t k = 0; k < dim; ++k) next[k] = (1.0 - eta) * w[k] - eta * data_grad[k];
    if (!all_finite(next)) {
      rec.abort(t + 1, "non-finite weights");
      break;
    }
    w = std::move(next);
  }
  return {WeightVector(w), std::move(rec.trace)};
}

TrainingResult cccp_train(const FactorGraph& graph, std::span<const Instance> data,
                          const TrainingConfig& cfg, const ObjectiveConfig& obj) {
  cfg.validate();
  Objective o(graph, data, obj);
  Recorder rec(graph, data, cfg, obj);
  const auto dim = static_cast<std::size_t>(graph.dim());
  const double tol =
      cfg.inner_tolerance > 0.0 ? cfg.inner_tolerance : 1e-3 * std::sqrt(static_cast<double>(dim));
  std::vector<double> w = start(cfg, dim);
  std::vector<double> good = w;  // last recorded weights
  std::int64_t calls = 0;

  try {
    DataTerms terms = terms_at(o, WeightVector(w), true, true);
    calls += terms.inference_calls;
    if (!rec.record(0, WeightVector(w), terms, calls)) return {WeightVector(w), std::move(rec.trace)};

    for (int t = 1; t <= cfg.iterations; ++t) {
      // Linearise the concave part at w_t: u = C * sum_i E-[phi].
      std::vector<double> u(dim);
      for (std::size_t k = 0; k < dim; ++k) u[k] = obj.C * terms.minus_expectation[k];

      // Minimise the convex surrogate 1/2|w|^2 + C sum_i U_i+(w) - u.w by
      // gradient steps, keeping the best iterate so the surrogate never
      // increases even when the step is too long.
      std::vector<double> best = w;
      double best_value = INFINITY;
      DataTerms plus = terms;
      for (int k = 0;; ++k) {
        const WeightVector wk(w);
        double value = 0.5 * wk.squared_norm() + obj.C * plus.plus;
        std::vector<double> data_grad(dim);
        for (std::size_t j = 0; j < dim; ++j) {
          value -= u[j] * w[j];
          data_grad[j] = obj.C * plus.plus_expectation[j] - u[j];
        }
        if (!std::isfinite(value) || !all_finite(data_grad)) {
          rec.abort(t, "non-finite surrogate");
          return {WeightVector(good), std::move(rec.trace)};
        }
        if (value < best_value) {
          best_value = value;
          best = w;
        }
        double gnorm = 0.0;
        for (std::size_t j = 0; j < dim; ++j) gnorm += (w[j] + data_grad[j]) * (w[j] + data_grad[j]);
        if (std::sqrt(gnorm) <= tol || k == cfg.max_inner) break;
        const double eta = step_size(cfg, k);
        for (std::size_t j = 0; j < dim; ++j) w[j] = (1.0 - eta) * w[j] - eta * data_grad[j];
        ++rec.trace.inner_iterations;
        plus = terms_at(o, WeightVector(w), true, false);
        calls += plus.inference_calls;
      }
      w = best;
      terms = terms_at(o, WeightVector(w), true, true);
      calls += terms.inference_calls;
      if (!rec.record(t, WeightVector(w), terms, calls)) break;
      good = w;
    }
  } catch (const NumericalError& e) {
    rec.abort(static_cast<int>(rec.trace.rows.size()), e.what());
  }
  return {WeightVector(good), std::move(rec.trace)};
}

TrainingResult train(const FactorGraph& graph, std::span<const Instance> data,
                     const TrainingConfig& cfg, const ObjectiveConfig& obj) {
  return cfg.trainer == Trainer::sgd ? sgd_train(graph, data, cfg, obj)
                                     : cccp_train(graph, data, cfg, obj);
}

}  // namespace mssvm
