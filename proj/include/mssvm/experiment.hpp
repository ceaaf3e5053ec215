#pragma once

// Experiment plumbing shared by the CLI and the acceptance suite: data
// sources, per-method training and evaluation, and trial aggregation.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "mssvm/objectives.hpp"
#include "mssvm/simulation.hpp"
#include "mssvm/training.hpp"

namespace mssvm {

struct MetricsReport {
  double accuracy = 0.0;     // percent of labeled test outputs predicted correctly
  double test_loglik = 0.0;  // sum_i log p(y_i | x_i), hidden nodes summed out
  std::int64_t errors = 0;
  std::int64_t labeled = 0;
  int instances = 0;
  bool loglik_exact = true;  // false when loopy BP supplied a Bethe estimate

  nlohmann::json to_json() const;
};

// log sum_h exp(w.phi(x, y_i, h)) - log Z(x) at unit temperature.
// Enumerates when the instance has at most exact_states joint states,
// otherwise uses sum-product; `exact` reports which.
double log_likelihood(const FactorGraph& graph, const WeightVector& w, const Instance& inst,
                      const BpOptions& bp, std::uint64_t exact_states, bool* exact = nullptr);

// Accuracy with predict(., eps_h) over labeled outputs, plus test
// log-likelihood.
MetricsReport evaluate_model(const FactorGraph& graph, const WeightVector& w,
                             std::span<const Instance> data, double eps_h, Backend backend,
                             const BpOptions& bp = {}, int threads = 1,
                             std::uint64_t exact_states = std::uint64_t{1} << 16);

struct MethodSpec {
  std::string name;  // label in reports; defaults to the family name
  FamilyPreset family;
  // Raw temperatures override the preset's.
  std::optional<TemperaturePair> temps;
  TrainingConfig training;

  std::string label() const { return name.empty() ? family.name() : name; }
  // The base config with this method's temperatures and loss flag.
  ObjectiveConfig objective(const ObjectiveConfig& base) const;
};

struct MethodResult {
  std::string method;
  WeightVector weights;
  TrainingTrace trace;
  MetricsReport metrics;
};

// Trains on `train`, evaluates on `test` with eps_h = the method's
// training eps_h unless eval_eps_h is given.
MethodResult run_method(const FactorGraph& graph, std::span<const Instance> train,
                        std::span<const Instance> test, const MethodSpec& method,
                        const ObjectiveConfig& base, std::optional<double> eval_eps_h = {});

using DataSource = std::variant<GeneratorConfig, ImageConfig>;

struct TrialData {
  FactorGraph graph;
  std::vector<Instance> train;
  std::vector<Instance> test;
};

// Trial t uses seed = source seed + t.
TrialData make_trial_data(const DataSource& source, const LabelImage& truth, int trial);

struct Summary {
  int trials = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_loglik = 0.0;
  double std_loglik = 0.0;
};

Summary summarize(const std::vector<MetricsReport>& runs);

// Per-trial metrics for every method, trials run on `threads` workers.
// result[m][t] is method m on trial t.
std::vector<std::vector<MetricsReport>> run_trials(const DataSource& source,
                                                   const LabelImage& truth,
                                                   const std::vector<MethodSpec>& methods,
                                                   const ObjectiveConfig& base, int trials,
                                                   int threads = 1);

nlohmann::json to_json(const GeneratorConfig& cfg);
nlohmann::json to_json(const ImageConfig& cfg);
nlohmann::json to_json(const TrainingConfig& cfg);
nlohmann::json to_json(const ObjectiveConfig& cfg);

}  // namespace mssvm
