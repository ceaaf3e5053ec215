#pragma once

// Batch (sub-)gradient descent and CCCP trainers over the unified
// objective. Both start from w = 0 (unless given a starting point) and
// use the update
//   w <- (1 - eta) w - eta * C * sum_i (E+[phi] - E-[phi]).

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mssvm/model.hpp"
#include "mssvm/objectives.hpp"

namespace mssvm {

enum class Trainer : std::uint8_t { sgd, cccp };

std::string_view trainer_name(Trainer t);
Trainer parse_trainer(std::string_view text);

struct TrainingConfig {
  Trainer trainer = Trainer::sgd;
  int iterations = 100;  // outer iterations for CCCP
  double learning_rate = 0.02;
  // CCCP inner stop on the surrogate gradient norm; <= 0 means 1e-3 * sqrt(D).
  double inner_tolerance = 0.0;
  int max_inner = 500;
  std::uint64_t seed = 0;
  bool deterministic = true;
  // eta_t = eta / sqrt(t + 1) instead of a constant rate.
  bool decay = false;
  // Record the training Hamming error in the trace (one prediction per
  // instance per row).
  bool track_error = true;
  // Trace objective is evaluated exactly when every instance has at most
  // this many joint states; otherwise the training backend's value is used.
  std::uint64_t exact_trace_states = 4096;
  // Starting point; empty means w = 0.
  std::vector<double> initial_weights;

  // Throws ConfigError on eta outside (0, 1), T < 1 or max_inner < 1.
  // Initial weights of the wrong length raise DimensionError in training.
  void validate() const;
};

struct TraceRow {
  int iter = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double train_err = 0.0;  // fraction of labeled outputs mispredicted
  double wall_ms = 0.0;
  std::int64_t inference_calls = 0;  // cumulative
};

struct TrainingTrace {
  std::vector<TraceRow> rows;  // row t: state after t updates
  bool aborted = false;
  std::string diagnostic;
  int inner_iterations = 0;  // CCCP: total inner steps

  void write_csv(std::ostream& out) const;
};

struct TrainingResult {
  WeightVector weights;
  TrainingTrace trace;
};

// Non-finite objective or gradient stops training: the last finite weights
// are returned and trace.aborted is set with a diagnostic.
TrainingResult sgd_train(const FactorGraph& graph, std::span<const Instance> data,
                         const TrainingConfig& cfg, const ObjectiveConfig& obj);
TrainingResult cccp_train(const FactorGraph& graph, std::span<const Instance> data,
                          const TrainingConfig& cfg, const ObjectiveConfig& obj);
// Dispatches on cfg.trainer.
TrainingResult train(const FactorGraph& graph, std::span<const Instance> data,
                     const TrainingConfig& cfg, const ObjectiveConfig& obj);

// Sum of Hamming losses and of labeled outputs over a dataset, predicting
// with the annealed decoder at eps_h.
struct HammingCount {
  std::int64_t errors = 0;
  std::int64_t labeled = 0;
  double rate() const { return labeled ? static_cast<double>(errors) / labeled : 0.0; }
};
HammingCount hamming_errors(const FactorGraph& graph, const WeightVector& w,
                            std::span<const Instance> data, double eps_h, Backend backend,
                            const BpOptions& bp = {}, int threads = 1);

}  // namespace mssvm
