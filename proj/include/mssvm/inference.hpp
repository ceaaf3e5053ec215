#pragma once

// Belief propagation over LogPotentials with per-variable temperatures, and
// an exhaustive enumeration oracle for the same queries.
//
// Temperatures are carried by VariableWeights: rho = 1 is ordinary
// sum-product, rho -> 0 is max-product, and mixing the two on output and
// hidden variables gives mixed-product BP for marginal MAP. All messages
// are kept in energy units (log-space scaled by the sender temperature).

#include <cstdint>
#include <span>
#include <vector>

#include "mssvm/model.hpp"

namespace mssvm {

// Temperatures at or below this value are treated as an exact max.
inline constexpr double kMaxTemperature = 1e-6;

inline bool is_max_temperature(double rho) { return rho <= kMaxTemperature; }

class VariableWeights {
 public:
  VariableWeights() = default;
  // Throws ConfigError on negative or non-finite temperatures.
  explicit VariableWeights(std::vector<double> rho);

  static VariableWeights uniform(int num_vars, double rho);
  // Output variables get eps_output, hidden variables eps_hidden.
  static VariableWeights by_role(const LogPotentials& pot, double eps_output,
                                 double eps_hidden);

  int size() const { return static_cast<int>(rho_.size()); }
  // Snapped: values below kMaxTemperature read as 0.
  double rho(int v) const { return rho_[v]; }
  bool is_max(int v) const { return rho_[v] == 0.0; }

 private:
  std::vector<double> rho_;
};

struct InferenceResult {
  // Per variable, sums to 1. For max-semantics variables this is a point
  // mass at the decoded label; sum-semantics variables carry their
  // (conditional) marginals.
  std::vector<std::vector<double>> node_beliefs;
  // Per LogPotentials factor, row-major like the factor table.
  std::vector<std::vector<double>> edge_beliefs;
  // log Z for sum queries, decoded energy for max queries, annealed score
  // of the decoded configuration for mixed queries. Energy units.
  double log_partition = 0.0;
  // Per variable; -1 for sum-semantics variables. Empty when no variable
  // has max semantics.
  std::vector<int> decoding;
  bool converged = true;
  int iterations = 0;
};

struct BpOptions {
  int max_iterations = 100;
  double tolerance = 1e-10;
  double damping = 0.5;
  // Reuse messages from the previous call when the structure matches.
  bool warm_start = false;
};

// One engine per concurrent inference stream; holds message state between
// calls so that repeated queries on slowly changing potentials converge in
// a few sweeps.
class BeliefPropagation {
 public:
  explicit BeliefPropagation(BpOptions options = {});

  InferenceResult run(const LogPotentials& pot, const VariableWeights& weights);
  void reset();
  const BpOptions& options() const { return options_; }

 private:
  InferenceResult solve(const LogPotentials& pot, const VariableWeights& weights,
                        bool conditional_stage);

  BpOptions options_;
  std::vector<double> messages_;
  std::vector<int> shape_;
  std::vector<double> clamped_messages_;
  std::vector<int> clamped_shape_;
};

InferenceResult sum_product(const LogPotentials& pot, const BpOptions& options = {});
InferenceResult max_product(const LogPotentials& pot, const BpOptions& options = {});
InferenceResult mixed_product(const LogPotentials& pot,
                              const VariableWeights& weights,
                              const BpOptions& options = {});

// Adds scale to every label s != gold of each labeled output variable, so
// the energy gains scale * Hamming(gold, y).
LogPotentials loss_augment(const LogPotentials& pot, const Instance& inst,
                           double scale);

enum class QueryKind : std::uint8_t {
  log_partition,
  marginals,
  map,
  marginal_map,    // max over outputs, eps_h-annealed sum over hidden
  annealed_joint,  // p^(eps_y, eps_h)(y, h)
};

struct EnumerationQuery {
  QueryKind kind = QueryKind::log_partition;
  double eps_y = 0.0;
  double eps_h = 1.0;
  std::uint64_t max_states = std::uint64_t{1} << 24;
};

// Exact answer by exhaustive summation / maximisation. Ties in max
// semantics resolve to the lowest output configuration in lexicographic
// variable order, then the lowest hidden configuration. Throws
// InferenceRefused past max_states.
InferenceResult enumerate(const LogPotentials& pot, const EnumerationQuery& query);

// Re-expands a result computed on clamp(full, values) to the variables of
// `full`: clamped variables become point masses.
InferenceResult expand_clamped(const LogPotentials& full,
                               std::span<const int> values,
                               const LogPotentials& reduced,
                               const InferenceResult& result);

// Node/edge marginals over graph ids, for expected_features().
Marginals to_marginals(const FactorGraph& graph, const LogPotentials& pot,
                       const InferenceResult& result);

// Numerically stable helpers shared by the engines.
double log_sum_exp(std::span<const double> values);
// rho * log sum exp(values / rho); rho == 0 gives the max.
double soft_max(std::span<const double> values, double rho);

}  // namespace mssvm
