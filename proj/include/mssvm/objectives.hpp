#pragma once

// The unified objective
//
//   F(w) = 1/2 |w|^2 + C * sum_i [ U_i+(w) - U_i-(w) ]
//   U_i+ = eps_y log sum_y exp( (Delta(y_i, y) + eps_h log sum_h exp(w.phi / eps_h)) / eps_y )
//   U_i- = eps_h log sum_h exp( w.phi(x_i, y_i, h) / eps_h )
//
// and its gradient w + C * sum_i (E+[phi] - E-[phi]). Zero temperatures
// are evaluated with exact max operators. MSSVM, LSSVM, HCRF and the
// eps-extension are presets over (eps_y, eps_h, loss on/off).

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mssvm/inference.hpp"
#include "mssvm/model.hpp"

namespace mssvm {

struct TemperaturePair {
  double eps_y = 0.0;
  double eps_h = 1.0;

  // Throws ConfigError on negative or non-finite values.
  void validate() const;
};

struct FamilyPreset {
  enum class Kind : std::uint8_t {
    mssvm,
    lssvm,
    hcrf,
    loss_augmented_likelihood,
    eps_extension,
  };

  Kind kind = Kind::mssvm;
  double eps = 0.5;  // eps_extension only

  TemperaturePair temps() const;
  bool loss_enabled() const { return kind != Kind::hcrf; }
  // "mssvm", "lssvm", "hcrf", "lal", "eps:<v>".
  std::string name() const;
  // Throws ConfigError on an unknown name or eps outside (0, 1).
  static FamilyPreset parse(std::string_view text);
};

enum class Backend : std::uint8_t { bp, enumerate };

std::string_view backend_name(Backend b);
Backend parse_backend(std::string_view text);

struct ObjectiveConfig {
  double C = 1.0;
  TemperaturePair temps;
  bool loss_enabled = true;
  Backend backend = Backend::bp;
  BpOptions bp;
  std::uint64_t max_states = std::uint64_t{1} << 24;
  int threads = 1;

  static ObjectiveConfig from_preset(const FamilyPreset& preset, double C = 1.0);
  // Throws ConfigError unless C > 0 (C == 0 is accepted for the pure
  // regularizer limit) and the temperatures are valid.
  void validate() const;
};

// Data terms summed over instances. Expectations have length D and are
// only filled when requested.
struct DataTerms {
  double plus = 0.0;
  double minus = 0.0;
  std::vector<double> plus_expectation;
  std::vector<double> minus_expectation;
  std::int64_t inference_calls = 0;
};

struct Evaluation {
  double objective = 0.0;
  std::vector<double> gradient;
  std::int64_t inference_calls = 0;
};

// Evaluates the objective over a fixed dataset. Keeps one warm-startable
// BP engine per instance and side so repeated calls during training reuse
// messages. Instances are processed in parallel when cfg.threads > 1;
// reductions always run in instance order, so results do not depend on
// the thread count.
class Objective {
 public:
  Objective(const FactorGraph& graph, std::span<const Instance> data, ObjectiveConfig cfg);

  const ObjectiveConfig& config() const { return cfg_; }
  const FactorGraph& graph() const { return graph_; }
  std::size_t size() const { return data_.size(); }

  Evaluation evaluate(const WeightVector& w, bool with_gradient = true);
  DataTerms data_terms(const WeightVector& w, bool plus, bool minus, bool expectations);
  // Per-instance (U_i+, U_i-).
  std::pair<double, double> instance_terms(const WeightVector& w, std::size_t i);

 private:
  struct Slot {
    double plus = 0.0;
    double minus = 0.0;
    std::vector<double> plus_expectation;
    std::vector<double> minus_expectation;
    int calls = 0;
  };
  void compute(const WeightVector& w, std::size_t i, bool plus, bool minus,
               bool expectations, Slot& out);

  const FactorGraph& graph_;
  std::span<const Instance> data_;
  ObjectiveConfig cfg_;
  std::vector<BeliefPropagation> plus_engines_;
  std::vector<BeliefPropagation> minus_engines_;
};

double unified_objective(const FactorGraph& graph, const WeightVector& w,
                         std::span<const Instance> data, const ObjectiveConfig& cfg);
std::vector<double> unified_gradient(const FactorGraph& graph, const WeightVector& w,
                                     std::span<const Instance> data,
                                     const ObjectiveConfig& cfg);

// Annealed marginal MAP prediction argmax_y eps_h log sum_h exp(w.phi / eps_h)
// over the labeled output nodes of inst (everything flagged hidden is
// marginalised). Full-length assignment, -1 off the predicted positions.
Assignment predict(const FactorGraph& graph, const WeightVector& w, const Instance& inst,
                   double eps_h, Backend backend = Backend::bp, const BpOptions& bp = {});

// (U_i+ - U_i-) - Delta(y_i, yhat^{eps_h}) with the loss switched on and the
// enumerate backend; non-negative up to round-off.
double lemma1_gap(const FactorGraph& graph, const WeightVector& w, const Instance& inst,
                  const TemperaturePair& temps);

}  // namespace mssvm
