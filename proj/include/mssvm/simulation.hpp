#pragma once

// Synthetic data: the hidden-chain and two-layer grid MRFs with random
// generative weights, exact (variable elimination) and Gibbs samplers for
// the joint p(x, y, h) ~ exp(w . phi), and the noisy-image weak-label
// segmentation set.
//
// Node layout for both MRF topologies is three equal blocks: observations
// x first, then outputs y, then hidden h. A "hidden chain of P positions"
// has 2P non-observed nodes; a "R x C grid" has 2RC.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mssvm/model.hpp"

namespace mssvm {

using Rng = std::mt19937_64;

// Independent generator for stream `stream` of a run seeded with `seed`.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

struct Sigmas {
  double x = 0.1;
  double y = 0.1;
  double h = 0.1;
  double xy = 2.0;
  double xh = 2.0;
  double yh = 2.0;  // also used for same-layer (y-y, h-h) edges

  void validate() const;
};

enum class Topology : std::uint8_t { hidden_chain, grid };

enum class SamplerKind : std::uint8_t { automatic, exact, gibbs };

struct GibbsOptions {
  int burn_in = 1000;  // full sweeps
  int thin = 10;       // sweeps between kept samples
};

struct GeneratorConfig {
  Topology topology = Topology::hidden_chain;
  int positions = 20;  // hidden_chain
  int rows = 6;        // grid
  int cols = 6;
  int cardinality = 4;
  Sigmas sigma;
  int n_train = 20;
  int n_test = 100;
  std::uint64_t seed = 0;
  SamplerKind sampler = SamplerKind::automatic;
  GibbsOptions gibbs;
  // Largest intermediate table (in entries) the exact sampler may build.
  std::uint64_t max_table = std::uint64_t{1} << 20;

  void validate() const;
};

// Untied indicator template: one unary group per node, one pairwise group
// per edge.
FactorGraph hidden_chain_graph(int positions, int cardinality);
FactorGraph grid_mrf_graph(int rows, int cols, int cardinality);
FactorGraph make_graph(const GeneratorConfig& cfg);

// Unary weights ~ N(0, sigma_role^2), pairwise ~ N(0, sigma_pair^2) with
// the edge type read off the endpoint roles.
WeightVector draw_generative_weights(const FactorGraph& graph, const Sigmas& sigma, Rng& rng);

// Samples full joint configurations (every node, observed included) from
// p ~ exp(w . phi). Indicator templates only.
class JointSampler {
 public:
  virtual ~JointSampler() = default;
  virtual std::vector<int> next(Rng& rng) = 0;
};

// Exact forward-filtering / backward-sampling over a min-degree
// elimination order. Throws InferenceRefused if an intermediate table
// exceeds max_table entries.
class ExactSampler final : public JointSampler {
 public:
  ExactSampler(const FactorGraph& graph, const WeightVector& w,
               std::uint64_t max_table = std::uint64_t{1} << 20);
  std::vector<int> next(Rng& rng) override;
  // Natural log of the joint normaliser.
  double log_partition() const { return log_z_; }

 private:
  struct Table {
    std::vector<int> scope;  // variables, first one is the eliminated var
    std::vector<int> stride;
    std::vector<double> log_values;
  };
  std::vector<int> cardinality_;
  std::vector<int> order_;
  std::vector<Table> conditionals_;  // per elimination step
  double log_z_ = 0.0;
};

// Random-scan Gibbs: each sweep visits every node once in a fresh random
// order. The first call runs the burn-in.
class GibbsSampler final : public JointSampler {
 public:
  GibbsSampler(const FactorGraph& graph, const WeightVector& w, GibbsOptions options);
  std::vector<int> next(Rng& rng) override;

 private:
  void sweep(Rng& rng);

  struct Neighbor {
    int node;
    int edge;
    bool first;  // this node is edge.a
  };
  std::vector<int> cardinality_;
  std::vector<std::vector<double>> unary_;
  std::vector<std::vector<double>> pairwise_;  // per edge, row-major
  std::vector<int> card_b_;
  std::vector<std::vector<Neighbor>> adjacency_;
  GibbsOptions options_;
  std::vector<int> state_;
  std::vector<int> order_;
  bool burned_in_ = false;
};

// Exact when the elimination tables fit (or kind == exact), Gibbs
// otherwise. Throws ConfigError for Gibbs with burn_in < 1 or thin < 1.
std::unique_ptr<JointSampler> make_sampler(const FactorGraph& graph, const WeightVector& w,
                                           SamplerKind kind, const GibbsOptions& gibbs,
                                           std::uint64_t max_table);

// Converts joint draws into instances: observed nodes keep their value as
// the observation, hidden-role nodes go into the hidden mask, outputs are
// labeled.
std::vector<Instance> sample_instances(const FactorGraph& graph, JointSampler& sampler, int n,
                                       Rng& rng);

struct SimulatedData {
  FactorGraph graph;
  WeightVector truth;
  std::vector<Instance> train;
  std::vector<Instance> test;
};

// Weights, train and test sets each come from their own stream of cfg.seed.
SimulatedData simulate(const GeneratorConfig& cfg);

// Segmentation study.

struct LabelImage {
  int height = 0;
  int width = 0;
  int labels = 0;
  std::vector<int> pixels;  // row-major
  int at(int r, int c) const { return pixels[r * width + c]; }
};

// Five regions on 20 x 40: three horizontal bands, a rectangle and a
// diagonal wedge.
LabelImage default_truth_image();

struct ImageConfig {
  int height = 20;
  int width = 40;
  int labels = 5;
  double noise_sigma = 2.2360679774997898;  // sqrt(5): N(0, 5) read as variance
  double missing_fraction = 0.0;
  double test_missing_fraction = 0.0;
  int n_train = 10;
  int n_test = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

// 4-connected grid of output pixels with a tied e_y (x) [x, 1] unary and a
// tied e_y (x) e_y' pairwise group.
FactorGraph image_graph(int height, int width, int labels);

struct ImageData {
  FactorGraph graph;
  LabelImage truth;
  std::vector<Instance> train;
  std::vector<Instance> test;
};

// Each instance: x = truth + N(0, noise_sigma^2) per pixel, and
// ceil(missing_fraction * H * W) uniformly chosen pixels flagged hidden.
ImageData make_image_dataset(const ImageConfig& cfg, const LabelImage& truth);
std::vector<Instance> noisy_instances(const LabelImage& truth, double noise_sigma,
                                      double missing_fraction, int n, Rng& rng);

// Plain PGM (P2). Truth images use maxval = labels - 1.
LabelImage read_label_pgm(std::istream& in, int labels);
void write_label_pgm(std::ostream& out, const LabelImage& img);
// Noisy observations as 16-bit P2: value = round(1000 x) + 32768, clamped.
inline constexpr double kPgmScale = 1000.0;
inline constexpr int kPgmOffset = 32768;
void write_observation_pgm(std::ostream& out, const Instance& inst, int height, int width);
std::vector<double> read_observation_pgm(std::istream& in, int& height, int& width);

}  // namespace mssvm
