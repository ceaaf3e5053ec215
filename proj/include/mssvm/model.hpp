#pragma once

// Pairwise discrete factor graphs with a log-linear feature template.
//
// A graph owns its nodes (observed / output / hidden), its edges and the
// template that maps (x, y, h) to a feature vector phi. Per-instance data
// (observations, gold labels, which nodes are latent) lives in Instance.
// Conditioning on x turns w . phi(x, ., .) into LogPotentials over the
// non-observed nodes, which is what the inference engines consume.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mssvm/errors.hpp"

namespace mssvm {

enum class NodeRole : std::uint8_t { observed, output, hidden };

struct Node {
  NodeRole role = NodeRole::output;
  int cardinality = 2;
};

struct Edge {
  int a = 0;
  int b = 0;
};

enum class UnaryKind : std::uint8_t {
  indicator,            // one weight per label
  observation_product,  // e_label (x) obs, one weight per (label, obs dim)
};

struct UnaryGroup {
  std::vector<int> nodes;  // tied nodes, all of the same cardinality
  UnaryKind kind = UnaryKind::indicator;
  int cardinality = 0;
  int obs_dim = 0;  // only for observation_product
  int offset = 0;

  int size() const {
    return kind == UnaryKind::indicator ? cardinality : cardinality * obs_dim;
  }
};

// Weight index for labels (s, t) on an edge (a, b) is offset + s * card_b + t.
struct PairwiseGroup {
  std::vector<int> edges;  // tied edges, all with the same (card_a, card_b)
  int card_a = 0;
  int card_b = 0;
  int offset = 0;

  int size() const { return card_a * card_b; }
};

class FeatureTemplate {
 public:
  const std::vector<UnaryGroup>& unary() const { return unary_; }
  const std::vector<PairwiseGroup>& pairwise() const { return pairwise_; }
  int dim() const { return dim_; }

  // Groups are laid out back to back in insertion order.
  int add_unary(std::vector<int> nodes, UnaryKind kind, int cardinality,
                int obs_dim = 0);
  int add_pairwise(std::vector<int> edges, int card_a, int card_b);

 private:
  std::vector<UnaryGroup> unary_;
  std::vector<PairwiseGroup> pairwise_;
  int dim_ = 0;
};

class FactorGraph {
 public:
  FactorGraph() = default;
  // Throws InvalidGraph if any structural invariant is violated.
  FactorGraph(std::vector<Node> nodes, std::vector<Edge> edges,
              FeatureTemplate tmpl);

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  const Node& node(int i) const { return nodes_[i]; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Edge& edge(int e) const { return edges_[e]; }
  const std::vector<Edge>& edges() const { return edges_; }
  const FeatureTemplate& feature_template() const { return template_; }
  int dim() const { return template_.dim(); }

  // Incident edges of node i.
  const std::vector<int>& incident(int i) const { return incident_[i]; }

 private:
  void validate() const;

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  FeatureTemplate template_;
  std::vector<std::vector<int>> incident_;
};

class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(int dim) : values_(static_cast<std::size_t>(dim), 0.0) {}
  // Throws NumericalError on non-finite entries.
  explicit WeightVector(std::vector<double> values);

  int dim() const { return static_cast<int>(values_.size()); }
  std::span<const double> values() const { return values_; }
  double operator[](int i) const { return values_[i]; }
  double squared_norm() const;

 private:
  std::vector<double> values_;
};

// Full-length assignment over graph nodes; -1 marks "not assigned".
using Assignment = std::vector<int>;

struct Instance {
  // Observed nodes: discrete observation (or -1 when the node only carries a
  // feature vector). Output nodes: gold label, or -1 when hidden.
  std::vector<int> label;
  // Per node; true for nodes treated as latent in this instance.
  std::vector<std::uint8_t> hidden;
  // Per node real-valued observation vector (empty when unused).
  std::vector<std::vector<double>> features;

  bool is_labeled(int i) const { return label[i] >= 0 && !hidden[i]; }
};

// Throws InvalidAssignment if the instance does not fit the graph.
void validate_instance(const FactorGraph& graph, const Instance& inst);

// Output nodes carrying a gold label in this instance.
std::vector<int> labeled_nodes(const FactorGraph& graph, const Instance& inst);

class SparseVector {
 public:
  void add(int index, double value) { entries_.emplace_back(index, value); }
  // Merges duplicate indices and drops exact zeros.
  void compress();
  const std::vector<std::pair<int, double>>& entries() const { return entries_; }
  double dot(std::span<const double> w) const;
  std::vector<double> to_dense(int dim) const;

 private:
  std::vector<std::pair<int, double>> entries_;
};

// phi(x, y, h). `config` labels every non-observed node (y and h combined);
// observed values come from the instance.
SparseVector feature_vector(const FactorGraph& graph, const Instance& inst,
                            const Assignment& config);

enum class VarRole : std::uint8_t { output, hidden };

// w . phi(x, ., .) over the non-observed nodes of one instance.
struct LogPotentials {
  struct Factor {
    int a = 0;           // variable index
    int b = 0;           // variable index
    int graph_edge = -1;
    std::vector<double> table;  // row-major, [s * card(b) + t]
  };

  std::vector<int> cardinality;  // per variable
  std::vector<int> node;         // graph node id per variable
  std::vector<VarRole> role;
  std::vector<std::vector<double>> unary;
  std::vector<Factor> pairwise;
  double constant = 0.0;

  int num_vars() const { return static_cast<int>(cardinality.size()); }
  // Sum of all terms for a per-variable assignment.
  double energy(std::span<const int> vars) const;
};

// Throws DimensionError when w does not match the template.
LogPotentials condition(const FactorGraph& graph, const WeightVector& w,
                        const Instance& inst);

// Fixes variables with values[v] >= 0 and folds them into the remaining
// unaries and the constant. Variable order of the survivors is kept.
LogPotentials clamp(const LogPotentials& pot, std::span<const int> values);

// Per-variable values of the gold labels (-1 for hidden variables).
std::vector<int> gold_values(const LogPotentials& pot, const Instance& inst);

// Number of nodes in `nodes` whose labels differ.
int hamming_loss(const Assignment& truth, const Assignment& pred,
                 std::span<const int> nodes);

// Distributions over graph nodes and edges, used to form feature
// expectations. Entries for observed nodes (and edges touching only
// observed nodes) stay empty.
struct Marginals {
  std::vector<std::vector<double>> node;
  std::vector<std::vector<double>> edge;
};

// E[phi] under the given marginals; length graph.dim().
std::vector<double> expected_features(const FactorGraph& graph,
                                      const Instance& inst,
                                      const Marginals& marginals);

}  // namespace mssvm
