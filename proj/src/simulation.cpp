#include "mssvm/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mssvm {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

void Sigmas::validate() const {
  for (double s : {x, y, h, xy, xh, yh})
    if (!std::isfinite(s) || s < 0.0) throw ConfigError("sigmas must be finite and non-negative");
}

void GeneratorConfig::validate() const {
  sigma.validate();
  if (cardinality < 2) throw ConfigError("cardinality must be at least 2");
  if (topology == Topology::hidden_chain && positions < 1)
    throw ConfigError("hidden chain needs at least one position");
  if (topology == Topology::grid && (rows < 1 || cols < 1))
    throw ConfigError("grid dimensions must be positive");
  if (n_train < 1 || n_test < 1) throw ConfigError("n_train and n_test must be positive");
}

namespace {

FactorGraph untied_graph(std::vector<Node> nodes, std::vector<Edge> edges) {
  FeatureTemplate t;
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i)
    t.add_unary({i}, UnaryKind::indicator, nodes[i].cardinality);
  for (int e = 0; e < static_cast<int>(edges.size()); ++e)
    t.add_pairwise({e}, nodes[edges[e].a].cardinality, nodes[edges[e].b].cardinality);
  return FactorGraph(std::move(nodes), std::move(edges), std::move(t));
}

std::vector<Node> layered_nodes(int per_layer, int card) {
  std::vector<Node> nodes;
  for (NodeRole r : {NodeRole::observed, NodeRole::output, NodeRole::hidden})
    for (int i = 0; i < per_layer; ++i) nodes.push_back({r, card});
  return nodes;
}

// Scores of the joint model for indicator-only templates.
struct JointTables {
  std::vector<int> card;
  std::vector<std::vector<double>> unary;
  std::vector<std::vector<double>> pairwise;
};

JointTables joint_tables(const FactorGraph& graph, const WeightVector& w) {
  if (w.dim() != graph.dim()) throw DimensionError("weight vector does not match the template");
  JointTables t;
  for (const Node& n : graph.nodes()) {
    t.card.push_back(n.cardinality);
    t.unary.emplace_back(n.cardinality, 0.0);
  }
  for (const Edge& e : graph.edges())
    t.pairwise.emplace_back(graph.node(e.a).cardinality * graph.node(e.b).cardinality, 0.0);
  for (const UnaryGroup& g : graph.feature_template().unary()) {
    if (g.kind != UnaryKind::indicator)
      throw ConfigError("joint sampling needs an indicator-only template");
    for (int i : g.nodes)
      for (int s = 0; s < g.cardinality; ++s) t.unary[i][s] += w[g.offset + s];
  }
  for (const PairwiseGroup& g : graph.feature_template().pairwise())
    for (int e : g.edges)
      for (int k = 0; k < g.size(); ++k) t.pairwise[e][k] += w[g.offset + k];
  return t;
}

int sample_categorical(const std::vector<double>& logits, Rng& rng) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  std::vector<double> p(logits.size());
  for (std::size_t k = 0; k < p.size(); ++k) total += p[k] = std::exp(logits[k] - m);
  double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (u < p[k]) return static_cast<int>(k);
    u -= p[k];
  }
  return static_cast<int>(p.size()) - 1;
}

}  // namespace

FactorGraph hidden_chain_graph(int positions, int cardinality) {
  const int P = positions;
  std::vector<Edge> edges;
  for (int p = 0; p + 1 < P; ++p) edges.push_back({2 * P + p, 2 * P + p + 1});
  for (int p = 0; p < P; ++p) {
    edges.push_back({P + p, 2 * P + p});
    edges.push_back({p, P + p});
    edges.push_back({p, 2 * P + p});
  }
  return untied_graph(layered_nodes(P, cardinality), std::move(edges));
}

FactorGraph grid_mrf_graph(int rows, int cols, int cardinality) {
  const int n = rows * cols;
  std::vector<Edge> edges;
  for (int layer : {n, 2 * n})
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const int v = layer + r * cols + c;
        if (c + 1 < cols) edges.push_back({v, v + 1});
        if (r + 1 < rows) edges.push_back({v, v + cols});
      }
  for (int i = 0; i < n; ++i) {
    edges.push_back({n + i, 2 * n + i});
    edges.push_back({i, n + i});
    edges.push_back({i, 2 * n + i});
  }
  return untied_graph(layered_nodes(n, cardinality), std::move(edges));
}

FactorGraph make_graph(const GeneratorConfig& cfg) {
  cfg.validate();
  return cfg.topology == Topology::hidden_chain
             ? hidden_chain_graph(cfg.positions, cfg.cardinality)
             : grid_mrf_graph(cfg.rows, cfg.cols, cfg.cardinality);
}

WeightVector draw_generative_weights(const FactorGraph& graph, const Sigmas& sigma, Rng& rng) {
  sigma.validate();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> w(static_cast<std::size_t>(graph.dim()), 0.0);
  auto unary_sigma = [&](NodeRole r) {
    return r == NodeRole::observed ? sigma.x : r == NodeRole::output ? sigma.y : sigma.h;
  };
  auto pair_sigma = [&](NodeRole a, NodeRole b) {
    if (a == NodeRole::observed || b == NodeRole::observed) {
      const NodeRole other = a == NodeRole::observed ? b : a;
      return other == NodeRole::hidden ? sigma.xh : sigma.xy;
    }
    return sigma.yh;
  };
  const FeatureTemplate& t = graph.feature_template();
  for (const UnaryGroup& g : t.unary()) {
    const double s = unary_sigma(graph.node(g.nodes.front()).role);
    for (int k = 0; k < g.size(); ++k) w[g.offset + k] = s * normal(rng);
  }
  for (const PairwiseGroup& g : t.pairwise()) {
    const Edge& e = graph.edge(g.edges.front());
    const double s = pair_sigma(graph.node(e.a).role, graph.node(e.b).role);
    for (int k = 0; k < g.size(); ++k) w[g.offset + k] = s * normal(rng);
  }
  return WeightVector(std::move(w));
}

ExactSampler::ExactSampler(const FactorGraph& graph, const WeightVector& w,
                           std::uint64_t max_table) {
  const JointTables jt = joint_tables(graph, w);
  cardinality_ = jt.card;
  const int n = graph.num_nodes();

  std::vector<Table> pool;
  auto make_table = [&](std::vector<int> scope) {
    Table t;
    t.scope = std::move(scope);
    std::size_t size = 1;
    for (int v : t.scope) {
      t.stride.push_back(static_cast<int>(size));
      size *= static_cast<std::size_t>(cardinality_[v]);
    }
    t.log_values.assign(size, 0.0);
    return t;
  };
  for (int v = 0; v < n; ++v) {
    Table t = make_table({v});
    t.log_values = jt.unary[v];
    pool.push_back(std::move(t));
  }
  for (int e = 0; e < graph.num_edges(); ++e) {
    const Edge& edge = graph.edge(e);
    Table t = make_table({edge.a, edge.b});
    const int cb = cardinality_[edge.b];
    for (int s = 0; s < cardinality_[edge.a]; ++s)
      for (int u = 0; u < cb; ++u) t.log_values[s + u * cardinality_[edge.a]] = jt.pairwise[e][s * cb + u];
    pool.push_back(std::move(t));
  }

  std::vector<char> done(n, 0);
  for (int step = 0; step < n; ++step) {
    // Min-degree: the variable whose combined table is smallest.
    int best = -1;
    double best_size = INFINITY;
    std::vector<int> best_scope;
    for (int v = 0; v < n; ++v) {
      if (done[v]) continue;
      std::vector<int> scope{v};
      for (const Table& t : pool)
        if (std::find(t.scope.begin(), t.scope.end(), v) != t.scope.end())
          for (int u : t.scope)
            if (std::find(scope.begin(), scope.end(), u) == scope.end()) scope.push_back(u);
      double size = 1.0;
      for (int u : scope) size *= cardinality_[u];
      if (size < best_size) {
        best_size = size;
        best = v;
        best_scope = std::move(scope);
      }
    }
    if (best_size > static_cast<double>(max_table))
      throw InferenceRefused("exact sampler would need a table of " +
                             std::to_string(static_cast<std::uint64_t>(best_size)) + " entries");
    done[best] = 1;
    order_.push_back(best);

    Table joint = make_table(best_scope);
    std::vector<Table> rest;
    std::vector<int> x(best_scope.size(), 0);
    std::vector<Table> used;
    for (Table& t : pool) {
      if (std::find(t.scope.begin(), t.scope.end(), best) != t.scope.end()) used.push_back(std::move(t));
      else rest.push_back(std::move(t));
    }
    // Position of each used table's variables inside the joint scope.
    std::vector<std::vector<int>> where(used.size());
    for (std::size_t k = 0; k < used.size(); ++k)
      for (int u : used[k].scope)
        where[k].push_back(static_cast<int>(std::find(best_scope.begin(), best_scope.end(), u) -
                                            best_scope.begin()));
    for (std::size_t idx = 0; idx < joint.log_values.size(); ++idx) {
      double s = 0.0;
      for (std::size_t k = 0; k < used.size(); ++k) {
        std::size_t j = 0;
        for (std::size_t m = 0; m < where[k].size(); ++m)
          j += static_cast<std::size_t>(x[where[k][m]]) * used[k].stride[m];
        s += used[k].log_values[j];
      }
      joint.log_values[idx] = s;
      for (std::size_t m = 0; m < x.size() && ++x[m] == cardinality_[best_scope[m]]; ++m) x[m] = 0;
    }
    // Sum out the eliminated variable (first in scope, stride 1).
    Table reduced = make_table(std::vector<int>(best_scope.begin() + 1, best_scope.end()));
    const int c = cardinality_[best];
    for (std::size_t r = 0; r < reduced.log_values.size(); ++r) {
      const double* row = &joint.log_values[r * c];
      const double m = *std::max_element(row, row + c);
      double s = 0.0;
      for (int k = 0; k < c; ++k) s += std::exp(row[k] - m);
      reduced.log_values[r] = m + std::log(s);
    }
    rest.push_back(std::move(reduced));
    pool = std::move(rest);
    conditionals_.push_back(std::move(joint));
  }
  log_z_ = 0.0;
  for (const Table& t : pool) log_z_ += t.log_values.front();
}

std::vector<int> ExactSampler::next(Rng& rng) {
  std::vector<int> x(cardinality_.size(), -1);
  for (int step = static_cast<int>(order_.size()) - 1; step >= 0; --step) {
    const Table& t = conditionals_[step];
    std::size_t base = 0;
    for (std::size_t m = 1; m < t.scope.size(); ++m)
      base += static_cast<std::size_t>(x[t.scope[m]]) * t.stride[m];
    const int c = cardinality_[t.scope[0]];
    std::vector<double> logits(t.log_values.begin() + static_cast<std::ptrdiff_t>(base),
                               t.log_values.begin() + static_cast<std::ptrdiff_t>(base + c));
    x[t.scope[0]] = sample_categorical(logits, rng);
  }
  return x;
}

GibbsSampler::GibbsSampler(const FactorGraph& graph, const WeightVector& w, GibbsOptions options)
    : options_(options) {
  if (options.burn_in < 1 || options.thin < 1)
    throw ConfigError("Gibbs sampling needs burn_in >= 1 and thin >= 1");
  JointTables jt = joint_tables(graph, w);
  cardinality_ = std::move(jt.card);
  unary_ = std::move(jt.unary);
  pairwise_ = std::move(jt.pairwise);
  adjacency_.resize(cardinality_.size());
  for (int e = 0; e < graph.num_edges(); ++e) {
    const Edge& edge = graph.edge(e);
    card_b_.push_back(cardinality_[edge.b]);
    adjacency_[edge.a].push_back({edge.b, e, true});
    adjacency_[edge.b].push_back({edge.a, e, false});
  }
  order_.resize(cardinality_.size());
  std::iota(order_.begin(), order_.end(), 0);
}

void GibbsSampler::sweep(Rng& rng) {
  std::shuffle(order_.begin(), order_.end(), rng);
  std::vector<double> logits;
  for (int v : order_) {
    logits = unary_[v];
    for (const Neighbor& nb : adjacency_[v]) {
      const auto& table = pairwise_[nb.edge];
      const int cb = card_b_[nb.edge];
      for (int s = 0; s < cardinality_[v]; ++s)
        logits[s] += nb.first ? table[s * cb + state_[nb.node]] : table[state_[nb.node] * cb + s];
    }
    state_[v] = sample_categorical(logits, rng);
  }
}

std::vector<int> GibbsSampler::next(Rng& rng) {
  if (!burned_in_) {
    state_.resize(cardinality_.size());
    for (std::size_t v = 0; v < state_.size(); ++v)
      state_[v] = std::uniform_int_distribution<int>(0, cardinality_[v] - 1)(rng);
    for (int s = 0; s < options_.burn_in; ++s) sweep(rng);
    burned_in_ = true;
  } else {
    for (int s = 0; s < options_.thin; ++s) sweep(rng);
  }
  return state_;
}

std::unique_ptr<JointSampler> make_sampler(const FactorGraph& graph, const WeightVector& w,
                                           SamplerKind kind, const GibbsOptions& gibbs,
                                           std::uint64_t max_table) {
  if (kind == SamplerKind::gibbs) return std::make_unique<GibbsSampler>(graph, w, gibbs);
  if (kind == SamplerKind::exact) return std::make_unique<ExactSampler>(graph, w, max_table);
  try {
    return std::make_unique<ExactSampler>(graph, w, max_table);
  } catch (const InferenceRefused&) {
    return std::make_unique<GibbsSampler>(graph, w, gibbs);
  }
}

std::vector<Instance> sample_instances(const FactorGraph& graph, JointSampler& sampler, int n,
                                       Rng& rng) {
  std::vector<Instance> out;
  out.reserve(static_cast<std::size_t>(n));
  const int nodes = graph.num_nodes();
  for (int k = 0; k < n; ++k) {
    const std::vector<int> x = sampler.next(rng);
    Instance inst;
    inst.label = x;
    inst.hidden.assign(nodes, 0);
    inst.features.assign(nodes, {});
    for (int i = 0; i < nodes; ++i)
      if (graph.node(i).role == NodeRole::hidden) {
        inst.hidden[i] = 1;
        inst.label[i] = -1;
      }
    out.push_back(std::move(inst));
  }
  return out;
}

SimulatedData simulate(const GeneratorConfig& cfg) {
  SimulatedData out{make_graph(cfg), {}, {}, {}};
  Rng weight_rng = make_rng(cfg.seed, 0);
  out.truth = draw_generative_weights(out.graph, cfg.sigma, weight_rng);
  // Each set draws from its own stream and its own sampler state.
  Rng train_rng = make_rng(cfg.seed, 1);
  auto train_sampler = make_sampler(out.graph, out.truth, cfg.sampler, cfg.gibbs, cfg.max_table);
  out.train = sample_instances(out.graph, *train_sampler, cfg.n_train, train_rng);
  Rng test_rng = make_rng(cfg.seed, 2);
  auto test_sampler = make_sampler(out.graph, out.truth, cfg.sampler, cfg.gibbs, cfg.max_table);
  out.test = sample_instances(out.graph, *test_sampler, cfg.n_test, test_rng);
  return out;
}

}  // namespace mssvm
