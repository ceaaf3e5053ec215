#include "mssvm/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace mssvm {

int FeatureTemplate::add_unary(std::vector<int> nodes, UnaryKind kind,
                               int cardinality, int obs_dim) {
  if (kind == UnaryKind::observation_product && obs_dim <= 0)
    throw InvalidGraph("observation_product group needs obs_dim > 0");
  UnaryGroup g;
  g.nodes = std::move(nodes);
  g.kind = kind;
  g.cardinality = cardinality;
  g.obs_dim = kind == UnaryKind::indicator ? 0 : obs_dim;
  g.offset = dim_;
  dim_ += g.size();
  unary_.push_back(std::move(g));
  return static_cast<int>(unary_.size()) - 1;
}

int FeatureTemplate::add_pairwise(std::vector<int> edges, int card_a,
                                  int card_b) {
  PairwiseGroup g;
  g.edges = std::move(edges);
  g.card_a = card_a;
  g.card_b = card_b;
  g.offset = dim_;
  dim_ += g.size();
  pairwise_.push_back(std::move(g));
  return static_cast<int>(pairwise_.size()) - 1;
}

FactorGraph::FactorGraph(std::vector<Node> nodes, std::vector<Edge> edges,
                         FeatureTemplate tmpl)
    : nodes_(std::move(nodes)),
      edges_(std::move(edges)),
      template_(std::move(tmpl)) {
  validate();
  incident_.assign(nodes_.size(), {});
  for (int e = 0; e < num_edges(); ++e) {
    incident_[edges_[e].a].push_back(e);
    incident_[edges_[e].b].push_back(e);
  }
}

void FactorGraph::validate() const {
  const int n = num_nodes();
  for (int i = 0; i < n; ++i) {
    if (nodes_[i].cardinality < 2)
      throw InvalidGraph("node " + std::to_string(i) + " has cardinality < 2");
  }
  std::set<std::pair<int, int>> seen;
  for (const Edge& e : edges_) {
    if (e.a < 0 || e.a >= n || e.b < 0 || e.b >= n)
      throw InvalidGraph("edge references a missing node");
    if (e.a == e.b) throw InvalidGraph("self-loop edge");
    if (!seen.insert(std::minmax(e.a, e.b)).second)
      throw InvalidGraph("duplicate edge " + std::to_string(e.a) + "-" +
                         std::to_string(e.b));
  }

  std::vector<int> owner(static_cast<std::size_t>(template_.dim()), 0);
  auto claim = [&](int offset, int size) {
    if (offset < 0 || size <= 0 || offset + size > template_.dim())
      throw InvalidGraph("feature group outside [0, D)");
    for (int k = offset; k < offset + size; ++k) ++owner[k];
  };
  for (const UnaryGroup& g : template_.unary()) {
    claim(g.offset, g.size());
    for (int i : g.nodes) {
      if (i < 0 || i >= n) throw InvalidGraph("unary group references a missing node");
      if (nodes_[i].cardinality != g.cardinality)
        throw InvalidGraph("tied unary group mixes cardinalities");
    }
  }
  for (const PairwiseGroup& g : template_.pairwise()) {
    claim(g.offset, g.size());
    for (int e : g.edges) {
      if (e < 0 || e >= num_edges())
        throw InvalidGraph("pairwise group references a missing edge");
      if (nodes_[edges_[e].a].cardinality != g.card_a ||
          nodes_[edges_[e].b].cardinality != g.card_b)
        throw InvalidGraph("tied pairwise group mixes cardinality signatures");
    }
  }
  for (int c : owner)
    if (c != 1)
      throw InvalidGraph("every weight index must be owned by exactly one group");
}

WeightVector::WeightVector(std::vector<double> values)
    : values_(std::move(values)) {
  for (double v : values_)
    if (!std::isfinite(v)) throw NumericalError("non-finite weight");
}

double WeightVector::squared_norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return s;
}

void validate_instance(const FactorGraph& graph, const Instance& inst) {
  const auto n = static_cast<std::size_t>(graph.num_nodes());
  if (inst.label.size() != n || inst.hidden.size() != n ||
      inst.features.size() != n)
    throw InvalidAssignment("instance size does not match graph");
  for (int i = 0; i < graph.num_nodes(); ++i) {
    const Node& node = graph.node(i);
    const int v = inst.label[i];
    if (v >= node.cardinality)
      throw InvalidAssignment("label out of range at node " + std::to_string(i));
    if (node.role == NodeRole::observed) {
      if (inst.hidden[i])
        throw InvalidAssignment("observed node in hidden mask: " + std::to_string(i));
      continue;
    }
    if (node.role == NodeRole::hidden && !inst.hidden[i])
      throw InvalidAssignment("hidden-role node missing from mask: " +
                              std::to_string(i));
    if (inst.hidden[i] == (v >= 0))
      throw InvalidAssignment("node must be either labeled or hidden: " +
                              std::to_string(i));
  }
  for (const UnaryGroup& g : graph.feature_template().unary()) {
    for (int i : g.nodes) {
      if (g.kind == UnaryKind::observation_product) {
        if (static_cast<int>(inst.features[i].size()) != g.obs_dim)
          throw InvalidAssignment("missing observation vector at node " +
                                  std::to_string(i));
      } else if (graph.node(i).role == NodeRole::observed && inst.label[i] < 0) {
        throw InvalidAssignment("missing observed value at node " + std::to_string(i));
      }
    }
  }
}

std::vector<int> labeled_nodes(const FactorGraph& graph, const Instance& inst) {
  std::vector<int> out;
  for (int i = 0; i < graph.num_nodes(); ++i)
    if (graph.node(i).role != NodeRole::observed && inst.is_labeled(i))
      out.push_back(i);
  return out;
}

void SparseVector::compress() {
  std::sort(entries_.begin(), entries_.end(),
            [](const auto& l, const auto& r) { return l.first < r.first; });
  std::vector<std::pair<int, double>> merged;
  for (const auto& [k, v] : entries_) {
    if (!merged.empty() && merged.back().first == k)
      merged.back().second += v;
    else
      merged.emplace_back(k, v);
  }
  std::erase_if(merged, [](const auto& e) { return e.second == 0.0; });
  entries_ = std::move(merged);
}

double SparseVector::dot(std::span<const double> w) const {
  double s = 0.0;
  for (const auto& [k, v] : entries_) s += w[k] * v;
  return s;
}

std::vector<double> SparseVector::to_dense(int dim) const {
  std::vector<double> out(static_cast<std::size_t>(dim), 0.0);
  for (const auto& [k, v] : entries_) out[k] += v;
  return out;
}

namespace {

int value_at(const FactorGraph& graph, const Instance& inst,
             const Assignment& config, int i) {
  const int v = graph.node(i).role == NodeRole::observed ? inst.label[i] : config[i];
  if (v < 0 || v >= graph.node(i).cardinality)
    throw InvalidAssignment("assignment missing or out of range at node " +
                            std::to_string(i));
  return v;
}

}  // namespace

SparseVector feature_vector(const FactorGraph& graph, const Instance& inst,
                            const Assignment& config) {
  if (static_cast<int>(config.size()) != graph.num_nodes())
    throw InvalidAssignment("assignment size does not match graph");
  const FeatureTemplate& t = graph.feature_template();
  SparseVector phi;
  for (const UnaryGroup& g : t.unary()) {
    for (int i : g.nodes) {
      if (g.kind == UnaryKind::observation_product) {
        // Vector-valued observed nodes carry no label of their own.
        if (graph.node(i).role == NodeRole::observed) continue;
        const int s = value_at(graph, inst, config, i);
        for (int d = 0; d < g.obs_dim; ++d)
          phi.add(g.offset + s * g.obs_dim + d, inst.features[i][d]);
      } else {
        phi.add(g.offset + value_at(graph, inst, config, i), 1.0);
      }
    }
  }
  for (const PairwiseGroup& g : t.pairwise()) {
    for (int e : g.edges) {
      const Edge& edge = graph.edge(e);
      const int s = value_at(graph, inst, config, edge.a);
      const int u = value_at(graph, inst, config, edge.b);
      phi.add(g.offset + s * g.card_b + u, 1.0);
    }
  }
  phi.compress();
  return phi;
}

double LogPotentials::energy(std::span<const int> vars) const {
  double e = constant;
  for (int v = 0; v < num_vars(); ++v) e += unary[v][vars[v]];
  for (const Factor& f : pairwise)
    e += f.table[vars[f.a] * cardinality[f.b] + vars[f.b]];
  return e;
}

LogPotentials condition(const FactorGraph& graph, const WeightVector& w,
                        const Instance& inst) {
  const FeatureTemplate& t = graph.feature_template();
  if (w.dim() != t.dim())
    throw DimensionError("weight dimension " + std::to_string(w.dim()) +
                         " does not match template dimension " +
                         std::to_string(t.dim()));
  validate_instance(graph, inst);

  LogPotentials pot;
  std::vector<int> var_of(graph.num_nodes(), -1);
  for (int i = 0; i < graph.num_nodes(); ++i) {
    const Node& node = graph.node(i);
    if (node.role == NodeRole::observed) continue;
    var_of[i] = pot.num_vars();
    pot.cardinality.push_back(node.cardinality);
    pot.node.push_back(i);
    pot.role.push_back(inst.hidden[i] ? VarRole::hidden : VarRole::output);
    pot.unary.emplace_back(node.cardinality, 0.0);
  }

  for (const UnaryGroup& g : t.unary()) {
    for (int i : g.nodes) {
      const int v = var_of[i];
      if (g.kind == UnaryKind::observation_product) {
        if (v < 0) continue;
        const auto& x = inst.features[i];
        for (int s = 0; s < g.cardinality; ++s) {
          double acc = 0.0;
          for (int d = 0; d < g.obs_dim; ++d)
            acc += w[g.offset + s * g.obs_dim + d] * x[d];
          pot.unary[v][s] += acc;
        }
      } else if (v < 0) {
        pot.constant += w[g.offset + inst.label[i]];
      } else {
        for (int s = 0; s < g.cardinality; ++s) pot.unary[v][s] += w[g.offset + s];
      }
    }
  }

  std::vector<int> factor_of(graph.num_edges(), -1);
  for (const PairwiseGroup& g : t.pairwise()) {
    for (int e : g.edges) {
      const Edge& edge = graph.edge(e);
      const int va = var_of[edge.a];
      const int vb = var_of[edge.b];
      auto weight = [&](int s, int u) { return w[g.offset + s * g.card_b + u]; };
      if (va < 0 && vb < 0) {
        pot.constant += weight(inst.label[edge.a], inst.label[edge.b]);
      } else if (va < 0) {
        const int s = inst.label[edge.a];
        for (int u = 0; u < g.card_b; ++u) pot.unary[vb][u] += weight(s, u);
      } else if (vb < 0) {
        const int u = inst.label[edge.b];
        for (int s = 0; s < g.card_a; ++s) pot.unary[va][s] += weight(s, u);
      } else {
        if (factor_of[e] < 0) {
          factor_of[e] = static_cast<int>(pot.pairwise.size());
          pot.pairwise.push_back({va, vb, e,
                                  std::vector<double>(g.card_a * g.card_b, 0.0)});
        }
        auto& table = pot.pairwise[factor_of[e]].table;
        for (int s = 0; s < g.card_a; ++s)
          for (int u = 0; u < g.card_b; ++u) table[s * g.card_b + u] += weight(s, u);
      }
    }
  }

  return pot;
}

LogPotentials clamp(const LogPotentials& pot, std::span<const int> values) {
  if (static_cast<int>(values.size()) != pot.num_vars())
    throw InvalidAssignment("clamp values do not match potentials");
  LogPotentials out;
  out.constant = pot.constant;
  std::vector<int> new_index(pot.num_vars(), -1);
  for (int v = 0; v < pot.num_vars(); ++v) {
    if (values[v] >= pot.cardinality[v])
      throw InvalidAssignment("clamp value out of range");
    if (values[v] >= 0) {
      out.constant += pot.unary[v][values[v]];
      continue;
    }
    new_index[v] = out.num_vars();
    out.cardinality.push_back(pot.cardinality[v]);
    out.node.push_back(pot.node[v]);
    out.role.push_back(pot.role[v]);
    out.unary.push_back(pot.unary[v]);
  }
  for (const auto& f : pot.pairwise) {
    const int cb = pot.cardinality[f.b];
    const int sa = values[f.a];
    const int sb = values[f.b];
    if (sa >= 0 && sb >= 0) {
      out.constant += f.table[sa * cb + sb];
    } else if (sa >= 0) {
      auto& u = out.unary[new_index[f.b]];
      for (int t = 0; t < cb; ++t) u[t] += f.table[sa * cb + t];
    } else if (sb >= 0) {
      auto& u = out.unary[new_index[f.a]];
      for (int s = 0; s < pot.cardinality[f.a]; ++s) u[s] += f.table[s * cb + sb];
    } else {
      out.pairwise.push_back({new_index[f.a], new_index[f.b], f.graph_edge, f.table});
    }
  }
  return out;
}

std::vector<int> gold_values(const LogPotentials& pot, const Instance& inst) {
  std::vector<int> values(pot.num_vars(), -1);
  for (int v = 0; v < pot.num_vars(); ++v)
    if (pot.role[v] == VarRole::output) values[v] = inst.label[pot.node[v]];
  return values;
}

int hamming_loss(const Assignment& truth, const Assignment& pred,
                 std::span<const int> nodes) {
  int loss = 0;
  for (int i : nodes) {
    if (i < 0 || i >= static_cast<int>(truth.size()) ||
        i >= static_cast<int>(pred.size()) || truth[i] < 0 || pred[i] < 0)
      throw InvalidAssignment("assignment does not cover node " + std::to_string(i));
    loss += truth[i] != pred[i];
  }
  return loss;
}

std::vector<double> expected_features(const FactorGraph& graph,
                                      const Instance& inst,
                                      const Marginals& m) {
  const FeatureTemplate& t = graph.feature_template();
  std::vector<double> out(static_cast<std::size_t>(t.dim()), 0.0);
  auto observed = [&](int i) { return graph.node(i).role == NodeRole::observed; };

  for (const UnaryGroup& g : t.unary()) {
    for (int i : g.nodes) {
      if (g.kind == UnaryKind::observation_product) {
        if (observed(i)) continue;
        const auto& x = inst.features[i];
        for (int s = 0; s < g.cardinality; ++s) {
          const double p = m.node[i][s];
          if (p == 0.0) continue;
          for (int d = 0; d < g.obs_dim; ++d)
            out[g.offset + s * g.obs_dim + d] += p * x[d];
        }
      } else if (observed(i)) {
        out[g.offset + inst.label[i]] += 1.0;
      } else {
        for (int s = 0; s < g.cardinality; ++s) out[g.offset + s] += m.node[i][s];
      }
    }
  }
  for (const PairwiseGroup& g : t.pairwise()) {
    for (int e : g.edges) {
      const Edge& edge = graph.edge(e);
      const bool oa = observed(edge.a);
      const bool ob = observed(edge.b);
      if (oa && ob) {
        out[g.offset + inst.label[edge.a] * g.card_b + inst.label[edge.b]] += 1.0;
      } else if (oa) {
        const int s = inst.label[edge.a];
        for (int u = 0; u < g.card_b; ++u)
          out[g.offset + s * g.card_b + u] += m.node[edge.b][u];
      } else if (ob) {
        const int u = inst.label[edge.b];
        for (int s = 0; s < g.card_a; ++s)
          out[g.offset + s * g.card_b + u] += m.node[edge.a][s];
      } else {
        const auto& table = m.edge[e];
        for (int k = 0; k < g.size(); ++k) out[g.offset + k] += table[k];
      }
    }
  }
  return out;
}

}  // namespace mssvm
