#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mssvm/inference.hpp"

namespace mssvm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Directed message sender -> receiver along factor f.
struct Link {
  int sender;
  int receiver;
  int factor;
  bool sender_is_a;
  int reverse;
  int offset;  // into the flat message buffer, length card(receiver)
};

struct Topology {
  std::vector<Link> links;
  std::vector<std::vector<int>> incoming;  // per variable, link ids
  std::vector<int> node_offset;            // into the flat total buffer
  int message_size = 0;
  int total_size = 0;
};

Topology build_topology(const LogPotentials& pot) {
  Topology t;
  const int n = pot.num_vars();
  t.incoming.assign(n, {});
  t.node_offset.resize(n);
  for (int v = 0; v < n; ++v) {
    t.node_offset[v] = t.total_size;
    t.total_size += pot.cardinality[v];
  }
  for (int f = 0; f < static_cast<int>(pot.pairwise.size()); ++f) {
    const auto& fac = pot.pairwise[f];
    const int id = static_cast<int>(t.links.size());
    t.links.push_back({fac.a, fac.b, f, true, id + 1, t.message_size});
    t.message_size += pot.cardinality[fac.b];
    t.links.push_back({fac.b, fac.a, f, false, id, t.message_size});
    t.message_size += pot.cardinality[fac.a];
    t.incoming[fac.b].push_back(id);
    t.incoming[fac.a].push_back(id + 1);
  }
  return t;
}

std::vector<int> shape_key(const LogPotentials& pot) {
  std::vector<int> key(pot.cardinality);
  key.push_back(-1);
  for (const auto& f : pot.pairwise) {
    key.push_back(f.a);
    key.push_back(f.b);
  }
  return key;
}

double table_at(const LogPotentials& pot, const Link& l, int xs, int xr) {
  const auto& f = pot.pairwise[l.factor];
  const int cb = pot.cardinality[f.b];
  return l.sender_is_a ? f.table[xs * cb + xr] : f.table[xr * cb + xs];
}

std::vector<double> normalized_exp(std::span<const double> values, double rho) {
  std::vector<double> p(values.size());
  const double m = *std::max_element(values.begin(), values.end());
  double z = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    p[k] = std::exp((values[k] - m) / rho);
    z += p[k];
  }
  for (double& q : p) q /= z;
  return p;
}

std::vector<double> point_mass(int card, int label) {
  std::vector<double> p(static_cast<std::size_t>(card), 0.0);
  p[label] = 1.0;
  return p;
}

}  // namespace

double log_sum_exp(std::span<const double> values) { return soft_max(values, 1.0); }

double soft_max(std::span<const double> values, double rho) {
  if (values.empty()) return kNegInf;
  const double m = *std::max_element(values.begin(), values.end());
  if (is_max_temperature(rho) || m == kNegInf) return m;
  double s = 0.0;
  for (double v : values) s += std::exp((v - m) / rho);
  return m + rho * std::log(s);
}

VariableWeights::VariableWeights(std::vector<double> rho) : rho_(std::move(rho)) {
  for (double& r : rho_) {
    if (!std::isfinite(r) || r < 0.0)
      throw ConfigError("variable temperature must be finite and >= 0");
    if (is_max_temperature(r)) r = 0.0;
  }
}

VariableWeights VariableWeights::uniform(int num_vars, double rho) {
  return VariableWeights(std::vector<double>(static_cast<std::size_t>(num_vars), rho));
}

VariableWeights VariableWeights::by_role(const LogPotentials& pot,
                                         double eps_output, double eps_hidden) {
  std::vector<double> rho(pot.num_vars());
  for (int v = 0; v < pot.num_vars(); ++v)
    rho[v] = pot.role[v] == VarRole::output ? eps_output : eps_hidden;
  return VariableWeights(std::move(rho));
}

BeliefPropagation::BeliefPropagation(BpOptions options) : options_(options) {}

void BeliefPropagation::reset() {
  messages_.clear();
  shape_.clear();
  clamped_messages_.clear();
  clamped_shape_.clear();
}

InferenceResult BeliefPropagation::run(const LogPotentials& pot,
                                       const VariableWeights& weights) {
  if (weights.size() != pot.num_vars())
    throw ConfigError("variable weights do not match potentials");
  return solve(pot, weights, false);
}

namespace {

struct Fixpoint {
  Topology topo;
  std::vector<double> msg;
  std::vector<double> total;  // unary + all incoming, per variable
  bool converged = true;
  int iterations = 0;
};

// Synchronous damped flooding. Messages are normalised to max 0.
Fixpoint flood(const LogPotentials& pot, const VariableWeights& weights,
               const BpOptions& options, std::vector<double>& store,
               std::vector<int>& shape) {
  const int n = pot.num_vars();
  Fixpoint fp;
  fp.topo = build_topology(pot);
  const Topology& topo = fp.topo;
  auto key = shape_key(pot);

  auto& msg = fp.msg;
  msg.assign(static_cast<std::size_t>(topo.message_size), 0.0);
  if (options.warm_start && shape == key && store.size() == msg.size()) msg = store;

  auto& total = fp.total;
  total.resize(static_cast<std::size_t>(topo.total_size));
  std::vector<double> fresh(msg.size());
  std::vector<double> cavity;
  std::vector<double> vals;

  auto compute_totals = [&] {
    for (int v = 0; v < n; ++v) {
      double* t = &total[topo.node_offset[v]];
      for (int s = 0; s < pot.cardinality[v]; ++s) t[s] = pot.unary[v][s];
      for (int l : topo.incoming[v]) {
        const double* m = &msg[topo.links[l].offset];
        for (int s = 0; s < pot.cardinality[v]; ++s) t[s] += m[s];
      }
    }
  };

  fp.converged = topo.links.empty();
  const double damping = std::clamp(options.damping, 0.0, 1.0);
  for (int iter = 0; iter < options.max_iterations && !topo.links.empty(); ++iter) {
    compute_totals();
    for (const Link& l : topo.links) {
      const int cs = pot.cardinality[l.sender];
      const int cr = pot.cardinality[l.receiver];
      const double* ts = &total[topo.node_offset[l.sender]];
      const double* back = &msg[topo.links[l.reverse].offset];
      cavity.resize(static_cast<std::size_t>(cs));
      for (int s = 0; s < cs; ++s) cavity[s] = ts[s] - back[s];

      const double rho_s = weights.rho(l.sender);
      double* out = &fresh[l.offset];
      if (rho_s > 0.0) {
        vals.resize(static_cast<std::size_t>(cs));
        for (int r = 0; r < cr; ++r) {
          for (int s = 0; s < cs; ++s) vals[s] = cavity[s] + table_at(pot, l, s, r);
          out[r] = soft_max(vals, rho_s);
        }
      } else if (weights.is_max(l.receiver)) {
        for (int r = 0; r < cr; ++r) {
          double best = kNegInf;
          for (int s = 0; s < cs; ++s)
            best = std::max(best, cavity[s] + table_at(pot, l, s, r));
          out[r] = best;
        }
      } else {
        // Max sender feeding a sum receiver: sum only over the sender's
        // current argmax set.
        const double top = *std::max_element(ts, ts + cs);
        const double tie = 1e-9 * (1.0 + std::abs(top));
        const double rho_r = weights.rho(l.receiver);
        for (int r = 0; r < cr; ++r) {
          vals.clear();
          for (int s = 0; s < cs; ++s)
            if (ts[s] >= top - tie) vals.push_back(cavity[s] + table_at(pot, l, s, r));
          out[r] = soft_max(vals, rho_r);
        }
      }
      const double m = *std::max_element(out, out + cr);
      for (int r = 0; r < cr; ++r) out[r] -= m;
    }

    double residual = 0.0;
    for (std::size_t k = 0; k < msg.size(); ++k) {
      const double next = (1.0 - damping) * fresh[k] + damping * msg[k];
      residual = std::max(residual, std::abs(next - msg[k]));
      msg[k] = next;
    }
    fp.iterations = iter + 1;
    if (residual < options.tolerance) {
      fp.converged = true;
      break;
    }
  }
  compute_totals();
  store = msg;
  shape = std::move(key);
  return fp;
}

// Beliefs and (weighted) Bethe log-partition when no variable is a max
// variable. Exact on trees when every temperature agrees.
InferenceResult sum_beliefs(const LogPotentials& pot, const VariableWeights& weights,
                            const Fixpoint& fp) {
  const int n = pot.num_vars();
  const Topology& topo = fp.topo;
  InferenceResult r;
  r.converged = fp.converged;
  r.iterations = fp.iterations;
  r.node_beliefs.resize(n);
  r.edge_beliefs.resize(pot.pairwise.size());

  double value = pot.constant;
  std::vector<double> score;
  for (int f = 0; f < static_cast<int>(pot.pairwise.size()); ++f) {
    const auto& fac = pot.pairwise[f];
    const int ca = pot.cardinality[fac.a];
    const int cb = pot.cardinality[fac.b];
    const double* ta = &fp.total[topo.node_offset[fac.a]];
    const double* tb = &fp.total[topo.node_offset[fac.b]];
    // Link 2f carries a -> b and link 2f + 1 carries b -> a.
    const double* into_b = &fp.msg[topo.links[2 * f].offset];
    const double* into_a = &fp.msg[topo.links[2 * f + 1].offset];
    score.resize(static_cast<std::size_t>(ca * cb));
    for (int s = 0; s < ca; ++s)
      for (int t = 0; t < cb; ++t)
        score[s * cb + t] = fac.table[s * cb + t] + (ta[s] - into_a[s]) + (tb[t] - into_b[t]);
    const double rho = std::min(weights.rho(fac.a), weights.rho(fac.b));
    value += soft_max(score, rho);
    r.edge_beliefs[f] = normalized_exp(score, rho);
  }
  for (int v = 0; v < n; ++v) {
    std::span<const double> t(&fp.total[topo.node_offset[v]],
                              static_cast<std::size_t>(pot.cardinality[v]));
    const int degree = static_cast<int>(topo.incoming[v].size());
    value += (1 - degree) * soft_max(t, weights.rho(v));
    r.node_beliefs[v] = normalized_exp(t, weights.rho(v));
  }
  r.log_partition = value;
  return r;
}

// Decodes max variables in index order. Already-decoded max neighbours
// contribute their exact pairwise term instead of their message; ties go
// to the lowest label.
std::vector<int> decode(const LogPotentials& pot, const VariableWeights& weights,
                        const Fixpoint& fp) {
  const int n = pot.num_vars();
  const Topology& topo = fp.topo;
  std::vector<int> decoding(n, -1);
  std::vector<double> score;
  for (int v = 0; v < n; ++v) {
    if (!weights.is_max(v)) continue;
    const int card = pot.cardinality[v];
    score = pot.unary[v];
    for (int l : topo.incoming[v]) {
      const Link& link = topo.links[l];
      const int k = link.sender;
      if (weights.is_max(k) && decoding[k] >= 0) {
        for (int s = 0; s < card; ++s) score[s] += table_at(pot, link, decoding[k], s);
      } else {
        const double* m = &fp.msg[link.offset];
        for (int s = 0; s < card; ++s) score[s] += m[s];
      }
    }
    decoding[v] = static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin());
  }
  return decoding;
}

}  // namespace

InferenceResult BeliefPropagation::solve(const LogPotentials& pot,
                                         const VariableWeights& weights,
                                         bool conditional_stage) {
  const int n = pot.num_vars();
  const Fixpoint fp =
      conditional_stage ? flood(pot, weights, options_, clamped_messages_, clamped_shape_)
                        : flood(pot, weights, options_, messages_, shape_);

  bool any_max = false;
  for (int v = 0; v < n; ++v) any_max = any_max || weights.is_max(v);
  if (!any_max) return sum_beliefs(pot, weights, fp);

  // Decode the max variables, then condition on them and run the
  // remaining sum variables at their own temperatures.
  std::vector<int> decoding = decode(pot, weights, fp);
  const LogPotentials reduced = clamp(pot, decoding);
  std::vector<double> rho_reduced;
  for (int v = 0; v < n; ++v)
    if (!weights.is_max(v)) rho_reduced.push_back(weights.rho(v));
  InferenceResult cond;
  if (reduced.num_vars() > 0) {
    cond = solve(reduced, VariableWeights(std::move(rho_reduced)), true);
  } else {
    cond.log_partition = reduced.constant;
  }

  InferenceResult out = expand_clamped(pot, decoding, reduced, cond);
  out.decoding = std::move(decoding);
  out.converged = fp.converged && cond.converged;
  out.iterations = fp.iterations;
  return out;
}

InferenceResult expand_clamped(const LogPotentials& full,
                               std::span<const int> values,
                               const LogPotentials& reduced,
                               const InferenceResult& result) {
  InferenceResult out;
  out.log_partition = result.log_partition;
  out.converged = result.converged;
  out.iterations = result.iterations;
  const int n = full.num_vars();
  out.node_beliefs.resize(n);
  int r = 0;
  for (int v = 0; v < n; ++v) {
    if (values[v] >= 0)
      out.node_beliefs[v] = point_mass(full.cardinality[v], values[v]);
    else
      out.node_beliefs[v] = result.node_beliefs[r++];
  }
  if (r != reduced.num_vars())
    throw InvalidAssignment("clamp values do not match the reduced potentials");
  // clamp() keeps surviving factors in order.
  int next_reduced = 0;
  out.edge_beliefs.resize(full.pairwise.size());
  for (int f = 0; f < static_cast<int>(full.pairwise.size()); ++f) {
    const auto& fac = full.pairwise[f];
    const int ca = full.cardinality[fac.a];
    const int cb = full.cardinality[fac.b];
    auto& eb = out.edge_beliefs[f];
    if (values[fac.a] < 0 && values[fac.b] < 0) {
      eb = result.edge_beliefs[next_reduced++];
      continue;
    }
    eb.assign(static_cast<std::size_t>(ca * cb), 0.0);
    const auto& pa = out.node_beliefs[fac.a];
    const auto& pb = out.node_beliefs[fac.b];
    for (int s = 0; s < ca; ++s)
      for (int t = 0; t < cb; ++t) eb[s * cb + t] = pa[s] * pb[t];
  }
  return out;
}

Marginals to_marginals(const FactorGraph& graph, const LogPotentials& pot,
                       const InferenceResult& result) {
  Marginals m;
  m.node.assign(graph.num_nodes(), {});
  m.edge.assign(graph.num_edges(), {});
  for (int v = 0; v < pot.num_vars(); ++v) m.node[pot.node[v]] = result.node_beliefs[v];
  for (int f = 0; f < static_cast<int>(pot.pairwise.size()); ++f) {
    const auto& fac = pot.pairwise[f];
    const Edge& e = graph.edge(fac.graph_edge);
    if (e.a == pot.node[fac.a]) {
      m.edge[fac.graph_edge] = result.edge_beliefs[f];
    } else {
      // Factor orientation is opposite to the graph edge; transpose.
      const int ca = pot.cardinality[fac.a];
      const int cb = pot.cardinality[fac.b];
      auto& out = m.edge[fac.graph_edge];
      out.assign(static_cast<std::size_t>(ca * cb), 0.0);
      for (int s = 0; s < ca; ++s)
        for (int t = 0; t < cb; ++t) out[t * ca + s] = result.edge_beliefs[f][s * cb + t];
    }
  }
  return m;
}

InferenceResult sum_product(const LogPotentials& pot, const BpOptions& options) {
  BeliefPropagation bp(options);
  return bp.run(pot, VariableWeights::uniform(pot.num_vars(), 1.0));
}

InferenceResult max_product(const LogPotentials& pot, const BpOptions& options) {
  BeliefPropagation bp(options);
  return bp.run(pot, VariableWeights::uniform(pot.num_vars(), 0.0));
}

InferenceResult mixed_product(const LogPotentials& pot,
                              const VariableWeights& weights,
                              const BpOptions& options) {
  BeliefPropagation bp(options);
  return bp.run(pot, weights);
}

LogPotentials loss_augment(const LogPotentials& pot, const Instance& inst,
                           double scale) {
  LogPotentials out = pot;
  if (scale == 0.0) return out;
  for (int v = 0; v < out.num_vars(); ++v) {
    if (out.role[v] != VarRole::output) continue;
    const int gold = inst.label[out.node[v]];
    if (gold < 0) throw InvalidAssignment("labeled output variable without a gold label");
    for (int s = 0; s < out.cardinality[v]; ++s)
      if (s != gold) out.unary[v][s] += scale;
  }
  return out;
}

}  // namespace mssvm
