#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mssvm/inference.hpp"

namespace mssvm {

namespace {

// Advances `values` over the variables in `vars` in lexicographic order
// (last variable fastest). Returns false after the last configuration.
bool advance(std::vector<int>& values, const std::vector<int>& vars,
             const LogPotentials& pot) {
  for (int k = static_cast<int>(vars.size()) - 1; k >= 0; --k) {
    const int v = vars[k];
    if (++values[v] < pot.cardinality[v]) return true;
    values[v] = 0;
  }
  return false;
}

// Distribution over the entries of `scores` at temperature rho; rho == 0
// puts all mass on the first maximiser.
std::vector<double> tempered(const std::vector<double>& scores, double rho) {
  std::vector<double> p(scores.size(), 0.0);
  const auto top = std::max_element(scores.begin(), scores.end());
  if (rho == 0.0) {
    p[static_cast<std::size_t>(top - scores.begin())] = 1.0;
    return p;
  }
  double z = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    p[k] = std::exp((scores[k] - *top) / rho);
    z += p[k];
  }
  for (double& q : p) q /= z;
  return p;
}

}  // namespace

InferenceResult enumerate(const LogPotentials& pot, const EnumerationQuery& query) {
  double eps_y = query.eps_y;
  double eps_h = query.eps_h;
  switch (query.kind) {
    case QueryKind::log_partition:
    case QueryKind::marginals:
      eps_y = eps_h = 1.0;
      break;
    case QueryKind::map:
      eps_y = eps_h = 0.0;
      break;
    case QueryKind::marginal_map:
      eps_y = 0.0;
      break;
    case QueryKind::annealed_joint:
      break;
  }
  if (!(eps_y >= 0.0) || !(eps_h >= 0.0) || !std::isfinite(eps_y) || !std::isfinite(eps_h))
    throw ConfigError("temperatures must be finite and >= 0");
  if (is_max_temperature(eps_y)) eps_y = 0.0;
  if (is_max_temperature(eps_h)) eps_h = 0.0;

  const int n = pot.num_vars();
  std::vector<int> ys, hs;
  double states = 1.0;
  for (int v = 0; v < n; ++v) {
    (pot.role[v] == VarRole::output ? ys : hs).push_back(v);
    states *= pot.cardinality[v];
  }
  if (states > static_cast<double>(query.max_states))
    throw InferenceRefused("state space of " + std::to_string(states) +
                           " exceeds the enumeration cap");
  std::size_t num_y = 1;
  for (int v : ys) num_y *= static_cast<std::size_t>(pot.cardinality[v]);

  std::vector<int> values(n, 0);
  std::vector<double> h_scores;
  auto score_hidden = [&] {
    h_scores.clear();
    for (int v : hs) values[v] = 0;
    do {
      h_scores.push_back(pot.energy(values));
    } while (advance(values, hs, pot));
  };

  // Annealed score per output configuration.
  std::vector<double> y_scores;
  y_scores.reserve(num_y);
  for (int v : ys) values[v] = 0;
  do {
    score_hidden();
    y_scores.push_back(soft_max(h_scores, eps_h));
  } while (advance(values, ys, pot));

  InferenceResult r;
  r.log_partition = soft_max(y_scores, eps_y);
  const std::vector<double> p_y = tempered(y_scores, eps_y);

  r.node_beliefs.resize(n);
  for (int v = 0; v < n; ++v) r.node_beliefs[v].assign(pot.cardinality[v], 0.0);
  r.edge_beliefs.resize(pot.pairwise.size());
  for (std::size_t f = 0; f < pot.pairwise.size(); ++f)
    r.edge_beliefs[f].assign(pot.pairwise[f].table.size(), 0.0);

  if (eps_y == 0.0) r.decoding.assign(n, -1);

  std::size_t yi = 0;
  for (int v : ys) values[v] = 0;
  do {
    const double py = p_y[yi++];
    if (py == 0.0) continue;
    score_hidden();
    const std::vector<double> p_h = tempered(h_scores, eps_h);
    if (eps_y == 0.0)
      for (int v : ys) r.decoding[v] = values[v];
    std::size_t hi = 0;
    for (int v : hs) values[v] = 0;
    do {
      const double p = py * p_h[hi++];
      if (p == 0.0) continue;
      if (eps_y == 0.0 && eps_h == 0.0)
        for (int v : hs) r.decoding[v] = values[v];
      for (int v = 0; v < n; ++v) r.node_beliefs[v][values[v]] += p;
      for (std::size_t f = 0; f < pot.pairwise.size(); ++f) {
        const auto& fac = pot.pairwise[f];
        r.edge_beliefs[f][values[fac.a] * pot.cardinality[fac.b] + values[fac.b]] += p;
      }
    } while (advance(values, hs, pot));
  } while (advance(values, ys, pot));

  return r;
}

}  // namespace mssvm
