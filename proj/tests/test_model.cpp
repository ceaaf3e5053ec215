#include <random>

#include "doctest.h"
#include "mssvm/model.hpp"
#include "test_support.hpp"

using namespace mssvm;
using mssvm::testing::uniform;
using mssvm::testing::uniform_int;

namespace {

// Observed x0 -- output y1 -- hidden h2 -- output y3, plus x0 -- h2.
// Untied indicator features everywhere.
FactorGraph small_graph(int card = 4) {
  std::vector<Node> nodes = {{NodeRole::observed, card},
                             {NodeRole::output, card},
                             {NodeRole::hidden, card},
                             {NodeRole::output, card}};
  std::vector<Edge> edges = {{0, 1}, {1, 2}, {2, 3}, {0, 2}};
  FeatureTemplate t;
  for (int i = 0; i < 4; ++i) t.add_unary({i}, UnaryKind::indicator, card);
  for (int e = 0; e < 4; ++e) t.add_pairwise({e}, card, card);
  return FactorGraph(nodes, edges, t);
}

Instance small_instance(int x0, int y1, int y3) {
  Instance inst;
  inst.label = {x0, y1, -1, y3};
  inst.hidden = {0, 0, 1, 0};
  inst.features.assign(4, {});
  return inst;
}

WeightVector random_weights(std::mt19937_64& rng, int dim) {
  std::vector<double> w(dim);
  for (double& v : w) v = uniform(rng, -2.0, 2.0);
  return WeightVector(w);
}

// Direct summation of template terms; independent of feature_vector.
double template_score(const FactorGraph& g, const Instance& inst, const Assignment& cfg,
                      const WeightVector& w) {
  auto val = [&](int i) {
    return g.node(i).role == NodeRole::observed ? inst.label[i] : cfg[i];
  };
  double s = 0.0;
  for (const auto& grp : g.feature_template().unary())
    for (int i : grp.nodes) {
      if (grp.kind == UnaryKind::indicator) {
        s += w[grp.offset + val(i)];
      } else if (g.node(i).role != NodeRole::observed) {
        for (int d = 0; d < grp.obs_dim; ++d)
          s += w[grp.offset + val(i) * grp.obs_dim + d] * inst.features[i][d];
      }
    }
  for (const auto& grp : g.feature_template().pairwise())
    for (int e : grp.edges)
      s += w[grp.offset + val(g.edge(e).a) * grp.card_b + val(g.edge(e).b)];
  return s;
}

}  // namespace

TEST_CASE("graph invariants are enforced") {
  FeatureTemplate t;
  t.add_unary({0}, UnaryKind::indicator, 2);
  CHECK_THROWS_AS(FactorGraph({{NodeRole::output, 1}}, {}, t), InvalidGraph);
  CHECK_THROWS_AS(FactorGraph({{NodeRole::output, 2}}, {{0, 0}}, t), InvalidGraph);
  CHECK_THROWS_AS(FactorGraph({{NodeRole::output, 2}, {NodeRole::output, 2}},
                              {{0, 1}, {1, 0}}, t),
                  InvalidGraph);
  FeatureTemplate tied;
  tied.add_unary({0, 1}, UnaryKind::indicator, 2);
  CHECK_THROWS_AS(FactorGraph({{NodeRole::output, 2}, {NodeRole::output, 3}}, {}, tied),
                  InvalidGraph);
  CHECK_NOTHROW(small_graph());
}

TEST_CASE("instances must label or hide every non-observed node") {
  const FactorGraph g = small_graph();
  CHECK_NOTHROW(validate_instance(g, small_instance(1, 2, 3)));
  Instance bad = small_instance(1, 2, 3);
  bad.hidden[2] = 0;
  CHECK_THROWS_AS(validate_instance(g, bad), InvalidAssignment);
  bad = small_instance(1, 2, 3);
  bad.hidden[1] = 1;  // both labeled and hidden
  CHECK_THROWS_AS(validate_instance(g, bad), InvalidAssignment);
  bad = small_instance(1, 4, 3);
  CHECK_THROWS_AS(validate_instance(g, bad), InvalidAssignment);
}

TEST_CASE("feature_vector on an indicator template") {
  const FactorGraph g = small_graph();
  const Instance inst = small_instance(1, 2, 3);
  const Assignment cfg = {-1, 2, 0, 3};
  const SparseVector phi = feature_vector(g, inst, cfg);
  // 4 unary groups + 4 pairwise groups touched, one indicator each.
  REQUIRE(phi.entries().size() == 8);
  for (const auto& [k, v] : phi.entries()) CHECK(v == 1.0);

  Assignment missing = {-1, 2, -1, 3};
  CHECK_THROWS_AS(feature_vector(g, inst, missing), InvalidAssignment);
  Assignment out_of_range = {-1, 2, 4, 3};
  CHECK_THROWS_AS(feature_vector(g, inst, out_of_range), InvalidAssignment);
}

TEST_CASE("observation features vanish for a zero observation") {
  FeatureTemplate t;
  t.add_unary({0, 1}, UnaryKind::observation_product, 3, 2);
  t.add_pairwise({0}, 3, 3);
  const FactorGraph g({{NodeRole::output, 3}, {NodeRole::output, 3}}, {{0, 1}}, t);
  Instance inst;
  inst.label = {1, 2};
  inst.hidden = {0, 0};
  inst.features = {{0.0, 0.0}, {0.5, -1.0}};
  const auto dense = feature_vector(g, inst, {1, 2}).to_dense(g.dim());
  // Node 0 contributes nothing; node 1 contributes e_2 (x) (0.5, -1).
  CHECK(dense[2 * 2 + 0] == 0.5);
  CHECK(dense[2 * 2 + 1] == -1.0);
  CHECK(dense[1 * 2 + 0] == 0.0);
  CHECK(dense[1 * 2 + 1] == 0.0);
}

TEST_CASE("w . phi matches direct summation of template terms") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const FactorGraph g = small_graph(uniform_int(rng, 2, 5));
    const int k = g.node(0).cardinality;
    const Instance inst = small_instance(uniform_int(rng, 0, k - 1), uniform_int(rng, 0, k - 1),
                                         uniform_int(rng, 0, k - 1));
    const WeightVector w = random_weights(rng, g.dim());
    const Assignment cfg = {-1, uniform_int(rng, 0, k - 1), uniform_int(rng, 0, k - 1),
                            uniform_int(rng, 0, k - 1)};
    CHECK(feature_vector(g, inst, cfg).dot(w.values()) ==
          doctest::Approx(template_score(g, inst, cfg, w)).epsilon(1e-12));
  }
}

TEST_CASE("condition with zero weights gives zero potentials") {
  const FactorGraph g = small_graph();
  const LogPotentials pot = condition(g, WeightVector(g.dim()), small_instance(0, 1, 2));
  CHECK(pot.num_vars() == 3);
  CHECK(pot.constant == 0.0);
  for (const auto& u : pot.unary)
    for (double v : u) CHECK(v == 0.0);
  for (const auto& f : pot.pairwise)
    for (double v : f.table) CHECK(v == 0.0);
}

TEST_CASE("condition places a single pairwise weight") {
  FeatureTemplate t;
  t.add_pairwise({0}, 4, 4);
  const FactorGraph g({{NodeRole::output, 4}, {NodeRole::hidden, 4}}, {{0, 1}}, t);
  std::vector<double> w(g.dim(), 0.0);
  w[2 * 4 + 3] = 1.0;
  Instance inst{{1, -1}, {0, 1}, {{}, {}}};
  const LogPotentials pot = condition(g, WeightVector(w), inst);
  REQUIRE(pot.pairwise.size() == 1);
  for (int k = 0; k < 16; ++k) CHECK(pot.pairwise[0].table[k] == (k == 11 ? 1.0 : 0.0));
}

TEST_CASE("condition rejects mismatched weight dimension") {
  const FactorGraph g = small_graph();
  CHECK_THROWS_AS(condition(g, WeightVector(3), small_instance(0, 0, 0)), DimensionError);
}

TEST_CASE("conditioned energy equals w . phi on random assignments") {
  std::mt19937_64 rng(5);
  // Five non-observed nodes of cardinality 4 around two observed nodes.
  std::vector<Node> nodes = {{NodeRole::observed, 4}, {NodeRole::output, 4},
                             {NodeRole::hidden, 4},   {NodeRole::output, 4},
                             {NodeRole::hidden, 4},   {NodeRole::output, 4},
                             {NodeRole::observed, 4}};
  std::vector<Edge> edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6},
                             {0, 6}, {2, 6}, {1, 5}};
  FeatureTemplate t;
  for (int i = 0; i < 7; ++i) t.add_unary({i}, UnaryKind::indicator, 4);
  for (int e = 0; e < 9; ++e) t.add_pairwise({e}, 4, 4);
  const FactorGraph g(nodes, edges, t);
  for (int trial = 0; trial < 5; ++trial) {
    Instance inst{{uniform_int(rng, 0, 3), uniform_int(rng, 0, 3), -1, uniform_int(rng, 0, 3), -1,
                   uniform_int(rng, 0, 3), uniform_int(rng, 0, 3)},
                  {0, 0, 1, 0, 1, 0, 0},
                  std::vector<std::vector<double>>(7)};
    const WeightVector w = random_weights(rng, g.dim());
    const LogPotentials pot = condition(g, w, inst);
    for (int k = 0; k < 50; ++k) {
      Assignment cfg(7, -1);
      std::vector<int> vars(pot.num_vars());
      for (int v = 0; v < pot.num_vars(); ++v) {
        vars[v] = uniform_int(rng, 0, 3);
        cfg[pot.node[v]] = vars[v];
      }
      CHECK(std::abs(pot.energy(vars) - feature_vector(g, inst, cfg).dot(w.values())) < 1e-10);
    }
  }
}

TEST_CASE("tied nodes with identical observations share unary tables") {
  FeatureTemplate t;
  t.add_unary({0, 1, 2}, UnaryKind::observation_product, 3, 2);
  const FactorGraph g({{NodeRole::output, 3}, {NodeRole::output, 3}, {NodeRole::hidden, 3}}, {},
                      t);
  std::mt19937_64 rng(3);
  const WeightVector w = random_weights(rng, g.dim());
  Instance inst{{0, 2, -1}, {0, 0, 1}, {{0.3, 1.0}, {0.3, 1.0}, {-2.0, 1.0}}};
  const LogPotentials pot = condition(g, w, inst);
  CHECK(pot.unary[0] == pot.unary[1]);
  CHECK(pot.unary[0] != pot.unary[2]);
}

TEST_CASE("clamp folds fixed variables into the rest") {
  std::mt19937_64 rng(8);
  const auto pot = mssvm::testing::random_potentials(rng, {3, 2, 4, 3},
                                                      {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  const std::vector<int> fixed = {-1, 1, -1, 2};
  const LogPotentials reduced = clamp(pot, fixed);
  REQUIRE(reduced.num_vars() == 2);
  for (int a = 0; a < 3; ++a)
    for (int c = 0; c < 4; ++c) {
      const std::vector<int> full = {a, 1, c, 2};
      const std::vector<int> part = {a, c};
      CHECK(reduced.energy(part) == doctest::Approx(pot.energy(full)).epsilon(1e-12));
    }
}

TEST_CASE("hamming_loss") {
  const std::vector<int> nodes = {0, 1, 2, 3};
  CHECK(hamming_loss({0, 1, 2, 3}, {0, 1, 2, 3}, nodes) == 0);
  CHECK(hamming_loss({0, 1, 2, 3}, {1, 2, 3, 0}, nodes) == 4);
  CHECK(hamming_loss({0, 1, 2, 3}, {0, 1, 0, 3}, nodes) == 1);
  CHECK_THROWS_AS(hamming_loss({0, 1, -1, 3}, {0, 1, 0, 3}, nodes), InvalidAssignment);
  CHECK_THROWS_AS(hamming_loss({0, 1}, {0, 1, 0, 3}, nodes), InvalidAssignment);
}

TEST_CASE("hamming_loss is a metric on random triples") {
  std::mt19937_64 rng(21);
  const std::vector<int> nodes = {0, 1, 2, 3, 4, 5};
  auto draw = [&] {
    Assignment a(6);
    for (int& v : a) v = uniform_int(rng, 0, 2);
    return a;
  };
  for (int k = 0; k < 500; ++k) {
    const Assignment a = draw(), b = draw(), c = draw();
    CHECK(hamming_loss(a, a, nodes) == 0);
    CHECK(hamming_loss(a, b, nodes) == hamming_loss(b, a, nodes));
    CHECK(hamming_loss(a, c, nodes) <= hamming_loss(a, b, nodes) + hamming_loss(b, c, nodes));
    if (a != b) CHECK(hamming_loss(a, b, nodes) > 0);
  }
}

TEST_CASE("expected_features of a point mass equals phi") {
  std::mt19937_64 rng(4);
  const FactorGraph g = small_graph(3);
  const Instance inst = small_instance(2, 0, 1);
  const Assignment cfg = {-1, 0, 2, 1};
  Marginals m;
  m.node.assign(4, {});
  m.edge.assign(4, {});
  for (int i = 1; i < 4; ++i) {
    m.node[i].assign(3, 0.0);
    m.node[i][cfg[i]] = 1.0;
  }
  for (int e = 0; e < 4; ++e) {
    const Edge& ed = g.edge(e);
    if (g.node(ed.a).role == NodeRole::observed) continue;
    m.edge[e].assign(9, 0.0);
    m.edge[e][cfg[ed.a] * 3 + cfg[ed.b]] = 1.0;
  }
  CHECK(expected_features(g, inst, m) == feature_vector(g, inst, cfg).to_dense(g.dim()));
}
