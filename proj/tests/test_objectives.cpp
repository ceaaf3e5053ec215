#include <cmath>
#include <random>

#include "doctest.h"
#include "mssvm/objectives.hpp"
#include "test_support.hpp"

using namespace mssvm;
namespace mt = mssvm::testing;

namespace {

ObjectiveConfig exact(double eps_y, double eps_h, bool loss = true, double C = 1.0) {
  ObjectiveConfig cfg;
  cfg.C = C;
  cfg.temps = {eps_y, eps_h};
  cfg.loss_enabled = loss;
  cfg.backend = Backend::enumerate;
  return cfg;
}

double direct_objective(const mt::Problem& p, const WeightVector& w, double eps_y,
                        double eps_h, bool loss, double C) {
  double sum = 0.0;
  for (const Instance& inst : p.data) {
    const auto [plus, minus] = mt::direct_terms(p.graph, w, inst, eps_y, eps_h, loss);
    sum += plus - minus;
  }
  return 0.5 * w.squared_norm() + C * sum;
}

std::vector<double> finite_difference(const mt::Problem& p, const WeightVector& w,
                                      const ObjectiveConfig& cfg, double step) {
  std::vector<double> g(w.dim());
  std::vector<double> x(w.values().begin(), w.values().end());
  Objective obj(p.graph, p.data, cfg);
  for (int k = 0; k < w.dim(); ++k) {
    const double keep = x[k];
    x[k] = keep + step;
    const double up = obj.evaluate(WeightVector(x), false).objective;
    x[k] = keep - step;
    const double down = obj.evaluate(WeightVector(x), false).objective;
    x[k] = keep;
    g[k] = (up - down) / (2 * step);
  }
  return g;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, scale = 1.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff = std::max(diff, std::abs(a[k] - b[k]));
    scale = std::max(scale, std::abs(a[k]));
  }
  return diff / scale;
}

// Loss-augmented maximiser over labeled outputs is unique with margin.
bool unique_argmax(const mt::Problem& p, const WeightVector& w, double eps_h) {
  for (const Instance& inst : p.data) {
    auto pot = loss_augment(condition(p.graph, w, inst), inst, 1.0);
    std::vector<int> ys;
    for (int v = 0; v < pot.num_vars(); ++v)
      if (pot.role[v] == VarRole::output) ys.push_back(v);
    std::vector<int> y(pot.num_vars(), -1);
    for (int v : ys) y[v] = 0;
    std::vector<double> scores;
    while (true) {
      const auto reduced = clamp(pot, y);
      if (eps_h == 0.0) scores.push_back(mt::brute_force(reduced).max_energy);
      else scores.push_back(eps_h * mt::brute_force([&] {
        auto s = reduced;
        for (auto& u : s.unary) for (double& x : u) x /= eps_h;
        for (auto& f : s.pairwise) for (double& x : f.table) x /= eps_h;
        s.constant /= eps_h;
        return s;
      }()).log_z);
      int j = static_cast<int>(ys.size()) - 1;
      while (j >= 0 && ++y[ys[j]] == pot.cardinality[ys[j]]) y[ys[j--]] = 0;
      if (j < 0) break;
    }
    std::sort(scores.rbegin(), scores.rend());
    if (scores.size() > 1 && scores[0] - scores[1] < 1e-3) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("presets map to temperatures and loss flags") {
  CHECK(FamilyPreset::parse("mssvm").temps().eps_y == 0.0);
  CHECK(FamilyPreset::parse("mssvm").temps().eps_h == 1.0);
  CHECK(FamilyPreset::parse("lssvm").temps().eps_h == 0.0);
  CHECK_FALSE(FamilyPreset::parse("hcrf").loss_enabled());
  CHECK(FamilyPreset::parse("lal").loss_enabled());
  const auto e = FamilyPreset::parse("eps:0.25");
  CHECK(e.temps().eps_y == 0.25);
  CHECK(e.temps().eps_h == 0.25);
  CHECK(FamilyPreset::parse(e.name()).eps == 0.25);
  CHECK_THROWS_AS(FamilyPreset::parse("eps:1.5"), ConfigError);
  CHECK_THROWS_AS(FamilyPreset::parse("svm"), ConfigError);
  CHECK_THROWS_AS(parse_backend("gpu"), ConfigError);
  ObjectiveConfig bad;
  bad.C = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("zero weights: MSSVM objective is C * n * L") {
  std::mt19937_64 rng(21);
  auto p = mt::random_problem(rng, 3, 2, 1, 3, 4, false, false);
  const WeightVector w(p.graph.dim());
  for (Backend b : {Backend::enumerate, Backend::bp}) {
    auto cfg = ObjectiveConfig::from_preset(FamilyPreset::parse("mssvm"), 2.0);
    cfg.backend = b;
    CHECK(unified_objective(p.graph, w, p.data, cfg) == doctest::Approx(2.0 * 4 * 3));
  }
}

TEST_CASE("C = 0 leaves the regularizer") {
  std::mt19937_64 rng(22);
  auto p = mt::random_problem(rng, 2, 2, 1, 3, 3);
  const auto w = mt::random_weights(rng, p.graph.dim(), 1.0);
  const auto cfg = exact(0.0, 1.0, true, 0.0);
  CHECK(unified_objective(p.graph, w, p.data, cfg) == 0.5 * w.squared_norm());
  const auto g = unified_gradient(p.graph, w, p.data, cfg);
  for (int k = 0; k < w.dim(); ++k) CHECK(g[k] == w[k]);
}

TEST_CASE("presets agree with the direct definitions") {
  std::mt19937_64 rng(23);
  for (int k = 0; k < 30; ++k) {
    auto p = mt::random_problem(rng, mt::uniform_int(rng, 1, 3), mt::uniform_int(rng, 0, 3), 1, 3,
                                2, k % 2 == 1);
    const auto w = mt::random_weights(rng, p.graph.dim(), 1.0);
    for (const char* name : {"mssvm", "lssvm", "hcrf", "lal", "eps:0.3"}) {
      const auto preset = FamilyPreset::parse(name);
      auto cfg = ObjectiveConfig::from_preset(preset, 1.5);
      cfg.backend = Backend::enumerate;
      const double got = unified_objective(p.graph, w, p.data, cfg);
      const double want = direct_objective(p, w, preset.temps().eps_y, preset.temps().eps_h,
                                           preset.loss_enabled(), 1.5);
      CHECK(std::abs(got - want) < 1e-9 * (1 + std::abs(want)));
    }
  }
}

TEST_CASE("BP backend is exact on trees") {
  std::mt19937_64 rng(24);
  for (int k = 0; k < 20; ++k) {
    auto p = mt::random_problem(rng, 3, 3, 2, 3, 2);
    const auto w = mt::random_weights(rng, p.graph.dim(), 1.0);
    for (auto [ey, eh] : {std::pair{1.0, 1.0}, {0.0, 0.0}}) {
      auto cfg = exact(ey, eh);
      const auto want = Objective(p.graph, p.data, cfg).evaluate(w);
      cfg.backend = Backend::bp;
      const auto got = Objective(p.graph, p.data, cfg).evaluate(w);
      CHECK(std::abs(got.objective - want.objective) < 1e-8);
      CHECK(relative_error(want.gradient, got.gradient) < 1e-7);
    }
  }
}

TEST_CASE("small temperatures approach the LSSVM objective") {
  std::mt19937_64 rng(25);
  for (int k = 0; k < 10; ++k) {
    auto p = mt::random_problem(rng, 3, 3, 0, 2, 1);
    const auto w = mt::random_weights(rng, p.graph.dim(), 1.0);
    const double soft = unified_objective(p.graph, w, p.data, exact(1e-3, 1e-3));
    const double hard = unified_objective(p.graph, w, p.data, exact(0.0, 0.0));
    CHECK(std::abs(soft - hard) <= 1e-2 * (1 + std::abs(hard)));
  }
}

TEST_CASE("gradient matches finite differences") {
  std::mt19937_64 rng(26);
  const std::pair<double, double> temps[] = {{1, 1}, {0.5, 0.5}, {0.7, 0.4}};
  for (int k = 0; k < 15; ++k) {
    auto p = mt::random_problem(rng, 2, 2, 1, 3, 2, k % 3 == 0);
    const auto w = mt::random_weights(rng, p.graph.dim(), 1.0);
    const auto [ey, eh] = temps[k % 3];
    const auto cfg = exact(ey, eh);
    const auto g = unified_gradient(p.graph, w, p.data, cfg);
    CHECK(relative_error(g, finite_difference(p, w, cfg, 1e-5)) <= 1e-5);
  }
}

TEST_CASE("subgradient at eps_y = 0 is the gradient where the argmax is unique") {
  std::mt19937_64 rng(27);
  int checked = 0;
  for (int k = 0; k < 30 && checked < 8; ++k) {
    auto p = mt::random_problem(rng, 2, 2, 1, 3, 1);
    const auto w = mt::random_weights(rng, p.graph.dim(), 1.0);
    if (!unique_argmax(p, w, 1.0)) continue;
    const auto cfg = exact(0.0, 1.0);
    CHECK(relative_error(unified_gradient(p.graph, w, p.data, cfg),
                         finite_difference(p, w, cfg, 1e-6)) <= 1e-5);
    ++checked;
  }
  CHECK(checked >= 8);
}

TEST_CASE("HCRF gradient at w = 0") {
  // One output (card 3) tied to one hidden node (card 2).
  FeatureTemplate t;
  t.add_unary({0}, UnaryKind::indicator, 3);
  t.add_unary({1}, UnaryKind::indicator, 2);
  t.add_pairwise({0}, 3, 2);
  FactorGraph g({{NodeRole::output, 3}, {NodeRole::hidden, 2}}, {{0, 1}}, t);
  Instance inst{{1, -1}, {0, 1}, {{}, {}}};
  const auto grad = unified_gradient(g, WeightVector(g.dim()), std::span(&inst, 1),
                                     ObjectiveConfig::from_preset(FamilyPreset::parse("hcrf")));
  // y unary: uniform 1/3 minus point mass at 1.
  CHECK(grad[0] == doctest::Approx(1.0 / 3));
  CHECK(grad[1] == doctest::Approx(1.0 / 3 - 1));
  CHECK(grad[2] == doctest::Approx(1.0 / 3));
  // h unary: untouched by y, vanishes.
  CHECK(std::abs(grad[3]) < 1e-12);
  CHECK(std::abs(grad[4]) < 1e-12);
  // Pairwise: 1/6 everywhere minus 1/2 on row 1.
  for (int s = 0; s < 3; ++s)
    for (int u = 0; u < 2; ++u)
      CHECK(grad[5 + s * 2 + u] == doctest::Approx(1.0 / 6 - (s == 1 ? 0.5 : 0.0)));
}

TEST_CASE("each half of the objective is convex") {
  std::mt19937_64 rng(28);
  for (int k = 0; k < 20; ++k) {
    auto p = mt::random_problem(rng, 2, 2, 1, 3, 1);
    const auto a = mt::random_weights(rng, p.graph.dim(), 2.0);
    const auto b = mt::random_weights(rng, p.graph.dim(), 2.0);
    std::vector<double> mid(a.dim());
    for (int j = 0; j < a.dim(); ++j) mid[j] = 0.5 * (a[j] + b[j]);
    for (auto [ey, eh] : {std::pair{0.0, 1.0}, {0.0, 0.0}, {0.7, 0.4}}) {
      Objective obj(p.graph, p.data, exact(ey, eh));
      const auto ta = obj.instance_terms(a, 0);
      const auto tb = obj.instance_terms(b, 0);
      const auto tm = obj.instance_terms(WeightVector(mid), 0);
      CHECK(tm.first <= 0.5 * (ta.first + tb.first) + 1e-9);
      CHECK(tm.second <= 0.5 * (ta.second + tb.second) + 1e-9);
    }
  }
}

TEST_CASE("predict") {
  std::mt19937_64 rng(29);
  SUBCASE("no hidden nodes: MAP for any eps_h") {
    auto p = mt::random_problem(rng, 4, 0, 1, 3, 1, false, false);
    const auto w = mt::random_weights(rng, p.graph.dim(), 1.0);
    const auto map = predict(p.graph, w, p.data[0], 0.0, Backend::enumerate);
    for (double eps : {0.0, 0.3, 1.0}) {
      CHECK(predict(p.graph, w, p.data[0], eps, Backend::enumerate) == map);
      CHECK(predict(p.graph, w, p.data[0], eps) == map);
    }
  }
  SUBCASE("marginal and joint MAP differ") {
    // y in {0,1}, h in {0,1,2}. y=0 has one strong h (score 2); y=1 has
    // three moderate ones (1.5 each): joint MAP picks 0, marginal MAP 1.
    FeatureTemplate t;
    t.add_pairwise({0}, 2, 3);
    FactorGraph g({{NodeRole::output, 2}, {NodeRole::hidden, 3}}, {{0, 1}}, t);
    const WeightVector w(std::vector<double>{2.0, -5.0, -5.0, 1.5, 1.5, 1.5});
    Instance inst{{0, -1}, {0, 1}, {{}, {}}};
    for (Backend b : {Backend::enumerate, Backend::bp}) {
      CHECK(predict(g, w, inst, 1.0, b)[0] == 1);
      CHECK(predict(g, w, inst, 1e-8, b)[0] == 0);
      CHECK(predict(g, w, inst, 0.0, b)[0] == 0);
    }
  }
  SUBCASE("single unary-only output") {
    FeatureTemplate t;
    t.add_unary({0}, UnaryKind::indicator, 4);
    FactorGraph g({{NodeRole::output, 4}}, {}, t);
    const auto w = mt::random_weights(rng, 4, 1.0);
    Instance inst{{0}, {0}, {{}}};
    const auto vals = w.values();
    const int arg = static_cast<int>(std::max_element(vals.begin(), vals.end()) - vals.begin());
    CHECK(predict(g, w, inst, 1.0)[0] == arg);
  }
}

TEST_CASE("surrogate minus the loss of the prediction is non-negative") {
  std::mt19937_64 rng(30);
  SUBCASE("w = 0 closed form") {
    auto p = mt::random_problem(rng, 3, 1, 0, 2, 1, false, false);
    const WeightVector w(p.graph.dim());
    // Outputs all binary: eps_y log sum_y exp(Delta/eps_y) = eps_y * L * log(1 + e^{1/eps_y});
    // the predictor takes label 0 everywhere.
    const auto& inst = p.data[0];
    const double ey = 0.5;
    int L = 0, d = 0;
    for (int i = 0; i < p.graph.num_nodes(); ++i)
      if (inst.is_labeled(i)) {
        ++L;
        d += inst.label[i] != 0;
      }
    (void)L;
    double want = 0.0;
    for (int i = 0; i < p.graph.num_nodes(); ++i)
      if (inst.is_labeled(i)) {
        const int c = p.graph.node(i).cardinality;
        want += ey * std::log(1 + (c - 1) * std::exp(1 / ey));
      }
    CHECK(lemma1_gap(p.graph, w, inst, {ey, 1.0}) == doctest::Approx(want - d));
  }
  SUBCASE("random draws") {
    for (int k = 0; k < 200; ++k) {
      auto p = mt::random_problem(rng, mt::uniform_int(rng, 1, 3), mt::uniform_int(rng, 0, 2), 1,
                                  3, 1, k % 2 == 0);
      const auto w = mt::random_weights(rng, p.graph.dim(), 2.0);
      const TemperaturePair temps{k % 4 == 0 ? 1e-3 : 0.0, k % 3 == 0 ? 0.0 : 1.0};
      CHECK(lemma1_gap(p.graph, w, p.data[0], temps) >= -1e-9);
    }
  }
}

TEST_CASE("thread count does not change results") {
  std::mt19937_64 rng(31);
  auto p = mt::random_problem(rng, 3, 3, 1, 3, 12, true);
  const auto w = mt::random_weights(rng, p.graph.dim(), 1.0);
  auto cfg = ObjectiveConfig::from_preset(FamilyPreset::parse("mssvm"));
  const auto one = Objective(p.graph, p.data, cfg).evaluate(w);
  cfg.threads = 4;
  const auto four = Objective(p.graph, p.data, cfg).evaluate(w);
  CHECK(one.objective == four.objective);
  CHECK(one.gradient == four.gradient);
}

TEST_CASE("objective input errors") {
  std::mt19937_64 rng(32);
  auto p = mt::random_problem(rng, 2, 1, 0, 3, 1);
  CHECK_THROWS_AS(unified_objective(p.graph, WeightVector(p.graph.dim() + 1), p.data, exact(0, 1)),
                  DimensionError);
  CHECK_THROWS_AS(unified_objective(p.graph, WeightVector(p.graph.dim()), {}, exact(0, 1)),
                  ConfigError);
  auto cfg = exact(0, 1);
  cfg.max_states = 2;
  CHECK_THROWS_AS(unified_objective(p.graph, WeightVector(p.graph.dim()), p.data, cfg),
                  InferenceRefused);
}
