#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mssvm/training.hpp"
#include "test_support.hpp"

using namespace mssvm;
namespace mt = mssvm::testing;

namespace {

ObjectiveConfig exact_preset(const char* name, double C = 1.0) {
  auto cfg = ObjectiveConfig::from_preset(FamilyPreset::parse(name), C);
  cfg.backend = Backend::enumerate;
  return cfg;
}

TrainingConfig sgd(int iters, double eta) {
  TrainingConfig cfg;
  cfg.iterations = iters;
  cfg.learning_rate = eta;
  return cfg;
}

double norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS_AS(sgd(10, 1.0).validate(), ConfigError);
  CHECK_THROWS_AS(sgd(0, 0.1).validate(), ConfigError);
  CHECK_NOTHROW(sgd(1, 0.5).validate());
  CHECK(parse_trainer("cccp") == Trainer::cccp);
  CHECK_THROWS_AS(parse_trainer("adam"), ConfigError);
}

TEST_CASE("C = 0 keeps w at zero") {
  std::mt19937_64 rng(41);
  auto p = mt::random_problem(rng, 2, 2, 1, 3, 3);
  for (Trainer t : {Trainer::sgd, Trainer::cccp}) {
    auto cfg = sgd(20, 0.1);
    cfg.trainer = t;
    const auto r = train(p.graph, p.data, cfg, exact_preset("mssvm", 0.0));
    CHECK(r.weights.squared_norm() == 0.0);
    CHECK(r.trace.rows.back().inference_calls == 0);
  }
}

TEST_CASE("C = 0 shrinks geometrically") {
  std::mt19937_64 rng(42);
  auto p = mt::random_problem(rng, 2, 1, 0, 3, 1);
  auto cfg = sgd(30, 0.1);
  const auto w0 = mt::random_weights(rng, p.graph.dim(), 1.0);
  cfg.initial_weights.assign(w0.values().begin(), w0.values().end());
  cfg.track_error = false;
  const auto r = sgd_train(p.graph, p.data, cfg, exact_preset("mssvm", 0.0));
  REQUIRE(r.trace.rows.size() == 31);
  for (int t = 1; t <= 30; ++t) {
    const double ratio = r.trace.rows[t].grad_norm / r.trace.rows[t - 1].grad_norm;
    CHECK(ratio == doctest::Approx(0.9).epsilon(1e-12));
  }
  CHECK(norm(r.weights.values()) == doctest::Approx(std::pow(0.9, 30) * norm(w0.values())));
}

TEST_CASE("one step follows the update rule exactly") {
  std::mt19937_64 rng(43);
  auto p = mt::random_problem(rng, 3, 2, 1, 3, 4);
  const auto w0 = mt::random_weights(rng, p.graph.dim(), 0.5);
  const auto obj = exact_preset("mssvm", 1.3);
  auto cfg = sgd(1, 0.05);
  cfg.initial_weights.assign(w0.values().begin(), w0.values().end());
  const auto r = sgd_train(p.graph, p.data, cfg, obj);
  // Data gradient by hand: full gradient minus w.
  const auto g = unified_gradient(p.graph, w0, p.data, obj);
  for (int k = 0; k < w0.dim(); ++k) {
    const double data_grad = g[k] - w0[k];
    CHECK(r.weights[k] == doctest::Approx((1 - 0.05) * w0[k] - 0.05 * data_grad).epsilon(1e-12));
  }
}

TEST_CASE("trace rows") {
  std::mt19937_64 rng(44);
  auto p = mt::random_problem(rng, 2, 2, 1, 3, 2);
  const auto r = sgd_train(p.graph, p.data, sgd(5, 0.1), exact_preset("lssvm"));
  REQUIRE(r.trace.rows.size() == 6);
  for (int t = 0; t <= 5; ++t) CHECK(r.trace.rows[t].iter == t);
  // Two inference calls (loss-augmented and clamped) per instance.
  CHECK(r.trace.rows[0].inference_calls == 4);
  std::ostringstream csv;
  r.trace.write_csv(csv);
  CHECK(csv.str().rfind("iter,objective,grad_norm,train_err,wall_ms,inference_calls\n", 0) == 0);
  int lines = 0;
  for (char c : csv.str()) lines += c == '\n';
  CHECK(lines == 7);
}

TEST_CASE("separable single instance reaches zero training error") {
  std::mt19937_64 rng(45);
  for (int k = 0; k < 5; ++k) {
    auto p = mt::random_problem(rng, 3, 2, 1, 3, 1);
    const auto r = sgd_train(p.graph, p.data, sgd(100, 0.02), exact_preset("mssvm"));
    CHECK(r.trace.rows.back().train_err == 0.0);
  }
}

TEST_CASE("CCCP objective does not increase") {
  std::mt19937_64 rng(46);
  for (int k = 0; k < 10; ++k) {
    auto p = mt::random_problem(rng, 2, 2, 1, 3, 3, k % 2 == 0);
    auto cfg = sgd(8, 0.05);
    cfg.trainer = Trainer::cccp;
    cfg.max_inner = 100;
    for (const char* fam : {"mssvm", "lssvm"}) {
      const auto r = cccp_train(p.graph, p.data, cfg, exact_preset(fam));
      REQUIRE_FALSE(r.trace.aborted);
      for (std::size_t t = 1; t < r.trace.rows.size(); ++t)
        CHECK(r.trace.rows[t].objective <= r.trace.rows[t - 1].objective + 1e-6);
    }
  }
}

TEST_CASE("CCCP without hidden nodes is stationary after one outer step") {
  std::mt19937_64 rng(47);
  auto p = mt::random_problem(rng, 3, 0, 1, 3, 3, false, false);
  auto cfg = sgd(3, 0.1);
  cfg.trainer = Trainer::cccp;
  cfg.max_inner = 2000;
  cfg.inner_tolerance = 1e-9;
  const auto r = cccp_train(p.graph, p.data, cfg, exact_preset("hcrf"));
  REQUIRE(r.trace.rows.size() == 4);
  CHECK(r.trace.rows[2].objective == doctest::Approx(r.trace.rows[1].objective).epsilon(1e-9));
  CHECK(r.trace.rows[3].objective == doctest::Approx(r.trace.rows[1].objective).epsilon(1e-9));
  CHECK(r.trace.rows[1].grad_norm < 1e-6);
}

TEST_CASE("training is deterministic") {
  std::mt19937_64 rng(48);
  auto p = mt::random_problem(rng, 3, 3, 1, 3, 6, true);
  auto obj = ObjectiveConfig::from_preset(FamilyPreset::parse("hcrf"));
  for (Trainer t : {Trainer::sgd, Trainer::cccp}) {
    auto cfg = sgd(5, 0.05);
    cfg.trainer = t;
    cfg.max_inner = 20;
    const auto a = train(p.graph, p.data, cfg, obj);
    obj.threads = 3;
    const auto b = train(p.graph, p.data, cfg, obj);
    obj.threads = 1;
    CHECK(std::equal(a.weights.values().begin(), a.weights.values().end(),
                     b.weights.values().begin()));
    REQUIRE(a.trace.rows.size() == b.trace.rows.size());
    for (std::size_t k = 0; k < a.trace.rows.size(); ++k) {
      CHECK(a.trace.rows[k].objective == b.trace.rows[k].objective);
      CHECK(a.trace.rows[k].train_err == b.trace.rows[k].train_err);
    }
  }
}

TEST_CASE("non-finite values abort with a diagnostic") {
  // One output with a huge real-valued observation: the first step sends
  // the energies past the double range.
  FeatureTemplate t;
  t.add_unary({0}, UnaryKind::observation_product, 2, 1);
  FactorGraph g({{NodeRole::output, 2}}, {}, t);
  Instance inst{{0}, {0}, {{1e300}}};
  const auto r = sgd_train(g, std::span(&inst, 1), sgd(10, 0.5), exact_preset("hcrf"));
  CHECK(r.trace.aborted);
  CHECK_FALSE(r.trace.diagnostic.empty());
  CHECK(r.trace.rows.size() < 11);
  for (double x : r.weights.values()) CHECK(std::isfinite(x));
}
