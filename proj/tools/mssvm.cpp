// mssvm: generate data, train, evaluate and sweep from the command line.
//
// Every command writes into --out and stamps its outputs with a config hash.
// Failures print one JSON line {"error": kind, "message": ...} on stderr and
// exit nonzero.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mssvm/experiment.hpp"
#include "mssvm/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mssvm;

namespace {

// Data generation flags shared by simulate and sweep.
struct DataFlags {
  std::string topology = "chain";
  GeneratorConfig gen;
  std::string sampler = "auto";
  ImageConfig image;
  std::string truth_path;

  void add(CLI::App& app) {
    app.add_option("--topology", topology, "chain | grid | image")
        ->check(CLI::IsMember({"chain", "grid", "image"}));
    app.add_option("--positions", gen.positions, "chain length P");
    app.add_option("--rows", gen.rows, "grid rows");
    app.add_option("--cols", gen.cols, "grid columns");
    app.add_option("--cardinality", gen.cardinality, "states per non-observed node");
    app.add_option("--sigma-x", gen.sigma.x);
    app.add_option("--sigma-y", gen.sigma.y);
    app.add_option("--sigma-h", gen.sigma.h);
    app.add_option("--sigma-xy", gen.sigma.xy);
    app.add_option("--sigma-xh", gen.sigma.xh);
    app.add_option("--sigma-yh", gen.sigma.yh);
    app.add_option("--n-train", gen.n_train);
    app.add_option("--n-test", gen.n_test);
    app.add_option("--seed", gen.seed);
    app.add_option("--sampler", sampler, "auto | exact | gibbs")
        ->check(CLI::IsMember({"auto", "exact", "gibbs"}));
    app.add_option("--burn-in", gen.gibbs.burn_in, "Gibbs burn-in sweeps");
    app.add_option("--thin", gen.gibbs.thin, "Gibbs sweeps between samples");
    app.add_option("--truth", truth_path, "label PGM for the image study")->check(CLI::ExistingFile);
    app.add_option("--labels", image.labels, "labels in the truth image");
    app.add_option("--noise", image.noise_sigma, "observation noise standard deviation");
    app.add_option("--missing", image.missing_fraction, "fraction of hidden training pixels");
    app.add_option("--test-missing", image.test_missing_fraction);
  }

  LabelImage truth() const {
    if (truth_path.empty()) return default_truth_image();
    std::ifstream in(truth_path, std::ios::binary);
    if (!in) throw IoError("cannot open " + truth_path);
    return read_label_pgm(in, image.labels);
  }

  // Resolves the flags into a data source. Image size follows the truth.
  DataSource source(const LabelImage& t) const {
    if (topology == "image") {
      ImageConfig c = image;
      c.height = t.height;
      c.width = t.width;
      c.labels = t.labels;
      c.n_train = gen.n_train;
      c.n_test = gen.n_test;
      c.seed = gen.seed;
      c.validate();
      return c;
    }
    GeneratorConfig c = gen;
    c.topology = topology == "grid" ? Topology::grid : Topology::hidden_chain;
    c.sampler = sampler == "exact"   ? SamplerKind::exact
                : sampler == "gibbs" ? SamplerKind::gibbs
                                     : SamplerKind::automatic;
    c.validate();
    return c;
  }
};

// Family and trainer flags shared by train and sweep.
struct TrainFlags {
  std::string family = "mssvm";
  std::optional<double> eps_y, eps_h;
  std::string trainer = "sgd";
  std::string backend = "bp";
  TrainingConfig training;
  double C = 1.0;
  int threads = 1;
  bool cold_start = false;
  BpOptions bp;

  void add(CLI::App& app, bool with_family) {
    if (with_family) {
      app.add_option("--family", family, "mssvm | lssvm | hcrf | lal | eps:<v>");
      app.add_option("--eps-y", eps_y, "override the preset's eps_y");
      app.add_option("--eps-h", eps_h, "override the preset's eps_h");
    }
    app.add_option("--trainer", trainer, "sgd | cccp")->check(CLI::IsMember({"sgd", "cccp"}));
    app.add_option("--lr", training.learning_rate, "learning rate eta");
    app.add_option("--iters", training.iterations, "iterations (outer for cccp)");
    app.add_option("--max-inner", training.max_inner, "cccp inner step cap");
    app.add_option("--inner-tol", training.inner_tolerance, "cccp inner tolerance, 0 = auto");
    app.add_flag("--decay", training.decay, "eta / sqrt(t + 1)");
    app.add_option("--C", C, "regularization weight");
    app.add_option("--backend", backend, "bp | enumerate")
        ->check(CLI::IsMember({"bp", "enumerate"}));
    app.add_option("--threads", threads, "worker threads");
    app.add_flag("--cold-start", cold_start, "reset BP messages on every call");
    app.add_option("--bp-iters", bp.max_iterations, "BP sweep cap");
    app.add_option("--bp-tol", bp.tolerance, "BP message convergence tolerance");
    app.add_option("--bp-damping", bp.damping, "BP message damping");
  }

  ObjectiveConfig base() const {
    ObjectiveConfig o;
    o.C = C;
    o.backend = parse_backend(backend);
    o.bp = bp;
    o.bp.warm_start = !cold_start;
    o.threads = threads;
    return o;
  }

  MethodSpec method(const std::string& name) const {
    MethodSpec m;
    m.family = FamilyPreset::parse(name);
    if (eps_y || eps_h) {
      TemperaturePair t = m.family.temps();
      if (eps_y) t.eps_y = *eps_y;
      if (eps_h) t.eps_h = *eps_h;
      t.validate();
      m.temps = t;
    }
    m.training = training;
    m.training.trainer = parse_trainer(trainer);
    m.training.validate();
    return m;
  }
};

json source_json(const DataSource& s) {
  return std::visit([](const auto& c) { return to_json(c); }, s);
}

std::string hashed_csv(const std::string& hash, const std::string& body) {
  return "# config_hash=" + hash + "\n" + body;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

// ---- simulate ---------------------------------------------------------------

void cmd_simulate(const DataFlags& flags, const fs::path& out) {
  const LabelImage t = flags.truth();
  const DataSource src = flags.source(t);
  const TrialData d = make_trial_data(src, t, 0);
  ensure_directory(out);
  const json config = {{"data", source_json(src)}};
  const std::string hash = config_hash(config);
  save_graph(out / "graph.json", d.graph);
  write_dataset(out / "train.jsonl", d.graph, d.train);
  write_dataset(out / "test.jsonl", d.graph, d.test);
  if (flags.topology == "image") {
    std::ostringstream pgm;
    write_label_pgm(pgm, t);
    write_text(out / "truth.pgm", pgm.str());
  }
  const json manifest = {{"command", "simulate"},
                         {"schema_version", kSchemaVersion},
                         {"config", config},
                         {"config_hash", hash},
                         {"seed", config["data"]["seed"]},
                         {"n_train", d.train.size()},
                         {"n_test", d.test.size()},
                         {"nodes", d.graph.num_nodes()},
                         {"dim", d.graph.dim()}};
  write_json(out / "manifest.json", manifest);
  std::cout << json{{"config_hash", hash}, {"out", out.string()}}.dump() << "\n";
}

// ---- train -----------------------------------------------------------------

std::string data_hash(const fs::path& dir) {
  const fs::path m = dir / "manifest.json";
  if (!fs::exists(m)) return "";
  return read_json(m).value("config_hash", "");
}

void cmd_train(const TrainFlags& flags, const fs::path& data, const fs::path& out) {
  const FactorGraph graph = load_graph(data / "graph.json");
  const std::vector<Instance> train = read_dataset(data / "train.jsonl", graph);
  if (train.empty()) throw ConfigError("training set is empty");
  const MethodSpec m = flags.method(flags.family);
  const ObjectiveConfig obj = m.objective(flags.base());
  const json config = {{"data_hash", data_hash(data)},
                       {"family", m.family.name()},
                       {"objective", to_json(obj)},
                       {"training", to_json(m.training)}};
  const std::string hash = config_hash(config);
  ensure_directory(out);

  const TrainingResult r = mssvm::train(graph, train, m.training, obj);
  save_model(out / "model.json",
             Model{graph, r.weights, obj.temps, m.family.name(), obj.loss_enabled, hash});
  std::ostringstream csv;
  r.trace.write_csv(csv);
  write_text(out / "trace.csv", hashed_csv(hash, csv.str()));
  json manifest = {{"command", "train"},
                   {"schema_version", kSchemaVersion},
                   {"config", config},
                   {"config_hash", hash},
                   {"aborted", r.trace.aborted},
                   {"rows", r.trace.rows.size()}};
  if (r.trace.aborted) manifest["diagnostic"] = r.trace.diagnostic;
  write_json(out / "manifest.json", manifest);
  if (r.trace.aborted) throw NumericalError(r.trace.diagnostic);
  const TraceRow& last = r.trace.rows.back();
  std::cout << json{{"config_hash", hash},
                    {"objective", last.objective},
                    {"train_err", last.train_err},
                    {"out", out.string()}}
                   .dump()
            << "\n";
}

// ---- eval ------------------------------------------------------------------

void cmd_eval(const fs::path& model_path, const fs::path& data, const std::string& split_name,
              std::optional<double> eps_h, const std::string& backend, int threads,
              const std::string& out) {
  const Model model = load_model(model_path);
  const FactorGraph graph = load_graph(data / "graph.json");
  if (graph_to_json(graph) != graph_to_json(model.graph))
    throw ConfigError("model graph does not match the dataset graph");
  const std::vector<Instance> test = read_dataset(data / (split_name + ".jsonl"), graph);
  const double e = eps_h ? *eps_h : model.temps.eps_h;
  if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("eps_h must lie in [0, 1]");
  const MetricsReport r =
      evaluate_model(graph, model.weights, test, e, parse_backend(backend), {}, threads);
  json j = r.to_json();
  j["config_hash"] = model.config_hash;
  j["eps_h"] = e;
  j["family"] = model.family;
  if (!out.empty()) write_json(out, j);
  std::cout << j.dump() << "\n";
}

// ---- sweep -----------------------------------------------------------------

void apply_axis(DataSource& src, const std::string& axis, double v) {
  if (axis == "sigma_h") {
    auto* g = std::get_if<GeneratorConfig>(&src);
    if (!g) throw ConfigError("sigma_h sweeps need a chain or grid topology");
    g->sigma.h = v;
    g->validate();
  } else if (axis == "train_size") {
    const int n = static_cast<int>(v);
    if (n != v || n < 1) throw ConfigError("train_size values must be positive integers");
    std::visit([n](auto& c) { c.n_train = n; }, src);
  } else if (axis == "missing_fraction") {
    auto* im = std::get_if<ImageConfig>(&src);
    if (!im) throw ConfigError("missing_fraction sweeps need the image topology");
    im->missing_fraction = v;
    im->validate();
  }
}

void cmd_sweep(const DataFlags& dflags, const TrainFlags& tflags, const std::string& axis,
               const std::string& values, const std::string& families, int trials,
               const fs::path& out) {
  const LabelImage t = dflags.truth();
  const DataSource base_src = dflags.source(t);
  const std::vector<std::string> items = split(values, ',');
  if (items.empty()) throw ConfigError("sweep needs at least one axis value");
  if (trials < 1) throw ConfigError("trials must be at least 1");

  struct Point {
    std::string value;
    DataSource src;
    std::vector<MethodSpec> methods;
  };
  std::vector<Point> points;
  const std::vector<std::string> fams =
      axis == "family" ? items : split(families, ',');
  if (fams.empty()) throw ConfigError("sweep needs at least one family");
  if (axis == "family") {
    Point p{"-", base_src, {}};
    for (const auto& f : fams) p.methods.push_back(tflags.method(f));
    points.push_back(std::move(p));
  } else {
    for (const auto& v : items) {
      Point p{v, base_src, {}};
      double x = 0.0;
      try {
        std::size_t used = 0;
        x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
      } catch (const std::exception&) {
        throw ConfigError("axis value '" + v + "' is not a number");
      }
      apply_axis(p.src, axis, x);
      for (const auto& f : fams) p.methods.push_back(tflags.method(f));
      points.push_back(std::move(p));
    }
  }
  for (auto& p : points)
    for (auto& m : p.methods) m.training.track_error = false;

  const ObjectiveConfig base = [&] {
    ObjectiveConfig o = tflags.base();
    o.threads = 1;  // parallelism goes to trials
    return o;
  }();
  json method_cfg = json::array();
  for (const auto& m : points.front().methods)
    method_cfg.push_back({{"family", m.label()}, {"objective", to_json(m.objective(base))}});
  const json config = {{"data", source_json(base_src)},
                       {"axis", axis},
                       {"values", items},
                       {"methods", method_cfg},
                       {"training", to_json(points.front().methods.front().training)},
                       {"trials", trials}};
  const std::string hash = config_hash(config);
  ensure_directory(out);

  std::ostringstream summary, per_trial;
  summary << std::setprecision(10);
  per_trial << std::setprecision(17);
  summary << "axis,value,method,trials,mean_accuracy,std_accuracy,mean_loglik,std_loglik,"
             "loglik_exact\n";
  per_trial << "axis,value,method,trial,accuracy,test_loglik,loglik_exact\n";
  for (const Point& p : points) {
    const auto runs = run_trials(p.src, t, p.methods, base, trials, tflags.threads);
    for (std::size_t m = 0; m < p.methods.size(); ++m) {
      const Summary s = summarize(runs[m]);
      bool exact = true;
      for (int k = 0; k < trials; ++k) {
        const MetricsReport& r = runs[m][k];
        exact = exact && r.loglik_exact;
        per_trial << axis << ',' << p.value << ',' << p.methods[m].label() << ',' << k << ','
                  << r.accuracy << ',' << r.test_loglik << ',' << r.loglik_exact << '\n';
      }
      summary << axis << ',' << p.value << ',' << p.methods[m].label() << ',' << s.trials << ','
              << s.mean_accuracy << ',' << s.std_accuracy << ',' << s.mean_loglik << ','
              << s.std_loglik << ',' << exact << '\n';
      std::cerr << axis << "=" << p.value << " " << p.methods[m].label() << ": "
                << s.mean_accuracy << " +- " << s.std_accuracy << "\n";
    }
  }
  write_text(out / "sweep.csv", hashed_csv(hash, summary.str()));
  write_text(out / "trials.csv", hashed_csv(hash, per_trial.str()));
  write_json(out / "manifest.json", {{"command", "sweep"},
                                     {"schema_version", kSchemaVersion},
                                     {"config", config},
                                     {"config_hash", hash}});
  std::cout << json{{"config_hash", hash}, {"out", out.string()}}.dump() << "\n";
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured prediction with hidden variables: MSSVM, LSSVM, HCRF and friends"};
  app.require_subcommand(1);

  DataFlags sim_data;
  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "generate a dataset");
  sim_data.add(*sim);
  sim->add_option("--out", sim_out, "output directory")->required();

  TrainFlags train_flags;
  std::string train_data, train_out;
  auto* tr = app.add_subcommand("train", "train one model");
  train_flags.add(*tr, true);
  tr->add_option("--data", train_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", train_out, "output directory")->required();
  tr->add_option("--seed", train_flags.training.seed, "recorded in the manifest");

  std::string eval_model, eval_data, eval_split = "test", eval_backend = "bp", eval_out;
  std::optional<double> eval_eps_h;
  int eval_threads = 1;
  auto* ev = app.add_subcommand("eval", "evaluate a model on a dataset");
  ev->add_option("--model", eval_model, "model.json")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", eval_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--split", eval_split, "train | test")->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--eps-h", eval_eps_h, "prediction temperature, default the model's");
  ev->add_option("--backend", eval_backend)->check(CLI::IsMember({"bp", "enumerate"}));
  ev->add_option("--threads", eval_threads);
  ev->add_option("--out", eval_out, "metrics JSON file");

  DataFlags sw_data;
  TrainFlags sw_train;
  std::string sw_axis = "family", sw_values, sw_families = "mssvm,lssvm,hcrf", sw_out;
  int sw_trials = 20;
  auto* sw = app.add_subcommand("sweep", "trials per axis value per family");
  sw_data.add(*sw);
  sw_train.add(*sw, false);
  sw->add_option("--axis", sw_axis, "sigma_h | train_size | missing_fraction | family")
      ->check(CLI::IsMember({"sigma_h", "train_size", "missing_fraction", "family"}));
  sw->add_option("--values", sw_values, "comma-separated axis values")->required();
  sw->add_option("--families", sw_families, "comma-separated presets");
  sw->add_option("--eps-y", sw_train.eps_y);
  sw->add_option("--eps-h", sw_train.eps_h);
  sw->add_option("--trials", sw_trials);
  sw->add_option("--out", sw_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*sim) cmd_simulate(sim_data, sim_out);
    else if (*tr) cmd_train(train_flags, train_data, train_out);
    else if (*ev)
      cmd_eval(eval_model, eval_data, eval_split, eval_eps_h, eval_backend, eval_threads, eval_out);
    else if (*sw)
      cmd_sweep(sw_data, sw_train, sw_axis, sw_values, sw_families, sw_trials, sw_out);
  } catch (const ConfigError& e) {
    return fail(e.kind(), e.what(), 3);
  } catch (const IoError& e) {
    return fail(e.kind(), e.what(), 4);
  } catch (const Error& e) {
    return fail(e.kind(), e.what(), 5);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
  return 0;
}
