#include "mssvm/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mssvm {

using nlohmann::json;

namespace {

const char* role_name(NodeRole r) {
  switch (r) {
    case NodeRole::observed: return "observed";
    case NodeRole::output: return "output";
    case NodeRole::hidden: return "hidden";
  }
  return "";
}

NodeRole parse_role(const std::string& s) {
  if (s == "observed") return NodeRole::observed;
  if (s == "output") return NodeRole::output;
  if (s == "hidden") return NodeRole::hidden;
  throw ConfigError("unknown node role '" + s + "'");
}

// Wraps nlohmann accessors so schema problems surface as ConfigError.
template <class Fn>
auto schema(const std::string& what, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

}  // namespace

json graph_to_json(const FactorGraph& graph) {
  json nodes = json::array();
  for (const Node& n : graph.nodes())
    nodes.push_back({{"role", role_name(n.role)}, {"cardinality", n.cardinality}});
  json edges = json::array();
  for (const Edge& e : graph.edges()) edges.push_back({e.a, e.b});
  json unary = json::array();
  for (const UnaryGroup& g : graph.feature_template().unary())
    unary.push_back({{"nodes", g.nodes},
                     {"kind", g.kind == UnaryKind::indicator ? "indicator" : "observation_product"},
                     {"cardinality", g.cardinality},
                     {"obs_dim", g.obs_dim}});
  json pairwise = json::array();
  for (const PairwiseGroup& g : graph.feature_template().pairwise())
    pairwise.push_back({{"edges", g.edges}, {"card_a", g.card_a}, {"card_b", g.card_b}});
  return {{"nodes", nodes}, {"edges", edges}, {"template", {{"unary", unary}, {"pairwise", pairwise}}}};
}

FactorGraph graph_from_json(const json& j) {
  return schema("graph", [&] {
    std::vector<Node> nodes;
    for (const json& n : j.at("nodes"))
      nodes.push_back({parse_role(n.at("role").get<std::string>()), n.at("cardinality").get<int>()});
    std::vector<Edge> edges;
    for (const json& e : j.at("edges")) edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    FeatureTemplate t;
    for (const json& g : j.at("template").at("unary")) {
      const std::string kind = g.at("kind").get<std::string>();
      if (kind != "indicator" && kind != "observation_product")
        throw ConfigError("unknown unary kind '" + kind + "'");
      t.add_unary(g.at("nodes").get<std::vector<int>>(),
                  kind == "indicator" ? UnaryKind::indicator : UnaryKind::observation_product,
                  g.at("cardinality").get<int>(), g.value("obs_dim", 0));
    }
    for (const json& g : j.at("template").at("pairwise"))
      t.add_pairwise(g.at("edges").get<std::vector<int>>(), g.at("card_a").get<int>(),
                     g.at("card_b").get<int>());
    return FactorGraph(std::move(nodes), std::move(edges), std::move(t));
  });
}

json model_to_json(const Model& m) {
  json j = graph_to_json(m.graph);
  j["schema_version"] = kSchemaVersion;
  j["D"] = m.weights.dim();
  j["weights"] = std::vector<double>(m.weights.values().begin(), m.weights.values().end());
  j["temps"] = {{"eps_y", m.temps.eps_y}, {"eps_h", m.temps.eps_h}};
  j["family"] = m.family;
  j["loss_enabled"] = m.loss_enabled;
  j["config_hash"] = m.config_hash;
  return j;
}

Model model_from_json(const json& j) {
  return schema("model", [&] {
    const int version = j.at("schema_version").get<int>();
    if (version != kSchemaVersion)
      throw ConfigError("unsupported model schema_version " + std::to_string(version));
    Model m;
    m.graph = graph_from_json(j);
    m.weights = WeightVector(j.at("weights").get<std::vector<double>>());
    if (m.weights.dim() != j.at("D").get<int>() || m.weights.dim() != m.graph.dim())
      throw ConfigError("model weights do not match the template dimension");
    m.temps = {j.at("temps").at("eps_y").get<double>(), j.at("temps").at("eps_h").get<double>()};
    m.temps.validate();
    m.family = j.value("family", "");
    m.loss_enabled = j.value("loss_enabled", true);
    m.config_hash = j.value("config_hash", "");
    return m;
  });
}

void save_model(const std::filesystem::path& path, const Model& m) {
  write_json(path, model_to_json(m));
}

Model load_model(const std::filesystem::path& path) { return model_from_json(read_json(path)); }

json instance_to_json(const FactorGraph& graph, const Instance& inst) {
  json x = json::array();
  json y = json::array();
  json hidden = json::array();
  for (int i = 0; i < graph.num_nodes(); ++i) {
    const bool observed = graph.node(i).role == NodeRole::observed;
    if (!inst.features[i].empty()) x.push_back(inst.features[i]);
    else if (observed && inst.label[i] >= 0) x.push_back(inst.label[i]);
    else x.push_back(nullptr);
    y.push_back(observed ? -1 : inst.label[i]);
    if (inst.hidden[i]) hidden.push_back(i);
  }
  return {{"x", x}, {"y", y}, {"hidden", hidden}};
}

Instance instance_from_json(const FactorGraph& graph, const json& j) {
  return schema("instance", [&] {
    const int n = graph.num_nodes();
    const json& x = j.at("x");
    const json& y = j.at("y");
    if (static_cast<int>(x.size()) != n || static_cast<int>(y.size()) != n)
      throw InvalidAssignment("instance length does not match the graph");
    Instance inst;
    inst.label.assign(n, -1);
    inst.hidden.assign(n, 0);
    inst.features.assign(n, {});
    for (int i = 0; i < n; ++i) {
      if (x[i].is_array()) inst.features[i] = x[i].get<std::vector<double>>();
      else if (x[i].is_number_integer()) inst.label[i] = x[i].get<int>();
      else if (!x[i].is_null()) throw ConfigError("x entries must be null, int or array");
      if (graph.node(i).role != NodeRole::observed) inst.label[i] = y[i].get<int>();
    }
    for (const json& h : j.at("hidden")) {
      const int i = h.get<int>();
      if (i < 0 || i >= n) throw InvalidAssignment("hidden node id out of range");
      inst.hidden[i] = 1;
    }
    validate_instance(graph, inst);
    return inst;
  });
}

void write_dataset(const std::filesystem::path& path, const FactorGraph& graph,
                   const std::vector<Instance>& data) {
  std::string text;
  for (const Instance& inst : data) {
    text += instance_to_json(graph, inst).dump();
    text += '\n';
  }
  write_text(path, text);
}

std::vector<Instance> read_dataset(const std::filesystem::path& path, const FactorGraph& graph) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::vector<Instance> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(instance_from_json(graph, j));
  }
  return out;
}

void save_graph(const std::filesystem::path& path, const FactorGraph& graph) {
  json j = graph_to_json(graph);
  j["schema_version"] = kSchemaVersion;
  write_json(path, j);
}

FactorGraph load_graph(const std::filesystem::path& path) { return graph_from_json(read_json(path)); }

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  write_text(path, j.dump(1) + "\n");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out.flush()) throw IoError("write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot write " + path.string() + ": " + ec.message());
}

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw IoError("cannot create output directory " + dir.string());
}

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mssvm
