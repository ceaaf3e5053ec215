#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "mssvm/simulation.hpp"

namespace mssvm {

LabelImage default_truth_image() {
  LabelImage img{20, 40, 5, std::vector<int>(800)};
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 40; ++c) {
      int label = r < 7 ? 0 : r < 14 ? 1 : 2;
      if (r >= 3 && r <= 10 && c >= 4 && c <= 13) label = 3;
      if (r >= 5 && c - 24 >= 19 - r) label = 4;
      img.pixels[r * 40 + c] = label;
    }
  return img;
}

void ImageConfig::validate() const {
  if (height < 1 || width < 1) throw ConfigError("image dimensions must be positive");
  if (labels < 2) throw ConfigError("image needs at least two labels");
  if (!std::isfinite(noise_sigma) || noise_sigma < 0.0)
    throw ConfigError("noise sigma must be finite and non-negative");
  for (double f : {missing_fraction, test_missing_fraction})
    if (!(f >= 0.0 && f < 1.0)) throw ConfigError("missing fraction must lie in [0, 1)");
  if (n_train < 1 || n_test < 1) throw ConfigError("n_train and n_test must be positive");
}

FactorGraph image_graph(int height, int width, int labels) {
  std::vector<Node> nodes(static_cast<std::size_t>(height * width), {NodeRole::output, labels});
  std::vector<Edge> edges;
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) {
      const int v = r * width + c;
      if (c + 1 < width) edges.push_back({v, v + 1});
      if (r + 1 < height) edges.push_back({v, v + width});
    }
  FeatureTemplate t;
  std::vector<int> all_nodes(nodes.size());
  std::iota(all_nodes.begin(), all_nodes.end(), 0);
  std::vector<int> all_edges(edges.size());
  std::iota(all_edges.begin(), all_edges.end(), 0);
  t.add_unary(std::move(all_nodes), UnaryKind::observation_product, labels, 2);
  t.add_pairwise(std::move(all_edges), labels, labels);
  return FactorGraph(std::move(nodes), std::move(edges), std::move(t));
}

std::vector<Instance> noisy_instances(const LabelImage& truth, double noise_sigma,
                                      double missing_fraction, int n, Rng& rng) {
  const int pixels = truth.height * truth.width;
  // Guard against 0.95 * 800 landing a hair above 760.
  const int missing =
      std::min(pixels, static_cast<int>(std::ceil(missing_fraction * pixels - 1e-9)));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Instance> out;
  std::vector<int> order(static_cast<std::size_t>(pixels));
  for (int k = 0; k < n; ++k) {
    Instance inst;
    inst.label = truth.pixels;
    inst.hidden.assign(pixels, 0);
    inst.features.resize(pixels);
    for (int i = 0; i < pixels; ++i)
      inst.features[i] = {truth.pixels[i] + noise_sigma * normal(rng), 1.0};
    std::iota(order.begin(), order.end(), 0);
    // Partial Fisher-Yates: the first `missing` entries are a uniform subset.
    for (int j = 0; j < missing; ++j) {
      const int pick = std::uniform_int_distribution<int>(j, pixels - 1)(rng);
      std::swap(order[j], order[pick]);
      inst.hidden[order[j]] = 1;
      inst.label[order[j]] = -1;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

ImageData make_image_dataset(const ImageConfig& cfg, const LabelImage& truth) {
  cfg.validate();
  if (truth.height != cfg.height || truth.width != cfg.width || truth.labels != cfg.labels)
    throw ConfigError("truth image does not match the configured dimensions");
  ImageData out{image_graph(cfg.height, cfg.width, cfg.labels), truth, {}, {}};
  Rng train_rng = make_rng(cfg.seed, 1);
  out.train = noisy_instances(truth, cfg.noise_sigma, cfg.missing_fraction, cfg.n_train, train_rng);
  Rng test_rng = make_rng(cfg.seed, 2);
  out.test =
      noisy_instances(truth, cfg.noise_sigma, cfg.test_missing_fraction, cfg.n_test, test_rng);
  return out;
}

namespace {

// Next whitespace-separated token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] != '#') return tok;
    std::string rest;
    std::getline(in, rest);
  }
  throw IoError("truncated PGM file");
}

int pgm_int(std::istream& in) {
  const std::string tok = pgm_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw IoError("bad PGM value '" + tok + "'");
    return v;
  } catch (const std::logic_error&) {
    throw IoError("bad PGM value '" + tok + "'");
  }
}

void pgm_header(std::istream& in, int& width, int& height, int& maxval) {
  if (pgm_token(in) != "P2") throw IoError("only plain PGM (P2) is supported");
  width = pgm_int(in);
  height = pgm_int(in);
  maxval = pgm_int(in);
  if (width < 1 || height < 1 || maxval < 1 || maxval > 65535)
    throw IoError("bad PGM header");
}

}  // namespace

LabelImage read_label_pgm(std::istream& in, int labels) {
  LabelImage img;
  int maxval = 0;
  pgm_header(in, img.width, img.height, maxval);
  if (maxval > labels - 1) throw IoError("PGM maxval exceeds the label count");
  img.labels = labels;
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height));
  for (int& p : img.pixels) {
    p = pgm_int(in);
    if (p < 0 || p > maxval) throw IoError("PGM pixel out of range");
  }
  return img;
}

void write_label_pgm(std::ostream& out, const LabelImage& img) {
  out << "P2\n" << img.width << ' ' << img.height << '\n' << img.labels - 1 << '\n';
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) out << (c ? " " : "") << img.at(r, c);
    out << '\n';
  }
}

void write_observation_pgm(std::ostream& out, const Instance& inst, int height, int width) {
  out << "P2\n# value = round(" << kPgmScale << " * x) + " << kPgmOffset << "\n"
      << width << ' ' << height << "\n65535\n";
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double x = inst.features[r * width + c].at(0);
      const long v = std::clamp<long>(std::lround(x * kPgmScale) + kPgmOffset, 0, 65535);
      out << (c ? " " : "") << v;
    }
    out << '\n';
  }
}

std::vector<double> read_observation_pgm(std::istream& in, int& height, int& width) {
  int maxval = 0;
  pgm_header(in, width, height, maxval);
  std::vector<double> x(static_cast<std::size_t>(width * height));
  for (double& v : x) v = (pgm_int(in) - kPgmOffset) / kPgmScale;
  return x;
}

}  // namespace mssvm
