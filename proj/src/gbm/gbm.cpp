#include "pfoa/gbm/gbm.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "pfoa/csv.hpp"
#include "pfoa/error.hpp"
#include "pfoa/rng.hpp"

namespace pfoa::gbm {

void FeatureMatrix::push_row(std::span<const double> row) {
  if (row.size() != cols()) throw ShapeError("row has " + std::to_string(row.size()) + " values, schema has " +
                                             std::to_string(cols()));
  values.insert(values.end(), row.begin(), row.end());
  ++rows;
}

int Tree::leaf_index(std::span<const double> row) const {
  int i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    const double v = row[static_cast<std::size_t>(n.feature)];
    const bool left = is_missing(v) ? n.default_left : v <= n.threshold;
    i = left ? n.left : n.right;
  }
  return i;
}

void validate(const GbmParams& p) {
  if (p.num_rounds < 0) throw ValidationError("num_rounds must be >= 0");
  if (!(p.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (p.max_leaves < 2) throw ValidationError("max_leaves must be >= 2");
  if (p.min_samples_leaf < 1) throw ValidationError("min_samples_leaf must be >= 1");
  if (!(p.feature_fraction > 0.0 && p.feature_fraction <= 1.0)) {
    throw ValidationError("feature_fraction must lie in (0, 1]");
  }
  if (!(p.bagging_fraction > 0.0 && p.bagging_fraction <= 1.0)) {
    throw ValidationError("bagging_fraction must lie in (0, 1]");
  }
  if (!(p.l2_leaf_regularization > 0.0)) throw ValidationError("l2_leaf_regularization must be > 0");
  if (p.max_depth < 0) throw ValidationError("max_depth must be >= 0");
}

void validate(const GbmModel& model) {
  if (!std::isfinite(model.base_score)) throw ValidationError("base_score is not finite");
  if (!(model.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  const int nf = static_cast<int>(model.features.size());
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    const auto& nodes = model.trees[t].nodes;
    const int nn = static_cast<int>(nodes.size());
    if (nn == 0) throw ValidationError("tree " + std::to_string(t) + " is empty");
    for (int i = 0; i < nn; ++i) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      if (n.is_leaf()) {
        if (!std::isfinite(n.value)) throw ValidationError("tree " + std::to_string(t) + " has a non-finite leaf");
        continue;
      }
      if (n.feature >= nf) throw ValidationError("tree " + std::to_string(t) + " splits on an unknown feature");
      if (n.left <= i || n.right <= i || n.left >= nn || n.right >= nn || n.left == n.right) {
        throw ValidationError("tree " + std::to_string(t) + " has an internal node without two children");
      }
      if (!std::isfinite(n.threshold)) throw ValidationError("tree " + std::to_string(t) + " has a bad threshold");
    }
  }
}

namespace {

constexpr double kMinGain = 1e-12;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Split {
  double gain = kMinGain;
  int feature = -1;
  double threshold = 0.0;
  bool default_left = true;
};

struct Candidate {
  int node = 0;
  int depth = 0;
  std::vector<std::vector<int>> sorted;  // per selected feature, rows with a value, ascending
  std::vector<int> rows;
  double g = 0.0;
  double h = 0.0;
  Split split;
};

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, const std::vector<double>& grad, const std::vector<double>& hess,
              const GbmParams& params, std::vector<int> features)
      : x_(x), grad_(grad), hess_(hess), params_(params), features_(std::move(features)) {}

  Tree build(const std::vector<std::vector<int>>& presorted, const std::vector<int>& rows,
             const std::vector<char>& in_bag) {
    Tree tree;
    tree.nodes.emplace_back();
    Candidate root;
    root.rows = rows;
    for (int f : features_) {
      std::vector<int> list;
      for (int r : presorted[static_cast<std::size_t>(f)]) {
        if (in_bag[static_cast<std::size_t>(r)]) list.push_back(r);
      }
      root.sorted.push_back(std::move(list));
    }
    for (int r : rows) {
      root.g += grad_[r];
      root.h += hess_[r];
    }
    find_split(root);

    std::vector<Candidate> open;
    open.push_back(std::move(root));
    int leaves = 1;
    while (leaves < params_.max_leaves) {
      const auto pick = choose(open);
      if (pick < 0) break;
      Candidate c = std::move(open[static_cast<std::size_t>(pick)]);
      open.erase(open.begin() + pick);
      auto [l, r] = apply(tree, c);
      open.push_back(std::move(l));
      open.push_back(std::move(r));
      ++leaves;
    }
    for (const auto& c : open) {
      tree.nodes[static_cast<std::size_t>(c.node)].value = -c.g / (c.h + params_.l2_leaf_regularization);
    }
    return tree;
  }

 private:
  double score(double g, double h) const { return g * g / (h + params_.l2_leaf_regularization); }

  bool depth_ok(const Candidate& c) const { return params_.max_depth == 0 || c.depth < params_.max_depth; }

  void find_split(Candidate& c) const {
    c.split = Split{};
    if (!depth_ok(c)) return;
    const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
    const std::size_t n = c.rows.size();
    if (n < 2 * min_leaf) return;
    const double parent = score(c.g, c.h);
    for (std::size_t fi = 0; fi < features_.size(); ++fi) {
      const int f = features_[fi];
      const auto& list = c.sorted[fi];
      if (list.size() < 2) continue;
      double gs = 0.0;
      double hs = 0.0;
      for (int r : list) {
        gs += grad_[r];
        hs += hess_[r];
      }
      const double gm = c.g - gs;
      const double hm = c.h - hs;
      const std::size_t nm = n - list.size();
      double gl = 0.0;
      double hl = 0.0;
      for (std::size_t i = 0; i + 1 < list.size(); ++i) {
        gl += grad_[list[i]];
        hl += hess_[list[i]];
        const double v = x_.at(static_cast<std::size_t>(list[i]), static_cast<std::size_t>(f));
        const double next = x_.at(static_cast<std::size_t>(list[i + 1]), static_cast<std::size_t>(f));
        if (v == next) continue;
        const std::size_t nl = i + 1;
        const std::size_t nr = list.size() - nl;
        const auto consider = [&](bool default_left) {
          const double gL = default_left ? gl + gm : gl;
          const double hL = default_left ? hl + hm : hl;
          const std::size_t cL = default_left ? nl + nm : nl;
          const std::size_t cR = n - cL;
          if (cL < min_leaf || cR < min_leaf) return;
          const double gain = score(gL, hL) + score(c.g - gL, c.h - hL) - parent;
          if (gain > c.split.gain) {
            double t = v + (next - v) / 2.0;
            if (!(t < next)) t = v;
            c.split = Split{gain, f, t, default_left};
          }
        };
        if (nm == 0) {
          consider(nl >= nr);
        } else {
          consider(false);
          consider(true);
        }
      }
    }
  }

  int choose(const std::vector<Candidate>& open) const {
    int best = -1;
    for (std::size_t i = 0; i < open.size(); ++i) {
      const auto& c = open[i];
      if (c.split.feature < 0) continue;
      if (best < 0) {
        best = static_cast<int>(i);
        continue;
      }
      const auto& b = open[static_cast<std::size_t>(best)];
      const bool better = params_.growth == Growth::LeafWise
                              ? (c.split.gain > b.split.gain || (c.split.gain == b.split.gain && c.node < b.node))
                              : (c.depth < b.depth || (c.depth == b.depth && c.node < b.node));
      if (better) best = static_cast<int>(i);
    }
    return best;
  }

  std::pair<Candidate, Candidate> apply(Tree& tree, Candidate& c) {
    const auto& s = c.split;
    const int li = static_cast<int>(tree.nodes.size());
    const int ri = li + 1;
    {
      auto& node = tree.nodes[static_cast<std::size_t>(c.node)];
      node.feature = s.feature;
      node.threshold = s.threshold;
      node.default_left = s.default_left;
      node.left = li;
      node.right = ri;
      node.value = -c.g / (c.h + params_.l2_leaf_regularization);
    }
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();

    const auto goes_left = [&](int r) {
      const double v = x_.at(static_cast<std::size_t>(r), static_cast<std::size_t>(s.feature));
      return is_missing(v) ? s.default_left : v <= s.threshold;
    };
    Candidate l;
    Candidate r;
    l.node = li;
    r.node = ri;
    l.depth = r.depth = c.depth + 1;
    for (int row : c.rows) {
      auto& dst = goes_left(row) ? l : r;
      dst.rows.push_back(row);
      dst.g += grad_[row];
      dst.h += hess_[row];
    }
    l.sorted.resize(features_.size());
    r.sorted.resize(features_.size());
    for (std::size_t fi = 0; fi < features_.size(); ++fi) {
      for (int row : c.sorted[fi]) (goes_left(row) ? l : r).sorted[fi].push_back(row);
    }
    find_split(l);
    find_split(r);
    return {std::move(l), std::move(r)};
  }

  const FeatureMatrix& x_;
  const std::vector<double>& grad_;
  const std::vector<double>& hess_;
  const GbmParams& params_;
  std::vector<int> features_;
};

std::vector<int> draw_subset(std::size_t n, double fraction, std::mt19937_64& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (fraction >= 1.0) return idx;
  const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n))));
  shuffle_portable(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GbmModel fit_gbm(const FeatureMatrix& x, std::span<const int> labels, const GbmParams& params) {
  validate(params);
  if (x.values.size() != x.rows * x.cols()) throw ShapeError("feature matrix size does not match its shape");
  if (labels.size() != x.rows) throw ShapeError("labels and feature rows differ in length");
  if (x.cols() == 0) throw ValidationError("feature schema is empty");
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValidationError("labels must be 0 or 1");
    pos += static_cast<std::size_t>(l);
  }
  if (pos == 0 || pos == labels.size()) throw ValidationError("labels hold a single class");

  const double prevalence = static_cast<double>(pos) / static_cast<double>(labels.size());
  GbmModel model;
  model.features = x.names;
  model.base_score = std::log(prevalence / (1.0 - prevalence));
  model.learning_rate = params.learning_rate;

  std::vector<std::vector<int>> presorted(x.cols());
  for (std::size_t f = 0; f < x.cols(); ++f) {
    for (std::size_t r = 0; r < x.rows; ++r) {
      if (!is_missing(x.at(r, f))) presorted[f].push_back(static_cast<int>(r));
    }
    std::stable_sort(presorted[f].begin(), presorted[f].end(),
                     [&](int a, int b) { return x.at(static_cast<std::size_t>(a), f) < x.at(static_cast<std::size_t>(b), f); });
  }

  std::vector<double> f_raw(x.rows, model.base_score);
  std::vector<double> grad(x.rows);
  std::vector<double> hess(x.rows);
  for (int round = 0; round < params.num_rounds; ++round) {
    for (std::size_t r = 0; r < x.rows; ++r) {
      const double p = sigmoid(f_raw[r]);
      grad[r] = p - labels[r];
      hess[r] = p * (1.0 - p);
    }
    auto bag_rng = make_stream(params.seed, 1, static_cast<std::uint64_t>(round));
    auto feat_rng = make_stream(params.seed, 2, static_cast<std::uint64_t>(round));
    const auto rows = draw_subset(x.rows, params.bagging_fraction, bag_rng);
    auto features = draw_subset(x.cols(), params.feature_fraction, feat_rng);
    std::vector<char> in_bag(x.rows, 0);
    for (int r : rows) in_bag[static_cast<std::size_t>(r)] = 1;

    TreeBuilder builder(x, grad, hess, params, std::move(features));
    Tree tree = builder.build(presorted, rows, in_bag);
    for (std::size_t r = 0; r < x.rows; ++r) {
      f_raw[r] += params.learning_rate * tree.nodes[static_cast<std::size_t>(tree.leaf_index(x.row(r)))].value;
    }
    model.trees.push_back(std::move(tree));
  }
  recount_covers(model, x);
  return model;
}

void recount_covers(GbmModel& model, const FeatureMatrix& x) {
  if (x.cols() != model.features.size()) throw ShapeError("feature matrix does not match the model schema");
  for (auto& tree : model.trees) {
    for (auto& n : tree.nodes) n.cover = 0.0;
    for (std::size_t r = 0; r < x.rows; ++r) {
      const auto row = x.row(r);
      int i = 0;
      while (true) {
        auto& n = tree.nodes[static_cast<std::size_t>(i)];
        n.cover += 1.0;
        if (n.is_leaf()) break;
        const double v = row[static_cast<std::size_t>(n.feature)];
        i = (is_missing(v) ? n.default_left : v <= n.threshold) ? n.left : n.right;
      }
    }
  }
}

double raw_score(const GbmModel& model, std::span<const double> row) {
  if (row.size() != model.features.size()) {
    throw ShapeError("row has " + std::to_string(row.size()) + " features, model expects " +
                     std::to_string(model.features.size()));
  }
  double sum = 0.0;
  for (const auto& t : model.trees) sum += t.nodes[static_cast<std::size_t>(t.leaf_index(row))].value;
  return model.base_score + model.learning_rate * sum;
}

double predict_proba_gbm(const GbmModel& model, std::span<const double> row) {
  return sigmoid(raw_score(model, row));
}

std::vector<double> predict_proba_gbm(const GbmModel& model, const FeatureMatrix& x) {
  if (x.names != model.features) throw ShapeError("feature matrix schema does not match the model");
  std::vector<double> out(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) out[r] = predict_proba_gbm(model, x.row(r));
  return out;
}

std::string serialize_gbm(const GbmModel& model) {
  using nlohmann::json;
  json j;
  j["format"] = "pfoa-gbm";
  j["version"] = kGbmFormatVersion;
  j["features"] = model.features;
  j["base_score"] = model.base_score;
  j["learning_rate"] = model.learning_rate;
  json trees = json::array();
  for (const auto& t : model.trees) {
    json nodes = json::array();
    for (const auto& n : t.nodes) {
      json jn;
      if (n.is_leaf()) {
        jn["leaf"] = n.value;
      } else {
        jn["feature"] = n.feature;
        jn["threshold"] = n.threshold;
        jn["default"] = n.default_left ? "left" : "right";
        jn["children"] = {n.left, n.right};
      }
      jn["cover"] = n.cover;
      nodes.push_back(std::move(jn));
    }
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  return j.dump(1) + "\n";
}

GbmModel deserialize_gbm(const std::string& text) {
  using nlohmann::json;
  GbmModel m;
  try {
    const auto j = json::parse(text);
    if (j.at("format") != "pfoa-gbm") throw ParseError("not a pfoa-gbm model");
    if (j.at("version") != kGbmFormatVersion) {
      throw ParseError("unsupported gbm model version " + j.at("version").dump());
    }
    m.features = j.at("features").get<std::vector<std::string>>();
    m.base_score = j.at("base_score").get<double>();
    m.learning_rate = j.at("learning_rate").get<double>();
    for (const auto& jt : j.at("trees")) {
      Tree t;
      for (const auto& jn : jt) {
        Node n;
        if (jn.contains("leaf")) {
          n.value = jn.at("leaf").get<double>();
        } else {
          n.feature = jn.at("feature").get<int>();
          n.threshold = jn.at("threshold").get<double>();
          const auto dir = jn.at("default").get<std::string>();
          if (dir != "left" && dir != "right") throw ParseError("default must be left or right");
          n.default_left = dir == "left";
          n.left = jn.at("children").at(0).get<int>();
          n.right = jn.at("children").at(1).get<int>();
        }
        n.cover = jn.value("cover", 0.0);
        t.nodes.push_back(n);
      }
      m.trees.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("gbm model: ") + e.what());
  }
  validate(m);
  return m;
}

void save_gbm(const GbmModel& model, const std::filesystem::path& path) {
  csv::write_file(path, serialize_gbm(model));
}

GbmModel load_gbm(const std::filesystem::path& path) { return deserialize_gbm(csv::read_file(path)); }

}  // namespace pfoa::gbm
