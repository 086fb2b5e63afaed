#pragma once

// Classic classifiers over feature vectors, written from scratch:
//  - random forest of CART trees (Gini splits, bootstrap resamples, random
//    feature subsets per node) with impurity-decrease feature importances;
//  - linear SVM trained by stochastic subgradient descent on the regularized
//    hinge loss, over z-scored features.
// Both are deterministic functions of (data, config, seed).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "gazelens/core.hpp"
#include "gazelens/csv.hpp"
#include "gazelens/parallel.hpp"
#include "gazelens/rng.hpp"

namespace gazelens::baselines {

using Matrix = std::vector<std::vector<double>>;

struct SingleClassInput : Error {
  SingleClassInput() : Error("training data contains a single class") {}
};

struct NonFiniteFeature : Error {
  NonFiniteFeature() : Error("feature matrix contains a non-finite value") {}
};

struct Prediction {
  double score = 0;  // forest: fraction of trees voting 1; svm: signed margin
  int label = 0;
};

namespace detail {

inline void check_xy(const Matrix& X, const std::vector<int>& y) {
  if (X.size() != y.size() || X.size() < 2)
    throw Error("need equal-length X and y with at least 2 rows");
  const std::size_t d = X[0].size();
  for (const auto& row : X)
    if (row.size() != d) throw Error("ragged feature matrix");
  const bool has0 = std::find(y.begin(), y.end(), 0) != y.end();
  const bool has1 = std::find(y.begin(), y.end(), 1) != y.end();
  if (!has0 || !has1) throw SingleClassInput();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Random forest

struct ForestConfig {
  int n_trees = 200;
  int max_depth = 0;  // 0 = unlimited
  int min_samples_leaf = 1;
  int max_features = 4;  // floor(sqrt(20)); clamped to the data's width
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct TreeNode {
  // feature < 0 marks a leaf; for leaves `label` holds the majority class.
  int feature = -1;
  double threshold = 0;
  int left = -1;
  int right = -1;
  int label = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;

  int predict(const std::vector<double>& x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& nd = nodes[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(i)].label;
  }
};

struct ForestModel {
  ForestConfig config;
  std::size_t n_features = 0;
  std::vector<Tree> trees;
  std::vector<double> importances;  // impurity decrease, normalized to sum 1

  Prediction predict(const std::vector<double>& x) const {
    std::size_t votes = 0;
    for (const auto& t : trees) votes += static_cast<std::size_t>(t.predict(x));
    const double score = static_cast<double>(votes) / static_cast<double>(trees.size());
    return Prediction{score, score >= 0.5 ? 1 : 0};
  }
};

namespace detail {

inline double gini(std::size_t n0, std::size_t n1) {
  const double n = static_cast<double>(n0 + n1);
  if (n == 0) return 0;
  const double p0 = static_cast<double>(n0) / n;
  const double p1 = static_cast<double>(n1) / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

struct TreeBuilder {
  const Matrix& X;
  const std::vector<int>& y;
  const ForestConfig& cfg;
  int max_features_eff;
  Rng rng;
  Tree tree;
  std::vector<double> importance;  // per feature, raw impurity decrease

  TreeBuilder(const Matrix& X_, const std::vector<int>& y_, const ForestConfig& cfg_,
              std::uint64_t seed)
      : X(X_), y(y_), cfg(cfg_),
        max_features_eff(std::min<int>(cfg_.max_features, static_cast<int>(X_[0].size()))),
        rng(seed) {
    importance.assign(X[0].size(), 0.0);
  }

  // Draw a random subset of feature indices without replacement
  // (partial Fisher-Yates over a scratch index array).
  std::vector<int> draw_features() {
    const int d = static_cast<int>(X[0].size());
    std::vector<int> idx(static_cast<std::size_t>(d));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < max_features_eff; ++i) {
      const int j = static_cast<int>(rng.uniform_int(i, d - 1));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(max_features_eff));
    return idx;
  }

  int grow(std::vector<std::size_t>& rows, int depth) {
    std::size_t n1 = 0;
    for (const auto r : rows) n1 += static_cast<std::size_t>(y[r]);
    const std::size_t n0 = rows.size() - n1;
    const int majority = n1 > n0 ? 1 : 0;

    const bool pure = n0 == 0 || n1 == 0;
    const bool depth_stop = cfg.max_depth > 0 && depth >= cfg.max_depth;
    const bool size_stop =
        rows.size() < 2 * static_cast<std::size_t>(cfg.min_samples_leaf) || rows.size() < 2;

    int best_feature = -1;
    double best_threshold = 0;
    double best_gain = 0;
    const double node_gini = gini(n0, n1);

    if (!pure && !depth_stop && !size_stop) {
      std::vector<std::pair<double, std::size_t>> order(rows.size());
      for (const int f : draw_features()) {
        for (std::size_t i = 0; i < rows.size(); ++i)
          order[i] = {X[rows[i]][static_cast<std::size_t>(f)], rows[i]};
        std::sort(order.begin(), order.end());
        std::size_t l1 = 0;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
          l1 += static_cast<std::size_t>(y[order[i].second]);
          if (order[i].first == order[i + 1].first) continue;
          const std::size_t nl = i + 1;
          const std::size_t nr = order.size() - nl;
          if (nl < static_cast<std::size_t>(cfg.min_samples_leaf) ||
              nr < static_cast<std::size_t>(cfg.min_samples_leaf))
            continue;
          const std::size_t l0 = nl - l1;
          const std::size_t r1 = n1 - l1;
          const std::size_t r0 = nr - r1;
          const double w = static_cast<double>(rows.size());
          const double gain = node_gini -
                              (static_cast<double>(nl) / w) * gini(l0, l1) -
                              (static_cast<double>(nr) / w) * gini(r0, r1);
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = f;
            best_threshold = (order[i].first + order[i + 1].first) / 2.0;
          }
        }
      }
    }

    const int me = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (best_feature < 0 || best_gain <= 0) {
      tree.nodes[static_cast<std::size_t>(me)].label = majority;
      return me;
    }

    importance[static_cast<std::size_t>(best_feature)] +=
        static_cast<double>(rows.size()) * best_gain;

    std::vector<std::size_t> left, right;
    for (const auto r : rows) {
      if (X[r][static_cast<std::size_t>(best_feature)] <= best_threshold)
        left.push_back(r);
      else
        right.push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    tree.nodes[static_cast<std::size_t>(me)].feature = best_feature;
    tree.nodes[static_cast<std::size_t>(me)].threshold = best_threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    tree.nodes[static_cast<std::size_t>(me)].left = l;
    tree.nodes[static_cast<std::size_t>(me)].right = r;
    return me;
  }
};

}  // namespace detail

inline ForestModel train_forest(const Matrix& X, const std::vector<int>& y,
                                const ForestConfig& cfg = {}, unsigned jobs = 0) {
  detail::check_xy(X, y);
  if (cfg.n_trees < 1) throw Error("n_trees must be >= 1");
  if (cfg.max_features < 1) throw Error("max_features must be >= 1");

  ForestModel model;
  model.config = cfg;
  model.n_features = X[0].size();
  model.trees.resize(static_cast<std::size_t>(cfg.n_trees));
  std::vector<std::vector<double>> per_tree_importance(
      static_cast<std::size_t>(cfg.n_trees));

  parallel_for(static_cast<std::size_t>(cfg.n_trees), [&](std::size_t t) {
    detail::TreeBuilder b(X, y, cfg, derive_seed(cfg.seed, t));
    std::vector<std::size_t> rows;
    rows.reserve(X.size());
    if (cfg.bootstrap) {
      for (std::size_t i = 0; i < X.size(); ++i)
        rows.push_back(static_cast<std::size_t>(
            b.rng.uniform_int(0, static_cast<int>(X.size()) - 1)));
    } else {
      rows.resize(X.size());
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    b.grow(rows, 0);
    model.trees[t] = std::move(b.tree);
    per_tree_importance[t] = std::move(b.importance);
  }, jobs);

  model.importances.assign(model.n_features, 0.0);
  for (const auto& imp : per_tree_importance)
    for (std::size_t f = 0; f < model.n_features; ++f)
      model.importances[f] += imp[f];
  const double total =
      std::accumulate(model.importances.begin(), model.importances.end(), 0.0);
  if (total > 0)
    for (auto& v : model.importances) v /= total;
  return model;
}

inline const std::vector<double>& feature_importances(const ForestModel& m) {
  return m.importances;
}

// Importance CSV sorted by descending importance, ties by feature index.
inline std::string importance_csv(const ForestModel& m,
                                  const std::vector<std::string>& names) {
  if (names.size() != m.importances.size())
    throw Error("importance names size mismatch");
  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return m.importances[a] > m.importances[b];
  });
  std::string out = "feature,importance\n";
  for (const auto i : order) {
    out += names[i];
    out += ',';
    out += csv::format_double(m.importances[i]);
    out += '\n';
  }
  return out;
}

inline void save_forest(const ForestModel& m, const std::string& path) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& nd : t.nodes)
      nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right, nd.label});
    trees.push_back(std::move(nodes));
  }
  const nlohmann::json j{{"kind", "forest"},
                         {"version", 1},
                         {"n_features", m.n_features},
                         {"n_trees", m.config.n_trees},
                         {"max_depth", m.config.max_depth},
                         {"min_samples_leaf", m.config.min_samples_leaf},
                         {"max_features", m.config.max_features},
                         {"bootstrap", m.config.bootstrap},
                         {"seed", m.config.seed},
                         {"importances", m.importances},
                         {"trees", std::move(trees)}};
  csv::write_text_file(path, j.dump() + "\n");
}

inline ForestModel load_forest(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(csv::read_text_file(path));
    if (j.at("kind") != "forest" || j.at("version") != 1)
      throw IoError("forest model: unexpected kind or version");
    ForestModel m;
    m.n_features = j.at("n_features").get<std::size_t>();
    m.config.n_trees = j.at("n_trees").get<int>();
    m.config.max_depth = j.at("max_depth").get<int>();
    m.config.min_samples_leaf = j.at("min_samples_leaf").get<int>();
    m.config.max_features = j.at("max_features").get<int>();
    m.config.bootstrap = j.at("bootstrap").get<bool>();
    m.config.seed = j.at("seed").get<std::uint64_t>();
    m.importances = j.at("importances").get<std::vector<double>>();
    for (const auto& tj : j.at("trees")) {
      Tree t;
      for (const auto& nj : tj)
        t.nodes.push_back(TreeNode{nj.at(0).get<int>(), nj.at(1).get<double>(),
                                   nj.at(2).get<int>(), nj.at(3).get<int>(),
                                   nj.at(4).get<int>()});
      m.trees.push_back(std::move(t));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("forest model: " + std::string(e.what()));
  }
}

// ---------------------------------------------------------------------------
// Linear SVM (stochastic subgradient on the regularized hinge loss)

struct SvmConfig {
  double lambda = 1e-3;
  int epochs = 100;
  std::uint64_t seed = 0;
};

struct SvmModel {
  SvmConfig config;
  std::vector<double> weights;
  double bias = 0;
  std::vector<double> mean;  // training z-score statistics
  std::vector<double> sd;    // population sd; 0 marks a constant column
  std::vector<double> objective_per_epoch;  // of the running-average iterate

  std::vector<double> standardize(const std::vector<double>& x) const {
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      z[i] = sd[i] > 0 ? (x[i] - mean[i]) / sd[i] : 0.0;
    return z;
  }

  double margin(const std::vector<double>& x) const {
    for (const double v : x)
      if (!std::isfinite(v)) throw NonFiniteFeature();
    const auto z = standardize(x);
    double m = bias;
    for (std::size_t i = 0; i < z.size(); ++i) m += weights[i] * z[i];
    return m;
  }

  Prediction predict(const std::vector<double>& x) const {
    const double m = margin(x);
    return Prediction{m, m >= 0 ? 1 : 0};
  }
};

namespace detail {

inline double svm_objective(const Matrix& Z, const std::vector<int>& y,
                            const std::vector<double>& w, double b, double lambda) {
  double norm2 = 0;
  for (const double v : w) norm2 += v * v;
  double hinge = 0;
  for (std::size_t i = 0; i < Z.size(); ++i) {
    const double yi = y[i] == 1 ? 1.0 : -1.0;
    double m = b;
    for (std::size_t f = 0; f < w.size(); ++f) m += w[f] * Z[i][f];
    hinge += std::max(0.0, 1.0 - yi * m);
  }
  return lambda / 2.0 * norm2 + hinge / static_cast<double>(Z.size());
}

}  // namespace detail

inline SvmModel train_svm(const Matrix& X, const std::vector<int>& y,
                          const SvmConfig& cfg = {}) {
  detail::check_xy(X, y);
  if (!(cfg.lambda > 0)) throw Error("lambda must be > 0");
  for (const auto& row : X)
    for (const double v : row)
      if (!std::isfinite(v)) throw NonFiniteFeature();

  const std::size_t n = X.size();
  const std::size_t d = X[0].size();

  SvmModel m;
  m.config = cfg;
  m.mean.assign(d, 0.0);
  m.sd.assign(d, 0.0);
  for (const auto& row : X)
    for (std::size_t f = 0; f < d; ++f) m.mean[f] += row[f];
  for (auto& v : m.mean) v /= static_cast<double>(n);
  for (const auto& row : X)
    for (std::size_t f = 0; f < d; ++f) {
      const double dmean = row[f] - m.mean[f];
      m.sd[f] += dmean * dmean;
    }
  for (auto& v : m.sd) v = std::sqrt(v / static_cast<double>(n));

  Matrix Z(n);
  for (std::size_t i = 0; i < n; ++i) Z[i] = m.standardize(X[i]);

  std::vector<double> w(d, 0.0), w_avg(d, 0.0);
  double b = 0, b_avg = 0;
  std::size_t t = 0;
  Rng rng(cfg.seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates shuffle with the project RNG keeps the visit order
    // identical across standard libraries.
    for (std::size_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)));
      std::swap(idx[i], idx[j]);
    }
    for (const std::size_t i : idx) {
      ++t;
      const double eta = 1.0 / (cfg.lambda * static_cast<double>(t));
      const double yi = y[i] == 1 ? 1.0 : -1.0;
      double margin = b;
      for (std::size_t f = 0; f < d; ++f) margin += w[f] * Z[i][f];
      const bool active = yi * margin < 1.0;
      const double shrink = 1.0 - eta * cfg.lambda;
      for (std::size_t f = 0; f < d; ++f) {
        w[f] *= shrink;
        if (active) w[f] += eta * yi * Z[i][f];
      }
      if (active) b += eta * yi;
      // running average of all iterates
      const double k = static_cast<double>(t);
      for (std::size_t f = 0; f < d; ++f) w_avg[f] += (w[f] - w_avg[f]) / k;
      b_avg += (b - b_avg) / k;
    }
    m.objective_per_epoch.push_back(
        detail::svm_objective(Z, y, w_avg, b_avg, cfg.lambda));
  }

  m.weights = w_avg;
  m.bias = b_avg;
  return m;
}

inline void save_svm(const SvmModel& m, const std::string& path) {
  const nlohmann::json j{{"kind", "svm"},
                         {"version", 1},
                         {"lambda", m.config.lambda},
                         {"epochs", m.config.epochs},
                         {"seed", m.config.seed},
                         {"weights", m.weights},
                         {"bias", m.bias},
                         {"mean", m.mean},
                         {"sd", m.sd},
                         {"objective_per_epoch", m.objective_per_epoch}};
  csv::write_text_file(path, j.dump() + "\n");
}

inline SvmModel load_svm(const std::string& path) {
  try {
    const auto j = nlohmann::json::parse(csv::read_text_file(path));
    if (j.at("kind") != "svm" || j.at("version") != 1)
      throw IoError("svm model: unexpected kind or version");
    SvmModel m;
    m.config.lambda = j.at("lambda").get<double>();
    m.config.epochs = j.at("epochs").get<int>();
    m.config.seed = j.at("seed").get<std::uint64_t>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.mean = j.at("mean").get<std::vector<double>>();
    m.sd = j.at("sd").get<std::vector<double>>();
    m.objective_per_epoch = j.at("objective_per_epoch").get<std::vector<double>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("svm model: " + std::string(e.what()));
  }
}

}  // namespace gazelens::baselines
