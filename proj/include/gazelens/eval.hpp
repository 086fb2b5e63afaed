#pragma once

// Class balancing, splits, metrics and the comparative experiment harness.
//
// Splits follow a fixed deterministic rule: the majority class is first
// downsampled to the minority size by seeded uniform sampling (dropped trials
// are marked excluded so usable trials always partition cleanly), then each
// class is shuffled and cut round(0.6*n) / round(0.2*n) / remainder.
//
// ROC AUC uses the rank statistic with average ranks for ties, carried as an
// exact integer numerator (twice the rank sum), so it matches a brute-force
// pairwise count bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gazelens/baselines.hpp"
#include "gazelens/core.hpp"
#include "gazelens/csv.hpp"
#include "gazelens/features.hpp"
#include "gazelens/ingest.hpp"
#include "gazelens/nn.hpp"
#include "gazelens/parallel.hpp"
#include "gazelens/render.hpp"
#include "gazelens/rng.hpp"

namespace gazelens::eval {

struct EmptyClass : Error {
  explicit EmptyClass(const std::string& which)
      : Error("fewer than 2 usable trials for class " + which) {}
};
struct SingleClassInput : Error {
  SingleClassInput() : Error("AUC needs at least one sample of each class") {}
};

struct SplitConfig {
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;
  std::uint64_t seed = 0;
  bool balance = true;

  void validate() const {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0)
      throw Error("split fractions must be nonnegative");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
      throw Error("split fractions must sum to 1");
  }
};

struct MetricsReport {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  double tpr = 0, tnr = 0, accuracy = 0, f1 = 0;
  std::optional<double> roc_auc;
};

// Mann-Whitney AUC with average ranks for ties. The numerator is the integer
// sum of (2 * rank) over positives minus P*(P+1), identical to twice the
// brute-force pairwise count of wins plus half-ties.
inline double rank_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw Error("scores/labels size mismatch");
  long long pos = 0, neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(scores[i])) throw Error("non-finite score");
    (labels[i] == 1 ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) throw SingleClassInput();

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  long long sum2r = 0;  // twice the rank sum of positive samples
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const long long two_avg_rank = static_cast<long long>(i + 1) + static_cast<long long>(j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) sum2r += two_avg_rank;
    i = j + 1;
  }
  const long long numer = sum2r - pos * (pos + 1);
  return static_cast<double>(numer) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

// Threshold 0.5 for label metrics; AUC reported absent when only one class
// is present. Ratios with empty denominators are 0.
inline MetricsReport compute_metrics(const std::vector<double>& scores,
                                     const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw Error("scores/labels size mismatch");
  MetricsReport r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int pred = scores[i] >= 0.5 ? 1 : 0;
    if (labels[i] == 1) {
      (pred == 1 ? r.tp : r.fn) += 1;
    } else {
      (pred == 1 ? r.fp : r.tn) += 1;
    }
  }
  const auto ratio = [](long long a, long long b) {
    return b > 0 ? static_cast<double>(a) / static_cast<double>(b) : 0.0;
  };
  r.tpr = ratio(r.tp, r.tp + r.fn);
  r.tnr = ratio(r.tn, r.tn + r.fp);
  r.accuracy = ratio(r.tp + r.tn, r.tp + r.fp + r.fn + r.tn);
  r.f1 = ratio(2 * r.tp, 2 * r.tp + r.fp + r.fn);
  if (r.tp + r.fn > 0 && r.fp + r.tn > 0) r.roc_auc = rank_auc(scores, labels);
  return r;
}

namespace detail {

inline void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i - 1)));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace detail

// Assigns a split to every usable trial in place. Usable means at least the
// minimum fixation count; previously balance-dropped trials (excluded despite
// a sufficient count) are reconsidered, so re-splitting is idempotent in
// distribution. Majority-class trials dropped by balancing become excluded.
inline void balance_and_split(ingest::DatasetManifest& manifest, const SplitConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> klass[2];  // [0] relevant, [1] irrelevant
  for (std::size_t i = 0; i < manifest.trials.size(); ++i) {
    TrialRecord& t = manifest.trials[i];
    if (t.fixation_count < ingest::kMinUsableFixations) {
      t.split = Split::excluded;
      continue;
    }
    t.split = Split::unassigned;
    klass[t.label == RelevanceLabel::relevant ? 0 : 1].push_back(i);
  }
  if (klass[0].size() < 2) throw EmptyClass(to_string(RelevanceLabel::relevant));
  if (klass[1].size() < 2) throw EmptyClass(to_string(RelevanceLabel::irrelevant));

  Rng rng(cfg.seed);
  if (cfg.balance && klass[0].size() != klass[1].size()) {
    const int major = klass[0].size() > klass[1].size() ? 0 : 1;
    std::vector<std::size_t>& pool = klass[major];
    const std::size_t keep = klass[1 - major].size();
    for (std::size_t i = 0; i < keep; ++i) {
      const auto j = static_cast<std::size_t>(
          rng.uniform_int(static_cast<int>(i), static_cast<int>(pool.size() - 1)));
      std::swap(pool[i], pool[j]);
    }
    for (std::size_t i = keep; i < pool.size(); ++i)
      manifest.trials[pool[i]].split = Split::excluded;
    pool.resize(keep);
    std::sort(pool.begin(), pool.end());
  }

  for (auto& indices : klass) {
    detail::shuffle_indices(indices, rng);
    const auto n = static_cast<double>(indices.size());
    const auto n_train = static_cast<std::size_t>(std::lround(cfg.train_frac * n));
    const auto n_val = static_cast<std::size_t>(std::lround(cfg.val_frac * n));
    for (std::size_t i = 0; i < indices.size(); ++i) {
      Split s = Split::test;
      if (i < n_train) {
        s = Split::train;
      } else if (i < n_train + n_val) {
        s = Split::val;
      }
      manifest.trials[indices[i]].split = s;
    }
  }
}

// ---------------------------------------------------------------------------
// Comparative harness: CNN on rendered images vs forest and linear SVM on
// handcrafted features, all on identical split assignments.

struct ExperimentTrial {
  std::string trial_id;
  RelevanceLabel label = RelevanceLabel::irrelevant;
  Split split = Split::unassigned;
  Scanpath path;
};

struct ExperimentConfig {
  render::RenderConfig render;
  nn::TrainConfig train;
  baselines::ForestConfig forest;
  baselines::SvmConfig svm;
  unsigned jobs = 0;
  std::string checkpoint_path;  // when nonempty, trained CNN weights land here
};

struct MethodMetrics {
  std::string method;
  MetricsReport train, val, test;
};

struct ExperimentReport {
  int n_train = 0, n_val = 0, n_test = 0;
  MethodMetrics cnn, forest, svm;
  std::vector<nn::EpochStats> epochs;
  std::vector<std::pair<std::string, double>> importances;  // descending
};

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

template <class T>
ExperimentReport run_experiment_impl(const std::vector<ExperimentTrial>& trials,
                                     const ExperimentConfig& cfg) {
  std::vector<std::size_t> split_idx[3];  // train, val, test
  for (std::size_t i = 0; i < trials.size(); ++i) {
    switch (trials[i].split) {
      case Split::train: split_idx[0].push_back(i); break;
      case Split::val: split_idx[1].push_back(i); break;
      case Split::test: split_idx[2].push_back(i); break;
      default: break;
    }
  }
  if (split_idx[0].empty()) throw Error("experiment needs a nonempty training split");

  // Render once and extract features once per referenced trial.
  const std::size_t pixels = static_cast<std::size_t>(cfg.render.out_w) *
                             static_cast<std::size_t>(cfg.render.out_h) * 3;
  std::vector<std::vector<T>> images(trials.size());
  std::vector<std::vector<double>> feats(trials.size());
  std::vector<char> used(trials.size(), 0);
  for (const auto& idx : split_idx)
    for (const std::size_t i : idx) used[i] = 1;
  parallel_for(trials.size(), [&](std::size_t i) {
    if (!used[i]) return;
    const render::ScanpathImage img = render::render_scanpath(trials[i].path, cfg.render);
    std::vector<T>& dst = images[i];
    dst.resize(pixels);
    const std::size_t plane = pixels / 3;
    for (std::size_t p = 0; p < plane; ++p) {
      dst[p] = static_cast<T>(img.pixels[3 * p] / 255.0);
      dst[plane + p] = static_cast<T>(img.pixels[3 * p + 1] / 255.0);
      dst[2 * plane + p] = static_cast<T>(img.pixels[3 * p + 2] / 255.0);
    }
    const auto fv = features::extract_features(trials[i].path).as_array();
    feats[i].assign(fv.begin(), fv.end());
  }, cfg.jobs);

  nn::Dataset<T> image_sets[3];
  baselines::Matrix feat_sets[3];
  std::vector<int> label_sets[3];
  for (int s = 0; s < 3; ++s) {
    image_sets[s].c = 3;
    image_sets[s].h = cfg.render.out_h;
    image_sets[s].w = cfg.render.out_w;
    for (const std::size_t i : split_idx[static_cast<std::size_t>(s)]) {
      image_sets[s].images.push_back(images[i]);
      feat_sets[s].push_back(feats[i]);
      label_sets[s].push_back(trials[i].label == RelevanceLabel::relevant ? 1 : 0);
    }
    image_sets[s].labels = label_sets[s];
  }

  ExperimentReport report;
  report.n_train = static_cast<int>(split_idx[0].size());
  report.n_val = static_cast<int>(split_idx[1].size());
  report.n_test = static_cast<int>(split_idx[2].size());

  nn::MiniVggSpec spec;
  spec.in_h = cfg.render.out_h;
  spec.in_w = cfg.render.out_w;
  nn::MiniVgg<T> model(spec, cfg.train.seed);
  report.epochs = nn::train(model, image_sets[0], image_sets[1], cfg.train, cfg.jobs);
  if (!cfg.checkpoint_path.empty()) nn::save_checkpoint(model, cfg.checkpoint_path);

  const auto metrics_for = [](const std::vector<double>& scores, const std::vector<int>& labels) {
    return labels.empty() ? MetricsReport{} : compute_metrics(scores, labels);
  };

  report.cnn.method = "cnn";
  report.forest.method = "forest";
  report.svm.method = "svm";

  const baselines::ForestModel forest =
      baselines::train_forest(feat_sets[0], label_sets[0], cfg.forest, cfg.jobs);
  const baselines::SvmModel svm = baselines::train_svm(feat_sets[0], label_sets[0], cfg.svm);

  for (int s = 0; s < 3; ++s) {
    MetricsReport* cnn_slot[3] = {&report.cnn.train, &report.cnn.val, &report.cnn.test};
    MetricsReport* forest_slot[3] = {&report.forest.train, &report.forest.val, &report.forest.test};
    MetricsReport* svm_slot[3] = {&report.svm.train, &report.svm.val, &report.svm.test};
    if (label_sets[s].empty()) continue;

    const std::vector<double> cnn_scores =
        nn::predict_probs(model, image_sets[s], cfg.train.batch_size, cfg.jobs);
    *cnn_slot[s] = metrics_for(cnn_scores, label_sets[s]);

    std::vector<double> forest_scores, svm_scores;
    forest_scores.reserve(feat_sets[s].size());
    svm_scores.reserve(feat_sets[s].size());
    for (const auto& row : feat_sets[s]) {
      forest_scores.push_back(forest.predict(row).score);
      svm_scores.push_back(sigmoid(svm.margin(row)));
    }
    *forest_slot[s] = metrics_for(forest_scores, label_sets[s]);
    *svm_slot[s] = metrics_for(svm_scores, label_sets[s]);
  }

  std::vector<std::size_t> order(forest.importances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return forest.importances[a] > forest.importances[b];
  });
  for (const std::size_t i : order)
    report.importances.emplace_back(features::kFeatureNames[i], forest.importances[i]);
  return report;
}

}  // namespace detail

inline ExperimentReport run_experiment(const std::vector<ExperimentTrial>& trials,
                                       const ExperimentConfig& cfg) {
  return cfg.train.precision == nn::Precision::f32
             ? detail::run_experiment_impl<float>(trials, cfg)
             : detail::run_experiment_impl<double>(trials, cfg);
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::json metrics_json(const MetricsReport& m) {
  nlohmann::json j{{"tp", m.tp},   {"fp", m.fp},   {"fn", m.fn},       {"tn", m.tn},
                   {"tpr", m.tpr}, {"tnr", m.tnr}, {"accuracy", m.accuracy},
                   {"f1", m.f1}};
  if (m.roc_auc.has_value()) {
    j["roc_auc"] = *m.roc_auc;
  } else {
    j["roc_auc"] = nullptr;
  }
  return j;
}

inline nlohmann::json report_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["counts"] = {{"train", r.n_train}, {"val", r.n_val}, {"test", r.n_test}};
  for (const MethodMetrics* m : {&r.cnn, &r.forest, &r.svm}) {
    j["methods"][m->method] = {{"train", metrics_json(m->train)},
                               {"val", metrics_json(m->val)},
                               {"test", metrics_json(m->test)}};
  }
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"train_acc", e.train_acc},
                      {"val_loss", e.val_loss},
                      {"val_acc", e.val_acc}});
  j["epochs"] = std::move(epochs);
  nlohmann::json imp = nlohmann::json::array();
  for (const auto& [name, weight] : r.importances)
    imp.push_back({{"feature", name}, {"importance", weight}});
  j["feature_importances"] = std::move(imp);
  return j;
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport m;
  m.tp = j.at("tp").get<long long>();
  m.fp = j.at("fp").get<long long>();
  m.fn = j.at("fn").get<long long>();
  m.tn = j.at("tn").get<long long>();
  m.tpr = j.at("tpr").get<double>();
  m.tnr = j.at("tnr").get<double>();
  m.accuracy = j.at("accuracy").get<double>();
  m.f1 = j.at("f1").get<double>();
  if (!j.at("roc_auc").is_null()) m.roc_auc = j.at("roc_auc").get<double>();
  return m;
}

inline ExperimentReport report_from_json(const nlohmann::json& j) {
  ExperimentReport r;
  try {
    r.n_train = j.at("counts").at("train").get<int>();
    r.n_val = j.at("counts").at("val").get<int>();
    r.n_test = j.at("counts").at("test").get<int>();
    for (MethodMetrics* m : {&r.cnn, &r.forest, &r.svm}) {
      m->method = m == &r.cnn ? "cnn" : m == &r.forest ? "forest" : "svm";
      const auto& mj = j.at("methods").at(m->method);
      m->train = metrics_from_json(mj.at("train"));
      m->val = metrics_from_json(mj.at("val"));
      m->test = metrics_from_json(mj.at("test"));
    }
    for (const auto& ej : j.at("epochs")) {
      nn::EpochStats e;
      e.epoch = ej.at("epoch").get<int>();
      e.train_loss = ej.at("train_loss").get<double>();
      e.train_acc = ej.at("train_acc").get<double>();
      e.val_loss = ej.at("val_loss").get<double>();
      e.val_acc = ej.at("val_acc").get<double>();
      r.epochs.push_back(e);
    }
    for (const auto& ij : j.at("feature_importances"))
      r.importances.emplace_back(ij.at("feature").get<std::string>(),
                                 ij.at("importance").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("report json: ") + e.what());
  }
  return r;
}

// One row per method and split with the usual report columns (rates as
// percentages, AUC empty when undefined).
inline std::string report_csv(const ExperimentReport& r) {
  std::string out = "method,split,tpr_pct,tnr_pct,acc_pct,roc_auc,f1\n";
  const char* split_names[3] = {"train", "val", "test"};
  for (const MethodMetrics* m : {&r.cnn, &r.forest, &r.svm}) {
    const MetricsReport* per_split[3] = {&m->train, &m->val, &m->test};
    for (int s = 0; s < 3; ++s) {
      const MetricsReport& mr = *per_split[s];
      out += m->method;
      out += ',';
      out += split_names[s];
      for (const double v : {mr.tpr * 100.0, mr.tnr * 100.0, mr.accuracy * 100.0}) {
        out += ',';
        out += csv::format_double(v);
      }
      out += ',';
      if (mr.roc_auc.has_value()) out += csv::format_double(*mr.roc_auc);
      out += ',';
      out += csv::format_double(mr.f1);
      out += '\n';
    }
  }
  return out;
}

}  // namespace gazelens::eval
