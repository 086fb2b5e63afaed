// Evaluation layer: rank AUC against a brute-force pairwise count, metric
// identities, deterministic balanced splits, and report serialization.

#include <catch2/catch_amalgamated.hpp>

#include <gazelens/eval.hpp>
#include <gazelens/ingest.hpp>
#include <gazelens/rng.hpp>

#include <algorithm>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "oracle_auc.hpp"

using namespace gazelens;

namespace {

TrialRecord usable_trial(const std::string& id, RelevanceLabel label,
                                 int fixation_count = 20) {
  TrialRecord r;
  r.trial_id = id;
  r.label = label;
  r.fixation_count = fixation_count;
  return r;
}

ingest::DatasetManifest manifest_of(int n_relevant, int n_irrelevant) {
  ingest::DatasetManifest m;
  for (int i = 0; i < n_relevant; ++i)
    m.trials.push_back(usable_trial("r" + std::to_string(i), RelevanceLabel::relevant));
  for (int i = 0; i < n_irrelevant; ++i)
    m.trials.push_back(usable_trial("i" + std::to_string(i), RelevanceLabel::irrelevant));
  return m;
}

std::map<Split, int> split_counts(const ingest::DatasetManifest& m, RelevanceLabel label) {
  std::map<Split, int> counts;
  for (const auto& t : m.trials)
    if (t.label == label) counts[t.split] += 1;
  return counts;
}

}  // namespace

TEST_CASE("rank auc equals the brute-force pairwise count on tied data") {
  Rng rng(71);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = rng.uniform_int(2, 60);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
      // few distinct values force plenty of exact ties
      scores.push_back(static_cast<double>(rng.uniform_int(0, 7)) / 8.0);
      labels.push_back(rng.uniform_int(0, 1));
    }
    labels[0] = 0;  // guarantee both classes
    labels[n > 1 ? 1 : 0] = 1;

    const double got = eval::rank_auc(scores, labels);
    const double want = testutil::pairwise_auc(scores, labels);
    INFO("trial " << trial);
    REQUIRE(got == want);  // bitwise, including tie handling
  }
}

TEST_CASE("rank auc hand cases") {
  CHECK(eval::rank_auc({0.1, 0.9}, {0, 1}) == 1.0);
  CHECK(eval::rank_auc({0.9, 0.1}, {0, 1}) == 0.0);
  CHECK(eval::rank_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
  CHECK(eval::rank_auc({0.2, 0.5, 0.5, 0.9}, {0, 0, 1, 1}) == 0.875);

  CHECK_THROWS_AS(eval::rank_auc({0.1, 0.2}, {1, 1}), eval::SingleClassInput);
  CHECK_THROWS_AS(eval::rank_auc({0.1}, {1, 0}), Error);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(eval::rank_auc({0.1, inf}, {0, 1}), Error);
}

TEST_CASE("metric identities hold on random confusion inputs") {
  Rng rng(72);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = rng.uniform_int(1, 50);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
      scores.push_back(rng.uniform());
      labels.push_back(rng.uniform_int(0, 1));
    }
    const auto m = eval::compute_metrics(scores, labels);

    long long tp = 0, fp = 0, fn = 0, tn = 0;
    for (int i = 0; i < n; ++i) {
      const int pred = scores[static_cast<std::size_t>(i)] >= 0.5 ? 1 : 0;
      const int lab = labels[static_cast<std::size_t>(i)];
      tp += pred == 1 && lab == 1;
      fp += pred == 1 && lab == 0;
      fn += pred == 0 && lab == 1;
      tn += pred == 0 && lab == 0;
    }
    REQUIRE(m.tp == tp);
    REQUIRE(m.fp == fp);
    REQUIRE(m.fn == fn);
    REQUIRE(m.tn == tn);
    REQUIRE(m.tp + m.fp + m.fn + m.tn == n);

    const auto ratio = [](long long a, long long b) {
      return b > 0 ? static_cast<double>(a) / static_cast<double>(b) : 0.0;
    };
    REQUIRE(m.tpr == ratio(tp, tp + fn));
    REQUIRE(m.tnr == ratio(tn, tn + fp));
    REQUIRE(m.accuracy == ratio(tp + tn, n));
    REQUIRE(m.f1 == ratio(2 * tp, 2 * tp + fp + fn));
    REQUIRE(m.roc_auc.has_value() == (tp + fn > 0 && fp + tn > 0));
    if (m.roc_auc) REQUIRE(*m.roc_auc == eval::rank_auc(scores, labels));
  }
}

TEST_CASE("balanced class split cuts 806 per class into 484/161/161") {
  auto m = manifest_of(806, 806);
  eval::SplitConfig cfg;
  cfg.seed = 42;
  eval::balance_and_split(m, cfg);
  for (const auto label : {RelevanceLabel::relevant, RelevanceLabel::irrelevant}) {
    auto counts = split_counts(m, label);
    CHECK(counts[Split::train] == 484);
    CHECK(counts[Split::val] == 161);
    CHECK(counts[Split::test] == 161);
    CHECK(counts[Split::excluded] == 0);
    CHECK(counts[Split::unassigned] == 0);
  }
}

TEST_CASE("majority class downsampling marks the overflow excluded") {
  auto m = manifest_of(50, 30);
  eval::SplitConfig cfg;
  cfg.seed = 3;
  eval::balance_and_split(m, cfg);
  auto rel = split_counts(m, RelevanceLabel::relevant);
  auto irr = split_counts(m, RelevanceLabel::irrelevant);
  CHECK(rel[Split::excluded] == 20);
  CHECK(rel[Split::train] == 18);  // lround(0.6*30)
  CHECK(rel[Split::val] == 6);
  CHECK(rel[Split::test] == 6);
  CHECK(irr[Split::excluded] == 0);
  CHECK(irr[Split::train] == 18);
  CHECK(irr[Split::val] == 6);
  CHECK(irr[Split::test] == 6);

  eval::SplitConfig unbalanced = cfg;
  unbalanced.balance = false;
  auto m2 = manifest_of(50, 30);
  eval::balance_and_split(m2, unbalanced);
  CHECK(split_counts(m2, RelevanceLabel::relevant)[Split::excluded] == 0);
  CHECK(split_counts(m2, RelevanceLabel::relevant)[Split::train] == 30);  // lround(0.6*50)
}

TEST_CASE("splits are deterministic and trials with too few fixations drop out") {
  auto m = manifest_of(40, 40);
  m.trials.push_back(usable_trial("tiny", RelevanceLabel::relevant, 9));
  eval::SplitConfig cfg;
  cfg.seed = 11;
  eval::balance_and_split(m, cfg);
  CHECK(m.trials.back().split == Split::excluded);

  auto m2 = m;
  eval::balance_and_split(m2, cfg);
  CHECK(m2 == m);  // same seed, same assignment, prior assignments reconsidered

  auto m3 = m;
  eval::SplitConfig other = cfg;
  other.seed = 12;
  eval::balance_and_split(m3, other);
  bool any_differs = false;
  for (std::size_t i = 0; i < m.trials.size(); ++i)
    any_differs = any_differs || m.trials[i].split != m3.trials[i].split;
  CHECK(any_differs);
}

TEST_CASE("split validation errors") {
  auto m = manifest_of(30, 1);
  CHECK_THROWS_AS(eval::balance_and_split(m, {}), eval::EmptyClass);

  auto m2 = manifest_of(0, 30);
  CHECK_THROWS_AS(eval::balance_and_split(m2, {}), eval::EmptyClass);

  auto ok = manifest_of(10, 10);
  eval::SplitConfig bad;
  bad.train_frac = 0.7;  // no longer sums to 1
  CHECK_THROWS_AS(eval::balance_and_split(ok, bad), Error);
  bad.train_frac = 1.4;
  bad.val_frac = -0.2;
  CHECK_THROWS_AS(eval::balance_and_split(ok, bad), Error);
}

TEST_CASE("experiment reports round-trip through json") {
  eval::ExperimentReport r;
  r.n_train = 12;
  r.n_val = 4;
  r.n_test = 4;
  r.cnn.method = "cnn";
  r.forest.method = "forest";
  r.svm.method = "svm";
  r.cnn.test.tp = 3;
  r.cnn.test.fp = 1;
  r.cnn.test.fn = 0;
  r.cnn.test.tn = 4;
  r.cnn.test.tpr = 1.0;
  r.cnn.test.tnr = 0.8;
  r.cnn.test.accuracy = 0.875;
  r.cnn.test.f1 = 6.0 / 7.0;
  r.cnn.test.roc_auc = 0.9375;
  r.forest.val.accuracy = 0.5;  // roc_auc left unset on purpose
  nn::EpochStats e;
  e.epoch = 1;
  e.train_loss = 0.67;
  e.train_acc = 0.55;
  e.val_loss = 0.69;
  e.val_acc = 0.5;
  r.epochs.push_back(e);
  r.importances = {{"total_v_move", 0.4}, {"hv_ratio", 0.3}};

  const auto j = eval::report_json(r);
  const auto back = eval::report_from_json(j);
  CHECK(back.n_train == 12);
  CHECK(back.cnn.test.tp == 3);
  CHECK(back.cnn.test.f1 == r.cnn.test.f1);
  REQUIRE(back.cnn.test.roc_auc.has_value());
  CHECK(*back.cnn.test.roc_auc == 0.9375);
  CHECK_FALSE(back.forest.val.roc_auc.has_value());
  REQUIRE(back.epochs.size() == 1);
  CHECK(back.epochs[0].train_loss == 0.67);
  REQUIRE(back.importances.size() == 2);
  CHECK(back.importances[0].first == "total_v_move");

  // serialization is stable: dumping the round-tripped report matches
  CHECK(eval::report_json(back).dump() == j.dump());

  CHECK_THROWS_AS(eval::report_from_json(nlohmann::json{{"counts", 1}}), Error);

  const auto csv = eval::report_csv(r);
  CHECK(csv.rfind("method,split,tpr_pct,tnr_pct,acc_pct,roc_auc,f1\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);  // header + 3 methods x 3 splits
  CHECK(csv.find("cnn,test,100,80,87.5,0.9375,") != std::string::npos);
  CHECK(csv.find("forest,val,0,0,50,,0\n") != std::string::npos);
}
