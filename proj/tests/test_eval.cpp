#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pfoa/error.hpp"
#include "pfoa/eval/folds.hpp"
#include "pfoa/eval/metrics.hpp"
#include "pfoa/eval/oof.hpp"
#include "pfoa/eval/report.hpp"

using namespace pfoa::eval;

namespace {

struct Scored {
  std::vector<double> s;
  std::vector<int> y;
};

// Both classes present; scores on a coarse grid so ties are common.
Scored random_scored(std::mt19937_64& rng, std::size_t max_n) {
  Scored d;
  const std::size_t n = 2 + pfoa::uniform_index(rng, max_n - 1);
  const int levels = 1 + static_cast<int>(pfoa::uniform_index(rng, 10));
  for (std::size_t i = 0; i < n; ++i) {
    d.y.push_back(pfoa::uniform01(rng) < 0.4);
    d.s.push_back(static_cast<double>(pfoa::uniform_index(rng, static_cast<std::uint64_t>(levels))) + 0.3 * d.y.back());
  }
  d.y[0] = 1;
  d.y[1] = 0;
  return d;
}

}  // namespace

TEST(Metrics, AucMatchesPairCountingAndApMatchesThresholdEnumeration) {
  auto rng = pfoa::make_stream(1, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto d = random_scored(rng, 30);
    EXPECT_EQ(roc_auc(d.s, d.y), oracle::pair_count_auc(d.s, d.y));
    EXPECT_NEAR(average_precision(d.s, d.y), oracle::threshold_enumeration_ap(d.s, d.y), 1e-15);
  }
}

TEST(Metrics, KnownValues) {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
  const std::vector<int> y{1, 0, 1, 0};
  EXPECT_DOUBLE_EQ(roc_auc(s, y), 0.75);
  EXPECT_DOUBLE_EQ(average_precision(s, y), 0.5 * 1.0 + 0.5 * (2.0 / 3.0));
  EXPECT_THROW(roc_auc(s, std::vector<int>{1, 1, 1, 1}), pfoa::ValidationError);
  EXPECT_THROW(average_precision(s, std::vector<int>{0, 0, 0, 0}), pfoa::ValidationError);
}

TEST(Metrics, RankInvarianceAndReversal) {
  auto rng = pfoa::make_stream(2, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = random_scored(rng, 60);
    std::vector<double> mono;
    std::vector<double> neg;
    for (double v : d.s) {
      mono.push_back(std::exp(0.3 * v) - 4.0);
      neg.push_back(-v);
    }
    const double auc = roc_auc(d.s, d.y);
    EXPECT_DOUBLE_EQ(roc_auc(mono, d.y), auc);
    EXPECT_NEAR(roc_auc(neg, d.y), 1.0 - auc, 1e-12);
    EXPECT_DOUBLE_EQ(average_precision(mono, d.y), average_precision(d.s, d.y));
  }
}

TEST(Metrics, CurvesAreMonotoneAndAnchored) {
  auto rng = pfoa::make_stream(3, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = random_scored(rng, 50);
    const auto roc = roc_curve(d.s, d.y);
    EXPECT_EQ(roc.points.front().x, 0.0);
    EXPECT_EQ(roc.points.front().y, 0.0);
    EXPECT_DOUBLE_EQ(roc.points.back().x, 1.0);
    EXPECT_DOUBLE_EQ(roc.points.back().y, 1.0);
    double area = 0.0;
    for (std::size_t i = 1; i < roc.points.size(); ++i) {
      EXPECT_GE(roc.points[i].x, roc.points[i - 1].x);
      EXPECT_GE(roc.points[i].y, roc.points[i - 1].y);
      EXPECT_LT(roc.points[i].threshold, roc.points[i - 1].threshold);
      area += (roc.points[i].x - roc.points[i - 1].x) * (roc.points[i].y + roc.points[i - 1].y) / 2.0;
    }
    EXPECT_NEAR(area, roc.auc, 1e-12);
    const auto pr = pr_curve(d.s, d.y);
    EXPECT_DOUBLE_EQ(pr.points.back().x, 1.0);
  }
}

TEST(Bootstrap, StratifiedResamplesKeepClassCounts) {
  const std::vector<int> y{1, 0, 0, 1, 0, 0, 0};
  auto rng = pfoa::make_stream(4, 0);
  for (int i = 0; i < 100; ++i) {
    const auto idx = stratified_resample(y, rng);
    ASSERT_EQ(idx.size(), y.size());
    int pos = 0;
    for (auto j : idx) pos += y[j];
    EXPECT_EQ(pos, 2);
  }
}

TEST(Bootstrap, IntervalIsDeterministicAndBracketsTheEstimate) {
  auto rng = pfoa::make_stream(5, 0);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 300; ++i) {
    y.push_back(i % 3 == 0);
    s.push_back(pfoa::standard_normal(rng) + y.back());
  }
  const auto a = bootstrap_ci(s, y, roc_auc, 500, 9);
  const auto b = bootstrap_ci(s, y, roc_auc, 500, 9);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
  const double auc = roc_auc(s, y);
  EXPECT_LT(a.lo, auc);
  EXPECT_GT(a.hi, auc);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 25.0), 2.0);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 50.0), 2.5);
}

TEST(Delong, IdenticalScoresGivePOne) {
  auto rng = pfoa::make_stream(6, 0);
  const auto d = random_scored(rng, 80);
  const auto r = delong_test(d.s, d.s, d.y);
  EXPECT_EQ(r.p, 1.0);
  EXPECT_EQ(r.z, 0.0);
  EXPECT_FALSE(r.degenerate);
}

TEST(Delong, VarianceAgreesWithBootstrap) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto rng = pfoa::make_stream(seed, 0xde);
    std::vector<double> a;
    std::vector<double> b;
    std::vector<int> y;
    for (int i = 0; i < 200; ++i) {
      y.push_back(pfoa::uniform01(rng) < 0.3);
      const double shared = pfoa::standard_normal(rng);
      a.push_back(shared + 1.0 * y.back() + 0.7 * pfoa::standard_normal(rng));
      b.push_back(shared + 0.6 * y.back() + 0.7 * pfoa::standard_normal(rng));
    }
    const auto r = delong_test(a, b, y);
    std::vector<double> diffs;
    for (int i = 0; i < 2000; ++i) {
      auto brng = pfoa::make_stream(seed, 0xbb, static_cast<std::uint64_t>(i));
      const auto idx = stratified_resample(y, brng);
      std::vector<double> ra;
      std::vector<double> rb;
      std::vector<int> ry;
      for (auto j : idx) {
        ra.push_back(a[j]);
        rb.push_back(b[j]);
        ry.push_back(y[j]);
      }
      diffs.push_back(roc_auc(ra, ry) - roc_auc(rb, ry));
    }
    double mean = 0.0;
    for (double v : diffs) mean += v;
    mean /= static_cast<double>(diffs.size());
    double var = 0.0;
    for (double v : diffs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(diffs.size() - 1);
    EXPECT_NEAR(r.variance / var, 1.0, 0.25) << "seed " << seed;
  }
}

TEST(Folds, PartitionWithoutLeakageAndBalanced) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto rng = pfoa::make_stream(seed, 0xf0);
    std::vector<std::string> ids;
    std::vector<int> y;
    const int subjects = 100 + static_cast<int>(pfoa::uniform_index(rng, 900));
    for (int s = 0; s < subjects; ++s) {
      const int knees = 1 + static_cast<int>(pfoa::uniform_index(rng, 2));
      const int label = pfoa::uniform01(rng) < 0.2;
      for (int k = 0; k < knees; ++k) {
        ids.push_back("S" + std::to_string(s));
        y.push_back(pfoa::uniform01(rng) < 0.8 ? label : 1 - label);
      }
    }
    const auto folds = stratified_group_kfold(ids, y, 5, seed);
    const auto a = oracle::audit_folds(folds, ids, y);
    EXPECT_TRUE(a.partition);
    EXPECT_TRUE(a.no_leakage);
    if (ids.size() / 5 >= 100) {
      EXPECT_LE(a.max_rate_gap, 0.02) << "seed " << seed;
    }
    std::size_t covered = 0;
    for (const auto& members : fold_members(folds, ids)) covered += members.size();
    EXPECT_EQ(covered, ids.size());
  }
}

TEST(Folds, SeedChangesAssignmentAndBadInputsThrow) {
  std::vector<std::string> ids;
  std::vector<int> y;
  for (int i = 0; i < 50; ++i) {
    ids.push_back("S" + std::to_string(i));
    y.push_back(i % 4 == 0);
  }
  EXPECT_EQ(stratified_group_kfold(ids, y, 5, 1).fold_of, stratified_group_kfold(ids, y, 5, 1).fold_of);
  EXPECT_NE(stratified_group_kfold(ids, y, 5, 1).fold_of, stratified_group_kfold(ids, y, 5, 2).fold_of);
  EXPECT_THROW(stratified_group_kfold(ids, y, 1, 0), pfoa::ValidationError);
  EXPECT_THROW(stratified_group_kfold(std::span(ids).first(3), std::span(y).first(3), 5, 0), pfoa::ValidationError);
}

namespace {

pfoa::data::DatasetManifest small_manifest(int subjects) {
  pfoa::data::DatasetManifest m;
  auto rng = pfoa::make_stream(7, 0);
  for (int s = 0; s < subjects; ++s) {
    for (auto side : {pfoa::data::Side::Left, pfoa::data::Side::Right}) {
      pfoa::data::KneeRecord r;
      r.subject_id = "S" + std::to_string(s);
      r.side = side;
      r.age = 60;
      r.pfoa = pfoa::uniform01(rng) < 0.3;
      if (s % 7) r.kl_grade = static_cast<int>(pfoa::uniform_index(rng, 5));
      if (s % 5) r.womac_pain = static_cast<double>(pfoa::uniform_index(rng, 21));
      m.records.push_back(r);
    }
  }
  return m;
}

std::vector<FoldModel> honest_models(const FoldAssignment& folds, const pfoa::data::DatasetManifest& m) {
  std::vector<FoldModel> models;
  for (int f = 0; f < folds.k; ++f) {
    FoldModel fm;
    fm.fold = f;
    for (const auto& r : m.records) {
      if (folds.fold(r.subject_id) != f) fm.training_subjects.insert(r.subject_id);
    }
    fm.score = [f](const pfoa::data::KneeRecord& r) { return r.age / 100.0 + f + (r.pfoa.value_or(false) ? 0.5 : 0.0); };
    models.push_back(fm);
  }
  return models;
}

}  // namespace

TEST(OutOfFold, EachKneeScoredByItsHeldOutModel) {
  const auto m = small_manifest(60);
  const auto folds = stratified_group_kfold(m, 4, 3);
  const auto set = assemble_oof(folds, honest_models(folds, m), m);
  ASSERT_EQ(set.size(), m.records.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    EXPECT_EQ(set.folds[i], folds.fold(set.keys[i].subject_id));
    EXPECT_EQ(std::floor(set.scores[i] - 0.6 + 1e-9), set.folds[i]);
  }
}

TEST(OutOfFold, LeakageAndMissingModelsAreCaught) {
  const auto m = small_manifest(40);
  const auto folds = stratified_group_kfold(m, 4, 3);
  auto models = honest_models(folds, m);
  models[1].training_subjects.insert(m.records[0].subject_id);
  models[1].training_subjects.insert(m.records.back().subject_id);
  for (const auto& r : m.records) {
    if (folds.fold(r.subject_id) == 1) models[1].training_subjects.insert(r.subject_id);
  }
  EXPECT_THROW(assemble_oof(folds, models, m), pfoa::ValidationError);
  auto fewer = honest_models(folds, m);
  fewer.pop_back();
  EXPECT_THROW(assemble_oof(folds, fewer, m), pfoa::ValidationError);
}

TEST(Subgroups, RowsMatchRecomputationOnFilteredSets) {
  const auto m = small_manifest(200);
  const auto folds = stratified_group_kfold(m, 5, 3);
  auto models = honest_models(folds, m);
  for (auto& fm : models) {
    fm.score = [](const pfoa::data::KneeRecord& r) {
      return (r.pfoa.value_or(false) ? 0.3 : 0.0) + static_cast<double>(std::hash<std::string>{}(r.key().str()) % 1000) / 1000.0;
    };
  }
  const auto set = assemble_oof(folds, models, m);
  const auto rows = subgroup_report("x", set, 50, 1);
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0].group, "All");
  EXPECT_EQ(rows[0].n, set.size());

  const auto kl = kl_groups(set);
  const auto pain = pain_groups(set);
  std::size_t kl_total = 0;
  std::size_t pain_total = 0;
  for (const auto& row : rows) {
    if (row.group == "All") continue;
    const auto& labels = row.group.find("pain") != std::string::npos || row.group.find("Pain") != std::string::npos
                             ? pain
                             : kl;
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (labels[i] == row.group) {
        s.push_back(set.scores[i]);
        y.push_back(set.labels[i]);
      }
    }
    ASSERT_EQ(row.n, s.size()) << row.group;
    (&labels == &pain ? pain_total : kl_total) += row.n;
    if (row.computable) {
      EXPECT_EQ(row.auc, roc_auc(s, y)) << row.group;
      EXPECT_EQ(row.ap, average_precision(s, y)) << row.group;
    }
  }
  EXPECT_EQ(kl_total, set.size());
  EXPECT_EQ(pain_total, set.size());
}

TEST(Report, MetricsCsvShape) {
  MetricsRow ok{"cnn", "All", 10, 3, true, 0.8, {0.7, 0.9}, 0.6, {0.5, 0.7}};
  MetricsRow none{"cnn", "KL missing", 2, 0, false, 0, {}, 0, {}};
  const std::vector<MetricsRow> rows{ok, none};
  const auto text = format_metrics(rows);
  EXPECT_EQ(text.substr(0, kMetricsHeader.size()), kMetricsHeader);
  EXPECT_NE(text.find("cnn,All,0.8,0.7,0.9,0.6,0.5,0.7,10,3"), std::string::npos);
  EXPECT_NE(text.find("cnn,KL missing,not computable,,,,,,2,0"), std::string::npos);
  const std::vector<SvgCurve> curves{{"a", roc_curve(std::vector<double>{1, 0}, std::vector<int>{1, 0}).points}};
  const auto svg = render_curve_svg("t", "x", "y", curves, true);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}
