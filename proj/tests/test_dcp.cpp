#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "promptfocus/dcp.hpp"
#include "promptfocus/errors.hpp"
#include "promptfocus/rng.hpp"

using pf::dcp::DcpConfig;
using pf::dcp::PromptSelection;

namespace {

struct Instance {
  pf::CategoryLibrary lib;
  pf::EmbeddingTable table;
  pf::SimilarityScores scores;
};

std::vector<std::string> names_for(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

pf::SimilarityScores softmax_scores(std::vector<double> logits) {
  pf::SimilarityScores s;
  s.values = oracle::softmax(logits);
  s.normalized = true;
  return s;
}

Instance random_instance(std::size_t n, std::size_t dim, double logit_scale, pf::RngState& rng) {
  const auto names = names_for(n);
  std::vector<double> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = pf::normalized(rng.normal_vector(dim, 1.0));
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return {pf::CategoryLibrary(names), pf::EmbeddingTable(names, dim, rows),
          softmax_scores(rng.normal_vector(n, logit_scale))};
}

// Two tight groups of five around orthogonal axes.
Instance two_groups(pf::RngState& rng) {
  const std::size_t dim = 6;
  const auto names = names_for(10);
  std::vector<double> rows;
  for (std::size_t i = 0; i < 10; ++i) {
    std::vector<double> v(dim, 0.0);
    v[i < 5 ? 0 : 1] = 1.0;
    const auto jitter = rng.normal_vector(dim, 0.05);
    for (std::size_t j = 0; j < dim; ++j) v[j] += jitter[j];
    const auto r = pf::normalized(v);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return {pf::CategoryLibrary(names), pf::EmbeddingTable(names, dim, rows),
          softmax_scores(rng.normal_vector(10, 0.3))};
}

oracle::Selected as_oracle(const PromptSelection& s) {
  return {s.cls, s.sim, s.final_tau_f, s.final_tau_c};
}

}  // namespace

TEST(Filter, StrictInequality) {
  const pf::CategoryLibrary lib(names_for(3));
  pf::SimilarityScores s{{0.5, 0.25, 0.25}, true};
  const auto sel = pf::dcp::category_filter(s, lib, 0.25);
  EXPECT_EQ(sel.cls, (std::vector<std::string>{"c0"}));
}

TEST(Filter, KeepsLibraryOrder) {
  const pf::CategoryLibrary lib(names_for(3));
  pf::SimilarityScores s{{0.2, 0.5, 0.3}, true};
  const auto sel = pf::dcp::category_filter(s, lib, 0.25);
  EXPECT_EQ(sel.cls, (std::vector<std::string>{"c1", "c2"}));
  EXPECT_EQ(sel.sim, (std::vector<double>{0.5, 0.3}));
}

TEST(Filter, RejectsUnnormalizedScores) {
  const pf::CategoryLibrary lib(names_for(2));
  EXPECT_THROW(pf::dcp::category_filter({{0.5, 0.5}, false}, lib, 0.1), pf::ContractError);
  EXPECT_THROW(pf::dcp::category_filter({{1.0}, true}, lib, 0.1), pf::ContractError);
}

TEST(Filter, MatchesBruteForceOnLargeLibrary) {
  pf::RngState rng(11);
  const pf::CategoryLibrary lib(names_for(1000));
  const auto s = softmax_scores(rng.normal_vector(1000, 2.0));
  for (double tau : {0.0005, 0.001, 0.002, 0.01}) {
    const auto sel = pf::dcp::category_filter(s, lib, tau);
    std::vector<std::string> expect;
    for (std::size_t i = 0; i < 1000; ++i)
      if (s.values[i] > tau) expect.push_back(lib.names()[i]);
    EXPECT_EQ(sel.cls, expect) << tau;
  }
}

TEST(Cluster, ZeroThresholdKeepsEverything) {
  pf::RngState rng(2);
  const auto inst = random_instance(6, 4, 1.0, rng);
  const auto sel = pf::dcp::category_filter(inst.scores, inst.lib, 0.0);
  const auto r = pf::dcp::hierarchical_cluster(sel, inst.table, 0.0);
  EXPECT_EQ(r.selection.size(), 6u);
  for (std::size_t i = 1; i < r.selection.size(); ++i) EXPECT_GE(r.selection.sim[i - 1], r.selection.sim[i]);
}

TEST(Cluster, HugeThresholdKeepsOne) {
  pf::RngState rng(3);
  const auto inst = random_instance(6, 4, 1.0, rng);
  const auto sel = pf::dcp::category_filter(inst.scores, inst.lib, 0.0);
  const auto r = pf::dcp::hierarchical_cluster(sel, inst.table, 10.0);
  ASSERT_EQ(r.selection.size(), 1u);
  ASSERT_EQ(r.clusters.size(), 1u);
  EXPECT_EQ(r.clusters[0].size(), 6u);
  EXPECT_EQ(r.tree.merges.size(), 5u);
}

TEST(Cluster, AverageLinkageMatchesNaiveRecomputation) {
  pf::RngState rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(12);
    std::vector<std::vector<double>> rows;
    std::vector<double> d(n * n);
    for (std::size_t i = 0; i < n; ++i) rows.push_back(pf::normalized(rng.normal_vector(3, 1.0)));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] = oracle::euclid(rows[i], rows[j]);
    const auto merges = pf::dcp::average_linkage(d, n);
    ASSERT_EQ(merges.size(), n - 1);
    for (std::size_t t = 1; t < merges.size(); ++t) EXPECT_GE(merges[t].distance, merges[t - 1].distance - 1e-12);
    for (double thr : {0.3, 0.6, 0.9, 1.2}) {
      auto got = pf::dcp::cut_dendrogram(merges, n, thr);
      auto want = oracle::average_linkage_clusters(rows, thr);
      for (auto* cs : {&got, &want}) {
        for (auto& c : *cs) std::sort(c.begin(), c.end());
        std::sort(cs->begin(), cs->end());
      }
      EXPECT_EQ(got, want) << "n=" << n << " thr=" << thr;
    }
  }
}

TEST(Cluster, RepresentativeIsMostCentral) {
  // b sits between a and c, so it is the member closest to the centroid.
  const std::vector<std::string> names{"a", "b", "c"};
  const double s = std::sqrt(0.5);
  const pf::EmbeddingTable t(names, 2, {1, 0, s, s, 0, 1});
  PromptSelection sel;
  sel.cls = names;
  sel.sim = {0.5, 0.1, 0.4};
  const auto r = pf::dcp::hierarchical_cluster(sel, t, 5.0);
  EXPECT_EQ(r.selection.cls, (std::vector<std::string>{"b"}));
  EXPECT_DOUBLE_EQ(r.selection.sim[0], 0.1);
}

TEST(Schedule, TwoGroupsMatchReplay) {
  pf::RngState rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = two_groups(rng);
    DcpConfig cfg;
    cfg.max_classes = 2;
    cfg.tau_f_min = 0.01;
    cfg.tau_f_max = 0.05;
    cfg.delta_tau_f = 0.01;
    const auto got = pf::dcp::select_from_scores(inst.scores, inst.lib, inst.table, cfg);
    const auto want = oracle::replay_schedule(inst.scores.values, inst.table, cfg);
    EXPECT_EQ(as_oracle(got), want);
    EXPECT_LE(got.size(), 2u);
    EXPECT_GE(got.size(), 1u);
  }
}

TEST(Schedule, RandomInstancesMatchReplay) {
  pf::RngState rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = random_instance(5 + rng.below(40), 4, 1.5, rng);
    DcpConfig cfg;
    cfg.tau_f_min = 0.001 * static_cast<double>(1 + rng.below(10));
    cfg.delta_tau_f = 0.005;
    cfg.tau_f_max = cfg.tau_f_min + 0.005 * static_cast<double>(rng.below(6));
    cfg.max_classes = 1 + rng.below(8);
    const auto want = oracle::replay_schedule(inst.scores.values, inst.table, cfg);
    if (want.cls.empty()) {
      EXPECT_THROW(pf::dcp::select_from_scores(inst.scores, inst.lib, inst.table, cfg), pf::dcp::EmptySelection);
      continue;
    }
    EXPECT_EQ(as_oracle(pf::dcp::select_from_scores(inst.scores, inst.lib, inst.table, cfg)), want);
  }
}

TEST(Schedule, SingleClassLibrary) {
  const pf::CategoryLibrary lib({"road"});
  const pf::EmbeddingTable t({"road"}, 2, {1, 0});
  const auto sel = pf::dcp::select_prompts(std::vector<double>{0.6, 0.8}, lib, t, DcpConfig{});
  ASSERT_EQ(sel.size(), 1u);
  EXPECT_EQ(sel.cls[0], "road");
  EXPECT_DOUBLE_EQ(sel.sim[0], 1.0);
  EXPECT_EQ(sel.iterations_used, 1u);
}

TEST(Schedule, RecordsThresholdsAtDefaults) {
  pf::RngState rng(12);
  const auto inst = random_instance(40, 8, 3.0, rng);
  DcpConfig cfg;
  const auto sel = pf::dcp::select_from_scores(inst.scores, inst.lib, inst.table, cfg);
  EXPECT_GE(sel.final_tau_f, cfg.tau_f_min);
  EXPECT_LE(sel.final_tau_f, cfg.tau_f_max + 1e-12);
  EXPECT_GE(sel.final_tau_c, cfg.tau_c_min);
  EXPECT_LE(sel.final_tau_c, cfg.tau_c_max + 1e-12);
  EXPECT_GE(sel.iterations_used, 1u);
  EXPECT_LE(sel.iterations_used, cfg.max_iterations());
}

TEST(Schedule, EmptySelectionCarriesSummary) {
  const pf::CategoryLibrary lib(names_for(4));
  const pf::EmbeddingTable t(names_for(4), 2, {1, 0, 0, 1, -1, 0, 0, -1});
  DcpConfig cfg;
  cfg.tau_f_min = 0.5;
  cfg.tau_f_max = 0.6;
  cfg.delta_tau_f = 0.1;
  try {
    pf::dcp::select_from_scores({{0.25, 0.25, 0.25, 0.25}, true}, lib, t, cfg);
    FAIL();
  } catch (const pf::dcp::EmptySelection& e) {
    EXPECT_EQ(e.summary().count, 4u);
    EXPECT_DOUBLE_EQ(e.summary().max, 0.25);
    EXPECT_NE(std::string(e.what()).find("0.5"), std::string::npos);
  }
}

TEST(Schedule, InvariantToLibraryPermutation) {
  pf::RngState rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = random_instance(30, 6, 2.0, rng);
    std::vector<std::size_t> perm(30);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = 29; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    std::vector<std::string> names;
    std::vector<double> rows, probs;
    for (auto p : perm) {
      names.push_back(inst.lib.names()[p]);
      rows.insert(rows.end(), inst.table.row(p).begin(), inst.table.row(p).end());
      probs.push_back(inst.scores.values[p]);
    }
    const pf::CategoryLibrary lib2(names);
    const pf::EmbeddingTable t2(names, 6, rows);
    DcpConfig cfg;
    cfg.max_classes = 5;
    cfg.tau_f_min = 0.01;
    cfg.tau_f_max = 0.03;
    cfg.delta_tau_f = 0.01;
    try {
      const auto a = pf::dcp::select_from_scores(inst.scores, inst.lib, inst.table, cfg);
      const auto b = pf::dcp::select_from_scores({probs, true}, lib2, t2, cfg);
      EXPECT_EQ(a.cls, b.cls);
      EXPECT_EQ(a.sim, b.sim);
    } catch (const pf::dcp::EmptySelection&) {
      EXPECT_THROW(pf::dcp::select_from_scores({probs, true}, lib2, t2, cfg), pf::dcp::EmptySelection);
    }
  }
}

TEST(Schedule, ConfigValidation) {
  DcpConfig c;
  c.tau_f_max = 0.001;
  EXPECT_THROW(c.validate(), pf::ConfigError);
  c = DcpConfig{};
  c.max_classes = 0;
  EXPECT_THROW(c.validate(), pf::ConfigError);
  c = DcpConfig{};
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), pf::ConfigError);
  EXPECT_EQ(DcpConfig{}.max_iterations(), 4u);
}

TEST(Selection, JsonRoundTrip) {
  PromptSelection s;
  s.cls = {"minibus", "road"};
  s.sim = {0.4, 0.1 + 1e-17};
  s.iterations_used = 3;
  s.final_tau_f = 0.004;
  s.final_tau_c = 4.0;
  s.exited_by_count = false;
  const auto back = pf::dcp::selection_from_json(nlohmann::json::parse(pf::dcp::to_json(s).dump()));
  EXPECT_EQ(back.cls, s.cls);
  EXPECT_EQ(back.sim, s.sim);
  EXPECT_EQ(back.iterations_used, 3u);
  EXPECT_EQ(back.final_tau_f, 0.004);
  EXPECT_FALSE(back.exited_by_count);
  EXPECT_THROW(pf::dcp::selection_from_json(nlohmann::json{{"cls", {"a"}}, {"sim", {0.1, 0.2}}}), pf::Error);
}
