#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "promptfocus/errors.hpp"
#include "promptfocus/gradcheck.hpp"
#include "promptfocus/pff.hpp"

TEST(GradCheck, TensorCorePasses) {
  const auto r = pf::run_gradcheck(pf::GradScope::TensorCore);
  for (const auto& e : r.entries) EXPECT_TRUE(e.passed) << e.check << " " << e.parameter << " " << e.max_rel_error;
  EXPECT_TRUE(r.passed());
  std::set<std::string> checks;
  for (const auto& e : r.entries) checks.insert(e.check);
  for (const char* op : {"matmul", "softmax_rows", "gelu", "cross_entropy", "multi_head_attention"})
    EXPECT_TRUE(checks.count(op)) << op;
}

TEST(GradCheck, PffPassesAndCoversEveryParameter) {
  const auto r = pf::run_gradcheck(pf::GradScope::Pff);
  EXPECT_TRUE(r.passed()) << r.to_json().dump(1);
  pf::RngState rng(0);
  pf::pff::PffDims d;
  d.width = 8;
  d.tokens = 2;
  d.heads = 2;
  for (const auto& nt : pf::pff::PffParams::init(d, rng).named_tensors("pff")) {
    const bool covered = std::any_of(r.entries.begin(), r.entries.end(), [&](const auto& e) {
      return e.check == "pff.full.image_query" && e.parameter == nt.name;
    });
    EXPECT_TRUE(covered) << nt.name;
  }
  bool f_i = false;
  for (const auto& e : r.entries) f_i |= e.parameter == "f_i";
  EXPECT_TRUE(f_i);
}

TEST(GradCheck, InjectedFaultIsCaught) {
  pf::GradCheckOptions o;
  o.inject_fault = true;
  const auto r = pf::run_gradcheck(pf::GradScope::TensorCore, o);
  EXPECT_FALSE(r.passed());
  EXPECT_EQ(r.failing_checks(), (std::vector<std::string>{"faulty_square"}));
  const auto j = r.to_json();
  EXPECT_FALSE(j.at("passed").get<bool>());
  EXPECT_EQ(j.at("failing")[0], "faulty_square");
}

TEST(GradCheck, ScopeStrings) {
  for (auto s : {pf::GradScope::TensorCore, pf::GradScope::Pff, pf::GradScope::All})
    EXPECT_EQ(pf::grad_scope_from_string(pf::to_string(s)), s);
  EXPECT_THROW(pf::grad_scope_from_string("everything"), pf::ConfigError);
}
