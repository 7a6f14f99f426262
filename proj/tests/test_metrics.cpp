#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <vector>

#include "vitsel/metrics.hpp"
#include "vitsel/rng.hpp"

namespace vitsel {
namespace {

TEST(MacroF1, PerfectPrediction) {
  const LabelVector y({0, 1, 2, 2, 1, 0});
  const F1Report r = macro_f1(y, y);
  EXPECT_EQ(r.macro, 1.0);
  EXPECT_TRUE(r.undefined_classes.empty());
}

TEST(MacroF1, HandComputedCase) {
  // Confusion: class 0 TP=1 FN=1; class 1 TP=1 FP=1; class 2 TP=1.
  const F1Report r = macro_f1(LabelVector({0, 0, 1, 2}), LabelVector({0, 1, 1, 2}));
  EXPECT_NEAR(r.per_class[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.per_class[1], 2.0 / 3.0, 1e-12);
  EXPECT_EQ(r.per_class[2], 1.0);
  EXPECT_NEAR(r.macro, 7.0 / 9.0, 1e-12);
  EXPECT_EQ(r.confusion.counts[0][1], 1u);
  EXPECT_EQ(r.confusion.total(), 4u);
}

TEST(MacroF1, AbsentClassScoresZeroAndIsFlagged) {
  const F1Report r = macro_f1(LabelVector({0, 1}), LabelVector({0, 1}));
  EXPECT_EQ(r.per_class[2], 0.0);
  ASSERT_EQ(r.undefined_classes.size(), 1u);
  EXPECT_EQ(r.undefined_classes[0], 2);
  EXPECT_NEAR(r.macro, 2.0 / 3.0, 1e-12);
}

TEST(MacroF1, Errors) {
  EXPECT_THROW(macro_f1(LabelVector({0}), LabelVector({0, 1})), Error);
  EXPECT_THROW(macro_f1(LabelVector(), LabelVector()), Error);
}

TEST(MacroF1, OrderAndRelabelInvariant) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(30);
    std::vector<int> t(n);
    std::vector<int> p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.index(3));
      p[i] = static_cast<int>(rng.index(3));
    }
    const double base = macro_f1(LabelVector(t), LabelVector(p)).macro;
    EXPECT_GE(base, 0.0);
    EXPECT_LE(base, 1.0);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<int> ts(n);
    std::vector<int> ps(n);
    for (std::size_t i = 0; i < n; ++i) {
      ts[i] = t[order[i]];
      ps[i] = p[order[i]];
    }
    EXPECT_NEAR(macro_f1(LabelVector(ts), LabelVector(ps)).macro, base, 1e-15);

    std::array<int, 3> relabel = {0, 1, 2};
    std::vector<int> perm(relabel.begin(), relabel.end());
    rng.shuffle(std::span<int>(perm));
    for (std::size_t i = 0; i < n; ++i) {
      ts[i] = perm[static_cast<std::size_t>(t[i])];
      ps[i] = perm[static_cast<std::size_t>(p[i])];
    }
    EXPECT_NEAR(macro_f1(LabelVector(ts), LabelVector(ps)).macro, base, 1e-12);
  }
}

TEST(MacroF1, OneOnlyForDiagonalWithAllClasses) {
  EXPECT_LT(macro_f1(LabelVector({0, 1, 2}), LabelVector({0, 1, 1})).macro, 1.0);
  EXPECT_LT(macro_f1(LabelVector({0, 1, 1}), LabelVector({0, 1, 1})).macro, 1.0);
}

}  // namespace
}  // namespace vitsel
