#include <gtest/gtest.h>

#include "cvault/errors.hpp"
#include "cvault/sizing.hpp"

using namespace cvault;

namespace {

SizingInputs base() {
  SizingInputs in;
  in.cost_per_byte_second = 0.001;
  in.cost_per_fetch = 1.0;
  in.item_bytes = 10;
  in.reuse_intervals_s = {1000, 10, 200, 50, 100};
  return in;
}

}  // namespace

TEST(Sizing, BreakEvenInterval) {
  SizingReport r = size_cache(base());
  EXPECT_DOUBLE_EQ(r.break_even_interval_s, 100.0);
  EXPECT_DOUBLE_EQ(r.break_even_bytes, 30.0);  // intervals 10, 50, 100
  EXPECT_DOUBLE_EQ(r.recommended_bytes, 30.0);
  // Rates 1/interval: (0.1 + 0.02 + 0.01) / 0.136.
  EXPECT_NEAR(r.achieved_hit_rate, 0.13 / 0.136, 1e-12);
}

TEST(Sizing, HitRateGoalCanDominate) {
  SizingInputs in = base();
  in.hit_rate_goal = 0.97;
  SizingReport r = size_cache(in);
  // 0.135 / 0.136 is the first prefix share >= 0.97.
  EXPECT_DOUBLE_EQ(r.hit_rate_goal_bytes, 40.0);
  EXPECT_DOUBLE_EQ(r.recommended_bytes, 40.0);
  EXPECT_NEAR(r.achieved_hit_rate, 0.135 / 0.136, 1e-12);
}

TEST(Sizing, ExplicitRates) {
  SizingInputs in = base();
  in.access_rates = {5, 1, 1, 1, 1};
  in.hit_rate_goal = 0.5;
  SizingReport r = size_cache(in);
  // Sorted by interval the 1000 s item (rate 5) comes last.
  EXPECT_DOUBLE_EQ(r.hit_rate_goal_bytes, 50.0);
}

TEST(Sizing, CheaperFetchShrinksCache) {
  SizingInputs in = base();
  in.cost_per_fetch = 0.05;
  EXPECT_DOUBLE_EQ(size_cache(in).break_even_bytes, 0.0);
}

TEST(Sizing, RejectsBadInputs) {
  SizingInputs in = base();
  in.cost_per_byte_second = 0;
  EXPECT_THROW(size_cache(in), ValidationError);
  in = base();
  in.reuse_intervals_s.push_back(-1);
  EXPECT_THROW(size_cache(in), ValidationError);
  in = base();
  in.access_rates = {1};
  EXPECT_THROW(size_cache(in), ValidationError);
  in = base();
  in.hit_rate_goal = 1.5;
  EXPECT_THROW(size_cache(in), ValidationError);
}
