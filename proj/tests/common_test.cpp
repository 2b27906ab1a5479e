#include <gtest/gtest.h>

#include "cvault/bytes.hpp"
#include "cvault/errors.hpp"
#include "cvault/stats.hpp"

using namespace cvault;

TEST(Hex, RoundTrip) {
  Bytes b{0x00, 0x01, 0xab, 0xff};
  EXPECT_EQ(to_hex(b), "0001abff");
  EXPECT_EQ(from_hex("0001ABff"), b);
}

TEST(Hex, RejectsMalformed) {
  EXPECT_THROW(from_hex("abc"), ValidationError);
  EXPECT_THROW(from_hex("zz"), ValidationError);
  EXPECT_THROW(array_from_hex<4>("0011"), ValidationError);
}

TEST(ByteCodec, LittleEndianRoundTrip) {
  ByteWriter w;
  w.u8(0x12);
  w.u16(0x3456);
  w.u32(0x789abcde);
  w.u64(0x0123456789abcdefULL);
  EXPECT_EQ(to_hex(w.buffer()), "125634debc9a78efcdab8967452301");
  ByteReader r(w.buffer(), "test");
  EXPECT_EQ(r.u8(), 0x12);
  EXPECT_EQ(r.u16(), 0x3456);
  EXPECT_EQ(r.u32(), 0x789abcdeu);
  EXPECT_EQ(r.u64(), 0x0123456789abcdefULL);
  EXPECT_TRUE(r.done());
  EXPECT_THROW(r.u8(), ValidationError);
}

TEST(ByteCodec, TruncatedReadNamesContext) {
  Bytes b{1, 2};
  ByteReader r(b, "widget header");
  try {
    r.u32();
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("widget header"), std::string::npos);
  }
}

TEST(Stats, NearestRankPercentile) {
  std::vector<double> v;
  for (int i = 1000; i >= 1; --i) v.push_back(i);
  EXPECT_EQ(percentile(v, 0.5), 500);
  EXPECT_EQ(percentile(v, 0.999), 999);
  EXPECT_EQ(percentile(v, 1.0), 1000);
  EXPECT_EQ(percentile(v, 0.0), 1);
  EXPECT_EQ(percentile({}, 0.5), 0);
}

TEST(Stats, EmpiricalCdfEndsAtOne) {
  std::vector<double> v{3, 1, 2};
  auto cdf = empirical_cdf(v);
  ASSERT_EQ(cdf.size(), 3u);
  EXPECT_EQ(cdf[0].first, 1);
  EXPECT_DOUBLE_EQ(cdf[0].second, 1.0 / 3);
  EXPECT_EQ(cdf.back().second, 1.0);

  std::vector<double> many(10007);
  for (std::size_t i = 0; i < many.size(); ++i) many[i] = static_cast<double>(i);
  auto thin = empirical_cdf(many, 100);
  EXPECT_LE(thin.size(), 101u);
  EXPECT_EQ(thin.back().second, 1.0);
  for (std::size_t i = 1; i < thin.size(); ++i) EXPECT_GT(thin[i].second, thin[i - 1].second);
}

TEST(Stats, Mean) {
  EXPECT_DOUBLE_EQ(mean({1, 2, 3, 4}), 2.5);
  EXPECT_EQ(mean({}), 0.0);
}
