// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "scenediff/errors.hpp"
#include "scenediff/gradcheck.hpp"
#include "scenediff/textenc.hpp"
#include "test_helpers.hpp"

using namespace scenediff;

namespace {

TextEncoderConfig small_config() {
  TextEncoderConfig c;
  c.d_text = 8;
  c.layers = 2;
  c.heads = 2;
  c.max_len = 8;
  c.mlp_ratio = 2;
  return c;
}

}  // namespace

TEST(Tokenize, Cases) {
  const Vocabulary v = Vocabulary::grammar_default();
  EXPECT_TRUE(tokenize("", v).empty());
  EXPECT_EQ(tokenize("A red circle.", v), (std::vector<std::int64_t>{v.id("a"), v.id("red"), v.id("circle")}));
  EXPECT_EQ(tokenize("zzz-unknown", v), (std::vector<std::int64_t>{Vocabulary::kUnk}));
}

TEST(Vocabulary, ReservedIdsAndLinesRoundTrip) {
  const Vocabulary v = Vocabulary::grammar_default();
  EXPECT_EQ(v.token(Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.token(Vocabulary::kUnk), "<unk>");
  EXPECT_EQ(v.token(Vocabulary::kNull), "<null>");
  const Vocabulary back = Vocabulary::from_lines(v.to_lines());
  ASSERT_EQ(back.size(), v.size());
  for (std::int64_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(back.token(i), v.token(i));
    EXPECT_EQ(back.id(v.token(i)), i);
  }
  EXPECT_EQ(v.id("hexagon"), Vocabulary::kUnk);
}

TEST(TextEncoder, ShapeContract) {
  ParamStore store;
  Rng rng(1);
  const Vocabulary v = Vocabulary::grammar_default();
  TextEncoder enc(store, "text", small_config(), v.size(), rng);
  for (std::int64_t len = 1; len <= 8; ++len) {
    std::vector<std::int64_t> toks(static_cast<std::size_t>(len), v.id("red"));
    const auto e = enc.encode(toks);
    EXPECT_EQ(e.seq.shape(), (Shape{len, 8}));
    EXPECT_EQ(e.mask.size(), static_cast<std::size_t>(len));
  }
  EXPECT_EQ(enc.encode({}).seq.shape(), (Shape{1, 8}));
  EXPECT_THROW(enc.encode(std::vector<std::int64_t>(9, 3)), ShapeError);
}

TEST(TextEncoder, PositionSensitive) {
  ParamStore store;
  Rng rng(2);
  const Vocabulary v = Vocabulary::grammar_default();
  TextEncoder enc(store, "text", small_config(), v.size(), rng);
  const auto ab = enc.encode({v.id("red"), v.id("circle")});
  const auto ba = enc.encode({v.id("circle"), v.id("red")});
  EXPECT_GT(testutil::max_abs_diff(ab.seq, ba.seq), 1e-6);
}

TEST(TextEncoder, PurelyDeterministic) {
  ParamStore store;
  Rng rng(2);
  const Vocabulary v = Vocabulary::grammar_default();
  TextEncoder enc(store, "text", small_config(), v.size(), rng);
  const std::vector<std::int64_t> toks{v.id("a"), v.id("blue"), v.id("square")};
  EXPECT_EQ(testutil::to_vec(enc.encode(toks).seq), testutil::to_vec(enc.encode(toks).seq));
}

TEST(TextEncoder, PaddingDoesNotLeak) {
  ParamStore store;
  Rng rng(4);
  const Vocabulary v = Vocabulary::grammar_default();
  TextEncoder enc(store, "text", small_config(), v.size(), rng);
  Rng gen(40);
  for (int trial = 0; trial < 20; ++trial) {
    const auto len = 1 + static_cast<std::int64_t>(gen.uniform_int(5));
    std::vector<std::int64_t> toks;
    for (std::int64_t i = 0; i < len; ++i) toks.push_back(3 + static_cast<std::int64_t>(gen.uniform_int(static_cast<std::uint64_t>(v.size() - 3))));
    const auto base = enc.encode(toks);
    auto padded_toks = toks;
    const auto pads = 1 + gen.uniform_int(static_cast<std::uint64_t>(8 - len));
    for (std::uint64_t p = 0; p < pads; ++p) padded_toks.push_back(Vocabulary::kPad);
    const auto padded = enc.encode(padded_toks);
    for (std::int64_t i = 0; i < len * 8; ++i) EXPECT_NEAR(padded.seq.at(i), base.seq.at(i), 1e-6);
    for (std::int64_t i = len * 8; i < padded.seq.numel(); ++i) EXPECT_EQ(padded.seq.at(i), 0.0);
    for (std::size_t i = 0; i < padded.mask.size(); ++i) EXPECT_EQ(padded.mask[i], i < static_cast<std::size_t>(len) ? 1 : 0);
  }
}

TEST(TextEncoder, GradientCheck) {
  ParamStore store;
  Rng rng(6);
  const Vocabulary v = Vocabulary::grammar_default();
  TextEncoder enc(store, "text", small_config(), v.size(), rng);
  Rng wr(60);
  const Tensor w = testutil::random_tensor(wr, {4, 8});
  const std::vector<std::int64_t> toks{v.id("a"), v.id("green"), v.id("triangle"), Vocabulary::kPad};
  auto loss = [&] { return sum(mul(enc.encode(toks).seq, w)); };
  GradCheckOptions opt;
  opt.max_entries = 24;
  const auto report = grad_check(loss, store.trainable(), opt);
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst;
}

TEST(SinusoidalTable, KnownValues) {
  const auto pe = sinusoidal_table(3, 4);
  EXPECT_DOUBLE_EQ(pe[0], 0.0);
  EXPECT_DOUBLE_EQ(pe[1], 1.0);
  EXPECT_DOUBLE_EQ(pe[4], std::sin(1.0));
  EXPECT_DOUBLE_EQ(pe[5], std::cos(1.0));
  EXPECT_NEAR(pe[6], std::sin(1.0 / 100.0), 1e-15);
}
