#include <gtest/gtest.h>

#include "support.hpp"

using namespace llmaudit;

TEST(PromptNumber, SixSignificantDigitsTrimmed) {
  EXPECT_EQ(text::prompt_number(1.5), "1.5");
  EXPECT_EQ(text::prompt_number(0.0), "0");
  EXPECT_EQ(text::prompt_number(-0.0), "0");
  EXPECT_EQ(text::prompt_number(1094284.0), "1094280");
  EXPECT_EQ(text::prompt_number(2104.43), "2104.43");
  EXPECT_EQ(text::prompt_number(-3039.4), "-3039.4");
  EXPECT_EQ(text::prompt_number(0.000123456789), "0.000123457");
  EXPECT_EQ(text::prompt_number(35000.0), "35000");
  EXPECT_EQ(text::prompt_number(1e12), "1000000000000");
  EXPECT_EQ(text::prompt_number(0.1), "0.1");
  EXPECT_EQ(text::prompt_number(999999.5), "1000000");
}

TEST(PromptNumber, NeverExponentNotation) {
  Rng rng(99);
  for (int i = 0; i < 2000; ++i) {
    const double v = (uniform01(rng) - 0.5) * std::pow(10.0, static_cast<double>(uniform_index(rng, 24)) - 12.0);
    const auto s = text::prompt_number(v);
    EXPECT_EQ(s.find_first_of("eE"), std::string::npos) << s;
    // Reading back loses at most the rounding to 6 significant digits.
    const auto back = text::parse_double(s);
    ASSERT_TRUE(back) << s;
    EXPECT_LE(std::abs(*back - v), std::abs(v) * 5e-6 + 1e-300) << v << " -> " << s;
  }
}

TEST(ParseDouble, WholeStringOnly) {
  EXPECT_EQ(text::parse_double(" 2.5 "), 2.5);
  EXPECT_EQ(text::parse_double("+3"), 3.0);
  EXPECT_FALSE(text::parse_double("2.5x"));
  EXPECT_FALSE(text::parse_double(""));
  EXPECT_FALSE(text::parse_double("nan"));
  EXPECT_FALSE(text::parse_double("inf"));
}

TEST(ExactNumber, RoundTripsBitwise) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = standard_normal(rng) * std::pow(10.0, static_cast<double>(uniform_index(rng, 20)) - 10.0);
    EXPECT_EQ(*text::parse_double(text::exact(v)), v);
  }
}

TEST(Csv, QuotedFieldsAndEmbeddedNewlines) {
  const auto rows = csv::parse("a,b,c\r\n\"x, y\",\"he said \"\"hi\"\"\",\"line1\nline2\"\n1,,3\n");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][0], "x, y");
  EXPECT_EQ(rows[1][1], "he said \"hi\"");
  EXPECT_EQ(rows[1][2], "line1\nline2");
  EXPECT_EQ(rows[2], (csv::Row{"1", "", "3"}));
}

TEST(Csv, RejectsUnterminatedQuote) { EXPECT_THROW(csv::parse("a,\"b\n"), AuditError); }

TEST(Csv, FormatParseRoundTrip) {
  Rng rng(5);
  const std::string alphabet = "ab,\"\n\r x";
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<csv::Row> rows;
    const auto n_rows = 1 + uniform_index(rng, 4);
    const auto n_cols = 1 + uniform_index(rng, 4);
    for (std::size_t r = 0; r < n_rows; ++r) {
      csv::Row row;
      for (std::size_t c = 0; c < n_cols; ++c) {
        std::string f;
        const auto len = uniform_index(rng, 6);
        for (std::size_t k = 0; k < len; ++k) f.push_back(alphabet[uniform_index(rng, alphabet.size())]);
        row.push_back(f);
      }
      // A lone empty field would print as an empty line.
      if (n_cols == 1 && row[0].empty()) row[0] = "a";
      rows.push_back(row);
    }
    std::string doc;
    for (const auto& r : rows) doc += csv::format_row(r);
    EXPECT_EQ(csv::parse(doc), rows);
  }
}

TEST(KeyValue, SectionsCommentsAndErrors) {
  const auto s = kv::parse("# comment\na = 1\n b=two words \n\n[feature]\nname = x\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(*s[0].find("a"), "1");
  EXPECT_EQ(*s[0].find("b"), "two words");
  EXPECT_EQ(s[1].name, "feature");
  EXPECT_EQ(*s[1].find("name"), "x");
  EXPECT_THROW(kv::parse("novalue\n"), AuditError);
  EXPECT_THROW(kv::parse("[broken\n"), AuditError);
  EXPECT_THROW(kv::parse(" = 3\n"), AuditError);
}

TEST(Digest, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Random, UniformIndexInRangeAndDeterministic) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const auto x = uniform_index(a, 7);
    EXPECT_LT(x, 7u);
    EXPECT_EQ(x, uniform_index(b, 7));
  }
  Rng c(1);
  auto p = random_permutation(50, c);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(p[i], i);
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
}
