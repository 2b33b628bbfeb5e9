#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace llmaudit;
using namespace testsupport;

namespace {

const char* two_feature_schema = R"(label_column = y
positive_class = Default
task_description = whether a borrower defaults
task_name = Borrower

[feature]
name = a
kind = numeric

[feature]
name = b
kind = numeric
)";

std::string schema_dir() { return std::string(LLMAUDIT_SOURCE_DIR) + "/data/schemas/"; }

}  // namespace

TEST(LoadDataset, ThreeRowsTwoFeatures) {
  TempDir dir;
  write_text(dir.file("s.schema"), two_feature_schema);
  // Columns out of schema order: loading reorders them.
  write_text(dir.file("d.csv"), "b,y,a\n10,1,1.5\n20,0,2.5\n30,0,3.5\n");
  const auto d = load_dataset(dir.file("d.csv"), dir.file("s.schema"));
  EXPECT_EQ(d.feature_count(), 2u);
  EXPECT_EQ(d.row_count(), 3u);
  EXPECT_DOUBLE_EQ(d.prevalence(), 1.0 / 3.0);
  EXPECT_EQ(d.schema[0].name, "a");
  EXPECT_EQ(d.rows[1][0].as_number(), 2.5);
  EXPECT_EQ(d.rows[1][1].as_number(), 20.0);
  EXPECT_EQ(d.labels, (std::vector<int>{1, 0, 0}));
}

TEST(LoadDataset, MissingSchemaColumnIsNamed) {
  TempDir dir;
  write_text(dir.file("s.schema"), two_feature_schema);
  write_text(dir.file("d.csv"), "a,y\n1,1\n");
  try {
    load_dataset(dir.file("d.csv"), dir.file("s.schema"));
    FAIL() << "expected an error";
  } catch (const AuditError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos) << e.what();
  }
}

TEST(LoadDataset, RejectsUnknownColumnBadLabelAndBadNumber) {
  TempDir dir;
  write_text(dir.file("s.schema"), two_feature_schema);
  write_text(dir.file("u.csv"), "a,b,c,y\n1,2,3,1\n");
  EXPECT_THROW(load_dataset(dir.file("u.csv"), dir.file("s.schema")), AuditError);
  write_text(dir.file("l.csv"), "a,b,y\n1,2,2\n");
  EXPECT_THROW(load_dataset(dir.file("l.csv"), dir.file("s.schema")), AuditError);
  write_text(dir.file("n.csv"), "a,b,y\n1,abc,1\n");
  try {
    load_dataset(dir.file("n.csv"), dir.file("s.schema"));
    FAIL() << "expected an error";
  } catch (const AuditError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'b'"), std::string::npos) << msg;
  }
}

TEST(LoadDataset, EmptyCellIsMissing) {
  TempDir dir;
  write_text(dir.file("s.schema"), two_feature_schema);
  write_text(dir.file("d.csv"), "a,b,y\n,2,1\n3,4,0\n");
  const auto d = load_dataset(dir.file("d.csv"), dir.file("s.schema"));
  EXPECT_TRUE(d.rows[0][0].missing());
  const auto stats = compute_feature_stats(d);
  EXPECT_EQ(stats.columns[0].missing, 1u);
  EXPECT_EQ(stats.columns[0].numeric->mean, 3.0);
}

TEST(Schema, LoanFixtureHasTwentyOneFeaturesTwelveNumeric) {
  const auto s = load_schema(schema_dir() + "loan.schema");
  EXPECT_EQ(s.features.size(), 21u);
  std::size_t numeric = 0;
  for (const auto& f : s.features) numeric += f.kind == FeatureKind::numeric;
  EXPECT_EQ(numeric, 12u);
}

TEST(Schema, BankruptcyAndLicenseFixturesAreAllNumeric) {
  for (const auto& [file, m] : {std::pair{"bankruptcy.schema", 20u}, std::pair{"license.schema", 15u}}) {
    const auto s = load_schema(schema_dir() + file);
    EXPECT_EQ(s.features.size(), m) << file;
    for (const auto& f : s.features) EXPECT_EQ(f.kind, FeatureKind::numeric) << f.name;
  }
}

TEST(Schema, InvariantViolationsRejected) {
  EXPECT_THROW(parse_schema("label_column = y\npositive_class = P\ntask_description = t\n"
                            "[feature]\nname = a\n[feature]\nname = a\n"),
               AuditError);
  EXPECT_THROW(parse_schema("label_column = y\npositive_class = P\ntask_description = t\n"
                            "[feature]\nname = a\nkind = categorical\n"),
               AuditError);
  EXPECT_THROW(parse_schema("label_column = y\npositive_class = P\ntask_description = t\n"
                            "[feature]\nname = a\nkind = numeric\ncategories = x | y\n"),
               AuditError);
  EXPECT_THROW(parse_schema("positive_class = P\ntask_description = t\n"), AuditError);
}

TEST(FeatureStats, PrevalenceOfBankruptcyCounts) {
  std::vector<int> labels(7027, 0);
  std::fill_n(labels.begin(), 271, 1);
  const auto d = numeric_dataset(std::vector<std::vector<double>>(7027, std::vector<double>{0.0}), labels);
  const auto stats = compute_feature_stats(d);
  EXPECT_NEAR(stats.prevalence, 0.0386, 5e-5);
  EXPECT_EQ(stats.prevalence, 271.0 / 7027.0);
}

TEST(FeatureStats, ConstantColumn) {
  const auto d = numeric_dataset({{5}, {5}, {5}}, {0, 1, 0});
  const auto s = *compute_feature_stats(d).columns[0].numeric;
  EXPECT_EQ(s.p01, 5.0);
  EXPECT_EQ(s.p99, 5.0);
  EXPECT_EQ(s.std, 0.0);
}

namespace {
// Sort, then take the smallest value with at least p% of the data at or below it.
double brute_force_percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  for (std::size_t k = 1; k <= v.size(); ++k)
    if (100.0 * static_cast<double>(k) >= p * static_cast<double>(v.size())) return v[k - 1];
  return v.back();
}
}  // namespace

TEST(FeatureStats, OneToHundredPercentiles) {
  std::vector<std::vector<double>> rows;
  for (int i = 100; i >= 1; --i) rows.push_back({static_cast<double>(i)});
  const auto s = *compute_feature_stats(numeric_dataset(rows, {})).columns[0].numeric;
  EXPECT_EQ(s.p01, 1.0);
  EXPECT_EQ(s.p99, 99.0);
}

TEST(FeatureStats, PercentilesMatchBruteForceOnRandomColumns) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = 1 + uniform_index(rng, 300);
    std::vector<std::vector<double>> rows;
    std::vector<double> col;
    for (std::size_t i = 0; i < n; ++i) {
      col.push_back(static_cast<double>(uniform_index(rng, 50)));
      rows.push_back({col.back()});
    }
    const auto s = *compute_feature_stats(numeric_dataset(rows, {})).columns[0].numeric;
    EXPECT_EQ(s.p01, brute_force_percentile(col, 1.0));
    EXPECT_EQ(s.p99, brute_force_percentile(col, 99.0));
    EXPECT_LE(s.p01, s.p99);
  }
}

TEST(FeatureStats, CategoricalFrequenciesSumToRowCount) {
  Dataset d;
  d.schema = {{"home", FeatureKind::categorical, {}, {"OWN", "RENT"}, {}}};
  d.rows = {{Cell::category("OWN")}, {Cell::category("RENT")}, {Cell{}}, {Cell::category("RENT")}};
  d.labels = {0, 1, 0, 0};
  const auto c = compute_feature_stats(d).columns[0];
  EXPECT_FALSE(c.numeric);
  EXPECT_EQ(c.frequencies.at("RENT"), 2u);
  EXPECT_EQ(c.frequencies.at("unknown"), 1u);
  std::size_t total = 0;
  for (const auto& [k, v] : c.frequencies) total += v;
  EXPECT_EQ(total, d.row_count());
}

TEST(FeatureStats, AllMissingNumericColumnUnavailable) {
  Dataset d = numeric_dataset({{1}, {2}}, {0, 1});
  d.rows[0][0] = Cell{};
  d.rows[1][0] = Cell{};
  EXPECT_FALSE(compute_feature_stats(d).columns[0].numeric);
}

TEST(Sampling, DefaultExplainSizeIsDistinctAndReplayable) {
  const auto d = random_dataset(7027, 1, 1);
  const auto a = sample_instances(d, 250, 7);
  const auto b = sample_instances(d, 250, 7);
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 250u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_NE(a, sample_instances(d, 250, 8));
}

TEST(Sampling, FullSampleIsIdentity) {
  const auto d = random_dataset(37, 2, 2);
  const auto all = sample_instances(d, 37, 123);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  EXPECT_TRUE(sample_instances(d, 0, 1).empty());
  EXPECT_THROW(sample_instances(d, 38, 1), AuditError);
}

TEST(Sampling, StratifiedKeepsPrevalence) {
  // 39 positives in 1000 rows: prevalence 0.039, so 100 draws take 3.9 -> 4 positives.
  std::vector<int> labels(1000, 0);
  for (std::size_t i = 0; i < 39; ++i) labels[i * 25] = 1;
  const auto d = numeric_dataset(std::vector<std::vector<double>>(1000, std::vector<double>{1.0}), labels);
  const auto picked = sample_instances(d, 100, 5, true);
  std::size_t positives = 0;
  for (auto r : picked) positives += d.labels[r];
  EXPECT_EQ(picked.size(), 100u);
  EXPECT_EQ(positives, 4u);
}

TEST(Sampling, StratifiedWithinOneInstanceProperty) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n_rows = 2 + uniform_index(rng, 200);
    std::vector<int> labels(n_rows);
    for (auto& y : labels) y = uniform01(rng) < 0.3;
    const auto d = numeric_dataset(std::vector<std::vector<double>>(n_rows, std::vector<double>{0.0}), labels);
    const auto n = uniform_index(rng, n_rows + 1);
    const auto picked = sample_instances(d, n, trial, true);
    ASSERT_EQ(picked.size(), n);
    double positives = 0;
    for (auto r : picked) positives += d.labels[r];
    EXPECT_LE(std::abs(positives - static_cast<double>(n) * d.prevalence()), 1.0);
  }
}

TEST(Dataset, WriteThenReloadIsBitIdentical) {
  TempDir dir;
  Dataset d;
  d.label_column = "target";
  d.positive_class_name = "Loan Repayment";
  d.task_description = "whether a loan is repaid";
  d.task_name = "Loan";
  d.schema = {{"rate", FeatureKind::numeric, std::string("annual rate"), {}, std::string("%")},
              {"home", FeatureKind::categorical, {}, {"OWN", "RENT", "has, comma"}, {}}};
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    std::vector<Cell> row;
    if (i % 17 == 0) row.emplace_back();
    else row.push_back(Cell::number(standard_normal(rng) * std::pow(10.0, static_cast<double>(i % 9) - 4)));
    if (i % 13 == 0) row.emplace_back();
    else row.push_back(Cell::category(d.schema[1].categories[uniform_index(rng, 3)]));
    d.rows.push_back(row);
    d.labels.push_back(static_cast<int>(uniform_index(rng, 2)));
  }
  write_dataset_csv(d, dir.file("d.csv"));
  write_text(dir.file("d.schema"), format_schema(d));
  const auto back = load_dataset(dir.file("d.csv"), dir.file("d.schema"));
  EXPECT_EQ(back.rows, d.rows);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.schema[1].categories, d.schema[1].categories);
  EXPECT_EQ(back.schema[0].units, d.schema[0].units);
  EXPECT_EQ(back.positive_class_name, d.positive_class_name);
}

TEST(Dataset, PrevalenceIsMeanOfLabels) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = random_dataset(1 + uniform_index(rng, 100), 1, trial);
    double sum = 0;
    for (int y : d.labels) sum += y;
    EXPECT_EQ(d.prevalence(), sum / static_cast<double>(d.labels.size()));
  }
}
