#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace debias;
using support::categorical;
using support::code_of;
using support::continuous;

namespace {

// 900 distinct rows: x uniform 0..899, c cycling over three labels, balanced target.
std::vector<Row> clean_rows() {
    std::vector<Row> rows;
    const char* cats[] = {"a", "b", "c"};
    for (int i = 0; i < 900; ++i) {
        rows.push_back({double(i), std::string(cats[i % 3]), std::string((i / 3) % 2 ? "1" : "0")});
    }
    return rows;
}

Schema clean_schema() {
    return {continuous("x", {0, 300, 600, 1000}), categorical("c", {"a", "b", "c"}),
            categorical("t", {"0", "1"}, VariableRole::kTarget)};
}

void expect_matches_oracle(const TabularDataset& d) {
    const auto q = quality_report(d);
    const auto o = support::oracle_quality(d);
    EXPECT_NEAR(q.outlier_severity, o.outlier, 1e-9);
    EXPECT_NEAR(q.duplicate_severity, o.duplicate, 1e-9);
    EXPECT_NEAR(q.correlation_severity, o.correlation, 1e-9);
    EXPECT_NEAR(q.skew_severity, o.skew, 1e-9);
    EXPECT_NEAR(q.imbalance_severity, o.imbalance, 1e-9);
    EXPECT_NEAR(q.overall, o.overall, 1e-9);
}

}  // namespace

TEST(Quality, CleanDatasetScoresOne) {
    Schema s{continuous("x", {0, 5, 10}), categorical("c", {"p", "q"}), categorical("t", {"0", "1"}, VariableRole::kTarget)};
    std::vector<Row> rows;
    for (int i = 0; i < 40; ++i) {
        rows.push_back({double(i % 10), std::string((i / 10) % 2 ? "q" : "p"), std::string((i / 20) % 2 ? "1" : "0")});
    }
    const auto q = quality_report(support::from_rows(s, rows));
    EXPECT_EQ(q.outlier_severity, 0.0);
    EXPECT_EQ(q.duplicate_severity, 0.0);
    EXPECT_EQ(q.correlation_severity, 0.0);
    EXPECT_EQ(q.skew_severity, 0.0);
    EXPECT_EQ(q.imbalance_severity, 0.0);
    EXPECT_EQ(q.overall, 1.0);
}

TEST(Quality, HundredDuplicatesInThousandRows) {
    auto rows = clean_rows();
    const auto base = quality_report(support::from_rows(clean_schema(), rows));
    EXPECT_EQ(base.overall, 1.0);
    for (int k = 0; k < 100; ++k) rows.push_back(rows[static_cast<std::size_t>(3 * k)]);
    const auto q = quality_report(support::from_rows(clean_schema(), rows));
    EXPECT_NEAR(q.duplicate_severity, 0.1, 1e-12);
    EXPECT_EQ(q.duplicate_rows.size(), 100u);
    EXPECT_EQ(q.outlier_severity, 0.0);
    EXPECT_EQ(q.correlation_severity, 0.0);
    EXPECT_EQ(q.skew_severity, 0.0);
    EXPECT_EQ(q.imbalance_severity, 0.0);
    EXPECT_NEAR(q.overall, 0.98, 1e-12);
}

TEST(Quality, EmptyDataset) {
    EXPECT_EQ(code_of([] { quality_report(support::from_rows(clean_schema(), {})); }), ErrorCode::kEmptyDataset);
}

TEST(Quality, FlagsOutliersSkewCorrelationImbalance) {
    Schema s{continuous("x", {-1e6, 1e6}), continuous("y", {-1e6, 1e6}), categorical("t", {"0", "1"}, VariableRole::kTarget)};
    std::vector<Row> rows;
    for (int i = 0; i < 99; ++i) rows.push_back({double(i), 2.0 * i + 1, std::string(i < 90 ? "0" : "1")});
    rows.push_back({10000.0, 20001.0, std::string("1")});
    const auto q = quality_report(support::from_rows(s, rows));
    EXPECT_NEAR(q.outlier_severity, 0.01, 1e-12);
    EXPECT_EQ(q.outlier_rows, (std::vector<RowId>{100}));
    EXPECT_EQ(q.correlation_severity, 1.0);
    ASSERT_EQ(q.flagged_pairs.size(), 1u);
    EXPECT_EQ(q.flagged_pairs[0].first, "x");
    EXPECT_EQ(q.skew_severity, 1.0);
    EXPECT_NEAR(q.imbalance_severity, 1.0 - 10.0 / 90.0, 1e-12);
}

TEST(Quality, FrozenFencesAreUsed) {
    Schema s{continuous("x", {-1e6, 1e6}), categorical("t", {"0", "1"}, VariableRole::kTarget)};
    std::vector<Row> rows;
    for (int i = 0; i < 20; ++i) rows.push_back({double(i), std::string(i % 2 ? "1" : "0")});
    QualityConfig cfg;
    cfg.fences = OutlierFences{{{"x", {5.0, 14.0}}}};
    const auto q = quality_report(support::from_rows(s, rows), cfg);
    EXPECT_NEAR(q.outlier_severity, 10.0 / 20.0, 1e-12);
}

TEST(Quality, FencesComeFromOriginalRowsOnly) {
    Schema s{continuous("x", {-1e6, 1e6}), categorical("t", {"0", "1"}, VariableRole::kTarget)};
    std::vector<Row> rows;
    std::vector<Provenance> prov;
    for (int i = 0; i < 20; ++i) {
        rows.push_back({double(i), std::string(i % 2 ? "1" : "0")});
        prov.push_back(Provenance::kOriginal);
    }
    for (int i = 0; i < 20; ++i) {
        rows.push_back({1000.0 + i, std::string(i % 2 ? "1" : "0")});
        prov.push_back(Provenance::kGenerated);
    }
    std::vector<RowId> ids(rows.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i + 1;
    const TabularDataset d(s, rows, ids, prov, std::vector<SplitTag>(rows.size(), SplitTag::kTrain));
    const auto fences = compute_fences(d);
    EXPECT_NEAR(fences.bounds.at("x").first, 4.75 - 1.5 * 9.5, 1e-12);
    EXPECT_NEAR(fences.bounds.at("x").second, 14.25 + 1.5 * 9.5, 1e-12);
}

TEST(Quality, MatchesBruteForceOracle) {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 60; ++trial) expect_matches_oracle(support::random_dataset(rng, 500, 6));
}

TEST(Quality, Invariants) {
    std::mt19937_64 rng(103);
    for (int trial = 0; trial < 40; ++trial) {
        const auto d = support::random_dataset(rng, 300, 5);
        const auto q = quality_report(d);
        for (double s : {q.outlier_severity, q.duplicate_severity, q.correlation_severity, q.skew_severity,
                         q.imbalance_severity, q.overall}) {
            EXPECT_GE(s, 0.0);
            EXPECT_LE(s, 1.0);
        }
        EXPECT_NEAR(q.overall,
                    1.0 - (q.outlier_severity + q.duplicate_severity + q.correlation_severity + q.skew_severity +
                           q.imbalance_severity) / 5.0,
                    1e-15);

        // Permutation invariance.
        std::vector<Row> rows = d.rows();
        std::shuffle(rows.begin(), rows.end(), rng);
        const auto p = quality_report(support::from_rows(d.schema(), rows));
        EXPECT_NEAR(p.outlier_severity, q.outlier_severity, 1e-12);
        EXPECT_NEAR(p.duplicate_severity, q.duplicate_severity, 1e-12);
        EXPECT_NEAR(p.correlation_severity, q.correlation_severity, 1e-12);
        EXPECT_NEAR(p.skew_severity, q.skew_severity, 1e-12);
        EXPECT_NEAR(p.imbalance_severity, q.imbalance_severity, 1e-12);

        // Duplicate monotonicity.
        rows.push_back(rows[rng() % rows.size()]);
        EXPECT_GE(quality_report(support::from_rows(d.schema(), rows)).duplicate_severity + 1e-15, q.duplicate_severity);
    }
}

TEST(QualityDelta, IdenticalReportsGiveZero) {
    const auto q = quality_report(support::from_rows(clean_schema(), clean_rows()));
    const auto d = delta_quality(q, q);
    EXPECT_EQ(d.outlier, 0.0);
    EXPECT_EQ(d.duplicate, 0.0);
    EXPECT_EQ(d.correlation, 0.0);
    EXPECT_EQ(d.skew, 0.0);
    EXPECT_EQ(d.imbalance, 0.0);
    EXPECT_EQ(d.overall, 0.0);
}

TEST(QualityDelta, OverallArithmetic) {
    QualityReport a, b;
    a.overall = 0.98;
    b.overall = 0.95;
    EXPECT_NEAR(delta_quality(a, b).overall, -0.03, 1e-15);
}

TEST(QualityDelta, MergingCorrelatedColumnsRaisesCorrelation) {
    Schema s{continuous("x", {-1e6, 1e6}), continuous("y", {-1e6, 1e6}), categorical("t", {"0", "1"}, VariableRole::kTarget)};
    std::vector<Row> rows;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    for (int i = 0; i < 200; ++i) rows.push_back({g(rng), g(rng), std::string(i % 2 ? "1" : "0")});
    const auto before = quality_report(support::from_rows(s, rows));
    // Merged batch where y duplicates x.
    for (int i = 0; i < 2000; ++i) {
        const double x = g(rng);
        rows.push_back({x, x, std::string(i % 2 ? "1" : "0")});
    }
    const auto after = quality_report(support::from_rows(s, rows));
    EXPECT_GT(delta_quality(before, after).correlation, 0.0);
}
