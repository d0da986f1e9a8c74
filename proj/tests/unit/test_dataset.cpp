#include <gtest/gtest.h>

#include <charconv>
#include <random>
#include <set>

#include "debias/benchmark.hpp"
#include "debias/error.hpp"
#include "support.hpp"

using namespace debias;
using support::categorical;
using support::code_of;
using support::continuous;

namespace {

Schema small_schema() {
    return {continuous("age", {0, 40, 120}), categorical("smoker", {"no", "yes"}),
            categorical("label", {"0", "1"}, VariableRole::kTarget)};
}

}  // namespace

TEST(Ingest, ParsesTypedRows) {
    const auto d = ingest("age,smoker,label\n30,no,0\n55.5,yes,1\n", small_schema());
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(std::get<double>(d.rows()[1][0]), 55.5);
    EXPECT_EQ(std::get<std::string>(d.rows()[1][1]), "yes");
    EXPECT_EQ(d.row_ids(), (std::vector<RowId>{1, 2}));
    for (std::size_t i = 0; i < d.size(); ++i) {
        EXPECT_EQ(d.provenance()[i], Provenance::kOriginal);
        EXPECT_EQ(d.split_tags()[i], SplitTag::kUnsplit);
    }
}

TEST(Ingest, HeaderOrderMayDifferFromSchema) {
    const auto d = ingest("label,age,smoker\n1,30,no\n", small_schema());
    EXPECT_EQ(std::get<double>(d.rows()[0][0]), 30.0);
    EXPECT_EQ(std::get<std::string>(d.rows()[0][2]), "1");
}

TEST(Ingest, QuotedFieldsAndCrlf) {
    Schema s{categorical("city", {"a,b", "c\"d"}), categorical("label", {"0", "1"}, VariableRole::kTarget)};
    const auto d = ingest("city,label\r\n\"a,b\",0\r\n\"c\"\"d\",1\r\n", s);
    EXPECT_EQ(std::get<std::string>(d.rows()[0][0]), "a,b");
    EXPECT_EQ(std::get<std::string>(d.rows()[1][0]), "c\"d");
}

TEST(Ingest, HeaderOnlyIsEmpty) {
    EXPECT_EQ(code_of([] { ingest("age,smoker,label\n", small_schema()); }), ErrorCode::kEmptyDataset);
    EXPECT_EQ(code_of([] { ingest("", small_schema()); }), ErrorCode::kEmptyDataset);
}

TEST(Ingest, UnknownOrMissingColumn) {
    EXPECT_EQ(code_of([] { ingest("age,smoker,label,extra\n1,no,0,5\n", small_schema()); }),
              ErrorCode::kSchemaMismatch);
    EXPECT_EQ(code_of([] { ingest("age,label\n1,0\n", small_schema()); }), ErrorCode::kSchemaMismatch);
}

TEST(Ingest, CellParseErrorCarriesLocation) {
    try {
        ingest("age,smoker,label\n30,no,0\nabc,yes,1\n", small_schema());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kCellParseError);
        EXPECT_EQ(e.detail().at("column"), "age");
        EXPECT_EQ(e.detail().at("raw"), "abc");
        EXPECT_TRUE(e.detail().contains("row"));
    }
    EXPECT_EQ(code_of([] { ingest("age,smoker,label\n30,maybe,0\n", small_schema()); }), ErrorCode::kCellParseError);
    EXPECT_EQ(code_of([] { ingest("age,smoker,label\n,no,0\n", small_schema()); }), ErrorCode::kCellParseError);
    EXPECT_EQ(code_of([] { ingest("age,smoker,label\n500,no,0\n", small_schema()); }), ErrorCode::kOutOfDomain);
}

TEST(Ingest, RandomCsvRoundTripsByteIdentical) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(50.0, 30.0);
    Schema s{continuous("x", {-1e9, 0, 1e9}), continuous("y", {-1e9, 1e9}), categorical("c", {"p", "q", "r s"}),
             categorical("label", {"0", "1"}, VariableRole::kTarget)};
    std::string csv = "x,y,c,label\r\n";
    for (int r = 0; r < 100; ++r) {
        char buf[64];
        auto res = std::to_chars(buf, buf + sizeof buf, gauss(rng));
        csv += std::string(buf, res.ptr) + ",";
        res = std::to_chars(buf, buf + sizeof buf, std::ldexp(gauss(rng), -20));
        csv += std::string(buf, res.ptr) + ",";
        csv += std::string(r % 3 == 0 ? "p" : r % 3 == 1 ? "q" : "r s") + "," + std::to_string(r % 2) + "\r\n";
    }
    const auto d = ingest(csv, s);
    EXPECT_EQ(d.size(), 100u);
    EXPECT_EQ(to_csv(d), csv);
    EXPECT_EQ(to_csv(ingest(to_csv(d), s)), csv);
}

TEST(Schema, ValidationRejectsMalformedDeclarations) {
    EXPECT_EQ(code_of([] { validate_schema({continuous("a", {0, 0}), categorical("t", {"0", "1"}, VariableRole::kTarget)}); }),
              ErrorCode::kSchemaMismatch);
    EXPECT_EQ(code_of([] { validate_schema({categorical("a", {"x", "x"}), categorical("t", {"0", "1"}, VariableRole::kTarget)}); }),
              ErrorCode::kSchemaMismatch);
    EXPECT_EQ(code_of([] { validate_schema({categorical("a", {}), categorical("t", {"0", "1"}, VariableRole::kTarget)}); }),
              ErrorCode::kSchemaMismatch);
    EXPECT_EQ(code_of([] {
                  validate_schema({categorical("a", {"x"}, VariableRole::kTarget), categorical("t", {"0", "1"}, VariableRole::kTarget)});
              }),
              ErrorCode::kSchemaMismatch);
    EXPECT_EQ(code_of([] { validate_schema({categorical("a", {"x", "y"})}); }), ErrorCode::kSchemaMismatch);
}

TEST(Schema, JsonRoundTrip) {
    const auto s = benchmark_schema();
    EXPECT_EQ(schema_from_json(schema_to_json(s)), s);
    EXPECT_EQ(schema_digest(schema_from_json(schema_to_json(s))), schema_digest(s));
}

TEST(Schema, SidecarWithInfiniteEdge) {
    const auto doc = nlohmann::json::parse(R"([
      {"name": "bmi", "kind": "continuous", "unit": "kg/m2", "role": "predictor", "group": "physical",
       "segmentation": [0, 18.5, 25, 30, "inf"], "segment_labels": ["underweight", "normal", "overweight", "obese"]},
      {"name": "label", "kind": "binary", "role": "target"}
    ])");
    const auto s = schema_from_json(doc);
    EXPECT_TRUE(std::isinf(s[0].bin_edges.back()));
    EXPECT_EQ(s[1].categories, (std::vector<std::string>{"0", "1"}));
    EXPECT_EQ(s[0].group, VariableGroup::kPhysical);
}

TEST(Segments, BmiUnderweight) {
    auto bmi = continuous("bmi", {0, 18.5, 25, 30, std::numeric_limits<double>::infinity()});
    bmi.bin_labels = {"underweight", "normal", "overweight", "obese"};
    const auto seg = segment_of(Cell{17.2}, bmi);
    EXPECT_EQ(seg.label, "underweight");
    EXPECT_EQ(std::get<Interval>(seg.region), (Interval{0, 18.5, false}));
    EXPECT_EQ(segment_of(Cell{18.5}, bmi).label, "normal");
    EXPECT_EQ(segment_of(Cell{1e9}, bmi).label, "obese");
}

TEST(Segments, SeverityModerate) {
    const auto sev = categorical("severity", {"mild", "moderate", "severe"});
    EXPECT_EQ(segment_of(Cell{std::string("moderate")}, sev).label, "moderate");
}

TEST(Segments, OutOfDomain) {
    const auto sev = categorical("severity", {"mild", "moderate", "severe"});
    EXPECT_EQ(code_of([&] { segment_of(Cell{std::string("critical")}, sev); }), ErrorCode::kOutOfDomain);
    EXPECT_EQ(code_of([&] { segment_of(Cell{1.0}, sev); }), ErrorCode::kOutOfDomain);
    const auto age = continuous("age", {18, 90});
    EXPECT_EQ(code_of([&] { segment_of(Cell{90.0}, age); }), ErrorCode::kOutOfDomain);
    EXPECT_EQ(code_of([&] { segment_of(Cell{17.9}, age); }), ErrorCode::kOutOfDomain);
}

TEST(Segments, TotalFunctionOverRandomValues) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5, 105);
    const auto var = continuous("x", {-5, 0, 12.5, 50, 99, 105});
    std::vector<std::size_t> counts(5, 0);
    for (int i = 0; i < 10000; ++i) {
        const double v = u(rng);
        std::size_t hits = 0;
        std::size_t which = 0;
        for (const auto& seg : segments(var)) {
            if (region_contains(seg.region, Cell{v})) {
                ++hits;
                which = seg.index;
            }
        }
        ASSERT_EQ(hits, 1u) << v;
        ASSERT_EQ(segment_index(Cell{v}, var), which);
        ++counts[which];
    }
    std::size_t total = 0;
    for (auto c : counts) total += c;
    EXPECT_EQ(total, 10000u);
}

TEST(Split, EightHundredTwoHundredRepeatable) {
    std::vector<Row> rows;
    for (int i = 0; i < 1000; ++i) rows.push_back({double(i % 100), std::string(i % 4 ? "no" : "yes"), std::string(i % 3 ? "0" : "1")});
    const auto d = support::from_rows(small_schema(), rows);
    const auto a = split(d, 0.2, 7);
    const auto b = split(d, 0.2, 7);
    EXPECT_EQ(a.indices_with(SplitTag::kTrain).size(), 800u);
    EXPECT_EQ(a.indices_with(SplitTag::kHeldout).size(), 200u);
    EXPECT_EQ(a.split_tags(), b.split_tags());
    EXPECT_NE(split(d, 0.2, 8).split_tags(), a.split_tags());
    EXPECT_EQ(code_of([&] { split(a, 0.2, 7); }), ErrorCode::kAlreadySplit);
}

TEST(Split, TooFewRows) {
    std::vector<Row> rows(4, Row{1.0, std::string("no"), std::string("0")});
    EXPECT_EQ(code_of([&] { split(support::from_rows(small_schema(), rows), 0.2, 7); }), ErrorCode::kTooFewRows);
    rows.push_back({2.0, std::string("no"), std::string("1")});
    EXPECT_EQ(code_of([&] { split(support::from_rows(small_schema(), rows), 0.5, 7); }), ErrorCode::kTooFewRows);
}

TEST(Split, StratifiedMinorityShare) {
    std::vector<Row> rows;
    for (int i = 0; i < 1000; ++i) rows.push_back({double(i % 100), std::string("no"), std::string(i % 10 == 0 ? "1" : "0")});
    const auto d = split(support::from_rows(small_schema(), rows), 0.2, 7);
    std::size_t minority = 0;
    const auto held = d.indices_with(SplitTag::kHeldout);
    for (auto i : held) minority += std::get<std::string>(d.rows()[i][2]) == "1";
    const double share = static_cast<double>(minority) / static_cast<double>(held.size());
    EXPECT_GE(share, 0.08);
    EXPECT_LE(share, 0.12);
}

TEST(Split, ClassProportionsWithinTwoPointsOnRandomData) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const auto d0 = support::random_dataset(rng, 400, 3);
        const auto d = split(d0, 0.2, trial);
        const auto t = d.target_column();
        std::map<std::string, double> whole, held;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const auto& y = std::get<std::string>(d.rows()[i][t]);
            whole[y] += 1;
            if (d.split_tags()[i] == SplitTag::kHeldout) held[y] += 1;
        }
        const double nh = static_cast<double>(d.indices_with(SplitTag::kHeldout).size());
        for (const auto& [y, c] : whole) {
            // Small classes cannot be apportioned finer than one row.
            const double tol = std::max(0.02, 1.0 / nh + 1e-12);
            EXPECT_NEAR(held[y] / nh, c / static_cast<double>(d.size()), tol) << "trial " << trial;
        }
        std::set<RowId> train, heldout;
        for (std::size_t i = 0; i < d.size(); ++i) {
            (d.split_tags()[i] == SplitTag::kTrain ? train : heldout).insert(d.row_ids()[i]);
        }
        for (auto id : heldout) EXPECT_FALSE(train.count(id));
    }
}

TEST(Freeze, QuartileBinsFromOriginalTrainRows) {
    Schema s{continuous("x", {}), categorical("label", {"0", "1"}, VariableRole::kTarget)};
    std::vector<Row> rows;
    for (int i = 1; i <= 9; ++i) rows.push_back({double(i), std::string(i % 2 ? "1" : "0")});
    const auto frozen = freeze_segmentation(support::from_rows(s, rows));
    const auto& edges = frozen.schema()[0].bin_edges;
    ASSERT_EQ(edges.size(), 5u);
    EXPECT_TRUE(std::isinf(edges.front()));
    EXPECT_EQ(edges[1], 3.0);
    EXPECT_EQ(edges[2], 5.0);
    EXPECT_EQ(edges[3], 7.0);
    EXPECT_TRUE(std::isinf(edges.back()));
    const auto counts = segment_counts(frozen);
    EXPECT_EQ(counts[0], (std::vector<std::size_t>{2, 2, 2, 3}));
}

TEST(DatasetJson, RoundTripPreservesEverything) {
    std::mt19937_64 rng(9);
    const auto d = split(support::random_dataset(rng), 0.25, 1);
    const auto back = dataset_from_json(dataset_to_json(d));
    EXPECT_EQ(back, d);
    EXPECT_EQ(dataset_to_json(back).dump(), dataset_to_json(d).dump());
}

TEST(Dataset, PartitionPropertyAndInvariants) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 30; ++trial) {
        const auto d = support::random_dataset(rng);
        for (const auto& counts : segment_counts(d)) {
            std::size_t total = 0;
            for (auto c : counts) total += c;
            EXPECT_EQ(total, d.size());
        }
    }
    Schema s = small_schema();
    EXPECT_EQ(code_of([&] {
                  TabularDataset(s, {{1.0, std::string("no"), std::string("0")}, {1.0, std::string("no"), std::string("0")}},
                                 {1, 1}, {Provenance::kOriginal, Provenance::kOriginal},
                                 {SplitTag::kUnsplit, SplitTag::kUnsplit});
              }),
              ErrorCode::kInvalidArgument);
    EXPECT_EQ(code_of([&] {
                  TabularDataset(s, {{1.0, std::string("no"), std::string("0")}}, {1}, {Provenance::kGenerated},
                                 {SplitTag::kHeldout});
              }),
              ErrorCode::kLeakageViolation);
}
