#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "debias/augment.hpp"
#include "support.hpp"

using namespace debias;
using support::categorical;
using support::code_of;
using support::continuous;

namespace {

struct World {
    TabularDataset data;
    ModelArtifact model;
};

// age uniform 20..90 (edges 20/40/60/80/90), smoker skewed towards "no".
World make_world(std::size_t n = 1000, std::uint64_t seed = 3) {
    Schema s{continuous("age", {20, 40, 60, 80, 90}), categorical("smoker", {"no", "yes"}),
             continuous("bmi", {10, 18.5, 25, 30, 60}), categorical("y", {"0", "1"}, VariableRole::kTarget)};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> age(20, 90);
    std::normal_distribution<double> bmi(26, 4);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<Row> rows;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = std::round(age(rng) * 10) / 10;
        const double b = std::clamp(std::round(bmi(rng) * 10) / 10, 10.0, 59.9);
        const bool smoker = u(rng) < 0.15;
        const double risk = 0.02 * (a - 50) + 0.15 * (b - 26) + (smoker ? 0.8 : 0.0);
        rows.push_back({a, std::string(smoker ? "yes" : "no"), b, std::string(u(rng) < 1 / (1 + std::exp(-risk)) ? "1" : "0")});
    }
    auto d = split(support::from_rows(s, rows), 0.2, 1);
    auto m = train(d, support::small_hyper());
    return {std::move(d), std::move(m)};
}

SegmentConstraint interval(const std::string& var, double lo, double hi, std::size_t count, bool closed = true) {
    return {var, Interval{lo, hi, closed}, count};
}

SegmentConstraint cats(const std::string& var, std::vector<std::string> c, std::size_t count) {
    return {var, CategorySet{std::move(c)}, count};
}

std::size_t count_matching(const TabularDataset& d, const SegmentConstraint& c) {
    return matching_pool(d, std::span(&c, 1)).size();
}

}  // namespace

TEST(Plan, WarnsWhenExistingBelowRequested) {
    // 40 existing train rows with smoker = yes and age in [80,90).
    Schema s{continuous("age", {0, 100}), categorical("y", {"0", "1"}, VariableRole::kTarget)};
    std::vector<Row> rows;
    for (int i = 0; i < 40; ++i) rows.push_back({85.0, std::string(i % 2 ? "1" : "0")});
    for (int i = 0; i < 500; ++i) rows.push_back({30.0, std::string(i % 2 ? "1" : "0")});
    const auto d = support::from_rows(s, rows);
    const auto w = plan({{interval("age", 80, 90, 200)}, true}, d);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0].existing_count, 40u);
    EXPECT_EQ(w[0].requested_count, 200u);
    EXPECT_EQ(w[0].ratio, 0.2);
    EXPECT_TRUE(plan({{interval("age", 20, 40, 100)}, true}, d).empty());
}

TEST(Plan, CapExceeded) {
    const auto w = make_world(200);
    AugmentConfig cfg;
    cfg.cap = 50000;
    EXPECT_EQ(code_of([&] { plan({{interval("age", 20, 40, 60000)}, true}, w.data, cfg); }), ErrorCode::kCapExceeded);
    EXPECT_EQ(code_of([&] { plan({{interval("age", 20, 40, 30000), interval("bmi", 20, 30, 30000)}, false}, w.data, cfg); }),
              ErrorCode::kCapExceeded);
    EXPECT_NO_THROW(plan({{interval("age", 20, 40, 50000)}, true}, w.data, cfg));
}

TEST(Plan, WarningIffRatioBelowThresholdIncludingBoundary) {
    const auto w = make_world(600);
    const auto c0 = interval("age", 40, 60, 1, false);
    const std::size_t existing = count_matching(w.data, c0);
    ASSERT_GT(existing, 10u);
    for (double threshold : {0.5, 1.0, 2.0}) {
        AugmentConfig cfg;
        cfg.warning_threshold = threshold;
        for (std::size_t req : {std::size_t{1}, existing / 2, existing - 1, existing, existing + 1, 2 * existing,
                                existing * 4, std::size_t{5000}}) {
            auto c = c0;
            c.requested_count = req;
            const auto warnings = plan({{c}, true}, w.data, cfg);
            const double ratio = static_cast<double>(existing) / static_cast<double>(req);
            EXPECT_EQ(!warnings.empty(), ratio < threshold) << "req " << req << " threshold " << threshold;
        }
    }
    // Boundary: existing == requested is ratio 1.0, no warning at the default threshold.
    auto c = c0;
    c.requested_count = existing;
    EXPECT_TRUE(plan({{c}, true}, w.data).empty());
    c.requested_count = existing + 1;
    EXPECT_EQ(plan({{c}, true}, w.data).size(), 1u);
}

TEST(Constraints, Validation) {
    const auto w = make_world(200);
    const auto& s = w.data.schema();
    EXPECT_EQ(code_of([&] { validate_constraints({{interval("height", 0, 1, 5)}, true}, s, 100); }),
              ErrorCode::kConstraintOutOfDomain);
    EXPECT_EQ(code_of([&] { validate_constraints({{interval("y", 0, 1, 5)}, true}, s, 100); }),
              ErrorCode::kConstraintOutOfDomain);
    EXPECT_EQ(code_of([&] { validate_constraints({{interval("age", 10, 30, 5)}, true}, s, 100); }),
              ErrorCode::kConstraintOutOfDomain);
    EXPECT_EQ(code_of([&] { validate_constraints({{cats("smoker", {"sometimes"}, 5)}, true}, s, 100); }),
              ErrorCode::kConstraintOutOfDomain);
    EXPECT_EQ(code_of([&] { validate_constraints({{interval("age", 30, 40, 5), interval("age", 50, 60, 5)}, true}, s, 100); }),
              ErrorCode::kInvalidConstraint);
    EXPECT_EQ(code_of([&] { validate_constraints({{interval("age", 30, 40, 5), interval("bmi", 20, 25, 6)}, true}, s, 100); }),
              ErrorCode::kInvalidConstraint);
    EXPECT_NO_THROW(validate_constraints({{interval("age", 30, 40, 5), interval("age", 50, 60, 6)}, false}, s, 100));
}

TEST(Constraints, JsonForms) {
    const auto set = constraints_from_json(nlohmann::json::parse(R"([
        {"variable": "age", "min": 60, "max": 80, "count": 100},
        {"variable": "smoker", "categories": ["yes"], "count": 100}
    ])"));
    EXPECT_TRUE(set.joint);
    ASSERT_EQ(set.constraints.size(), 2u);
    EXPECT_EQ(std::get<Interval>(set.constraints[0].region), (Interval{60, 80, true}));
    EXPECT_EQ(constraints_from_json(to_json(set)), set);
    const auto open = constraints_from_json(nlohmann::json::parse(
        R"({"joint": false, "constraints": [{"variable": "age", "min": 60, "count": 3, "max_exclusive": true}]})"));
    EXPECT_FALSE(open.joint);
    EXPECT_TRUE(std::isinf(std::get<Interval>(open.constraints[0].region).hi));
    EXPECT_EQ(constraints_from_json(to_json(open)), open);
    EXPECT_EQ(code_of([] { constraints_from_json(nlohmann::json::parse(R"([{"variable": "age", "count": 0}])")); }),
              ErrorCode::kInvalidConstraint);
    EXPECT_EQ(code_of([] { constraints_from_json(nlohmann::json::parse(R"([{"count": 3}])")); }),
              ErrorCode::kInvalidConstraint);
}

TEST(Generate, IntervalConstraintHonoured) {
    const auto w = make_world();
    const InterpolationBackend nn;
    const auto batch = generate({{interval("age", 60, 80, 100)}, true}, w.data, w.model, nn, 1);
    ASSERT_EQ(batch.size(), 100u);
    for (const auto& row : batch.rows.rows()) {
        EXPECT_GE(std::get<double>(row[0]), 60.0);
        EXPECT_LE(std::get<double>(row[0]), 80.0);
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
        EXPECT_EQ(batch.rows.provenance()[i], Provenance::kGenerated);
        EXPECT_EQ(batch.rows.split_tags()[i], SplitTag::kTrain);
        EXPECT_GT(batch.rows.row_ids()[i], w.data.row_ids().back());
    }
}

TEST(Generate, JointRegionAndInfeasibility) {
    const auto w = make_world();
    const InterpolationBackend nn;
    const ConstraintSet joint{{interval("age", 60, 80, 50), cats("smoker", {"yes"}, 50)}, true};
    const auto batch = generate(joint, w.data, w.model, nn, 2);
    ASSERT_EQ(batch.size(), 50u);
    for (const auto& row : batch.rows.rows()) EXPECT_TRUE(satisfies(w.data.schema(), row, joint.constraints));

    // Smokers only appear under age 60 here, so the joint region is empty.
    Schema s = w.data.schema();
    std::vector<Row> rows = w.data.rows();
    for (auto& r : rows) {
        if (std::get<double>(r[0]) >= 60) r[1] = std::string("no");
    }
    const auto d = w.data.with_schema(s);
    const TabularDataset no_old_smokers(s, rows, d.row_ids(), d.provenance(), d.split_tags());
    const auto m = train(no_old_smokers, support::small_hyper());
    EXPECT_EQ(code_of([&] { generate(joint, no_old_smokers, m, nn, 2); }), ErrorCode::kInfeasibleJointRegion);
    EXPECT_EQ(code_of([&] { generate({{interval("age", 89.99, 90, 5, false)}, true}, w.data, w.model, nn, 2); }),
              ErrorCode::kNoMatchingRows);
}

TEST(Generate, IndependentModeConcatenatesInOrder) {
    const auto w = make_world();
    const InterpolationBackend nn;
    const ConstraintSet set{{interval("age", 20, 40, 30), cats("smoker", {"yes"}, 20)}, false};
    const auto batch = generate(set, w.data, w.model, nn, 3);
    ASSERT_EQ(batch.size(), 50u);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t k = batch.constraint_of[i];
        EXPECT_EQ(k, i < 30 ? 0u : 1u);
        EXPECT_TRUE(satisfies(w.data.schema(), batch.rows.rows()[i], std::span(&set.constraints[k], 1)));
    }
}

TEST(Generate, InterpolationStaysWithinParents) {
    const auto w = make_world(3000, 5);
    const auto c = interval("age", 30, 70, 50);
    const auto pool = matching_pool(w.data, std::span(&c, 1));
    ASSERT_GE(pool.size(), 400u);
    const InterpolationBackend nn;
    const auto batch = generate({{c}, true}, w.data, w.model, nn, 4);
    ASSERT_EQ(batch.size(), 50u);
    const std::set<std::size_t> pool_set(pool.begin(), pool.end());
    const auto& schema = w.data.schema();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto pa = w.data.find_row(batch.parents[i][0]);
        const auto pb = w.data.find_row(batch.parents[i][1]);
        ASSERT_TRUE(pa && pb);
        EXPECT_TRUE(pool_set.count(*pa) && pool_set.count(*pb));
        const Row& a = w.data.rows()[*pa];
        const Row& b = w.data.rows()[*pb];
        const Row& g = batch.rows.rows()[i];
        for (std::size_t col = 0; col < schema.size(); ++col) {
            if (schema[col].is_continuous()) {
                const double lo = std::min(std::get<double>(a[col]), std::get<double>(b[col]));
                const double hi = std::max(std::get<double>(a[col]), std::get<double>(b[col]));
                EXPECT_GE(std::get<double>(g[col]), lo);
                EXPECT_LE(std::get<double>(g[col]), hi);
            } else {
                EXPECT_TRUE(g[col] == a[col] || g[col] == b[col]);
            }
        }
    }
}

TEST(Generate, DeterministicPerSeedAndScored) {
    const auto w = make_world();
    const InterpolationBackend nn;
    const ConstraintSet set{{interval("bmi", 25, 35, 80)}, true};
    const auto a = generate(set, w.data, w.model, nn, 9);
    const auto b = generate(set, w.data, w.model, nn, 9);
    const auto c = generate(set, w.data, w.model, nn, 10);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
    EXPECT_NE(a.rows.rows(), c.rows.rows());
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.predictions[i], predict(w.model, a.rows.rows()[i]));
        agree += a.predictions[i].predicted_class == std::get<std::string>(a.rows.rows()[i][3]);
    }
    EXPECT_DOUBLE_EQ(a.estimated_accuracy, static_cast<double>(agree) / static_cast<double>(a.size()));
    ASSERT_TRUE(a.estimated_quality.has_value());
    EXPECT_EQ(a.base_snapshot, train_snapshot_hash(w.data));
}

TEST(Generate, CapAndStaleModel) {
    const auto w = make_world();
    const InterpolationBackend nn;
    AugmentConfig cfg;
    cfg.cap = 10;
    EXPECT_EQ(code_of([&] { generate({{interval("age", 20, 40, 11)}, true}, w.data, w.model, nn, 1, cfg); }),
              ErrorCode::kCapExceeded);
    const auto other = make_world(1000, 4);
    EXPECT_EQ(code_of([&] { generate({{interval("age", 20, 40, 5)}, true}, w.data, other.model, nn, 1); }),
              ErrorCode::kModelStale);
}

TEST(Generate, SoundnessOverRandomConstraintSets) {
    const auto w = make_world(2000, 8);
    const InterpolationBackend nn;
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> u(0, 1);
    int generated = 0;
    for (int trial = 0; trial < 40; ++trial) {
        ConstraintSet set;
        set.joint = u(rng) < 0.5;
        const std::size_t count = 1 + rng() % 60;
        const double a0 = 20 + 60 * u(rng);
        set.constraints.push_back(interval("age", a0, std::min(89.9, a0 + 5 + 30 * u(rng)), count, u(rng) < 0.5));
        if (u(rng) < 0.6) {
            const double b0 = 15 + 20 * u(rng);
            set.constraints.push_back(interval("bmi", b0, b0 + 4 + 10 * u(rng), set.joint ? count : 1 + rng() % 60));
        }
        if (u(rng) < 0.4) set.constraints.push_back(cats("smoker", {u(rng) < 0.5 ? "yes" : "no"}, set.joint ? count : 7));
        try {
            const auto batch = generate(set, w.data, w.model, nn, trial);
            EXPECT_EQ(batch.size(), set.total_requested());
            for (std::size_t i = 0; i < batch.size(); ++i) {
                const auto& row = batch.rows.rows()[i];
                if (set.joint) {
                    EXPECT_TRUE(satisfies(w.data.schema(), row, set.constraints));
                } else {
                    EXPECT_TRUE(satisfies(w.data.schema(), row, std::span(&set.constraints[batch.constraint_of[i]], 1)));
                }
            }
            ++generated;
        } catch (const Error& e) {
            EXPECT_TRUE(e.code() == ErrorCode::kInfeasibleJointRegion || e.code() == ErrorCode::kNoMatchingRows)
                << e.what();
        }
    }
    EXPECT_GT(generated, 20);
}

TEST(ExternalBackend, RunsCommandAndChecksRows) {
    const auto w = make_world(400);
    support::TempDir tmp;
    // Emits `count` copies of a fixed in-region row.
    const auto good = tmp.path() / "good.sh";
    std::ofstream(good) << "#!/bin/sh\n"
                           "n=$(python3 -c \"import json,sys; print(json.load(open(sys.argv[1]))['count'])\" \"$1\")\n"
                           "echo 'age,smoker,bmi,y,parent_a,parent_b' > \"$2\"\n"
                           "i=0; while [ $i -lt $n ]; do echo \"65.5,no,24,1,1,2\" >> \"$2\"; i=$((i+1)); done\n";
    const auto bad = tmp.path() / "bad.sh";
    std::ofstream(bad) << "#!/bin/sh\necho 'age,smoker,bmi,y' > \"$2\"\necho '25,no,24,1' >> \"$2\"\n";
    const auto fail = tmp.path() / "fail.sh";
    std::ofstream(fail) << "#!/bin/sh\nexit 3\n";
    const ConstraintSet set{{interval("age", 60, 80, 3)}, true};
    const ExternalCommandBackend ok("sh " + good.string());
    const auto batch = generate(set, w.data, w.model, ok, 1);
    ASSERT_EQ(batch.size(), 3u);
    EXPECT_EQ(batch.parents[0], (std::array<RowId, 2>{1, 2}));
    EXPECT_EQ(batch.generator_id, "external@1");
    EXPECT_EQ(code_of([&] { generate(set, w.data, w.model, ExternalCommandBackend("sh " + bad.string()), 1); }),
              ErrorCode::kBackendFailure);
    EXPECT_EQ(code_of([&] { generate(set, w.data, w.model, ExternalCommandBackend("sh " + fail.string()), 1); }),
              ErrorCode::kBackendFailure);
}

TEST(Autotune, SeverityGridMatchesExhaustiveEnumeration) {
    const auto d = support::severity_dataset();
    ThresholdPolicy policy;
    policy.absolute = 200;
    AutotuneOptions options;
    options.levels = {0, 100, 200, 350};
    const auto set = naive_autotune(d, policy, 16, options);

    // Exhaustive oracle over the 16-point grid.
    double best = -1;
    std::size_t best_m = 0, best_s = 0;
    for (std::size_t m : options.levels) {
        for (std::size_t s : options.levels) {
            const std::vector<double> c{500, 150.0 + m, 250.0 + s};
            const auto rates = support::oracle_rates(c);
            const double rr = (rates[0] + rates[1] + rates[2]) / 3;
            double cr = 0;
            for (double x : c) cr += x >= 200 ? 1.0 / 3.0 : 0.0;
            const double obj = rr + cr;
            if (obj > best + 1e-12 || (std::abs(obj - best) <= 1e-12 && m + s < best_m + best_s)) {
                best = obj;
                best_m = m;
                best_s = s;
            }
        }
    }
    EXPECT_EQ(best_m, 350u);
    EXPECT_EQ(best_s, 200u);
    ASSERT_EQ(set.constraints.size(), 2u);
    std::map<std::string, std::size_t> picked;
    for (const auto& c : set.constraints) picked[std::get<CategorySet>(c.region).categories.at(0)] = c.requested_count;
    EXPECT_EQ(picked.at("moderate"), 350u);
    EXPECT_EQ(picked.at("severe"), 200u);
    EXPECT_FALSE(set.joint);
}

TEST(Autotune, AlreadyMaximalGivesEmptySet) {
    Schema s{categorical("a", {"x", "y"}), categorical("t", {"0", "1"}, VariableRole::kTarget)};
    std::vector<Row> rows;
    for (int i = 0; i < 100; ++i) rows.push_back({std::string(i % 2 ? "x" : "y"), std::string(i % 3 ? "0" : "1")});
    ThresholdPolicy policy;
    policy.absolute = 10;
    EXPECT_TRUE(naive_autotune(support::from_rows(s, rows), policy, 64).empty());
}

TEST(Autotune, ObjectiveNeverDecreases) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 25; ++trial) {
        const auto d = support::random_dataset(rng, 400, 4);
        ThresholdPolicy policy;
        policy.absolute = 1 + rng() % 80;
        const auto set = naive_autotune(d, policy, 1 + rng() % 64);
        // Hypothetical counts under the same conditional-spread assumption.
        const auto counts = segment_counts(d);
        std::vector<std::vector<double>> hypo;
        for (const auto& c : counts) hypo.emplace_back(c.begin(), c.end());
        const auto before = aggregate_scores(hypo, static_cast<double>(policy.resolve(d.size())));
        const auto preds = predictor_indices(d.schema());
        for (const auto& c : set.constraints) {
            const auto pool = matching_pool(d, std::span(&c, 1));
            ASSERT_GE(pool.size(), 2u);
            for (std::size_t v = 0; v < preds.size(); ++v) {
                for (std::size_t i : pool) {
                    hypo[v][segment_index(d.rows()[i][preds[v]], d.schema()[preds[v]])] +=
                        static_cast<double>(c.requested_count) / static_cast<double>(pool.size());
                }
            }
        }
        const auto after = aggregate_scores(hypo, static_cast<double>(policy.resolve(d.size())));
        EXPECT_GE(after.rr + after.cr + 1e-9, before.rr + before.cr) << "trial " << trial;
    }
}
