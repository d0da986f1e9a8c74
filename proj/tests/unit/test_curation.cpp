#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace debias;
using support::categorical;
using support::code_of;
using support::continuous;

namespace {

Clock fixed_clock() {
    return [] { return std::string("2024-01-01T00:00:00Z"); };
}

// label = bmi >= 30 exactly; bmi on a half-unit grid away from the boundary.
TabularDataset bmi_dataset(std::size_t n = 600, std::uint64_t seed = 21) {
    Schema s{continuous("age", {18, 40, 60, 90}), continuous("bmi", {10, 18.5, 25, 30, 60}),
             categorical("sex", {"f", "m"}), categorical("obese", {"0", "1"}, VariableRole::kTarget)};
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> half(40, 90);  // bmi 20.0 .. 45.0
    std::uniform_real_distribution<double> age(18, 89);
    std::vector<Row> rows;
    for (std::size_t i = 0; i < n; ++i) {
        const double bmi = half(rng) / 2.0;
        rows.push_back({std::round(age(rng)), bmi, std::string(rng() % 2 ? "f" : "m"),
                        std::string(bmi >= 30 ? "1" : "0")});
    }
    return support::from_rows(s, rows);
}

Session bmi_session(SessionSettings settings = support::small_settings()) {
    return Session::create(bmi_dataset(), settings, fixed_clock());
}

ConstraintSet age_constraint(double lo, double hi, std::size_t count) {
    return {{{"age", Interval{lo, hi, true}, count}}, true};
}

}  // namespace

TEST(WhatIf, BmiAcrossThresholdFlipsPrediction) {
    SessionSettings settings = support::small_settings();
    settings.hyperparameters.trees = 30;
    settings.hyperparameters.max_depth = 1;
    settings.hyperparameters.min_data_in_leaf = 2;
    auto session = bmi_session(settings);
    const InterpolationBackend nn;
    const auto& batch = session.augment(age_constraint(40, 60, 20), nn, 1);
    const RowId id = batch.rows.row_ids()[0];
    const auto lo = session.what_if(id, "bmi", 26.0);
    const auto hi = session.what_if(id, "bmi", 34.0);
    EXPECT_EQ(lo.prediction.predicted_class, "0");
    EXPECT_EQ(hi.prediction.predicted_class, "1");
    // Nothing committed.
    EXPECT_TRUE(session.pending()->log.empty());
    EXPECT_EQ(session.pending()->current.rows.rows(), session.pending()->pristine.rows.rows());
}

TEST(WhatIf, IdentityEditChangesNothingButProvenance) {
    auto session = bmi_session();
    const InterpolationBackend nn;
    const auto batch = session.augment(age_constraint(40, 60, 10), nn, 2);
    const RowId id = batch.rows.row_ids()[3];
    const Cell same = batch.rows.rows()[3][1];
    const auto w = session.what_if(id, "bmi", same);
    EXPECT_EQ(w.prediction, batch.predictions[3]);
    session.commit_edit(id, "bmi", same);
    const auto& cur = session.pending()->current;
    EXPECT_EQ(cur.rows.rows(), batch.rows.rows());
    EXPECT_EQ(cur.predictions, batch.predictions);
    EXPECT_EQ(cur.rows.provenance()[3], Provenance::kEdited);
}

TEST(WhatIf, Errors) {
    auto session = bmi_session();
    EXPECT_EQ(code_of([&] { session.what_if(1, "bmi", 30.0); }), ErrorCode::kNoPendingBatch);
    EXPECT_EQ(code_of([&] { session.remove_row(1); }), ErrorCode::kNoPendingBatch);
    const InterpolationBackend nn;
    const auto& batch = session.augment(age_constraint(40, 60, 5), nn, 3);
    const RowId id = batch.rows.row_ids()[0];
    EXPECT_EQ(code_of([&] { session.what_if(1, "bmi", 30.0); }), ErrorCode::kUnknownRow);
    EXPECT_EQ(code_of([&] { session.what_if(id, "bmi", 70.0); }), ErrorCode::kOutOfDomain);
    EXPECT_EQ(code_of([&] { session.what_if(id, "sex", std::string("x")); }), ErrorCode::kOutOfDomain);
    EXPECT_EQ(code_of([&] { session.what_if(id, "height", 1.0); }), ErrorCode::kInvalidArgument);
    EXPECT_EQ(code_of([&] { session.revert(9); }), ErrorCode::kUnknownHistoryIndex);
}

TEST(Edits, CommitRemoveRestoreAndReplay) {
    auto session = bmi_session();
    const InterpolationBackend nn;
    const auto pristine = session.augment(age_constraint(30, 70, 40), nn, 4);
    std::mt19937_64 rng(31);
    std::set<RowId> removed;
    for (int step = 0; step < 120; ++step) {
        const auto& ids = pristine.rows.row_ids();
        const RowId id = ids[rng() % ids.size()];
        const int op = static_cast<int>(rng() % 4);
        if (op == 0) {
            if (removed.count(id)) {
                EXPECT_EQ(code_of([&] { session.remove_row(id); }), ErrorCode::kUnknownRow);
                continue;
            }
            session.remove_row(id);
            removed.insert(id);
        } else if (op == 1) {
            session.restore_row(id);
            removed.erase(id);
        } else if (removed.count(id)) {
            EXPECT_EQ(code_of([&] { session.commit_edit(id, "bmi", 25.0); }), ErrorCode::kUnknownRow);
        } else if (op == 2) {
            session.commit_edit(id, "bmi", 20.0 + static_cast<double>(rng() % 40));
        } else {
            session.commit_edit(id, "sex", std::string(rng() % 2 ? "f" : "m"));
        }
        const auto& pending = *session.pending();
        EXPECT_EQ(pending.current.size(), pristine.size() - removed.size());
        const auto replayed = replay_edits(pending.pristine.rows, pending.log);
        EXPECT_EQ(replayed.rows(), pending.current.rows.rows());
        EXPECT_EQ(replayed.row_ids(), pending.current.rows.row_ids());
        EXPECT_EQ(replayed.provenance(), pending.current.rows.provenance());
        for (std::size_t i = 0; i < pending.current.size(); ++i) {
            EXPECT_EQ(pending.current.predictions[i], predict(session.model(), pending.current.rows.rows()[i]));
        }
    }
    // Log entries survive JSON.
    for (const auto& e : session.pending()->log) {
        const auto back = edit_entry_from_json(to_json(e), session.dataset().schema());
        EXPECT_EQ(to_json(back), to_json(e));
    }
}

TEST(Edits, EditEntryRecordsOldAndNewValues) {
    auto session = bmi_session();
    const InterpolationBackend nn;
    const auto batch = session.augment(age_constraint(40, 60, 5), nn, 5);
    const RowId id = batch.rows.row_ids()[1];
    const auto& e = session.commit_edit(id, "bmi", 41.5);
    EXPECT_EQ(e.kind, EditKind::kEdit);
    EXPECT_EQ(*e.old_value, batch.rows.rows()[1][1]);
    EXPECT_EQ(std::get<double>(*e.new_value), 41.5);
    EXPECT_EQ(e.timestamp, "2024-01-01T00:00:00Z");
    ASSERT_TRUE(e.prediction.has_value());
}

TEST(FilterSort, MatchesLinearScanAndOrderContract) {
    auto session = bmi_session();
    const InterpolationBackend nn;
    auto batch = session.augment({{{"age", Interval{18, 89, true}, 150}}, true}, nn, 6);
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 60; ++trial) {
        RowFilter f;
        if (u(rng) < 0.5) f.confidence_below = 0.5 + 0.5 * u(rng);
        if (u(rng) < 0.3) f.confidence_at_least = 0.5 + 0.3 * u(rng);
        if (u(rng) < 0.3) f.predicted_class = u(rng) < 0.5 ? "0" : "1";
        if (u(rng) < 0.4) {
            const double lo = 18 + 50 * u(rng);
            f.regions.push_back({"age", Interval{lo, lo + 20, true}, 1});
        }
        if (u(rng) < 0.3) f.regions.push_back({"sex", CategorySet{{"f"}}, 1});
        RowOrdering o;
        o.key = static_cast<SortKey>(rng() % 3);
        o.variable = u(rng) < 0.5 ? "bmi" : "sex";
        o.descending = u(rng) < 0.5;
        const auto view = filter_sort(batch, f, o);

        std::set<std::size_t> expected;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const auto& p = batch.predictions[i];
            const auto& row = batch.rows.rows()[i];
            bool keep = true;
            if (f.confidence_below && p.confidence >= *f.confidence_below) keep = false;
            if (f.confidence_at_least && p.confidence < *f.confidence_at_least) keep = false;
            if (f.predicted_class && p.predicted_class != *f.predicted_class) keep = false;
            for (const auto& r : f.regions) {
                if (const auto* iv = std::get_if<Interval>(&r.region)) {
                    const double age = std::get<double>(row[0]);
                    if (age < iv->lo || age > iv->hi) keep = false;
                } else if (std::get<std::string>(row[2]) != "f") {
                    keep = false;
                }
            }
            if (keep) expected.insert(i);
        }
        EXPECT_EQ(std::set<std::size_t>(view.begin(), view.end()), expected);
        ASSERT_EQ(view.size(), expected.size());

        auto key_less = [&](std::size_t a, std::size_t b) {
            switch (o.key) {
                case SortKey::kRowId: return batch.rows.row_ids()[a] < batch.rows.row_ids()[b];
                case SortKey::kConfidence: return batch.predictions[a].confidence < batch.predictions[b].confidence;
                case SortKey::kVariable: {
                    const std::size_t col = o.variable == "bmi" ? 1 : 2;
                    return batch.rows.rows()[a][col] < batch.rows.rows()[b][col];
                }
            }
            return false;
        };
        for (std::size_t k = 1; k < view.size(); ++k) {
            const std::size_t a = view[k - 1], b = view[k];
            const bool ordered = o.descending ? !key_less(a, b) : !key_less(b, a);
            EXPECT_TRUE(ordered);
            // Ties keep batch order.
            if (!key_less(a, b) && !key_less(b, a)) EXPECT_LT(a, b);
        }
    }
}

TEST(Drift, DoublingOneSegmentFlagsOnlyThatVariable) {
    // a: three segments, b: two categories, fully crossed and balanced.
    Schema s{continuous("a", {0, 1, 2, 3}), categorical("b", {"p", "q"}), categorical("t", {"0", "1"}, VariableRole::kTarget)};
    std::vector<Row> rows;
    for (int i = 0; i < 120; ++i) {
        rows.push_back({0.5 + (i % 3), std::string((i / 3) % 2 ? "q" : "p"), std::string((i / 6) % 2 ? "1" : "0")});
    }
    const auto original = support::from_rows(s, rows);
    std::vector<Row> extra;
    for (const auto& r : rows) {
        if (std::get<double>(r[0]) < 1) extra.push_back(r);
    }
    auto merged_rows = rows;
    merged_rows.insert(merged_rows.end(), extra.begin(), extra.end());
    const auto report = drift_report(original, support::from_rows(s, merged_rows));
    ASSERT_EQ(report.variables.size(), 2u);
    // a: {1/3,1/3,1/3} -> {1/2,1/4,1/4}
    EXPECT_NEAR(report.variables[0].score, 1.0 / 6.0, 1e-12);
    EXPECT_TRUE(report.variables[0].flagged);
    EXPECT_EQ(report.variables[1].score, 0.0);
    EXPECT_FALSE(report.variables[1].flagged);
    EXPECT_EQ(report.flagged, (std::vector<std::string>{"a"}));
    EXPECT_EQ(report.variables[0].after_counts, (std::vector<std::size_t>{80, 40, 40}));

    EXPECT_TRUE(drift_report(original, original).flagged.empty());
    // A higher threshold silences it.
    EXPECT_TRUE(drift_report(original, support::from_rows(s, merged_rows), 0.2).flagged.empty());
}

TEST(Drift, TotalVariationProperties) {
    std::mt19937_64 rng(51);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 1 + rng() % 6;
        std::vector<std::size_t> a(k), b(k);
        for (auto& x : a) x = rng() % 50;
        for (auto& x : b) x = rng() % 50;
        a[0] += 1;
        b[0] += 1;
        const double tv = total_variation(a, b);
        EXPECT_GE(tv, 0.0);
        EXPECT_LE(tv, 1.0);
        EXPECT_DOUBLE_EQ(tv, total_variation(b, a));
        EXPECT_EQ(total_variation(a, a), 0.0);
        // Oracle: max over subsets of the probability difference.
        const double na = std::accumulate(a.begin(), a.end(), 0.0), nb = std::accumulate(b.begin(), b.end(), 0.0);
        double best = 0;
        for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
            double d = 0;
            for (std::size_t i = 0; i < k; ++i) {
                if (mask >> i & 1) d += a[i] / na - b[i] / nb;
            }
            best = std::max(best, d);
        }
        EXPECT_NEAR(tv, best, 1e-12);
    }
    const std::vector<std::size_t> x{5, 0}, y{0, 7};
    EXPECT_EQ(total_variation(x, y), 1.0);
    EXPECT_EQ(code_of([&] { total_variation(x, std::vector<std::size_t>{1}); }), ErrorCode::kInvalidArgument);
}

TEST(SessionFlow, BaselineHistoryHasZeroDelta) {
    const auto session = bmi_session();
    ASSERT_EQ(session.history().size(), 1u);
    const auto& h = session.history()[0];
    EXPECT_EQ(h.kind, "baseline");
    EXPECT_EQ(h.index, 0u);
    EXPECT_EQ(h.train_rows, 480u);
    const auto json = history_to_json(session.history());
    EXPECT_EQ(json[0]["delta"]["overall_rr"], 0.0);
    EXPECT_EQ(json[0]["delta"]["accuracy"], 0.0);
    EXPECT_EQ(session.overview().accuracy_delta, 0.0);
    EXPECT_FALSE(session.overview().has_pending);
    for (const auto& e : session.history()) {
        EXPECT_EQ(to_json(history_entry_from_json(to_json(e))), to_json(e));
    }
}

TEST(SessionFlow, MergeRevertAndEmptyMerge) {
    auto session = bmi_session();
    const auto baseline_digest = session.history()[0].dataset_digest;
    const auto heldout = session.dataset().indices_with(SplitTag::kHeldout).size();
    const InterpolationBackend nn;
    session.augment(age_constraint(60, 89, 60), nn, 7);
    session.remove_row(session.pending()->current.rows.row_ids()[0]);
    const auto drift = session.drift();
    const bool flagged = !drift.flagged.empty();
    if (flagged) {
        EXPECT_EQ(code_of([&] { session.merge_and_retrain(false); }), ErrorCode::kDriftNotAcknowledged);
    }
    const auto& merged = session.merge_and_retrain(true);
    EXPECT_EQ(merged.kind, "merge");
    EXPECT_EQ(merged.index, 1u);
    EXPECT_EQ(merged.batch_size, 59u);
    EXPECT_EQ(merged.edit_count, 1u);
    EXPECT_EQ(merged.train_rows, 480u + 59u);
    EXPECT_FALSE(session.pending().has_value());
    EXPECT_EQ(session.dataset().indices_with(SplitTag::kHeldout).size(), heldout);
    EXPECT_EQ(session.model().heldout.total, heldout);
    EXPECT_TRUE(session.model().fresh_for(session.dataset()));
    EXPECT_EQ(session.original_train().size(), 480u);

    session.augment(age_constraint(18, 40, 5), nn, 8);
    const auto& rev = session.revert(0);
    EXPECT_EQ(rev.kind, "revert");
    EXPECT_EQ(*rev.reverted_to, 0u);
    EXPECT_EQ(rev.dataset_digest, baseline_digest);
    EXPECT_EQ(dataset_digest(session.dataset()), baseline_digest);
    EXPECT_FALSE(session.pending().has_value());

    // Retrain without a pending batch merges nothing.
    const auto& empty = session.merge_and_retrain(false);
    EXPECT_EQ(empty.batch_size, 0u);
    EXPECT_EQ(empty.train_rows, 480u);
    EXPECT_EQ(empty.dataset_digest, baseline_digest);
    EXPECT_EQ(session.history().size(), 4u);

    // Revert to the merge restores its dataset and model.
    session.revert(1);
    EXPECT_EQ(session.dataset().indices_with(SplitTag::kTrain).size(), 539u);
    EXPECT_EQ(session.history().back().model_digest, session.history()[1].model_digest);
}

TEST(SessionFlow, UnacknowledgedDriftBlocksMerge) {
    SessionSettings settings = support::small_settings();
    settings.drift_threshold = 0.05;
    auto session = bmi_session(settings);
    const InterpolationBackend nn;
    session.augment(age_constraint(60, 89, 300), nn, 9);
    ASSERT_FALSE(session.drift().flagged.empty());
    EXPECT_EQ(code_of([&] { session.merge_and_retrain(false); }), ErrorCode::kDriftNotAcknowledged);
    EXPECT_EQ(session.history().size(), 1u);
    EXPECT_TRUE(session.pending().has_value());
    EXPECT_TRUE(session.merge_and_retrain(true).augmentation["acknowledged"].get<bool>());
}

TEST(SessionFlow, StaleBatchRejected) {
    auto session = bmi_session();
    const InterpolationBackend nn;
    const auto batch = session.prepare_batch(age_constraint(40, 60, 10), nn, 10);
    session.augment(age_constraint(40, 60, 10), nn, 11);
    session.merge_and_retrain(true);
    EXPECT_EQ(code_of([&] { session.set_pending(batch); }), ErrorCode::kStaleBatch);
}

TEST(SessionFlow, DiscardClearsPending) {
    auto session = bmi_session();
    const InterpolationBackend nn;
    session.augment(age_constraint(40, 60, 10), nn, 12);
    EXPECT_TRUE(session.overview().has_pending);
    session.discard_pending();
    EXPECT_FALSE(session.pending().has_value());
    EXPECT_EQ(session.history().size(), 1u);
}

TEST(Settings, JsonRoundTripAndValidation) {
    SessionSettings s = support::small_settings();
    s.threshold.absolute = 55;
    s.drift_threshold = 0.3;
    s.augment.cap = 777;
    EXPECT_EQ(to_json(settings_from_json(to_json(s))), to_json(s));
    EXPECT_EQ(code_of([] { settings_from_json({{"heldout_fraction", 1.0}}); }), ErrorCode::kInvalidArgument);
    EXPECT_EQ(code_of([] { settings_from_json({{"drift_threshold", 2.0}}); }), ErrorCode::kInvalidArgument);
    EXPECT_EQ(code_of([] { settings_from_json(nlohmann::json::array()); }), ErrorCode::kInvalidArgument);
}
