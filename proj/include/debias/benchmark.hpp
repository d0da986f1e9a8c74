#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "debias/augment.hpp"
#include "debias/curation.hpp"
#include "debias/dataset.hpp"
#include "debias/model.hpp"

namespace debias {

/// Diabetes-like schema: age, gender, bmi, glucose, cholesterol, smoking,
/// activity, family_history and a binary diabetes target.
Schema benchmark_schema();

/// Fixed synthetic benchmark with a few rare segments (underweight BMI,
/// age 75+, glucose 11.1+). Same seed, same bytes.
TabularDataset benchmark_dataset(std::size_t rows = 2000, std::uint64_t seed = 20240601);

struct RatioBenchConfig {
    std::size_t seeds = 20;
    std::uint64_t first_seed = 1;
    std::size_t batches_per_seed = 12;
    std::size_t requested = 100;
    // Region widths are drawn log-uniformly between these quantile spans.
    double min_width = 0.01;
    double max_width = 0.6;
};

struct RatioPoint {
    std::uint64_t seed = 0;
    std::string variable;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t existing = 0;
    std::size_t requested = 0;
    double ratio = 0.0;
    double log_ratio = 0.0;  // natural log
    double estimated_accuracy = 0.0;
};

struct RatioBenchResult {
    std::vector<RatioPoint> points;
    double mean_below = 0.0;      // ratio < 1
    double mean_at_or_above = 0.0;  // ratio >= 1
    std::size_t count_below = 0;
    std::size_t count_at_or_above = 0;
};

/// Generates single-interval batches over regions of varying size with a
/// fixed request and records (existing/requested, estimated accuracy).
RatioBenchResult ratio_bench(const TabularDataset& dataset, const ModelArtifact& model,
                             const GeneratorBackend& backend, const RatioBenchConfig& config = {});

nlohmann::json to_json(const RatioBenchResult& result);
/// Mean estimated accuracy per log-ratio bin, as text.
std::string render_ratio_table(const RatioBenchResult& result, double bin_width = 0.5);

struct BaselineResult {
    HistoryEntry before;
    HistoryEntry after;
    ConstraintSet constraints;
    std::size_t generated = 0;
};

/// naive_autotune, generate, merge (acknowledged) and retrain on `session`.
BaselineResult run_baseline(Session& session, std::size_t budget, const GeneratorBackend& backend,
                            std::uint64_t seed, const AutotuneOptions& options = {});

nlohmann::json to_json(const BaselineResult& result);

}  // namespace debias
