#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "debias/dataset.hpp"
#include "debias/model.hpp"

namespace debias {

/// Rate of each count relative to the largest count. Throws kAllZeroCounts
/// when every count is zero.
std::vector<double> representation_rates(std::span<const double> counts);
std::map<std::string, double> representation_rates(const std::map<std::string, std::size_t>& counts);

std::map<std::string, bool> coverage(const std::map<std::string, std::size_t>& counts, std::size_t threshold);

enum class RrAggregation {
    kMeanOfVariableMeans,  // mean over variables of the mean segment rate
    kPooledSegments,       // mean over every segment of every variable
};

struct ThresholdPolicy {
    std::optional<std::size_t> absolute;
    std::size_t minimum = 30;
    double fraction_of_train = 0.01;
    RrAggregation aggregation = RrAggregation::kMeanOfVariableMeans;

    /// Coverage threshold for a training set of `train_rows` rows:
    /// the absolute value when set, else max(minimum, ceil(fraction * rows)).
    std::size_t resolve(std::size_t train_rows) const;
};

struct SegmentStats {
    Segment segment;
    std::size_t count = 0;
    double representation_rate = 0.0;
    bool covered = false;
    std::size_t coverage_threshold = 1;
    // Heldout accuracy per true outcome; ratio() is empty for unpopulated cells.
    std::map<std::string, CellAccuracy> accuracy_by_outcome;
    CellAccuracy accuracy;
};

struct VariableReport {
    std::string variable;
    std::vector<SegmentStats> segments;
    double rr = 0.0;
    double cr = 0.0;
};

enum class InsightReason { kLowRr, kLowCoverage, kLowAccuracy };
std::string_view to_string(InsightReason reason);

struct QuickInsight {
    std::string variable;
    std::string segment;
    InsightReason reason = InsightReason::kLowRr;
    double score = 0.0;
};

struct BiasReport {
    std::vector<VariableReport> per_variable;
    double overall_rr = 0.0;
    double overall_cr = 0.0;
    std::vector<QuickInsight> quick_insights;
    std::size_t coverage_threshold = 0;
    std::uint64_t train_snapshot = 0;
    bool has_accuracy = false;

    const VariableReport* find(std::string_view variable) const;
};

struct AggregateScores {
    double rr = 0.0;
    double cr = 0.0;
};

/// Overall RR/CR from per-variable segment counts (counts may be fractional
/// when they describe a hypothetical merge).
AggregateScores aggregate_scores(const std::vector<std::vector<double>>& counts_per_variable, double threshold,
                                 RrAggregation aggregation = RrAggregation::kMeanOfVariableMeans);

/// Segment counts of every predictor over the train rows (all rows when the
/// dataset is unsplit), in schema order.
std::vector<std::vector<std::size_t>> segment_counts(const TabularDataset& dataset);
std::size_t representation_rows(const TabularDataset& dataset);

/// Counts-only report; accuracy fields stay empty.
BiasReport bias_report(const TabularDataset& dataset, const ThresholdPolicy& policy);
/// Full report with heldout accuracy per segment and outcome. Throws
/// kModelStale when `model` was not fitted on the dataset's train rows.
BiasReport bias_report(const TabularDataset& dataset, const ModelArtifact& model, const ThresholdPolicy& policy);

nlohmann::json to_json(const BiasReport& report);
nlohmann::json to_json(const VariableReport& report);
/// Aligned-column text table.
std::string render_table(const BiasReport& report);

}  // namespace debias
