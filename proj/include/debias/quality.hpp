#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "debias/dataset.hpp"

namespace debias {

/// Tukey fences per continuous column, frozen from original data so that
/// outlier counts stay comparable across merges.
struct OutlierFences {
    std::map<std::string, std::pair<double, double>> bounds;
};

struct QualityConfig {
    double iqr_multiplier = 1.5;
    double association_threshold = 0.8;
    double skew_threshold = 1.0;
    std::optional<OutlierFences> fences;
};

struct CorrelatedPair {
    std::string first;
    std::string second;
    double association = 0.0;
};

struct QualityReport {
    double outlier_severity = 0.0;
    double duplicate_severity = 0.0;
    double correlation_severity = 0.0;
    double skew_severity = 0.0;
    double imbalance_severity = 0.0;
    double overall = 1.0;
    std::vector<CorrelatedPair> flagged_pairs;
    std::vector<RowId> outlier_rows;
    std::vector<RowId> duplicate_rows;  // second and later copies
};

struct QualityDelta {
    double outlier = 0.0;
    double duplicate = 0.0;
    double correlation = 0.0;
    double skew = 0.0;
    double imbalance = 0.0;
    double overall = 0.0;
};

/// Fences from the original rows of `dataset` (every row when none are original).
OutlierFences compute_fences(const TabularDataset& dataset, double iqr_multiplier = 1.5);

/// Five equal-weight issue severities and overall = 1 - mean(severities).
QualityReport quality_report(const TabularDataset& dataset, const QualityConfig& config = {});
QualityDelta delta_quality(const QualityReport& before, const QualityReport& after);

nlohmann::json to_json(const QualityReport& report);
nlohmann::json to_json(const QualityDelta& delta);

}  // namespace debias
