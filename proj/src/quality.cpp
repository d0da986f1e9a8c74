#include "debias/quality.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "debias/error.hpp"
#include "debias/stats.hpp"

namespace debias {

using nlohmann::json;

OutlierFences compute_fences(const TabularDataset& dataset, double iqr_multiplier) {
    const auto& schema = dataset.schema();
    const bool has_original = std::any_of(dataset.provenance().begin(), dataset.provenance().end(),
                                          [](Provenance p) { return p == Provenance::kOriginal; });
    OutlierFences fences;
    for (std::size_t c : predictor_indices(schema)) {
        if (!schema[c].is_continuous()) continue;
        std::vector<double> values;
        for (std::size_t r = 0; r < dataset.size(); ++r) {
            if (has_original && dataset.provenance()[r] != Provenance::kOriginal) continue;
            values.push_back(std::get<double>(dataset.rows()[r][c]));
        }
        if (values.empty()) continue;
        const double q1 = quantile(values, 0.25);
        const double q3 = quantile(values, 0.75);
        const double iqr = q3 - q1;
        fences.bounds[schema[c].name] = {q1 - iqr_multiplier * iqr, q3 + iqr_multiplier * iqr};
    }
    return fences;
}

QualityReport quality_report(const TabularDataset& dataset, const QualityConfig& config) {
    if (dataset.empty()) throw Error(ErrorCode::kEmptyDataset, "quality of an empty dataset");
    const auto& schema = dataset.schema();
    const auto& rows = dataset.rows();
    const auto n = static_cast<double>(dataset.size());
    const auto predictors = predictor_indices(schema);
    QualityReport report;

    // Outliers: rows with any continuous cell outside the Tukey fences.
    const OutlierFences fences = config.fences ? *config.fences : compute_fences(dataset, config.iqr_multiplier);
    std::vector<std::pair<std::size_t, std::pair<double, double>>> checks;
    for (std::size_t c : predictors) {
        auto it = fences.bounds.find(schema[c].name);
        if (schema[c].is_continuous() && it != fences.bounds.end()) checks.emplace_back(c, it->second);
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (const auto& [c, bounds] : checks) {
            const double v = std::get<double>(rows[r][c]);
            if (v < bounds.first || v > bounds.second) {
                report.outlier_rows.push_back(dataset.row_ids()[r]);
                break;
            }
        }
    }
    report.outlier_severity = static_cast<double>(report.outlier_rows.size()) / n;

    // Duplicates: 1 - distinct / total over full rows.
    std::unordered_set<std::string> distinct;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::string key;
        for (const auto& cell : rows[r]) {
            key += format_cell(cell);
            key += '\x1f';
        }
        if (!distinct.insert(std::move(key)).second) report.duplicate_rows.push_back(dataset.row_ids()[r]);
    }
    report.duplicate_severity = 1.0 - static_cast<double>(distinct.size()) / n;

    // Pairwise association between predictors.
    std::vector<std::vector<double>> numeric(schema.size());
    std::vector<std::vector<std::size_t>> coded(schema.size());
    for (std::size_t c : predictors) {
        if (schema[c].is_continuous()) {
            numeric[c].reserve(rows.size());
            for (const auto& row : rows) numeric[c].push_back(std::get<double>(row[c]));
        } else {
            coded[c].reserve(rows.size());
            for (const auto& row : rows) coded[c].push_back(*schema[c].category_index(std::get<std::string>(row[c])));
        }
    }
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < predictors.size(); ++i) {
        for (std::size_t j = i + 1; j < predictors.size(); ++j) {
            const std::size_t a = predictors[i];
            const std::size_t b = predictors[j];
            const bool ca = schema[a].is_continuous();
            const bool cb = schema[b].is_continuous();
            double assoc = 0.0;
            if (ca && cb) {
                assoc = abs_pearson(numeric[a], numeric[b]);
            } else if (!ca && !cb) {
                assoc = cramers_v(coded[a], coded[b]);
            } else if (ca) {
                assoc = correlation_ratio(coded[b], numeric[a]);
            } else {
                assoc = correlation_ratio(coded[a], numeric[b]);
            }
            ++pairs;
            if (assoc > config.association_threshold) {
                report.flagged_pairs.push_back({schema[a].name, schema[b].name, assoc});
            }
        }
    }
    report.correlation_severity =
        pairs == 0 ? 0.0 : static_cast<double>(report.flagged_pairs.size()) / static_cast<double>(pairs);

    // Skew: continuous predictors with |g1| above the threshold.
    std::size_t continuous = 0;
    std::size_t skewed = 0;
    for (std::size_t c : predictors) {
        if (!schema[c].is_continuous()) continue;
        ++continuous;
        if (std::abs(skewness(numeric[c])) > config.skew_threshold) ++skewed;
    }
    report.skew_severity = continuous == 0 ? 0.0 : static_cast<double>(skewed) / static_cast<double>(continuous);

    // Imbalance over the declared target classes.
    const std::size_t tcol = dataset.target_column();
    std::vector<std::size_t> class_counts(schema[tcol].categories.size(), 0);
    for (const auto& row : rows) ++class_counts[*schema[tcol].category_index(std::get<std::string>(row[tcol]))];
    const auto [lo, hi] = std::minmax_element(class_counts.begin(), class_counts.end());
    report.imbalance_severity = 1.0 - static_cast<double>(*lo) / static_cast<double>(*hi);

    const double mean_severity = (report.outlier_severity + report.duplicate_severity + report.correlation_severity +
                                  report.skew_severity + report.imbalance_severity) /
                                 5.0;
    report.overall = std::clamp(1.0 - mean_severity, 0.0, 1.0);
    return report;
}

QualityDelta delta_quality(const QualityReport& before, const QualityReport& after) {
    return {after.outlier_severity - before.outlier_severity,
            after.duplicate_severity - before.duplicate_severity,
            after.correlation_severity - before.correlation_severity,
            after.skew_severity - before.skew_severity,
            after.imbalance_severity - before.imbalance_severity,
            after.overall - before.overall};
}

json to_json(const QualityReport& report) {
    json pairs = json::array();
    for (const auto& p : report.flagged_pairs) {
        pairs.push_back({{"first", p.first}, {"second", p.second}, {"association", p.association}});
    }
    return {{"outlier_severity", report.outlier_severity},
            {"duplicate_severity", report.duplicate_severity},
            {"correlation_severity", report.correlation_severity},
            {"skew_severity", report.skew_severity},
            {"imbalance_severity", report.imbalance_severity},
            {"overall", report.overall},
            {"overall_percent", report.overall * 100.0},
            {"flagged_pairs", pairs},
            {"outlier_rows", report.outlier_rows},
            {"duplicate_rows", report.duplicate_rows}};
}

json to_json(const QualityDelta& delta) {
    return {{"outlier", delta.outlier},     {"duplicate", delta.duplicate}, {"correlation", delta.correlation},
            {"skew", delta.skew},           {"imbalance", delta.imbalance}, {"overall", delta.overall}};
}

}  // namespace debias
