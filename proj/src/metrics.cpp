#include "debias/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "debias/error.hpp"

namespace debias {

using nlohmann::json;

std::vector<double> representation_rates(std::span<const double> counts) {
    if (counts.empty()) throw Error(ErrorCode::kInvalidArgument, "no segments");
    double top = 0.0;
    for (double c : counts) {
        if (c < 0.0) throw Error(ErrorCode::kInvalidArgument, "negative segment count");
        top = std::max(top, c);
    }
    if (top <= 0.0) throw Error(ErrorCode::kAllZeroCounts, "every segment count is zero");
    std::vector<double> rates(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) rates[i] = counts[i] / top;
    return rates;
}

std::map<std::string, double> representation_rates(const std::map<std::string, std::size_t>& counts) {
    std::vector<double> values;
    for (const auto& [name, count] : counts) values.push_back(static_cast<double>(count));
    const auto rates = representation_rates(values);
    std::map<std::string, double> out;
    std::size_t i = 0;
    for (const auto& [name, count] : counts) out[name] = rates[i++];
    return out;
}

std::map<std::string, bool> coverage(const std::map<std::string, std::size_t>& counts, std::size_t threshold) {
    std::map<std::string, bool> out;
    for (const auto& [name, count] : counts) out[name] = count >= threshold;
    return out;
}

std::size_t ThresholdPolicy::resolve(std::size_t train_rows) const {
    if (absolute) return std::max<std::size_t>(1, *absolute);
    const auto scaled = static_cast<std::size_t>(std::ceil(fraction_of_train * static_cast<double>(train_rows) - 1e-9));
    return std::max<std::size_t>({std::size_t{1}, minimum, scaled});
}

std::string_view to_string(InsightReason reason) {
    switch (reason) {
        case InsightReason::kLowRr: return "low_rr";
        case InsightReason::kLowCoverage: return "low_coverage";
        case InsightReason::kLowAccuracy: return "low_accuracy";
    }
    return "?";
}

const VariableReport* BiasReport::find(std::string_view variable) const {
    for (const auto& v : per_variable) {
        if (v.variable == variable) return &v;
    }
    return nullptr;
}

AggregateScores aggregate_scores(const std::vector<std::vector<double>>& counts_per_variable, double threshold,
                                 RrAggregation aggregation) {
    if (counts_per_variable.empty()) return {1.0, 1.0};
    double rr_sum = 0.0;
    double pooled_sum = 0.0;
    std::size_t segments_total = 0;
    std::size_t covered = 0;
    for (const auto& counts : counts_per_variable) {
        const auto rates = representation_rates(counts);
        double var_sum = 0.0;
        for (double r : rates) var_sum += r;
        rr_sum += var_sum / static_cast<double>(rates.size());
        pooled_sum += var_sum;
        segments_total += counts.size();
        for (double c : counts) {
            if (c >= threshold) ++covered;
        }
    }
    AggregateScores out;
    out.rr = aggregation == RrAggregation::kMeanOfVariableMeans
                 ? rr_sum / static_cast<double>(counts_per_variable.size())
                 : pooled_sum / static_cast<double>(segments_total);
    out.cr = static_cast<double>(covered) / static_cast<double>(segments_total);
    return out;
}

std::size_t representation_rows(const TabularDataset& dataset) {
    return dataset.is_split() ? dataset.indices_with(SplitTag::kTrain).size() : dataset.size();
}

std::vector<std::vector<std::size_t>> segment_counts(const TabularDataset& dataset) {
    const auto& schema = dataset.schema();
    const auto predictors = predictor_indices(schema);
    std::vector<std::vector<std::size_t>> counts;
    for (std::size_t col : predictors) counts.emplace_back(schema[col].segment_count(), 0);
    const bool split_done = dataset.is_split();
    for (std::size_t r = 0; r < dataset.size(); ++r) {
        if (split_done && dataset.split_tags()[r] != SplitTag::kTrain) continue;
        for (std::size_t v = 0; v < predictors.size(); ++v) {
            ++counts[v][segment_index(dataset.rows()[r][predictors[v]], schema[predictors[v]])];
        }
    }
    return counts;
}

namespace {

BiasReport build_report(const TabularDataset& dataset, const ModelArtifact* model, const ThresholdPolicy& policy) {
    const auto& schema = dataset.schema();
    const auto predictors = predictor_indices(schema);
    const auto counts = segment_counts(dataset);
    const std::size_t threshold = policy.resolve(representation_rows(dataset));

    BiasReport report;
    report.coverage_threshold = threshold;
    report.train_snapshot = train_snapshot_hash(dataset);
    report.has_accuracy = model != nullptr;

    std::vector<std::vector<double>> as_double;
    for (std::size_t v = 0; v < predictors.size(); ++v) {
        const auto& var = schema[predictors[v]];
        std::vector<double> c(counts[v].begin(), counts[v].end());
        as_double.push_back(c);
        const auto rates = representation_rates(c);

        std::vector<SegmentAccuracy> accuracy;
        if (model) accuracy = segment_accuracy(*model, dataset, var.name);

        VariableReport vr;
        vr.variable = var.name;
        const auto segs = segments(var);
        std::size_t covered = 0;
        double rate_sum = 0.0;
        for (std::size_t s = 0; s < segs.size(); ++s) {
            SegmentStats st;
            st.segment = segs[s];
            st.count = counts[v][s];
            st.representation_rate = rates[s];
            st.coverage_threshold = threshold;
            st.covered = st.count >= threshold;
            if (model) {
                st.accuracy_by_outcome = accuracy[s].by_outcome;
                st.accuracy = accuracy[s].overall;
            }
            covered += st.covered ? 1 : 0;
            rate_sum += st.representation_rate;
            vr.segments.push_back(std::move(st));
        }
        vr.rr = rate_sum / static_cast<double>(segs.size());
        vr.cr = static_cast<double>(covered) / static_cast<double>(segs.size());
        report.per_variable.push_back(std::move(vr));
    }
    const auto scores = aggregate_scores(as_double, static_cast<double>(threshold), policy.aggregation);
    report.overall_rr = scores.rr;
    report.overall_cr = scores.cr;

    // Quick insights: ascending by min(rate, accuracy relative to the model's
    // overall heldout accuracy), top ten.
    const double overall_acc = model ? model->heldout_accuracy() : 0.0;
    struct Ranked {
        QuickInsight insight;
        std::size_t var_order;
        std::size_t seg_order;
    };
    std::vector<Ranked> ranked;
    for (std::size_t v = 0; v < report.per_variable.size(); ++v) {
        const auto& vr = report.per_variable[v];
        for (std::size_t s = 0; s < vr.segments.size(); ++s) {
            const auto& st = vr.segments[s];
            double acc_norm = 1.0;
            if (model && overall_acc > 0.0) {
                if (auto r = st.accuracy.ratio()) acc_norm = std::min(1.0, *r / overall_acc);
            }
            const double score = std::min(st.representation_rate, acc_norm);
            if (score >= 1.0 && st.covered) continue;
            InsightReason reason = InsightReason::kLowRr;
            if (acc_norm < st.representation_rate) {
                reason = InsightReason::kLowAccuracy;
            } else if (!st.covered) {
                reason = InsightReason::kLowCoverage;
            }
            ranked.push_back({{vr.variable, st.segment.label, reason, score}, v, s});
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.insight.score != b.insight.score) return a.insight.score < b.insight.score;
        if (a.var_order != b.var_order) return a.var_order < b.var_order;
        return a.seg_order < b.seg_order;
    });
    for (std::size_t i = 0; i < ranked.size() && i < 10; ++i) report.quick_insights.push_back(ranked[i].insight);
    return report;
}

json accuracy_json(const CellAccuracy& acc) {
    if (auto r = acc.ratio()) return *r;
    return nullptr;
}

std::string fixed(double value, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
    return buf;
}

}  // namespace

BiasReport bias_report(const TabularDataset& dataset, const ThresholdPolicy& policy) {
    return build_report(dataset, nullptr, policy);
}

BiasReport bias_report(const TabularDataset& dataset, const ModelArtifact& model, const ThresholdPolicy& policy) {
    require_fresh(model, dataset);
    return build_report(dataset, &model, policy);
}

json to_json(const VariableReport& report) {
    json segs = json::array();
    for (const auto& st : report.segments) {
        json by_outcome = json::object();
        for (const auto& [cls, acc] : st.accuracy_by_outcome) {
            by_outcome[cls] = {{"accuracy", accuracy_json(acc)}, {"correct", acc.correct}, {"total", acc.total}};
        }
        segs.push_back({{"label", st.segment.label},
                        {"index", st.segment.index},
                        {"region", region_to_json(st.segment.region)},
                        {"count", st.count},
                        {"representation_rate", st.representation_rate},
                        {"covered", st.covered},
                        {"coverage_threshold", st.coverage_threshold},
                        {"accuracy", accuracy_json(st.accuracy)},
                        {"accuracy_by_outcome", by_outcome}});
    }
    return {{"variable", report.variable}, {"rr", report.rr}, {"cr", report.cr}, {"segments", segs}};
}

json to_json(const BiasReport& report) {
    json vars = json::array();
    for (const auto& v : report.per_variable) vars.push_back(to_json(v));
    json insights = json::array();
    for (const auto& qi : report.quick_insights) {
        insights.push_back(
            {{"variable", qi.variable}, {"segment", qi.segment}, {"reason", to_string(qi.reason)}, {"score", qi.score}});
    }
    return {{"overall_rr", report.overall_rr},
            {"overall_cr", report.overall_cr},
            {"coverage_threshold", report.coverage_threshold},
            {"train_snapshot", hex_digest(report.train_snapshot)},
            {"per_variable", vars},
            {"quick_insights", insights}};
}

std::string render_table(const BiasReport& report) {
    std::vector<std::vector<std::string>> table;
    table.push_back({"variable", "segment", "count", "rate", "covered", "accuracy"});
    for (const auto& v : report.per_variable) {
        for (const auto& st : v.segments) {
            std::string acc = "-";
            if (auto r = st.accuracy.ratio()) acc = fixed(*r, 3);
            table.push_back({v.variable, st.segment.label, std::to_string(st.count), fixed(st.representation_rate, 2),
                             st.covered ? "yes" : "no", acc});
        }
    }
    std::vector<std::size_t> widths(table.front().size(), 0);
    for (const auto& row : table) {
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
    }
    std::ostringstream out;
    for (const auto& row : table) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << "  ";
            const bool numeric = c >= 2;
            const std::string pad(widths[c] - row[c].size(), ' ');
            out << (numeric ? pad + row[c] : row[c] + (c + 1 < row.size() ? pad : ""));
        }
        out << '\n';
    }
    out << "overall RR " << fixed(report.overall_rr, 4) << "  overall CR " << fixed(report.overall_cr, 4)
        << "  coverage threshold " << report.coverage_threshold << '\n';
    if (!report.quick_insights.empty()) {
        out << "quick insights:\n";
        for (const auto& qi : report.quick_insights) {
            out << "  " << qi.variable << " / " << qi.segment << "  " << to_string(qi.reason) << "  "
                << fixed(qi.score, 2) << '\n';
        }
    }
    return out.str();
}

}  // namespace debias
