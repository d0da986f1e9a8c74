#include "debias/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "debias/error.hpp"
#include "debias/stats.hpp"

namespace debias {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Portable draws: std distributions are implementation-defined.
struct Draw {
    std::mt19937_64 engine;

    double uniform() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }
    double normal() {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * uniform());
    }
    std::size_t pick(const std::vector<double>& weights) {
        double u = uniform();
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            if (u < weights[i]) return i;
            u -= weights[i];
        }
        return weights.size() - 1;
    }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }
};

double round_to(double value, double step) { return std::round(value / step) * step; }

VariableSchema continuous(std::string name, std::string unit, VariableGroup group, std::vector<double> edges) {
    VariableSchema v;
    v.name = std::move(name);
    v.kind = VariableKind::kContinuous;
    v.unit = std::move(unit);
    v.group = group;
    v.bin_edges = std::move(edges);
    return v;
}

VariableSchema categorical(std::string name, VariableGroup group, std::vector<std::string> categories) {
    VariableSchema v;
    v.name = std::move(name);
    v.kind = VariableKind::kCategorical;
    v.group = group;
    v.categories = std::move(categories);
    return v;
}

}  // namespace

Schema benchmark_schema() {
    Schema schema;
    schema.push_back(continuous("age", "years", VariableGroup::kPhysical, {18, 30, 45, 60, 75, 90}));
    schema.push_back(categorical("gender", VariableGroup::kPhysical, {"female", "male"}));
    schema.push_back(continuous("bmi", "kg/m2", VariableGroup::kPhysical, {10, 18.5, 25, 30, 35, 70}));
    schema.push_back(continuous("glucose", "mmol/L", VariableGroup::kDiagnostic, {2, 5.6, 7.0, 11.1, 30}));
    schema.push_back(continuous("cholesterol", "mmol/L", VariableGroup::kDiagnostic, {2, 5.2, 6.2, 12}));
    schema.push_back(categorical("smoking", VariableGroup::kLifestyle, {"never", "former", "current"}));
    schema.push_back(categorical("activity", VariableGroup::kLifestyle, {"low", "moderate", "high"}));
    VariableSchema family;
    family.name = "family_history";
    family.kind = VariableKind::kBinary;
    family.group = VariableGroup::kHistory;
    family.categories = {"0", "1"};
    schema.push_back(family);
    VariableSchema target;
    target.name = "diabetes";
    target.kind = VariableKind::kBinary;
    target.role = VariableRole::kTarget;
    target.categories = {"0", "1"};
    schema.push_back(target);
    return schema;
}

TabularDataset benchmark_dataset(std::size_t n, std::uint64_t seed) {
    Schema schema = benchmark_schema();
    Draw draw{std::mt19937_64(seed)};
    std::vector<Row> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double age = std::clamp(std::round(48.0 + 12.0 * draw.normal()), 18.0, 89.0);
        const bool male = draw.uniform() < 0.5;
        const double bmi = std::clamp(round_to(28.5 + 4.5 * draw.normal(), 0.1), 12.0, 60.0);
        const double glucose = std::clamp(
            round_to(4.0 + std::exp(0.45 + 0.6 * draw.normal()) + 0.05 * (bmi - 28.5) + 0.015 * (age - 48.0), 0.1),
            2.5, 29.5);
        const double cholesterol =
            std::clamp(round_to(5.0 + 0.9 * draw.normal() + 0.02 * (age - 48.0), 0.1), 2.1, 11.9);
        const std::size_t smoking = draw.pick({0.6, 0.3, 0.1});
        const std::size_t activity = draw.pick({0.35, 0.45, 0.2});
        const bool family = draw.uniform() < 0.25;
        const double logit = -1.2 + 2.2 * (glucose - 6.0) + 0.12 * (bmi - 28.5) + 0.03 * (age - 48.0) +
                             0.8 * (family ? 1.0 : 0.0) + 0.3 * (smoking == 2 ? 1.0 : 0.0) +
                             0.3 * (activity == 0 ? 1.0 : 0.0);
        const bool diabetic = draw.uniform() < 1.0 / (1.0 + std::exp(-logit));
        rows.push_back({age, std::string(male ? "male" : "female"), bmi, glucose, cholesterol,
                        schema[5].categories[smoking], schema[6].categories[activity], std::string(family ? "1" : "0"),
                        std::string(diabetic ? "1" : "0")});
    }
    std::vector<RowId> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i + 1;
    return TabularDataset(std::move(schema), std::move(rows), std::move(ids),
                          std::vector<Provenance>(n, Provenance::kOriginal), std::vector<SplitTag>(n, SplitTag::kUnsplit));
}

RatioBenchResult ratio_bench(const TabularDataset& dataset, const ModelArtifact& model,
                             const GeneratorBackend& backend, const RatioBenchConfig& config) {
    if (config.requested == 0 || !(config.min_width > 0.0) || config.max_width < config.min_width ||
        config.max_width > 1.0) {
        throw Error(ErrorCode::kInvalidArgument, "invalid ratio bench configuration");
    }
    const auto& schema = dataset.schema();
    std::vector<std::size_t> columns;
    for (std::size_t c : predictor_indices(schema)) {
        if (schema[c].is_continuous()) columns.push_back(c);
    }
    if (columns.empty()) throw Error(ErrorCode::kInvalidArgument, "ratio bench needs a continuous predictor");

    // Sorted original train values per continuous predictor.
    std::map<std::size_t, std::vector<double>> sorted;
    for (std::size_t c : columns) {
        auto& values = sorted[c];
        for (std::size_t i : dataset.indices_with(dataset.is_split() ? SplitTag::kTrain : SplitTag::kUnsplit)) {
            if (dataset.provenance()[i] == Provenance::kOriginal) values.push_back(std::get<double>(dataset.rows()[i][c]));
        }
        std::sort(values.begin(), values.end());
    }

    RatioBenchResult result;
    AugmentConfig augment;
    augment.cap = std::max<std::size_t>(config.requested, augment.cap);
    for (std::size_t s = 0; s < config.seeds; ++s) {
        const std::uint64_t seed = config.first_seed + s;
        Draw draw{std::mt19937_64(seed * 0x9E3779B97F4A7C15ull + 17)};
        for (std::size_t b = 0; b < config.batches_per_seed; ++b) {
            const std::size_t c = columns[draw.below(columns.size())];
            const auto& values = sorted[c];
            const double width =
                std::exp(std::log(config.min_width) + draw.uniform() * (std::log(config.max_width) - std::log(config.min_width)));
            const double start = draw.uniform() * (1.0 - width);
            const double lo = quantile(values, start);
            const double hi = quantile(values, start + width);
            SegmentConstraint constraint{schema[c].name, Interval{lo, hi, true}, config.requested};
            const auto pool = matching_pool(dataset, std::span(&constraint, 1));
            if (pool.size() < 2) continue;
            ConstraintSet set{{constraint}, true};
            const auto batch = generate(set, dataset, model, backend, seed * 1000 + b, augment);
            RatioPoint point;
            point.seed = seed;
            point.variable = schema[c].name;
            point.lo = lo;
            point.hi = hi;
            point.existing = pool.size();
            point.requested = config.requested;
            point.ratio = static_cast<double>(pool.size()) / static_cast<double>(config.requested);
            point.log_ratio = std::log(point.ratio);
            point.estimated_accuracy = batch.estimated_accuracy;
            result.points.push_back(point);
        }
    }
    double below = 0.0;
    double above = 0.0;
    for (const auto& p : result.points) {
        if (p.ratio < 1.0) {
            below += p.estimated_accuracy;
            ++result.count_below;
        } else {
            above += p.estimated_accuracy;
            ++result.count_at_or_above;
        }
    }
    if (result.count_below > 0) result.mean_below = below / static_cast<double>(result.count_below);
    if (result.count_at_or_above > 0) result.mean_at_or_above = above / static_cast<double>(result.count_at_or_above);
    return result;
}

json to_json(const RatioBenchResult& result) {
    json points = json::array();
    for (const auto& p : result.points) {
        points.push_back({{"seed", p.seed},
                          {"variable", p.variable},
                          {"min", p.lo},
                          {"max", p.hi},
                          {"existing", p.existing},
                          {"requested", p.requested},
                          {"ratio", p.ratio},
                          {"log_ratio", p.log_ratio},
                          {"estimated_accuracy", p.estimated_accuracy}});
    }
    return {{"mean_below", result.mean_below},
            {"mean_at_or_above", result.mean_at_or_above},
            {"count_below", result.count_below},
            {"count_at_or_above", result.count_at_or_above},
            {"points", points}};
}

std::string render_ratio_table(const RatioBenchResult& result, double bin_width) {
    std::map<long, std::pair<double, std::size_t>> bins;
    for (const auto& p : result.points) {
        auto& bin = bins[static_cast<long>(std::floor(p.log_ratio / bin_width))];
        bin.first += p.estimated_accuracy;
        ++bin.second;
    }
    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << "log_ratio_bin       batches  mean_accuracy\n";
    for (const auto& [k, bin] : bins) {
        std::ostringstream label;
        label << std::fixed << std::setprecision(2) << "[" << static_cast<double>(k) * bin_width << ", "
              << static_cast<double>(k + 1) * bin_width << ")";
        out << std::left << std::setw(20) << label.str() << std::right << std::setw(7) << bin.second << std::setw(15)
            << std::setprecision(4) << bin.first / static_cast<double>(bin.second) << std::setprecision(2) << "\n";
    }
    out << std::setprecision(4) << "ratio < 1:  n=" << result.count_below << " mean=" << result.mean_below << "\n"
        << "ratio >= 1: n=" << result.count_at_or_above << " mean=" << result.mean_at_or_above << "\n";
    return out.str();
}

BaselineResult run_baseline(Session& session, std::size_t budget, const GeneratorBackend& backend,
                            std::uint64_t seed, const AutotuneOptions& options) {
    BaselineResult result;
    result.before = session.history().back();
    result.constraints = naive_autotune(session.dataset(), session.settings().threshold, budget, options);
    const auto& batch = session.augment(result.constraints, backend, seed);
    result.generated = batch.size();
    result.after = session.merge_and_retrain(true);
    return result;
}

json to_json(const BaselineResult& result) {
    auto side = [](const HistoryEntry& e) {
        return json{{"overall_rr", e.overall_rr}, {"overall_cr", e.overall_cr}, {"accuracy", e.accuracy},
                    {"train_rows", e.train_rows}};
    };
    return {{"before", side(result.before)},
            {"after", side(result.after)},
            {"constraints", to_json(result.constraints)},
            {"generated", result.generated}};
}

}  // namespace debias
