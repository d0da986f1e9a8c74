#include "debias/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <unistd.h>

#include "debias/error.hpp"

namespace debias {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

double bound_from_json(const json& value, double unbounded) {
    if (value.is_null()) return unbounded;
    return value.get<double>();
}

std::string shell_quote(const std::string& text) {
    std::string out = "'";
    for (char c : text) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

bool region_within_domain(const Region& region, const VariableSchema& var) {
    if (const auto* interval = std::get_if<Interval>(&region)) {
        if (!var.is_continuous()) return false;
        if (std::isnan(interval->lo) || std::isnan(interval->hi)) return false;
        if (interval->hi_closed ? interval->lo > interval->hi : interval->lo >= interval->hi) return false;
        if (var.bin_edges.size() >= 2) {
            if (interval->lo < var.bin_edges.front()) return false;
            const double top = var.bin_edges.back();
            const bool unbounded = std::isinf(interval->hi) && std::isinf(top);
            if (!unbounded && (interval->hi_closed ? interval->hi >= top : interval->hi > top)) return false;
        }
        return true;
    }
    if (var.is_continuous()) return false;
    const auto& cats = std::get<CategorySet>(region).categories;
    if (cats.empty()) return false;
    return std::all_of(cats.begin(), cats.end(), [&](const std::string& c) { return var.category_index(c).has_value(); });
}

std::vector<std::size_t> generation_rows(const TabularDataset& dataset) {
    const bool split_done = dataset.is_split();
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (dataset.provenance()[i] != Provenance::kOriginal) continue;
        if (split_done && dataset.split_tags()[i] != SplitTag::kTrain) continue;
        rows.push_back(i);
    }
    return rows;
}

}  // namespace

std::size_t ConstraintSet::total_requested() const noexcept {
    if (constraints.empty()) return 0;
    if (joint) {
        std::size_t top = 0;
        for (const auto& c : constraints) top = std::max(top, c.requested_count);
        return top;
    }
    std::size_t total = 0;
    for (const auto& c : constraints) total += c.requested_count;
    return total;
}

json to_json(const SegmentConstraint& constraint) {
    json out = region_to_json(constraint.region);
    out["variable"] = constraint.variable;
    out["count"] = constraint.requested_count;
    return out;
}

json to_json(const ConstraintSet& constraints) {
    json items = json::array();
    for (const auto& c : constraints.constraints) items.push_back(to_json(c));
    return {{"joint", constraints.joint}, {"constraints", items}};
}

ConstraintSet constraints_from_json(const json& doc) {
    ConstraintSet set;
    try {
        const json* items = &doc;
        if (doc.is_object()) {
            set.joint = doc.value("joint", true);
            items = &doc.at("constraints");
        }
        if (!items->is_array()) throw Error(ErrorCode::kInvalidConstraint, "constraints must be an array");
        for (const auto& item : *items) {
            SegmentConstraint c;
            c.variable = item.at("variable").get<std::string>();
            const auto count = item.at("count").get<long long>();
            if (count < 1) throw Error(ErrorCode::kInvalidConstraint, "requested count must be >= 1", item);
            c.requested_count = static_cast<std::size_t>(count);
            if (item.contains("categories")) {
                c.region = CategorySet{item["categories"].get<std::vector<std::string>>()};
            } else {
                Interval interval;
                interval.lo = bound_from_json(item.value("min", json()), -std::numeric_limits<double>::infinity());
                interval.hi = bound_from_json(item.value("max", json()), std::numeric_limits<double>::infinity());
                interval.hi_closed = !item.value("max_exclusive", false);
                c.region = interval;
            }
            set.constraints.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kInvalidConstraint, std::string("malformed constraints: ") + e.what());
    }
    return set;
}

json to_json(const LowCoverageWarning& warning) {
    return {{"constraint", to_json(warning.constraint)},
            {"existing_count", warning.existing_count},
            {"requested_count", warning.requested_count},
            {"ratio", warning.ratio},
            {"log_ratio", warning.ratio > 0 ? json(std::log(warning.ratio)) : json(nullptr)}};
}

void validate_constraints(const ConstraintSet& constraints, const Schema& schema, std::size_t cap) {
    std::vector<std::string> seen;
    for (const auto& c : constraints.constraints) {
        const auto col = column_index(schema, c.variable);
        if (!col || schema[*col].role != VariableRole::kPredictor) {
            throw Error(ErrorCode::kConstraintOutOfDomain, "'" + c.variable + "' is not a predictor",
                        {{"variable", c.variable}});
        }
        if (!region_within_domain(c.region, schema[*col])) {
            throw Error(ErrorCode::kConstraintOutOfDomain, "region outside the domain of '" + c.variable + "'",
                        to_json(c));
        }
        if (c.requested_count < 1) throw Error(ErrorCode::kInvalidConstraint, "requested count must be >= 1");
        if (constraints.joint) {
            if (std::find(seen.begin(), seen.end(), c.variable) != seen.end()) {
                throw Error(ErrorCode::kInvalidConstraint, "joint mode allows one constraint per variable",
                            {{"variable", c.variable}});
            }
            if (c.requested_count != constraints.constraints.front().requested_count) {
                throw Error(ErrorCode::kInvalidConstraint, "joint constraints must share one requested count");
            }
        }
        seen.push_back(c.variable);
    }
    const std::size_t total = constraints.total_requested();
    if (total > cap) {
        throw Error(ErrorCode::kCapExceeded, "requested " + std::to_string(total) + " rows exceeds the cap of " +
                                                 std::to_string(cap),
                    {{"requested", total}, {"cap", cap}});
    }
}

bool satisfies(const Schema& schema, const Row& row, std::span<const SegmentConstraint> constraints) {
    for (const auto& c : constraints) {
        const auto col = column_index(schema, c.variable);
        if (!col || !region_contains(c.region, row[*col])) return false;
    }
    return true;
}

std::vector<std::size_t> matching_pool(const TabularDataset& dataset, std::span<const SegmentConstraint> constraints) {
    std::vector<std::size_t> pool;
    for (std::size_t i : generation_rows(dataset)) {
        if (satisfies(dataset.schema(), dataset.rows()[i], constraints)) pool.push_back(i);
    }
    return pool;
}

std::vector<LowCoverageWarning> plan(const ConstraintSet& constraints, const TabularDataset& dataset,
                                     const AugmentConfig& config) {
    validate_constraints(constraints, dataset.schema(), config.cap);
    std::vector<LowCoverageWarning> warnings;
    std::size_t joint_existing = 0;
    if (constraints.joint) joint_existing = matching_pool(dataset, constraints.constraints).size();
    for (const auto& c : constraints.constraints) {
        const std::size_t existing =
            constraints.joint ? joint_existing : matching_pool(dataset, std::span(&c, 1)).size();
        const double ratio = static_cast<double>(existing) / static_cast<double>(c.requested_count);
        if (ratio < config.warning_threshold) warnings.push_back({c, existing, c.requested_count, ratio});
    }
    return warnings;
}

// ---------------------------------------------------------------------------

std::string InterpolationBackend::name() const { return "nn-interpolation:k=" + std::to_string(neighbours_); }

std::vector<GeneratedRow> InterpolationBackend::generate(const GenerationRequest& request) const {
    const TabularDataset& ds = *request.dataset;
    const auto& schema = ds.schema();
    const auto& pool = request.pool;
    if (pool.size() < 2) throw Error(ErrorCode::kNoMatchingRows, "need at least two matching rows");

    // Scale from all generation-eligible rows so distances do not depend on
    // how narrow the region is.
    std::vector<std::size_t> continuous;
    for (std::size_t c : predictor_indices(schema)) {
        if (schema[c].is_continuous()) continuous.push_back(c);
    }
    const auto reference = generation_rows(ds);
    std::vector<double> scale(continuous.size(), 1.0);
    for (std::size_t j = 0; j < continuous.size(); ++j) {
        std::vector<double> values;
        for (std::size_t i : reference) values.push_back(std::get<double>(ds.rows()[i][continuous[j]]));
        const double mu = mean(values);
        double var = 0.0;
        for (double v : values) var += (v - mu) * (v - mu);
        const double sd = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
        scale[j] = sd > 0.0 ? sd : 1.0;
    }
    auto distance2 = [&](std::size_t a, std::size_t b) {
        double d = 0.0;
        for (std::size_t j = 0; j < continuous.size(); ++j) {
            const double diff = (std::get<double>(ds.rows()[a][continuous[j]]) -
                                 std::get<double>(ds.rows()[b][continuous[j]])) /
                                scale[j];
            d += diff * diff;
        }
        return d;
    };

    std::map<std::size_t, std::vector<std::size_t>> neighbour_cache;
    auto neighbours_of = [&](std::size_t anchor_pos) -> const std::vector<std::size_t>& {
        auto it = neighbour_cache.find(anchor_pos);
        if (it != neighbour_cache.end()) return it->second;
        std::vector<std::pair<double, std::size_t>> ranked;
        ranked.reserve(pool.size() - 1);
        for (std::size_t p = 0; p < pool.size(); ++p) {
            if (p != anchor_pos) ranked.emplace_back(distance2(pool[anchor_pos], pool[p]), p);
        }
        const std::size_t k = std::min(std::max<std::size_t>(1, neighbours_), ranked.size());
        std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end());
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < k; ++i) out.push_back(ranked[i].second);
        return neighbour_cache.emplace(anchor_pos, std::move(out)).first->second;
    };

    const std::size_t tcol = ds.target_column();
    std::mt19937_64 rng(request.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<GeneratedRow> out;
    out.reserve(request.count);
    for (std::size_t g = 0; g < request.count; ++g) {
        const std::size_t anchor_pos = std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng);
        const auto& nbrs = neighbours_of(anchor_pos);
        const std::size_t mate_pos = nbrs[std::uniform_int_distribution<std::size_t>(0, nbrs.size() - 1)(rng)];
        const Row& a = ds.rows()[pool[anchor_pos]];
        const Row& b = ds.rows()[pool[mate_pos]];
        const double u = unit(rng);

        GeneratedRow row;
        row.cells.resize(schema.size());
        row.parents = {ds.row_ids()[pool[anchor_pos]], ds.row_ids()[pool[mate_pos]]};
        for (std::size_t c = 0; c < schema.size(); ++c) {
            if (c == tcol) {
                row.cells[c] = u < 0.5 ? a[c] : b[c];
            } else if (schema[c].is_continuous()) {
                const double x = std::get<double>(a[c]);
                const double y = std::get<double>(b[c]);
                row.cells[c] = std::clamp(x + u * (y - x), std::min(x, y), std::max(x, y));
            } else {
                row.cells[c] = unit(rng) < 0.5 ? a[c] : b[c];
            }
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<GeneratedRow> ExternalCommandBackend::generate(const GenerationRequest& request) const {
    namespace fs = std::filesystem;
    const TabularDataset& ds = *request.dataset;
    json pool_rows = json::array();
    for (std::size_t i : request.pool) {
        json cells = json::object();
        for (std::size_t c = 0; c < ds.schema().size(); ++c) {
            const Cell& cell = ds.rows()[i][c];
            if (const double* v = std::get_if<double>(&cell)) {
                cells[ds.schema()[c].name] = *v;
            } else {
                cells[ds.schema()[c].name] = std::get<std::string>(cell);
            }
        }
        pool_rows.push_back({{"row_id", ds.row_ids()[i]}, {"cells", cells}});
    }
    json constraints = json::array();
    for (const auto& c : request.constraints) constraints.push_back(to_json(c));
    const json doc = {{"schema", schema_to_json(ds.schema())},
                      {"constraints", constraints},
                      {"count", request.count},
                      {"seed", request.seed},
                      {"pool", pool_rows}};

    const fs::path dir = fs::temp_directory_path() /
                         ("debias-gen-" + hex_digest(fnv1a(doc.dump()) ^ static_cast<std::uint64_t>(::getpid())));
    fs::create_directories(dir);
    const fs::path req_path = dir / "request.json";
    const fs::path out_path = dir / "rows.csv";
    std::ofstream(req_path) << doc.dump();
    const std::string cmd = command_ + " " + shell_quote(req_path.string()) + " " + shell_quote(out_path.string());
    const int status = std::system(cmd.c_str());
    std::ifstream in(out_path, std::ios::binary);
    std::stringstream text;
    text << in.rdbuf();
    std::error_code ec;
    fs::remove_all(dir, ec);
    if (status != 0) throw Error(ErrorCode::kBackendFailure, "external generator exited with status " + std::to_string(status));

    auto records = parse_csv(text.str());
    if (records.empty()) throw Error(ErrorCode::kBackendFailure, "external generator produced no output");
    const auto& header = records.front();
    std::vector<std::size_t> keep;
    std::optional<std::size_t> parent_a, parent_b;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "parent_a") {
            parent_a = c;
        } else if (header[c] == "parent_b") {
            parent_b = c;
        } else {
            keep.push_back(c);
        }
    }
    std::string csv;
    for (std::size_t r = 0; r < records.size(); ++r) {
        if (r > 0 && records[r].size() != header.size()) {
            throw Error(ErrorCode::kBackendFailure, "external generator row has wrong field count");
        }
        for (std::size_t k = 0; k < keep.size(); ++k) {
            if (k) csv += ',';
            std::string field = records[r][keep[k]];
            if (field.find_first_of(",\"\r\n") != std::string::npos) {
                std::string q = "\"";
                for (char ch : field) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
                field = q + "\"";
            }
            csv += field;
        }
        csv += '\n';
    }
    std::vector<GeneratedRow> out;
    if (records.size() < 2) return out;
    TabularDataset parsed;
    try {
        parsed = ingest(csv, ds.schema());
    } catch (const Error& e) {
        throw Error(ErrorCode::kBackendFailure, std::string("external generator output rejected: ") + e.what(),
                    e.detail());
    }
    for (std::size_t r = 0; r < parsed.size(); ++r) {
        GeneratedRow row;
        row.cells = parsed.rows()[r];
        auto id_at = [&](std::optional<std::size_t> col) -> RowId {
            if (!col) return 0;
            const std::string& s = records[r + 1][*col];
            return s.empty() ? 0 : std::stoull(s);
        };
        row.parents = {id_at(parent_a), id_at(parent_b)};
        out.push_back(std::move(row));
    }
    return out;
}

// ---------------------------------------------------------------------------

void rescore(GeneratedBatch& batch, const TabularDataset& dataset, const ModelArtifact& model) {
    batch.predictions.clear();
    std::size_t agree = 0;
    const std::size_t tcol = batch.rows.empty() ? 0 : batch.rows.target_column();
    for (const auto& row : batch.rows.rows()) {
        batch.predictions.push_back(predict(model, row));
        if (batch.predictions.back().predicted_class == std::get<std::string>(row[tcol])) ++agree;
    }
    batch.estimated_accuracy =
        batch.rows.empty() ? 0.0 : static_cast<double>(agree) / static_cast<double>(batch.rows.size());
    if (batch.rows.empty()) {
        batch.estimated_quality.reset();
    } else {
        QualityConfig qc;
        qc.fences = compute_fences(dataset);
        batch.estimated_quality = quality_report(batch.rows, qc);
    }
}

GeneratedBatch generate(const ConstraintSet& constraints, const TabularDataset& dataset, const ModelArtifact& model,
                        const GeneratorBackend& backend, std::uint64_t seed, const AugmentConfig& config) {
    require_fresh(model, dataset);
    GeneratedBatch batch;
    batch.warnings = plan(constraints, dataset, config);
    batch.constraints = constraints;
    batch.seed = seed;
    batch.generator_id = backend.name() + "@" + std::to_string(seed);
    batch.base_snapshot = train_snapshot_hash(dataset);

    // Each group is one generation request: the whole set in joint mode, one
    // constraint at a time otherwise.
    std::vector<std::vector<SegmentConstraint>> groups;
    if (constraints.joint) {
        if (!constraints.empty()) groups.push_back(constraints.constraints);
    } else {
        for (const auto& c : constraints.constraints) groups.push_back({c});
    }

    const auto& schema = dataset.schema();
    std::vector<Row> rows;
    RowId next_id = dataset.next_row_id();
    std::vector<RowId> ids;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        GenerationRequest request;
        request.dataset = &dataset;
        request.constraints = groups[g];
        request.pool = matching_pool(dataset, groups[g]);
        request.count = groups[g].front().requested_count;
        request.seed = splitmix64(seed ^ (0x51ed27ull * (g + 1)));
        if (request.pool.empty() && groups[g].size() > 1) {
            throw Error(ErrorCode::kInfeasibleJointRegion, "no original rows satisfy the joint region",
                        to_json(constraints));
        }
        if (request.pool.size() < 2) {
            throw Error(ErrorCode::kNoMatchingRows, "at least two original rows must match the region",
                        {{"existing", request.pool.size()}, {"constraints", to_json(ConstraintSet{groups[g], true})}});
        }
        auto generated = backend.generate(request);
        if (generated.size() != request.count) {
            throw Error(ErrorCode::kBackendFailure, "backend returned the wrong number of rows",
                        {{"expected", request.count}, {"returned", generated.size()}});
        }
        for (auto& row : generated) {
            if (row.cells.size() != schema.size()) throw Error(ErrorCode::kBackendFailure, "backend row has wrong width");
            for (std::size_t c = 0; c < schema.size(); ++c) {
                if (!schema[c].in_domain(row.cells[c])) {
                    throw Error(ErrorCode::kBackendFailure, "backend row outside schema for '" + schema[c].name + "'");
                }
            }
            if (!satisfies(schema, row.cells, groups[g])) {
                throw Error(ErrorCode::kBackendFailure, "backend row violates its constraint region");
            }
            rows.push_back(std::move(row.cells));
            ids.push_back(next_id++);
            batch.parents.push_back(row.parents);
            batch.constraint_of.push_back(constraints.joint ? 0 : g);
        }
    }
    if (rows.size() > config.cap) throw Error(ErrorCode::kCapExceeded, "batch exceeds the generation cap");
    const std::size_t n = rows.size();
    batch.rows = TabularDataset(schema, std::move(rows), std::move(ids), std::vector<Provenance>(n, Provenance::kGenerated),
                                std::vector<SplitTag>(n, SplitTag::kTrain));
    rescore(batch, dataset, model);
    return batch;
}

json to_json(const GeneratedBatch& batch) {
    json rows = json::array();
    const auto& schema = batch.rows.schema();
    for (std::size_t r = 0; r < batch.rows.size(); ++r) {
        json cells = json::object();
        for (std::size_t c = 0; c < schema.size(); ++c) {
            const Cell& cell = batch.rows.rows()[r][c];
            if (const double* v = std::get_if<double>(&cell)) {
                cells[schema[c].name] = *v;
            } else {
                cells[schema[c].name] = std::get<std::string>(cell);
            }
        }
        json item = {{"row_id", batch.rows.row_ids()[r]},
                     {"provenance", to_string(batch.rows.provenance()[r])},
                     {"cells", cells},
                     {"parents", batch.parents.at(r)},
                     {"constraint", batch.constraint_of.at(r)}};
        if (r < batch.predictions.size()) item["prediction"] = to_json(batch.predictions[r]);
        rows.push_back(std::move(item));
    }
    json warnings = json::array();
    for (const auto& w : batch.warnings) warnings.push_back(to_json(w));
    return {{"generator_id", batch.generator_id},
            {"seed", batch.seed},
            {"size", batch.rows.size()},
            {"constraints", to_json(batch.constraints)},
            {"warnings", warnings},
            {"estimated_accuracy", batch.estimated_accuracy},
            {"estimated_quality", batch.estimated_quality ? to_json(*batch.estimated_quality) : json(nullptr)},
            {"base_snapshot", hex_digest(batch.base_snapshot)},
            {"rows", rows}};
}

// ---------------------------------------------------------------------------

ConstraintSet naive_autotune(const TabularDataset& dataset, const ThresholdPolicy& policy, std::size_t budget,
                             const AutotuneOptions& options) {
    ConstraintSet best_set;
    best_set.joint = false;
    if (budget < 1) return best_set;

    const auto& schema = dataset.schema();
    const auto predictors = predictor_indices(schema);
    const auto counts = segment_counts(dataset);
    const std::size_t base_rows = representation_rows(dataset);
    std::vector<std::vector<double>> base(counts.size());
    for (std::size_t v = 0; v < counts.size(); ++v) base[v].assign(counts[v].begin(), counts[v].end());

    auto objective = [&](const std::vector<std::vector<double>>& c, std::size_t added) {
        const auto threshold = static_cast<double>(policy.resolve(base_rows + added));
        const auto s = aggregate_scores(c, threshold, policy.aggregation);
        return s.rr + s.cr;
    };

    struct Candidate {
        std::size_t var;  // position in `predictors`
        Segment segment;
        double rate;
        std::vector<std::size_t> pool;
        std::vector<std::vector<double>> spread;  // per other variable, conditional segment shares
        std::vector<std::size_t> levels;
    };
    const std::size_t threshold_now = policy.resolve(base_rows);
    std::vector<Candidate> candidates;
    for (std::size_t v = 0; v < predictors.size(); ++v) {
        const auto rates = representation_rates(base[v]);
        const auto segs = segments(schema[predictors[v]]);
        const double top = *std::max_element(base[v].begin(), base[v].end());
        for (std::size_t s = 0; s < segs.size(); ++s) {
            if (rates[s] >= 1.0 && counts[v][s] >= threshold_now) continue;
            SegmentConstraint probe{segs[s].variable, segs[s].region, 1};
            auto pool = matching_pool(dataset, std::span(&probe, 1));
            if (pool.size() < 2) continue;
            Candidate cand{v, segs[s], rates[s], std::move(pool), {}, {}};
            cand.spread.resize(predictors.size());
            for (std::size_t w = 0; w < predictors.size(); ++w) {
                cand.spread[w].assign(base[w].size(), 0.0);
                for (std::size_t i : cand.pool) {
                    cand.spread[w][segment_index(dataset.rows()[i][predictors[w]], schema[predictors[w]])] += 1.0;
                }
                for (double& share : cand.spread[w]) share /= static_cast<double>(cand.pool.size());
            }
            if (!options.levels.empty()) {
                cand.levels = options.levels;
            } else {
                const double gap = std::max({top - base[v][s], static_cast<double>(threshold_now) - base[v][s], 0.0});
                for (double f : {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0}) {
                    const auto level = static_cast<std::size_t>(std::llround(gap * f));
                    if (cand.levels.empty() || level > cand.levels.back()) cand.levels.push_back(level);
                }
            }
            if (cand.levels.empty() || cand.levels.front() != 0) cand.levels.insert(cand.levels.begin(), 0);
            candidates.push_back(std::move(cand));
        }
    }
    if (candidates.empty()) return best_set;
    std::stable_sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
        if (a.rate != b.rate) return a.rate < b.rate;
        if (a.var != b.var) return a.var < b.var;
        return a.segment.index < b.segment.index;
    });

    // Widest prefix of candidates whose full grid fits in the budget.
    std::size_t chosen = 0;
    std::size_t grid = 1;
    for (const auto& cand : candidates) {
        if (grid * cand.levels.size() > budget) break;
        grid *= cand.levels.size();
        ++chosen;
    }
    if (chosen == 0) {
        chosen = 1;
        candidates.front().levels.resize(std::min(budget, candidates.front().levels.size()));
    }
    candidates.resize(chosen);

    // Tie-break order: candidates sorted by variable name, then segment index.
    std::vector<std::size_t> lex(chosen);
    std::iota(lex.begin(), lex.end(), std::size_t{0});
    std::sort(lex.begin(), lex.end(), [&](std::size_t a, std::size_t b) {
        const auto& na = schema[predictors[candidates[a].var]].name;
        const auto& nb = schema[predictors[candidates[b].var]].name;
        if (na != nb) return na < nb;
        return candidates[a].segment.index < candidates[b].segment.index;
    });

    std::vector<std::size_t> pick(chosen, 0);
    std::vector<std::size_t> best_pick(chosen, 0);
    double best_obj = objective(base, 0);
    std::size_t best_total = 0;
    auto lex_less = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
        for (std::size_t i : lex) {
            const auto la = candidates[i].levels[a[i]];
            const auto lb = candidates[i].levels[b[i]];
            if (la != lb) return la < lb;
        }
        return false;
    };
    while (true) {
        std::vector<std::vector<double>> hypo = base;
        std::size_t total = 0;
        for (std::size_t i = 0; i < chosen; ++i) {
            const double added = static_cast<double>(candidates[i].levels[pick[i]]);
            total += candidates[i].levels[pick[i]];
            if (added == 0.0) continue;
            for (std::size_t w = 0; w < hypo.size(); ++w) {
                if (w == candidates[i].var) {
                    hypo[w][candidates[i].segment.index] += added;
                } else {
                    for (std::size_t s = 0; s < hypo[w].size(); ++s) hypo[w][s] += added * candidates[i].spread[w][s];
                }
            }
        }
        const double obj = objective(hypo, total);
        const double eps = 1e-12;
        if (obj > best_obj + eps ||
            (std::abs(obj - best_obj) <= eps &&
             (total < best_total || (total == best_total && lex_less(pick, best_pick))))) {
            best_obj = obj;
            best_total = total;
            best_pick = pick;
        }
        std::size_t d = 0;
        while (d < chosen && ++pick[d] == candidates[d].levels.size()) pick[d++] = 0;
        if (d == chosen) break;
    }

    for (std::size_t i = 0; i < chosen; ++i) {
        const std::size_t n = candidates[i].levels[best_pick[i]];
        if (n == 0) continue;
        best_set.constraints.push_back({candidates[i].segment.variable, candidates[i].segment.region, n});
    }
    std::stable_sort(best_set.constraints.begin(), best_set.constraints.end(),
                     [&](const SegmentConstraint& a, const SegmentConstraint& b) {
                         return *column_index(schema, a.variable) < *column_index(schema, b.variable);
                     });
    return best_set;
}

}  // namespace debias
