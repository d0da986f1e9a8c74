#include "debias/curation.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "debias/error.hpp"

namespace debias {

using nlohmann::json;

namespace {

std::size_t require_column(const Schema& schema, const std::string& variable) {
    const auto col = column_index(schema, variable);
    if (!col) throw Error(ErrorCode::kInvalidArgument, "unknown variable '" + variable + "'");
    return *col;
}

QualityReport strip_rows(QualityReport report) {
    report.outlier_rows.clear();
    report.duplicate_rows.clear();
    return report;
}

QualityReport quality_from_json(const json& doc) {
    QualityReport q;
    q.outlier_severity = doc.at("outlier_severity").get<double>();
    q.duplicate_severity = doc.at("duplicate_severity").get<double>();
    q.correlation_severity = doc.at("correlation_severity").get<double>();
    q.skew_severity = doc.at("skew_severity").get<double>();
    q.imbalance_severity = doc.at("imbalance_severity").get<double>();
    q.overall = doc.at("overall").get<double>();
    for (const auto& p : doc.value("flagged_pairs", json::array())) {
        q.flagged_pairs.push_back({p.at("first").get<std::string>(), p.at("second").get<std::string>(),
                                   p.at("association").get<double>()});
    }
    return q;
}

// Builds the batch view of `rows`, carrying parents and constraint indices
// over from the pristine batch by row id.
GeneratedBatch rebuild(const GeneratedBatch& pristine, TabularDataset rows) {
    GeneratedBatch batch = pristine;
    batch.parents.clear();
    batch.constraint_of.clear();
    for (RowId id : rows.row_ids()) {
        const std::size_t p = *pristine.rows.find_row(id);
        batch.parents.push_back(pristine.parents[p]);
        batch.constraint_of.push_back(pristine.constraint_of[p]);
    }
    batch.rows = std::move(rows);
    return batch;
}

std::set<RowId> heldout_ids(const TabularDataset& dataset) {
    std::set<RowId> ids;
    for (std::size_t i : dataset.indices_with(SplitTag::kHeldout)) ids.insert(dataset.row_ids()[i]);
    return ids;
}

}  // namespace

json cell_to_json(const Cell& cell) {
    if (const auto* d = std::get_if<double>(&cell)) return *d;
    return std::get<std::string>(cell);
}

Cell cell_from_json(const json& value, const VariableSchema& var) {
    if (var.is_continuous()) {
        if (value.is_number()) return value.get<double>();
        if (value.is_string()) {
            const auto& text = value.get_ref<const std::string&>();
            double parsed = 0.0;
            const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), parsed);
            if (ec == std::errc() && ptr == text.data() + text.size()) return parsed;
        }
        throw Error(ErrorCode::kOutOfDomain, "'" + var.name + "' expects a number", {{"value", value}});
    }
    if (value.is_string()) return value.get<std::string>();
    if (value.is_number_integer()) return std::to_string(value.get<long long>());
    throw Error(ErrorCode::kOutOfDomain, "'" + var.name + "' expects a category label", {{"value", value}});
}

std::string_view to_string(EditKind kind) {
    switch (kind) {
        case EditKind::kEdit: return "edit";
        case EditKind::kRemove: return "remove";
        case EditKind::kRestore: return "restore";
    }
    return "edit";
}

json to_json(const EditLogEntry& entry) {
    json doc = {{"kind", to_string(entry.kind)},
                {"row_id", entry.row_id},
                {"variable", entry.variable.empty() ? json(nullptr) : json(entry.variable)},
                {"old_value", entry.old_value ? cell_to_json(*entry.old_value) : json(nullptr)},
                {"new_value", entry.new_value ? cell_to_json(*entry.new_value) : json(nullptr)},
                {"prediction", entry.prediction ? to_json(*entry.prediction) : json(nullptr)},
                {"timestamp", entry.timestamp}};
    return doc;
}

EditLogEntry edit_entry_from_json(const json& doc, const Schema& schema) {
    EditLogEntry entry;
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "edit") {
        entry.kind = EditKind::kEdit;
    } else if (kind == "remove") {
        entry.kind = EditKind::kRemove;
    } else if (kind == "restore") {
        entry.kind = EditKind::kRestore;
    } else {
        throw Error(ErrorCode::kInvalidArgument, "unknown edit kind '" + kind + "'");
    }
    entry.row_id = doc.at("row_id").get<RowId>();
    if (doc.contains("variable") && doc["variable"].is_string()) entry.variable = doc["variable"].get<std::string>();
    if (!entry.variable.empty()) {
        const auto& var = schema[require_column(schema, entry.variable)];
        if (doc.contains("old_value") && !doc["old_value"].is_null()) entry.old_value = cell_from_json(doc["old_value"], var);
        if (doc.contains("new_value") && !doc["new_value"].is_null()) entry.new_value = cell_from_json(doc["new_value"], var);
    }
    if (doc.contains("prediction") && !doc["prediction"].is_null()) {
        const auto& p = doc["prediction"];
        Prediction pred;
        pred.predicted_class = p.at("predicted_class").get<std::string>();
        pred.class_index = p.at("class_index").get<std::size_t>();
        pred.class_probabilities = p.at("class_probabilities").get<std::vector<double>>();
        pred.confidence = p.at("confidence").get<double>();
        entry.prediction = pred;
    }
    entry.timestamp = doc.value("timestamp", "");
    return entry;
}

WhatIfResult what_if(const GeneratedBatch& batch, RowId row_id, const std::string& variable, const Cell& new_value,
                     const ModelArtifact& model) {
    const auto idx = batch.rows.find_row(row_id);
    if (!idx) throw Error(ErrorCode::kUnknownRow, "no generated row with this id", {{"row_id", row_id}});
    const auto& schema = batch.rows.schema();
    const std::size_t col = require_column(schema, variable);
    if (!schema[col].in_domain(new_value)) {
        throw Error(ErrorCode::kOutOfDomain, "value outside the domain of '" + variable + "'",
                    {{"variable", variable}, {"value", cell_to_json(new_value)}});
    }
    Row row = batch.rows.rows()[*idx];
    WhatIfResult result;
    result.entry.kind = EditKind::kEdit;
    result.entry.row_id = row_id;
    result.entry.variable = variable;
    result.entry.old_value = row[col];
    result.entry.new_value = new_value;
    row[col] = new_value;
    result.prediction = predict(model, row);
    result.entry.prediction = result.prediction;
    return result;
}

TabularDataset replay_edits(const TabularDataset& pristine, const std::vector<EditLogEntry>& log) {
    struct State {
        Row row;
        Provenance provenance;
        bool removed = false;
    };
    std::unordered_map<RowId, State> state;
    for (std::size_t i = 0; i < pristine.size(); ++i) {
        state[pristine.row_ids()[i]] = {pristine.rows()[i], pristine.provenance()[i], false};
    }
    for (const auto& entry : log) {
        auto it = state.find(entry.row_id);
        if (it == state.end()) throw Error(ErrorCode::kUnknownRow, "log entry for an unknown row", {{"row_id", entry.row_id}});
        auto& s = it->second;
        switch (entry.kind) {
            case EditKind::kEdit:
                if (s.removed) throw Error(ErrorCode::kUnknownRow, "edit of a removed row", {{"row_id", entry.row_id}});
                s.row[require_column(pristine.schema(), entry.variable)] = *entry.new_value;
                s.provenance = Provenance::kEdited;
                break;
            case EditKind::kRemove:
                s.removed = true;
                break;
            case EditKind::kRestore: {
                const std::size_t p = *pristine.find_row(entry.row_id);
                s = {pristine.rows()[p], pristine.provenance()[p], false};
                break;
            }
        }
    }
    std::vector<std::size_t> keep;
    std::vector<Row> rows;
    std::vector<RowId> ids;
    std::vector<Provenance> prov;
    std::vector<SplitTag> tags;
    for (std::size_t i = 0; i < pristine.size(); ++i) {
        const auto& s = state[pristine.row_ids()[i]];
        if (s.removed) continue;
        rows.push_back(s.row);
        ids.push_back(pristine.row_ids()[i]);
        prov.push_back(s.provenance);
        tags.push_back(pristine.split_tags()[i]);
    }
    return TabularDataset(pristine.schema(), std::move(rows), std::move(ids), std::move(prov), std::move(tags));
}

std::vector<std::size_t> filter_sort(const GeneratedBatch& batch, const RowFilter& filter, const RowOrdering& ordering) {
    const auto& schema = batch.rows.schema();
    std::vector<std::size_t> view;
    for (std::size_t i = 0; i < batch.rows.size(); ++i) {
        const auto& pred = batch.predictions[i];
        if (filter.confidence_below && !(pred.confidence < *filter.confidence_below)) continue;
        if (filter.confidence_at_least && !(pred.confidence >= *filter.confidence_at_least)) continue;
        if (filter.predicted_class && pred.predicted_class != *filter.predicted_class) continue;
        if (filter.provenance && batch.rows.provenance()[i] != *filter.provenance) continue;
        if (!satisfies(schema, batch.rows.rows()[i], filter.regions)) continue;
        view.push_back(i);
    }
    std::function<bool(std::size_t, std::size_t)> less;
    switch (ordering.key) {
        case SortKey::kRowId:
            less = [&](std::size_t a, std::size_t b) { return batch.rows.row_ids()[a] < batch.rows.row_ids()[b]; };
            break;
        case SortKey::kConfidence:
            less = [&](std::size_t a, std::size_t b) {
                return batch.predictions[a].confidence < batch.predictions[b].confidence;
            };
            break;
        case SortKey::kVariable: {
            const std::size_t col = require_column(schema, ordering.variable);
            less = [&batch, col](std::size_t a, std::size_t b) {
                const auto& x = batch.rows.rows()[a][col];
                const auto& y = batch.rows.rows()[b][col];
                return x < y;
            };
            break;
        }
    }
    if (ordering.descending) {
        std::stable_sort(view.begin(), view.end(), [&](std::size_t a, std::size_t b) { return less(b, a); });
    } else {
        std::stable_sort(view.begin(), view.end(), less);
    }
    return view;
}

double total_variation(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    if (a.size() != b.size()) throw Error(ErrorCode::kInvalidArgument, "histograms differ in length");
    const double na = std::accumulate(a.begin(), a.end(), 0.0);
    const double nb = std::accumulate(b.begin(), b.end(), 0.0);
    if (na == 0.0 && nb == 0.0) return 0.0;
    if (na == 0.0 || nb == 0.0) return 1.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum += std::abs(static_cast<double>(a[i]) / na - static_cast<double>(b[i]) / nb);
    }
    return std::clamp(0.5 * sum, 0.0, 1.0);
}

DriftReport drift_report(const TabularDataset& original_train, const TabularDataset& merged, double threshold) {
    if (original_train.schema() != merged.schema()) {
        throw Error(ErrorCode::kSchemaMismatch, "drift needs both datasets on one schema");
    }
    const auto& schema = merged.schema();
    const auto before = segment_counts(original_train);
    const auto after = segment_counts(merged);
    const auto predictors = predictor_indices(schema);
    DriftReport report;
    report.threshold = threshold;
    for (std::size_t p = 0; p < predictors.size(); ++p) {
        const auto& var = schema[predictors[p]];
        VariableDrift drift;
        drift.variable = var.name;
        for (const auto& seg : segments(var)) drift.labels.push_back(seg.label);
        drift.before_counts = before[p];
        drift.after_counts = after[p];
        drift.score = total_variation(drift.before_counts, drift.after_counts);
        drift.flagged = drift.score > threshold;
        if (drift.flagged) report.flagged.push_back(var.name);
        report.variables.push_back(std::move(drift));
    }
    return report;
}

json to_json(const DriftReport& report) {
    json vars = json::array();
    for (const auto& v : report.variables) {
        vars.push_back({{"variable", v.variable},
                        {"labels", v.labels},
                        {"before", v.before_counts},
                        {"after", v.after_counts},
                        {"score", v.score},
                        {"flagged", v.flagged}});
    }
    return {{"threshold", report.threshold}, {"flagged", report.flagged}, {"variables", vars}};
}

json to_json(const SessionSettings& s) {
    json threshold = {{"absolute", s.threshold.absolute ? json(*s.threshold.absolute) : json(nullptr)},
                      {"minimum", s.threshold.minimum},
                      {"fraction_of_train", s.threshold.fraction_of_train},
                      {"aggregation", s.threshold.aggregation == RrAggregation::kPooledSegments ? "pooled"
                                                                                               : "mean_of_variables"}};
    return {{"heldout_fraction", s.heldout_fraction},
            {"split_seed", s.split_seed},
            {"hyperparameters", to_json(s.hyperparameters)},
            {"threshold", threshold},
            {"augment", {{"cap", s.augment.cap}, {"warning_threshold", s.augment.warning_threshold}}},
            {"quality",
             {{"iqr_multiplier", s.quality.iqr_multiplier},
              {"association_threshold", s.quality.association_threshold},
              {"skew_threshold", s.quality.skew_threshold}}},
            {"drift_threshold", s.drift_threshold}};
}

SessionSettings settings_from_json(const json& doc) {
    SessionSettings s;
    if (!doc.is_object()) throw Error(ErrorCode::kInvalidArgument, "settings must be an object");
    s.heldout_fraction = doc.value("heldout_fraction", s.heldout_fraction);
    s.split_seed = doc.value("split_seed", s.split_seed);
    if (doc.contains("hyperparameters")) s.hyperparameters = hyperparameters_from_json(doc["hyperparameters"]);
    if (doc.contains("threshold")) {
        const auto& t = doc["threshold"];
        if (t.contains("absolute") && !t["absolute"].is_null()) s.threshold.absolute = t["absolute"].get<std::size_t>();
        s.threshold.minimum = t.value("minimum", s.threshold.minimum);
        s.threshold.fraction_of_train = t.value("fraction_of_train", s.threshold.fraction_of_train);
        const auto agg = t.value("aggregation", std::string("mean_of_variables"));
        if (agg == "pooled") {
            s.threshold.aggregation = RrAggregation::kPooledSegments;
        } else if (agg != "mean_of_variables") {
            throw Error(ErrorCode::kInvalidArgument, "unknown aggregation '" + agg + "'");
        }
    }
    if (doc.contains("augment")) {
        s.augment.cap = doc["augment"].value("cap", s.augment.cap);
        s.augment.warning_threshold = doc["augment"].value("warning_threshold", s.augment.warning_threshold);
    }
    if (doc.contains("quality")) {
        const auto& q = doc["quality"];
        s.quality.iqr_multiplier = q.value("iqr_multiplier", s.quality.iqr_multiplier);
        s.quality.association_threshold = q.value("association_threshold", s.quality.association_threshold);
        s.quality.skew_threshold = q.value("skew_threshold", s.quality.skew_threshold);
    }
    s.drift_threshold = doc.value("drift_threshold", s.drift_threshold);
    if (!(s.heldout_fraction > 0.0 && s.heldout_fraction < 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "heldout_fraction must lie in (0, 1)");
    }
    if (!(s.drift_threshold >= 0.0 && s.drift_threshold <= 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "drift_threshold must lie in [0, 1]");
    }
    return s;
}

json to_json(const HistoryEntry& e) {
    json scores = json::object();
    for (const auto& [name, rc] : e.variable_scores) scores[name] = {{"rr", rc.first}, {"cr", rc.second}};
    json quality = to_json(e.quality);
    quality.erase("outlier_rows");
    quality.erase("duplicate_rows");
    return {{"index", e.index},
            {"kind", e.kind},
            {"timestamp", e.timestamp},
            {"overall_rr", e.overall_rr},
            {"overall_cr", e.overall_cr},
            {"accuracy", e.accuracy},
            {"variables", scores},
            {"quality", quality},
            {"train_rows", e.train_rows},
            {"batch_size", e.batch_size},
            {"edit_count", e.edit_count},
            {"augmentation", e.augmentation},
            {"dataset_digest", e.dataset_digest},
            {"model_digest", e.model_digest},
            {"reverted_to", e.reverted_to ? json(*e.reverted_to) : json(nullptr)},
            {"request_id", e.request_id ? json(*e.request_id) : json(nullptr)}};
}

json history_to_json(const std::vector<HistoryEntry>& history) {
    json out = json::array();
    for (std::size_t i = 0; i < history.size(); ++i) {
        json item = to_json(history[i]);
        const HistoryEntry& prev = history[i == 0 ? 0 : i - 1];
        item["delta"] = {{"overall_rr", history[i].overall_rr - prev.overall_rr},
                         {"overall_cr", history[i].overall_cr - prev.overall_cr},
                         {"accuracy", history[i].accuracy - prev.accuracy},
                         {"quality", history[i].quality.overall - prev.quality.overall}};
        out.push_back(std::move(item));
    }
    return out;
}

std::string render_history(const std::vector<HistoryEntry>& history) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << std::left << std::setw(6) << "index" << std::setw(10) << "kind" << std::right << std::setw(8) << "rr"
        << std::setw(9) << "d_rr" << std::setw(8) << "cr" << std::setw(9) << "d_cr" << std::setw(9) << "acc"
        << std::setw(9) << "d_acc" << std::setw(9) << "quality" << std::setw(8) << "rows" << std::setw(7) << "batch"
        << std::setw(7) << "edits" << "\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& e = history[i];
        const auto& prev = history[i == 0 ? 0 : i - 1];
        std::string kind = e.kind;
        if (e.reverted_to) kind += "->" + std::to_string(*e.reverted_to);
        out << std::left << std::setw(6) << e.index << std::setw(10) << kind << std::right << std::setw(8)
            << e.overall_rr << std::showpos << std::setw(9) << e.overall_rr - prev.overall_rr << std::noshowpos
            << std::setw(8) << e.overall_cr << std::showpos << std::setw(9) << e.overall_cr - prev.overall_cr
            << std::noshowpos << std::setw(9) << e.accuracy << std::showpos << std::setw(9)
            << e.accuracy - prev.accuracy << std::noshowpos << std::setw(9) << e.quality.overall << std::setw(8)
            << e.train_rows << std::setw(7) << e.batch_size << std::setw(7) << e.edit_count << "\n";
    }
    return out.str();
}

HistoryEntry history_entry_from_json(const json& doc) {
    HistoryEntry e;
    e.index = doc.at("index").get<std::size_t>();
    e.kind = doc.at("kind").get<std::string>();
    e.timestamp = doc.value("timestamp", "");
    e.overall_rr = doc.at("overall_rr").get<double>();
    e.overall_cr = doc.at("overall_cr").get<double>();
    e.accuracy = doc.at("accuracy").get<double>();
    for (const auto& [name, rc] : doc.at("variables").items()) {
        e.variable_scores[name] = {rc.at("rr").get<double>(), rc.at("cr").get<double>()};
    }
    e.quality = quality_from_json(doc.at("quality"));
    e.train_rows = doc.at("train_rows").get<std::size_t>();
    e.batch_size = doc.value("batch_size", std::size_t{0});
    e.edit_count = doc.value("edit_count", std::size_t{0});
    e.augmentation = doc.value("augmentation", json(nullptr));
    e.dataset_digest = doc.at("dataset_digest").get<std::string>();
    e.model_digest = doc.at("model_digest").get<std::string>();
    if (doc.contains("reverted_to") && !doc["reverted_to"].is_null()) e.reverted_to = doc["reverted_to"].get<std::size_t>();
    if (doc.contains("request_id") && !doc["request_id"].is_null()) e.request_id = doc["request_id"].get<std::string>();
    return e;
}

json to_json(const Overview& o) {
    return {{"accuracy", o.accuracy},
            {"accuracy_delta", o.accuracy_delta},
            {"accuracy_interval", {{"lower", o.accuracy_interval.lower}, {"upper", o.accuracy_interval.upper}}},
            {"train_rows", o.train_rows},
            {"heldout_rows", o.heldout_rows},
            {"predictors", o.predictors},
            {"model_digest", o.model_digest},
            {"has_pending", o.has_pending}};
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string dataset_digest(const TabularDataset& dataset) { return hex_digest(fnv1a(dataset_to_json(dataset).dump())); }

// ---------------------------------------------------------------------------
// Session

Session Session::create(const TabularDataset& ingested, SessionSettings settings, Clock clock) {
    TabularDataset prepared = ingested.is_split() ? ingested : split(ingested, settings.heldout_fraction, settings.split_seed);
    prepared = freeze_segmentation(prepared);
    auto dataset = std::make_shared<const TabularDataset>(std::move(prepared));
    auto model = std::make_shared<const ModelArtifact>(train(*dataset, settings.hyperparameters));
    Session session(std::move(settings), dataset, model, HistoryEntry{}, clock);
    return session;
}

Session::Session(SessionSettings settings, std::shared_ptr<const TabularDataset> dataset,
                 std::shared_ptr<const ModelArtifact> model, HistoryEntry baseline, Clock clock)
    : settings_(std::move(settings)), clock_(std::move(clock)), dataset_(std::move(dataset)), model_(std::move(model)) {
    if (!clock_) clock_ = utc_timestamp;
    require_fresh(*model_, *dataset_);
    std::vector<std::size_t> original;
    for (std::size_t i : dataset_->indices_with(SplitTag::kTrain)) {
        if (dataset_->provenance()[i] == Provenance::kOriginal) original.push_back(i);
    }
    original_train_ = std::make_shared<const TabularDataset>(dataset_->select(original));
    if (baseline.kind.empty()) {
        baseline = make_entry("baseline", *dataset_, *model_);
        baseline.timestamp = clock_();
    }
    register_snapshot(dataset_, model_, baseline);
    history_.push_back(std::move(baseline));
}

std::shared_ptr<const TabularDataset> Session::dataset_snapshot(const std::string& digest) const {
    auto it = datasets_.find(digest);
    return it == datasets_.end() ? nullptr : it->second;
}

std::shared_ptr<const ModelArtifact> Session::model_snapshot(const std::string& digest) const {
    auto it = models_.find(digest);
    return it == models_.end() ? nullptr : it->second;
}

void Session::register_snapshot(std::shared_ptr<const TabularDataset> dataset,
                                std::shared_ptr<const ModelArtifact> model, const HistoryEntry& entry) {
    datasets_.emplace(entry.dataset_digest, std::move(dataset));
    models_.emplace(entry.model_digest, std::move(model));
}

HistoryEntry Session::make_entry(const std::string& kind, const TabularDataset& dataset,
                                 const ModelArtifact& model) const {
    HistoryEntry e;
    e.index = history_.size();
    e.kind = kind;
    const BiasReport report = bias_report(dataset, settings_.threshold);
    e.overall_rr = report.overall_rr;
    e.overall_cr = report.overall_cr;
    for (const auto& v : report.per_variable) e.variable_scores[v.variable] = {v.rr, v.cr};
    e.accuracy = model.heldout_accuracy();
    QualityConfig qc = settings_.quality;
    qc.fences = compute_fences(original_train_ ? *original_train_ : dataset.train_view(), qc.iqr_multiplier);
    e.quality = strip_rows(quality_report(dataset.train_view(), qc));
    e.train_rows = dataset.indices_with(SplitTag::kTrain).size();
    e.dataset_digest = dataset_digest(dataset);
    e.model_digest = hex_digest(model_digest(model));
    return e;
}

const PendingBatch& Session::require_pending() const {
    if (!pending_) throw Error(ErrorCode::kNoPendingBatch, "no generated batch is pending");
    return *pending_;
}

BiasReport Session::bias() const { return bias_report(*dataset_, *model_, settings_.threshold); }

QualityReport Session::quality() const {
    QualityConfig qc = settings_.quality;
    qc.fences = compute_fences(*original_train_, qc.iqr_multiplier);
    return quality_report(dataset_->train_view(), qc);
}

Overview Session::overview() const {
    Overview o;
    o.accuracy = model_->heldout_accuracy();
    o.accuracy_delta = history_.size() >= 2 ? history_.back().accuracy - history_[history_.size() - 2].accuracy : 0.0;
    o.accuracy_interval = model_->heldout_interval();
    o.train_rows = dataset_->indices_with(SplitTag::kTrain).size();
    o.heldout_rows = dataset_->indices_with(SplitTag::kHeldout).size();
    for (std::size_t c : predictor_indices(dataset_->schema())) o.predictors.push_back(dataset_->schema()[c].name);
    o.model_digest = history_.back().model_digest;
    o.has_pending = pending_.has_value();
    return o;
}

DriftReport Session::drift() const {
    if (!pending_) return drift_report(*original_train_, *dataset_, settings_.drift_threshold);
    return drift_report(*original_train_, dataset_->concat(pending_->current.rows), settings_.drift_threshold);
}

std::vector<LowCoverageWarning> Session::plan(const ConstraintSet& constraints) const {
    validate_constraints(constraints, dataset_->schema(), settings_.augment.cap);
    return debias::plan(constraints, *dataset_, settings_.augment);
}

WhatIfResult Session::what_if(RowId row_id, const std::string& variable, const Cell& value) const {
    auto result = debias::what_if(require_pending().current, row_id, variable, value, *model_);
    result.entry.timestamp = clock_();
    return result;
}

GeneratedBatch Session::prepare_batch(const ConstraintSet& constraints, const GeneratorBackend& backend,
                                      std::uint64_t seed) const {
    validate_constraints(constraints, dataset_->schema(), settings_.augment.cap);
    GeneratedBatch batch = generate(constraints, *dataset_, *model_, backend, seed, settings_.augment);
    score(batch);
    return batch;
}

EditLogEntry Session::prepare_edit(RowId row_id, const std::string& variable, const Cell& value) const {
    return what_if(row_id, variable, value).entry;
}

EditLogEntry Session::prepare_remove(RowId row_id) const {
    const auto& pending = require_pending();
    if (!pending.current.rows.find_row(row_id)) {
        throw Error(ErrorCode::kUnknownRow, "no generated row with this id", {{"row_id", row_id}});
    }
    EditLogEntry entry;
    entry.kind = EditKind::kRemove;
    entry.row_id = row_id;
    entry.timestamp = clock_();
    return entry;
}

EditLogEntry Session::prepare_restore(RowId row_id) const {
    const auto& pending = require_pending();
    const auto p = pending.pristine.rows.find_row(row_id);
    if (!p) throw Error(ErrorCode::kUnknownRow, "no generated row with this id", {{"row_id", row_id}});
    EditLogEntry entry;
    entry.kind = EditKind::kRestore;
    entry.row_id = row_id;
    entry.prediction = predict(*model_, pending.pristine.rows.rows()[*p]);
    entry.timestamp = clock_();
    return entry;
}

void Session::score(GeneratedBatch& batch) const {
    rescore(batch, *dataset_, *model_);
    QualityConfig qc = settings_.quality;
    qc.fences = compute_fences(*original_train_, qc.iqr_multiplier);
    if (!batch.rows.empty()) batch.estimated_quality = quality_report(batch.rows, qc);
}

void Session::set_pending(GeneratedBatch batch) {
    if (batch.base_snapshot != train_snapshot_hash(*dataset_)) {
        throw Error(ErrorCode::kStaleBatch, "batch was generated against a different training set");
    }
    score(batch);
    pending_ = PendingBatch{batch, batch, {}};
}

void Session::apply_edit(const EditLogEntry& entry) {
    require_pending();
    auto& pending = *pending_;
    const auto& current = pending.current.rows;
    const auto idx = current.find_row(entry.row_id);
    TabularDataset rows;
    switch (entry.kind) {
        case EditKind::kEdit: {
            if (!idx) throw Error(ErrorCode::kUnknownRow, "no generated row with this id", {{"row_id", entry.row_id}});
            Row row = current.rows()[*idx];
            row[require_column(current.schema(), entry.variable)] = *entry.new_value;
            rows = current.with_row_replaced(*idx, std::move(row), Provenance::kEdited);
            break;
        }
        case EditKind::kRemove: {
            if (!idx) throw Error(ErrorCode::kUnknownRow, "no generated row with this id", {{"row_id", entry.row_id}});
            std::vector<std::size_t> keep(current.size());
            std::iota(keep.begin(), keep.end(), std::size_t{0});
            keep.erase(keep.begin() + static_cast<std::ptrdiff_t>(*idx));
            rows = current.select(keep);
            break;
        }
        case EditKind::kRestore: {
            const auto& pristine = pending.pristine.rows;
            const auto p = pristine.find_row(entry.row_id);
            if (!p) throw Error(ErrorCode::kUnknownRow, "no generated row with this id", {{"row_id", entry.row_id}});
            if (idx) {
                rows = current.with_row_replaced(*idx, pristine.rows()[*p], pristine.provenance()[*p]);
            } else {
                // Re-insert the removed row at its pristine position.
                std::vector<Row> out_rows;
                std::vector<RowId> ids;
                std::vector<Provenance> prov;
                std::vector<SplitTag> tags;
                for (std::size_t i = 0; i < pristine.size(); ++i) {
                    const RowId id = pristine.row_ids()[i];
                    if (id == entry.row_id) {
                        out_rows.push_back(pristine.rows()[i]);
                        prov.push_back(pristine.provenance()[i]);
                    } else if (const auto c = current.find_row(id)) {
                        out_rows.push_back(current.rows()[*c]);
                        prov.push_back(current.provenance()[*c]);
                    } else {
                        continue;
                    }
                    ids.push_back(id);
                    tags.push_back(pristine.split_tags()[i]);
                }
                rows = TabularDataset(pristine.schema(), std::move(out_rows), std::move(ids), std::move(prov),
                                      std::move(tags));
            }
            break;
        }
    }
    pending.current = rebuild(pending.pristine, std::move(rows));
    score(pending.current);
    pending.log.push_back(entry);
}

void Session::discard_pending() { pending_.reset(); }

MergeOutcome Session::prepare_merge(bool acknowledged) const {
    const TabularDataset* batch_rows = nullptr;
    if (pending_) {
        if (pending_->current.base_snapshot != train_snapshot_hash(*dataset_)) {
            throw Error(ErrorCode::kStaleBatch, "batch was generated against a different training set");
        }
        batch_rows = &pending_->current.rows;
    }
    auto merged = std::make_shared<const TabularDataset>(batch_rows ? dataset_->concat(*batch_rows) : *dataset_);

    const DriftReport drift = drift_report(*original_train_, *merged, settings_.drift_threshold);
    if (!drift.flagged.empty() && !acknowledged) {
        throw Error(ErrorCode::kDriftNotAcknowledged, "drift warning must be acknowledged before merging",
                    {{"flagged", drift.flagged}});
    }
    if (heldout_ids(*merged) != heldout_ids(*dataset_)) {
        throw Error(ErrorCode::kLeakageViolation, "merge would change the heldout partition");
    }

    MergeOutcome outcome;
    outcome.dataset = merged;
    outcome.model = std::make_shared<const ModelArtifact>(train(*merged, settings_.hyperparameters));
    outcome.entry = make_entry("merge", *merged, *outcome.model);
    outcome.entry.timestamp = clock_();
    if (pending_) {
        outcome.entry.batch_size = pending_->current.size();
        outcome.entry.edit_count = pending_->log.size();
        outcome.entry.augmentation = {{"constraints", to_json(pending_->current.constraints)},
                                      {"generator", pending_->current.generator_id},
                                      {"seed", pending_->current.seed},
                                      {"warnings", pending_->current.warnings.size()},
                                      {"estimated_accuracy", pending_->current.estimated_accuracy}};
    }
    outcome.entry.augmentation["acknowledged"] = acknowledged;
    outcome.entry.augmentation["drift_flagged"] = drift.flagged;
    return outcome;
}

void Session::apply_merge(const MergeOutcome& outcome) {
    if (outcome.entry.index != history_.size()) {
        throw Error(ErrorCode::kInvalidArgument, "merge outcome was prepared against an older history");
    }
    dataset_ = outcome.dataset;
    model_ = outcome.model;
    register_snapshot(dataset_, model_, outcome.entry);
    history_.push_back(outcome.entry);
    pending_.reset();
}

HistoryEntry Session::prepare_revert(std::size_t index) const {
    if (index >= history_.size()) {
        throw Error(ErrorCode::kUnknownHistoryIndex, "no history entry with this index",
                    {{"index", index}, {"size", history_.size()}});
    }
    const auto& target = history_[index];
    HistoryEntry entry = target;
    entry.index = history_.size();
    entry.kind = "revert";
    entry.timestamp = clock_();
    entry.batch_size = 0;
    entry.edit_count = 0;
    entry.augmentation = nullptr;
    entry.reverted_to = index;
    entry.request_id.reset();
    return entry;
}

void Session::apply_revert(const HistoryEntry& entry) {
    if (entry.index != history_.size() || !entry.reverted_to) {
        throw Error(ErrorCode::kInvalidArgument, "revert entry was prepared against an older history");
    }
    auto dataset = dataset_snapshot(entry.dataset_digest);
    auto model = model_snapshot(entry.model_digest);
    if (!dataset || !model) throw Error(ErrorCode::kUnknownHistoryIndex, "snapshot for this entry is missing");
    dataset_ = std::move(dataset);
    model_ = std::move(model);
    history_.push_back(entry);
    pending_.reset();
}

const GeneratedBatch& Session::augment(const ConstraintSet& constraints, const GeneratorBackend& backend,
                                       std::uint64_t seed) {
    set_pending(prepare_batch(constraints, backend, seed));
    return pending_->current;
}

const EditLogEntry& Session::commit_edit(RowId row_id, const std::string& variable, const Cell& value) {
    apply_edit(prepare_edit(row_id, variable, value));
    return pending_->log.back();
}

const EditLogEntry& Session::remove_row(RowId row_id) {
    apply_edit(prepare_remove(row_id));
    return pending_->log.back();
}

const EditLogEntry& Session::restore_row(RowId row_id) {
    apply_edit(prepare_restore(row_id));
    return pending_->log.back();
}

const HistoryEntry& Session::merge_and_retrain(bool acknowledged) {
    apply_merge(prepare_merge(acknowledged));
    return history_.back();
}

const HistoryEntry& Session::revert(std::size_t index) {
    apply_revert(prepare_revert(index));
    return history_.back();
}

}  // namespace debias
