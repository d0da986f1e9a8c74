#include "debias/dataset.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

#include "debias/error.hpp"
#include "debias/stats.hpp"

namespace debias {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <typename Enum, std::size_t N>
Enum enum_from_string(const std::string& text, const std::array<Enum, N>& values, std::string_view what) {
    for (Enum value : values) {
        if (to_string(value) == text) return value;
    }
    throw Error(ErrorCode::kSchemaMismatch, "unknown " + std::string(what) + " '" + text + "'",
                {{"field", what}, {"value", text}});
}

std::string_view trim(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
    return text;
}

std::string interval_label(double lo, double hi) {
    auto bound = [](double v) {
        if (v == -kInf) return std::string("-inf");
        if (v == kInf) return std::string("inf");
        return format_number(v);
    };
    return "[" + bound(lo) + ", " + bound(hi) + ")";
}

json edge_to_json(double edge) {
    if (std::isinf(edge)) return nullptr;
    return edge;
}

double edge_from_json(const json& value, bool first) {
    if (value.is_null()) return first ? -kInf : kInf;
    if (value.is_string()) {
        const auto& s = value.get_ref<const std::string&>();
        if (s == "inf" || s == "+inf") return kInf;
        if (s == "-inf") return -kInf;
        throw Error(ErrorCode::kSchemaMismatch, "bad bin edge '" + s + "'");
    }
    return value.get<double>();
}

Cell parse_cell(std::string_view raw, const VariableSchema& var, std::size_t row, std::size_t column) {
    auto fail = [&](const std::string& why) -> Error {
        return Error(ErrorCode::kCellParseError,
                     "row " + std::to_string(row) + ", column '" + var.name + "': " + why,
                     {{"row", row}, {"column", var.name}, {"column_index", column}, {"raw", std::string(raw)}});
    };
    if (var.is_continuous()) {
        std::string_view text = trim(raw);
        if (text.empty()) throw fail("missing value");
        if (text.front() == '+') text.remove_prefix(1);
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
            throw fail("not a finite number");
        }
        if (var.has_segmentation() && !var.in_domain(value)) {
            throw Error(ErrorCode::kOutOfDomain,
                        "row " + std::to_string(row) + ", column '" + var.name + "': value outside bin edges",
                        {{"row", row}, {"column", var.name}, {"raw", std::string(raw)}});
        }
        return value;
    }
    std::string text(raw);
    if (text.empty()) throw fail("missing value");
    if (!var.category_index(text)) throw fail("unknown category");
    return text;
}

std::string quote_csv(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string canonical_row(RowId id, const Row& row) {
    std::string out = std::to_string(id);
    for (const auto& cell : row) {
        out += '\x1f';
        out += format_cell(cell);
    }
    out += '\x1e';
    return out;
}

}  // namespace

std::string_view to_string(VariableKind kind) {
    switch (kind) {
        case VariableKind::kContinuous: return "continuous";
        case VariableKind::kCategorical: return "categorical";
        case VariableKind::kBinary: return "binary";
    }
    return "?";
}

std::string_view to_string(VariableRole role) {
    return role == VariableRole::kTarget ? "target" : "predictor";
}

std::string_view to_string(VariableGroup group) {
    switch (group) {
        case VariableGroup::kPhysical: return "physical";
        case VariableGroup::kDiagnostic: return "diagnostic";
        case VariableGroup::kLifestyle: return "lifestyle";
        case VariableGroup::kHistory: return "history";
    }
    return "?";
}

std::string_view to_string(Provenance provenance) {
    switch (provenance) {
        case Provenance::kOriginal: return "original";
        case Provenance::kGenerated: return "generated";
        case Provenance::kEdited: return "edited";
    }
    return "?";
}

std::string_view to_string(SplitTag tag) {
    switch (tag) {
        case SplitTag::kUnsplit: return "unsplit";
        case SplitTag::kTrain: return "train";
        case SplitTag::kHeldout: return "heldout";
    }
    return "?";
}

std::string format_number(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

std::string format_cell(const Cell& cell) {
    if (const double* v = std::get_if<double>(&cell)) return format_number(*v);
    return std::get<std::string>(cell);
}

bool CategorySet::contains(std::string_view value) const noexcept {
    return std::find(categories.begin(), categories.end(), value) != categories.end();
}

bool region_contains(const Region& region, const Cell& cell) {
    if (const auto* interval = std::get_if<Interval>(&region)) {
        const double* v = std::get_if<double>(&cell);
        return v != nullptr && interval->contains(*v);
    }
    const auto* s = std::get_if<std::string>(&cell);
    return s != nullptr && std::get<CategorySet>(region).contains(*s);
}

json region_to_json(const Region& region) {
    if (const auto* interval = std::get_if<Interval>(&region)) {
        json out = {{"min", edge_to_json(interval->lo)}, {"max", edge_to_json(interval->hi)}};
        if (!interval->hi_closed) out["max_exclusive"] = true;
        return out;
    }
    return {{"categories", std::get<CategorySet>(region).categories}};
}

// ---------------------------------------------------------------------------
// Schema

std::size_t VariableSchema::segment_count() const noexcept {
    if (is_continuous()) return bin_edges.size() < 2 ? 0 : bin_edges.size() - 1;
    return categories.size();
}

void VariableSchema::validate() const {
    auto fail = [&](const std::string& why) {
        throw Error(ErrorCode::kSchemaMismatch, "variable '" + name + "': " + why, {{"variable", name}});
    };
    if (name.empty()) fail("empty name");
    if (is_continuous()) {
        if (!categories.empty()) fail("continuous variable declares categories");
        if (bin_edges.size() == 1) fail("need at least two bin edges");
        for (std::size_t i = 1; i < bin_edges.size(); ++i) {
            if (!(bin_edges[i - 1] < bin_edges[i])) fail("bin edges must be strictly increasing");
        }
        if (!bin_labels.empty() && bin_labels.size() + 1 != bin_edges.size()) fail("one label per bin required");
        if (role == VariableRole::kTarget) fail("target must be categorical or binary");
    } else {
        if (categories.empty()) fail("category list is empty");
        std::set<std::string> seen(categories.begin(), categories.end());
        if (seen.size() != categories.size()) fail("duplicate category");
        if (kind == VariableKind::kBinary && categories.size() != 2) fail("binary variable needs exactly two categories");
    }
}

std::optional<std::size_t> VariableSchema::category_index(std::string_view value) const {
    auto it = std::find(categories.begin(), categories.end(), value);
    if (it == categories.end()) return std::nullopt;
    return static_cast<std::size_t>(it - categories.begin());
}

bool VariableSchema::in_domain(const Cell& cell) const {
    if (is_continuous()) {
        const double* v = std::get_if<double>(&cell);
        if (v == nullptr || !std::isfinite(*v)) return false;
        if (bin_edges.size() < 2) return true;
        return *v >= bin_edges.front() && *v < bin_edges.back();
    }
    const auto* s = std::get_if<std::string>(&cell);
    return s != nullptr && category_index(*s).has_value();
}

void validate_schema(const Schema& schema) {
    if (schema.empty()) throw Error(ErrorCode::kSchemaMismatch, "schema is empty");
    std::set<std::string> names;
    std::size_t targets = 0;
    for (const auto& var : schema) {
        var.validate();
        if (!names.insert(var.name).second) {
            throw Error(ErrorCode::kSchemaMismatch, "duplicate variable '" + var.name + "'");
        }
        if (var.role == VariableRole::kTarget) ++targets;
    }
    if (targets != 1) {
        throw Error(ErrorCode::kSchemaMismatch, "exactly one target variable required",
                    {{"targets", targets}});
    }
}

std::size_t target_index(const Schema& schema) {
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (schema[i].role == VariableRole::kTarget) return i;
    }
    throw Error(ErrorCode::kSchemaMismatch, "schema has no target variable");
}

std::optional<std::size_t> column_index(const Schema& schema, std::string_view name) {
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (schema[i].name == name) return i;
    }
    return std::nullopt;
}

std::vector<std::size_t> predictor_indices(const Schema& schema) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (schema[i].role == VariableRole::kPredictor) out.push_back(i);
    }
    return out;
}

Schema schema_from_json(const json& doc) {
    if (!doc.is_array()) throw Error(ErrorCode::kSchemaMismatch, "schema must be a JSON array");
    Schema schema;
    try {
        for (const auto& item : doc) {
            VariableSchema var;
            var.name = item.at("name").get<std::string>();
            var.kind = enum_from_string(item.at("kind").get<std::string>(),
                                        std::array{VariableKind::kContinuous, VariableKind::kCategorical,
                                                   VariableKind::kBinary},
                                        "kind");
            var.unit = item.value("unit", std::string());
            var.role = enum_from_string(item.value("role", std::string("predictor")),
                                        std::array{VariableRole::kPredictor, VariableRole::kTarget}, "role");
            if (item.contains("group") && !item["group"].is_null()) {
                var.group = enum_from_string(item["group"].get<std::string>(),
                                             std::array{VariableGroup::kPhysical, VariableGroup::kDiagnostic,
                                                        VariableGroup::kLifestyle, VariableGroup::kHistory},
                                             "group");
            }
            const json seg = item.value("segmentation", json::array());
            if (var.is_continuous()) {
                for (std::size_t i = 0; i < seg.size(); ++i) {
                    var.bin_edges.push_back(edge_from_json(seg[i], i == 0));
                }
                if (item.contains("segment_labels")) {
                    var.bin_labels = item["segment_labels"].get<std::vector<std::string>>();
                }
            } else {
                var.categories = seg.get<std::vector<std::string>>();
                if (var.kind == VariableKind::kBinary && var.categories.empty()) var.categories = {"0", "1"};
            }
            schema.push_back(std::move(var));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kSchemaMismatch, std::string("malformed schema: ") + e.what());
    }
    validate_schema(schema);
    return schema;
}

json schema_to_json(const Schema& schema) {
    json out = json::array();
    for (const auto& var : schema) {
        json item = {{"name", var.name},
                     {"kind", to_string(var.kind)},
                     {"unit", var.unit},
                     {"role", to_string(var.role)},
                     {"group", var.group ? json(to_string(*var.group)) : json(nullptr)}};
        if (var.is_continuous()) {
            json edges = json::array();
            for (double e : var.bin_edges) edges.push_back(edge_to_json(e));
            item["segmentation"] = edges;
            if (!var.bin_labels.empty()) item["segment_labels"] = var.bin_labels;
        } else {
            item["segmentation"] = var.categories;
        }
        out.push_back(std::move(item));
    }
    return out;
}

std::uint64_t schema_digest(const Schema& schema) {
    return fnv1a(schema_to_json(schema).dump());
}

// ---------------------------------------------------------------------------
// Segments

std::vector<Segment> segments(const VariableSchema& schema) {
    std::vector<Segment> out;
    if (schema.is_continuous()) {
        for (std::size_t i = 0; i + 1 < schema.bin_edges.size(); ++i) {
            double lo = schema.bin_edges[i];
            double hi = schema.bin_edges[i + 1];
            std::string label = schema.bin_labels.empty() ? interval_label(lo, hi) : schema.bin_labels[i];
            out.push_back({schema.name, std::move(label), Interval{lo, hi, false}, i});
        }
    } else {
        for (std::size_t i = 0; i < schema.categories.size(); ++i) {
            out.push_back({schema.name, schema.categories[i], CategorySet{{schema.categories[i]}}, i});
        }
    }
    return out;
}

std::size_t segment_index(const Cell& value, const VariableSchema& schema) {
    if (!schema.has_segmentation()) {
        throw Error(ErrorCode::kInvalidArgument, "variable '" + schema.name + "' has no frozen segmentation");
    }
    if (!schema.in_domain(value)) {
        throw Error(ErrorCode::kOutOfDomain, "value " + format_cell(value) + " outside domain of '" + schema.name + "'",
                    {{"variable", schema.name}, {"value", format_cell(value)}});
    }
    if (schema.is_continuous()) {
        const auto& edges = schema.bin_edges;
        auto it = std::upper_bound(edges.begin(), edges.end(), std::get<double>(value));
        return static_cast<std::size_t>(it - edges.begin()) - 1;
    }
    return *schema.category_index(std::get<std::string>(value));
}

Segment segment_of(const Cell& value, const VariableSchema& schema) {
    return segments(schema)[segment_index(value, schema)];
}

// ---------------------------------------------------------------------------
// TabularDataset

TabularDataset::TabularDataset(Schema schema, std::vector<Row> rows, std::vector<RowId> row_ids,
                               std::vector<Provenance> provenance, std::vector<SplitTag> split_tags)
    : schema_(std::move(schema)),
      rows_(std::move(rows)),
      row_ids_(std::move(row_ids)),
      provenance_(std::move(provenance)),
      split_tags_(std::move(split_tags)) {
    validate_schema(schema_);
    const std::size_t n = rows_.size();
    if (row_ids_.size() != n || provenance_.size() != n || split_tags_.size() != n) {
        throw Error(ErrorCode::kInvalidArgument, "row metadata length mismatch");
    }
    std::unordered_set<RowId> ids;
    ids.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        if (rows_[r].size() != schema_.size()) {
            throw Error(ErrorCode::kSchemaMismatch, "row length differs from schema length",
                        {{"row_id", row_ids_[r]}});
        }
        for (std::size_t c = 0; c < schema_.size(); ++c) {
            const auto& var = schema_[c];
            const bool typed = var.is_continuous() ? std::holds_alternative<double>(rows_[r][c])
                                                   : std::holds_alternative<std::string>(rows_[r][c]);
            if (!typed || (!var.is_continuous() && !var.in_domain(rows_[r][c]))) {
                throw Error(ErrorCode::kSchemaMismatch, "cell outside schema for '" + var.name + "'",
                            {{"row_id", row_ids_[r]}, {"column", var.name}});
            }
        }
        if (!ids.insert(row_ids_[r]).second) {
            throw Error(ErrorCode::kInvalidArgument, "duplicate row id", {{"row_id", row_ids_[r]}});
        }
        if (split_tags_[r] == SplitTag::kHeldout && provenance_[r] != Provenance::kOriginal) {
            throw Error(ErrorCode::kLeakageViolation, "heldout rows must be original", {{"row_id", row_ids_[r]}});
        }
    }
}

bool TabularDataset::is_split() const noexcept {
    return std::any_of(split_tags_.begin(), split_tags_.end(), [](SplitTag t) { return t != SplitTag::kUnsplit; });
}

RowId TabularDataset::next_row_id() const noexcept {
    RowId max_id = 0;
    for (RowId id : row_ids_) max_id = std::max(max_id, id);
    return max_id + 1;
}

std::optional<std::size_t> TabularDataset::find_row(RowId id) const {
    auto it = std::find(row_ids_.begin(), row_ids_.end(), id);
    if (it == row_ids_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - row_ids_.begin());
}

std::vector<std::size_t> TabularDataset::indices_with(SplitTag tag) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split_tags_.size(); ++i) {
        if (split_tags_[i] == tag) out.push_back(i);
    }
    return out;
}

TabularDataset TabularDataset::select(std::span<const std::size_t> indices) const {
    std::vector<Row> rows;
    std::vector<RowId> ids;
    std::vector<Provenance> prov;
    std::vector<SplitTag> tags;
    rows.reserve(indices.size());
    for (std::size_t i : indices) {
        rows.push_back(rows_.at(i));
        ids.push_back(row_ids_[i]);
        prov.push_back(provenance_[i]);
        tags.push_back(split_tags_[i]);
    }
    return TabularDataset(schema_, std::move(rows), std::move(ids), std::move(prov), std::move(tags));
}

TabularDataset TabularDataset::concat(const TabularDataset& other) const {
    if (other.schema_ != schema_) throw Error(ErrorCode::kSchemaMismatch, "cannot concatenate: schemas differ");
    auto rows = rows_;
    auto ids = row_ids_;
    auto prov = provenance_;
    auto tags = split_tags_;
    rows.insert(rows.end(), other.rows_.begin(), other.rows_.end());
    ids.insert(ids.end(), other.row_ids_.begin(), other.row_ids_.end());
    prov.insert(prov.end(), other.provenance_.begin(), other.provenance_.end());
    tags.insert(tags.end(), other.split_tags_.begin(), other.split_tags_.end());
    return TabularDataset(schema_, std::move(rows), std::move(ids), std::move(prov), std::move(tags));
}

TabularDataset TabularDataset::with_schema(Schema schema) const {
    return TabularDataset(std::move(schema), rows_, row_ids_, provenance_, split_tags_);
}

TabularDataset TabularDataset::with_split_tags(std::vector<SplitTag> tags) const {
    return TabularDataset(schema_, rows_, row_ids_, provenance_, std::move(tags));
}

TabularDataset TabularDataset::with_row_replaced(std::size_t index, Row row, Provenance provenance) const {
    if (provenance_.at(index) == Provenance::kOriginal && provenance != Provenance::kOriginal) {
        throw Error(ErrorCode::kInvalidArgument, "original rows never change provenance");
    }
    if (provenance_[index] != Provenance::kOriginal && provenance == Provenance::kOriginal) {
        throw Error(ErrorCode::kInvalidArgument, "generated rows cannot become original");
    }
    auto rows = rows_;
    auto prov = provenance_;
    rows[index] = std::move(row);
    prov[index] = provenance;
    return TabularDataset(schema_, std::move(rows), row_ids_, std::move(prov), split_tags_);
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t i = 0;
    if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;  // UTF-8 BOM
    auto end_record = [&] {
        record.push_back(std::move(field));
        field.clear();
        records.push_back(std::move(record));
        record.clear();
        field_started = false;
    };
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"':
                in_quotes = true;
                field_started = true;
                break;
            case ',':
                record.push_back(std::move(field));
                field.clear();
                field_started = true;
                break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
                end_record();
                break;
            case '\n':
                end_record();
                break;
            default:
                field += c;
                field_started = true;
        }
    }
    if (in_quotes) throw Error(ErrorCode::kCellParseError, "unterminated quoted field");
    if (field_started || !record.empty()) end_record();
    return records;
}

TabularDataset ingest(std::string_view csv, Schema schema) {
    validate_schema(schema);
    auto records = parse_csv(csv);
    if (records.empty()) throw Error(ErrorCode::kEmptyDataset, "no header row");

    const auto& header = records.front();
    std::vector<std::size_t> file_to_schema(header.size());
    std::vector<bool> seen(schema.size(), false);
    for (std::size_t c = 0; c < header.size(); ++c) {
        auto idx = column_index(schema, trim(header[c]));
        if (!idx) {
            throw Error(ErrorCode::kSchemaMismatch, "unknown column '" + header[c] + "'", {{"column", header[c]}});
        }
        if (seen[*idx]) {
            throw Error(ErrorCode::kSchemaMismatch, "duplicate column '" + header[c] + "'", {{"column", header[c]}});
        }
        seen[*idx] = true;
        file_to_schema[c] = *idx;
    }
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (!seen[i]) {
            throw Error(ErrorCode::kSchemaMismatch, "missing column '" + schema[i].name + "'",
                        {{"column", schema[i].name}});
        }
    }

    std::vector<Row> rows;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() == 1 && rec[0].empty()) continue;  // blank line
        if (rec.size() != header.size()) {
            throw Error(ErrorCode::kCellParseError, "row " + std::to_string(r) + " has wrong field count",
                        {{"row", r}, {"fields", rec.size()}, {"expected", header.size()}});
        }
        Row row(schema.size());
        for (std::size_t c = 0; c < rec.size(); ++c) {
            const std::size_t col = file_to_schema[c];
            row[col] = parse_cell(rec[c], schema[col], r, col);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error(ErrorCode::kEmptyDataset, "file has no data rows");

    const std::size_t n = rows.size();
    std::vector<RowId> ids(n);
    std::iota(ids.begin(), ids.end(), RowId{1});
    return TabularDataset(std::move(schema), std::move(rows), std::move(ids),
                          std::vector<Provenance>(n, Provenance::kOriginal),
                          std::vector<SplitTag>(n, SplitTag::kUnsplit));
}

std::string to_csv(const TabularDataset& dataset) {
    std::string out;
    const auto& schema = dataset.schema();
    for (std::size_t c = 0; c < schema.size(); ++c) {
        if (c) out += ',';
        out += quote_csv(schema[c].name);
    }
    out += "\r\n";
    for (const auto& row : dataset.rows()) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out += ',';
            out += quote_csv(format_cell(row[c]));
        }
        out += "\r\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Split & segmentation

TabularDataset split(const TabularDataset& dataset, double heldout_fraction, std::uint64_t seed) {
    if (!(heldout_fraction > 0.0 && heldout_fraction < 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "heldout fraction must lie in (0,1)");
    }
    if (dataset.is_split()) throw Error(ErrorCode::kAlreadySplit, "dataset is already split");

    const auto& target = dataset.schema()[dataset.target_column()];
    const std::size_t tcol = dataset.target_column();
    std::vector<std::vector<std::size_t>> by_class(target.categories.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        by_class[*target.category_index(std::get<std::string>(dataset.rows()[i][tcol]))].push_back(i);
    }
    for (const auto& members : by_class) {
        if (members.size() == 1) {
            throw Error(ErrorCode::kTooFewRows, "every target class needs at least two rows");
        }
    }
    const std::size_t n = dataset.size();
    const auto heldout_total = static_cast<std::size_t>(std::floor(heldout_fraction * static_cast<double>(n) + 1e-9));
    if (heldout_total == 0 || heldout_total >= n) {
        throw Error(ErrorCode::kTooFewRows, "split leaves an empty partition",
                    {{"rows", n}, {"heldout_fraction", heldout_fraction}});
    }

    // Largest-remainder apportionment of the heldout total across classes,
    // each class keeping at least one train row.
    const std::size_t k = by_class.size();
    std::vector<std::size_t> quota(k, 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const double exact = heldout_fraction * static_cast<double>(by_class[c].size());
        quota[c] = std::min(static_cast<std::size_t>(std::floor(exact + 1e-9)),
                            by_class[c].empty() ? 0 : by_class[c].size() - 1);
        assigned += quota[c];
        remainders.emplace_back(exact - static_cast<double>(quota[c]), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    while (assigned < heldout_total) {
        bool progressed = false;
        for (const auto& [rem, c] : remainders) {
            if (assigned == heldout_total) break;
            if (quota[c] + 1 < by_class[c].size()) {
                ++quota[c];
                ++assigned;
                progressed = true;
            }
        }
        if (!progressed) throw Error(ErrorCode::kTooFewRows, "cannot apportion heldout rows");
    }

    std::mt19937_64 rng(seed);
    std::vector<SplitTag> tags(n, SplitTag::kTrain);
    for (std::size_t c = 0; c < k; ++c) {
        auto members = by_class[c];
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t j = 0; j < quota[c]; ++j) tags[members[j]] = SplitTag::kHeldout;
    }
    return dataset.with_split_tags(std::move(tags));
}

TabularDataset freeze_segmentation(const TabularDataset& dataset) {
    Schema schema = dataset.schema();
    bool changed = false;
    const bool split_done = dataset.is_split();
    for (std::size_t c = 0; c < schema.size(); ++c) {
        auto& var = schema[c];
        if (!var.is_continuous() || var.has_segmentation()) continue;
        std::vector<double> values;
        for (std::size_t r = 0; r < dataset.size(); ++r) {
            if (dataset.provenance()[r] != Provenance::kOriginal) continue;
            if (split_done && dataset.split_tags()[r] != SplitTag::kTrain) continue;
            values.push_back(std::get<double>(dataset.rows()[r][c]));
        }
        if (values.empty()) {
            for (const auto& row : dataset.rows()) values.push_back(std::get<double>(row[c]));
        }
        std::vector<double> edges{-kInf};
        for (double p : {0.25, 0.5, 0.75}) {
            double q = quantile(values, p);
            if (q > edges.back()) edges.push_back(q);
        }
        edges.push_back(kInf);
        var.bin_edges = std::move(edges);
        var.bin_labels.clear();
        changed = true;
    }
    return changed ? dataset.with_schema(std::move(schema)) : dataset;
}

std::uint64_t train_snapshot_hash(const TabularDataset& dataset) {
    std::uint64_t h = fnv1a("train-snapshot");
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (dataset.split_tags()[i] != SplitTag::kTrain) continue;
        h = fnv1a(canonical_row(dataset.row_ids()[i], dataset.rows()[i]), h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// JSON

json dataset_to_json(const TabularDataset& dataset) {
    json rows = json::array();
    for (const auto& row : dataset.rows()) {
        json cells = json::array();
        for (const auto& cell : row) {
            if (const double* v = std::get_if<double>(&cell)) {
                cells.push_back(*v);
            } else {
                cells.push_back(std::get<std::string>(cell));
            }
        }
        rows.push_back(std::move(cells));
    }
    json prov = json::array();
    for (auto p : dataset.provenance()) prov.push_back(to_string(p));
    json tags = json::array();
    for (auto t : dataset.split_tags()) tags.push_back(to_string(t));
    return {{"schema", schema_to_json(dataset.schema())},
            {"row_ids", dataset.row_ids()},
            {"provenance", prov},
            {"split", tags},
            {"rows", rows}};
}

TabularDataset dataset_from_json(const json& doc) {
    try {
        Schema schema = schema_from_json(doc.at("schema"));
        std::vector<Row> rows;
        for (const auto& jrow : doc.at("rows")) {
            if (jrow.size() != schema.size()) throw Error(ErrorCode::kCorruptFile, "row length mismatch");
            Row row;
            for (std::size_t c = 0; c < jrow.size(); ++c) {
                if (schema[c].is_continuous()) {
                    row.emplace_back(jrow[c].get<double>());
                } else {
                    row.emplace_back(jrow[c].get<std::string>());
                }
            }
            rows.push_back(std::move(row));
        }
        std::vector<Provenance> prov;
        for (const auto& p : doc.at("provenance")) {
            prov.push_back(enum_from_string(p.get<std::string>(),
                                            std::array{Provenance::kOriginal, Provenance::kGenerated,
                                                       Provenance::kEdited},
                                            "provenance"));
        }
        std::vector<SplitTag> tags;
        for (const auto& t : doc.at("split")) {
            tags.push_back(enum_from_string(t.get<std::string>(),
                                            std::array{SplitTag::kUnsplit, SplitTag::kTrain, SplitTag::kHeldout},
                                            "split tag"));
        }
        return TabularDataset(std::move(schema), std::move(rows), doc.at("row_ids").get<std::vector<RowId>>(),
                              std::move(prov), std::move(tags));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kCorruptFile, std::string("malformed dataset document: ") + e.what());
    }
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex_digest(std::uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

}  // namespace debias
