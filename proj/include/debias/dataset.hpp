#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace debias {

enum class VariableKind { kContinuous, kCategorical, kBinary };
enum class VariableRole { kPredictor, kTarget };
enum class VariableGroup { kPhysical, kDiagnostic, kLifestyle, kHistory };
enum class Provenance { kOriginal, kGenerated, kEdited };
enum class SplitTag { kUnsplit, kTrain, kHeldout };

std::string_view to_string(VariableKind kind);
std::string_view to_string(VariableRole role);
std::string_view to_string(VariableGroup group);
std::string_view to_string(Provenance provenance);
std::string_view to_string(SplitTag tag);

/// Continuous cells hold doubles; categorical and binary cells hold their
/// category label.
using Cell = std::variant<double, std::string>;
using Row = std::vector<Cell>;
using RowId = std::uint64_t;

std::string format_cell(const Cell& cell);
std::string format_number(double value);

/// Numeric interval [lo, hi) or [lo, hi] depending on `hi_closed`.
/// Infinite bounds are allowed.
struct Interval {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool hi_closed = false;

    bool contains(double value) const noexcept {
        return value >= lo && (hi_closed ? value <= hi : value < hi);
    }
    friend bool operator==(const Interval&, const Interval&) = default;
};

struct CategorySet {
    std::vector<std::string> categories;

    bool contains(std::string_view value) const noexcept;
    friend bool operator==(const CategorySet&, const CategorySet&) = default;
};

using Region = std::variant<Interval, CategorySet>;

bool region_contains(const Region& region, const Cell& cell);
nlohmann::json region_to_json(const Region& region);

struct VariableSchema {
    std::string name;
    VariableKind kind = VariableKind::kContinuous;
    std::string unit;
    VariableRole role = VariableRole::kPredictor;
    std::optional<VariableGroup> group;
    // Continuous: ordered bin edges; empty until quartile bins are frozen.
    std::vector<double> bin_edges;
    std::vector<std::string> bin_labels;
    // Categorical and binary: the category list (binary has exactly two).
    std::vector<std::string> categories;

    bool is_continuous() const noexcept { return kind == VariableKind::kContinuous; }
    bool has_segmentation() const noexcept { return !is_continuous() || bin_edges.size() >= 2; }
    std::size_t segment_count() const noexcept;

    /// Throws kSchemaMismatch when the declaration is malformed.
    void validate() const;
    /// True when `cell` has the right alternative and lies in the declared domain.
    bool in_domain(const Cell& cell) const;
    std::optional<std::size_t> category_index(std::string_view value) const;

    friend bool operator==(const VariableSchema&, const VariableSchema&) = default;
};

using Schema = std::vector<VariableSchema>;

/// One sub-group of a predictor variable.
struct Segment {
    std::string variable;
    std::string label;
    Region region;
    std::size_t index = 0;

    friend bool operator==(const Segment&, const Segment&) = default;
};

void validate_schema(const Schema& schema);
std::size_t target_index(const Schema& schema);
std::optional<std::size_t> column_index(const Schema& schema, std::string_view name);
std::vector<std::size_t> predictor_indices(const Schema& schema);

Schema schema_from_json(const nlohmann::json& json);
nlohmann::json schema_to_json(const Schema& schema);
std::uint64_t schema_digest(const Schema& schema);

/// All segments of a variable in bin/category order.
std::vector<Segment> segments(const VariableSchema& schema);
std::size_t segment_index(const Cell& value, const VariableSchema& schema);
Segment segment_of(const Cell& value, const VariableSchema& schema);

/// Typed rows with stable ids, provenance and split tags. Immutable once
/// constructed; every derivation returns a new value.
class TabularDataset {
public:
    TabularDataset() = default;
    TabularDataset(Schema schema, std::vector<Row> rows, std::vector<RowId> row_ids,
                   std::vector<Provenance> provenance, std::vector<SplitTag> split_tags);

    const Schema& schema() const noexcept { return schema_; }
    const std::vector<Row>& rows() const noexcept { return rows_; }
    const std::vector<RowId>& row_ids() const noexcept { return row_ids_; }
    const std::vector<Provenance>& provenance() const noexcept { return provenance_; }
    const std::vector<SplitTag>& split_tags() const noexcept { return split_tags_; }

    std::size_t size() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }
    std::size_t target_column() const { return target_index(schema_); }
    bool is_split() const noexcept;
    RowId next_row_id() const noexcept;
    std::optional<std::size_t> find_row(RowId id) const;

    std::vector<std::size_t> indices_with(SplitTag tag) const;
    TabularDataset select(std::span<const std::size_t> indices) const;
    TabularDataset train_view() const { return select(indices_with(SplitTag::kTrain)); }
    TabularDataset heldout_view() const { return select(indices_with(SplitTag::kHeldout)); }
    /// Rows of `other` appended, keeping their tags. Schemas must match.
    TabularDataset concat(const TabularDataset& other) const;
    TabularDataset with_schema(Schema schema) const;
    TabularDataset with_split_tags(std::vector<SplitTag> tags) const;
    TabularDataset with_row_replaced(std::size_t index, Row row, Provenance provenance) const;

    friend bool operator==(const TabularDataset&, const TabularDataset&) = default;

private:
    Schema schema_;
    std::vector<Row> rows_;
    std::vector<RowId> row_ids_;
    std::vector<Provenance> provenance_;
    std::vector<SplitTag> split_tags_;
};

/// Parses RFC 4180 CSV with a header row. Every row gets provenance original
/// and split tag unsplit; ids are 1-based data-row ordinals.
TabularDataset ingest(std::string_view csv, Schema schema);
std::string to_csv(const TabularDataset& dataset);
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// Stratified split on the target column. Deterministic for a fixed seed.
TabularDataset split(const TabularDataset& dataset, double heldout_fraction, std::uint64_t seed);

/// Replaces missing continuous bin edges with quartile bins computed on the
/// original training rows (all original rows when unsplit).
TabularDataset freeze_segmentation(const TabularDataset& dataset);

/// Digest of (id, cells) of the train rows in order.
std::uint64_t train_snapshot_hash(const TabularDataset& dataset);

nlohmann::json dataset_to_json(const TabularDataset& dataset);
TabularDataset dataset_from_json(const nlohmann::json& json);

/// FNV-1a, 64-bit.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 14695981039346656037ull);
std::string hex_digest(std::uint64_t digest);

}  // namespace debias
