#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "debias/dataset.hpp"
#include "debias/metrics.hpp"
#include "debias/model.hpp"
#include "debias/quality.hpp"

namespace debias {

struct SegmentConstraint {
    std::string variable;
    Region region;
    std::size_t requested_count = 1;

    friend bool operator==(const SegmentConstraint&, const SegmentConstraint&) = default;
};

/// In joint mode every generated row satisfies every region and all
/// constraints share one requested count (the batch size). In independent
/// mode each constraint yields its own rows, concatenated in order.
struct ConstraintSet {
    std::vector<SegmentConstraint> constraints;
    bool joint = true;

    std::size_t total_requested() const noexcept;
    bool empty() const noexcept { return constraints.empty(); }
    friend bool operator==(const ConstraintSet&, const ConstraintSet&) = default;
};

nlohmann::json to_json(const SegmentConstraint& constraint);
nlohmann::json to_json(const ConstraintSet& constraints);
/// Accepts {"joint": bool, "constraints": [...]} or a bare array of
/// {variable, min, max | categories, count} objects.
ConstraintSet constraints_from_json(const nlohmann::json& json);

struct AugmentConfig {
    std::size_t cap = 10000;
    double warning_threshold = 1.0;
};

struct LowCoverageWarning {
    SegmentConstraint constraint;
    std::size_t existing_count = 0;
    std::size_t requested_count = 0;
    double ratio = 0.0;
};

nlohmann::json to_json(const LowCoverageWarning& warning);

/// Throws kConstraintOutOfDomain, kInvalidConstraint or kCapExceeded.
void validate_constraints(const ConstraintSet& constraints, const Schema& schema, std::size_t cap);

/// Original train rows (all original rows when unsplit) matching every region.
std::vector<std::size_t> matching_pool(const TabularDataset& dataset, std::span<const SegmentConstraint> constraints);

/// One warning per constraint whose existing/requested ratio is below the threshold.
std::vector<LowCoverageWarning> plan(const ConstraintSet& constraints, const TabularDataset& dataset,
                                     const AugmentConfig& config = {});

struct GeneratedRow {
    Row cells;
    std::array<RowId, 2> parents{};
};

struct GenerationRequest {
    const TabularDataset* dataset = nullptr;
    std::vector<std::size_t> pool;  // dataset row indices the backend may draw from
    std::vector<SegmentConstraint> constraints;
    std::size_t count = 0;
    std::uint64_t seed = 0;
};

/// Pluggable synthetic-row generator. Output rows are checked against the
/// request's regions and the schema after every call.
class GeneratorBackend {
public:
    virtual ~GeneratorBackend() = default;
    virtual std::string name() const = 0;
    virtual std::vector<GeneratedRow> generate(const GenerationRequest& request) const = 0;
};

/// Segment-conditioned nearest-neighbour interpolation: draw an anchor row
/// from the pool, pick one of its k nearest pool neighbours (standardised
/// Euclidean distance over continuous predictors), interpolate continuous
/// cells uniformly between the pair, draw categorical cells from either
/// parent, and copy the target label of the nearer parent.
class InterpolationBackend final : public GeneratorBackend {
public:
    explicit InterpolationBackend(std::size_t neighbours = 5) : neighbours_(neighbours) {}
    std::string name() const override;
    std::vector<GeneratedRow> generate(const GenerationRequest& request) const override;

private:
    std::size_t neighbours_;
};

/// Runs `command <request.json> <output.csv>`; the command writes generated
/// rows as CSV with the schema header plus optional parent_a/parent_b columns.
class ExternalCommandBackend final : public GeneratorBackend {
public:
    explicit ExternalCommandBackend(std::string command) : command_(std::move(command)) {}
    std::string name() const override { return "external"; }
    std::vector<GeneratedRow> generate(const GenerationRequest& request) const override;

private:
    std::string command_;
};

struct GeneratedBatch {
    TabularDataset rows;  // provenance generated, tagged train
    std::vector<Prediction> predictions;
    std::vector<std::array<RowId, 2>> parents;
    std::vector<std::size_t> constraint_of;
    std::vector<LowCoverageWarning> warnings;
    ConstraintSet constraints;
    std::string generator_id;
    std::uint64_t seed = 0;
    double estimated_accuracy = 0.0;
    std::optional<QualityReport> estimated_quality;
    std::uint64_t base_snapshot = 0;

    std::size_t size() const noexcept { return rows.size(); }
};

nlohmann::json to_json(const GeneratedBatch& batch);

/// Generates rows under `constraints` and scores them with `model` as an
/// inference set. Warnings are attached, never blocking.
GeneratedBatch generate(const ConstraintSet& constraints, const TabularDataset& dataset, const ModelArtifact& model,
                        const GeneratorBackend& backend, std::uint64_t seed, const AugmentConfig& config = {});

/// Recomputes predictions, estimated accuracy and estimated quality after rows changed.
void rescore(GeneratedBatch& batch, const TabularDataset& dataset, const ModelArtifact& model);

/// True when `row` satisfies every region of `constraint_set` relevant to it.
bool satisfies(const Schema& schema, const Row& row, std::span<const SegmentConstraint> constraints);

struct AutotuneOptions {
    // Explicit per-segment grid levels; empty derives {0, gap/3, 2gap/3, gap}
    // from each segment's distance to full representation and coverage.
    std::vector<std::size_t> levels;
};

/// Grid search over per-segment generation counts for the lowest-rate
/// segments, maximising overall RR + CR of the hypothetical merged counts.
/// Rows generated for a segment are assumed to spread over the other
/// variables like the existing rows of that segment.
ConstraintSet naive_autotune(const TabularDataset& dataset, const ThresholdPolicy& policy, std::size_t budget,
                             const AutotuneOptions& options = {});

}  // namespace debias
