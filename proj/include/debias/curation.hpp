#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "debias/augment.hpp"
#include "debias/dataset.hpp"
#include "debias/metrics.hpp"
#include "debias/model.hpp"
#include "debias/quality.hpp"

namespace debias {

nlohmann::json cell_to_json(const Cell& cell);
/// Numbers (or numeric strings) for continuous variables, labels otherwise.
/// Throws kOutOfDomain on a type mismatch; domain checks are the caller's.
Cell cell_from_json(const nlohmann::json& value, const VariableSchema& var);

enum class EditKind { kEdit, kRemove, kRestore };
std::string_view to_string(EditKind kind);

/// One committed change to the pending batch. Replaying the log over the
/// pristine batch reproduces the current batch.
struct EditLogEntry {
    EditKind kind = EditKind::kEdit;
    RowId row_id = 0;
    std::string variable;         // empty for remove/restore
    std::optional<Cell> old_value;
    std::optional<Cell> new_value;
    std::optional<Prediction> prediction;  // re-prediction after the change
    std::string timestamp;
};

nlohmann::json to_json(const EditLogEntry& entry);
EditLogEntry edit_entry_from_json(const nlohmann::json& json, const Schema& schema);

struct WhatIfResult {
    Prediction prediction;
    EditLogEntry entry;
};

/// Re-predicts `row_id` with one cell replaced, without committing anything.
WhatIfResult what_if(const GeneratedBatch& batch, RowId row_id, const std::string& variable, const Cell& new_value,
                     const ModelArtifact& model);

/// Rebuilds the current batch rows from the pristine rows and an edit log.
TabularDataset replay_edits(const TabularDataset& pristine, const std::vector<EditLogEntry>& log);

struct RowFilter {
    std::optional<double> confidence_below;     // keep confidence < value
    std::optional<double> confidence_at_least;  // keep confidence >= value
    std::optional<std::string> predicted_class;
    std::vector<SegmentConstraint> regions;     // requested_count is ignored
    std::optional<Provenance> provenance;
};

enum class SortKey { kRowId, kConfidence, kVariable };

struct RowOrdering {
    SortKey key = SortKey::kRowId;
    std::string variable;  // for kVariable
    bool descending = false;
};

/// Indices into batch.rows matching `filter`, stably sorted by `ordering`.
std::vector<std::size_t> filter_sort(const GeneratedBatch& batch, const RowFilter& filter, const RowOrdering& ordering);

struct VariableDrift {
    std::string variable;
    std::vector<std::string> labels;
    std::vector<std::size_t> before_counts;
    std::vector<std::size_t> after_counts;
    double score = 0.0;
    bool flagged = false;
};

struct DriftReport {
    std::vector<VariableDrift> variables;
    std::vector<std::string> flagged;
    double threshold = 0.15;
};

/// Total variation distance between the frozen segment histograms of each
/// predictor before and after a merge.
DriftReport drift_report(const TabularDataset& original_train, const TabularDataset& merged, double threshold = 0.15);
double total_variation(std::span<const std::size_t> a, std::span<const std::size_t> b);
nlohmann::json to_json(const DriftReport& report);

struct SessionSettings {
    double heldout_fraction = 0.2;
    std::uint64_t split_seed = 7;
    Hyperparameters hyperparameters;
    ThresholdPolicy threshold;
    AugmentConfig augment;
    QualityConfig quality;
    double drift_threshold = 0.15;
};

nlohmann::json to_json(const SessionSettings& settings);
SessionSettings settings_from_json(const nlohmann::json& json);

struct HistoryEntry {
    std::size_t index = 0;
    std::string kind;  // baseline | merge | revert
    std::string timestamp;
    double overall_rr = 0.0;
    double overall_cr = 0.0;
    double accuracy = 0.0;
    std::map<std::string, std::pair<double, double>> variable_scores;  // rr, cr
    QualityReport quality;  // row id lists dropped
    std::size_t train_rows = 0;
    std::size_t batch_size = 0;
    std::size_t edit_count = 0;
    nlohmann::json augmentation;  // constraints and generator of the merged batch, or null
    std::string dataset_digest;
    std::string model_digest;
    std::optional<std::size_t> reverted_to;
    std::optional<std::string> request_id;
};

nlohmann::json to_json(const HistoryEntry& entry);
/// Entries with RR, CR, accuracy and quality deltas against the previous entry.
nlohmann::json history_to_json(const std::vector<HistoryEntry>& history);
std::string render_history(const std::vector<HistoryEntry>& history);
HistoryEntry history_entry_from_json(const nlohmann::json& json);

struct PendingBatch {
    GeneratedBatch pristine;
    GeneratedBatch current;
    std::vector<EditLogEntry> log;
};

struct MergeOutcome {
    std::shared_ptr<const TabularDataset> dataset;
    std::shared_ptr<const ModelArtifact> model;
    HistoryEntry entry;
};

struct Overview {
    double accuracy = 0.0;
    double accuracy_delta = 0.0;
    ProportionInterval accuracy_interval;
    std::size_t train_rows = 0;
    std::size_t heldout_rows = 0;
    std::vector<std::string> predictors;
    std::string model_digest;
    bool has_pending = false;
};

nlohmann::json to_json(const Overview& overview);

using Clock = std::function<std::string()>;
std::string utc_timestamp();

std::string dataset_digest(const TabularDataset& dataset);

/// Single-expert curation session. Every mutation is split into a const
/// `prepare_*` step that computes the outcome and an `apply_*` step that
/// installs it, so a persistence layer can make the outcome durable in
/// between. Not internally synchronised.
class Session {
public:
    /// Splits, freezes segmentation, trains the default model and records
    /// the baseline history entry.
    static Session create(const TabularDataset& ingested, SessionSettings settings, Clock clock = utc_timestamp);

    /// Restores a session from its baseline snapshot.
    Session(SessionSettings settings, std::shared_ptr<const TabularDataset> dataset,
            std::shared_ptr<const ModelArtifact> model, HistoryEntry baseline, Clock clock = utc_timestamp);

    const SessionSettings& settings() const noexcept { return settings_; }
    const TabularDataset& dataset() const noexcept { return *dataset_; }
    const ModelArtifact& model() const noexcept { return *model_; }
    const TabularDataset& original_train() const noexcept { return *original_train_; }
    const std::vector<HistoryEntry>& history() const noexcept { return history_; }
    const std::optional<PendingBatch>& pending() const noexcept { return pending_; }
    std::shared_ptr<const TabularDataset> dataset_snapshot(const std::string& digest) const;
    std::shared_ptr<const ModelArtifact> model_snapshot(const std::string& digest) const;

    BiasReport bias() const;
    QualityReport quality() const;
    Overview overview() const;
    DriftReport drift() const;
    std::vector<LowCoverageWarning> plan(const ConstraintSet& constraints) const;
    WhatIfResult what_if(RowId row_id, const std::string& variable, const Cell& value) const;

    GeneratedBatch prepare_batch(const ConstraintSet& constraints, const GeneratorBackend& backend,
                                 std::uint64_t seed) const;
    EditLogEntry prepare_edit(RowId row_id, const std::string& variable, const Cell& value) const;
    EditLogEntry prepare_remove(RowId row_id) const;
    EditLogEntry prepare_restore(RowId row_id) const;
    MergeOutcome prepare_merge(bool acknowledged) const;
    HistoryEntry prepare_revert(std::size_t index) const;

    /// Predictions, estimated accuracy and quality of `batch` under the current model.
    void score(GeneratedBatch& batch) const;
    /// Installs `batch` as the pending batch after rescoring it.
    void set_pending(GeneratedBatch batch);
    void apply_edit(const EditLogEntry& entry);
    void discard_pending();
    void apply_merge(const MergeOutcome& outcome);
    void apply_revert(const HistoryEntry& entry);

    const GeneratedBatch& augment(const ConstraintSet& constraints, const GeneratorBackend& backend, std::uint64_t seed);
    const EditLogEntry& commit_edit(RowId row_id, const std::string& variable, const Cell& value);
    const EditLogEntry& remove_row(RowId row_id);
    const EditLogEntry& restore_row(RowId row_id);
    const HistoryEntry& merge_and_retrain(bool acknowledged);
    const HistoryEntry& revert(std::size_t index);

private:
    HistoryEntry make_entry(const std::string& kind, const TabularDataset& dataset, const ModelArtifact& model) const;
    void register_snapshot(std::shared_ptr<const TabularDataset> dataset, std::shared_ptr<const ModelArtifact> model,
                           const HistoryEntry& entry);
    const PendingBatch& require_pending() const;

    SessionSettings settings_;
    Clock clock_;
    std::shared_ptr<const TabularDataset> dataset_;
    std::shared_ptr<const ModelArtifact> model_;
    std::shared_ptr<const TabularDataset> original_train_;
    std::vector<HistoryEntry> history_;
    std::optional<PendingBatch> pending_;
    std::map<std::string, std::shared_ptr<const TabularDataset>> datasets_;
    std::map<std::string, std::shared_ptr<const ModelArtifact>> models_;
};

}  // namespace debias
