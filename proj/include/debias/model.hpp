#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "debias/dataset.hpp"
#include "debias/stats.hpp"

namespace debias {

struct Hyperparameters {
    int trees = 200;
    int max_depth = 6;
    double learning_rate = 0.1;
    std::uint64_t seed = 0;
    int min_data_in_leaf = 20;
    double min_sum_hessian_in_leaf = 1e-3;
    double lambda_l2 = 1.0;
    double min_split_gain = 0.0;
    int max_bins = 255;
    // Row subsampling per tree; 1.0 disables it.
    double bagging_fraction = 1.0;

    friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

nlohmann::json to_json(const Hyperparameters& hyper);
Hyperparameters hyperparameters_from_json(const nlohmann::json& json);

struct Prediction {
    std::string predicted_class;
    std::size_t class_index = 0;
    std::vector<double> class_probabilities;  // aligned with the target categories
    double confidence = 0.0;

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Builds a Prediction from a probability vector: argmax class, max probability.
Prediction make_prediction(std::vector<double> probabilities, const std::vector<std::string>& classes);
nlohmann::json to_json(const Prediction& prediction);

/// Numeric view of a row for tree learners: continuous cells as-is,
/// categorical cells as their category index. The target column is skipped.
class FeatureEncoder {
public:
    FeatureEncoder() = default;
    explicit FeatureEncoder(const Schema& schema);

    std::vector<double> encode(const Row& row) const;
    std::size_t feature_count() const noexcept { return columns_.size(); }

private:
    Schema schema_;
    std::vector<std::size_t> columns_;
};

/// Learner-independent classifier interface. Implementations are immutable
/// after fitting.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual std::string_view kind() const = 0;
    virtual std::vector<double> predict_proba(std::span<const double> features) const = 0;
    virtual void write(std::ostream& out) const = 0;
};

/// Histogram-based gradient-boosted decision trees with a logistic (two
/// classes) or softmax (more classes) objective.
class GradientBoostedTrees final : public Classifier {
public:
    struct Node {
        std::int32_t feature = -1;  // -1 marks a leaf
        double threshold = 0.0;     // go left when value <= threshold
        std::int32_t left = -1;
        std::int32_t right = -1;
        double value = 0.0;
    };
    using Tree = std::vector<Node>;

    static std::unique_ptr<GradientBoostedTrees> fit(const std::vector<std::vector<double>>& features,
                                                     std::span<const std::size_t> labels, std::size_t num_classes,
                                                     const Hyperparameters& hyper);
    static std::unique_ptr<GradientBoostedTrees> read(std::istream& in);

    std::string_view kind() const override { return "gbdt"; }
    std::vector<double> predict_proba(std::span<const double> features) const override;
    void write(std::ostream& out) const override;

    std::size_t num_classes() const noexcept { return num_classes_; }
    std::size_t tree_count() const noexcept { return trees_.size(); }

private:
    std::vector<double> raw_scores(std::span<const double> features) const;

    std::size_t num_classes_ = 2;
    std::vector<double> base_scores_;
    // Trees are stored round-major: round r, class k at r * outputs + k.
    std::vector<Tree> trees_;
};

struct CellAccuracy {
    std::size_t correct = 0;
    std::size_t total = 0;

    std::optional<double> ratio() const {
        if (total == 0) return std::nullopt;
        return static_cast<double>(correct) / static_cast<double>(total);
    }
    friend bool operator==(const CellAccuracy&, const CellAccuracy&) = default;
};

struct ModelArtifact {
    std::shared_ptr<const Classifier> classifier;
    FeatureEncoder encoder;
    Schema schema;
    std::vector<std::string> classes;
    Hyperparameters hyperparameters;
    std::uint64_t train_snapshot_hash = 0;
    std::uint64_t schema_digest = 0;
    CellAccuracy heldout;

    double heldout_accuracy() const { return heldout.ratio().value_or(0.0); }
    ProportionInterval heldout_interval() const { return wilson_interval(heldout.correct, heldout.total); }
    bool fresh_for(const TabularDataset& dataset) const;
};

/// Fits on the train rows of a split dataset and scores the heldout rows.
ModelArtifact train(const TabularDataset& dataset, const Hyperparameters& hyper = {});
Prediction predict(const ModelArtifact& model, const Row& row);

/// Throws kModelStale unless `model` was fitted on exactly the train rows of `dataset`.
void require_fresh(const ModelArtifact& model, const TabularDataset& dataset);

struct SegmentAccuracy {
    Segment segment;
    std::map<std::string, CellAccuracy> by_outcome;  // one entry per target class
    CellAccuracy overall;
};

/// Heldout accuracy per (segment, true outcome) cell of one predictor.
std::vector<SegmentAccuracy> segment_accuracy(const ModelArtifact& model, const TabularDataset& dataset,
                                              std::string_view variable);

/// Versioned binary container with an embedded schema digest.
void save_model(const ModelArtifact& model, std::ostream& out);
ModelArtifact load_model(std::istream& in, const Schema& schema);
std::string model_bytes(const ModelArtifact& model);
ModelArtifact model_from_bytes(const std::string& bytes, const Schema& schema);
std::uint64_t model_digest(const ModelArtifact& model);

}  // namespace debias
