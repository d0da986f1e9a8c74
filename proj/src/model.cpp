#include "debias/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "debias/error.hpp"

namespace debias {

using nlohmann::json;

namespace {

constexpr char kModelMagic[8] = {'D', 'B', 'I', 'A', 'S', 'M', 'D', 'L'};
constexpr std::uint32_t kModelFormatVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw Error(ErrorCode::kCorruptFile, "truncated model file");
    return value;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    const auto size = read_pod<std::uint64_t>(in);
    if (size > (1ull << 32)) throw Error(ErrorCode::kCorruptFile, "implausible string length in model file");
    std::string s(size, '\0');
    in.read(s.data(), static_cast<std::streamsize>(size));
    if (!in) throw Error(ErrorCode::kCorruptFile, "truncated model file");
    return s;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void softmax_inplace(std::vector<double>& scores) {
    const double top = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double& s : scores) {
        s = std::exp(s - top);
        sum += s;
    }
    for (double& s : scores) s /= sum;
}

// Candidate split thresholds for one feature: midpoints between consecutive
// distinct values, thinned to at most max_bins - 1 by rank.
std::vector<double> bin_thresholds(std::vector<double> values, int max_bins) {
    std::sort(values.begin(), values.end());
    std::vector<double> uniques;
    for (double v : values) {
        if (uniques.empty() || v > uniques.back()) uniques.push_back(v);
    }
    std::vector<double> thresholds;
    if (uniques.size() < 2) return thresholds;
    const auto limit = static_cast<std::size_t>(std::max(2, max_bins));
    if (uniques.size() <= limit) {
        for (std::size_t i = 0; i + 1 < uniques.size(); ++i) thresholds.push_back(0.5 * (uniques[i] + uniques[i + 1]));
        return thresholds;
    }
    const std::size_t n = values.size();
    for (std::size_t b = 1; b < limit; ++b) {
        const double v = values[b * n / limit];
        auto next = std::upper_bound(uniques.begin(), uniques.end(), v);
        if (next == uniques.end()) break;
        const double t = 0.5 * (v + *next);
        if (thresholds.empty() || t > thresholds.back()) thresholds.push_back(t);
    }
    return thresholds;
}

struct SplitChoice {
    int feature = -1;
    std::size_t bin = 0;
    double gain = 0.0;
};

class TreeBuilder {
public:
    TreeBuilder(const std::vector<std::vector<std::uint16_t>>& bins, const std::vector<std::vector<double>>& thresholds,
                const std::vector<double>& grad, const std::vector<double>& hess, const Hyperparameters& hyper)
        : bins_(bins), thresholds_(thresholds), grad_(grad), hess_(hess), hyper_(hyper) {}

    GradientBoostedTrees::Tree build(std::vector<std::size_t> rows) {
        tree_.clear();
        grow(std::move(rows), 0);
        return std::move(tree_);
    }

private:
    std::int32_t grow(std::vector<std::size_t> rows, int depth) {
        double g = 0.0, h = 0.0;
        for (std::size_t r : rows) {
            g += grad_[r];
            h += hess_[r];
        }
        const auto index = static_cast<std::int32_t>(tree_.size());
        tree_.push_back({});
        tree_[index].value = -g / (h + hyper_.lambda_l2) * hyper_.learning_rate;

        if (depth >= hyper_.max_depth || rows.size() < 2 * static_cast<std::size_t>(std::max(1, hyper_.min_data_in_leaf))) {
            return index;
        }
        const SplitChoice best = find_split(rows, g, h);
        if (best.feature < 0) return index;

        std::vector<std::size_t> left, right;
        const auto& fbins = bins_[static_cast<std::size_t>(best.feature)];
        for (std::size_t r : rows) {
            (fbins[r] <= best.bin ? left : right).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();

        tree_[index].feature = best.feature;
        tree_[index].threshold = thresholds_[static_cast<std::size_t>(best.feature)][best.bin];
        const std::int32_t l = grow(std::move(left), depth + 1);
        const std::int32_t r = grow(std::move(right), depth + 1);
        tree_[index].left = l;
        tree_[index].right = r;
        return index;
    }

    SplitChoice find_split(const std::vector<std::size_t>& rows, double g_total, double h_total) const {
        SplitChoice best;
        best.gain = hyper_.min_split_gain + 1e-12;
        const double lambda = hyper_.lambda_l2;
        const double parent = g_total * g_total / (h_total + lambda);
        const auto min_count = static_cast<std::size_t>(std::max(1, hyper_.min_data_in_leaf));
        for (std::size_t f = 0; f < bins_.size(); ++f) {
            const std::size_t nbins = thresholds_[f].size() + 1;
            if (nbins < 2) continue;
            hist_g_.assign(nbins, 0.0);
            hist_h_.assign(nbins, 0.0);
            hist_n_.assign(nbins, 0);
            const auto& fb = bins_[f];
            for (std::size_t r : rows) {
                const std::size_t b = fb[r];
                hist_g_[b] += grad_[r];
                hist_h_[b] += hess_[r];
                ++hist_n_[b];
            }
            double gl = 0.0, hl = 0.0;
            std::size_t nl = 0;
            for (std::size_t b = 0; b + 1 < nbins; ++b) {
                gl += hist_g_[b];
                hl += hist_h_[b];
                nl += hist_n_[b];
                const std::size_t nr = rows.size() - nl;
                if (nl < min_count) continue;
                if (nr < min_count) break;
                const double gr = g_total - gl;
                const double hr = h_total - hl;
                if (hl < hyper_.min_sum_hessian_in_leaf || hr < hyper_.min_sum_hessian_in_leaf) continue;
                const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                if (gain > best.gain) {
                    best.gain = gain;
                    best.feature = static_cast<int>(f);
                    best.bin = b;
                }
            }
        }
        return best;
    }

    const std::vector<std::vector<std::uint16_t>>& bins_;
    const std::vector<std::vector<double>>& thresholds_;
    const std::vector<double>& grad_;
    const std::vector<double>& hess_;
    const Hyperparameters& hyper_;
    GradientBoostedTrees::Tree tree_;
    mutable std::vector<double> hist_g_, hist_h_;
    mutable std::vector<std::size_t> hist_n_;
};

double tree_output(const GradientBoostedTrees::Tree& tree, std::span<const double> features) {
    std::int32_t node = 0;
    while (tree[static_cast<std::size_t>(node)].feature >= 0) {
        const auto& n = tree[static_cast<std::size_t>(node)];
        node = features[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return tree[static_cast<std::size_t>(node)].value;
}

}  // namespace

json to_json(const Hyperparameters& hyper) {
    return {{"trees", hyper.trees},
            {"max_depth", hyper.max_depth},
            {"learning_rate", hyper.learning_rate},
            {"seed", hyper.seed},
            {"min_data_in_leaf", hyper.min_data_in_leaf},
            {"min_sum_hessian_in_leaf", hyper.min_sum_hessian_in_leaf},
            {"lambda_l2", hyper.lambda_l2},
            {"min_split_gain", hyper.min_split_gain},
            {"max_bins", hyper.max_bins},
            {"bagging_fraction", hyper.bagging_fraction}};
}

Hyperparameters hyperparameters_from_json(const json& doc) {
    Hyperparameters h;
    h.trees = doc.value("trees", h.trees);
    h.max_depth = doc.value("max_depth", h.max_depth);
    h.learning_rate = doc.value("learning_rate", h.learning_rate);
    h.seed = doc.value("seed", h.seed);
    h.min_data_in_leaf = doc.value("min_data_in_leaf", h.min_data_in_leaf);
    h.min_sum_hessian_in_leaf = doc.value("min_sum_hessian_in_leaf", h.min_sum_hessian_in_leaf);
    h.lambda_l2 = doc.value("lambda_l2", h.lambda_l2);
    h.min_split_gain = doc.value("min_split_gain", h.min_split_gain);
    h.max_bins = doc.value("max_bins", h.max_bins);
    h.bagging_fraction = doc.value("bagging_fraction", h.bagging_fraction);
    if (h.trees < 1 || h.max_depth < 1 || !(h.learning_rate > 0) || h.max_bins < 2 || h.max_bins > 65535 ||
        !(h.bagging_fraction > 0 && h.bagging_fraction <= 1)) {
        throw Error(ErrorCode::kInvalidArgument, "invalid hyperparameters", doc);
    }
    return h;
}

Prediction make_prediction(std::vector<double> probabilities, const std::vector<std::string>& classes) {
    Prediction p;
    const auto it = std::max_element(probabilities.begin(), probabilities.end());
    p.class_index = static_cast<std::size_t>(it - probabilities.begin());
    p.confidence = *it;
    p.predicted_class = classes.at(p.class_index);
    p.class_probabilities = std::move(probabilities);
    return p;
}

json to_json(const Prediction& prediction) {
    return {{"predicted_class", prediction.predicted_class},
            {"class_index", prediction.class_index},
            {"class_probabilities", prediction.class_probabilities},
            {"confidence", prediction.confidence}};
}

// ---------------------------------------------------------------------------

FeatureEncoder::FeatureEncoder(const Schema& schema) : schema_(schema), columns_(predictor_indices(schema)) {}

std::vector<double> FeatureEncoder::encode(const Row& row) const {
    // Rows may include the target cell (full schema width) or omit it.
    const bool full = row.size() == schema_.size();
    if (!full && row.size() != columns_.size()) {
        throw Error(ErrorCode::kSchemaMismatch, "row width does not match schema",
                    {{"width", row.size()}, {"expected", schema_.size()}});
    }
    std::vector<double> out(columns_.size());
    for (std::size_t f = 0; f < columns_.size(); ++f) {
        const std::size_t col = columns_[f];
        const auto& var = schema_[col];
        const Cell& cell = row[full ? col : f];
        if (var.is_continuous()) {
            const double* v = std::get_if<double>(&cell);
            if (v == nullptr || !std::isfinite(*v)) {
                throw Error(ErrorCode::kSchemaMismatch, "expected a number for '" + var.name + "'");
            }
            out[f] = *v;
        } else {
            const auto* s = std::get_if<std::string>(&cell);
            auto idx = s ? var.category_index(*s) : std::nullopt;
            if (!idx) throw Error(ErrorCode::kSchemaMismatch, "unknown category for '" + var.name + "'");
            out[f] = static_cast<double>(*idx);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

std::unique_ptr<GradientBoostedTrees> GradientBoostedTrees::fit(const std::vector<std::vector<double>>& features,
                                                                std::span<const std::size_t> labels,
                                                                std::size_t num_classes, const Hyperparameters& hyper) {
    const std::size_t n = features.size();
    if (n == 0 || labels.size() != n) throw Error(ErrorCode::kInvalidArgument, "empty or misaligned training data");
    if (num_classes < 2) throw Error(ErrorCode::kDegenerateTarget, "need at least two classes");
    const std::size_t d = features.front().size();

    auto model = std::unique_ptr<GradientBoostedTrees>(new GradientBoostedTrees());
    model->num_classes_ = num_classes;
    const std::size_t outputs = num_classes == 2 ? 1 : num_classes;

    std::vector<std::vector<double>> thresholds(d);
    std::vector<std::vector<std::uint16_t>> bins(d, std::vector<std::uint16_t>(n));
    for (std::size_t f = 0; f < d; ++f) {
        std::vector<double> column(n);
        for (std::size_t i = 0; i < n; ++i) column[i] = features[i][f];
        thresholds[f] = bin_thresholds(column, hyper.max_bins);
        for (std::size_t i = 0; i < n; ++i) {
            bins[f][i] = static_cast<std::uint16_t>(
                std::lower_bound(thresholds[f].begin(), thresholds[f].end(), column[i]) - thresholds[f].begin());
        }
    }

    std::vector<double> prior(num_classes, 0.0);
    for (std::size_t y : labels) prior[y] += 1.0;
    for (double& p : prior) p = std::clamp(p / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
    if (outputs == 1) {
        model->base_scores_ = {std::log(prior[1] / prior[0])};
    } else {
        for (double p : prior) model->base_scores_.push_back(std::log(p));
    }

    std::vector<std::vector<double>> scores(outputs, std::vector<double>(n));
    for (std::size_t k = 0; k < outputs; ++k) std::fill(scores[k].begin(), scores[k].end(), model->base_scores_[k]);

    std::vector<double> grad(n), hess(n);
    std::vector<std::vector<double>> probs(outputs, std::vector<double>(n));
    std::mt19937_64 rng(hyper.seed);
    std::vector<std::size_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
    const auto bag_size = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(hyper.bagging_fraction * static_cast<double>(n))));

    for (int round = 0; round < hyper.trees; ++round) {
        if (outputs == 1) {
            for (std::size_t i = 0; i < n; ++i) probs[0][i] = sigmoid(scores[0][i]);
        } else {
            std::vector<double> row(outputs);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t k = 0; k < outputs; ++k) row[k] = scores[k][i];
                softmax_inplace(row);
                for (std::size_t k = 0; k < outputs; ++k) probs[k][i] = row[k];
            }
        }
        std::vector<std::size_t> rows = all_rows;
        if (bag_size < n) {
            std::shuffle(rows.begin(), rows.end(), rng);
            rows.resize(bag_size);
            std::sort(rows.begin(), rows.end());
        }
        for (std::size_t k = 0; k < outputs; ++k) {
            const std::size_t positive = outputs == 1 ? 1 : k;
            for (std::size_t i = 0; i < n; ++i) {
                const double p = probs[k][i];
                grad[i] = p - (labels[i] == positive ? 1.0 : 0.0);
                hess[i] = std::max(p * (1.0 - p), 1e-16);
            }
            TreeBuilder builder(bins, thresholds, grad, hess, hyper);
            Tree tree = builder.build(rows);
            for (std::size_t i = 0; i < n; ++i) scores[k][i] += tree_output(tree, features[i]);
            model->trees_.push_back(std::move(tree));
        }
    }
    return model;
}

std::vector<double> GradientBoostedTrees::raw_scores(std::span<const double> features) const {
    const std::size_t outputs = base_scores_.size();
    std::vector<double> scores = base_scores_;
    for (std::size_t t = 0; t < trees_.size(); ++t) scores[t % outputs] += tree_output(trees_[t], features);
    return scores;
}

std::vector<double> GradientBoostedTrees::predict_proba(std::span<const double> features) const {
    std::vector<double> scores = raw_scores(features);
    if (num_classes_ == 2) {
        const double p = sigmoid(scores[0]);
        return {1.0 - p, p};
    }
    softmax_inplace(scores);
    return scores;
}

void GradientBoostedTrees::write(std::ostream& out) const {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(num_classes_));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(base_scores_.size()));
    for (double s : base_scores_) write_pod(out, s);
    write_pod<std::uint64_t>(out, trees_.size());
    for (const auto& tree : trees_) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(tree.size()));
        for (const auto& node : tree) {
            write_pod(out, node.feature);
            write_pod(out, node.threshold);
            write_pod(out, node.left);
            write_pod(out, node.right);
            write_pod(out, node.value);
        }
    }
}

std::unique_ptr<GradientBoostedTrees> GradientBoostedTrees::read(std::istream& in) {
    auto model = std::unique_ptr<GradientBoostedTrees>(new GradientBoostedTrees());
    model->num_classes_ = read_pod<std::uint32_t>(in);
    const auto outputs = read_pod<std::uint32_t>(in);
    if (model->num_classes_ < 2 || outputs != (model->num_classes_ == 2 ? 1u : model->num_classes_)) {
        throw Error(ErrorCode::kCorruptFile, "inconsistent class count in model file");
    }
    for (std::uint32_t k = 0; k < outputs; ++k) model->base_scores_.push_back(read_pod<double>(in));
    const auto tree_count = read_pod<std::uint64_t>(in);
    for (std::uint64_t t = 0; t < tree_count; ++t) {
        const auto size = read_pod<std::uint32_t>(in);
        Tree tree(size);
        for (auto& node : tree) {
            node.feature = read_pod<std::int32_t>(in);
            node.threshold = read_pod<double>(in);
            node.left = read_pod<std::int32_t>(in);
            node.right = read_pod<std::int32_t>(in);
            node.value = read_pod<double>(in);
            if (node.feature >= 0 && (node.left < 0 || node.right < 0 || static_cast<std::uint32_t>(node.left) >= size ||
                                      static_cast<std::uint32_t>(node.right) >= size)) {
                throw Error(ErrorCode::kCorruptFile, "dangling tree node in model file");
            }
        }
        if (tree.empty()) throw Error(ErrorCode::kCorruptFile, "empty tree in model file");
        model->trees_.push_back(std::move(tree));
    }
    return model;
}

// ---------------------------------------------------------------------------

bool ModelArtifact::fresh_for(const TabularDataset& dataset) const {
    return train_snapshot_hash == debias::train_snapshot_hash(dataset) && schema_digest == debias::schema_digest(dataset.schema());
}

void require_fresh(const ModelArtifact& model, const TabularDataset& dataset) {
    if (!model.fresh_for(dataset)) {
        throw Error(ErrorCode::kModelStale, "model was trained on a different train snapshot",
                    {{"model_snapshot", hex_digest(model.train_snapshot_hash)},
                     {"dataset_snapshot", hex_digest(train_snapshot_hash(dataset))}});
    }
}

ModelArtifact train(const TabularDataset& dataset, const Hyperparameters& hyper) {
    if (!dataset.is_split()) throw Error(ErrorCode::kInvalidArgument, "dataset must be split before training");
    const auto train_idx = dataset.indices_with(SplitTag::kTrain);
    const auto heldout_idx = dataset.indices_with(SplitTag::kHeldout);
    {
        std::unordered_set<RowId> heldout_ids;
        for (std::size_t i : heldout_idx) heldout_ids.insert(dataset.row_ids()[i]);
        for (std::size_t i : train_idx) {
            if (heldout_ids.count(dataset.row_ids()[i])) {
                throw Error(ErrorCode::kLeakageViolation, "train row id also present in heldout",
                            {{"row_id", dataset.row_ids()[i]}});
            }
        }
    }
    if (train_idx.size() < 2) throw Error(ErrorCode::kTooFewRows, "need at least two train rows");

    const std::size_t tcol = dataset.target_column();
    const auto& target = dataset.schema()[tcol];
    ModelArtifact artifact;
    artifact.schema = dataset.schema();
    artifact.encoder = FeatureEncoder(dataset.schema());
    artifact.classes = target.categories;
    artifact.hyperparameters = hyper;
    artifact.train_snapshot_hash = train_snapshot_hash(dataset);
    artifact.schema_digest = schema_digest(dataset.schema());

    std::vector<std::vector<double>> features;
    std::vector<std::size_t> labels;
    features.reserve(train_idx.size());
    std::vector<bool> present(target.categories.size(), false);
    for (std::size_t i : train_idx) {
        features.push_back(artifact.encoder.encode(dataset.rows()[i]));
        labels.push_back(*target.category_index(std::get<std::string>(dataset.rows()[i][tcol])));
        present[labels.back()] = true;
    }
    if (std::count(present.begin(), present.end(), true) < 2) {
        throw Error(ErrorCode::kDegenerateTarget, "train rows contain a single target class");
    }
    artifact.classifier = GradientBoostedTrees::fit(features, labels, target.categories.size(), hyper);

    for (std::size_t i : heldout_idx) {
        const auto p = predict(artifact, dataset.rows()[i]);
        ++artifact.heldout.total;
        if (p.predicted_class == std::get<std::string>(dataset.rows()[i][tcol])) ++artifact.heldout.correct;
    }
    return artifact;
}

Prediction predict(const ModelArtifact& model, const Row& row) {
    if (!model.classifier) throw Error(ErrorCode::kInvalidArgument, "model is not trained");
    const auto features = model.encoder.encode(row);
    return make_prediction(model.classifier->predict_proba(features), model.classes);
}

std::vector<SegmentAccuracy> segment_accuracy(const ModelArtifact& model, const TabularDataset& dataset,
                                              std::string_view variable) {
    require_fresh(model, dataset);
    const auto col = column_index(dataset.schema(), variable);
    if (!col || dataset.schema()[*col].role != VariableRole::kPredictor) {
        throw Error(ErrorCode::kSchemaMismatch, "unknown predictor '" + std::string(variable) + "'");
    }
    const auto& var = dataset.schema()[*col];
    const std::size_t tcol = dataset.target_column();
    std::vector<SegmentAccuracy> out;
    for (auto& seg : segments(var)) {
        SegmentAccuracy acc{std::move(seg), {}, {}};
        for (const auto& cls : model.classes) acc.by_outcome[cls] = {};
        out.push_back(std::move(acc));
    }
    for (std::size_t i : dataset.indices_with(SplitTag::kHeldout)) {
        const Row& row = dataset.rows()[i];
        auto& cell = out[segment_index(row[*col], var)];
        const auto& truth = std::get<std::string>(row[tcol]);
        const bool correct = predict(model, row).predicted_class == truth;
        auto& outcome = cell.by_outcome[truth];
        ++outcome.total;
        ++cell.overall.total;
        if (correct) {
            ++outcome.correct;
            ++cell.overall.correct;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

void save_model(const ModelArtifact& model, std::ostream& out) {
    if (!model.classifier) throw Error(ErrorCode::kInvalidArgument, "cannot save an untrained model");
    out.write(kModelMagic, sizeof(kModelMagic));
    write_pod(out, kModelFormatVersion);
    write_pod(out, model.schema_digest);
    write_string(out, schema_to_json(model.schema).dump());
    write_string(out, json(model.classes).dump());
    write_string(out, to_json(model.hyperparameters).dump());
    write_pod(out, model.train_snapshot_hash);
    write_pod<std::uint64_t>(out, model.heldout.correct);
    write_pod<std::uint64_t>(out, model.heldout.total);
    write_string(out, std::string(model.classifier->kind()));
    model.classifier->write(out);
}

ModelArtifact load_model(std::istream& in, const Schema& schema) {
    char magic[sizeof(kModelMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
        throw Error(ErrorCode::kCorruptFile, "not a model file");
    }
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kModelFormatVersion) {
        throw Error(ErrorCode::kCorruptFile, "unsupported model format version", {{"version", version}});
    }
    ModelArtifact model;
    model.schema_digest = read_pod<std::uint64_t>(in);
    if (model.schema_digest != schema_digest(schema)) {
        throw Error(ErrorCode::kSchemaMismatch, "model was trained against a different schema",
                    {{"model_schema", hex_digest(model.schema_digest)}, {"schema", hex_digest(schema_digest(schema))}});
    }
    try {
        model.schema = schema_from_json(json::parse(read_string(in)));
        model.classes = json::parse(read_string(in)).get<std::vector<std::string>>();
        model.hyperparameters = hyperparameters_from_json(json::parse(read_string(in)));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::kCorruptFile, std::string("malformed model header: ") + e.what());
    }
    if (model.schema != schema) throw Error(ErrorCode::kSchemaMismatch, "embedded schema differs");
    model.encoder = FeatureEncoder(model.schema);
    model.train_snapshot_hash = read_pod<std::uint64_t>(in);
    model.heldout.correct = read_pod<std::uint64_t>(in);
    model.heldout.total = read_pod<std::uint64_t>(in);
    const std::string kind = read_string(in);
    if (kind != "gbdt") throw Error(ErrorCode::kCorruptFile, "unknown learner kind '" + kind + "'");
    model.classifier = GradientBoostedTrees::read(in);
    return model;
}

std::string model_bytes(const ModelArtifact& model) {
    std::ostringstream out(std::ios::binary);
    save_model(model, out);
    return std::move(out).str();
}

ModelArtifact model_from_bytes(const std::string& bytes, const Schema& schema) {
    std::istringstream in(bytes, std::ios::binary);
    return load_model(in, schema);
}

std::uint64_t model_digest(const ModelArtifact& model) { return fnv1a(model_bytes(model)); }

}  // namespace debias
