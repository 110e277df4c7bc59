#pragma once

// Gradient-boosted regression trees with squared-error loss on log1p targets.
//
// Training partitions rows into n_folds contiguous time blocks per meter and
// boosts one ensemble per fold on the remaining blocks. Each tree is grown
// leaf-wise on quantile-binned features; a split maximizes the reduction in
// squared error
//
//     gain = S_L^2 / n_L + S_R^2 / n_R - S^2 / n
//
// where S are residual sums. Missing values follow a learned direction.
// Prediction averages the fold ensembles in log space and maps back with
// expm1.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "trendproxy/features.hpp"

namespace trendproxy::gbdt {

struct GbdtParams {
    int n_trees = 500;
    double learning_rate = 0.05;
    int max_leaves = 31;
    int min_samples_leaf = 20;
    double feature_fraction = 0.9;
    double row_fraction = 0.9;
    int n_bins = 255;
    std::uint64_t seed = 42;
    int n_folds = 3;

    // Throws ConfigError naming the offending field.
    void validate() const;
    bool operator==(const GbdtParams&) const = default;
};

// Equal-frequency bins for one feature, fitted on training rows. Numeric bin
// b holds values in (thresholds[b-1], thresholds[b]]; the last value bin is
// unbounded above. Missing values (NaN, negative categorical codes, and
// categories outside the fitted set) use bin value_bins.
struct FeatureBinning {
    features::FeatureKind kind = features::FeatureKind::Numeric;
    std::vector<double> thresholds;
    std::vector<int> bin_categories;  // categorical: category code of each value bin
    std::uint16_t value_bins = 0;

    std::uint16_t missing_bin() const { return value_bins; }
    std::uint16_t bin_of(double x) const;
};

FeatureBinning fit_binning(std::span<const double> values, features::FeatureKind kind, int n_bins);

// Row-major bin codes for a set of rows.
struct BinnedData {
    std::size_t rows = 0;
    std::size_t features = 0;
    std::vector<FeatureBinning> binnings;
    std::vector<std::uint16_t> codes;  // rows x features

    std::uint16_t code(std::size_t row, std::size_t feature) const { return codes[row * features + feature]; }
};

// Fits bins on `rows` of the matrix and bins those same rows (row i of the
// result is matrix row rows[i]).
BinnedData bin_rows(const features::FeatureMatrix& matrix, std::span<const std::uint32_t> rows, int n_bins);

struct SplitCandidate {
    bool valid = false;
    double gain = 0.0;
    int feature = -1;
    int threshold_bin = -1;                // numeric: value bins <= threshold_bin go left
    std::vector<std::uint16_t> left_bins;  // categorical: value bins going left (sorted)
    bool missing_left = false;
    std::size_t left_count = 0;
    std::size_t right_count = 0;
    double left_sum = 0.0;
    double right_sum = 0.0;
};

// Best split of the node holding `node_rows` (indices into `data`) over the
// candidate `features`, for residuals `gradients` (indexed like `data` rows).
// Ties keep the lowest feature index, then the lowest threshold. Returns an
// invalid candidate when no split leaves min_samples_leaf rows on both sides
// with positive gain.
SplitCandidate find_best_split(const BinnedData& data, std::span<const std::uint32_t> node_rows,
                               std::span<const double> gradients, std::span<const int> features,
                               int min_samples_leaf);

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::vector<int> left_categories;   // sorted category codes
    std::vector<int> right_categories;  // sorted; codes in neither set follow missing_left
    bool missing_left = false;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf mean residual (before learning-rate shrinkage)

    bool is_leaf() const { return feature < 0; }
    bool operator==(const TreeNode&) const = default;
};

class RegressionTree {
public:
    RegressionTree() = default;
    explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    std::size_t leaf_count() const;
    // Index of the leaf reached by a row given as one value per feature.
    int route(std::span<const double> row) const;
    double predict(std::span<const double> row) const { return nodes_[static_cast<std::size_t>(route(row))].value; }
    bool operator==(const RegressionTree&) const = default;

private:
    std::vector<TreeNode> nodes_;
};

struct FoldEnsemble {
    double base_score = 0.0;
    std::vector<RegressionTree> trees;
    bool operator==(const FoldEnsemble&) const = default;
};

struct TrainingMeta {
    std::string data_hash;
    std::uint64_t seed = 0;
    std::size_t rows = 0;
    bool constant_target = false;
    bool operator==(const TrainingMeta&) const = default;
};

struct ModelBundle {
    GbdtParams params;
    features::FeatureSchema schema;
    features::CategoryDictionary dictionary;
    std::vector<FoldEnsemble> folds;
    TrainingMeta meta;

    bool operator==(const ModelBundle&) const = default;
};

struct TrainTrace {
    // fold_train_rmse[k][t]: log-space RMSE on fold k's training rows after t
    // trees (t = 0 is the base score alone).
    std::vector<std::vector<double>> fold_train_rmse;
};

// Fold index of each row: contiguous time blocks per meter.
std::vector<int> assign_folds(const features::FeatureMatrix& matrix, int n_folds);

// `matrix` must be encoded. Throws DataError on empty input or length mismatch.
ModelBundle train(const features::FeatureMatrix& matrix, const features::TargetVector& target,
                  const GbdtParams& params, const features::CategoryDictionary& dictionary,
                  TrainTrace* trace = nullptr);

// Log-space prediction: mean over folds of base_score + sum(lr * tree(x)).
std::vector<double> predict_log(const ModelBundle& bundle, const features::FeatureMatrix& matrix);
// kWh: expm1 of predict_log, clipped below at 0.
std::vector<double> predict(const ModelBundle& bundle, const features::FeatureMatrix& matrix);

// Versioned text format; doubles use shortest round-trip notation so a
// save/load cycle reproduces the bundle exactly.
void save_bundle(const ModelBundle& bundle, std::ostream& out);
void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(std::istream& in);
ModelBundle load_bundle(const std::filesystem::path& path);
std::string serialize_bundle(const ModelBundle& bundle);

}  // namespace trendproxy::gbdt
