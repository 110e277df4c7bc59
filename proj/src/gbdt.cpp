#include "trendproxy/gbdt.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "trendproxy/csv.hpp"
#include "trendproxy/hashing.hpp"
#include "trendproxy/kernels.hpp"

namespace trendproxy::gbdt {

using features::FeatureKind;
using features::FeatureMatrix;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::string_view kFormatMagic = "trendproxy-gbdt";
constexpr int kFormatVersion = 1;

double midpoint_between(double a, double b) {
    double m = a + (b - a) / 2.0;
    if (!(m < b) || !(m >= a)) m = a;
    return m;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

bool is_missing_category(double x) { return std::isnan(x) || x < 0.0; }

}  // namespace

void GbdtParams::validate() const {
    auto fail = [](std::string_view what) { throw ConfigError(fmt::format("invalid gbdt parameter: {}", what)); };
    if (n_trees < 0) fail("n_trees must be >= 0");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) fail("learning_rate must be in (0, 1]");
    if (max_leaves < 2) fail("max_leaves must be >= 2");
    if (min_samples_leaf < 1) fail("min_samples_leaf must be >= 1");
    if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) fail("feature_fraction must be in (0, 1]");
    if (!(row_fraction > 0.0 && row_fraction <= 1.0)) fail("row_fraction must be in (0, 1]");
    if (n_bins < 2 || n_bins > 1024) fail("n_bins must be in [2, 1024]");
    if (n_folds < 2) fail("n_folds must be >= 2");
}

std::uint16_t FeatureBinning::bin_of(double x) const {
    if (kind == FeatureKind::Numeric) {
        if (std::isnan(x) || value_bins == 0) return missing_bin();
        auto it = std::lower_bound(thresholds.begin(), thresholds.end(), x);
        return static_cast<std::uint16_t>(it - thresholds.begin());
    }
    if (is_missing_category(x)) return missing_bin();
    const int code = static_cast<int>(x);
    auto it = std::lower_bound(bin_categories.begin(), bin_categories.end(), code);
    if (it == bin_categories.end() || *it != code) return missing_bin();
    return static_cast<std::uint16_t>(it - bin_categories.begin());
}

FeatureBinning fit_binning(std::span<const double> values, FeatureKind kind, int n_bins) {
    FeatureBinning b;
    b.kind = kind;
    if (kind == FeatureKind::Categorical) {
        std::map<int, std::size_t> counts;
        for (double x : values) {
            if (!is_missing_category(x)) ++counts[static_cast<int>(x)];
        }
        std::vector<std::pair<int, std::size_t>> ranked(counts.begin(), counts.end());
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& a, const auto& c) { return a.second > c.second; });
        if (ranked.size() > static_cast<std::size_t>(n_bins)) ranked.resize(static_cast<std::size_t>(n_bins));
        for (const auto& [code, _] : ranked) b.bin_categories.push_back(code);
        std::sort(b.bin_categories.begin(), b.bin_categories.end());
        b.value_bins = static_cast<std::uint16_t>(b.bin_categories.size());
        return b;
    }

    std::vector<double> sorted;
    sorted.reserve(values.size());
    for (double x : values) {
        if (!std::isnan(x)) sorted.push_back(x);
    }
    if (sorted.empty()) return b;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct;
    std::vector<std::size_t> counts;
    for (double x : sorted) {
        if (distinct.empty() || x != distinct.back()) {
            distinct.push_back(x);
            counts.push_back(1);
        } else {
            ++counts.back();
        }
    }
    const auto d = distinct.size();
    if (d <= static_cast<std::size_t>(n_bins)) {
        for (std::size_t i = 0; i + 1 < d; ++i) b.thresholds.push_back(midpoint_between(distinct[i], distinct[i + 1]));
    } else {
        const double total = static_cast<double>(sorted.size());
        std::size_t cumulative = 0;
        for (std::size_t i = 0; i + 1 < d; ++i) {
            cumulative += counts[i];
            const double boundary = total * static_cast<double>(b.thresholds.size() + 1) / n_bins;
            if (static_cast<double>(cumulative) >= boundary &&
                b.thresholds.size() + 1 < static_cast<std::size_t>(n_bins)) {
                b.thresholds.push_back(midpoint_between(distinct[i], distinct[i + 1]));
            }
        }
    }
    b.value_bins = static_cast<std::uint16_t>(b.thresholds.size() + 1);
    return b;
}

BinnedData bin_rows(const FeatureMatrix& matrix, std::span<const std::uint32_t> rows, int n_bins) {
    BinnedData out;
    out.rows = rows.size();
    out.features = matrix.width();
    out.binnings.resize(out.features);
    out.codes.resize(out.rows * out.features);
    std::vector<double> values(rows.size());
    for (std::size_t f = 0; f < out.features; ++f) {
        const auto& col = matrix.columns[f];
        for (std::size_t i = 0; i < rows.size(); ++i) values[i] = col[rows[i]];
        out.binnings[f] = fit_binning(values, matrix.schema.features[f].kind, n_bins);
        const auto& binning = out.binnings[f];
        for (std::size_t i = 0; i < rows.size(); ++i) out.codes[i * out.features + f] = binning.bin_of(values[i]);
    }
    return out;
}

namespace {

// Per-node gradient histogram over all features (bins + missing bin each).
struct Histogram {
    std::vector<double> sum;
    std::vector<std::uint32_t> count;
};

struct HistogramLayout {
    std::vector<std::size_t> offset;  // per feature, size features + 1
    explicit HistogramLayout(const BinnedData& data) : offset(data.features + 1, 0) {
        for (std::size_t f = 0; f < data.features; ++f) {
            offset[f + 1] = offset[f] + data.binnings[f].value_bins + 1u;
        }
    }
    std::size_t size() const { return offset.back(); }
};

Histogram build_histogram(const BinnedData& data, const HistogramLayout& layout, std::span<const std::uint32_t> rows,
                          std::span<const double> gradients, std::span<const int> features) {
    Histogram h{std::vector<double>(layout.size(), 0.0), std::vector<std::uint32_t>(layout.size(), 0)};
    const std::size_t F = data.features;
    for (auto r : rows) {
        const std::uint16_t* codes = data.codes.data() + static_cast<std::size_t>(r) * F;
        const double g = gradients[r];
        for (int f : features) {
            const auto idx = layout.offset[static_cast<std::size_t>(f)] + codes[f];
            h.sum[idx] += g;
            ++h.count[idx];
        }
    }
    return h;
}

struct NodeTotals {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t count = 0;
};

NodeTotals totals_of(std::span<const std::uint32_t> rows, std::span<const double> gradients) {
    NodeTotals t;
    for (auto r : rows) {
        t.sum += gradients[r];
        t.sum_sq += gradients[r] * gradients[r];
    }
    t.count = rows.size();
    return t;
}

class SplitSearch {
public:
    SplitSearch(const NodeTotals& totals, int min_samples_leaf)
        : total_(totals), min_leaf_(static_cast<std::size_t>(std::max(1, min_samples_leaf))) {
        best_.gain = std::max(0.0, 1e-10 * totals.sum_sq);
        parent_term_ = totals.count ? totals.sum * totals.sum / static_cast<double>(totals.count) : 0.0;
    }

    void scan_feature(int f, const FeatureBinning& binning, const double* sum, const std::uint32_t* count) {
        const std::size_t vb = binning.value_bins;
        const double miss_sum = sum[vb];
        const std::size_t miss_n = count[vb];

        // Order in which value bins are swept left to right.
        std::vector<std::uint16_t> order;
        if (binning.kind == FeatureKind::Numeric) {
            order.resize(vb);
            std::iota(order.begin(), order.end(), std::uint16_t{0});
        } else {
            for (std::uint16_t b = 0; b < vb; ++b) {
                if (count[b]) order.push_back(b);
            }
            std::stable_sort(order.begin(), order.end(), [&](std::uint16_t a, std::uint16_t b) {
                return sum[a] / count[a] < sum[b] / count[b];
            });
        }

        double left_sum = 0.0;
        std::size_t left_n = 0;
        for (std::size_t k = 0; k < order.size(); ++k) {
            left_sum += sum[order[k]];
            left_n += count[order[k]];
            const bool last = k + 1 == order.size();
            if (!last) {
                if (miss_n) {
                    consider(f, binning, order, k, left_n + miss_n, left_sum + miss_sum, true);
                    consider(f, binning, order, k, left_n, left_sum, false);
                } else {
                    consider(f, binning, order, k, left_n, left_sum, left_n >= total_.count - left_n);
                }
            } else if (miss_n) {
                consider(f, binning, order, k, left_n, left_sum, false);
            }
        }
    }

    SplitCandidate result() && {
        if (!best_.valid) return SplitCandidate{};
        return std::move(best_);
    }

private:
    void consider(int f, const FeatureBinning& binning, const std::vector<std::uint16_t>& order, std::size_t k,
                  std::size_t nl, double sl, bool missing_left) {
        const std::size_t nr = total_.count - nl;
        if (nl < min_leaf_ || nr < min_leaf_) return;
        const double sr = total_.sum - sl;
        const double gain = sl * sl / static_cast<double>(nl) + sr * sr / static_cast<double>(nr) - parent_term_;
        if (!(gain > best_.gain)) return;
        best_.valid = true;
        best_.gain = gain;
        best_.feature = f;
        best_.missing_left = missing_left;
        best_.left_count = nl;
        best_.right_count = nr;
        best_.left_sum = sl;
        best_.right_sum = sr;
        if (binning.kind == FeatureKind::Numeric) {
            best_.threshold_bin = static_cast<int>(k);
            best_.left_bins.clear();
        } else {
            best_.threshold_bin = static_cast<int>(k);
            best_.left_bins.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k + 1));
            std::sort(best_.left_bins.begin(), best_.left_bins.end());
        }
    }

    NodeTotals total_;
    std::size_t min_leaf_;
    double parent_term_ = 0.0;
    SplitCandidate best_;
};

SplitCandidate best_split_from_histogram(const BinnedData& data, const HistogramLayout& layout, const Histogram& h,
                                         const NodeTotals& totals, std::span<const int> features,
                                         int min_samples_leaf) {
    if (totals.count < 2 * static_cast<std::size_t>(std::max(1, min_samples_leaf))) return {};
    SplitSearch search(totals, min_samples_leaf);
    for (int f : features) {
        const auto off = layout.offset[static_cast<std::size_t>(f)];
        search.scan_feature(f, data.binnings[static_cast<std::size_t>(f)], h.sum.data() + off, h.count.data() + off);
    }
    return std::move(search).result();
}

bool goes_left(const BinnedData& data, const SplitCandidate& split, std::uint32_t row) {
    const auto f = static_cast<std::size_t>(split.feature);
    const auto code = data.code(row, f);
    const auto& binning = data.binnings[f];
    if (code == binning.missing_bin()) return split.missing_left;
    if (binning.kind == FeatureKind::Numeric) return code <= split.threshold_bin;
    return std::binary_search(split.left_bins.begin(), split.left_bins.end(), code);
}

}  // namespace

SplitCandidate find_best_split(const BinnedData& data, std::span<const std::uint32_t> node_rows,
                               std::span<const double> gradients, std::span<const int> features,
                               int min_samples_leaf) {
    HistogramLayout layout(data);
    auto h = build_histogram(data, layout, node_rows, gradients, features);
    return best_split_from_histogram(data, layout, h, totals_of(node_rows, gradients), features, min_samples_leaf);
}

std::size_t RegressionTree::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int RegressionTree::route(std::span<const double> row) const {
    int i = 0;
    for (;;) {
        const auto& n = nodes_[static_cast<std::size_t>(i)];
        if (n.is_leaf()) return i;
        const double x = row[static_cast<std::size_t>(n.feature)];
        bool left;
        if (n.left_categories.empty() && n.right_categories.empty()) {
            left = std::isnan(x) ? n.missing_left : x <= n.threshold;
        } else if (is_missing_category(x)) {
            left = n.missing_left;
        } else {
            const int code = static_cast<int>(x);
            if (std::binary_search(n.left_categories.begin(), n.left_categories.end(), code)) {
                left = true;
            } else if (std::binary_search(n.right_categories.begin(), n.right_categories.end(), code)) {
                left = false;
            } else {
                left = n.missing_left;
            }
        }
        i = left ? n.left : n.right;
    }
}

std::vector<int> assign_folds(const FeatureMatrix& matrix, int n_folds) {
    std::vector<int> fold(matrix.row_count(), 0);
    std::map<std::uint32_t, std::vector<std::uint32_t>> per_meter;
    for (std::uint32_t r = 0; r < matrix.row_count(); ++r) per_meter[matrix.rows[r].meter].push_back(r);
    for (auto& [_, rows] : per_meter) {
        std::stable_sort(rows.begin(), rows.end(), [&](std::uint32_t a, std::uint32_t b) {
            return matrix.rows[a].timestamp < matrix.rows[b].timestamp;
        });
        const std::size_t n = rows.size();
        for (std::size_t i = 0; i < n; ++i) {
            fold[rows[i]] = static_cast<int>(i * static_cast<std::size_t>(n_folds) / n);
        }
    }
    return fold;
}

namespace {

std::string data_hash(const FeatureMatrix& matrix, const features::TargetVector& target) {
    Sha256 h;
    for (const auto& f : matrix.schema.features) h.update(f.name).update(std::string_view("\0", 1));
    for (const auto& col : matrix.columns) h.update_pod(std::span<const double>(col));
    h.update_pod(std::span<const double>(target));
    return h.hex();
}

// Grows one tree on the in-bag rows; returns the tree and leaves it indexed
// by binned routing for the out-of-bag update.
struct GrownTree {
    RegressionTree tree;
    std::vector<SplitCandidate> splits;  // per node; invalid for leaves
};

GrownTree grow_tree(const BinnedData& data, const HistogramLayout& layout, std::span<const std::uint32_t> bag,
                    std::span<const double> gradients, std::span<const int> features, const GbdtParams& params) {
    struct Leaf {
        int node;
        std::vector<std::uint32_t> rows;
        Histogram hist;
        NodeTotals totals;
        SplitCandidate best;
    };
    std::vector<TreeNode> nodes(1);
    std::vector<SplitCandidate> splits(1);
    std::vector<Leaf> leaves;
    {
        Leaf root;
        root.node = 0;
        root.rows.assign(bag.begin(), bag.end());
        root.hist = build_histogram(data, layout, root.rows, gradients, features);
        root.totals = totals_of(root.rows, gradients);
        root.best = best_split_from_histogram(data, layout, root.hist, root.totals, features, params.min_samples_leaf);
        leaves.push_back(std::move(root));
    }

    while (static_cast<int>(leaves.size()) < params.max_leaves) {
        int pick = -1;
        for (std::size_t i = 0; i < leaves.size(); ++i) {
            if (!leaves[i].best.valid) continue;
            if (pick < 0 || leaves[i].best.gain > leaves[static_cast<std::size_t>(pick)].best.gain) {
                pick = static_cast<int>(i);
            }
        }
        if (pick < 0) break;
        Leaf parent = std::move(leaves[static_cast<std::size_t>(pick)]);
        const auto& split = parent.best;

        Leaf left, right;
        for (auto r : parent.rows) (goes_left(data, split, r) ? left.rows : right.rows).push_back(r);
        left.totals = totals_of(left.rows, gradients);
        right.totals = totals_of(right.rows, gradients);

        Leaf& small = left.rows.size() <= right.rows.size() ? left : right;
        Leaf& large = left.rows.size() <= right.rows.size() ? right : left;
        small.hist = build_histogram(data, layout, small.rows, gradients, features);
        large.hist = std::move(parent.hist);
        for (std::size_t i = 0; i < large.hist.sum.size(); ++i) {
            large.hist.sum[i] -= small.hist.sum[i];
            large.hist.count[i] -= small.hist.count[i];
        }

        auto& node = nodes[static_cast<std::size_t>(parent.node)];
        const auto f = static_cast<std::size_t>(split.feature);
        const auto& binning = data.binnings[f];
        node.feature = split.feature;
        node.missing_left = split.missing_left;
        if (binning.kind == FeatureKind::Numeric) {
            const auto t = static_cast<std::size_t>(split.threshold_bin);
            node.threshold = t < binning.thresholds.size() ? binning.thresholds[t] : kInf;
        } else {
            const auto off = layout.offset[f];
            for (std::uint16_t b = 0; b < binning.value_bins; ++b) {
                const bool in_left = std::binary_search(split.left_bins.begin(), split.left_bins.end(), b);
                const bool present = small.hist.count[off + b] + large.hist.count[off + b] > 0;
                if (in_left) {
                    node.left_categories.push_back(binning.bin_categories[b]);
                } else if (present) {
                    node.right_categories.push_back(binning.bin_categories[b]);
                }
            }
        }
        node.left = static_cast<int>(nodes.size());
        node.right = node.left + 1;
        splits[static_cast<std::size_t>(parent.node)] = split;
        left.node = node.left;
        right.node = node.right;
        nodes.emplace_back();
        nodes.emplace_back();
        splits.emplace_back();
        splits.emplace_back();

        left.best = best_split_from_histogram(data, layout, left.hist, left.totals, features, params.min_samples_leaf);
        right.best = best_split_from_histogram(data, layout, right.hist, right.totals, features, params.min_samples_leaf);
        leaves[static_cast<std::size_t>(pick)] = std::move(left);
        leaves.push_back(std::move(right));
    }

    for (const auto& leaf : leaves) {
        auto& node = nodes[static_cast<std::size_t>(leaf.node)];
        node.value = leaf.totals.count ? leaf.totals.sum / static_cast<double>(leaf.totals.count) : 0.0;
    }
    return {RegressionTree(std::move(nodes)), std::move(splits)};
}

int route_binned(const GrownTree& grown, const BinnedData& data, std::uint32_t row) {
    const auto& nodes = grown.tree.nodes();
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
        const auto& n = nodes[static_cast<std::size_t>(i)];
        i = goes_left(data, grown.splits[static_cast<std::size_t>(i)], row) ? n.left : n.right;
    }
    return i;
}

FoldEnsemble train_fold(const FeatureMatrix& matrix, const features::TargetVector& target,
                        std::span<const std::uint32_t> fold_rows, const GbdtParams& params, int fold,
                        std::vector<double>* trace) {
    FoldEnsemble ens;
    const std::size_t n = fold_rows.size();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = target[fold_rows[i]];
    ens.base_score = kernels::sum(y) / static_cast<double>(n);

    std::vector<double> F(n, ens.base_score);
    auto record = [&] {
        if (trace) trace->push_back(std::sqrt(kernels::sum_sq_diff(y, F) / static_cast<double>(n)));
    };
    record();
    const bool constant = std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); });
    if (constant || params.n_trees == 0) return ens;

    const auto data = bin_rows(matrix, fold_rows, params.n_bins);
    const HistogramLayout layout(data);
    std::mt19937_64 rng(params.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(fold + 1)));
    const int n_features = static_cast<int>(data.features);
    const int k_features =
        std::clamp(static_cast<int>(std::lround(params.feature_fraction * n_features)), 1, n_features);

    std::vector<double> gradients(n);
    std::vector<std::uint32_t> bag;
    std::vector<std::uint8_t> in_bag(n);
    std::vector<int> perm(static_cast<std::size_t>(n_features));
    for (int t = 0; t < params.n_trees; ++t) {
        for (std::size_t i = 0; i < n; ++i) gradients[i] = y[i] - F[i];

        std::iota(perm.begin(), perm.end(), 0);
        if (k_features < n_features) {
            for (int i = 0; i < k_features; ++i) {
                auto j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(n_features - i));
                std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
            }
        }
        std::vector<int> feats(perm.begin(), perm.begin() + k_features);
        std::sort(feats.begin(), feats.end());

        bag.clear();
        if (params.row_fraction < 1.0) {
            for (std::uint32_t i = 0; i < n; ++i) {
                in_bag[i] = uniform01(rng) < params.row_fraction ? 1 : 0;
                if (in_bag[i]) bag.push_back(i);
            }
            if (bag.empty()) {
                bag.push_back(0);
                in_bag[0] = 1;
            }
        } else {
            bag.resize(n);
            std::iota(bag.begin(), bag.end(), 0u);
            std::fill(in_bag.begin(), in_bag.end(), std::uint8_t{1});
        }

        auto grown = grow_tree(data, layout, bag, gradients, feats, params);
        const auto& nodes = grown.tree.nodes();
        for (std::uint32_t i = 0; i < n; ++i) {
            const int leaf = route_binned(grown, data, i);
            F[i] += params.learning_rate * nodes[static_cast<std::size_t>(leaf)].value;
        }
        ens.trees.push_back(std::move(grown.tree));
        record();
    }
    return ens;
}

}  // namespace

ModelBundle train(const FeatureMatrix& matrix, const features::TargetVector& target, const GbdtParams& params,
                  const features::CategoryDictionary& dictionary, TrainTrace* trace) {
    params.validate();
    if (matrix.row_count() == 0) throw DataError("train: empty feature matrix");
    if (target.size() != matrix.row_count()) throw DataError("train: target length differs from row count");
    if (!matrix.encoded()) throw DataError("train: categorical columns must be encoded first");
    if (matrix.row_count() < static_cast<std::size_t>(params.n_folds)) {
        throw DataError(fmt::format("train: {} rows cannot form {} folds", matrix.row_count(), params.n_folds));
    }

    ModelBundle bundle;
    bundle.params = params;
    bundle.schema = matrix.schema;
    bundle.dictionary = dictionary;
    bundle.meta.data_hash = data_hash(matrix, target);
    bundle.meta.seed = params.seed;
    bundle.meta.rows = matrix.row_count();
    bundle.meta.constant_target =
        std::all_of(target.begin(), target.end(), [&](double v) { return v == target.front(); });

    const auto fold_of = assign_folds(matrix, params.n_folds);
    std::vector<std::vector<std::uint32_t>> fold_rows(static_cast<std::size_t>(params.n_folds));
    for (std::uint32_t r = 0; r < matrix.row_count(); ++r) {
        for (int k = 0; k < params.n_folds; ++k) {
            if (fold_of[r] != k) fold_rows[static_cast<std::size_t>(k)].push_back(r);
        }
    }
    for (int k = 0; k < params.n_folds; ++k) {
        if (fold_rows[static_cast<std::size_t>(k)].empty()) {
            throw DataError(fmt::format("train: fold {} has no training rows", k));
        }
    }

    bundle.folds.resize(static_cast<std::size_t>(params.n_folds));
    std::vector<std::vector<double>> traces(static_cast<std::size_t>(params.n_folds));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(params.n_folds));
    std::vector<std::thread> workers;
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    auto run_fold = [&](int k) {
        auto ks = static_cast<std::size_t>(k);
        try {
            bundle.folds[ks] = train_fold(matrix, target, fold_rows[ks], params, k, trace ? &traces[ks] : nullptr);
        } catch (...) {
            errors[ks] = std::current_exception();
        }
    };
    if (hw > 1) {
        for (int k = 0; k < params.n_folds; ++k) workers.emplace_back(run_fold, k);
        for (auto& w : workers) w.join();
    } else {
        for (int k = 0; k < params.n_folds; ++k) run_fold(k);
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    if (trace) trace->fold_train_rmse = std::move(traces);
    return bundle;
}

namespace {

void check_schema(const ModelBundle& bundle, const FeatureMatrix& matrix) {
    if (!(bundle.schema == matrix.schema)) {
        throw DataError(fmt::format("schema mismatch: model expects {} features, matrix has {}", bundle.schema.width(),
                                    matrix.width()));
    }
    if (!matrix.encoded()) throw DataError("predict: categorical columns must be encoded first");
}

}  // namespace

namespace {

// Numeric-only view of a tree for column-wise batch routing. Categorical
// nodes keep a pointer back to the full node.
struct FlatNode {
    int feature;
    int left;
    int right;
    bool missing_left;
    const TreeNode* categorical;
    double threshold;
};

bool goes_left(const TreeNode& n, double x) {
    if (is_missing_category(x)) return n.missing_left;
    const int code = static_cast<int>(x);
    if (std::binary_search(n.left_categories.begin(), n.left_categories.end(), code)) return true;
    if (std::binary_search(n.right_categories.begin(), n.right_categories.end(), code)) return false;
    return n.missing_left;
}

}  // namespace

std::vector<double> predict_log(const ModelBundle& bundle, const FeatureMatrix& matrix) {
    check_schema(bundle, matrix);
    const std::size_t n = matrix.row_count();
    std::vector<double> out(n, 0.0);
    std::vector<double> acc(n);
    std::vector<FlatNode> flat;
    std::vector<const double*> cols(matrix.width());
    for (std::size_t f = 0; f < cols.size(); ++f) cols[f] = matrix.columns[f].data();
    const double lr = bundle.params.learning_rate;
    const double inv_folds = 1.0 / static_cast<double>(bundle.folds.size());

    // Tree-major order keeps one tree hot in cache; per row the additions
    // happen in the same order as a row-major walk.
    for (const auto& fold : bundle.folds) {
        std::fill(acc.begin(), acc.end(), fold.base_score);
        for (const auto& tree : fold.trees) {
            const auto& nodes = tree.nodes();
            flat.clear();
            for (const auto& nd : nodes) {
                const bool cat = !nd.left_categories.empty() || !nd.right_categories.empty();
                flat.push_back({nd.feature, nd.left, nd.right, nd.missing_left, cat ? &nd : nullptr, nd.threshold});
            }
            for (std::size_t r = 0; r < n; ++r) {
                int i = 0;
                while (flat[static_cast<std::size_t>(i)].feature >= 0) {
                    const auto& fn = flat[static_cast<std::size_t>(i)];
                    const double x = cols[static_cast<std::size_t>(fn.feature)][r];
                    bool left;
                    if (fn.categorical) {
                        left = goes_left(*fn.categorical, x);
                    } else {
                        left = std::isnan(x) ? fn.missing_left : x <= fn.threshold;
                    }
                    i = left ? fn.left : fn.right;
                }
                acc[r] += lr * nodes[static_cast<std::size_t>(i)].value;
            }
        }
        for (std::size_t r = 0; r < n; ++r) out[r] += acc[r];
    }
    for (auto& v : out) v *= inv_folds;
    return out;
}

std::vector<double> predict(const ModelBundle& bundle, const FeatureMatrix& matrix) {
    auto out = predict_log(bundle, matrix);
    for (auto& v : out) v = std::max(0.0, std::expm1(v));
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::string fmt_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return csv::format_double(v);
}

double parse_double_token(std::string_view s) {
    if (s == "nan") return kNaN;
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw DataError(fmt::format("model file: bad number '{}'", s));
    return v;
}

long long parse_int_token(std::string_view s) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw DataError(fmt::format("model file: bad integer '{}'", s));
    return v;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && line[i] == ' ') ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}
    std::string next() {
        std::string line;
        if (!std::getline(in_, line)) throw DataError("model file: unexpected end of file");
        ++line_no_;
        return line;
    }
    std::vector<std::string_view> tokens(std::string& storage, std::string_view expect) {
        storage = next();
        auto t = split_ws(storage);
        if (t.empty() || t[0] != expect) {
            throw DataError(fmt::format("model file line {}: expected '{}'", line_no_, expect));
        }
        return t;
    }

private:
    std::istream& in_;
    std::size_t line_no_ = 0;
};

std::string_view value_of(std::string_view token, std::string_view key) {
    if (token.size() <= key.size() || token.substr(0, key.size()) != key || token[key.size()] != '=') {
        throw DataError(fmt::format("model file: expected '{}=...', got '{}'", key, token));
    }
    return token.substr(key.size() + 1);
}

}  // namespace

void save_bundle(const ModelBundle& b, std::ostream& out) {
    const auto& p = b.params;
    out << kFormatMagic << ' ' << kFormatVersion << '\n';
    out << fmt::format("params n_trees={} learning_rate={} max_leaves={} min_samples_leaf={} feature_fraction={} "
                       "row_fraction={} n_bins={} seed={} n_folds={}\n",
                       p.n_trees, fmt_double(p.learning_rate), p.max_leaves, p.min_samples_leaf,
                       fmt_double(p.feature_fraction), fmt_double(p.row_fraction), p.n_bins, p.seed, p.n_folds);
    out << fmt::format("meta data_hash={} seed={} rows={} constant_target={}\n",
                       b.meta.data_hash.empty() ? "-" : b.meta.data_hash, b.meta.seed, b.meta.rows,
                       b.meta.constant_target ? 1 : 0);
    out << "features " << b.schema.width() << '\n';
    for (const auto& f : b.schema.features) {
        out << "feature " << features::to_string(f.kind) << ' ' << features::to_string(f.source) << ' ' << f.name << '\n';
    }
    out << "dictionary " << b.dictionary.columns.size() << '\n';
    for (std::size_t c = 0; c < b.dictionary.columns.size(); ++c) {
        out << "column " << c << ' ' << b.dictionary.columns[c].size() << '\n';
        for (const auto& label : b.dictionary.columns[c]) out << "label " << label << '\n';
    }
    out << "folds " << b.folds.size() << '\n';
    for (std::size_t k = 0; k < b.folds.size(); ++k) {
        const auto& fold = b.folds[k];
        out << fmt::format("fold {} base_score={} trees={}\n", k, fmt_double(fold.base_score), fold.trees.size());
        for (const auto& tree : fold.trees) {
            out << "tree " << tree.nodes().size() << '\n';
            for (const auto& n : tree.nodes()) {
                out << "node " << n.feature << ' ' << fmt_double(n.threshold) << ' ' << (n.missing_left ? 1 : 0) << ' '
                    << n.left << ' ' << n.right << ' ' << fmt_double(n.value) << ' ' << n.left_categories.size();
                for (int c : n.left_categories) out << ' ' << c;
                out << ' ' << n.right_categories.size();
                for (int c : n.right_categories) out << ' ' << c;
                out << '\n';
            }
        }
    }
    out << "end\n";
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
    save_bundle(bundle, out);
}

std::string serialize_bundle(const ModelBundle& bundle) {
    std::ostringstream out;
    save_bundle(bundle, out);
    return out.str();
}

ModelBundle load_bundle(std::istream& in) {
    LineReader reader(in);
    std::string line;
    ModelBundle b;

    auto header = reader.tokens(line, kFormatMagic);
    if (header.size() != 2 || parse_int_token(header[1]) != kFormatVersion) {
        throw DataError("model file: unsupported format version");
    }
    auto t = reader.tokens(line, "params");
    if (t.size() != 10) throw DataError("model file: malformed params line");
    b.params.n_trees = static_cast<int>(parse_int_token(value_of(t[1], "n_trees")));
    b.params.learning_rate = parse_double_token(value_of(t[2], "learning_rate"));
    b.params.max_leaves = static_cast<int>(parse_int_token(value_of(t[3], "max_leaves")));
    b.params.min_samples_leaf = static_cast<int>(parse_int_token(value_of(t[4], "min_samples_leaf")));
    b.params.feature_fraction = parse_double_token(value_of(t[5], "feature_fraction"));
    b.params.row_fraction = parse_double_token(value_of(t[6], "row_fraction"));
    b.params.n_bins = static_cast<int>(parse_int_token(value_of(t[7], "n_bins")));
    b.params.seed = static_cast<std::uint64_t>(std::stoull(std::string(value_of(t[8], "seed"))));
    b.params.n_folds = static_cast<int>(parse_int_token(value_of(t[9], "n_folds")));

    t = reader.tokens(line, "meta");
    if (t.size() != 5) throw DataError("model file: malformed meta line");
    b.meta.data_hash = std::string(value_of(t[1], "data_hash"));
    if (b.meta.data_hash == "-") b.meta.data_hash.clear();
    b.meta.seed = static_cast<std::uint64_t>(std::stoull(std::string(value_of(t[2], "seed"))));
    b.meta.rows = static_cast<std::size_t>(parse_int_token(value_of(t[3], "rows")));
    b.meta.constant_target = parse_int_token(value_of(t[4], "constant_target")) != 0;

    t = reader.tokens(line, "features");
    const auto n_features = static_cast<std::size_t>(parse_int_token(t.at(1)));
    for (std::size_t i = 0; i < n_features; ++i) {
        t = reader.tokens(line, "feature");
        if (t.size() != 4) throw DataError("model file: malformed feature line");
        features::FeatureSpec spec;
        spec.kind = t[1] == "categorical" ? FeatureKind::Categorical : FeatureKind::Numeric;
        if (t[2] == "meta") spec.source = features::FeatureSource::Meta;
        else if (t[2] == "weather") spec.source = features::FeatureSource::Weather;
        else if (t[2] == "temporal") spec.source = features::FeatureSource::Temporal;
        else if (t[2] == "trend") spec.source = features::FeatureSource::Trend;
        else throw DataError(fmt::format("model file: unknown feature source '{}'", t[2]));
        spec.name = std::string(t[3]);
        b.schema.features.push_back(std::move(spec));
    }

    t = reader.tokens(line, "dictionary");
    const auto n_columns = static_cast<std::size_t>(parse_int_token(t.at(1)));
    b.dictionary.columns.resize(n_columns);
    for (std::size_t c = 0; c < n_columns; ++c) {
        t = reader.tokens(line, "column");
        const auto n_labels = static_cast<std::size_t>(parse_int_token(t.at(2)));
        for (std::size_t i = 0; i < n_labels; ++i) {
            auto l = reader.next();
            if (l.rfind("label ", 0) != 0) throw DataError("model file: expected label line");
            b.dictionary.columns[c].push_back(l.substr(6));
        }
    }

    t = reader.tokens(line, "folds");
    const auto n_folds = static_cast<std::size_t>(parse_int_token(t.at(1)));
    for (std::size_t k = 0; k < n_folds; ++k) {
        t = reader.tokens(line, "fold");
        if (t.size() != 4) throw DataError("model file: malformed fold line");
        FoldEnsemble fold;
        fold.base_score = parse_double_token(value_of(t[2], "base_score"));
        const auto n_trees = static_cast<std::size_t>(parse_int_token(value_of(t[3], "trees")));
        for (std::size_t i = 0; i < n_trees; ++i) {
            t = reader.tokens(line, "tree");
            const auto n_nodes = static_cast<std::size_t>(parse_int_token(t.at(1)));
            std::vector<TreeNode> nodes;
            for (std::size_t j = 0; j < n_nodes; ++j) {
                t = reader.tokens(line, "node");
                if (t.size() < 9) throw DataError("model file: malformed node line");
                TreeNode n;
                n.feature = static_cast<int>(parse_int_token(t[1]));
                n.threshold = parse_double_token(t[2]);
                n.missing_left = parse_int_token(t[3]) != 0;
                n.left = static_cast<int>(parse_int_token(t[4]));
                n.right = static_cast<int>(parse_int_token(t[5]));
                n.value = parse_double_token(t[6]);
                std::size_t pos = 7;
                const auto n_left = static_cast<std::size_t>(parse_int_token(t[pos++]));
                if (t.size() < pos + n_left + 1) throw DataError("model file: truncated node line");
                for (std::size_t c = 0; c < n_left; ++c) n.left_categories.push_back(static_cast<int>(parse_int_token(t[pos++])));
                const auto n_right = static_cast<std::size_t>(parse_int_token(t[pos++]));
                if (t.size() != pos + n_right) throw DataError("model file: malformed node categories");
                for (std::size_t c = 0; c < n_right; ++c) n.right_categories.push_back(static_cast<int>(parse_int_token(t[pos++])));
                if (!n.is_leaf() && (n.left < 0 || n.right < 0 || static_cast<std::size_t>(n.left) >= n_nodes ||
                                     static_cast<std::size_t>(n.right) >= n_nodes ||
                                     static_cast<std::size_t>(n.feature) >= n_features)) {
                    throw DataError("model file: node references out of range");
                }
                nodes.push_back(std::move(n));
            }
            fold.trees.emplace_back(std::move(nodes));
        }
        b.folds.push_back(std::move(fold));
    }
    reader.tokens(line, "end");
    return b;
}

ModelBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError(fmt::format("model bundle '{}' not found", path.string()));
    return load_bundle(in);
}

}  // namespace trendproxy::gbdt
