#pragma once

#include "treelets/core.hpp"
#include "treelets/hclust_pca.hpp"
#include "treelets/supervised.hpp"
#include "treelets/treelet.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace treelets {

struct BootstrapConfig {
    std::size_t replicates = 100;
    std::uint64_t seed = 0;
};

inline constexpr int kMaxDegenerateResamples = 100;

/// Row indices (with replacement, size n) for replicate `r`, attempt `attempt`.
std::vector<std::size_t> bootstrap_rows(std::size_t n, std::uint64_t seed, std::size_t replicate, std::size_t attempt);

struct BootstrapReplicate {
    std::vector<std::size_t> rows;
    std::size_t attempts = 1;  ///< 1 unless degenerate resamples were redrawn
    TreeletTree tree;
};

struct BootstrapTrees {
    std::vector<BootstrapReplicate> replicates;
    std::size_t retries = 0;  ///< degenerate resamples redrawn across all replicates

    std::vector<TreeletTree> trees() const;
};

/// One treelet tree per row resample. A resample with a zero-variance column
/// is redrawn from the next substream; more than kMaxDegenerateResamples in a
/// row is an InputError.
BootstrapTrees bootstrap_trees(const DataMatrix& x, const BootstrapConfig& cfg);

double jaccard(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

/// For each original group: mean over replicates of the best Jaccard overlap
/// with any group of the replicate's partition at the same level.
std::vector<double> group_stability(const Partition& original_groups, const std::vector<TreeletTree>& boot_trees,
                                    std::size_t level);

/// Mean adjusted Rand between the tree's partition and each replicate's, per level.
std::vector<double> level_stability(const TreeletTree& tree, const std::vector<TreeletTree>& boot_trees);

/// Largest level at which every scale group has at most g_max variables.
std::size_t bounded_cut(const TreeletTree& tree, std::size_t g_max);

inline constexpr std::size_t kDefaultGroupBound = 20;

/// How features are chosen at a level: lasso on all basis coordinates when
/// a response is present, otherwise the top-K energy columns.
struct SelectionRule {
    Predictor predictor = Predictor::lasso();
    CVConfig cv;
    std::size_t k = 3;
};

/// Sorted union of the supports of the features selected at `level`.
std::vector<std::size_t> selected_variables(const DataMatrix& x, const std::optional<ResponseVector>& y,
                                            const TreeletTree& tree, std::size_t level, const SelectionRule& rule);

struct LevelScore {
    std::size_t level = 0;
    std::vector<std::size_t> selected;  ///< selected variables on the original data
    std::size_t sparsity = 0;
    double stability = 0.0;
    bool within_bound = false;  ///< passes bounded_cut(g_max)
    bool qualifies = false;     ///< within bound, nonempty selection, stability >= pi_min
};

struct StableCut {
    std::size_t level = 0;
    std::vector<std::size_t> selected;
    bool stable = true;  ///< false when no level reached pi_min
    std::string justification;
    std::vector<LevelScore> levels;
};

/// Sparsest level whose selection is reproduced across replicates with mean
/// Jaccard >= pi_min, among levels allowed by g_max. Levels that select
/// nothing are skipped unless every level does.
StableCut stable_sparse_cut(const DataMatrix& x, const std::optional<ResponseVector>& y, const TreeletTree& tree,
                            const BootstrapTrees& boot, const SelectionRule& rule, double pi_min, std::size_t g_max);

struct StabilityProfileRow {
    std::size_t level = 0;
    double mean_adjusted_rand = 0.0;
    double min_group_jaccard = 0.0;
    std::size_t sparsity = 0;
    bool qualifies = false;
};

struct StabilityReport {
    std::vector<double> level_stability;
    std::vector<std::vector<double>> group_stability;  ///< per level, per original group
    StableCut cut;
    std::size_t retries = 0;

    std::vector<StabilityProfileRow> profile() const;
};

StabilityReport stability_analysis(const DataMatrix& x, const std::optional<ResponseVector>& y,
                                   const BootstrapConfig& cfg, const SelectionRule& rule, double pi_min,
                                   std::size_t g_max);

}  // namespace treelets
