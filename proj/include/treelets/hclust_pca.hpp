#pragma once

#include "treelets/core.hpp"
#include "treelets/treelet.hpp"

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

namespace treelets {

using Partition = std::vector<std::vector<std::size_t>>;

struct ClusterMerge {
    std::size_t level = 0;
    std::size_t a = 0;  ///< node id of the cluster with the smaller minimum member
    std::size_t b = 0;
    double distance = 0.0;
    std::vector<std::size_t> members;  ///< sorted members of the merged cluster

    friend bool operator==(const ClusterMerge&, const ClusterMerge&) = default;
};

/// Complete-linkage dendrogram over p variables. Leaves are nodes 0..p-1,
/// the merge at level k creates node p + k - 1.
class ClusterTree {
public:
    ClusterTree(std::size_t p, std::vector<ClusterMerge> merges);

    std::size_t p() const noexcept { return p_; }
    const std::vector<ClusterMerge>& merges() const noexcept { return merges_; }

    /// Clusters after `level` merges, ordered by minimum member.
    Partition membership(std::size_t level) const;
    /// Node ids of the clusters after `level` merges, in the same order.
    std::vector<std::size_t> active_nodes(std::size_t level) const;
    const std::vector<std::size_t>& node_members(std::size_t id) const;

private:
    std::size_t p_;
    std::vector<ClusterMerge> merges_;
    std::vector<std::vector<std::size_t>> node_members_;
    std::vector<std::size_t> parent_level_;
};

/// Agglomerative clustering on d = 1 - s with complete linkage. Exact
/// distance ties go to the lexicographically smallest (min member) pair.
ClusterTree complete_linkage_tree(const SimilarityMatrix& s);

inline constexpr double kPowerTolerance = 1e-12;
inline constexpr int kPowerMaxIterations = 10000;

/// Leading eigenvector of a symmetric PSD matrix by power iteration, signed
/// so its largest-magnitude loading is positive. Throws NumericalError when
/// the iteration does not settle.
Vector first_pc(const Matrix& c_sub);

struct LocalPCABasis {
    std::size_t level = 0;
    Matrix vectors;      ///< p x (number of clusters), unit columns on disjoint supports
    Partition clusters;  ///< support of each column
};

LocalPCABasis local_pca_basis(const DataMatrix& x, const ClusterTree& tree, std::size_t level);

/// Adjusted Rand index of two partitions of the same ground set. Returns 1
/// when both are the all-singleton or the single-cluster partition.
double adjusted_rand(const Partition& a, const Partition& b);

/// Largest principal angle in radians between the column spans of two
/// matrices with orthonormal columns.
double max_principal_angle(const Matrix& q1, const Matrix& q2);

/// Pearson correlation of two height vectors; 1 when both are constant and
/// equal, 0 when one of them is constant otherwise.
double cophenetic_correlation(const std::vector<double>& a, const std::vector<double>& b);

/// Per-pair merge level (pairs (i, j), i < j, in row-major order).
std::vector<double> cophenetic_heights(const TreeletTree& tree);
/// Per-pair dense rank of the complete-linkage distance at which the pair joins.
std::vector<double> cophenetic_heights(const ClusterTree& tree);

struct LevelComparison {
    std::size_t level = 0;
    double adjusted_rand = 0.0;
    double max_principal_angle = 0.0;
};

struct ComparisonReport {
    std::vector<LevelComparison> levels;
    double cophenetic_correlation = 0.0;
};

using LevelRange = std::pair<std::size_t, std::size_t>;  ///< inclusive

/// Treelet scale supports and subspaces versus complete-linkage membership
/// and local-PCA subspaces.
ComparisonReport compare(const DataMatrix& x, const TreeletTree& ttree, const ClusterTree& ctree,
                         std::optional<LevelRange> range = std::nullopt);

/// Treelet against treelet (e.g. a tree against itself or a bootstrap tree).
ComparisonReport compare(const TreeletTree& a, const TreeletTree& b,
                         std::optional<LevelRange> range = std::nullopt);

}  // namespace treelets
