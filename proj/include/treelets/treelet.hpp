#pragma once

#include "treelets/core.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace treelets {

/// Two-variable merge performed at one level of the treelet construction.
struct MergeRecord {
    std::size_t level = 0;  ///< 1..p-1
    std::size_t i = 0;      ///< lower slot of the merged pair
    std::size_t j = 0;      ///< upper slot of the merged pair
    double theta = 0.0;     ///< Jacobi angle, |theta| <= pi/4
    double similarity = 0.0;
    std::size_t sum_index = 0;   ///< slot carrying the sum (scale) variable forward
    std::size_t diff_index = 0;  ///< slot retired as the difference (detail) variable

    friend bool operator==(const MergeRecord&, const MergeRecord&) = default;
};

/// One node of the treelet hierarchy. Leaves are nodes 0..p-1; the merge at
/// level k creates node p + k - 1.
struct TreeNode {
    std::size_t id = 0;
    std::size_t level = 0;  ///< 0 for leaves, merge level otherwise
    std::optional<std::size_t> left;
    std::optional<std::size_t> right;
    std::size_t slot = 0;                ///< coordinate index holding this node's scale vector
    std::vector<std::size_t> members;    ///< sorted original-variable indices

    bool is_leaf() const noexcept { return !left.has_value(); }
};

/// Ordered merges over p variables. Validated on construction: levels run
/// 1..m in order, each pair joins two active slots, and the retired slot
/// never merges again.
class TreeletTree {
public:
    TreeletTree(std::size_t p, std::vector<MergeRecord> merges, std::vector<std::string> names);

    std::size_t p() const noexcept { return p_; }
    const std::vector<MergeRecord>& merges() const noexcept { return merges_; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    /// Number of merges recorded; equals p - 1 for a complete tree.
    std::size_t max_level() const noexcept { return merges_.size(); }
    std::vector<double> similarity_trace() const;

    /// All 2p - 1 (or p + max_level) nodes, leaves first.
    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    /// Ids of the nodes whose scale vectors are active after `level` merges,
    /// ordered by their minimum member.
    std::vector<std::size_t> active_nodes(std::size_t level) const;
    /// Scale supports after `level` merges; a partition of 0..p-1 ordered by minimum member.
    std::vector<std::vector<std::size_t>> groups(std::size_t level) const;
    /// Largest group size after `level` merges.
    std::size_t max_group_size(std::size_t level) const;

    friend bool operator==(const TreeletTree& a, const TreeletTree& b) {
        return a.p_ == b.p_ && a.merges_ == b.merges_;
    }

private:
    std::size_t p_;
    std::vector<MergeRecord> merges_;
    std::vector<std::string> names_;
    std::vector<TreeNode> nodes_;
};

enum class ColumnKind { scale, detail };

/// Orthonormal basis after `level` rotations. Column k corresponds to slot k.
struct BasisAtLevel {
    std::size_t level = 0;
    Matrix basis;
    std::vector<ColumnKind> kind;
    /// Original variables loading on each column. Scale columns use the node
    /// membership; detail columns use |loading| > kSupportThreshold.
    std::vector<std::vector<std::size_t>> support;

    std::vector<std::size_t> scale_columns() const;
};

inline constexpr double kSupportThreshold = 1e-12;
inline constexpr double kTieTolerance = 1e-12;

/// Result of a single Jacobi step on a symmetric matrix.
struct JacobiStep {
    double theta = 0.0;
    double cos = 1.0;
    double sin = 0.0;
};

/// Angle solving tan(2 theta) = 2 c_ij / (c_ii - c_jj) with |theta| <= pi/4.
/// Equal diagonals give (pi/4) * sign(c_ij); c_ij == 0 gives 0.
JacobiStep jacobi_angle(double c_ii, double c_jj, double c_ij);

/// Rotates rows and columns i, j of the symmetric matrix `c` in place so
/// that c(i, j) vanishes, using new_i = cos x_i + sin x_j and
/// new_j = -sin x_i + cos x_j. Returns the step used.
JacobiStep jacobi_rotation(Matrix& c, std::size_t i, std::size_t j);

/// Applies the same rotation to columns i, j of a basis (or data) matrix.
void rotate_columns(Matrix& m, std::size_t i, std::size_t j, const JacobiStep& step);

/// Greedy treelet construction on a covariance matrix: at every level merge
/// the active pair with the largest absolute correlation, rotate it, keep
/// the higher-variance coordinate as the sum.
TreeletTree build_treelet_tree(const Matrix& cov, std::vector<std::string> names,
                               std::optional<std::size_t> max_level = std::nullopt);
TreeletTree build_treelet_tree(const DataMatrix& x, std::optional<std::size_t> max_level = std::nullopt);

BasisAtLevel basis_at_level(const TreeletTree& tree, std::size_t level);

/// p x (number of nodes) matrix; column k is the scale vector of node k.
Matrix node_scale_vectors(const TreeletTree& tree);

/// Coefficients X * B.
Matrix transform(const Matrix& x, const BasisAtLevel& basis);
Matrix transform(const DataMatrix& x, const BasisAtLevel& basis);
/// coeffs * B^T, the inverse of transform.
Matrix inverse_transform(const Matrix& coeffs, const BasisAtLevel& basis);

/// Mean squared centered coefficient for every basis column.
Vector coefficient_energies(const DataMatrix& x, const BasisAtLevel& basis);

struct CutResult {
    std::size_t level = 0;
    std::vector<double> scores;  ///< one per level 0..max_level
};

/// Top-K energy cut: level maximizing the sum of the K largest column
/// energies. Ties (relative 1e-10 of total energy) go to the larger level.
/// The score is a reconstructed criterion.
CutResult unsupervised_cut(const TreeletTree& tree, const DataMatrix& x, std::size_t k);

}  // namespace treelets
