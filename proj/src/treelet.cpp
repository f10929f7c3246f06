#include "treelets/treelet.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>

namespace treelets {

namespace {

using Index = Eigen::Index;

constexpr Index idx(std::size_t k) { return static_cast<Index>(k); }

void rotate_symmetric(Matrix& c, std::size_t i, std::size_t j, const JacobiStep& step) {
    const double cs = step.cos;
    const double sn = step.sin;
    const Index ii = idx(i);
    const Index jj = idx(j);
    for (Index k = 0; k < c.rows(); ++k) {
        if (k == ii || k == jj) continue;
        const double cik = c(ii, k);
        const double cjk = c(jj, k);
        c(ii, k) = c(k, ii) = cs * cik + sn * cjk;
        c(jj, k) = c(k, jj) = -sn * cik + cs * cjk;
    }
    const double cii = c(ii, ii);
    const double cjj = c(jj, jj);
    const double cij = c(ii, jj);
    c(ii, ii) = cs * cs * cii + 2.0 * cs * sn * cij + sn * sn * cjj;
    c(jj, jj) = sn * sn * cii - 2.0 * cs * sn * cij + cs * cs * cjj;
    c(ii, jj) = c(jj, ii) = cs * sn * (cjj - cii) + (cs * cs - sn * sn) * cij;
}

double abs_correlation(const Matrix& c, Index a, Index b) {
    const double denom = std::sqrt(c(a, a) * c(b, b));
    if (!(denom > 0.0)) return 0.0;
    return std::clamp(std::abs(c(a, b)) / denom, 0.0, 1.0);
}

JacobiStep step_from_angle(double theta) {
    return {theta, std::cos(theta), std::sin(theta)};
}

}  // namespace

// --- TreeletTree -------------------------------------------------------------

TreeletTree::TreeletTree(std::size_t p, std::vector<MergeRecord> merges, std::vector<std::string> names)
    : p_(p), merges_(std::move(merges)), names_(std::move(names)) {
    if (p_ < 2) throw InputError("tree needs at least 2 variables");
    if (merges_.size() > p_ - 1) throw InputError("tree has more than p - 1 merges");
    if (names_.empty()) {
        for (std::size_t k = 0; k < p_; ++k) names_.push_back("V" + std::to_string(k + 1));
    }
    if (names_.size() != p_) throw InputError("tree names do not match p");

    nodes_.reserve(p_ + merges_.size());
    for (std::size_t k = 0; k < p_; ++k) {
        nodes_.push_back(TreeNode{k, 0, std::nullopt, std::nullopt, k, {k}});
    }
    std::vector<std::size_t> slot_node(p_);
    std::iota(slot_node.begin(), slot_node.end(), std::size_t{0});
    std::vector<bool> active(p_, true);

    for (std::size_t k = 0; k < merges_.size(); ++k) {
        const auto& m = merges_[k];
        const std::string where = "merge at level " + std::to_string(k + 1);
        if (m.level != k + 1) throw InputError(where + ": levels must run 1..m in order");
        if (m.i >= m.j || m.j >= p_) throw InputError(where + ": pair must satisfy i < j < p");
        if (!active[m.i] || !active[m.j]) throw InputError(where + ": merges a retired variable");
        const bool sum_diff_ok = (m.sum_index == m.i && m.diff_index == m.j) ||
                                 (m.sum_index == m.j && m.diff_index == m.i);
        if (!sum_diff_ok) throw InputError(where + ": {sum, diff} must equal {i, j}");
        if (!(std::abs(m.theta) <= std::numbers::pi / 4.0 + 1e-12)) {
            throw InputError(where + ": |theta| exceeds pi/4");
        }
        if (!(m.similarity >= 0.0 && m.similarity <= 1.0)) {
            throw InputError(where + ": similarity outside [0, 1]");
        }

        TreeNode node;
        node.id = p_ + k;
        node.level = k + 1;
        node.left = slot_node[m.i];
        node.right = slot_node[m.j];
        node.slot = m.sum_index;
        const auto& a = nodes_[*node.left].members;
        const auto& b = nodes_[*node.right].members;
        std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(node.members));
        slot_node[m.sum_index] = node.id;
        active[m.diff_index] = false;
        nodes_.push_back(std::move(node));
    }
}

std::vector<double> TreeletTree::similarity_trace() const {
    std::vector<double> trace;
    trace.reserve(merges_.size());
    for (const auto& m : merges_) trace.push_back(m.similarity);
    return trace;
}

std::vector<std::size_t> TreeletTree::active_nodes(std::size_t level) const {
    if (level > merges_.size()) throw InputError("level " + std::to_string(level) + " beyond tree depth");
    std::vector<bool> consumed(nodes_.size(), false);
    for (std::size_t id = p_; id < p_ + level; ++id) {
        consumed[*nodes_[id].left] = true;
        consumed[*nodes_[id].right] = true;
    }
    std::vector<std::size_t> out;
    for (std::size_t id = 0; id < p_ + level; ++id) {
        if (!consumed[id]) out.push_back(id);
    }
    std::sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) {
        return nodes_[a].members.front() < nodes_[b].members.front();
    });
    return out;
}

std::vector<std::vector<std::size_t>> TreeletTree::groups(std::size_t level) const {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t id : active_nodes(level)) out.push_back(nodes_[id].members);
    return out;
}

std::size_t TreeletTree::max_group_size(std::size_t level) const {
    std::size_t largest = 0;
    for (std::size_t id : active_nodes(level)) largest = std::max(largest, nodes_[id].members.size());
    return largest;
}

// --- rotations ---------------------------------------------------------------

JacobiStep jacobi_angle(double c_ii, double c_jj, double c_ij) {
    if (c_ij == 0.0) return step_from_angle(0.0);
    if (c_ii == c_jj) return step_from_angle(std::copysign(std::numbers::pi / 4.0, c_ij));
    return step_from_angle(0.5 * std::atan(2.0 * c_ij / (c_ii - c_jj)));
}

JacobiStep jacobi_rotation(Matrix& c, std::size_t i, std::size_t j) {
    const JacobiStep step = jacobi_angle(c(idx(i), idx(i)), c(idx(j), idx(j)), c(idx(i), idx(j)));
    rotate_symmetric(c, i, j, step);
    return step;
}

void rotate_columns(Matrix& m, std::size_t i, std::size_t j, const JacobiStep& step) {
    const Vector ci = m.col(idx(i));
    const Vector cj = m.col(idx(j));
    m.col(idx(i)) = step.cos * ci + step.sin * cj;
    m.col(idx(j)) = -step.sin * ci + step.cos * cj;
}

// --- construction ------------------------------------------------------------

TreeletTree build_treelet_tree(const Matrix& cov, std::vector<std::string> names,
                               std::optional<std::size_t> max_level) {
    const auto p = static_cast<std::size_t>(cov.rows());
    if (p < 2 || cov.cols() != cov.rows()) throw InputError("covariance must be square with p >= 2");
    const std::size_t levels = max_level.value_or(p - 1);
    if (levels < 1 || levels > p - 1) {
        throw InputError("max_level must lie in 1.." + std::to_string(p - 1) + ", got " + std::to_string(levels));
    }

    Matrix c = cov;
    Matrix sim = Matrix::Zero(idx(p), idx(p));
    for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = a + 1; b < p; ++b) sim(idx(a), idx(b)) = abs_correlation(c, idx(a), idx(b));
    }
    std::vector<bool> active(p, true);
    std::vector<MergeRecord> merges;
    merges.reserve(levels);

    for (std::size_t level = 1; level <= levels; ++level) {
        double best = -1.0;
        for (std::size_t a = 0; a < p; ++a) {
            if (!active[a]) continue;
            for (std::size_t b = a + 1; b < p; ++b) {
                if (active[b]) best = std::max(best, sim(idx(a), idx(b)));
            }
        }
        // Lexicographically first pair within the tie tolerance of the maximum.
        std::size_t bi = 0;
        std::size_t bj = 0;
        bool found = false;
        for (std::size_t a = 0; a < p && !found; ++a) {
            if (!active[a]) continue;
            for (std::size_t b = a + 1; b < p; ++b) {
                if (active[b] && sim(idx(a), idx(b)) >= best - kTieTolerance) {
                    bi = a;
                    bj = b;
                    found = true;
                    break;
                }
            }
        }

        const JacobiStep step = jacobi_rotation(c, bi, bj);
        const double var_i = c(idx(bi), idx(bi));
        const double var_j = c(idx(bj), idx(bj));
        const bool i_is_sum = std::abs(var_i - var_j) <= kTieTolerance || var_i > var_j;
        const std::size_t sum = i_is_sum ? bi : bj;
        const std::size_t diff = i_is_sum ? bj : bi;
        merges.push_back(MergeRecord{level, bi, bj, step.theta, best, sum, diff});
        active[diff] = false;

        for (std::size_t k = 0; k < p; ++k) {
            if (!active[k] || k == sum) continue;
            const auto lo = std::min(k, sum);
            const auto hi = std::max(k, sum);
            sim(idx(lo), idx(hi)) = abs_correlation(c, idx(lo), idx(hi));
        }
    }
    return TreeletTree(p, std::move(merges), std::move(names));
}

TreeletTree build_treelet_tree(const DataMatrix& x, std::optional<std::size_t> max_level) {
    return build_treelet_tree(covariance_matrix(x), x.names(), max_level);
}

// --- bases -------------------------------------------------------------------

std::vector<std::size_t> BasisAtLevel::scale_columns() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < kind.size(); ++k) {
        if (kind[k] == ColumnKind::scale) out.push_back(k);
    }
    return out;
}

BasisAtLevel basis_at_level(const TreeletTree& tree, std::size_t level) {
    if (level > tree.max_level()) {
        throw InputError("level " + std::to_string(level) + " outside 0.." + std::to_string(tree.max_level()));
    }
    const std::size_t p = tree.p();
    BasisAtLevel out;
    out.level = level;
    out.basis = Matrix::Identity(idx(p), idx(p));
    out.kind.assign(p, ColumnKind::scale);
    for (std::size_t k = 0; k < level; ++k) {
        const auto& m = tree.merges()[k];
        rotate_columns(out.basis, m.i, m.j, step_from_angle(m.theta));
        out.kind[m.diff_index] = ColumnKind::detail;
    }
    out.support.resize(p);
    for (std::size_t col = 0; col < p; ++col) {
        if (out.kind[col] == ColumnKind::detail) {
            for (std::size_t v = 0; v < p; ++v) {
                if (std::abs(out.basis(idx(v), idx(col))) > kSupportThreshold) out.support[col].push_back(v);
            }
        }
    }
    for (std::size_t id : tree.active_nodes(level)) {
        const auto& node = tree.nodes()[id];
        out.support[node.slot] = node.members;
    }
    return out;
}

Matrix node_scale_vectors(const TreeletTree& tree) {
    const std::size_t p = tree.p();
    Matrix vectors = Matrix::Zero(idx(p), idx(tree.nodes().size()));
    vectors.leftCols(idx(p)).setIdentity();
    Matrix basis = Matrix::Identity(idx(p), idx(p));
    for (std::size_t k = 0; k < tree.max_level(); ++k) {
        const auto& m = tree.merges()[k];
        rotate_columns(basis, m.i, m.j, step_from_angle(m.theta));
        vectors.col(idx(p + k)) = basis.col(idx(m.sum_index));
    }
    return vectors;
}

Matrix transform(const Matrix& x, const BasisAtLevel& basis) {
    if (x.cols() != basis.basis.rows()) throw InputError("transform: data has wrong number of columns");
    return x * basis.basis;
}

Matrix transform(const DataMatrix& x, const BasisAtLevel& basis) {
    return transform(x.values(), basis);
}

Matrix inverse_transform(const Matrix& coeffs, const BasisAtLevel& basis) {
    if (coeffs.cols() != basis.basis.cols()) {
        throw InputError("inverse_transform: coefficients have wrong number of columns");
    }
    return coeffs * basis.basis.transpose();
}

Vector coefficient_energies(const DataMatrix& x, const BasisAtLevel& basis) {
    const Matrix coeffs = transform(centered(x.values()), basis);
    return coeffs.colwise().squaredNorm().transpose() / static_cast<double>(x.n());
}

CutResult unsupervised_cut(const TreeletTree& tree, const DataMatrix& x, std::size_t k) {
    const std::size_t p = tree.p();
    if (x.p() != p) throw InputError("unsupervised_cut: data and tree disagree on p");
    if (k < 1 || k > p) throw InputError("K must lie in 1.." + std::to_string(p) + ", got " + std::to_string(k));

    const Matrix xc = centered(x.values());
    Matrix energy_cov = xc.transpose() * xc / static_cast<double>(x.n());
    const double total = energy_cov.trace();

    auto top_k = [&](const Matrix& c) {
        std::vector<double> diag(p);
        for (std::size_t q = 0; q < p; ++q) diag[q] = c(idx(q), idx(q));
        std::partial_sort(diag.begin(), diag.begin() + static_cast<std::ptrdiff_t>(k), diag.end(),
                          std::greater<>());
        return std::accumulate(diag.begin(), diag.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
    };

    CutResult result;
    result.scores.push_back(top_k(energy_cov));
    for (const auto& m : tree.merges()) {
        rotate_symmetric(energy_cov, m.i, m.j, step_from_angle(m.theta));
        result.scores.push_back(top_k(energy_cov));
    }
    const double tol = 1e-10 * total;
    const double best = *std::max_element(result.scores.begin(), result.scores.end());
    for (std::size_t level = result.scores.size(); level-- > 0;) {
        if (result.scores[level] >= best - tol) {
            result.level = level;
            break;
        }
    }
    return result;
}

}  // namespace treelets
