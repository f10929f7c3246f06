#include "treelets/hclust_pca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace treelets {

namespace {

using Index = Eigen::Index;

constexpr Index idx(std::size_t k) { return static_cast<Index>(k); }

std::vector<std::size_t> labels_of(const Partition& part, std::size_t n) {
    std::vector<std::size_t> labels(n, std::numeric_limits<std::size_t>::max());
    for (std::size_t g = 0; g < part.size(); ++g) {
        for (std::size_t v : part[g]) {
            if (v >= n || labels[v] != std::numeric_limits<std::size_t>::max()) {
                throw InputError("adjusted_rand: groups do not partition 0..n-1");
            }
            labels[v] = g;
        }
    }
    for (std::size_t v : labels) {
        if (v == std::numeric_limits<std::size_t>::max()) throw InputError("adjusted_rand: partition misses an element");
    }
    return labels;
}

double choose2(double k) { return k * (k - 1.0) / 2.0; }

std::size_t ground_size(const Partition& part) {
    std::size_t n = 0;
    for (const auto& g : part) n += g.size();
    return n;
}

Vector power_iterate(const Matrix& c, Vector v, int& iterations) {
    v.normalize();
    for (iterations = 1; iterations <= kPowerMaxIterations; ++iterations) {
        Vector w = c * v;
        const double norm = w.norm();
        if (norm == 0.0) return v;
        w /= norm;
        const double change = (w - v).norm();
        v = std::move(w);
        if (change < kPowerTolerance) return v;
    }
    throw NumericalError("first_pc: power iteration did not converge after " +
                         std::to_string(kPowerMaxIterations) + " iterations");
}

/// Per-level partitions and spanning sets for one side of a comparison.
struct LevelData {
    Partition partition;
    Matrix subspace;
};

std::vector<LevelData> treelet_levels(const TreeletTree& tree, const LevelRange& range) {
    std::vector<LevelData> out;
    Matrix basis = Matrix::Identity(idx(tree.p()), idx(tree.p()));
    for (std::size_t level = 0; level <= range.second; ++level) {
        if (level > 0) {
            const auto& m = tree.merges()[level - 1];
            rotate_columns(basis, m.i, m.j, JacobiStep{m.theta, std::cos(m.theta), std::sin(m.theta)});
        }
        if (level < range.first) continue;
        LevelData data;
        const auto active = tree.active_nodes(level);
        data.subspace.resize(idx(tree.p()), idx(active.size()));
        for (std::size_t k = 0; k < active.size(); ++k) {
            const auto& node = tree.nodes()[active[k]];
            data.partition.push_back(node.members);
            data.subspace.col(idx(k)) = basis.col(idx(node.slot));
        }
        out.push_back(std::move(data));
    }
    return out;
}

std::vector<LevelData> cluster_levels(const DataMatrix& x, const ClusterTree& tree, const LevelRange& range) {
    const Matrix cov = covariance_matrix(x);
    const std::size_t p = tree.p();
    std::vector<std::optional<Vector>> node_pc(p + tree.merges().size());
    auto pc_of = [&](std::size_t id) -> const Vector& {
        if (!node_pc[id]) {
            const auto& members = tree.node_members(id);
            Matrix sub(idx(members.size()), idx(members.size()));
            for (std::size_t a = 0; a < members.size(); ++a) {
                for (std::size_t b = 0; b < members.size(); ++b) sub(idx(a), idx(b)) = cov(idx(members[a]), idx(members[b]));
            }
            node_pc[id] = first_pc(sub);
        }
        return *node_pc[id];
    };
    std::vector<LevelData> out;
    for (std::size_t level = range.first; level <= range.second; ++level) {
        LevelData data;
        const auto active = tree.active_nodes(level);
        data.subspace = Matrix::Zero(idx(p), idx(active.size()));
        for (std::size_t k = 0; k < active.size(); ++k) {
            const auto& members = tree.node_members(active[k]);
            const Vector& pc = pc_of(active[k]);
            for (std::size_t a = 0; a < members.size(); ++a) data.subspace(idx(members[a]), idx(k)) = pc(idx(a));
            data.partition.push_back(members);
        }
        out.push_back(std::move(data));
    }
    return out;
}

LevelRange resolve_range(std::optional<LevelRange> range, std::size_t depth) {
    const LevelRange r = range.value_or(LevelRange{0, depth});
    if (r.first > r.second || r.second > depth) {
        throw InputError("level range must satisfy 0 <= first <= last <= " + std::to_string(depth));
    }
    return r;
}

ComparisonReport assemble(const std::vector<LevelData>& a, const std::vector<LevelData>& b, const LevelRange& r,
                          double cophenetic) {
    ComparisonReport report;
    report.cophenetic_correlation = cophenetic;
    for (std::size_t k = 0; k < a.size(); ++k) {
        report.levels.push_back(LevelComparison{r.first + k, adjusted_rand(a[k].partition, b[k].partition),
                                                max_principal_angle(a[k].subspace, b[k].subspace)});
    }
    return report;
}

}  // namespace

// --- ClusterTree ---------------------------------------------------------------

ClusterTree::ClusterTree(std::size_t p, std::vector<ClusterMerge> merges) : p_(p), merges_(std::move(merges)) {
    if (p_ < 2) throw InputError("cluster tree needs at least 2 variables");
    if (merges_.size() != p_ - 1) throw InputError("cluster tree needs exactly p - 1 merges");
    for (std::size_t k = 0; k < p_; ++k) node_members_.push_back({k});
    parent_level_.assign(2 * p_ - 1, std::numeric_limits<std::size_t>::max());
    for (std::size_t k = 0; k < merges_.size(); ++k) {
        const auto& m = merges_[k];
        const std::size_t id = p_ + k;
        if (m.level != k + 1 || m.a >= id || m.b >= id || m.a == m.b) {
            throw InputError("cluster merge " + std::to_string(k + 1) + " is malformed");
        }
        if (parent_level_[m.a] != std::numeric_limits<std::size_t>::max() ||
            parent_level_[m.b] != std::numeric_limits<std::size_t>::max()) {
            throw InputError("cluster merge " + std::to_string(k + 1) + " reuses a merged cluster");
        }
        parent_level_[m.a] = parent_level_[m.b] = k + 1;
        std::vector<std::size_t> members;
        std::merge(node_members_[m.a].begin(), node_members_[m.a].end(), node_members_[m.b].begin(),
                   node_members_[m.b].end(), std::back_inserter(members));
        node_members_.push_back(std::move(members));
    }
}

std::vector<std::size_t> ClusterTree::active_nodes(std::size_t level) const {
    if (level > merges_.size()) throw InputError("level " + std::to_string(level) + " beyond cluster tree depth");
    std::vector<std::size_t> out;
    for (std::size_t id = 0; id < p_ + level; ++id) {
        if (parent_level_[id] > level) out.push_back(id);
    }
    std::sort(out.begin(), out.end(),
              [&](std::size_t a, std::size_t b) { return node_members_[a].front() < node_members_[b].front(); });
    return out;
}

Partition ClusterTree::membership(std::size_t level) const {
    Partition out;
    for (std::size_t id : active_nodes(level)) out.push_back(node_members_[id]);
    return out;
}

const std::vector<std::size_t>& ClusterTree::node_members(std::size_t id) const {
    return node_members_.at(id);
}

ClusterTree complete_linkage_tree(const SimilarityMatrix& s) {
    const std::size_t p = s.p();
    if (p < 2) throw InputError("complete linkage needs at least 2 variables");
    // Clusters are addressed by their minimum member, which is also the slot they occupy.
    Matrix d = Matrix::Ones(idx(p), idx(p)) - s.values();
    std::vector<bool> active(p, true);
    std::vector<std::size_t> slot_node(p);
    for (std::size_t k = 0; k < p; ++k) slot_node[k] = k;
    std::vector<std::vector<std::size_t>> members(p);
    for (std::size_t k = 0; k < p; ++k) members[k] = {k};

    std::vector<ClusterMerge> merges;
    for (std::size_t level = 1; level < p; ++level) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bu = 0;
        std::size_t bv = 0;
        for (std::size_t u = 0; u < p; ++u) {
            if (!active[u]) continue;
            for (std::size_t v = u + 1; v < p; ++v) {
                if (active[v] && d(idx(u), idx(v)) < best) {
                    best = d(idx(u), idx(v));
                    bu = u;
                    bv = v;
                }
            }
        }
        for (std::size_t k = 0; k < p; ++k) {
            if (!active[k] || k == bu || k == bv) continue;
            const double merged = std::max(d(idx(bu), idx(k)), d(idx(bv), idx(k)));
            d(idx(bu), idx(k)) = d(idx(k), idx(bu)) = merged;
        }
        std::vector<std::size_t> joined;
        std::merge(members[bu].begin(), members[bu].end(), members[bv].begin(), members[bv].end(),
                   std::back_inserter(joined));
        merges.push_back(ClusterMerge{level, slot_node[bu], slot_node[bv], best, joined});
        members[bu] = std::move(joined);
        members[bv].clear();
        slot_node[bu] = p + level - 1;
        active[bv] = false;
    }
    return ClusterTree(p, std::move(merges));
}

// --- local PCA -------------------------------------------------------------------

Vector first_pc(const Matrix& c_sub) {
    const Index k = c_sub.rows();
    if (k < 1 || c_sub.cols() != k) throw InputError("first_pc: matrix must be square and nonempty");
    if (k == 1) return Vector::Ones(1);

    int iterations = 0;
    Vector v = power_iterate(c_sub, Vector::Ones(k), iterations);
    double lambda = v.dot(c_sub * v);
    // A second deterministic start guards against an all-ones start that is
    // orthogonal to the leading eigenvector.
    Vector start(k);
    for (Index a = 0; a < k; ++a) start(a) = 1.0 + 0.5 * std::sin(1.0 + 2.0 * static_cast<double>(a));
    Vector w = power_iterate(c_sub, start, iterations);
    const double mu = w.dot(c_sub * w);
    if (mu > lambda + 1e-12 * std::max(1.0, std::abs(lambda))) {
        v = std::move(w);
        lambda = mu;
    }

    Index lead = 0;
    for (Index a = 1; a < k; ++a) {
        if (std::abs(v(a)) > std::abs(v(lead))) lead = a;
    }
    if (v(lead) < 0.0) v = -v;
    return v;
}

LocalPCABasis local_pca_basis(const DataMatrix& x, const ClusterTree& tree, std::size_t level) {
    if (x.p() != tree.p()) throw InputError("local_pca_basis: data and tree disagree on p");
    if (level > tree.p() - 1) throw InputError("level " + std::to_string(level) + " outside 0.." + std::to_string(tree.p() - 1));
    auto levels = cluster_levels(x, tree, {level, level});
    return LocalPCABasis{level, std::move(levels.front().subspace), std::move(levels.front().partition)};
}

// --- comparison metrics ------------------------------------------------------------

double adjusted_rand(const Partition& a, const Partition& b) {
    const std::size_t n = ground_size(a);
    if (ground_size(b) != n) throw InputError("adjusted_rand: partitions of different sets");
    const auto la = labels_of(a, n);
    const auto lb = labels_of(b, n);
    std::map<std::pair<std::size_t, std::size_t>, double> table;
    for (std::size_t v = 0; v < n; ++v) table[{la[v], lb[v]}] += 1.0;

    double index = 0.0;
    for (const auto& [key, count] : table) index += choose2(count);
    double sum_a = 0.0;
    for (const auto& g : a) sum_a += choose2(static_cast<double>(g.size()));
    double sum_b = 0.0;
    for (const auto& g : b) sum_b += choose2(static_cast<double>(g.size()));
    const double pairs = choose2(static_cast<double>(n));
    const double expected = pairs > 0.0 ? sum_a * sum_b / pairs : 0.0;
    const double maximum = 0.5 * (sum_a + sum_b);
    if (maximum - expected == 0.0) return 1.0;
    return (index - expected) / (maximum - expected);
}

double max_principal_angle(const Matrix& q1, const Matrix& q2) {
    if (q1.rows() != q2.rows()) throw InputError("max_principal_angle: ambient dimensions differ");
    if (q1.cols() == 0 || q2.cols() == 0) return 0.0;
    const Matrix cross = q1.transpose() * q2;
    const Eigen::JacobiSVD<Matrix> cos_svd(cross);
    const double cos_min = std::clamp(cos_svd.singularValues().minCoeff(), 0.0, 1.0);
    double angle = std::acos(cos_min);
    if (q2.cols() > q1.cols()) angle = std::numbers::pi / 2.0;
    if (angle < std::numbers::pi / 4.0) {
        // Sines are better conditioned than cosines for small angles.
        const Matrix residual = q2 - q1 * cross;
        const Eigen::JacobiSVD<Matrix> sin_svd(residual);
        const double sin_max = std::clamp(sin_svd.singularValues().maxCoeff(), 0.0, 1.0);
        angle = std::asin(sin_max);
    }
    return angle;
}

double cophenetic_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw InputError("cophenetic_correlation: length mismatch");
    const auto n = static_cast<double>(a.size());
    double ma = 0.0;
    double mb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ma += a[k];
        mb += b[k];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        sab += (a[k] - ma) * (b[k] - mb);
        saa += (a[k] - ma) * (a[k] - ma);
        sbb += (b[k] - mb) * (b[k] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return a == b ? 1.0 : 0.0;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> cophenetic_heights(const TreeletTree& tree) {
    const std::size_t p = tree.p();
    Matrix height = Matrix::Zero(idx(p), idx(p));
    for (std::size_t id = p; id < tree.nodes().size(); ++id) {
        const auto& node = tree.nodes()[id];
        const auto& left = tree.nodes()[*node.left].members;
        const auto& right = tree.nodes()[*node.right].members;
        for (std::size_t u : left) {
            for (std::size_t v : right) height(idx(u), idx(v)) = height(idx(v), idx(u)) = static_cast<double>(node.level);
        }
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = i + 1; j < p; ++j) out.push_back(height(idx(i), idx(j)));
    }
    return out;
}

std::vector<double> cophenetic_heights(const ClusterTree& tree) {
    const std::size_t p = tree.p();
    std::vector<double> rank(tree.merges().size());
    double current = 0.0;
    for (std::size_t k = 0; k < tree.merges().size(); ++k) {
        if (k == 0 || tree.merges()[k].distance != tree.merges()[k - 1].distance) current += 1.0;
        rank[k] = current;
    }
    Matrix height = Matrix::Zero(idx(p), idx(p));
    for (std::size_t k = 0; k < tree.merges().size(); ++k) {
        const auto& m = tree.merges()[k];
        for (std::size_t u : tree.node_members(m.a)) {
            for (std::size_t v : tree.node_members(m.b)) height(idx(u), idx(v)) = height(idx(v), idx(u)) = rank[k];
        }
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = i + 1; j < p; ++j) out.push_back(height(idx(i), idx(j)));
    }
    return out;
}

ComparisonReport compare(const DataMatrix& x, const TreeletTree& ttree, const ClusterTree& ctree,
                         std::optional<LevelRange> range) {
    if (x.p() != ttree.p() || ttree.p() != ctree.p()) throw InputError("compare: inputs disagree on p");
    if (ttree.max_level() != ttree.p() - 1) throw InputError("compare: treelet tree is incomplete");
    const LevelRange r = resolve_range(range, ttree.p() - 1);
    return assemble(treelet_levels(ttree, r), cluster_levels(x, ctree, r), r,
                    cophenetic_correlation(cophenetic_heights(ttree), cophenetic_heights(ctree)));
}

ComparisonReport compare(const TreeletTree& a, const TreeletTree& b, std::optional<LevelRange> range) {
    if (a.p() != b.p()) throw InputError("compare: trees disagree on p");
    if (a.max_level() != a.p() - 1 || b.max_level() != b.p() - 1) throw InputError("compare: tree is incomplete");
    const LevelRange r = resolve_range(range, a.p() - 1);
    return assemble(treelet_levels(a, r), treelet_levels(b, r), r,
                    cophenetic_correlation(cophenetic_heights(a), cophenetic_heights(b)));
}

}  // namespace treelets
