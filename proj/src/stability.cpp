#include "treelets/stability.hpp"

#include "treelets/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace treelets {

namespace {

using Index = Eigen::Index;

bool has_degenerate_column(const Matrix& m) {
    const auto n = static_cast<double>(m.rows());
    for (Index j = 0; j < m.cols(); ++j) {
        const double mean = m.col(j).mean();
        const double var = (m.col(j).array() - mean).square().sum() / (n - 1.0);
        if (!(var > kMinVariance)) return true;
    }
    return false;
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(static_cast<Index>(rows[r]));
    return out;
}

std::vector<std::size_t> support_union(const BasisAtLevel& basis, const std::vector<std::size_t>& columns) {
    std::vector<bool> in(basis.basis.rows(), false);
    for (std::size_t c : columns) {
        for (std::size_t v : basis.support[c]) in[v] = true;
    }
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < in.size(); ++v) {
        if (in[v]) out.push_back(v);
    }
    return out;
}

}  // namespace

std::vector<std::size_t> bootstrap_rows(std::size_t n, std::uint64_t seed, std::size_t replicate, std::size_t attempt) {
    Rng rng(substream_seed(substream_seed(seed, replicate), attempt));
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
    return rows;
}

std::vector<TreeletTree> BootstrapTrees::trees() const {
    std::vector<TreeletTree> out;
    out.reserve(replicates.size());
    for (const auto& r : replicates) out.push_back(r.tree);
    return out;
}

BootstrapTrees bootstrap_trees(const DataMatrix& x, const BootstrapConfig& cfg) {
    if (cfg.replicates < 1) throw InputError("bootstrap needs at least 1 replicate");
    BootstrapTrees out;
    out.replicates.reserve(cfg.replicates);
    for (std::size_t r = 0; r < cfg.replicates; ++r) {
        for (std::size_t attempt = 0;; ++attempt) {
            if (attempt > static_cast<std::size_t>(kMaxDegenerateResamples)) {
                throw InputError("more than " + std::to_string(kMaxDegenerateResamples) +
                                 " consecutive degenerate bootstrap resamples");
            }
            auto rows = bootstrap_rows(x.n(), cfg.seed, r, attempt);
            if (has_degenerate_column(take_rows(x.values(), rows))) {
                ++out.retries;
                continue;
            }
            auto tree = build_treelet_tree(x.resample_rows(rows));
            out.replicates.push_back(BootstrapReplicate{std::move(rows), attempt + 1, std::move(tree)});
            break;
        }
    }
    return out;
}

double jaccard(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::vector<std::size_t> sa(a);
    std::vector<std::size_t> sb(b);
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    std::vector<std::size_t> common;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));
    const double inter = static_cast<double>(common.size());
    return inter / (static_cast<double>(sa.size() + sb.size()) - inter);
}

std::vector<double> group_stability(const Partition& original_groups, const std::vector<TreeletTree>& boot_trees,
                                    std::size_t level) {
    std::vector<double> scores(original_groups.size(), 0.0);
    if (boot_trees.empty()) return scores;
    for (const auto& tree : boot_trees) {
        const auto groups = tree.groups(level);
        for (std::size_t g = 0; g < original_groups.size(); ++g) {
            double best = 0.0;
            for (const auto& h : groups) best = std::max(best, jaccard(original_groups[g], h));
            scores[g] += best;
        }
    }
    for (auto& s : scores) s /= static_cast<double>(boot_trees.size());
    return scores;
}

std::vector<double> level_stability(const TreeletTree& tree, const std::vector<TreeletTree>& boot_trees) {
    std::vector<double> out;
    for (std::size_t level = 0; level <= tree.max_level(); ++level) {
        const auto original = tree.groups(level);
        double total = 0.0;
        for (const auto& b : boot_trees) total += adjusted_rand(original, b.groups(level));
        out.push_back(boot_trees.empty() ? 0.0 : total / static_cast<double>(boot_trees.size()));
    }
    return out;
}

std::size_t bounded_cut(const TreeletTree& tree, std::size_t g_max) {
    if (g_max < 1) throw InputError("g_max must be >= 1");
    std::size_t best = 0;
    for (std::size_t level = 0; level <= tree.max_level(); ++level) {
        if (tree.max_group_size(level) > g_max) break;
        best = level;
    }
    return best;
}

std::vector<std::size_t> selected_variables(const DataMatrix& x, const std::optional<ResponseVector>& y,
                                            const TreeletTree& tree, std::size_t level, const SelectionRule& rule) {
    const BasisAtLevel basis = basis_at_level(tree, level);
    std::vector<std::size_t> columns;
    if (y) {
        const Predictor lasso = rule.predictor.kind == PredictorKind::lasso ? rule.predictor : Predictor::lasso();
        const FittedModel model = fit(lasso, transform(x, basis), y->values(), rule.cv);
        for (Index c = 0; c < model.coefficients.size(); ++c) {
            if (model.coefficients(c) != 0.0) columns.push_back(static_cast<std::size_t>(c));
        }
    } else {
        const Vector energy = coefficient_energies(x, basis);
        std::vector<std::size_t> order(static_cast<std::size_t>(energy.size()));
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return energy(static_cast<Index>(a)) > energy(static_cast<Index>(b)); });
        const std::size_t k = std::min(rule.k, order.size());
        columns.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    }
    return support_union(basis, columns);
}

StableCut stable_sparse_cut(const DataMatrix& x, const std::optional<ResponseVector>& y, const TreeletTree& tree,
                            const BootstrapTrees& boot, const SelectionRule& rule, double pi_min, std::size_t g_max) {
    if (!(pi_min >= 0.0 && pi_min <= 1.0)) throw InputError("pi_min must lie in [0, 1]");
    if (y && y->size() != x.n()) throw InputError("response length differs from sample count");
    if (!y && rule.k < 1) throw InputError("K must be >= 1");
    const std::size_t allowed = bounded_cut(tree, g_max);

    // Replicate data is materialized once and reused across levels.
    std::vector<DataMatrix> boot_x;
    std::vector<std::optional<ResponseVector>> boot_y;
    for (const auto& rep : boot.replicates) {
        boot_x.push_back(x.resample_rows(rep.rows));
        boot_y.push_back(y ? std::optional<ResponseVector>(y->resample(rep.rows)) : std::nullopt);
    }

    StableCut out;
    for (std::size_t level = 0; level <= tree.max_level(); ++level) {
        LevelScore score;
        score.level = level;
        score.within_bound = level <= allowed;
        if (score.within_bound) {
            score.selected = selected_variables(x, y, tree, level, rule);
            score.sparsity = score.selected.size();
            double total = 0.0;
            for (std::size_t r = 0; r < boot.replicates.size(); ++r) {
                const auto& rep = boot.replicates[r];
                total += jaccard(score.selected, selected_variables(boot_x[r], boot_y[r], rep.tree, level, rule));
            }
            score.stability = boot.replicates.empty() ? 0.0 : total / static_cast<double>(boot.replicates.size());
            score.qualifies = !score.selected.empty() && score.stability >= pi_min;
        }
        out.levels.push_back(std::move(score));
    }

    const LevelScore* best = nullptr;
    for (const auto& s : out.levels) {
        if (s.qualifies && (!best || s.sparsity <= best->sparsity)) best = &s;
    }
    if (best) {
        out.stable = true;
        out.justification = "sparsest level with stability >= " + std::to_string(pi_min) + " and groups <= " +
                            std::to_string(g_max);
    } else {
        const bool any_nonempty = std::any_of(out.levels.begin(), out.levels.end(),
                                              [](const LevelScore& s) { return s.within_bound && !s.selected.empty(); });
        for (const auto& s : out.levels) {
            if (!s.within_bound || (any_nonempty && s.selected.empty())) continue;
            if (!best || s.stability >= best->stability) best = &s;
        }
        out.stable = false;
        out.justification = "no stable cut at requested threshold; returning the most stable level";
    }
    out.level = best->level;
    out.selected = best->selected;
    return out;
}

std::vector<StabilityProfileRow> StabilityReport::profile() const {
    std::vector<StabilityProfileRow> rows;
    for (std::size_t level = 0; level < level_stability.size(); ++level) {
        const auto& groups = group_stability[level];
        const auto& s = cut.levels[level];
        rows.push_back(StabilityProfileRow{level, level_stability[level],
                                           groups.empty() ? 0.0 : *std::min_element(groups.begin(), groups.end()),
                                           s.sparsity, s.qualifies});
    }
    return rows;
}

StabilityReport stability_analysis(const DataMatrix& x, const std::optional<ResponseVector>& y,
                                   const BootstrapConfig& cfg, const SelectionRule& rule, double pi_min,
                                   std::size_t g_max) {
    const TreeletTree tree = build_treelet_tree(x);
    const BootstrapTrees boot = bootstrap_trees(x, cfg);
    const auto trees = boot.trees();
    StabilityReport report;
    report.retries = boot.retries;
    report.level_stability = level_stability(tree, trees);
    for (std::size_t level = 0; level <= tree.max_level(); ++level) {
        report.group_stability.push_back(group_stability(tree.groups(level), trees, level));
    }
    report.cut = stable_sparse_cut(x, y, tree, boot, rule, pi_min, g_max);
    return report;
}

}  // namespace treelets
