#include <doctest.h>

#include "oracles.hpp"
#include "treelets/random.hpp"
#include "treelets/supervised.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

using namespace treelets;

namespace {

// Intercept + OLS on each training split by Gaussian elimination on the
// normal equations; returns the mean of per-fold held-out MSE.
double fold_ols_mse(const Matrix& x, const Vector& y, const std::vector<std::size_t>& labels, std::size_t folds) {
    const auto p = x.cols() + 1;
    double total = 0.0;
    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<std::vector<double>> a(static_cast<std::size_t>(p), std::vector<double>(static_cast<std::size_t>(p + 1), 0.0));
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            if (labels[static_cast<std::size_t>(i)] == f) continue;
            std::vector<double> row{1.0};
            for (Eigen::Index j = 0; j < x.cols(); ++j) row.push_back(x(i, j));
            for (std::size_t r = 0; r < row.size(); ++r) {
                for (std::size_t c = 0; c < row.size(); ++c) a[r][c] += row[r] * row[c];
                a[r][row.size()] += row[r] * y(i);
            }
        }
        const std::size_t m = a.size();
        for (std::size_t col = 0; col < m; ++col) {
            std::size_t piv = col;
            for (std::size_t r = col + 1; r < m; ++r) {
                if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
            }
            std::swap(a[col], a[piv]);
            for (std::size_t r = 0; r < m; ++r) {
                if (r == col) continue;
                const double factor = a[r][col] / a[col][col];
                for (std::size_t c = col; c <= m; ++c) a[r][c] -= factor * a[col][c];
            }
        }
        double sse = 0.0;
        std::size_t count = 0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            if (labels[static_cast<std::size_t>(i)] != f) continue;
            double pred = a[0][m] / a[0][0];
            for (Eigen::Index j = 0; j < x.cols(); ++j) {
                const auto k = static_cast<std::size_t>(j + 1);
                pred += x(i, j) * a[k][m] / a[k][k];
            }
            sse += (y(i) - pred) * (y(i) - pred);
            ++count;
        }
        total += sse / static_cast<double>(count);
    }
    return total / static_cast<double>(folds);
}

// Two correlated pairs; y follows the first variable only.
struct PairedDesign {
    DataMatrix x;
    ResponseVector y;
};

PairedDesign paired_design(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(static_cast<Eigen::Index>(n), 4);
    Vector y(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double a = rng.normal();
        const double b = rng.normal();
        m(i, 0) = std::sqrt(0.8) * a + std::sqrt(0.2) * rng.normal();
        m(i, 1) = std::sqrt(0.8) * a + std::sqrt(0.2) * rng.normal();
        m(i, 2) = std::sqrt(0.8) * b + std::sqrt(0.2) * rng.normal();
        m(i, 3) = std::sqrt(0.8) * b + std::sqrt(0.2) * rng.normal();
        y(i) = 2.0 * m(i, 0) + 0.1 * rng.normal();
    }
    return {DataMatrix(std::move(m)), ResponseVector(std::move(y))};
}

// Every antichain of the subtree rooted at `id` that covers its members.
std::vector<std::vector<std::size_t>> all_frontiers(const TreeletTree& tree, std::size_t id) {
    const auto& node = tree.nodes()[id];
    std::vector<std::vector<std::size_t>> out{{id}};
    if (node.is_leaf()) return out;
    for (const auto& l : all_frontiers(tree, *node.left)) {
        for (const auto& r : all_frontiers(tree, *node.right)) {
            auto joined = l;
            joined.insert(joined.end(), r.begin(), r.end());
            out.push_back(joined);
        }
    }
    return out;
}

Matrix node_features(const DataMatrix& x, const TreeletTree& tree, std::vector<std::size_t> ids) {
    std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
        return tree.nodes()[a].members.front() < tree.nodes()[b].members.front();
    });
    Matrix f(x.values().rows(), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const auto& node = tree.nodes()[ids[k]];
        const auto at = basis_at_level(tree, node.level);
        f.col(static_cast<Eigen::Index>(k)) = x.values() * at.basis.col(static_cast<Eigen::Index>(node.slot));
    }
    return f;
}

}  // namespace

TEST_CASE("folds: deterministic, balanced, validated") {
    const auto a = make_folds(23, 5, 42);
    CHECK(a == make_folds(23, 5, 42));
    CHECK(a != make_folds(23, 5, 43));
    std::map<std::size_t, int> sizes;
    for (auto f : a) ++sizes[f];
    CHECK(sizes.size() == 5);
    for (const auto& [f, s] : sizes) CHECK((s == 4 || s == 5));
    CHECK(CVConfig{}.folds_for(7) == 7);
    CHECK(CVConfig{}.folds_for(70) == 10);
    CHECK_THROWS_AS((CVConfig{std::size_t{8}, 0}.folds_for(7)), InputError);
    CHECK_THROWS_AS((CVConfig{std::size_t{1}, 0}.folds_for(7)), InputError);
}

TEST_CASE("predictor validation") {
    CHECK_NOTHROW(Predictor::ridge().validate());
    CHECK_NOTHROW(Predictor::lasso().validate());
    CHECK(Predictor::lasso().grid.size() == 20);
    CHECK_THROWS_AS((Predictor{PredictorKind::ridge, {}}.validate()), InputError);
    CHECK_THROWS_AS((Predictor{PredictorKind::ridge, {1.0, -0.5}}.validate()), InputError);
}

TEST_CASE("cv_loss: zero target and noiseless recoverable signal") {
    const auto x = oracle::random_data(40, 3, 1);
    const ResponseVector zero(Vector::Zero(40));
    CHECK(cv_loss(x.values(), zero, Predictor::ridge({1e6}), CVConfig{5, 1}).loss < 1e-12);
    const ResponseVector y(x.values().col(0));
    CHECK(cv_loss(x.values(), y, Predictor::ridge({0.0}), CVConfig{5, 1}).loss < 1e-10);
}

TEST_CASE("cv_loss: tiny dataset against a fold-by-fold least-squares trace") {
    const auto t = oracle::tiny_regression();
    const ResponseVector y(t.y);
    SUBCASE("leave-one-out") {
        const auto got = cv_loss(t.x, y, Predictor::ridge({0.0}), CVConfig{6, 42});
        CHECK(got.loss == doctest::Approx(oracle::reference_loo_ols(t.x, t.y)).epsilon(1e-10));
        CHECK(got.fold_losses.size() == 6);
    }
    SUBCASE("three folds") {
        const auto labels = make_folds(6, 3, 42);
        const auto got = cv_loss(t.x, y, Predictor::ridge({0.0}), CVConfig{3, 42});
        CHECK(got.loss == doctest::Approx(fold_ols_mse(t.x, t.y, labels, 3)).epsilon(1e-10));
    }
    CHECK(oracle::reference_loo_ols(t.x, t.y) == doctest::Approx(fold_ols_mse(t.x, t.y, make_folds(6, 6, 0), 6)).epsilon(1e-12));
    CHECK_THROWS_AS(cv_loss(t.x, y, Predictor::ridge(), CVConfig{7, 1}), InputError);
}

TEST_CASE("cv_loss: bit-identical reruns") {
    const auto x = oracle::random_data(50, 5, 3);
    const ResponseVector y(x.values().col(1) + 0.3 * x.values().col(3));
    for (const auto& pred : {Predictor::ridge(), Predictor::lasso()}) {
        const auto a = cv_loss(x.values(), y, pred, CVConfig{5, 9});
        const auto b = cv_loss(x.values(), y, pred, CVConfig{5, 9});
        CHECK(a.loss == b.loss);
        CHECK(a.fold_losses == b.fold_losses);
        CHECK(a.chosen_penalties == b.chosen_penalties);
    }
}

TEST_CASE("cv_loss: invariant under orthogonal feature rotations with zero penalty") {
    Rng rng(4);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto x = oracle::random_data(40, 5, seed);
        Vector yv(40);
        for (Eigen::Index i = 0; i < 40; ++i) yv(i) = x.values()(i, 0) - x.values()(i, 2) + rng.normal();
        const ResponseVector y(yv);
        Matrix g(5, 5);
        for (Eigen::Index i = 0; i < 25; ++i) g.data()[i] = rng.normal();
        const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
        const auto pred = Predictor::ridge({0.0});
        const CVConfig cv{5, seed};
        CHECK(std::abs(cv_loss(x.values(), y, pred, cv).loss - cv_loss(x.values() * q, y, pred, cv).loss) < 1e-10);
    }
}

TEST_CASE("lasso: subgradient optimality on random instances") {
    Rng rng(8);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto x = oracle::random_data(30, 2 + seed % 6, seed);
        const Matrix xc = centered(x.values());
        Vector y(30);
        for (Eigen::Index i = 0; i < 30; ++i) y(i) = xc(i, 0) + rng.normal();
        y.array() -= y.mean();
        const double lambda_max = (xc.transpose() * y).cwiseAbs().maxCoeff() / 30.0;
        for (double frac : {0.9, 0.5, 0.1, 0.01}) {
            const auto sol = lasso_cd(xc, y, frac * lambda_max);
            CHECK(oracle::kkt_violation(xc, y, sol.beta, frac * lambda_max) < 1e-8);
        }
        CHECK(lasso_cd(xc, y, 1.01 * lambda_max).beta.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("cv_basis_selection: rotation-invariant predictor ties go to the top level") {
    const auto x = oracle::random_data(60, 5, 12);
    const ResponseVector y(x.values().col(0) + 0.5 * x.values().col(4) + 0.1 * x.values().col(2));
    const auto tree = build_treelet_tree(x);
    const auto sel = cv_basis_selection(x, y, tree, Predictor::ridge({0.0}), CVConfig{5, 3});
    CHECK(sel.losses.size() == 5);
    for (double l : sel.losses) CHECK(std::abs(l - sel.losses.front()) < 1e-10);
    CHECK(sel.level == 4);
}

TEST_CASE("cv_basis_selection: agrees with an exhaustive per-level CV oracle") {
    // Two noisy duplicates of one signal, response buried in noise.
    int sum_level = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        Rng rng(1000 + seed);
        Matrix m(60, 2);
        Vector yv(60);
        for (Eigen::Index i = 0; i < 60; ++i) {
            const double s = rng.normal();
            m(i, 0) = s + rng.normal();
            m(i, 1) = s + rng.normal();
            yv(i) = s + 2.0 * rng.normal();
        }
        const DataMatrix x(m);
        const ResponseVector y(yv);
        const auto tree = build_treelet_tree(x);
        const CVConfig cv{5, seed};
        const auto sel = cv_basis_selection(x, y, tree, Predictor::lasso(), cv);
        std::vector<double> oracle_losses;
        for (std::size_t level = 0; level <= tree.max_level(); ++level) {
            oracle_losses.push_back(cv_loss(transform(x, basis_at_level(tree, level)), y, Predictor::lasso(), cv).loss);
        }
        CHECK(sel.losses == oracle_losses);
        const std::size_t expected = oracle_losses[1] <= oracle_losses[0] + 1e-12 * std::max(1.0, oracle_losses[0]) ? 1 : 0;
        CHECK(sel.level == expected);
        if (sel.level == 1) ++sum_level;
    }
    MESSAGE("sum-variable level chosen in " << sum_level << " of 50 replicates");
    CHECK(sum_level > 25);
}

TEST_CASE("nonuniform_cutoff: infinite threshold keeps the root frontier") {
    const auto d = paired_design(80, 2);
    const auto tree = build_treelet_tree(d.x);
    const auto sel = nonuniform_cutoff(d.x, d.y, tree, Predictor::ridge(), CVConfig{5, 1},
                                       std::numeric_limits<double>::infinity());
    CHECK(sel.frontier.nodes == tree.active_nodes(tree.max_level()));
    CHECK(sel.final_loss == sel.root_loss);
    CHECK(std::none_of(sel.trace.begin(), sel.trace.end(), [](const ExpansionStep& s) { return s.accepted; }));
}

TEST_CASE("nonuniform_cutoff: splits the relevant pair, keeps the other merged, matches exhaustive search") {
    const auto d = paired_design(100, 7);
    const auto tree = build_treelet_tree(d.x);
    REQUIRE(tree.groups(2) == Partition{{0, 1}, {2, 3}});
    const CVConfig cv{5, 11};
    const auto pred = Predictor::lasso();
    const auto sel = nonuniform_cutoff(d.x, d.y, tree, pred, cv, 0.0);
    check_frontier(tree, sel.frontier);

    std::vector<std::vector<std::size_t>> supports;
    for (auto id : sel.frontier.nodes) supports.push_back(tree.nodes()[id].members);
    CHECK(supports == Partition{{0}, {1}, {2, 3}});
    CHECK(sel.final_loss <= sel.root_loss);

    const std::size_t root = tree.nodes().size() - 1;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> best_ids;
    for (const auto& ids : all_frontiers(tree, root)) {
        const double loss = cv_loss(node_features(d.x, tree, ids), d.y, pred, cv).loss;
        if (loss < best) {
            best = loss;
            best_ids = ids;
        }
    }
    std::sort(best_ids.begin(), best_ids.end());
    auto chosen = sel.frontier.nodes;
    std::sort(chosen.begin(), chosen.end());
    CHECK(chosen == best_ids);
    CHECK(sel.final_loss == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("nonuniform_cutoff: frontier invariant and monotone loss on random data") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const auto x = oracle::random_data(50, 6, seed);
        const ResponseVector y(x.values().col(static_cast<Eigen::Index>(seed % 6)) + 0.2 * x.values().col(0));
        const auto tree = build_treelet_tree(x);
        const auto sel = nonuniform_cutoff(x, y, tree, Predictor::ridge({0.0, 1.0}), CVConfig{5, seed}, 0.0);
        CHECK_NOTHROW(check_frontier(tree, sel.frontier));
        CHECK(sel.final_loss <= sel.root_loss);
        double last = sel.root_loss;
        for (const auto& step : sel.trace) {
            if (!step.accepted) continue;
            CHECK(step.loss_after < last);
            last = step.loss_after;
        }
    }
    const auto x = oracle::random_data(30, 4, 1);
    const auto tree = build_treelet_tree(x);
    CHECK_THROWS_AS(check_frontier(tree, Frontier{{0, 1, 2}}), std::logic_error);
    CHECK_THROWS_AS(check_frontier(tree, Frontier{{0, 1, 2, 3, tree.nodes().size() - 1}}), std::logic_error);
}

TEST_CASE("supervised_growth: response copies a variable") {
    const auto x = oracle::random_data(50, 5, 21);
    const auto g = supervised_growth(x, ResponseVector(3.0 * x.values().col(2)));
    CHECK(g.tree.p() == 6);
    CHECK(g.tree.max_level() == 5);
    CHECK(g.tree.merges()[0].i == 0);
    CHECK(g.tree.merges()[0].j == 3);
    CHECK(g.response_cluster[0].empty());
    CHECK(g.response_cluster[1] == std::vector<std::size_t>{2});
}

TEST_CASE("supervised_growth: independent response joins last") {
    Rng rng(77);
    Matrix m(200, 4);
    Vector yv(200);
    for (Eigen::Index i = 0; i < 200; ++i) {
        const double f = rng.normal();
        for (Eigen::Index j = 0; j < 4; ++j) m(i, j) = f + 0.3 * rng.normal();
        yv(i) = rng.normal();
    }
    const auto g = supervised_growth(DataMatrix(m), ResponseVector(yv));
    // Oracle: inspect the augmented merge list directly.
    for (std::size_t k = 0; k + 1 < g.tree.merges().size(); ++k) {
        CHECK(g.tree.merges()[k].i != 0);
        CHECK(g.response_cluster[k].empty());
    }
    CHECK(g.tree.merges().back().i == 0);
    CHECK(g.response_cluster.back() == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK_THROWS_AS(supervised_growth(DataMatrix(m), ResponseVector(Vector::Constant(200, 1.0))), InputError);
}
