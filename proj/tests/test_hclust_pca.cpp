#include <doctest.h>

#include "oracles.hpp"
#include "treelets/hclust_pca.hpp"
#include "treelets/random.hpp"

#include <cmath>
#include <numbers>

using namespace treelets;

namespace {

SimilarityMatrix three_by_three(double s12, double s13, double s23) {
    Matrix s(3, 3);
    s << 1.0, s12, s13, s12, 1.0, s23, s13, s23, 1.0;
    return SimilarityMatrix(s);
}

std::vector<std::size_t> labels_of(const Partition& part, std::size_t p) {
    std::vector<std::size_t> labels(p, 0);
    for (std::size_t c = 0; c < part.size(); ++c) {
        for (auto v : part[c]) labels[v] = c;
    }
    return labels;
}

Partition random_partition(std::size_t p, std::size_t k, Rng& rng) {
    Partition part(k);
    for (std::size_t v = 0; v < p; ++v) part[rng.below(k)].push_back(v);
    Partition out;
    for (auto& g : part) {
        if (!g.empty()) out.push_back(g);
    }
    return out;
}

}  // namespace

TEST_CASE("complete linkage: three-variable hand trace") {
    const auto tree = complete_linkage_tree(three_by_three(0.9, 0.5, 0.4));
    REQUIRE(tree.merges().size() == 2);
    CHECK(tree.merges()[0].a == 0);
    CHECK(tree.merges()[0].b == 1);
    CHECK(tree.merges()[0].distance == doctest::Approx(0.1).epsilon(1e-15));
    // Complete linkage: max(1 - 0.5, 1 - 0.4) = 0.6.
    CHECK(tree.merges()[1].a == 3);
    CHECK(tree.merges()[1].b == 2);
    CHECK(tree.merges()[1].distance == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(tree.membership(1) == Partition{{0, 1}, {2}});
    CHECK(tree.membership(2) == Partition{{0, 1, 2}});
}

TEST_CASE("complete linkage: exact ties resolve to the smallest pair") {
    const auto tree = complete_linkage_tree(three_by_three(0.7, 0.7, 0.7));
    CHECK(tree.merges()[0].a == 0);
    CHECK(tree.merges()[0].b == 1);
    CHECK(complete_linkage_tree(three_by_three(0.7, 0.7, 0.7)).merges() == tree.merges());
}

TEST_CASE("complete linkage: matches the naive max-over-members reference") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const std::size_t p = 3 + (seed * 7) % 48;
        const auto s = correlation_similarity(oracle::random_data(60, p, seed));
        const auto tree = complete_linkage_tree(s);
        const auto ref = oracle::reference_complete_linkage(s);
        REQUIRE(tree.merges().size() == ref.size());
        for (std::size_t k = 0; k < ref.size(); ++k) {
            CHECK(tree.merges()[k].a == ref[k].a);
            CHECK(tree.merges()[k].b == ref[k].b);
            CHECK(tree.merges()[k].members == ref[k].members);
            CHECK(std::abs(tree.merges()[k].distance - ref[k].distance) < 1e-12);
        }
        for (std::size_t k = 1; k < ref.size(); ++k) {
            CHECK(tree.merges()[k].distance >= tree.merges()[k - 1].distance - 1e-15);
        }
    }
}

TEST_CASE("first_pc: examples") {
    Matrix c(2, 2);
    c << 1.0, 0.9, 0.9, 1.0;
    const Vector v = first_pc(c);
    CHECK(v(0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(v(1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

    Matrix d(3, 3);
    d << 4, 0, 0, 0, 1, 0, 0, 0, 2;
    const Vector e = first_pc(d);
    CHECK(e(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(e(1)) < 1e-12);
    CHECK(std::abs(e(2)) < 1e-12);

    Matrix one(1, 1);
    one << 3.0;
    CHECK(first_pc(one)(0) == 1.0);
}

TEST_CASE("first_pc: agrees with the characteristic-polynomial reference") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const std::size_t k = 2 + seed % 5;
        const Matrix c = oracle::random_psd(k, seed);
        const auto [lambda, ref] = oracle::reference_leading_eigen(c);
        const Vector v = first_pc(c);
        CHECK(std::abs(v.norm() - 1.0) < 1e-12);
        CHECK(std::min((v - ref).norm(), (v + ref).norm()) < 1e-6);
        CHECK((c * v - lambda * v).norm() < 1e-8 * std::max(1.0, lambda));
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        CHECK(v(arg) > 0.0);
    }
}

TEST_CASE("first_pc: eigen-residual on correlation blocks") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto x = oracle::random_data(80, 2 + seed % 9, seed);
        const Matrix c = covariance_matrix(x);
        const Vector v = first_pc(c);
        const double lambda = v.dot(c * v);
        CHECK((c * v - lambda * v).norm() < 1e-8);
    }
}

TEST_CASE("local PCA basis: disjoint unit columns matching the cluster eigenvectors") {
    const auto x = oracle::random_data(70, 9, 31);
    const auto tree = complete_linkage_tree(correlation_similarity(x));
    const Matrix c = covariance_matrix(x);
    for (std::size_t level = 0; level < 9; ++level) {
        const auto basis = local_pca_basis(x, tree, level);
        CHECK(basis.clusters == tree.membership(level));
        CHECK(static_cast<std::size_t>(basis.vectors.cols()) == 9 - level);
        const Matrix gram = basis.vectors.transpose() * basis.vectors;
        CHECK((gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() < 1e-12);
        for (std::size_t k = 0; k < basis.clusters.size(); ++k) {
            const auto& members = basis.clusters[k];
            Matrix sub(members.size(), members.size());
            for (std::size_t a = 0; a < members.size(); ++a) {
                for (std::size_t b = 0; b < members.size(); ++b) {
                    sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                        c(static_cast<Eigen::Index>(members[a]), static_cast<Eigen::Index>(members[b]));
                }
            }
            const auto [lambda, ref] = oracle::reference_leading_eigen(sub);
            Vector got(static_cast<Eigen::Index>(members.size()));
            for (std::size_t a = 0; a < members.size(); ++a) {
                got(static_cast<Eigen::Index>(a)) = basis.vectors(static_cast<Eigen::Index>(members[a]), static_cast<Eigen::Index>(k));
            }
            CHECK(std::min((got - ref).norm(), (got + ref).norm()) < 1e-6);
            CHECK(std::abs(basis.vectors.col(static_cast<Eigen::Index>(k)).norm() - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("adjusted rand: examples and pair-counting oracle") {
    CHECK(adjusted_rand({{0, 1}, {2}}, {{0}, {1, 2}}) == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(oracle::reference_adjusted_rand({0, 0, 1}, {0, 1, 1}) == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(adjusted_rand({{0, 1, 2}}, {{0, 1, 2}}) == 1.0);
    CHECK(adjusted_rand({{0}, {1}, {2}}, {{0}, {1}, {2}}) == 1.0);
    Rng rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t p = 2 + rng.below(12);
        const auto a = random_partition(p, 1 + rng.below(p), rng);
        const auto b = random_partition(p, 1 + rng.below(p), rng);
        const double got = adjusted_rand(a, b);
        const double ref = oracle::reference_adjusted_rand(labels_of(a, p), labels_of(b, p));
        if (std::isfinite(ref)) CHECK(std::abs(got - ref) < 1e-12);
        CHECK(got <= 1.0 + 1e-12);
        CHECK(adjusted_rand(a, a) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(got == doctest::Approx(adjusted_rand(b, a)).epsilon(1e-12));
    }
}

TEST_CASE("principal angles: identical, orthogonal, and a known rotation") {
    const Matrix e1 = Matrix::Identity(4, 4).leftCols(2);
    CHECK(max_principal_angle(e1, e1) < 1e-12);
    const Matrix e2 = Matrix::Identity(4, 4).rightCols(2);
    CHECK(max_principal_angle(e1, e2) == doctest::Approx(std::numbers::pi / 2.0).epsilon(1e-12));
    Matrix r = e1;
    const double t = 1e-7;
    r.col(1) = std::cos(t) * e1.col(1) + std::sin(t) * e2.col(0);
    CHECK(max_principal_angle(e1, r) == doctest::Approx(t).epsilon(1e-6));
    Matrix q(4, 2);
    q.col(0) = e1.col(0);
    q.col(1) = std::cos(0.3) * e1.col(1) + std::sin(0.3) * e2.col(1);
    CHECK(max_principal_angle(e1, q) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("cophenetic correlation: constants and self") {
    CHECK(cophenetic_correlation({1, 1, 1}, {1, 1, 1}) == 1.0);
    CHECK(cophenetic_correlation({1, 1, 1}, {1, 2, 3}) == 0.0);
    CHECK(cophenetic_correlation({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0).epsilon(1e-14));
    const auto x = oracle::random_data(50, 6, 4);
    const auto t = build_treelet_tree(x);
    const auto h = cophenetic_heights(t);
    CHECK(h.size() == 15);
    CHECK(cophenetic_correlation(h, h) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("compare: a treelet tree against itself") {
    const auto x = oracle::random_data(60, 7, 2);
    const auto t = build_treelet_tree(x);
    const auto report = compare(t, t);
    CHECK(report.levels.size() == 7);
    for (const auto& row : report.levels) {
        CHECK(row.adjusted_rand == 1.0);
        CHECK(row.max_principal_angle < 1e-10);
    }
    CHECK(report.cophenetic_correlation == doctest::Approx(1.0).epsilon(1e-12));
    const auto partial = compare(t, t, LevelRange{2, 4});
    CHECK(partial.levels.size() == 3);
    CHECK(partial.levels.front().level == 2);
    CHECK_THROWS_AS(compare(t, t, LevelRange{3, 9}), InputError);
    CHECK_THROWS_AS(compare(t, t, LevelRange{4, 3}), InputError);
}

TEST_CASE("compare: exact duplicate blocks agree with complete linkage at the block level") {
    const auto x = oracle::duplicate_blocks(100, 3, 3, 6, 0.0);
    const auto t = build_treelet_tree(x);
    const auto c = complete_linkage_tree(correlation_similarity(x));
    const auto report = compare(x, t, c);
    CHECK(report.levels.size() == 6);
    CHECK(report.levels[0].adjusted_rand == 1.0);
    CHECK(report.levels[4].adjusted_rand == 1.0);
    CHECK(report.levels[4].max_principal_angle < 1e-6);
    CHECK(report.levels[5].adjusted_rand == 1.0);
}

TEST_CASE("first_pc: nearly tied leading eigenvalues do not settle") {
    Matrix c = Matrix::Zero(2, 2);
    c(0, 0) = 1.0;
    c(1, 1) = 1.0 - 1e-8;
    CHECK_THROWS_AS(first_pc(c), NumericalError);
    c(1, 1) = 0.5;
    CHECK(first_pc(c)(0) == doctest::Approx(1.0).epsilon(1e-12));
}
