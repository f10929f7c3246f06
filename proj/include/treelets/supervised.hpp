#pragma once

#include "treelets/core.hpp"
#include "treelets/treelet.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace treelets {

enum class PredictorKind { ridge, lasso };

std::string to_string(PredictorKind kind);

/// Penalized least-squares predictor with a penalty grid.
///
/// Ridge penalties are absolute: minimize |y - Fb|^2 + penalty |b|^2 on
/// centered data. Lasso penalties are fractions of lambda_max on
/// standardized features: minimize |y - Zb|^2 / 2n + lambda |b|_1 with
/// lambda = penalty * max_j |z_j' y| / n.
struct Predictor {
    PredictorKind kind = PredictorKind::ridge;
    std::vector<double> grid;

    static Predictor ridge(std::vector<double> grid = {0.0, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0});
    static Predictor lasso(std::vector<double> grid = {});

    void validate() const;
};

/// Affine model on raw feature scale.
struct FittedModel {
    double intercept = 0.0;
    Vector coefficients;
    double penalty = 0.0;

    Vector predict(const Matrix& features) const;
};

struct CVConfig {
    /// Number of folds; unset means min(10, n).
    std::optional<std::size_t> folds;
    std::uint64_t seed = 0;

    std::size_t folds_for(std::size_t n) const;
};

/// Fold label (0..folds-1) per sample: a seeded shuffle dealt round-robin,
/// so fold sizes differ by at most one.
std::vector<std::size_t> make_folds(std::size_t n, std::size_t folds, std::uint64_t seed);

inline constexpr double kLassoTolerance = 1e-10;
inline constexpr int kLassoMaxSweeps = 100000;

struct LassoSolution {
    Vector beta;
    int sweeps = 0;
};

/// Cyclic coordinate descent for |y - Xb|^2 / 2n + lambda |b|_1 (no
/// intercept, X used as given). Stops when no coefficient moves by more
/// than kLassoTolerance in a sweep.
LassoSolution lasso_cd(const Matrix& x, const Vector& y, double lambda, const Vector* warm_start = nullptr);

FittedModel fit_ridge(const Matrix& features, const Vector& y, double penalty);
/// `fraction` scales lambda_max of the centered, standardized training data.
FittedModel fit_lasso(const Matrix& features, const Vector& y, double fraction);
FittedModel fit_with_penalty(const Predictor& predictor, const Matrix& features, const Vector& y, double penalty);

/// Picks the grid penalty by cross-validation on (features, y), then refits on all rows.
FittedModel fit(const Predictor& predictor, const Matrix& features, const Vector& y, const CVConfig& cv);

struct CvLoss {
    double loss = 0.0;
    std::vector<double> fold_losses;
    std::vector<double> chosen_penalties;
};

/// Outer K-fold mean squared error. Inside every training split the penalty
/// is chosen by cross-validation: ridge on a fresh seeded split of the
/// training rows, lasso on the remaining outer folds.
CvLoss cv_loss(const Matrix& features, const ResponseVector& y, const Predictor& predictor, const CVConfig& cv);

struct LevelSelection {
    std::size_t level = 0;
    std::vector<double> losses;  ///< one per level 0..max_level
};

/// CV loss of the full basis at every level with shared folds; the argmin
/// wins, ties (1e-12 relative) going to the larger level.
LevelSelection cv_basis_selection(const DataMatrix& x, const ResponseVector& y, const TreeletTree& tree,
                                  const Predictor& predictor, const CVConfig& cv);

/// Antichain of tree nodes whose supports partition the variables.
struct Frontier {
    std::vector<std::size_t> nodes;  ///< ordered by minimum member
};

/// Throws std::logic_error unless `frontier` is an antichain covering every variable once.
void check_frontier(const TreeletTree& tree, const Frontier& frontier);

struct ExpansionStep {
    std::size_t step = 0;
    std::size_t node = 0;
    double loss_before = 0.0;
    double loss_after = 0.0;
    bool accepted = false;
};

struct FrontierSelection {
    Frontier frontier;
    double root_loss = 0.0;
    double final_loss = 0.0;
    std::vector<ExpansionStep> trace;
};

/// Greedy top-down refinement: starting from the root, repeatedly replace
/// the frontier node whose split into its children lowers the CV loss most,
/// as long as the decrease exceeds tau.
FrontierSelection nonuniform_cutoff(const DataMatrix& x, const ResponseVector& y, const TreeletTree& tree,
                                    const Predictor& predictor, const CVConfig& cv, double tau = 0.0);

struct SupervisedGrowth {
    TreeletTree tree;  ///< over p + 1 variables, the response is variable 0
    /// Per level 0..p: original-variable indices (0-based, excluding y) in y's group.
    std::vector<std::vector<std::size_t>> response_cluster;
};

/// Treelet on the augmented data (y / sd(y), x).
SupervisedGrowth supervised_growth(const DataMatrix& x, const ResponseVector& y);

}  // namespace treelets
