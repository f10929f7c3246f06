#include "treelets/supervised.hpp"

#include "treelets/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace treelets {

namespace {

using Index = Eigen::Index;

constexpr Index idx(std::size_t k) { return static_cast<Index>(k); }

double soft_threshold(double z, double lambda) {
    if (z > lambda) return z - lambda;
    if (z < -lambda) return z + lambda;
    return 0.0;
}

/// Coordinate descent on the Gram form: minimize b'Gb/2 - c'b + lambda |b|_1.
int cd_on_gram(const Matrix& gram, const Vector& xty, double lambda, Vector& beta) {
    const Index p = gram.rows();
    Vector grad = xty - gram * beta;
    for (int sweep = 1; sweep <= kLassoMaxSweeps; ++sweep) {
        double max_change = 0.0;
        for (Index j = 0; j < p; ++j) {
            const double gjj = gram(j, j);
            if (!(gjj > 0.0)) {
                beta(j) = 0.0;
                continue;
            }
            const double updated = soft_threshold(grad(j) + gjj * beta(j), lambda) / gjj;
            const double delta = updated - beta(j);
            if (delta != 0.0) {
                grad -= gram.col(j) * delta;
                beta(j) = updated;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        if (max_change < kLassoTolerance) return sweep;
    }
    throw NumericalError("lasso coordinate descent did not converge in " + std::to_string(kLassoMaxSweeps) +
                         " sweeps");
}

/// Centered (and for the lasso, standardized) training problem.
struct TrainingProblem {
    Vector mean;
    Vector scale;  ///< divisor applied to each centered column; 0 marks an excluded column
    double y_mean = 0.0;
    Matrix gram;
    Vector xty;
    std::size_t n = 0;

    TrainingProblem(const Matrix& f, const Vector& y, PredictorKind kind) : n(static_cast<std::size_t>(f.rows())) {
        mean = f.colwise().mean().transpose();
        y_mean = y.mean();
        Matrix z = f.rowwise() - mean.transpose();
        const Vector yc = y.array() - y_mean;
        scale = Vector::Ones(f.cols());
        if (kind == PredictorKind::lasso) {
            const Vector var = z.colwise().squaredNorm().transpose() / static_cast<double>(n);
            const double cutoff = 1e-12 * std::max(var.size() > 0 ? var.maxCoeff() : 0.0, 0.0);
            for (Index j = 0; j < z.cols(); ++j) {
                if (var(j) > cutoff && var(j) > 0.0) {
                    scale(j) = std::sqrt(var(j));
                    z.col(j) /= scale(j);
                } else {
                    scale(j) = 0.0;
                    z.col(j).setZero();
                }
            }
            gram = z.transpose() * z / static_cast<double>(n);
            xty = z.transpose() * yc / static_cast<double>(n);
        } else {
            gram = z.transpose() * z;
            xty = z.transpose() * yc;
        }
    }

    double lambda_max() const { return xty.size() > 0 ? xty.cwiseAbs().maxCoeff() : 0.0; }

    FittedModel to_model(const Vector& beta, double penalty) const {
        FittedModel model;
        model.penalty = penalty;
        model.coefficients = Vector::Zero(beta.size());
        for (Index j = 0; j < beta.size(); ++j) {
            if (scale(j) > 0.0) model.coefficients(j) = beta(j) / scale(j);
        }
        model.intercept = y_mean - mean.dot(model.coefficients);
        return model;
    }
};

/// Models for the given absolute penalties (lambda for the lasso).
std::vector<FittedModel> fit_path(PredictorKind kind, const Matrix& f, const Vector& y,
                                  const std::vector<double>& penalties, const std::vector<double>& labels) {
    const TrainingProblem problem(f, y, kind);
    std::vector<FittedModel> models(penalties.size());
    if (kind == PredictorKind::ridge) {
        std::optional<Eigen::CompleteOrthogonalDecomposition<Matrix>> cod;
        for (std::size_t k = 0; k < penalties.size(); ++k) {
            Vector beta;
            if (penalties[k] == 0.0) {
                if (!cod) cod.emplace(problem.gram);
                beta = cod->solve(problem.xty);
            } else {
                const Matrix a = problem.gram + penalties[k] * Matrix::Identity(problem.gram.rows(), problem.gram.cols());
                beta = a.ldlt().solve(problem.xty);
            }
            models[k] = problem.to_model(beta, labels[k]);
        }
        return models;
    }
    // Lasso: warm-started path in decreasing lambda.
    std::vector<std::size_t> order(penalties.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return penalties[a] > penalties[b]; });
    Vector beta = Vector::Zero(f.cols());
    for (std::size_t k : order) {
        cd_on_gram(problem.gram, problem.xty, penalties[k], beta);
        models[k] = problem.to_model(beta, labels[k]);
    }
    return models;
}

/// Absolute penalties for a training set given the predictor's grid.
std::vector<double> absolute_penalties(const Predictor& predictor, const Matrix& f, const Vector& y) {
    if (predictor.kind == PredictorKind::ridge) return predictor.grid;
    const double lmax = TrainingProblem(f, y, PredictorKind::lasso).lambda_max();
    std::vector<double> out;
    for (double g : predictor.grid) out.push_back(g * lmax);
    return out;
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(idx(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(idx(r)) = m.row(idx(rows[r]));
    return out;
}

Vector take_rows(const Vector& v, const std::vector<std::size_t>& rows) {
    Vector out(idx(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out(idx(r)) = v(idx(rows[r]));
    return out;
}

double mse(const FittedModel& model, const Matrix& f, const Vector& y) {
    return (model.predict(f) - y).squaredNorm() / static_cast<double>(y.size());
}

/// Index of the grid penalty with the lowest inner CV error; ties go to the larger penalty.
std::size_t choose_penalty(const Predictor& predictor, const Matrix& f, const Vector& y,
                           const std::vector<std::size_t>& labels, std::size_t folds,
                           const std::vector<double>& penalties) {
    std::vector<double> loss(penalties.size(), 0.0);
    for (std::size_t k = 0; k < folds; ++k) {
        std::vector<std::size_t> train;
        std::vector<std::size_t> test;
        for (std::size_t r = 0; r < labels.size(); ++r) (labels[r] == k ? test : train).push_back(r);
        const auto models = fit_path(predictor.kind, take_rows(f, train), take_rows(y, train), penalties, penalties);
        const Matrix ft = take_rows(f, test);
        const Vector yt = take_rows(y, test);
        for (std::size_t g = 0; g < penalties.size(); ++g) loss[g] += mse(models[g], ft, yt);
    }
    std::size_t best = 0;
    for (std::size_t g = 1; g < penalties.size(); ++g) {
        const double tol = 1e-12 * std::max(1.0, std::abs(loss[best]));
        if (loss[g] < loss[best] - tol ||
            (std::abs(loss[g] - loss[best]) <= tol && predictor.grid[g] > predictor.grid[best])) {
            best = g;
        }
    }
    return best;
}

/// Fits on the training rows, choosing the penalty by inner CV with `inner` fold labels.
FittedModel train(const Predictor& predictor, const Matrix& f, const Vector& y,
                  const std::vector<std::size_t>& inner, std::size_t inner_folds) {
    const auto penalties = absolute_penalties(predictor, f, y);
    std::size_t choice = 0;
    if (penalties.size() > 1) choice = choose_penalty(predictor, f, y, inner, inner_folds, penalties);
    return fit_path(predictor.kind, f, y, {penalties[choice]}, {predictor.grid[choice]}).front();
}

Matrix frontier_features(const Matrix& node_features, const Frontier& frontier) {
    Matrix out(node_features.rows(), idx(frontier.nodes.size()));
    for (std::size_t k = 0; k < frontier.nodes.size(); ++k) out.col(idx(k)) = node_features.col(idx(frontier.nodes[k]));
    return out;
}

}  // namespace

std::string to_string(PredictorKind kind) {
    return kind == PredictorKind::ridge ? "ridge" : "lasso";
}

Predictor Predictor::ridge(std::vector<double> grid) {
    Predictor p{PredictorKind::ridge, std::move(grid)};
    p.validate();
    return p;
}

Predictor Predictor::lasso(std::vector<double> grid) {
    if (grid.empty()) {
        for (int k = 0; k < 20; ++k) grid.push_back(std::pow(10.0, -3.0 * k / 19.0));
    }
    Predictor p{PredictorKind::lasso, std::move(grid)};
    p.validate();
    return p;
}

void Predictor::validate() const {
    if (grid.empty()) throw InputError("predictor penalty grid is empty");
    for (double g : grid) {
        if (!(g >= 0.0) || !std::isfinite(g)) throw InputError("predictor penalties must be finite and >= 0");
    }
}

Vector FittedModel::predict(const Matrix& features) const {
    return (features * coefficients).array() + intercept;
}

std::size_t CVConfig::folds_for(std::size_t n) const {
    const std::size_t k = folds.value_or(std::min<std::size_t>(10, n));
    if (k < 2) throw InputError("cross-validation needs at least 2 folds");
    if (k > n) {
        throw InputError("fewer samples (" + std::to_string(n) + ") than folds (" + std::to_string(k) + ")");
    }
    return k;
}

std::vector<std::size_t> make_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
    if (folds < 1 || folds > n) throw InputError("invalid fold count");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::size_t> labels(n);
    for (std::size_t t = 0; t < n; ++t) labels[order[t]] = t % folds;
    return labels;
}

LassoSolution lasso_cd(const Matrix& x, const Vector& y, double lambda, const Vector* warm_start) {
    if (x.rows() != y.size()) throw InputError("lasso_cd: dimension mismatch");
    if (!(lambda >= 0.0)) throw InputError("lasso_cd: lambda must be >= 0");
    const auto n = static_cast<double>(x.rows());
    const Matrix gram = x.transpose() * x / n;
    const Vector xty = x.transpose() * y / n;
    LassoSolution out;
    out.beta = warm_start ? *warm_start : Vector::Zero(x.cols());
    out.sweeps = cd_on_gram(gram, xty, lambda, out.beta);
    return out;
}

FittedModel fit_ridge(const Matrix& features, const Vector& y, double penalty) {
    return fit_path(PredictorKind::ridge, features, y, {penalty}, {penalty}).front();
}

FittedModel fit_lasso(const Matrix& features, const Vector& y, double fraction) {
    const double lmax = TrainingProblem(features, y, PredictorKind::lasso).lambda_max();
    return fit_path(PredictorKind::lasso, features, y, {fraction * lmax}, {fraction}).front();
}

FittedModel fit_with_penalty(const Predictor& predictor, const Matrix& features, const Vector& y, double penalty) {
    return predictor.kind == PredictorKind::ridge ? fit_ridge(features, y, penalty) : fit_lasso(features, y, penalty);
}

FittedModel fit(const Predictor& predictor, const Matrix& features, const Vector& y, const CVConfig& cv) {
    predictor.validate();
    const auto n = static_cast<std::size_t>(y.size());
    const std::size_t k = cv.folds_for(n);
    return train(predictor, features, y, make_folds(n, k, cv.seed), k);
}

CvLoss cv_loss(const Matrix& features, const ResponseVector& y, const Predictor& predictor, const CVConfig& cv) {
    predictor.validate();
    const std::size_t n = y.size();
    if (static_cast<std::size_t>(features.rows()) != n) throw InputError("cv_loss: features and response lengths differ");
    const std::size_t folds = cv.folds_for(n);
    const auto labels = make_folds(n, folds, cv.seed);

    CvLoss result;
    for (std::size_t k = 0; k < folds; ++k) {
        std::vector<std::size_t> train_rows;
        std::vector<std::size_t> test_rows;
        for (std::size_t r = 0; r < n; ++r) (labels[r] == k ? test_rows : train_rows).push_back(r);
        const Matrix f_train = take_rows(features, train_rows);
        const Vector y_train = take_rows(y.values(), train_rows);

        std::vector<std::size_t> inner;
        std::size_t inner_folds = 0;
        if (predictor.kind == PredictorKind::lasso && folds > 2) {
            // Remaining outer folds, relabelled 0..folds-2.
            for (std::size_t r : train_rows) inner.push_back(labels[r] < k ? labels[r] : labels[r] - 1);
            inner_folds = folds - 1;
        } else {
            inner_folds = std::min(folds, train_rows.size());
            inner = make_folds(train_rows.size(), inner_folds, substream_seed(cv.seed, k + 1));
        }
        const FittedModel model = train(predictor, f_train, y_train, inner, inner_folds);
        result.fold_losses.push_back(mse(model, take_rows(features, test_rows), take_rows(y.values(), test_rows)));
        result.chosen_penalties.push_back(model.penalty);
    }
    double total = 0.0;
    for (double l : result.fold_losses) total += l;
    result.loss = total / static_cast<double>(folds);
    return result;
}

LevelSelection cv_basis_selection(const DataMatrix& x, const ResponseVector& y, const TreeletTree& tree,
                                  const Predictor& predictor, const CVConfig& cv) {
    if (x.p() != tree.p()) throw InputError("cv_basis_selection: data and tree disagree on p");
    if (y.size() != x.n()) throw InputError("cv_basis_selection: response length differs from sample count");
    LevelSelection out;
    Matrix coeffs = x.values();
    out.losses.push_back(cv_loss(coeffs, y, predictor, cv).loss);
    for (const auto& m : tree.merges()) {
        rotate_columns(coeffs, m.i, m.j, JacobiStep{m.theta, std::cos(m.theta), std::sin(m.theta)});
        out.losses.push_back(cv_loss(coeffs, y, predictor, cv).loss);
    }
    const double best = *std::min_element(out.losses.begin(), out.losses.end());
    const double tol = 1e-12 * std::max(1.0, std::abs(best));
    for (std::size_t level = out.losses.size(); level-- > 0;) {
        if (out.losses[level] <= best + tol) {
            out.level = level;
            break;
        }
    }
    return out;
}

void check_frontier(const TreeletTree& tree, const Frontier& frontier) {
    std::vector<int> cover(tree.p(), 0);
    for (std::size_t id : frontier.nodes) {
        if (id >= tree.nodes().size()) throw std::logic_error("frontier references an unknown node");
        for (std::size_t v : tree.nodes()[id].members) ++cover[v];
    }
    // Disjoint supports covering every variable once also rule out ancestor pairs.
    for (int c : cover) {
        if (c != 1) throw std::logic_error("frontier supports do not partition the variables");
    }
}

FrontierSelection nonuniform_cutoff(const DataMatrix& x, const ResponseVector& y, const TreeletTree& tree,
                                    const Predictor& predictor, const CVConfig& cv, double tau) {
    if (x.p() != tree.p()) throw InputError("nonuniform_cutoff: data and tree disagree on p");
    if (y.size() != x.n()) throw InputError("nonuniform_cutoff: response length differs from sample count");
    if (!(tau >= 0.0)) throw InputError("tau must be >= 0");
    const Matrix node_features = x.values() * node_scale_vectors(tree);
    const auto& nodes = tree.nodes();
    auto by_min_member = [&](std::size_t a, std::size_t b) { return nodes[a].members.front() < nodes[b].members.front(); };

    FrontierSelection out;
    out.frontier.nodes = tree.active_nodes(tree.max_level());
    check_frontier(tree, out.frontier);
    double current = cv_loss(frontier_features(node_features, out.frontier), y, predictor, cv).loss;
    out.root_loss = current;

    for (std::size_t step = 1;; ++step) {
        std::optional<Frontier> best_frontier;
        double best_loss = current;
        std::size_t best_entry = 0;
        for (std::size_t id : out.frontier.nodes) {
            if (nodes[id].is_leaf()) continue;
            Frontier candidate;
            for (std::size_t other : out.frontier.nodes) {
                if (other != id) candidate.nodes.push_back(other);
            }
            candidate.nodes.push_back(*nodes[id].left);
            candidate.nodes.push_back(*nodes[id].right);
            std::sort(candidate.nodes.begin(), candidate.nodes.end(), by_min_member);
            const double loss = cv_loss(frontier_features(node_features, candidate), y, predictor, cv).loss;
            out.trace.push_back(ExpansionStep{step, id, current, loss, false});
            if (current - loss > current - best_loss) {
                best_loss = loss;
                best_frontier = std::move(candidate);
                best_entry = out.trace.size() - 1;
            }
        }
        if (!best_frontier || !(current - best_loss > tau)) break;
        out.trace[best_entry].accepted = true;
        out.frontier = std::move(*best_frontier);
        check_frontier(tree, out.frontier);
        current = best_loss;
    }
    out.final_loss = current;
    return out;
}

SupervisedGrowth supervised_growth(const DataMatrix& x, const ResponseVector& y) {
    if (y.size() != x.n()) throw InputError("supervised_growth: response length differs from sample count");
    const Vector& yv = y.values();
    const double mean = yv.mean();
    const double var = (yv.array() - mean).square().sum() / static_cast<double>(yv.size() - 1);
    if (!(var > kMinVariance)) throw InputError("zero-variance response 'y'");

    Matrix augmented(x.values().rows(), x.values().cols() + 1);
    augmented.col(0) = yv / std::sqrt(var);
    augmented.rightCols(x.values().cols()) = x.values();
    std::vector<std::string> names{"y"};
    names.insert(names.end(), x.names().begin(), x.names().end());
    const DataMatrix data(std::move(augmented), std::move(names));

    SupervisedGrowth out{build_treelet_tree(data), {}};
    for (std::size_t level = 0; level <= out.tree.max_level(); ++level) {
        std::vector<std::size_t> cluster;
        for (const auto& group : out.tree.groups(level)) {
            if (group.front() != 0) continue;
            for (std::size_t v : group) {
                if (v != 0) cluster.push_back(v - 1);
            }
        }
        out.response_cluster.push_back(std::move(cluster));
    }
    return out;
}

}  // namespace treelets
