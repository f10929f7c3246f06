#include "treelets/synth.hpp"

#include "treelets/random.hpp"

#include <cmath>

namespace treelets {

void BlockDesign::validate() const {
    if (blocks.empty()) throw InputError("design needs at least one block");
    for (const auto& b : blocks) {
        if (b.size < 1) throw InputError("block sizes must be >= 1");
        if (!(b.rho >= 0.0 && b.rho < 1.0)) throw InputError("block correlation must lie in [0, 1)");
    }
    if (n < 2) throw InputError("design needs n >= 2");
    if (p() < 2) throw InputError("design needs at least 2 variables");
}

std::size_t BlockDesign::p() const {
    std::size_t p = 0;
    for (const auto& b : blocks) p += b.size;
    return p;
}

DataMatrix generate(const BlockDesign& design) {
    design.validate();
    const auto n = static_cast<Eigen::Index>(design.n);
    Matrix x(n, static_cast<Eigen::Index>(design.p()));
    Rng rng(design.seed);
    // Row-major draw order: for each sample, the block factors then the idiosyncratic noise.
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index col = 0;
        for (const auto& b : design.blocks) {
            const double z = rng.normal();
            const double load = std::sqrt(b.rho);
            const double spread = std::sqrt(1.0 - b.rho);
            for (std::size_t k = 0; k < b.size; ++k) x(i, col++) = load * z + spread * rng.normal();
        }
    }
    return DataMatrix(std::move(x));
}

Matrix population_correlation(const BlockDesign& design) {
    design.validate();
    const auto p = static_cast<Eigen::Index>(design.p());
    Matrix c = Matrix::Identity(p, p);
    Eigen::Index start = 0;
    for (const auto& b : design.blocks) {
        const auto size = static_cast<Eigen::Index>(b.size);
        for (Eigen::Index a = 0; a < size; ++a) {
            for (Eigen::Index d = 0; d < size; ++d) {
                if (a != d) c(start + a, start + d) = b.rho;
            }
        }
        start += size;
    }
    return c;
}

Vector response_signal(const DataMatrix& x, const ResponseSpec& spec) {
    if (spec.active.empty()) throw InputError("response needs a nonempty active set");
    if (spec.active.size() != spec.coefficients.size()) {
        throw InputError("response active set and coefficients differ in length");
    }
    Vector signal = Vector::Zero(x.values().rows());
    for (std::size_t k = 0; k < spec.active.size(); ++k) {
        if (spec.active[k] >= x.p()) throw InputError("response active index " + std::to_string(spec.active[k]) + " out of range");
        signal += spec.coefficients[k] * x.values().col(static_cast<Eigen::Index>(spec.active[k]));
    }
    return signal;
}

ResponseVector generate_response(const DataMatrix& x, const ResponseSpec& spec) {
    if (!(spec.snr > 0.0)) throw InputError("snr must be > 0");
    const Vector signal = response_signal(x, spec);
    const double mean = signal.mean();
    const double var = (signal.array() - mean).square().sum() / static_cast<double>(signal.size() - 1);
    if (!(var > kMinVariance)) throw InputError("response signal is empty (zero variance)");
    if (spec.snr >= kNoiselessSnr) return ResponseVector(signal);

    const double sigma = std::sqrt(var / spec.snr);
    Rng rng(spec.seed);
    Vector y = signal;
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += sigma * rng.normal();
    return ResponseVector(std::move(y));
}

}  // namespace treelets
