#pragma once

#include "treelets/core.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace treelets {

struct Block {
    std::size_t size = 1;
    double rho = 0.0;  ///< within-block correlation in [0, 1)
};

/// One-factor Gaussian design: in block b, x_j = sqrt(rho_b) z_b + sqrt(1 - rho_b) e_j.
struct BlockDesign {
    std::vector<Block> blocks;
    std::size_t n = 100;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t p() const;
};

/// Response y = sum_k coefficient_k x_{active_k} + sigma e with
/// sigma^2 = var(signal) / snr, the signal variance measured on the sample.
struct ResponseSpec {
    std::vector<std::size_t> active;
    std::vector<double> coefficients;
    double snr = 1.0;
    std::uint64_t seed = 0;
};

/// snr at or above this is treated as noiseless.
inline constexpr double kNoiselessSnr = 1e12;

DataMatrix generate(const BlockDesign& design);

/// Population correlation matrix of the design.
Matrix population_correlation(const BlockDesign& design);

ResponseVector generate_response(const DataMatrix& x, const ResponseSpec& spec);

/// The noiseless part sum_k coefficient_k x_{active_k}.
Vector response_signal(const DataMatrix& x, const ResponseSpec& spec);

}  // namespace treelets
