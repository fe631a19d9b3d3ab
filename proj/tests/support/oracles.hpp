#ifndef KMC_TEST_ORACLES_HPP_
#define KMC_TEST_ORACLES_HPP_

// Direct, FFT-free reference computations used to freeze expected values.

#include <random>

#include "kmc/features.hpp"
#include "kmc/tensor.hpp"

namespace kmc::oracle
{
    RealTensor randomTensor(std::mt19937_64& rng, int channels, int rows, int cols, double lo = 0.0, double hi = 1.0);

    /// O(n^2) summation DFT of every channel.
    ComplexTensor naiveDft2(const RealTensor& x);

    /// t(c, r, col) -> t(c, r + dr, col + dc) cyclically (content moves by +(dr, dc)).
    RealTensor translate(const RealTensor& t, int dr, int dc);

    double squaredDistance(const RealTensor& a, const RealTensor& b);

    /// k[s] = exp(-|x - translate(x2, -s)|^2 / sigma) by explicit shifting.
    RealTensor slidingShiftKernel(const RealTensor& x, const RealTensor& x2, double sigma);

    /// Spatial alpha solving (K + lambda I) alpha = y with K(p, q) = kxx[p - q].
    RealTensor denseCirculantSolve(const RealTensor& kxx, const RealTensor& y, double lambda);

    /**
     * Kernel ridge regression with the samples translate(x, p) for every p:
     * explicit Gram matrix, dense solve, then f[s] = sum_p alpha_p k(translate(z, -s), translate(x, p)).
     */
    RealTensor denseKernelRegressionResponse(const RealTensor& x, const RealTensor& z, const RealTensor& y,
        double sigma, double lambda);
}

#endif
