#ifndef KMC_KERNEL_CORRELATION_HPP_
#define KMC_KERNEL_CORRELATION_HPP_

#include "kmc/features.hpp"
#include "kmc/labels.hpp"
#include "kmc/tensor.hpp"

namespace kmc
{
    // Per-channel 2-D DFT. Forward is unscaled, inverse is scaled by 1/(MN).
    ComplexTensor dft2(const RealTensor& x);
    ComplexTensor dft2(const ComplexTensor& x);
    ComplexTensor idft2(const ComplexTensor& x);

    /**
     * Real part of a spectrum-domain result that should be real. Throws
     * NumericError when the largest imaginary component exceeds
     * `tolerance` times the largest magnitude.
     */
    RealTensor realPart(const ComplexTensor& x, double tolerance = 1e-6);

    /// Sum over channels of the elementwise products; returns one channel.
    ComplexTensor multichannelDot(const ComplexTensor& xHat, const ComplexTensor& wHat);

    /// Linear correlation filter in closed form, one spectrum per channel.
    ComplexTensor trainLinear(const FeatureMap& x, const RealTensor& y, double lambda);

    /**
     * Dense ridge regression over every cyclic shift of a single-channel x.
     * The data operator is 2-D circular convolution with x (its columns are the
     * MN cyclic shifts of x), matching the unconjugated product of the
     * frequency-domain model. Intended as a reference for small maps.
     */
    RealTensor bruteForceRidge(const FeatureMap& x, const RealTensor& y, double lambda);

    /**
     * Gaussian kernel correlation over all cyclic shifts:
     * k = exp(-max(0, |x|^2 + |x2|^2 - 2 F^-1(sum_d conj(X_d) X2_d)) / sigma),
     * with norms taken over the full tensor. Entry s compares x with x2
     * translated back by s.
     */
    RealTensor rbfKernelCorrelation(const FeatureMap& x, const FeatureMap& x2, double sigma);

    /// Dual coefficients in the Fourier domain: Y / (F(kxx) + lambda).
    ComplexTensor trainDual(const RealTensor& kxx, const RealTensor& y, double lambda);

    struct DualModel
    {
        ComplexTensor alphaHat; // 1 x M x N
        FeatureMap templ;       // training sample
        double lambda = 1e-4;
        double kernelSigma = 0.2;
    };

    DualModel trainDualModel(const FeatureMap& x, const LabelMap& y, double lambda, double kernelSigma);

    struct ResponseMap
    {
        RealTensor data; // 1 x M x N, origin = zero shift
        int layerId = 1;
        int cellSize = 1;
    };

    ResponseMap detectResponse(const DualModel& model, const FeatureMap& z);

    struct GridIndex
    {
        int row = 0;
        int col = 0;

        bool operator==(const GridIndex&) const = default;
    };

    /// Channel-0 argmax, ties resolved to the lowest row-major index.
    GridIndex argmax(const RealTensor& map);

    /// Circular index to signed shift; indices above size/2 wrap negative.
    int signedShift(int index, int size);

    /// out(c, (r + dr) mod M, (col + dc) mod N) = in(c, r, col).
    template <typename T>
    Tensor<T> circularShift(const Tensor<T>& in, int dr, int dc)
    {
        Tensor<T> out(in.channels(), in.rows(), in.cols());
        const int m = in.rows(), n = in.cols();
        if (m == 0 || n == 0)
            return out;
        const int sr = ((dr % m) + m) % m;
        const int sc = ((dc % n) + n) % n;
        for (int c = 0; c < in.channels(); ++c)
            for (int r = 0; r < m; ++r)
                for (int col = 0; col < n; ++col)
                    out(c, (r + sr) % m, (col + sc) % n) = in(c, r, col);
        return out;
    }
}

#endif
