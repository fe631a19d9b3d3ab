#ifndef KMC_SCALE_HPP_
#define KMC_SCALE_HPP_

#include <vector>

#include "kmc/features.hpp"

namespace kmc
{
    struct ScaleConfig
    {
        int count = 11;
        double step = 1.02;
        int templateSize = 64; // samples are resized to templateSize x templateSize
        int cellSize = 4;
        int orientations = 9;
        double lambda = 0.01;
        double learningRate = 0.0025;
        double labelSigmaFactor = 0.25; // sigma = factor * sqrt(count)
    };

    struct ScaleState
    {
        ScaleConfig config;
        double currentScale = 1.0;
        std::vector<double> factors; // ascending, middle entry 1

        // One-dimensional filter over the scale axis, per descriptor element.
        ComplexTensor numerator;         // 1 x F x count
        std::vector<double> denominator; // count

        bool trained() const noexcept { return !denominator.empty(); }
        int middle() const noexcept { return static_cast<int>(factors.size()) / 2; }
    };

    /// step^e for e = -(count/2) .. count/2; count must be odd.
    std::vector<double> scaleFactors(int count, double step);

    ScaleState makeScaleState(const ScaleConfig& config = {});

    // Gaussian over the scale index, peak 1 at the middle row.
    std::vector<double> scaleLabels(int count, double sigma);

    /**
     * One row per factor (ascending): the patch of size
     * factor * currentScale * baseSize around `center`, resized to the
     * template and described by flattened HOG-lite. Each descriptor element
     * is centred across the pyramid and weighted by a Hann window over the
     * scale axis. Returns 1 x count x F.
     */
    RealTensor buildScaleSamples(const Image& frame, Point2 center, Size2 baseSize, const ScaleState& state);

    // Replaces the filter with one trained on `samples` alone.
    void trainScaleModel(ScaleState& state, const RealTensor& samples);

    /// Blends the filter towards `samples` with the configured learning rate.
    void updateScaleModel(ScaleState& state, const RealTensor& samples);

    std::vector<double> scaleResponse(const RealTensor& samples, const ScaleState& state);

    // Ties go to the row closest to the middle.
    int bestScaleIndex(const std::vector<double>& response);

    /// Multiplies currentScale by the best factor, then updates the filter with `samples`.
    ScaleState estimateScale(const RealTensor& samples, const ScaleState& state);
}

#endif
