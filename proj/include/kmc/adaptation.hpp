#ifndef KMC_ADAPTATION_HPP_
#define KMC_ADAPTATION_HPP_

#include <deque>

#include "kmc/decoder.hpp"
#include "kmc/kernel_correlation.hpp"

namespace kmc
{
    constexpr double kSigmaFloor = 1e-6;

    struct LayerStats
    {
        int windowLength = 5;
        double etaBase = 0.0025;
        double etaMax = 0.025;
        bool inverseStability = false;

        std::deque<double> window; // most recent loss last
        double mu = 0.0;
        double sigma = kSigmaFloor;
        double stability = 1.0; // s of the latest update
        double etaK = 0.0025;

        LayerStats() = default;

        /// etaMax defaults to 10 * eta when negative.
        LayerStats(double eta, int windowLength, double etaMax = -1.0, bool inverseStability = false);
    };

    /**
     * Scores `loss` against the mean and (floored, population) standard
     * deviation of the losses already in the window, s = |l - mu| / sigma,
     * with s = 1 while fewer than two losses are known. Then sets
     * etaK = clamp(s * eta, 0, etaMax), or eta / (1 + s) in inverse mode,
     * pushes the loss and refreshes mu and sigma over the new window.
     */
    LayerStats& updateStability(LayerStats& stats, double loss);

    /// (1 - eta) * prev + eta * next for both the dual coefficients and the template.
    DualModel updateModel(const DualModel& prev, const DualModel& next, double eta);

    /// max(R) - R(pos); pos must lie inside the map.
    double layerLoss(const ResponseMap& response, GridIndex pos);

    /// Patch-pixel translation to the nearest cell of a circular response map.
    GridIndex translationToCell(Translation patchPx, int cellSize, int rows, int cols);
}

#endif
