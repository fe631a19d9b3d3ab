#ifndef KMC_LABELS_HPP_
#define KMC_LABELS_HPP_

#include "kmc/tensor.hpp"

namespace kmc
{
    struct LabelMap
    {
        RealTensor data; // 1 x M x N, peak 1 at the DFT origin
        double sigmaRow = 0.0;
        double sigmaCol = 0.0;
    };

    /**
     * Gaussian regression target with its peak at index (0,0) and circular
     * distances d_i = min(i, M - i). Bandwidths are bandwidthFactor times the
     * target size in cells.
     */
    LabelMap gaussianLabels(int rows, int cols, Size2 targetSizeCells, double bandwidthFactor = 0.1);
}

#endif
