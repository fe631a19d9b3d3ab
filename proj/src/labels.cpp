#include "kmc/labels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace kmc
{
    LabelMap gaussianLabels(int rows, int cols, Size2 targetSizeCells, double bandwidthFactor)
    {
        if (rows < 1 || cols < 1)
            throw ShapeError("label map needs at least one cell");
        if (!(targetSizeCells.w > 0.0) || !(targetSizeCells.h > 0.0) || !(bandwidthFactor > 0.0))
            throw InvalidTarget("label bandwidth must be positive");

        LabelMap y;
        y.sigmaRow = bandwidthFactor * targetSizeCells.h;
        y.sigmaCol = bandwidthFactor * targetSizeCells.w;
        y.data = RealTensor(1, rows, cols);

        std::vector<double> rowTerm(rows), colTerm(cols);
        for (int i = 0; i < rows; ++i)
        {
            const double d = std::min(i, rows - i);
            rowTerm[i] = d * d / (2.0 * y.sigmaRow * y.sigmaRow);
        }
        for (int j = 0; j < cols; ++j)
        {
            const double d = std::min(j, cols - j);
            colTerm[j] = d * d / (2.0 * y.sigmaCol * y.sigmaCol);
        }
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                y.data(i, j) = std::exp(-(rowTerm[i] + colTerm[j]));
        return y;
    }
}
