#include "kmc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace kmc
{
    namespace
    {
        class SmoothField
        {
        public:
            SmoothField(int rows, int cols, double lo, double hi, std::mt19937_64& rng)
                : _values(1, rows, cols)
            {
                std::uniform_real_distribution<double> u(lo, hi);
                for (double& v : _values.flat())
                    v = u(rng);
            }

            // (u, v) in grid units, clamped at the border; needs at least 2x2 values
            double at(double u, double v) const
            {
                const int rows = _values.rows();
                const int cols = _values.cols();
                u = std::clamp(u, 0.0, cols - 1.0);
                v = std::clamp(v, 0.0, rows - 1.0);
                const int c0 = std::min(static_cast<int>(u), cols - 2);
                const int r0 = std::min(static_cast<int>(v), rows - 2);
                const int c1 = c0 + 1;
                const int r1 = r0 + 1;
                const double fu = u - c0;
                const double fv = v - r0;
                const double top = (1 - fu) * _values(r0, c0) + fu * _values(r0, c1);
                const double bottom = (1 - fu) * _values(r1, c0) + fu * _values(r1, c1);
                return (1 - fv) * top + fv * bottom;
            }

        private:
            RealTensor _values;
        };

        void checkConfig(const SyntheticSceneConfig& c)
        {
            if (c.width < 8 || c.height < 8)
                throw ConfigError("synthetic frame must be at least 8x8");
            if (c.frames < 1)
                throw ConfigError("synthetic sequence needs at least one frame");
            if (!(c.start.w > 0.0) || !(c.start.h > 0.0))
                throw InvalidTarget("synthetic target must have positive size");
            if (!(c.zoom > 0.0))
                throw ConfigError("zoom must be positive");
            if (c.textureCells < 2)
                throw ConfigError("target texture needs at least 2 cells");
            if (!(c.backgroundCellPx > 0.0))
                throw ConfigError("background cell size must be positive");
        }
    }

    BBox syntheticBox(const SyntheticSceneConfig& config, int frameIndex0)
    {
        const Point2 c0 = config.start.center();
        const double k = std::pow(config.zoom, frameIndex0);
        const Point2 c{c0.x + config.vx * frameIndex0, c0.y + config.vy * frameIndex0};
        return BBox::fromCenter(c, {config.start.w * k, config.start.h * k});
    }

    SyntheticSequence renderSyntheticSequence(const SyntheticSceneConfig& config)
    {
        checkConfig(config);
        std::mt19937_64 rng(config.seed);
        const SmoothField target(config.textureCells + 1, config.textureCells + 1, 0.0, 1.0, rng);
        const int bgRows = static_cast<int>(std::ceil(config.height / config.backgroundCellPx)) + 2;
        const int bgCols = static_cast<int>(std::ceil(config.width / config.backgroundCellPx)) + 2;
        const double bgLo = 0.5 - config.backgroundContrast / 2.0;
        const SmoothField background(bgRows, bgCols, bgLo, bgLo + config.backgroundContrast, rng);

        SyntheticSequence seq;
        seq.frames.reserve(config.frames);
        seq.groundTruth.reserve(config.frames);
        for (int t = 0; t < config.frames; ++t)
        {
            const BBox box = syntheticBox(config, t);
            Image img(1, config.height, config.width);
            for (int y = 0; y < config.height; ++y)
                for (int x = 0; x < config.width; ++x)
                {
                    const double px = x + 0.5;
                    const double py = y + 0.5;
                    const double u = (px - box.x) / box.w;
                    const double v = (py - box.y) / box.h;
                    if (u >= 0.0 && u < 1.0 && v >= 0.0 && v < 1.0)
                        img(y, x) = target.at(u * config.textureCells, v * config.textureCells);
                    else
                        img(y, x) = background.at(px / config.backgroundCellPx, py / config.backgroundCellPx);
                }
            seq.frames.push_back(std::move(img));
            seq.groundTruth.push_back(box);
        }
        return seq;
    }
}
