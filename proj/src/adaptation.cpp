#include "kmc/adaptation.hpp"

#include <algorithm>
#include <cmath>

namespace kmc
{
    namespace
    {
        void windowStats(const std::deque<double>& w, double& mu, double& sigma)
        {
            // running mean, exact for a window of identical losses
            mu = 0.0;
            double n = 0.0;
            for (double v : w)
                mu += (v - mu) / ++n;
            double var = 0.0;
            for (double v : w)
                var += (v - mu) * (v - mu);
            var /= static_cast<double>(w.size());
            sigma = std::max(std::sqrt(var), kSigmaFloor);
        }
    }

    LayerStats::LayerStats(double eta, int windowLength_, double etaMax_, bool inverseStability_)
        : windowLength(windowLength_),
          etaBase(eta),
          etaMax(etaMax_ < 0.0 ? 10.0 * eta : etaMax_),
          inverseStability(inverseStability_),
          etaK(eta)
    {
        if (!(eta >= 0.0 && eta <= 1.0))
            throw InvalidRate("learning rate must lie in [0, 1]");
        if (windowLength < 1)
            throw ConfigError("stability window must hold at least one loss");
        if (!(etaMax >= 0.0 && etaMax <= 1.0))
            throw InvalidRate("maximum learning rate must lie in [0, 1]");
    }

    LayerStats& updateStability(LayerStats& stats, double loss)
    {
        if (!(loss >= 0.0) || !std::isfinite(loss))
            throw NumericError("layer loss must be finite and non-negative");

        double s = 1.0;
        if (stats.window.size() >= 2)
        {
            double mu = 0.0, sigma = 0.0;
            windowStats(stats.window, mu, sigma);
            s = std::abs(loss - mu) / sigma;
        }
        stats.stability = s;
        const double eta = stats.inverseStability ? stats.etaBase / (1.0 + s) : s * stats.etaBase;
        stats.etaK = std::clamp(eta, 0.0, stats.etaMax);

        stats.window.push_back(loss);
        while (static_cast<int>(stats.window.size()) > stats.windowLength)
            stats.window.pop_front();
        windowStats(stats.window, stats.mu, stats.sigma);
        return stats;
    }

    DualModel updateModel(const DualModel& prev, const DualModel& next, double eta)
    {
        if (!(eta >= 0.0 && eta <= 1.0))
            throw InvalidRate("model update rate must lie in [0, 1]");
        requireSameShape(prev.alphaHat, next.alphaHat, "updateModel");
        requireSameShape(prev.templ.data, next.templ.data, "updateModel");

        DualModel out = next;
        auto a0 = prev.alphaHat.flat();
        auto a1 = next.alphaHat.flat();
        auto a = out.alphaHat.flat();
        for (std::size_t i = 0; i < a.size(); ++i)
            a[i] = (1.0 - eta) * a0[i] + eta * a1[i];
        auto t0 = prev.templ.data.flat();
        auto t1 = next.templ.data.flat();
        auto t = out.templ.data.flat();
        for (std::size_t i = 0; i < t.size(); ++i)
            t[i] = (1.0 - eta) * t0[i] + eta * t1[i];
        return out;
    }

    double layerLoss(const ResponseMap& response, GridIndex pos)
    {
        const RealTensor& r = response.data;
        if (r.plane() == 0)
            throw ShapeError("layerLoss of an empty response");
        if (pos.row < 0 || pos.row >= r.rows() || pos.col < 0 || pos.col >= r.cols())
            throw IndexError("position (" + std::to_string(pos.row) + ", " + std::to_string(pos.col)
                + ") is outside the " + r.shapeString() + " response");
        auto v = r.channel(0);
        const double peak = *std::max_element(v.begin(), v.end());
        return std::max(0.0, peak - r(pos.row, pos.col));
    }

    GridIndex translationToCell(Translation patchPx, int cellSize, int rows, int cols)
    {
        if (cellSize < 1 || rows < 1 || cols < 1)
            throw ShapeError("translationToCell needs a positive cell size and grid");
        const long r = std::lround(patchPx.dy / cellSize);
        const long c = std::lround(patchPx.dx / cellSize);
        return {static_cast<int>(((r % rows) + rows) % rows), static_cast<int>(((c % cols) + cols) % cols)};
    }
}
