#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "kmc/adaptation.hpp"
#include "support/oracles.hpp"

using namespace kmc;

namespace
{
    DualModel randomModel(std::mt19937_64& rng, int m, int n)
    {
        DualModel d;
        d.alphaHat = ComplexTensor(1, m, n);
        std::normal_distribution<double> g(0.0, 1.0);
        for (Complex& v : d.alphaHat.flat())
            v = {g(rng), g(rng)};
        d.templ = {oracle::randomTensor(rng, 2, m, n, -1, 1), 1, 4};
        return d;
    }

    // Population mean and standard deviation computed independently.
    std::pair<double, double> meanStd(const std::vector<double>& v)
    {
        double mu = 0.0;
        for (double x : v)
            mu += x;
        mu /= v.size();
        double ss = 0.0;
        for (double x : v)
            ss += (x - mu) * (x - mu);
        return {mu, std::sqrt(ss / v.size())};
    }
}

TEST(UpdateModel, RateZeroKeepsPrevious)
{
    std::mt19937_64 rng(1);
    const DualModel a = randomModel(rng, 4, 6), b = randomModel(rng, 4, 6);
    const DualModel r = updateModel(a, b, 0.0);
    for (std::size_t i = 0; i < a.alphaHat.size(); ++i)
        EXPECT_EQ(r.alphaHat.flat()[i], a.alphaHat.flat()[i]);
    for (std::size_t i = 0; i < a.templ.data.size(); ++i)
        EXPECT_EQ(r.templ.data.flat()[i], a.templ.data.flat()[i]);
}

TEST(UpdateModel, RateOneTakesNew)
{
    std::mt19937_64 rng(2);
    const DualModel a = randomModel(rng, 4, 6), b = randomModel(rng, 4, 6);
    const DualModel r = updateModel(a, b, 1.0);
    for (std::size_t i = 0; i < a.alphaHat.size(); ++i)
        EXPECT_EQ(r.alphaHat.flat()[i], b.alphaHat.flat()[i]);
    for (std::size_t i = 0; i < a.templ.data.size(); ++i)
        EXPECT_EQ(r.templ.data.flat()[i], b.templ.data.flat()[i]);
}

TEST(UpdateModel, EqualInputsAreAFixedPoint)
{
    std::mt19937_64 rng(3);
    const DualModel a = randomModel(rng, 5, 5);
    const DualModel r = updateModel(a, a, 0.37);
    for (std::size_t i = 0; i < a.alphaHat.size(); ++i)
        EXPECT_NEAR(std::abs(r.alphaHat.flat()[i] - a.alphaHat.flat()[i]), 0.0, 1e-15);
}

TEST(UpdateModel, CoefficientsStayOnTheSegment)
{
    std::mt19937_64 rng(4);
    const DualModel a = randomModel(rng, 6, 7), b = randomModel(rng, 6, 7);
    for (double eta : {0.0025, 0.3, 0.8})
    {
        const DualModel r = updateModel(a, b, eta);
        for (std::size_t i = 0; i < a.alphaHat.size(); ++i)
        {
            const Complex p = a.alphaHat.flat()[i], q = b.alphaHat.flat()[i], x = r.alphaHat.flat()[i];
            // |p - x| + |x - q| = |p - q| exactly when x lies on the segment
            EXPECT_NEAR(std::abs(p - x) + std::abs(x - q), std::abs(p - q), 1e-12);
            EXPECT_NEAR(std::abs(p - x), eta * std::abs(p - q), 1e-12);
        }
    }
}

TEST(UpdateModel, RejectsBadRateAndShape)
{
    std::mt19937_64 rng(5);
    const DualModel a = randomModel(rng, 4, 4), b = randomModel(rng, 4, 4), c = randomModel(rng, 4, 5);
    EXPECT_THROW(updateModel(a, b, -0.01), InvalidRate);
    EXPECT_THROW(updateModel(a, b, 1.01), InvalidRate);
    EXPECT_THROW(updateModel(a, b, std::nan("")), InvalidRate);
    EXPECT_THROW(updateModel(a, c, 0.5), ShapeError);
}

TEST(LayerLoss, HandExample)
{
    RealTensor r(1, 3, 3);
    r(0, 0) = 1.0;
    r(1, 1) = 0.5;
    EXPECT_DOUBLE_EQ(layerLoss({r, 1, 4}, {1, 1}), 0.5);
    EXPECT_DOUBLE_EQ(layerLoss({r, 1, 4}, {0, 0}), 0.0);
    EXPECT_DOUBLE_EQ(layerLoss({r, 1, 4}, {2, 2}), 1.0);
}

TEST(LayerLoss, FlatMapHasNoRegret)
{
    const RealTensor r(1, 4, 5, 0.3);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j)
            EXPECT_EQ(layerLoss({r, 1, 1}, {i, j}), 0.0);
}

TEST(LayerLoss, ZeroExactlyAtTheMaximum)
{
    std::mt19937_64 rng(6);
    const RealTensor r = oracle::randomTensor(rng, 1, 6, 8, -2, 2);
    const GridIndex peak = argmax(r);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 8; ++j)
        {
            const double l = layerLoss({r, 1, 1}, {i, j});
            EXPECT_GE(l, 0.0);
            EXPECT_EQ(l == 0.0, i == peak.row && j == peak.col);
        }
}

TEST(LayerLoss, OutOfGridThrows)
{
    const RealTensor r(1, 3, 4);
    EXPECT_THROW(layerLoss({r, 1, 1}, {3, 0}), IndexError);
    EXPECT_THROW(layerLoss({r, 1, 1}, {0, -1}), IndexError);
}

TEST(TranslationToCell, RoundsAndWraps)
{
    EXPECT_EQ(translationToCell({0.0, 0.0}, 4, 40, 60), (GridIndex{0, 0}));
    EXPECT_EQ(translationToCell({9.9, 6.1}, 4, 40, 60), (GridIndex{2, 2}));
    EXPECT_EQ(translationToCell({-4.0, -9.0}, 4, 40, 60), (GridIndex{38, 59}));
}

TEST(UpdateStability, WarmUpIsNeutral)
{
    LayerStats s(0.0025, 5);
    updateStability(s, 0.4);
    EXPECT_EQ(s.stability, 1.0);
    EXPECT_EQ(s.etaK, 0.0025);
    updateStability(s, 0.9);
    EXPECT_EQ(s.stability, 1.0);
    EXPECT_EQ(s.etaK, 0.0025);
}

TEST(UpdateStability, ConstantStreamFreezesTheLayer)
{
    LayerStats s(0.0025, 5);
    for (int t = 0; t < 12; ++t)
    {
        updateStability(s, 0.2);
        if (t >= 2)
        {
            EXPECT_EQ(s.stability, 0.0);
            EXPECT_EQ(s.etaK, 0.0);
        }
    }
    EXPECT_EQ(s.sigma, kSigmaFloor);
    EXPECT_DOUBLE_EQ(s.mu, 0.2);
}

TEST(UpdateStability, ThreeSigmaOutlier)
{
    const std::vector<double> history{0.10, 0.14, 0.08, 0.12, 0.11};
    const auto [mu, sd] = meanStd(history);

    LayerStats s(0.0025, 5);
    for (double l : history)
        updateStability(s, l);
    updateStability(s, mu + 3.0 * sd);
    EXPECT_NEAR(s.stability, 3.0, 1e-12);
    EXPECT_NEAR(s.etaK, std::min(3.0 * 0.0025, 0.025), 1e-15);

    // a larger outlier hits the cap
    LayerStats t(0.0025, 5);
    for (double l : history)
        updateStability(t, l);
    updateStability(t, mu + 40.0 * sd);
    EXPECT_EQ(t.etaK, 0.025);
}

TEST(UpdateStability, WindowKeepsTheLastLosses)
{
    LayerStats s(0.01, 3);
    for (double l : {0.1, 0.2, 0.3, 0.4, 0.5})
        updateStability(s, l);
    ASSERT_EQ(s.window.size(), 3u);
    EXPECT_EQ(s.window.front(), 0.3);
    EXPECT_EQ(s.window.back(), 0.5);
    const auto [mu, sd] = meanStd({0.3, 0.4, 0.5});
    EXPECT_NEAR(s.mu, mu, 1e-15);
    EXPECT_NEAR(s.sigma, sd, 1e-15);
}

TEST(UpdateStability, AlwaysClampedAndDeterministic)
{
    std::mt19937_64 rng(7);
    std::exponential_distribution<double> loss(3.0);
    std::vector<double> stream(500);
    for (double& l : stream)
        l = loss(rng);

    LayerStats a(0.0025, 5), b(0.0025, 5);
    for (double l : stream)
    {
        updateStability(a, l);
        updateStability(b, l);
        EXPECT_GE(a.etaK, 0.0);
        EXPECT_LE(a.etaK, a.etaMax);
        EXPECT_GE(a.sigma, kSigmaFloor);
        EXPECT_EQ(a.etaK, b.etaK);
    }
}

TEST(UpdateStability, InverseModeShrinksWithInstability)
{
    const std::vector<double> history{0.10, 0.14, 0.08, 0.12, 0.11};
    const auto [mu, sd] = meanStd(history);
    LayerStats s(0.0025, 5, -1.0, true);
    for (double l : history)
        updateStability(s, l);
    updateStability(s, mu + 3.0 * sd);
    EXPECT_NEAR(s.etaK, 0.0025 / 4.0, 1e-15);
    updateStability(s, s.mu);
    EXPECT_LE(s.etaK, 0.0025);
}

TEST(UpdateStability, RejectsInvalidInput)
{
    LayerStats s(0.0025, 5);
    EXPECT_THROW(updateStability(s, -0.1), NumericError);
    EXPECT_THROW(updateStability(s, std::nan("")), NumericError);
    EXPECT_THROW(LayerStats(1.5, 5), InvalidRate);
    EXPECT_THROW(LayerStats(0.0025, 0), ConfigError);
}
