#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "kmc/scale.hpp"
#include "kmc/synthetic.hpp"

using namespace kmc;

namespace
{
    // Direct DFT sums for the one-dimensional scale filter.
    std::vector<double> naiveScaleResponse(const RealTensor& train, const RealTensor& test, double sigma,
        double lambda)
    {
        const int s = train.rows();
        const int f = train.cols();
        auto dft = [s](auto&& at) {
            std::vector<Complex> out(s);
            for (int k = 0; k < s; ++k)
                for (int n = 0; n < s; ++n)
                    out[k] += at(n) * std::polar(1.0, -2.0 * std::numbers::pi * k * n / s);
            return out;
        };
        const auto g = dft([&](int n) { const double d = n - s / 2; return std::exp(-0.5 * d * d / (sigma * sigma)); });
        std::vector<Complex> acc(s);
        std::vector<double> den(s);
        for (int d = 0; d < f; ++d)
        {
            const auto x = dft([&](int n) { return train(n, d); });
            const auto z = dft([&](int n) { return test(n, d); });
            for (int k = 0; k < s; ++k)
            {
                acc[k] += std::conj(std::conj(g[k]) * x[k]) * z[k];
                den[k] += std::norm(x[k]);
            }
        }
        std::vector<double> y(s);
        for (int n = 0; n < s; ++n)
        {
            Complex v;
            for (int k = 0; k < s; ++k)
                v += acc[k] / (den[k] + lambda) * std::polar(1.0, 2.0 * std::numbers::pi * k * n / s);
            y[n] = v.real() / s;
        }
        return y;
    }

    SyntheticSceneConfig zoomScene(double zoom)
    {
        SyntheticSceneConfig c;
        c.start = {140.0, 100.0, 40.0, 40.0};
        c.vx = 0.0;
        c.vy = 0.0;
        c.zoom = zoom;
        c.frames = 8;
        c.seed = 17;
        return c;
    }
}

TEST(ScaleFactors, ElevenGeometricStepsAroundOne)
{
    const auto f = scaleFactors(11, 1.02);
    ASSERT_EQ(f.size(), 11u);
    EXPECT_EQ(f[5], 1.0);
    EXPECT_NEAR(f[0], std::pow(1.02, -5), 1e-15);
    EXPECT_NEAR(f[10], std::pow(1.02, 5), 1e-15);
    for (int e = 1; e <= 5; ++e)
        EXPECT_NEAR(f[5 + e] * f[5 - e], 1.0, 1e-12);
    for (int i = 1; i < 11; ++i)
    {
        EXPECT_GT(f[i], f[i - 1]);
        EXPECT_NEAR(f[i] / f[i - 1], 1.02, 1e-12);
    }
}

TEST(ScaleFactors, RejectsBadPyramids)
{
    EXPECT_THROW(scaleFactors(10, 1.02), ConfigError);
    EXPECT_THROW(scaleFactors(0, 1.02), ConfigError);
    EXPECT_THROW(scaleFactors(11, 1.0), ConfigError);
    EXPECT_EQ(scaleFactors(1, 1.5), std::vector<double>{1.0});
}

TEST(ScaleLabels, PeakAtTheMiddle)
{
    const auto g = scaleLabels(11, 0.25 * std::sqrt(11.0));
    EXPECT_EQ(g[5], 1.0);
    for (int e = 1; e <= 5; ++e)
    {
        EXPECT_EQ(g[5 + e], g[5 - e]);
        EXPECT_LT(g[5 + e], g[5 + e - 1]);
    }
}

TEST(ScaleResponse, MatchesDirectDftSums)
{
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    ScaleConfig cfg;
    cfg.count = 7;
    ScaleState st = makeScaleState(cfg);
    for (int trial = 0; trial < 10; ++trial)
    {
        RealTensor a(1, 7, 13), b(1, 7, 13);
        for (double& v : a.flat())
            v = n(rng);
        for (double& v : b.flat())
            v = n(rng);
        trainScaleModel(st, a);
        const auto got = scaleResponse(b, st);
        const auto want = naiveScaleResponse(a, b, 0.25 * std::sqrt(7.0), cfg.lambda);
        for (int i = 0; i < 7; ++i)
            EXPECT_NEAR(got[i], want[i], 1e-10);
    }
}

TEST(ScaleResponse, TrainingSamplePeaksAtTheMiddle)
{
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ScaleState st = makeScaleState();
    RealTensor a(1, 11, 50);
    for (double& v : a.flat())
        v = u(rng);
    trainScaleModel(st, a);
    EXPECT_EQ(bestScaleIndex(scaleResponse(a, st)), 5);
}

TEST(ScaleResponse, ZeroDescriptorsStayFinite)
{
    ScaleState st = makeScaleState();
    const RealTensor zero(1, 11, 20);
    trainScaleModel(st, zero);
    const auto r = scaleResponse(zero, st);
    for (double v : r)
        EXPECT_TRUE(std::isfinite(v));
    // a flat response keeps the current scale
    const ScaleState next = estimateScale(zero, st);
    EXPECT_EQ(next.currentScale, 1.0);
}

TEST(ScaleResponse, UntrainedAndMisshapenInputsThrow)
{
    const ScaleState st = makeScaleState();
    EXPECT_THROW(scaleResponse(RealTensor(1, 11, 4), st), NotInitialized);
    EXPECT_THROW(estimateScale(RealTensor(1, 11, 4), st), NotInitialized);
    ScaleState trained = st;
    trainScaleModel(trained, RealTensor(1, 11, 4, 1.0));
    EXPECT_THROW(scaleResponse(RealTensor(1, 9, 4), trained), ShapeError);
    EXPECT_THROW(scaleResponse(RealTensor(1, 11, 5), trained), ShapeError);
}

TEST(BestScaleIndex, TiesGoToTheMiddle)
{
    EXPECT_EQ(bestScaleIndex(std::vector<double>(11, 0.0)), 5);
    EXPECT_EQ(bestScaleIndex({1, 0, 0, 0, 1}), 0);
    EXPECT_EQ(bestScaleIndex({0, 1, 0, 1, 0}), 1);
    EXPECT_EQ(bestScaleIndex({0, 0, 0, 2, 0}), 3);
}

TEST(BuildScaleSamples, ShapeAndWindow)
{
    const auto seq = renderSyntheticSequence(zoomScene(1.0));
    const ScaleState st = makeScaleState();
    const BBox b = seq.groundTruth[0];
    const RealTensor s = buildScaleSamples(seq.frames[0], b.center(), b.size(), st);
    EXPECT_EQ(s.rows(), 11);
    EXPECT_EQ(s.cols(), 16 * 16 * 9);
    // the Hann window zeroes both end rows
    for (int d = 0; d < s.cols(); ++d)
    {
        EXPECT_EQ(s(0, d), 0.0);
        EXPECT_EQ(s(10, d), 0.0);
    }
    const RealTensor again = buildScaleSamples(seq.frames[0], b.center(), b.size(), st);
    for (int d = 0; d < s.cols(); ++d)
        ASSERT_EQ(s(5, d), again(5, d));
    EXPECT_THROW(buildScaleSamples(seq.frames[0], b.center(), {0.0, 10.0}, st), InvalidTarget);
}

TEST(EstimateScale, StaticSceneKeepsTheScale)
{
    const auto seq = renderSyntheticSequence(zoomScene(1.0));
    ScaleState st = makeScaleState();
    const BBox b = seq.groundTruth[0];
    trainScaleModel(st, buildScaleSamples(seq.frames[0], b.center(), b.size(), st));
    for (int t = 1; t < 5; ++t)
    {
        st = estimateScale(buildScaleSamples(seq.frames[t], b.center(), b.size(), st), st);
        EXPECT_EQ(st.currentScale, 1.0);
    }
}

TEST(EstimateScale, TwoStepZoomPeaksTwoRowsUp)
{
    const auto seq = renderSyntheticSequence(zoomScene(1.02));
    ScaleState st = makeScaleState();
    const BBox b = seq.groundTruth[0];
    trainScaleModel(st, buildScaleSamples(seq.frames[0], b.center(), b.size(), st));
    const auto r = scaleResponse(buildScaleSamples(seq.frames[2], b.center(), b.size(), st), st);
    EXPECT_EQ(bestScaleIndex(r), 7);
}

TEST(EstimateScale, ZoomInIsTrackedWithinOneStep)
{
    const auto seq = renderSyntheticSequence(zoomScene(1.02));
    ScaleState st = makeScaleState();
    const BBox b = seq.groundTruth[0];
    trainScaleModel(st, buildScaleSamples(seq.frames[0], b.center(), b.size(), st));
    double prev = st.currentScale;
    for (int t = 1; t < 8; ++t)
    {
        st = estimateScale(buildScaleSamples(seq.frames[t], b.center(), b.size(), st), st);
        EXPECT_GT(st.currentScale, prev) << "frame " << t;
        EXPECT_LE(std::abs(std::log(st.currentScale / std::pow(1.02, t))), std::log(1.02) + 1e-9);
        prev = st.currentScale;
    }
}

TEST(EstimateScale, ZoomOutShrinks)
{
    const auto seq = renderSyntheticSequence(zoomScene(1.0 / 1.02));
    ScaleState st = makeScaleState();
    const BBox b = seq.groundTruth[0];
    trainScaleModel(st, buildScaleSamples(seq.frames[0], b.center(), b.size(), st));
    for (int t = 1; t < 6; ++t)
        st = estimateScale(buildScaleSamples(seq.frames[t], b.center(), b.size(), st), st);
    EXPECT_LE(std::abs(std::log(st.currentScale / std::pow(1.02, -5))), std::log(1.02) + 1e-9);
}
