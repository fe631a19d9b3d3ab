#include "kmc/scale.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>

namespace kmc
{
    namespace
    {
        void checkSamples(const RealTensor& samples, const ScaleState& state)
        {
            if (samples.channels() != 1 || samples.rows() != static_cast<int>(state.factors.size())
                || samples.cols() < 1)
                throw ShapeError("scale samples must be 1 x " + std::to_string(state.factors.size())
                    + " x F, got " + samples.shapeString());
        }

        // F x S spectra: row d is the DFT of descriptor element d across scales.
        ComplexTensor scaleSpectra(const RealTensor& samples)
        {
            const int s = samples.rows();
            const int f = samples.cols();
            ComplexTensor out(1, f, s);
            for (int i = 0; i < s; ++i)
                for (int d = 0; d < f; ++d)
                    out(d, i) = samples(i, d);
            cv::Mat m(f, s, CV_64FC2, reinterpret_cast<double*>(out.flat().data()));
            cv::Mat spec;
            cv::dft(m, spec, cv::DFT_ROWS | cv::DFT_COMPLEX_OUTPUT);
            spec.copyTo(m);
            return out;
        }

        std::vector<Complex> labelSpectrum(const ScaleState& state)
        {
            const int s = static_cast<int>(state.factors.size());
            const auto g = scaleLabels(s, state.config.labelSigmaFactor * std::sqrt(static_cast<double>(s)));
            std::vector<Complex> row(g.begin(), g.end());
            cv::Mat m(1, s, CV_64FC2, reinterpret_cast<double*>(row.data()));
            cv::Mat spec;
            cv::dft(m, spec, cv::DFT_COMPLEX_OUTPUT);
            spec.copyTo(m);
            return row;
        }

        void filterFrom(const ScaleState& state, const RealTensor& samples, ComplexTensor& num,
            std::vector<double>& den)
        {
            const ComplexTensor x = scaleSpectra(samples);
            const auto g = labelSpectrum(state);
            const int f = x.rows();
            const int s = x.cols();
            num = ComplexTensor(1, f, s);
            den.assign(s, 0.0);
            for (int d = 0; d < f; ++d)
                for (int i = 0; i < s; ++i)
                {
                    const Complex v = x(d, i);
                    num(d, i) = std::conj(g[i]) * v;
                    den[i] += std::norm(v);
                }
        }
    }

    std::vector<double> scaleFactors(int count, double step)
    {
        if (count < 1 || count % 2 == 0)
            throw ConfigError("scale count must be a positive odd number");
        if (!(step > 1.0) || !std::isfinite(step))
            throw ConfigError("scale step must be greater than 1");
        std::vector<double> f(count);
        const int half = count / 2;
        for (int i = 0; i < count; ++i)
            f[i] = std::pow(step, i - half);
        f[half] = 1.0;
        return f;
    }

    ScaleState makeScaleState(const ScaleConfig& config)
    {
        if (config.templateSize < config.cellSize || config.cellSize < 2)
            throw ConfigError("scale template must hold at least one cell");
        if (!(config.lambda > 0.0))
            throw ConfigError("scale regulariser must be positive");
        if (!(config.learningRate >= 0.0 && config.learningRate <= 1.0))
            throw InvalidRate("scale learning rate must lie in [0, 1]");
        if (!(config.labelSigmaFactor > 0.0))
            throw ConfigError("scale label bandwidth must be positive");
        ScaleState state;
        state.config = config;
        state.factors = scaleFactors(config.count, config.step);
        return state;
    }

    std::vector<double> scaleLabels(int count, double sigma)
    {
        if (count < 1)
            throw ShapeError("scale label needs at least one entry");
        std::vector<double> g(count);
        const int mid = count / 2;
        for (int i = 0; i < count; ++i)
        {
            const double d = i - mid;
            g[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        }
        return g;
    }

    RealTensor buildScaleSamples(const Image& frame, Point2 center, Size2 baseSize, const ScaleState& state)
    {
        if (!(baseSize.w > 0.0) || !(baseSize.h > 0.0))
            throw InvalidTarget("scale base size must be positive");
        if (!(state.currentScale > 0.0) || !std::isfinite(state.currentScale))
            throw InvalidTarget("current scale must be positive");

        const ScaleConfig& cfg = state.config;
        const int s = static_cast<int>(state.factors.size());
        RealTensor out;
        for (int i = 0; i < s; ++i)
        {
            const double k = state.factors[i] * state.currentScale;
            const Size2 size{k * baseSize.w, k * baseSize.h};
            if (!(size.w * size.h > 0.0))
                throw InvalidTarget("scale sample has zero area");
            const Patch p = cropPaddedPatch(frame, center, size, 1.0, {cfg.templateSize, cfg.templateSize});
            const FeatureMap hog = extractHogLite(p, cfg.cellSize, cfg.orientations);
            const auto v = hog.data.flat();
            if (out.empty())
                out = RealTensor(1, s, static_cast<int>(v.size()));
            for (std::size_t d = 0; d < v.size(); ++d)
                out(i, static_cast<int>(d)) = v[d];
        }

        // Remove what all pyramid levels share, then taper the pyramid ends.
        const auto window = hannWindow(s);
        for (int d = 0; d < out.cols(); ++d)
        {
            double mean = 0.0;
            for (int i = 0; i < s; ++i)
                mean += out(i, d);
            mean /= s;
            for (int i = 0; i < s; ++i)
                out(i, d) = window[i] * (out(i, d) - mean);
        }
        return out;
    }

    void trainScaleModel(ScaleState& state, const RealTensor& samples)
    {
        checkSamples(samples, state);
        filterFrom(state, samples, state.numerator, state.denominator);
    }

    void updateScaleModel(ScaleState& state, const RealTensor& samples)
    {
        if (!state.trained())
            throw NotInitialized("scale filter has not been trained");
        checkSamples(samples, state);
        ComplexTensor num;
        std::vector<double> den;
        filterFrom(state, samples, num, den);
        requireSameShape(num, state.numerator, "updateScaleModel");
        const double eta = state.config.learningRate;
        auto a = state.numerator.flat();
        auto b = num.flat();
        for (std::size_t i = 0; i < a.size(); ++i)
            a[i] = (1.0 - eta) * a[i] + eta * b[i];
        for (std::size_t i = 0; i < den.size(); ++i)
            state.denominator[i] = (1.0 - eta) * state.denominator[i] + eta * den[i];
    }

    std::vector<double> scaleResponse(const RealTensor& samples, const ScaleState& state)
    {
        if (!state.trained())
            throw NotInitialized("scale filter has not been trained");
        checkSamples(samples, state);
        const ComplexTensor z = scaleSpectra(samples);
        requireSameShape(z, state.numerator, "scaleResponse");
        const int f = z.rows();
        const int s = z.cols();
        std::vector<Complex> acc(s);
        for (int d = 0; d < f; ++d)
            for (int i = 0; i < s; ++i)
                acc[i] += std::conj(state.numerator(d, i)) * z(d, i);
        for (int i = 0; i < s; ++i)
            acc[i] /= state.denominator[i] + state.config.lambda;

        cv::Mat m(1, s, CV_64FC2, reinterpret_cast<double*>(acc.data()));
        cv::Mat y;
        cv::dft(m, y, cv::DFT_INVERSE | cv::DFT_SCALE | cv::DFT_COMPLEX_OUTPUT);
        std::vector<double> out(s);
        for (int i = 0; i < s; ++i)
            out[i] = y.at<cv::Vec2d>(0, i)[0];
        return out;
    }

    int bestScaleIndex(const std::vector<double>& response)
    {
        if (response.empty())
            throw ShapeError("empty scale response");
        const int mid = static_cast<int>(response.size()) / 2;
        int best = mid;
        for (int i = 0; i < static_cast<int>(response.size()); ++i)
        {
            if (!std::isfinite(response[i]))
                throw NumericError("non-finite scale response");
            if (response[i] > response[best] || (response[i] == response[best] && std::abs(i - mid) < std::abs(best - mid)))
                best = i;
        }
        return best;
    }

    ScaleState estimateScale(const RealTensor& samples, const ScaleState& state)
    {
        ScaleState next = state;
        const int best = bestScaleIndex(scaleResponse(samples, state));
        next.currentScale = state.currentScale * state.factors[best];
        updateScaleModel(next, samples);
        return next;
    }
}
