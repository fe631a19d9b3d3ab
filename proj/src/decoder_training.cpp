#include "kmc/decoder_training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "binary_io.hpp"

namespace kmc
{
    namespace
    {
        double at(const std::vector<double>& v, int k)
        {
            return k < static_cast<int>(v.size()) ? v[k] : 0.0;
        }

        constexpr std::size_t kEvalBatch = 64;

        // Forward passes over the dataset in fixed-size batches.
        template <typename F>
        void forEachPrediction(const DecoderNet& net, const std::vector<TrainingSample>& samples, F&& f)
        {
            ForwardCache cache;
            std::vector<const ResponseStack*> batch;
            for (std::size_t start = 0; start < samples.size(); start += kEvalBatch)
            {
                const std::size_t end = std::min(samples.size(), start + kEvalBatch);
                batch.clear();
                for (std::size_t i = start; i < end; ++i)
                    batch.push_back(&samples[i].stack);
                const auto& out = decoderForwardBatch(net, batch, cache);
                for (std::size_t i = start; i < end; ++i)
                    f(samples[i], out[i - start]);
            }
        }

        // v = momentum * v - rate * g; w += v
        void momentumStep(DecoderNet& net, DecoderNet& velocity, const DecoderNet& grad, double rate, double momentum)
        {
            auto& w = net.layers();
            auto& v = velocity.layers();
            const auto& g = grad.layers();
            auto step = [&](std::vector<double>& wb, std::vector<double>& vb, const std::vector<double>& gb) {
                for (std::size_t i = 0; i < wb.size(); ++i)
                {
                    vb[i] = momentum * vb[i] - rate * gb[i];
                    wb[i] += vb[i];
                }
            };
            for (std::size_t l = 0; l < w.size(); ++l)
            {
                step(w[l].weights, v[l].weights, g[l].weights);
                step(w[l].bias, v[l].bias, g[l].bias);
            }
        }

        void checkSamples(const std::vector<TrainingSample>& samples, int channels, const char* what)
        {
            for (const auto& s : samples)
                if (s.stack.maps.channels() != channels || !s.stack.maps.samePlane(kGridRows, kGridCols))
                    throw ShapeError(std::string(what) + " sample has shape " + s.stack.maps.shapeString());
        }
    }

    double meanLossRms(const DecoderNet& net, const std::vector<TrainingSample>& samples)
    {
        if (samples.empty())
            throw EmptyDataset("cannot evaluate on an empty dataset");
        double sum = 0.0;
        forEachPrediction(net, samples, [&](const TrainingSample& s, Translation p) { sum += lossRms(p, s.target); });
        return sum / static_cast<double>(samples.size());
    }

    TrainResult trainDecoder(const std::vector<TrainingSample>& train, const std::vector<TrainingSample>& validation,
        const TrainConfig& config)
    {
        if (train.empty())
            throw EmptyDataset("training set is empty");
        if (validation.empty())
            throw EmptyDataset("validation set is empty");
        if (config.batchSize < 1 || config.maxEpochs < 0 || config.patience < 1)
            throw ConfigError("batch size and patience must be positive, max epochs non-negative");

        const int channels = train.front().stack.maps.channels();
        checkSamples(train, channels, "training");
        checkSamples(validation, channels, "validation");

        std::mt19937_64 rng(config.seed);
        TrainResult result;
        DecoderNet net = DecoderNet::uniformInitialized(channels, rng());
        DecoderNet velocity(channels);
        result.net = net;

        double best = meanLossRms(net, validation);
        double reference = best;
        int stale = 0;

        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        ForwardCache cache;
        std::vector<const ResponseStack*> stacks;
        std::vector<Translation> targets;

        for (int epoch = 1; epoch <= config.maxEpochs; ++epoch)
        {
            std::shuffle(order.begin(), order.end(), rng);
            double epochLoss = 0.0;
            for (std::size_t start = 0; start < order.size(); start += config.batchSize)
            {
                const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batchSize));
                stacks.clear();
                targets.clear();
                for (std::size_t i = start; i < end; ++i)
                {
                    stacks.push_back(&train[order[i]].stack);
                    targets.push_back(train[order[i]].target);
                }
                const auto& out = decoderForwardBatch(net, stacks, cache);
                for (std::size_t i = 0; i < out.size(); ++i)
                    epochLoss += lossRms(out[i], targets[i]);
                const DecoderNet grad
                    = decoderBackward(net, cache, targets, 1.0 / static_cast<double>(end - start));
                momentumStep(net, velocity, grad, config.learningRate, config.momentum);
            }

            const double val = meanLossRms(net, validation);
            result.trainRms.push_back(epochLoss / static_cast<double>(train.size()));
            result.validationRms.push_back(val);
            result.epochs = epoch;
            if (val < best)
            {
                best = val;
                result.net = net;
                result.bestEpoch = epoch;
            }
            result.bestValidationRms.push_back(best);

            if (val < reference - config.minImprovement)
            {
                reference = val;
                stale = 0;
            }
            else if (++stale >= config.patience)
            {
                break;
            }
        }
        return result;
    }

    TrainResult trainDecoder(const std::vector<TrainingSample>& samples, const TrainConfig& config)
    {
        if (samples.empty())
            throw EmptyDataset("dataset is empty");
        if (!(config.validationFraction > 0.0 && config.validationFraction < 1.0))
            throw ConfigError("validation fraction must lie in (0, 1)");
        const auto n = samples.size();
        const auto nVal = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::lround(config.validationFraction * static_cast<double>(n))), 1, n);
        if (nVal >= n)
            throw EmptyDataset("dataset too small for a train / validation split");

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(config.seed ^ 0x5eedULL);
        std::shuffle(order.begin(), order.end(), rng);

        std::vector<TrainingSample> train, validation;
        for (std::size_t i = 0; i < n; ++i)
            (i < n - nVal ? train : validation).push_back(samples[order[i]]);
        return trainDecoder(train, validation, config);
    }

    SyntheticNoise noiselessSynthetic(int channels)
    {
        SyntheticNoise noise;
        noise.channels = channels;
        return noise;
    }

    SyntheticNoise benchmarkSynthetic(int channels)
    {
        SyntheticNoise noise;
        noise.channels = channels;
        for (int k = 0; k < channels; ++k)
        {
            const double depth = channels > 1 ? static_cast<double>(k) / (channels - 1) : 0.0;
            noise.jitterStd.push_back(0.25 + 2.75 * depth);
            noise.distractorAmplitude.push_back(1.4 - 1.2 * depth);
        }
        noise.distractorProbability = 0.5;
        noise.additiveNoise = 0.05;
        return noise;
    }

    std::vector<TrainingSample> generateSyntheticSamples(int n, const SyntheticNoise& noise, std::uint64_t seed)
    {
        if (n < 1)
            throw EmptyDataset("sample count must be at least 1");
        if (noise.channels < 1)
            throw ShapeError("synthetic stacks need at least one channel");

        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> offset(-0.3, 0.3);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::normal_distribution<double> normal(0.0, 1.0);

        const int rows = kGridRows, cols = kGridCols;
        std::vector<TrainingSample> samples;
        samples.reserve(n);
        for (int i = 0; i < n; ++i)
        {
            TrainingSample s;
            s.target = {offset(rng), offset(rng)};
            s.stack.maps = RealTensor(noise.channels, rows, cols);
            s.stack.cellSizes.assign(noise.channels, 1);
            const double r0 = rows / 2 + s.target.dy * rows;
            const double c0 = cols / 2 + s.target.dx * cols;
            const bool distract = unit(rng) < noise.distractorProbability;
            const double dr = unit(rng) * (rows - 1);
            const double dc = unit(rng) * (cols - 1);
            for (int k = 0; k < noise.channels; ++k)
            {
                const double sigma = noise.bumpSigma + noise.bumpGrowth * k;
                const double jitter = at(noise.jitterStd, k);
                const double pr = r0 + jitter * normal(rng);
                const double pc = c0 + jitter * normal(rng);
                const double amp = distract ? at(noise.distractorAmplitude, k) * (0.75 + 0.5 * unit(rng)) : 0.0;
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c)
                    {
                        double v = std::exp(-((r - pr) * (r - pr) + (c - pc) * (c - pc)) / (2 * sigma * sigma));
                        if (amp > 0.0)
                            v += amp * std::exp(-((r - dr) * (r - dr) + (c - dc) * (c - dc)) / (2 * sigma * sigma));
                        if (noise.additiveNoise > 0.0)
                            v += noise.additiveNoise * normal(rng);
                        s.stack.maps(k, r, c) = v;
                    }
            }
            minMaxRescale(s.stack.maps);
            samples.push_back(std::move(s));
        }
        return samples;
    }

    double maxresMeanError(const std::vector<TrainingSample>& samples, PixelSize patch)
    {
        if (samples.empty())
            throw EmptyDataset("cannot evaluate on an empty dataset");
        double sum = 0.0;
        for (const auto& s : samples)
        {
            const Translation p = maxresDecode(s.stack, patch);
            const Translation t = denormalizeTranslation(s.target, patch);
            sum += std::hypot(p.dx - t.dx, p.dy - t.dy);
        }
        return sum / static_cast<double>(samples.size());
    }

    double decoderMeanError(const DecoderNet& net, const std::vector<TrainingSample>& samples, PixelSize patch)
    {
        if (samples.empty())
            throw EmptyDataset("cannot evaluate on an empty dataset");
        double sum = 0.0;
        forEachPrediction(net, samples, [&](const TrainingSample& s, Translation pred) {
            const Translation p = denormalizeTranslation(pred, patch);
            const Translation t = denormalizeTranslation(s.target, patch);
            sum += std::hypot(p.dx - t.dx, p.dy - t.dy);
        });
        return sum / static_cast<double>(samples.size());
    }

    void writeSamples(const std::filesystem::path& path, const std::vector<TrainingSample>& samples)
    {
        detail::LeWriter w;
        w.magic("KMCS");
        w.u32(static_cast<std::uint32_t>(samples.size()));
        for (const auto& s : samples)
        {
            w.f32(static_cast<float>(s.target.dx));
            w.f32(static_cast<float>(s.target.dy));
            const RealTensor& m = s.stack.maps;
            w.u16(static_cast<std::uint32_t>(m.channels()));
            w.u16(static_cast<std::uint32_t>(m.rows()));
            w.u16(static_cast<std::uint32_t>(m.cols()));
            for (double v : m.flat())
                w.f32(static_cast<float>(v));
        }
        w.save(path);
    }

    std::vector<TrainingSample> readSamples(const std::filesystem::path& path)
    {
        detail::LeReader r(path, "sample file " + path.string());
        r.expectMagic("KMCS");
        const std::uint32_t count = r.u32();
        std::vector<TrainingSample> samples;
        for (std::uint32_t i = 0; i < count; ++i)
        {
            TrainingSample s;
            s.target.dx = r.f32();
            s.target.dy = r.f32();
            if (!(std::abs(s.target.dx) <= 0.5 && std::abs(s.target.dy) <= 0.5))
                throw FormatError("sample " + std::to_string(i) + " has a target outside [-0.5, 0.5]");
            const int k = r.u16(), rows = r.u16(), cols = r.u16();
            if (k < 1 || rows < 1 || cols < 1)
                throw FormatError("sample " + std::to_string(i) + " has an empty stack");
            r.need(static_cast<std::size_t>(k) * rows * cols * sizeof(float));
            s.stack.maps = RealTensor(k, rows, cols);
            for (double& v : s.stack.maps.flat())
            {
                v = r.f32();
                if (!std::isfinite(v))
                    throw FormatError("sample " + std::to_string(i) + " contains a non-finite value");
            }
            samples.push_back(std::move(s));
        }
        if (r.remaining() != 0)
            throw FormatError("sample file has trailing bytes");
        return samples;
    }
}
