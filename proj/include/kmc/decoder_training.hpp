#ifndef KMC_DECODER_TRAINING_HPP_
#define KMC_DECODER_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <vector>

#include "kmc/decoder.hpp"

namespace kmc
{
    struct TrainingSample
    {
        ResponseStack stack;
        Translation target; // normalised, each component in [-0.5, 0.5]
    };

    struct TrainConfig
    {
        double learningRate = 1e-3;
        double momentum = 0.9;
        int batchSize = 32;
        int maxEpochs = 200;
        int patience = 10;
        double minImprovement = 1e-4;
        double validationFraction = 0.2;
        std::uint64_t seed = 1;
    };

    struct TrainResult
    {
        DecoderNet net; // best-validation weights
        int epochs = 0;
        int bestEpoch = 0;
        std::vector<double> trainRms;          // per epoch, mean loss over the epoch's batches
        std::vector<double> validationRms;     // per epoch
        std::vector<double> bestValidationRms; // running best after each epoch
    };

    /// Mean lossRms of the network over a dataset.
    double meanLossRms(const DecoderNet& net, const std::vector<TrainingSample>& samples);

    /// Mini-batch SGD with momentum on an explicit train / validation split.
    TrainResult trainDecoder(const std::vector<TrainingSample>& train, const std::vector<TrainingSample>& validation,
        const TrainConfig& config = {});

    /// Seeded shuffle, then the trailing validationFraction is held out.
    TrainResult trainDecoder(const std::vector<TrainingSample>& samples, const TrainConfig& config = {});

    /**
     * Per-layer corruption of the ideal single-peak response. Per-layer
     * vectors are indexed by layer; missing entries count as zero.
     */
    struct SyntheticNoise
    {
        int channels = 4;
        double bumpSigma = 1.5;   // grid cells, layer 0
        double bumpGrowth = 0.75; // added per layer index
        std::vector<double> jitterStd; // grid cells

        // A look-alike object elsewhere in the patch, present with this
        // probability; each layer responds to it with its own relative strength.
        double distractorProbability = 0.0;
        std::vector<double> distractorAmplitude;

        double additiveNoise = 0.0; // std before rescaling
    };

    SyntheticNoise noiselessSynthetic(int channels = 4);

    /// Precise but distractible shallow layers, broad and jittery deep layers.
    SyntheticNoise benchmarkSynthetic(int channels = 4);

    std::vector<TrainingSample> generateSyntheticSamples(int n, const SyntheticNoise& noise, std::uint64_t seed);

    // Mean Euclidean error in patch pixels.
    double maxresMeanError(const std::vector<TrainingSample>& samples, PixelSize patch = {});
    double decoderMeanError(const DecoderNet& net, const std::vector<TrainingSample>& samples, PixelSize patch = {});

    // KMCS dataset file.
    void writeSamples(const std::filesystem::path& path, const std::vector<TrainingSample>& samples);
    std::vector<TrainingSample> readSamples(const std::filesystem::path& path);
}

#endif
