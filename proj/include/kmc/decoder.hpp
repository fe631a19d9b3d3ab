#ifndef KMC_DECODER_HPP_
#define KMC_DECODER_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "kmc/features.hpp"
#include "kmc/kernel_correlation.hpp"
#include "kmc/tensor.hpp"

namespace kmc
{
    constexpr int kGridRows = 32;
    constexpr int kGridCols = 48;

    /// K response maps on a common centred grid, each rescaled to [0,1].
    struct ResponseStack
    {
        RealTensor maps;            // K x gridRows x gridCols
        std::vector<int> cellSizes; // cell size of the map each channel came from
    };

    /// Moves the circular origin to index (rows/2, cols/2).
    RealTensor fftShift(const RealTensor& map);

    /// (r - min) / (max - min) per channel; constant channels become zero.
    void minMaxRescale(RealTensor& maps);

    /**
     * fftshift each map, resample bilinearly so that map centres coincide and
     * the map spans the whole grid, then min-max rescale.
     */
    ResponseStack stackResponses(const std::vector<ResponseMap>& responses, int gridRows = kGridRows,
        int gridCols = kGridCols);

    struct Translation
    {
        double dx = 0.0;
        double dy = 0.0;
    };

    // Patch-pixel translation <-> translation normalised by the patch size.
    Translation normalizeTranslation(Translation px, PixelSize patch = {});
    Translation denormalizeTranslation(Translation n, PixelSize patch = {});

    /// Argmax of the channel mean, as a patch-pixel offset from the grid centre.
    Translation maxresDecode(const ResponseStack& stack, PixelSize patch = {});

    /// Two conv + two dense layers; weights are stored row-major, output-major.
    class DecoderNet
    {
    public:
        static constexpr int kConv1Filters = 16;
        static constexpr int kConv2Filters = 32;
        static constexpr int kHidden = 64;
        static constexpr int kOutputs = 2;
        static constexpr int kKernel = 3;

        struct Layer
        {
            int outputs = 0;
            int inputs = 0;
            int kernelH = 1;
            int kernelW = 1;
            std::vector<double> weights; // outputs x inputs x kernelH x kernelW
            std::vector<double> bias;    // outputs
        };

        enum LayerIndex
        {
            Conv1 = 0,
            Conv2 = 1,
            Dense1 = 2,
            Head = 3
        };

        DecoderNet() = default;

        /// All-zero network for K input channels.
        DecoderNet(int channels, int gridRows = kGridRows, int gridCols = kGridCols);

        /// He-normal weights, zero biases.
        static DecoderNet heInitialized(int channels, std::uint64_t seed, int gridRows = kGridRows,
            int gridCols = kGridCols);

        /// Weights uniform in +-1/sqrt(fan_in), zero biases; the training start point.
        static DecoderNet uniformInitialized(int channels, std::uint64_t seed, int gridRows = kGridRows,
            int gridCols = kGridCols);

        int channels() const noexcept { return _channels; }
        int gridRows() const noexcept { return _gridRows; }
        int gridCols() const noexcept { return _gridCols; }
        int flattenedSize() const noexcept;
        std::size_t parameterCount() const noexcept;

        std::array<Layer, 4>& layers() noexcept { return _layers; }
        const std::array<Layer, 4>& layers() const noexcept { return _layers; }

        // Visits every weight and bias buffer in declaration order.
        template <typename F>
        void forEachBuffer(F&& f)
        {
            for (auto& l : _layers)
            {
                f(l.weights);
                f(l.bias);
            }
        }

        template <typename F>
        void forEachBuffer(F&& f) const
        {
            for (const auto& l : _layers)
            {
                f(l.weights);
                f(l.bias);
            }
        }

        bool sameArchitecture(const DecoderNet& other) const noexcept;

    private:
        int _channels = 0;
        int _gridRows = 0;
        int _gridCols = 0;
        std::array<Layer, 4> _layers;
    };

    /**
     * Activations recorded by the forward pass for backprop, for a batch of B
     * stacks. Conv activations are channel-major with the B sample planes laid
     * side by side in each channel row; flattened features are sample-major.
     */
    struct ForwardCache
    {
        int batch = 0;
        std::vector<double> cols1, pre1, pool1;
        std::vector<int> pool1Arg;
        std::vector<double> cols2, pre2, pool2;
        std::vector<int> pool2Arg;
        std::vector<double> hiddenPre, hidden; // 64 x B
        std::vector<double> logits;            // 2 x B
        std::vector<Translation> outputs;      // normalised, each component in (-0.5, 0.5)
    };

    /// Normalised translation in (-0.5, 0.5)^2.
    Translation decoderForward(const DecoderNet& net, const ResponseStack& stack);
    Translation decoderForward(const DecoderNet& net, const ResponseStack& stack, ForwardCache& cache);
    const std::vector<Translation>& decoderForwardBatch(const DecoderNet& net,
        const std::vector<const ResponseStack*>& stacks, ForwardCache& cache);

    /// sqrt(0.5 * ((dx - dx')^2 + (dy - dy')^2)).
    double lossRms(Translation pred, Translation target);

    /**
     * Exact gradient of lossScale * (sum over the batch of lossRms) with
     * respect to every parameter, returned as a network-shaped buffer set.
     * Samples with zero loss contribute zero gradient. `cache` must come from
     * the forward pass on the same net and stacks.
     */
    DecoderNet decoderBackward(const DecoderNet& net, const ForwardCache& cache, Translation target,
        double lossScale = 1.0);
    DecoderNet decoderBackward(const DecoderNet& net, const ForwardCache& cache,
        const std::vector<Translation>& targets, double lossScale = 1.0);

    /// Forward + backward in one call; returns the loss.
    double decoderLossAndGradient(const DecoderNet& net, const ResponseStack& stack, Translation target,
        DecoderNet& gradient, double lossScale = 1.0);

    // KMCD weight file.
    void writeDecoder(const std::filesystem::path& path, const DecoderNet& net);
    DecoderNet readDecoder(const std::filesystem::path& path);
}

#endif
