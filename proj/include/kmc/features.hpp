#ifndef KMC_FEATURES_HPP_
#define KMC_FEATURES_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "kmc/tensor.hpp"

namespace kmc
{
    /// Planar image with values in [0,1]; one channel (gray) or three (RGB).
    using Image = RealTensor;

    constexpr int kPatchWidth = 240;
    constexpr int kPatchHeight = 160;

    struct PixelSize
    {
        int w = kPatchWidth;
        int h = kPatchHeight;
    };

    struct Patch
    {
        Image pixels;
        BBox sourceRect; // may extend past the frame
    };

    struct FeatureMap
    {
        RealTensor data; // D x M x N
        int layerId = 1;
        int cellSize = 1;
    };

    struct FeatureStack
    {
        std::vector<FeatureMap> layers; // strictly increasing layerId
        int frameIndex = 1;
    };

    /**
     * Crops the (padding*w) x (padding*h) rectangle centred on `center` and
     * resamples it bilinearly to `outSize`. Pixels outside the frame replicate
     * the nearest edge pixel.
     */
    Patch cropPaddedPatch(const Image& frame, Point2 center, Size2 targetSize, double padding,
        PixelSize outSize = {});

    // Luma for RGB, copy for gray.
    Image toGray(const Image& img);

    /// Mean-pooled grayscale, D = 1, zero mean.
    FeatureMap extractGrayscale(const Patch& patch, int cellSize, int layerId = 1);

    /**
     * Per-cell histograms of unsigned gradient orientation weighted by gradient
     * magnitude. Each cell is divided by the L2 energy of its 3x3 cell
     * neighbourhood (eps = 1e-5), then each channel is mean-subtracted.
     */
    FeatureMap extractHogLite(const Patch& patch, int cellSize, int nOrientations, int layerId = 1);

    /// Index of the orientation bin a gradient (gx, gy) falls into.
    int orientationBin(double gx, double gy, int nOrientations);

    std::vector<double> hannWindow(int length);

    FeatureMap applyCosineWindow(const FeatureMap& fm);

    // Scales the whole tensor to unit Frobenius norm; all-zero maps are left alone.
    FeatureMap normalizeEnergy(const FeatureMap& fm);

    void validateStack(const FeatureStack& stack);

    // KMCF container: a fixed set of layer shapes repeated for every frame.
    void writeFeatureFile(const std::filesystem::path& path, const std::vector<FeatureStack>& frames);

    /// Reads the stack of 1-based `frameIndex`.
    FeatureStack loadFeatureStack(const std::filesystem::path& path, int frameIndex);

    struct FeatureFileInfo
    {
        int frameCount = 0;
        struct Layer
        {
            int layerId, cellSize, channels, rows, cols;
        };
        std::vector<Layer> layers;
    };

    FeatureFileInfo readFeatureFileInfo(const std::filesystem::path& path);

    /// Keeps the file open and reads single frames on demand.
    class FeatureFileReader
    {
    public:
        explicit FeatureFileReader(const std::filesystem::path& path);

        const FeatureFileInfo& info() const noexcept { return _info; }
        FeatureStack read(int frameIndex);

    private:
        std::filesystem::path _path;
        std::ifstream _in;
        FeatureFileInfo _info;
        std::uint64_t _dataOffset = 0;
        std::uint64_t _frameBytes = 0;
    };
}

#endif
