#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "kmc/features.hpp"
#include "support/oracles.hpp"

using namespace kmc;

namespace
{
    Image constantImage(int rows, int cols, double value, int channels = 1)
    {
        return Image(channels, rows, cols, value);
    }

    Patch patchOf(Image img)
    {
        return Patch{std::move(img), {}};
    }

    std::filesystem::path tempPath(const std::string& name)
    {
        return std::filesystem::temp_directory_path() / ("kmc_test_" + name);
    }
}

TEST(CropPaddedPatch, CropRectAndOutputShape)
{
    const Image frame = constantImage(480, 640, 0.5);
    const Patch p = cropPaddedPatch(frame, {320, 240}, {100, 80}, 2.2);
    EXPECT_NEAR(p.sourceRect.w, 220.0, 1e-12);
    EXPECT_NEAR(p.sourceRect.h, 176.0, 1e-12);
    EXPECT_NEAR(p.sourceRect.x, 210.0, 1e-12);
    EXPECT_NEAR(p.sourceRect.y, 152.0, 1e-12);
    EXPECT_EQ(p.pixels.rows(), 160);
    EXPECT_EQ(p.pixels.cols(), 240);
}

TEST(CropPaddedPatch, ConstantFrameGivesConstantPatch)
{
    const Image frame = constantImage(100, 120, 0.37);
    const Patch p = cropPaddedPatch(frame, {60.3, 41.7}, {33, 21}, 2.2);
    for (double v : p.pixels.flat())
        EXPECT_DOUBLE_EQ(v, 0.37);
}

TEST(CropPaddedPatch, CornerCentreReplicatesEdges)
{
    std::mt19937_64 rng(3);
    const Image frame = oracle::randomTensor(rng, 1, 60, 80);
    Patch p;
    ASSERT_NO_THROW(p = cropPaddedPatch(frame, {0, 0}, {40, 30}, 2.2));
    // top-left quadrant lies entirely outside the frame and replicates pixel (0,0)
    EXPECT_DOUBLE_EQ(p.pixels(0, 0), frame(0, 0));
    EXPECT_DOUBLE_EQ(p.pixels(10, 10), frame(0, 0));
    for (double v : p.pixels.flat())
    {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(CropPaddedPatch, ZeroAreaTargetThrows)
{
    const Image frame = constantImage(50, 50, 0.1);
    EXPECT_THROW(cropPaddedPatch(frame, {25, 25}, {0, 10}, 2.2), InvalidTarget);
    EXPECT_THROW(cropPaddedPatch(frame, {25, 25}, {10, -1}, 2.2), InvalidTarget);
    EXPECT_THROW(cropPaddedPatch(frame, {25, 25}, {10, 10}, 0.0), InvalidTarget);
}

TEST(CropPaddedPatch, TranslationConsistentAwayFromBorders)
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial)
    {
        const Image frame = oracle::randomTensor(rng, 1, 120, 160);
        std::uniform_int_distribution<int> shift(-7, 7);
        const int dx = shift(rng), dy = shift(rng);
        Image moved(1, 120, 160);
        for (int r = 0; r < 120; ++r)
            for (int c = 0; c < 160; ++c)
            {
                const int sr = std::clamp(r - dy, 0, 119), sc = std::clamp(c - dx, 0, 159);
                moved(r, c) = frame(sr, sc);
            }
        const Point2 centre{80.4, 60.2};
        const Patch a = cropPaddedPatch(frame, centre, {30, 20}, 2.2, {60, 40});
        const Patch b = cropPaddedPatch(moved, {centre.x + dx, centre.y + dy}, {30, 20}, 2.2, {60, 40});
        for (std::size_t i = 0; i < a.pixels.size(); ++i)
            EXPECT_NEAR(a.pixels.flat()[i], b.pixels.flat()[i], 1e-12);
    }
}

TEST(ExtractGrayscale, ConstantPatchIsZero)
{
    const FeatureMap fm = extractGrayscale(patchOf(constantImage(160, 240, 0.8)), 2);
    for (double v : fm.data.flat())
        EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(ExtractGrayscale, ShapesFollowCellSize)
{
    std::mt19937_64 rng(1);
    const Patch p = patchOf(oracle::randomTensor(rng, 3, 160, 240));
    for (int cell : {1, 2, 4})
    {
        const FeatureMap fm = extractGrayscale(p, cell);
        EXPECT_EQ(fm.data.channels(), 1);
        EXPECT_EQ(fm.data.rows(), 160 / cell);
        EXPECT_EQ(fm.data.cols(), 240 / cell);
        EXPECT_EQ(fm.cellSize, cell);
        double sum = 0.0;
        for (double v : fm.data.flat())
            sum += v;
        EXPECT_NEAR(sum, 0.0, 1e-9);
    }
}

TEST(ExtractHogLite, ConstantPatchHasNoEnergy)
{
    const FeatureMap fm = extractHogLite(patchOf(constantImage(160, 240, 0.3)), 4, 9);
    for (double v : fm.data.flat())
        EXPECT_EQ(v, 0.0);
}

TEST(ExtractHogLite, Shape)
{
    std::mt19937_64 rng(2);
    const FeatureMap fm = extractHogLite(patchOf(oracle::randomTensor(rng, 1, 160, 240)), 4, 9);
    EXPECT_EQ(fm.data.channels(), 9);
    EXPECT_EQ(fm.data.rows(), 40);
    EXPECT_EQ(fm.data.cols(), 60);
}

TEST(ExtractHogLite, VerticalStepEdgeLandsInHorizontalGradientBin)
{
    Image img(1, 160, 240, 0.2);
    for (int r = 0; r < 160; ++r)
        for (int c = 121; c < 240; ++c)
            img(r, c) = 0.9;

    // Direct central-difference gradient at the edge pixel.
    const double gx = img(80, 121) - img(80, 119);
    const double gy = img(81, 120) - img(79, 120);
    ASSERT_GT(gx, 0.0);
    ASSERT_EQ(gy, 0.0);
    const int expectedBin = orientationBin(gx, gy, 9);
    EXPECT_EQ(expectedBin, 0);

    const FeatureMap fm = extractHogLite(patchOf(img), 4, 9);
    std::vector<double> energy(9, 0.0);
    for (int o = 0; o < 9; ++o)
        for (int r = 0; r < fm.data.rows(); ++r)
            for (int c = 0; c < fm.data.cols(); ++c)
                energy[o] += std::abs(fm.data(o, r, c));
    const int best = static_cast<int>(std::max_element(energy.begin(), energy.end()) - energy.begin());
    EXPECT_EQ(best, expectedBin);
    for (int o = 0; o < 9; ++o)
        if (o != expectedBin)
            EXPECT_LT(energy[o], 1e-9);
}

TEST(OrientationBin, UnsignedOrientation)
{
    EXPECT_EQ(orientationBin(1.0, 0.0, 9), 0);
    EXPECT_EQ(orientationBin(-1.0, 0.0, 9), 0);
    EXPECT_EQ(orientationBin(0.0, 1.0, 4), 2);
    EXPECT_EQ(orientationBin(0.0, -1.0, 4), 2);
    EXPECT_EQ(orientationBin(1.0, 1.0, 4), 1);
}

TEST(CosineWindow, CornersVanish)
{
    std::mt19937_64 rng(5);
    const FeatureMap fm{oracle::randomTensor(rng, 2, 7, 9, 0.5, 1.0), 1, 1};
    const FeatureMap w = applyCosineWindow(fm);
    for (int d = 0; d < 2; ++d)
    {
        EXPECT_EQ(w.data(d, 0, 0), 0.0);
        EXPECT_EQ(w.data(d, 0, 8), 0.0);
        EXPECT_EQ(w.data(d, 6, 0), 0.0);
        EXPECT_EQ(w.data(d, 6, 8), 0.0);
    }
    for (std::size_t i = 0; i < fm.data.size(); ++i)
        EXPECT_LE(std::abs(w.data.flat()[i]), std::abs(fm.data.flat()[i]));
}

TEST(CosineWindow, SingleCellUnchanged)
{
    const FeatureMap fm{RealTensor(1, 1, 1, 0.75), 1, 1};
    EXPECT_EQ(applyCosineWindow(fm).data(0, 0), 0.75);
}

TEST(CosineWindow, OnesThreeByThree)
{
    // Hann(3) = {0, 1, 0}: only the centre survives.
    const FeatureMap fm{RealTensor(1, 3, 3, 1.0), 1, 1};
    const FeatureMap w = applyCosineWindow(fm);
    const double expected[3][3] = {{0, 0, 0}, {0, 1, 0}, {0, 0, 0}};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            EXPECT_NEAR(w.data(r, c), expected[r][c], 1e-15);
}

TEST(CosineWindow, IdempotentOnlyForZeroMaps)
{
    const FeatureMap zero{RealTensor(1, 5, 5), 1, 1};
    EXPECT_EQ(applyCosineWindow(zero).data.data(), zero.data.data());
    std::mt19937_64 rng(8);
    const FeatureMap fm{oracle::randomTensor(rng, 1, 5, 5, 0.5, 1.0), 1, 1};
    const FeatureMap once = applyCosineWindow(fm);
    EXPECT_NE(applyCosineWindow(once).data.data(), once.data.data());
}

namespace
{
    FeatureStack makeStack(std::mt19937_64& rng, int frame)
    {
        FeatureStack s;
        s.frameIndex = frame;
        s.layers.push_back({oracle::randomTensor(rng, 3, 16, 24, -2, 2), 1, 1});
        s.layers.push_back({oracle::randomTensor(rng, 8, 8, 12, -2, 2), 2, 2});
        s.layers.push_back({oracle::randomTensor(rng, 16, 4, 6, -2, 2), 3, 4});
        s.layers.push_back({oracle::randomTensor(rng, 2, 1, 1, -2, 2), 5, 16});
        for (auto& l : s.layers)
            for (double& v : l.data.flat())
                v = static_cast<float>(v); // representable in float32
        return s;
    }
}

TEST(FeatureFile, RoundTripIsBitExact)
{
    std::mt19937_64 rng(21);
    std::vector<FeatureStack> frames{makeStack(rng, 1), makeStack(rng, 2), makeStack(rng, 3)};
    const auto path = tempPath("roundtrip.kmcf");
    writeFeatureFile(path, frames);

    const auto info = readFeatureFileInfo(path);
    EXPECT_EQ(info.frameCount, 3);
    ASSERT_EQ(info.layers.size(), 4u);
    EXPECT_EQ(info.layers[3].layerId, 5);
    EXPECT_EQ(info.layers[3].cellSize, 16);

    for (int f = 1; f <= 3; ++f)
    {
        const FeatureStack loaded = loadFeatureStack(path, f);
        EXPECT_EQ(loaded.frameIndex, f);
        ASSERT_EQ(loaded.layers.size(), 4u);
        for (std::size_t l = 0; l < 4; ++l)
        {
            const auto& want = frames[f - 1].layers[l];
            EXPECT_EQ(loaded.layers[l].layerId, want.layerId);
            EXPECT_EQ(loaded.layers[l].cellSize, want.cellSize);
            ASSERT_TRUE(loaded.layers[l].data.sameShape(want.data));
            EXPECT_EQ(loaded.layers[l].data.data(), want.data.data());
        }
    }
    std::filesystem::remove(path);
}

TEST(FeatureFile, HeaderBytesAreLittleEndian)
{
    std::mt19937_64 rng(4);
    FeatureStack s;
    s.layers.push_back({oracle::randomTensor(rng, 1, 2, 3), 7, 2});
    const auto path = tempPath("header.kmcf");
    writeFeatureFile(path, {s});
    std::ifstream in(path, std::ios::binary);
    std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ASSERT_EQ(b.size(), 4u + 2 + 4 + 2 + 10 + 6 * 4);
    EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "KMCF");
    EXPECT_EQ(b[4], 1); EXPECT_EQ(b[5], 0);                              // version
    EXPECT_EQ(b[6], 1); EXPECT_EQ(b[7], 0); EXPECT_EQ(b[8], 0); EXPECT_EQ(b[9], 0); // frames
    EXPECT_EQ(b[10], 1); EXPECT_EQ(b[11], 0);                            // layers
    EXPECT_EQ(b[12], 7); EXPECT_EQ(b[14], 2); EXPECT_EQ(b[16], 1); EXPECT_EQ(b[18], 2); EXPECT_EQ(b[20], 3);
    std::filesystem::remove(path);
}

TEST(FeatureFile, ErrorPaths)
{
    std::mt19937_64 rng(9);
    const auto path = tempPath("errors.kmcf");
    writeFeatureFile(path, {makeStack(rng, 1), makeStack(rng, 2)});

    EXPECT_THROW(loadFeatureStack(path, 0), IndexError);
    EXPECT_THROW(loadFeatureStack(path, 3), IndexError);

    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 5);
    EXPECT_THROW(loadFeatureStack(path, 1), FormatError);
    std::filesystem::resize_file(path, 8);
    EXPECT_THROW(loadFeatureStack(path, 1), FormatError);

    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << "KMCX\x01\x00";
    }
    EXPECT_THROW(loadFeatureStack(path, 1), FormatError);

    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        const char bytes[] = {'K', 'M', 'C', 'F', 2, 0, 1, 0, 0, 0, 1, 0};
        out.write(bytes, sizeof(bytes));
    }
    EXPECT_THROW(loadFeatureStack(path, 1), FormatError);

    {
        // header claims 65535^3 floats per frame with an empty payload
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        const unsigned char bytes[] = {'K', 'M', 'C', 'F', 1, 0, 0xFF, 0xFF, 0xFF, 0xFF, 1, 0,
            1, 0, 1, 0, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF};
        out.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
    }
    EXPECT_THROW(loadFeatureStack(path, 1), FormatError);
    std::filesystem::remove(path);
}
