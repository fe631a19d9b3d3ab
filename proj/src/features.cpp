#include "kmc/features.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <numbers>
#include <numeric>

#include "binary_io.hpp"

namespace kmc
{
    namespace
    {
        inline double lerp(double a, double b, double t) { return a + t * (b - a); }

        void subtractChannelMeans(RealTensor& t)
        {
            for (int c = 0; c < t.channels(); ++c)
            {
                auto ch = t.channel(c);
                if (ch.empty())
                    continue;
                const double mean = std::accumulate(ch.begin(), ch.end(), 0.0) / static_cast<double>(ch.size());
                for (double& v : ch)
                    v -= mean;
            }
        }

        void checkCellSize(int cellSize, const Patch& patch)
        {
            if (cellSize < 1)
                throw ShapeError("cell size must be positive");
            if (patch.pixels.rows() < cellSize || patch.pixels.cols() < cellSize)
                throw ShapeError("patch smaller than one cell");
        }
    }

    Patch cropPaddedPatch(const Image& frame, Point2 center, Size2 targetSize, double padding, PixelSize outSize)
    {
        if (!(targetSize.w > 0.0) || !(targetSize.h > 0.0) || !std::isfinite(targetSize.w)
            || !std::isfinite(targetSize.h))
            throw InvalidTarget("target size must be positive and finite");
        if (!(padding > 0.0) || !std::isfinite(padding))
            throw InvalidTarget("padding must be positive");
        if (!std::isfinite(center.x) || !std::isfinite(center.y))
            throw InvalidTarget("target centre is not finite");
        if (frame.empty())
            throw InvalidTarget("empty frame");
        if (outSize.w < 1 || outSize.h < 1)
            throw ShapeError("output patch size must be positive");

        const double cropW = padding * targetSize.w;
        const double cropH = padding * targetSize.h;
        Patch patch;
        patch.sourceRect = {center.x - cropW / 2.0, center.y - cropH / 2.0, cropW, cropH};
        patch.pixels = Image(frame.channels(), outSize.h, outSize.w);

        const int maxX = frame.cols() - 1;
        const int maxY = frame.rows() - 1;
        const double stepX = cropW / outSize.w;
        const double stepY = cropH / outSize.h;

        // Precompute horizontal taps once per column.
        std::vector<int> x0s(outSize.w), x1s(outSize.w);
        std::vector<double> fxs(outSize.w);
        for (int c = 0; c < outSize.w; ++c)
        {
            const double sx = patch.sourceRect.x + (c + 0.5) * stepX - 0.5;
            const double fl = std::floor(sx);
            fxs[c] = sx - fl;
            const long long xi = static_cast<long long>(fl);
            x0s[c] = static_cast<int>(std::clamp<long long>(xi, 0, maxX));
            x1s[c] = static_cast<int>(std::clamp<long long>(xi + 1, 0, maxX));
        }

        for (int r = 0; r < outSize.h; ++r)
        {
            const double sy = patch.sourceRect.y + (r + 0.5) * stepY - 0.5;
            const double fl = std::floor(sy);
            const double fy = sy - fl;
            const long long yi = static_cast<long long>(fl);
            const int y0 = static_cast<int>(std::clamp<long long>(yi, 0, maxY));
            const int y1 = static_cast<int>(std::clamp<long long>(yi + 1, 0, maxY));
            for (int ch = 0; ch < frame.channels(); ++ch)
            {
                for (int c = 0; c < outSize.w; ++c)
                {
                    const double top = lerp(frame(ch, y0, x0s[c]), frame(ch, y0, x1s[c]), fxs[c]);
                    const double bottom = lerp(frame(ch, y1, x0s[c]), frame(ch, y1, x1s[c]), fxs[c]);
                    patch.pixels(ch, r, c) = lerp(top, bottom, fy);
                }
            }
        }
        return patch;
    }

    Image toGray(const Image& img)
    {
        if (img.channels() == 1)
            return img;
        if (img.channels() != 3)
            throw ShapeError("expected 1 or 3 image channels, got " + std::to_string(img.channels()));
        Image gray(1, img.rows(), img.cols());
        auto out = gray.channel(0);
        auto r = img.channel(0);
        auto g = img.channel(1);
        auto b = img.channel(2);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
        return gray;
    }

    FeatureMap extractGrayscale(const Patch& patch, int cellSize, int layerId)
    {
        checkCellSize(cellSize, patch);
        const Image gray = toGray(patch.pixels);
        const int rows = gray.rows() / cellSize;
        const int cols = gray.cols() / cellSize;
        FeatureMap fm{RealTensor(1, rows, cols), layerId, cellSize};
        const double norm = 1.0 / (cellSize * cellSize);
        for (int r = 0; r < rows; ++r)
        {
            for (int c = 0; c < cols; ++c)
            {
                double sum = 0.0;
                for (int dy = 0; dy < cellSize; ++dy)
                    for (int dx = 0; dx < cellSize; ++dx)
                        sum += gray(r * cellSize + dy, c * cellSize + dx);
                fm.data(r, c) = sum * norm;
            }
        }
        subtractChannelMeans(fm.data);
        return fm;
    }

    int orientationBin(double gx, double gy, int nOrientations)
    {
        // unsigned orientation in [0, pi)
        double theta = std::atan2(gy, gx);
        if (theta < 0.0)
            theta += std::numbers::pi;
        int bin = static_cast<int>(std::floor(theta / std::numbers::pi * nOrientations));
        return bin >= nOrientations ? bin - nOrientations : bin;
    }

    FeatureMap extractHogLite(const Patch& patch, int cellSize, int nOrientations, int layerId)
    {
        if (cellSize < 2)
            throw ShapeError("hog cell size must be at least 2");
        if (nOrientations < 4)
            throw ShapeError("hog needs at least 4 orientations");
        checkCellSize(cellSize, patch);

        const Image gray = toGray(patch.pixels);
        const int h = gray.rows();
        const int w = gray.cols();
        const int rows = h / cellSize;
        const int cols = w / cellSize;
        RealTensor hist(nOrientations, rows, cols);

        for (int y = 0; y < rows * cellSize; ++y)
        {
            const int yUp = std::max(y - 1, 0);
            const int yDown = std::min(y + 1, h - 1);
            for (int x = 0; x < cols * cellSize; ++x)
            {
                const int xl = std::max(x - 1, 0);
                const int xr = std::min(x + 1, w - 1);
                const double gx = gray(y, xr) - gray(y, xl);
                const double gy = gray(yDown, x) - gray(yUp, x);
                const double mag = std::hypot(gx, gy);
                if (mag == 0.0)
                    continue;
                hist(orientationBin(gx, gy, nOrientations), y / cellSize, x / cellSize) += mag;
            }
        }

        RealTensor energy(1, rows, cols);
        for (int o = 0; o < nOrientations; ++o)
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    energy(r, c) += hist(o, r, c) * hist(o, r, c);

        constexpr double eps = 1e-5;
        FeatureMap fm{RealTensor(nOrientations, rows, cols), layerId, cellSize};
        for (int r = 0; r < rows; ++r)
        {
            for (int c = 0; c < cols; ++c)
            {
                double block = 0.0;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc)
                    {
                        const int rr = r + dr, cc = c + dc;
                        if (rr >= 0 && rr < rows && cc >= 0 && cc < cols)
                            block += energy(rr, cc);
                    }
                const double scale = 1.0 / std::sqrt(block + eps);
                for (int o = 0; o < nOrientations; ++o)
                    fm.data(o, r, c) = hist(o, r, c) * scale;
            }
        }
        subtractChannelMeans(fm.data);
        return fm;
    }

    std::vector<double> hannWindow(int length)
    {
        if (length < 1)
            return {};
        std::vector<double> w(length, 1.0);
        if (length == 1)
            return w;
        for (int i = 0; i < length; ++i)
            w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / (length - 1)));
        // exact zeros at both ends
        w.front() = 0.0;
        w.back() = 0.0;
        return w;
    }

    FeatureMap applyCosineWindow(const FeatureMap& fm)
    {
        FeatureMap out = fm;
        const auto wr = hannWindow(fm.data.rows());
        const auto wc = hannWindow(fm.data.cols());
        for (int d = 0; d < fm.data.channels(); ++d)
            for (int r = 0; r < fm.data.rows(); ++r)
                for (int c = 0; c < fm.data.cols(); ++c)
                    out.data(d, r, c) *= wr[r] * wc[c];
        return out;
    }

    FeatureMap normalizeEnergy(const FeatureMap& fm)
    {
        FeatureMap out = fm;
        double sq = 0.0;
        for (double v : fm.data.flat())
            sq += v * v;
        if (sq <= 0.0)
            return out;
        const double inv = 1.0 / std::sqrt(sq);
        for (double& v : out.data.flat())
            v *= inv;
        return out;
    }

    void validateStack(const FeatureStack& stack)
    {
        if (stack.layers.empty())
            throw ShapeError("feature stack has no layers");
        if (stack.frameIndex < 1)
            throw IndexError("frame index must be >= 1");
        for (std::size_t i = 0; i < stack.layers.size(); ++i)
        {
            const auto& l = stack.layers[i];
            if (l.layerId < 1 || l.cellSize < 1 || l.data.channels() < 1)
                throw ShapeError("invalid feature layer header");
            if (i > 0 && l.layerId <= stack.layers[i - 1].layerId)
                throw ShapeError("layer ids must be strictly increasing");
        }
    }

    namespace
    {
        constexpr std::string_view kKmcfMagic = "KMCF";
        constexpr std::uint16_t kKmcfVersion = 1;
        constexpr std::size_t kKmcfFixedHeader = 4 + 2 + 4 + 2;
        constexpr std::size_t kKmcfLayerHeader = 5 * 2;
    }

    FeatureFileReader::FeatureFileReader(const std::filesystem::path& path)
        : _path(path), _in(path, std::ios::binary)
    {
        if (!_in)
            throw IoError("cannot open " + path.string());
        std::error_code ec;
        const std::uint64_t fileSize = std::filesystem::file_size(path, ec);
        if (ec)
            throw IoError("cannot stat " + path.string());

        auto readBytes = [&](std::size_t n) {
            std::vector<char> buf(n);
            _in.read(buf.data(), static_cast<std::streamsize>(n));
            if (static_cast<std::size_t>(_in.gcount()) != n)
                throw FormatError("KMCF: truncated header");
            return buf;
        };

        detail::LeReader fixed(readBytes(kKmcfFixedHeader), "KMCF");
        fixed.expectMagic(kKmcfMagic);
        const auto version = fixed.u16();
        if (version != kKmcfVersion)
            throw FormatError("KMCF: unsupported version " + std::to_string(version));
        _info.frameCount = static_cast<int>(fixed.u32());
        const int layerCount = fixed.u16();
        if (layerCount == 0)
            throw FormatError("KMCF: zero layers");

        detail::LeReader layers(readBytes(kKmcfLayerHeader * layerCount), "KMCF");
        std::uint64_t frameFloats = 0;
        for (int i = 0; i < layerCount; ++i)
        {
            FeatureFileInfo::Layer l{};
            l.layerId = layers.u16();
            l.cellSize = layers.u16();
            l.channels = layers.u16();
            l.rows = layers.u16();
            l.cols = layers.u16();
            if (l.layerId == 0 || l.cellSize == 0 || l.channels == 0 || l.rows == 0 || l.cols == 0)
                throw FormatError("KMCF: zero field in layer header " + std::to_string(i));
            if (!_info.layers.empty() && l.layerId <= _info.layers.back().layerId)
                throw FormatError("KMCF: layer ids not strictly increasing");
            frameFloats += static_cast<std::uint64_t>(l.channels) * l.rows * l.cols;
            _info.layers.push_back(l);
        }

        _dataOffset = kKmcfFixedHeader + kKmcfLayerHeader * layerCount;
        _frameBytes = frameFloats * 4; // < 2^66 impossible: at most 2^16 layers of 2^48 floats
        if (fileSize < _dataOffset)
            throw FormatError("KMCF: truncated header");
        const std::uint64_t available = fileSize - _dataOffset;
        const auto frames = static_cast<std::uint64_t>(_info.frameCount);
        if (frames > 0 && _frameBytes > available / frames)
            throw FormatError("KMCF: truncated file or dimension overflow");
        if (_frameBytes * frames != available)
            throw FormatError("KMCF: payload size " + std::to_string(available)
                + " does not match header (" + std::to_string(_frameBytes * frames) + ")");
    }

    FeatureStack FeatureFileReader::read(int frameIndex)
    {
        if (frameIndex < 1 || frameIndex > _info.frameCount)
            throw IndexError("KMCF: frame " + std::to_string(frameIndex) + " out of range 1.."
                + std::to_string(_info.frameCount));

        _in.clear();
        _in.seekg(static_cast<std::streamoff>(_dataOffset + (frameIndex - 1) * _frameBytes));
        std::vector<char> buf(static_cast<std::size_t>(_frameBytes));
        _in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (static_cast<std::size_t>(_in.gcount()) != buf.size())
            throw FormatError("KMCF: truncated frame " + std::to_string(frameIndex));

        detail::LeReader payload(std::move(buf), "KMCF");
        FeatureStack stack;
        stack.frameIndex = frameIndex;
        for (const auto& l : _info.layers)
        {
            FeatureMap fm{RealTensor(l.channels, l.rows, l.cols), l.layerId, l.cellSize};
            for (double& v : fm.data.flat())
                v = payload.f32();
            stack.layers.push_back(std::move(fm));
        }
        return stack;
    }

    void writeFeatureFile(const std::filesystem::path& path, const std::vector<FeatureStack>& frames)
    {
        if (frames.empty())
            throw ShapeError("KMCF: no frames to write");
        const auto& first = frames.front();
        validateStack(first);

        detail::LeWriter out;
        out.magic(kKmcfMagic);
        out.u16(kKmcfVersion);
        out.u32(static_cast<std::uint32_t>(frames.size()));
        out.u16(static_cast<std::uint32_t>(first.layers.size()));
        for (const auto& l : first.layers)
        {
            out.u16(l.layerId);
            out.u16(l.cellSize);
            out.u16(l.data.channels());
            out.u16(l.data.rows());
            out.u16(l.data.cols());
        }
        for (const auto& stack : frames)
        {
            if (stack.layers.size() != first.layers.size())
                throw ShapeError("KMCF: every frame must have the same layers");
            for (std::size_t i = 0; i < stack.layers.size(); ++i)
            {
                const auto& l = stack.layers[i];
                const auto& ref = first.layers[i];
                if (l.layerId != ref.layerId || l.cellSize != ref.cellSize || !l.data.sameShape(ref.data))
                    throw ShapeError("KMCF: layer " + std::to_string(i) + " differs between frames");
                for (double v : l.data.flat())
                    out.f32(static_cast<float>(v));
            }
        }
        out.save(path);
    }

    FeatureFileInfo readFeatureFileInfo(const std::filesystem::path& path)
    {
        return FeatureFileReader(path).info();
    }

    FeatureStack loadFeatureStack(const std::filesystem::path& path, int frameIndex)
    {
        return FeatureFileReader(path).read(frameIndex);
    }
}
