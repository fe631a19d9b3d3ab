#include "kmc/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "binary_io.hpp"

namespace kmc
{
    namespace
    {
        using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        using MatrixMap = Eigen::Map<RowMatrix>;
        using ConstMatrixMap = Eigen::Map<const RowMatrix>;
        using VectorMap = Eigen::Map<Eigen::VectorXd>;
        using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

        constexpr int kPad = 1;

        /*
         * Writes one sample's patches into a column block:
         * cols(c*9 + ky*3 + kx, offset + r*w + x) = in(c, r + ky - 1, x + kx - 1),
         * zero outside. Channel planes of `in` are `channelStride` apart and
         * each cols row is `rowStride` long.
         */
        void im2col(const double* in, std::size_t channelStride, int channels, int h, int w, double* cols,
            std::size_t rowStride, std::size_t offset)
        {
            const int k = DecoderNet::kKernel;
            for (int c = 0; c < channels; ++c)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx)
                    {
                        double* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * rowStride + offset;
                        const double* src = in + c * channelStride;
                        for (int r = 0; r < h; ++r)
                        {
                            const int sr = r + ky - kPad;
                            for (int x = 0; x < w; ++x)
                            {
                                const int sx = x + kx - kPad;
                                row[r * w + x] = (sr >= 0 && sr < h && sx >= 0 && sx < w) ? src[sr * w + sx] : 0.0;
                            }
                        }
                    }
        }

        // Adjoint of im2col: accumulates a column block back onto the planes.
        void col2im(const double* cols, std::size_t rowStride, std::size_t offset, int channels, int h, int w,
            double* out, std::size_t channelStride)
        {
            const int k = DecoderNet::kKernel;
            for (int c = 0; c < channels; ++c)
                for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx)
                    {
                        const double* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * rowStride + offset;
                        double* dst = out + c * channelStride;
                        for (int r = 0; r < h; ++r)
                        {
                            const int sr = r + ky - kPad;
                            if (sr < 0 || sr >= h)
                                continue;
                            for (int x = 0; x < w; ++x)
                            {
                                const int sx = x + kx - kPad;
                                if (sx >= 0 && sx < w)
                                    dst[sr * w + sx] += row[r * w + x];
                            }
                        }
                    }
        }

        // out (outputs x cols) = W * cols + b
        void convGemm(const DecoderNet::Layer& layer, const std::vector<double>& cols, std::size_t width,
            std::vector<double>& out)
        {
            const int depth = layer.inputs * layer.kernelH * layer.kernelW;
            out.resize(static_cast<std::size_t>(layer.outputs) * width);
            MatrixMap oMat(out.data(), layer.outputs, static_cast<Eigen::Index>(width));
            oMat.noalias() = ConstMatrixMap(layer.weights.data(), layer.outputs, depth)
                * ConstMatrixMap(cols.data(), depth, static_cast<Eigen::Index>(width));
            for (int o = 0; o < layer.outputs; ++o)
                oMat.row(o).array() += layer.bias[o];
        }

        /*
         * ReLU followed by 2x2 max pooling of one channel plane. Writes the
         * pooled plane to `out` and the flat index (into `pre`) of each
         * window's winner to `arg`; ties keep the first element.
         */
        void reluPoolPlane(const std::vector<double>& pre, std::size_t planeOffset, int h, int w, double* out,
            int* arg)
        {
            const int ph = h / 2;
            const int pw = w / 2;
            const double* src = pre.data() + planeOffset;
            for (int r = 0; r < ph; ++r)
                for (int x = 0; x < pw; ++x)
                {
                    int best = (2 * r) * w + 2 * x;
                    double bestValue = std::max(0.0, src[best]);
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                        {
                            const int idx = (2 * r + dy) * w + 2 * x + dx;
                            const double v = std::max(0.0, src[idx]);
                            if (v > bestValue)
                            {
                                bestValue = v;
                                best = idx;
                            }
                        }
                    out[r * pw + x] = bestValue;
                    arg[r * pw + x] = static_cast<int>(planeOffset) + best;
                }
        }

        // Routes each pooled gradient to its window winner when that unit is active.
        void reluPoolBackward(const std::vector<double>& gradOut, const std::vector<int>& arg,
            const std::vector<double>& pre, std::vector<double>& gradPre)
        {
            gradPre.assign(pre.size(), 0.0);
            for (std::size_t i = 0; i < gradOut.size(); ++i)
                if (pre[arg[i]] > 0.0)
                    gradPre[arg[i]] += gradOut[i];
        }

        void convWeightGradient(const DecoderNet::Layer& layer, const std::vector<double>& cols,
            const std::vector<double>& gradOut, std::size_t width, DecoderNet::Layer& grad)
        {
            const int depth = layer.inputs * layer.kernelH * layer.kernelW;
            ConstMatrixMap gMat(gradOut.data(), layer.outputs, static_cast<Eigen::Index>(width));
            MatrixMap(grad.weights.data(), layer.outputs, depth).noalias()
                = gMat * ConstMatrixMap(cols.data(), depth, static_cast<Eigen::Index>(width)).transpose();
            VectorMap(grad.bias.data(), layer.outputs) = gMat.rowwise().sum();
        }

        DecoderNet::Layer makeLayer(int outputs, int inputs, int kh, int kw)
        {
            DecoderNet::Layer l;
            l.outputs = outputs;
            l.inputs = inputs;
            l.kernelH = kh;
            l.kernelW = kw;
            l.weights.assign(static_cast<std::size_t>(outputs) * inputs * kh * kw, 0.0);
            l.bias.assign(static_cast<std::size_t>(outputs), 0.0);
            return l;
        }

        double sampleBilinear(std::span<const double> plane, int rows, int cols, double r, double c)
        {
            r = std::clamp(r, 0.0, static_cast<double>(rows - 1));
            c = std::clamp(c, 0.0, static_cast<double>(cols - 1));
            const int r0 = static_cast<int>(std::floor(r));
            const int c0 = static_cast<int>(std::floor(c));
            const int r1 = std::min(r0 + 1, rows - 1);
            const int c1 = std::min(c0 + 1, cols - 1);
            const double fr = r - r0;
            const double fc = c - c0;
            const double top = plane[r0 * cols + c0] + fc * (plane[r0 * cols + c1] - plane[r0 * cols + c0]);
            const double bottom = plane[r1 * cols + c0] + fc * (plane[r1 * cols + c1] - plane[r1 * cols + c0]);
            return top + fr * (bottom - top);
        }
    }

    RealTensor fftShift(const RealTensor& map)
    {
        return circularShift(map, map.rows() / 2, map.cols() / 2);
    }

    void minMaxRescale(RealTensor& maps)
    {
        for (int c = 0; c < maps.channels(); ++c)
        {
            auto v = maps.channel(c);
            if (v.empty())
                continue;
            const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
            const double low = *lo;
            const double range = *hi - low;
            for (double& x : v)
                x = range > 0.0 ? (x - low) / range : 0.0;
        }
    }

    ResponseStack stackResponses(const std::vector<ResponseMap>& responses, int gridRows, int gridCols)
    {
        if (responses.empty())
            throw ShapeError("stackResponses needs at least one response map");
        if (gridRows < 1 || gridCols < 1)
            throw ShapeError("grid must be non-empty");

        ResponseStack stack;
        stack.maps = RealTensor(static_cast<int>(responses.size()), gridRows, gridCols);
        for (std::size_t k = 0; k < responses.size(); ++k)
        {
            const RealTensor& data = responses[k].data;
            if (data.channels() != 1 || data.plane() == 0)
                throw ShapeError("response maps must be single-channel and non-empty, got " + data.shapeString());
            const RealTensor shifted = fftShift(data);
            const int m = shifted.rows();
            const int n = shifted.cols();
            const double sy = static_cast<double>(m) / gridRows;
            const double sx = static_cast<double>(n) / gridCols;
            for (int g = 0; g < gridRows; ++g)
            {
                const double r = m / 2 + (g - gridRows / 2) * sy;
                for (int h = 0; h < gridCols; ++h)
                {
                    const double c = n / 2 + (h - gridCols / 2) * sx;
                    stack.maps(static_cast<int>(k), g, h) = sampleBilinear(shifted.channel(0), m, n, r, c);
                }
            }
            stack.cellSizes.push_back(responses[k].cellSize);
        }
        minMaxRescale(stack.maps);
        return stack;
    }

    Translation normalizeTranslation(Translation px, PixelSize patch)
    {
        return {px.dx / patch.w, px.dy / patch.h};
    }

    Translation denormalizeTranslation(Translation n, PixelSize patch)
    {
        return {n.dx * patch.w, n.dy * patch.h};
    }

    Translation maxresDecode(const ResponseStack& stack, PixelSize patch)
    {
        const RealTensor& maps = stack.maps;
        if (maps.channels() < 1 || maps.plane() == 0)
            throw ShapeError("maxresDecode needs a non-empty stack");
        RealTensor mean(1, maps.rows(), maps.cols());
        for (int k = 0; k < maps.channels(); ++k)
        {
            auto src = maps.channel(k);
            auto dst = mean.channel(0);
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] += src[i];
        }
        for (double& v : mean.flat())
            v /= maps.channels();
        const GridIndex peak = argmax(mean);
        const double cellH = static_cast<double>(patch.h) / maps.rows();
        const double cellW = static_cast<double>(patch.w) / maps.cols();
        return {(peak.col - maps.cols() / 2) * cellW, (peak.row - maps.rows() / 2) * cellH};
    }

    DecoderNet::DecoderNet(int channels, int gridRows, int gridCols)
        : _channels(channels), _gridRows(gridRows), _gridCols(gridCols)
    {
        if (channels < 1 || gridRows < 4 || gridCols < 4)
            throw ShapeError("decoder needs K >= 1 and a grid of at least 4 x 4");
        _layers[Conv1] = makeLayer(kConv1Filters, channels, kKernel, kKernel);
        _layers[Conv2] = makeLayer(kConv2Filters, kConv1Filters, kKernel, kKernel);
        _layers[Dense1] = makeLayer(kHidden, flattenedSize(), 1, 1);
        _layers[Head] = makeLayer(kOutputs, kHidden, 1, 1);
    }

    DecoderNet DecoderNet::heInitialized(int channels, std::uint64_t seed, int gridRows, int gridCols)
    {
        DecoderNet net(channels, gridRows, gridCols);
        std::mt19937_64 rng(seed);
        for (auto& l : net._layers)
        {
            const double fanIn = static_cast<double>(l.inputs) * l.kernelH * l.kernelW;
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fanIn));
            for (double& w : l.weights)
                w = dist(rng);
        }
        return net;
    }

    DecoderNet DecoderNet::uniformInitialized(int channels, std::uint64_t seed, int gridRows, int gridCols)
    {
        DecoderNet net(channels, gridRows, gridCols);
        std::mt19937_64 rng(seed);
        for (auto& l : net._layers)
        {
            const double bound = 1.0 / std::sqrt(static_cast<double>(l.inputs) * l.kernelH * l.kernelW);
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (double& w : l.weights)
                w = dist(rng);
        }
        return net;
    }

    int DecoderNet::flattenedSize() const noexcept
    {
        return kConv2Filters * (_gridRows / 4) * (_gridCols / 4);
    }

    std::size_t DecoderNet::parameterCount() const noexcept
    {
        std::size_t n = 0;
        forEachBuffer([&](const std::vector<double>& b) { n += b.size(); });
        return n;
    }

    bool DecoderNet::sameArchitecture(const DecoderNet& other) const noexcept
    {
        return _channels == other._channels && _gridRows == other._gridRows && _gridCols == other._gridCols;
    }

    Translation decoderForward(const DecoderNet& net, const ResponseStack& stack)
    {
        ForwardCache cache;
        return decoderForward(net, stack, cache);
    }

    Translation decoderForward(const DecoderNet& net, const ResponseStack& stack, ForwardCache& cache)
    {
        return decoderForwardBatch(net, {&stack}, cache).front();
    }

    const std::vector<Translation>& decoderForwardBatch(const DecoderNet& net,
        const std::vector<const ResponseStack*>& stacks, ForwardCache& cache)
    {
        if (stacks.empty())
            throw ShapeError("decoder batch is empty");
        for (const ResponseStack* s : stacks)
        {
            const RealTensor& x = s->maps;
            if (x.channels() != net.channels() || !x.samePlane(net.gridRows(), net.gridCols()))
                throw ShapeError("decoder expects " + std::to_string(net.channels()) + " x "
                    + std::to_string(net.gridRows()) + " x " + std::to_string(net.gridCols()) + ", got "
                    + x.shapeString());
        }

        const auto& layers = net.layers();
        const auto& conv1 = layers[DecoderNet::Conv1];
        const auto& conv2 = layers[DecoderNet::Conv2];
        const auto& dense1 = layers[DecoderNet::Dense1];
        const auto& head = layers[DecoderNet::Head];
        const int batch = static_cast<int>(stacks.size());
        const int h1 = net.gridRows(), w1 = net.gridCols();
        const int h2 = h1 / 2, w2 = w1 / 2;
        const int h3 = h2 / 2, w3 = w2 / 2;
        const std::size_t p1 = static_cast<std::size_t>(h1) * w1;
        const std::size_t p2 = static_cast<std::size_t>(h2) * w2;
        const std::size_t p3 = static_cast<std::size_t>(h3) * w3;
        const std::size_t width1 = p1 * batch;
        const std::size_t width2 = p2 * batch;
        cache.batch = batch;

        cache.cols1.resize(static_cast<std::size_t>(conv1.inputs) * 9 * width1);
        for (int b = 0; b < batch; ++b)
            im2col(stacks[b]->maps.data().data(), p1, conv1.inputs, h1, w1, cache.cols1.data(), width1, b * p1);
        convGemm(conv1, cache.cols1, width1, cache.pre1);

        cache.pool1.resize(static_cast<std::size_t>(conv1.outputs) * width2);
        cache.pool1Arg.resize(cache.pool1.size());
        for (int c = 0; c < conv1.outputs; ++c)
            for (int b = 0; b < batch; ++b)
            {
                const std::size_t o = c * width2 + b * p2;
                reluPoolPlane(cache.pre1, c * width1 + b * p1, h1, w1, cache.pool1.data() + o,
                    cache.pool1Arg.data() + o);
            }

        cache.cols2.resize(static_cast<std::size_t>(conv2.inputs) * 9 * width2);
        for (int b = 0; b < batch; ++b)
            im2col(cache.pool1.data() + b * p2, width2, conv2.inputs, h2, w2, cache.cols2.data(), width2, b * p2);
        convGemm(conv2, cache.cols2, width2, cache.pre2);

        const int flat = net.flattenedSize();
        cache.pool2.resize(static_cast<std::size_t>(flat) * batch);
        cache.pool2Arg.resize(cache.pool2.size());
        for (int b = 0; b < batch; ++b)
            for (int c = 0; c < conv2.outputs; ++c)
            {
                const std::size_t o = static_cast<std::size_t>(b) * flat + c * p3;
                reluPoolPlane(cache.pre2, c * width2 + b * p2, h2, w2, cache.pool2.data() + o,
                    cache.pool2Arg.data() + o);
            }

        cache.hiddenPre.resize(static_cast<std::size_t>(dense1.outputs) * batch);
        MatrixMap hp(cache.hiddenPre.data(), dense1.outputs, batch);
        hp.noalias() = ConstMatrixMap(dense1.weights.data(), dense1.outputs, dense1.inputs)
            * ConstMatrixMap(cache.pool2.data(), batch, flat).transpose();
        hp.colwise() += ConstVectorMap(dense1.bias.data(), dense1.outputs);
        cache.hidden.resize(cache.hiddenPre.size());
        for (std::size_t i = 0; i < cache.hidden.size(); ++i)
            cache.hidden[i] = std::max(0.0, cache.hiddenPre[i]);

        cache.logits.resize(static_cast<std::size_t>(DecoderNet::kOutputs) * batch);
        MatrixMap z(cache.logits.data(), DecoderNet::kOutputs, batch);
        z.noalias() = ConstMatrixMap(head.weights.data(), head.outputs, head.inputs)
            * ConstMatrixMap(cache.hidden.data(), dense1.outputs, batch);
        z.colwise() += ConstVectorMap(head.bias.data(), head.outputs);

        cache.outputs.resize(batch);
        for (int b = 0; b < batch; ++b)
            cache.outputs[b] = {0.5 * std::tanh(z(0, b)), 0.5 * std::tanh(z(1, b))};
        return cache.outputs;
    }

    double lossRms(Translation pred, Translation target)
    {
        const double ex = pred.dx - target.dx;
        const double ey = pred.dy - target.dy;
        return std::sqrt(0.5 * (ex * ex + ey * ey));
    }

    DecoderNet decoderBackward(const DecoderNet& net, const ForwardCache& cache, Translation target,
        double lossScale)
    {
        return decoderBackward(net, cache, std::vector<Translation>{target}, lossScale);
    }

    DecoderNet decoderBackward(const DecoderNet& net, const ForwardCache& cache,
        const std::vector<Translation>& targets, double lossScale)
    {
        const int batch = cache.batch;
        if (static_cast<int>(targets.size()) != batch || static_cast<int>(cache.outputs.size()) != batch)
            throw ShapeError("decoderBackward: target count does not match the cached batch");

        DecoderNet grad(net.channels(), net.gridRows(), net.gridCols());
        const auto& layers = net.layers();
        const auto& conv1 = layers[DecoderNet::Conv1];
        const auto& conv2 = layers[DecoderNet::Conv2];
        const auto& dense1 = layers[DecoderNet::Dense1];
        const auto& head = layers[DecoderNet::Head];
        auto& g = grad.layers();

        // dL/dy = 0.5 (y - t) / L, dy/dz = 0.5 (1 - tanh^2) = 0.5 - 2 y^2
        RowMatrix dz = RowMatrix::Zero(DecoderNet::kOutputs, batch);
        bool any = false;
        for (int b = 0; b < batch; ++b)
        {
            const Translation y = cache.outputs[b];
            const double loss = lossRms(y, targets[b]);
            if (loss == 0.0)
                continue;
            any = true;
            dz(0, b) = lossScale * 0.5 * (y.dx - targets[b].dx) / loss * (0.5 - 2.0 * y.dx * y.dx);
            dz(1, b) = lossScale * 0.5 * (y.dy - targets[b].dy) / loss * (0.5 - 2.0 * y.dy * y.dy);
        }
        if (!any)
            return grad;

        ConstMatrixMap hidden(cache.hidden.data(), dense1.outputs, batch);
        MatrixMap(g[DecoderNet::Head].weights.data(), head.outputs, head.inputs).noalias() = dz * hidden.transpose();
        VectorMap(g[DecoderNet::Head].bias.data(), head.outputs) = dz.rowwise().sum();

        RowMatrix dh = ConstMatrixMap(head.weights.data(), head.outputs, head.inputs).transpose() * dz;
        ConstMatrixMap hiddenPre(cache.hiddenPre.data(), dense1.outputs, batch);
        dh = (hiddenPre.array() > 0.0).select(dh, 0.0);

        const int flat = net.flattenedSize();
        ConstMatrixMap pool2(cache.pool2.data(), batch, flat);
        MatrixMap(g[DecoderNet::Dense1].weights.data(), dense1.outputs, dense1.inputs).noalias() = dh * pool2;
        VectorMap(g[DecoderNet::Dense1].bias.data(), dense1.outputs) = dh.rowwise().sum();
        std::vector<double> dPool2(cache.pool2.size());
        MatrixMap(dPool2.data(), batch, flat).noalias()
            = dh.transpose() * ConstMatrixMap(dense1.weights.data(), dense1.outputs, dense1.inputs);

        const int h1 = net.gridRows(), w1 = net.gridCols();
        const int h2 = h1 / 2, w2 = w1 / 2;
        const std::size_t p1 = static_cast<std::size_t>(h1) * w1;
        const std::size_t p2 = static_cast<std::size_t>(h2) * w2;
        const std::size_t width1 = p1 * batch;
        const std::size_t width2 = p2 * batch;

        std::vector<double> dPre2;
        reluPoolBackward(dPool2, cache.pool2Arg, cache.pre2, dPre2);
        convWeightGradient(conv2, cache.cols2, dPre2, width2, g[DecoderNet::Conv2]);

        const int depth2 = conv2.inputs * 9;
        std::vector<double> dCols2(static_cast<std::size_t>(depth2) * width2);
        MatrixMap(dCols2.data(), depth2, static_cast<Eigen::Index>(width2)).noalias()
            = ConstMatrixMap(conv2.weights.data(), conv2.outputs, depth2).transpose()
            * ConstMatrixMap(dPre2.data(), conv2.outputs, static_cast<Eigen::Index>(width2));
        std::vector<double> dPool1(cache.pool1.size(), 0.0);
        for (int b = 0; b < batch; ++b)
            col2im(dCols2.data(), width2, b * p2, conv2.inputs, h2, w2, dPool1.data() + b * p2, width2);

        std::vector<double> dPre1;
        reluPoolBackward(dPool1, cache.pool1Arg, cache.pre1, dPre1);
        convWeightGradient(conv1, cache.cols1, dPre1, width1, g[DecoderNet::Conv1]);
        return grad;
    }

    double decoderLossAndGradient(const DecoderNet& net, const ResponseStack& stack, Translation target,
        DecoderNet& gradient, double lossScale)
    {
        ForwardCache cache;
        const Translation pred = decoderForward(net, stack, cache);
        gradient = decoderBackward(net, cache, target, lossScale);
        return lossRms(pred, target);
    }

    void writeDecoder(const std::filesystem::path& path, const DecoderNet& net)
    {
        if (net.channels() < 1)
            throw ShapeError("cannot write an empty decoder");
        detail::LeWriter w;
        w.magic("KMCD");
        w.u16(1);
        w.u16(static_cast<std::uint32_t>(net.channels()));
        w.u16(static_cast<std::uint32_t>(net.gridRows()));
        w.u16(static_cast<std::uint32_t>(net.gridCols()));
        w.u16(static_cast<std::uint32_t>(net.layers().size()));
        for (const auto& l : net.layers())
        {
            w.u16(static_cast<std::uint32_t>(l.outputs));
            w.u16(static_cast<std::uint32_t>(l.inputs));
            w.u16(static_cast<std::uint32_t>(l.kernelH));
            w.u16(static_cast<std::uint32_t>(l.kernelW));
        }
        net.forEachBuffer([&](const std::vector<double>& b) {
            for (double v : b)
                w.f32(static_cast<float>(v));
        });
        w.save(path);
    }

    DecoderNet readDecoder(const std::filesystem::path& path)
    {
        detail::LeReader r(path, "decoder file " + path.string());
        r.expectMagic("KMCD");
        const auto version = r.u16();
        if (version != 1)
            throw FormatError("unsupported decoder version " + std::to_string(version));
        const int channels = r.u16();
        const int rows = r.u16();
        const int cols = r.u16();
        const int layerCount = r.u16();
        if (channels < 1 || rows < 4 || cols < 4)
            throw FormatError("decoder header has an invalid shape");

        DecoderNet net(channels, rows, cols);
        if (layerCount != static_cast<int>(net.layers().size()))
            throw FormatError("decoder file has " + std::to_string(layerCount) + " layers, expected 4");
        for (const auto& l : net.layers())
        {
            const int o = r.u16(), i = r.u16(), kh = r.u16(), kw = r.u16();
            if (o != l.outputs || i != l.inputs || kh != l.kernelH || kw != l.kernelW)
                throw FormatError("decoder layer shape does not match the architecture");
        }
        r.need(net.parameterCount() * sizeof(float));
        net.forEachBuffer([&](std::vector<double>& b) {
            for (double& v : b)
            {
                v = r.f32();
                if (!std::isfinite(v))
                    throw FormatError("decoder file contains a non-finite weight");
            }
        });
        if (r.remaining() != 0)
            throw FormatError("decoder file has trailing bytes");
        return net;
    }
}
