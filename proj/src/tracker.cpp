#include "kmc/tracker.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace kmc
{
    namespace
    {
        std::string trim(const std::string& s)
        {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos)
                return {};
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        }

        double toDouble(const std::string& key, const std::string& v)
        {
            double out = 0.0;
            const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
            if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
                throw ConfigError(key + ": expected a number, got '" + v + "'");
            return out;
        }

        int toInt(const std::string& key, const std::string& v)
        {
            int out = 0;
            const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
            if (ec != std::errc() || ptr != v.data() + v.size())
                throw ConfigError(key + ": expected an integer, got '" + v + "'");
            return out;
        }

        bool toSwitch(const std::string& key, const std::string& v)
        {
            if (v == "on")
                return true;
            if (v == "off")
                return false;
            throw ConfigError(key + ": expected on or off, got '" + v + "'");
        }

        std::string formatDouble(double v)
        {
            char buf[64];
            const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
            return std::string(buf, ptr);
        }

        struct LayerSpec
        {
            int cellSize;
            bool hog;
        };

        std::vector<LayerSpec> inCoreLayers(FeatureKind kind)
        {
            if (kind == FeatureKind::Hog)
                return {{2, true}, {4, true}, {8, true}};
            return {{1, false}, {2, false}, {4, false}};
        }

        constexpr int kHogOrientations = 9;

        bool finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }
    }

    void setConfigValue(TrackerConfig& c, const std::string& key, const std::string& value)
    {
        if (key == "padding")
            c.padding = toDouble(key, value);
        else if (key == "patch_w")
            c.patchWidth = toInt(key, value);
        else if (key == "patch_h")
            c.patchHeight = toInt(key, value);
        else if (key == "kernel_sigma")
            c.kernelSigma = toDouble(key, value);
        else if (key == "eta")
            c.eta = toDouble(key, value);
        else if (key == "eta_max")
            c.etaMax = toDouble(key, value);
        else if (key == "lambda")
            c.lambda = toDouble(key, value);
        else if (key == "label_bandwidth")
            c.labelBandwidth = toDouble(key, value);
        else if (key == "scales")
            c.scales = toInt(key, value);
        else if (key == "scale_factor")
            c.scaleFactor = toDouble(key, value);
        else if (key == "stability_window")
            c.stabilityWindow = toInt(key, value);
        else if (key == "decoder")
            c.decoder = toSwitch(key, value);
        else if (key == "decoder_weights")
            c.decoderWeights = value;
        else if (key == "adaptive_lr")
            c.adaptiveLr = toSwitch(key, value);
        else if (key == "features")
        {
            if (value == "gray")
                c.features = FeatureKind::Gray;
            else if (value == "hog")
                c.features = FeatureKind::Hog;
            else if (value.starts_with("kmcf:") && value.size() > 5)
            {
                c.features = FeatureKind::Kmcf;
                c.featureFile = value.substr(5);
            }
            else
                throw ConfigError("features: expected gray, hog or kmcf:<path>, got '" + value + "'");
        }
        else
            throw ConfigError("unknown configuration key '" + key + "'");
    }

    TrackerConfig parseTrackerConfig(std::istream& in)
    {
        TrackerConfig c;
        std::string line;
        int number = 0;
        while (std::getline(in, line))
        {
            ++number;
            if (const auto hash = line.find('#'); hash != std::string::npos)
                line.erase(hash);
            line = trim(line);
            if (line.empty())
                continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ParseError("expected key=value", number);
            try
            {
                setConfigValue(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
            }
            catch (const ConfigError& e)
            {
                throw ParseError(e.what(), number);
            }
        }
        return c;
    }

    TrackerConfig loadTrackerConfig(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in)
            throw IoError("cannot open config " + path.string());
        return parseTrackerConfig(in);
    }

    std::string featureSpec(const TrackerConfig& c)
    {
        switch (c.features)
        {
        case FeatureKind::Gray:
            return "gray";
        case FeatureKind::Hog:
            return "hog";
        case FeatureKind::Kmcf:
            return "kmcf:" + c.featureFile.string();
        }
        return "gray";
    }

    std::string formatTrackerConfig(const TrackerConfig& c)
    {
        std::ostringstream out;
        out << "padding=" << formatDouble(c.padding) << '\n'
            << "patch_w=" << c.patchWidth << '\n'
            << "patch_h=" << c.patchHeight << '\n'
            << "kernel_sigma=" << formatDouble(c.kernelSigma) << '\n'
            << "eta=" << formatDouble(c.eta) << '\n'
            << "eta_max=" << formatDouble(c.etaMax) << '\n'
            << "lambda=" << formatDouble(c.lambda) << '\n'
            << "label_bandwidth=" << formatDouble(c.labelBandwidth) << '\n'
            << "scales=" << c.scales << '\n'
            << "scale_factor=" << formatDouble(c.scaleFactor) << '\n'
            << "stability_window=" << c.stabilityWindow << '\n'
            << "decoder=" << (c.decoder ? "on" : "off") << '\n';
        if (!c.decoderWeights.empty())
            out << "decoder_weights=" << c.decoderWeights.string() << '\n';
        out << "adaptive_lr=" << (c.adaptiveLr ? "on" : "off") << '\n'
            << "features=" << featureSpec(c) << '\n';
        return out.str();
    }

    struct Tracker::FeatureFile
    {
        explicit FeatureFile(const std::filesystem::path& path) : reader(path) {}
        FeatureFileReader reader;
    };

    Tracker::Tracker(TrackerConfig config) : _config(std::move(config))
    {
        if (_config.decoder)
        {
            if (_config.decoderWeights.empty())
                throw ConfigError("decoder=on needs decoder_weights");
            _decoder = readDecoder(_config.decoderWeights);
        }
        validate();
    }

    Tracker::Tracker(TrackerConfig config, DecoderNet decoder) : _config(std::move(config)), _decoder(std::move(decoder))
    {
        _config.decoder = true;
        validate();
    }

    Tracker::~Tracker() = default;
    Tracker::Tracker(Tracker&&) noexcept = default;
    Tracker& Tracker::operator=(Tracker&&) noexcept = default;

    void Tracker::validate()
    {
        const TrackerConfig& c = _config;
        if (!(c.padding > 0.0))
            throw ConfigError("padding must be positive");
        if (c.patchWidth < 8 || c.patchHeight < 8)
            throw ConfigError("patch must be at least 8x8");
        if (!(c.kernelSigma > 0.0))
            throw ConfigError("kernel_sigma must be positive");
        if (!(c.eta >= 0.0 && c.eta <= 1.0))
            throw InvalidRate("eta must lie in [0, 1]");
        if (!(c.lambda >= 0.0))
            throw ConfigError("lambda must be non-negative");
        if (!(c.labelBandwidth > 0.0))
            throw ConfigError("label_bandwidth must be positive");
        if (c.stabilityWindow < 1)
            throw ConfigError("stability_window must be at least 1");
        ScaleConfig sc;
        sc.count = c.scales;
        sc.step = c.scaleFactor;
        sc.learningRate = c.eta;
        makeScaleState(sc);
        LayerStats(c.eta, c.stabilityWindow, c.etaMax);

        if (c.features == FeatureKind::Kmcf)
        {
            if (c.featureFile.empty())
                throw ConfigError("features=kmcf needs a file path");
            _file = std::make_unique<FeatureFile>(c.featureFile);
        }
        if (_decoder)
        {
            const int layers = _file ? static_cast<int>(_file->reader.info().layers.size())
                                     : static_cast<int>(inCoreLayers(c.features).size());
            if (_decoder->channels() != layers)
                throw ConfigError("decoder expects " + std::to_string(_decoder->channels())
                    + " response maps but the feature stack has " + std::to_string(layers) + " layers");
            if (_decoder->gridRows() != kGridRows || _decoder->gridCols() != kGridCols)
                throw ConfigError("decoder grid must be " + std::to_string(kGridRows) + "x" + std::to_string(kGridCols));
        }
    }

    FeatureStack Tracker::features(const Image& frame, int frameIndex, Point2 center, Size2 size)
    {
        FeatureStack stack;
        stack.frameIndex = frameIndex;
        if (_file)
        {
            stack = _file->reader.read(frameIndex);
        }
        else
        {
            const Patch patch = cropPaddedPatch(frame, center, size, _config.padding,
                {_config.patchWidth, _config.patchHeight});
            int id = 1;
            for (const LayerSpec& l : inCoreLayers(_config.features))
                stack.layers.push_back(l.hog ? extractHogLite(patch, l.cellSize, kHogOrientations, id++)
                                             : extractGrayscale(patch, l.cellSize, id++));
        }
        for (FeatureMap& fm : stack.layers)
            fm = normalizeEnergy(applyCosineWindow(fm));
        return stack;
    }

    void Tracker::checkLayers(const FeatureStack& stack, const TrackState* state) const
    {
        validateStack(stack);
        if (state && stack.layers.size() != state->models.size())
            throw ShapeError("feature stack has " + std::to_string(stack.layers.size()) + " layers, the tracker has "
                + std::to_string(state->models.size()) + " models");
    }

    Point2 Tracker::patchToFrame(Translation patchShift, Size2 size) const
    {
        return {patchShift.dx * _config.padding * size.w / _config.patchWidth,
            patchShift.dy * _config.padding * size.h / _config.patchHeight};
    }

    Translation Tracker::decode(const ResponseStack& stack) const
    {
        const PixelSize patch{_config.patchWidth, _config.patchHeight};
        if (_decoder)
            return denormalizeTranslation(decoderForward(*_decoder, stack), patch);
        return maxresDecode(stack, patch);
    }

    TrackState Tracker::init(const Image& frame, const BBox& box, int frameIndex)
    {
        if (!(box.w > 0.0) || !(box.h > 0.0) || !std::isfinite(box.x) || !std::isfinite(box.y)
            || !std::isfinite(box.w) || !std::isfinite(box.h))
            throw InvalidTarget("initial box must have positive, finite size");
        if (frame.empty())
            throw InvalidTarget("empty frame");
        if (box.x + box.w <= 0.0 || box.y + box.h <= 0.0 || box.x >= frame.cols() || box.y >= frame.rows())
            throw InvalidTarget("initial box lies outside the frame");
        if (frameIndex < 1)
            throw IndexError("frame index must be at least 1");

        TrackState s;
        s.center = box.center();
        s.size = box.size();
        s.baseSize = s.size;
        s.frameIndex = frameIndex;

        const FeatureStack stack = features(frame, frameIndex, s.center, s.size);
        checkLayers(stack, nullptr);
        for (const FeatureMap& x : stack.layers)
        {
            const Size2 targetCells{_config.patchWidth / _config.padding / x.cellSize,
                _config.patchHeight / _config.padding / x.cellSize};
            s.labels.push_back(gaussianLabels(x.data.rows(), x.data.cols(), targetCells, _config.labelBandwidth));
            s.models.push_back(trainDualModel(x, s.labels.back(), _config.lambda, _config.kernelSigma));
            s.stats.emplace_back(_config.eta, _config.stabilityWindow, _config.etaMax);
        }

        ScaleConfig sc;
        sc.count = _config.scales;
        sc.step = _config.scaleFactor;
        sc.learningRate = _config.eta;
        s.scale = makeScaleState(sc);
        trainScaleModel(s.scale, buildScaleSamples(frame, s.center, s.baseSize, s.scale));
        return s;
    }

    Detection Tracker::detect(const TrackState& state, const Image& frame, int frameIndex)
    {
        const FeatureStack z = features(frame, frameIndex, state.center, state.size);
        checkLayers(z, &state);
        Detection d;
        for (std::size_t k = 0; k < z.layers.size(); ++k)
            d.responses.push_back(detectResponse(state.models[k], z.layers[k]));
        d.stack = stackResponses(d.responses);
        d.patchShift = decode(d.stack);
        return d;
    }

    void Tracker::adapt(TrackState& state, const Image& frame, int frameIndex, Point2 center,
        const Detection& detection, std::optional<Size2> size)
    {
        if (detection.responses.size() != state.models.size())
            throw ShapeError("detection does not match the tracker's layers");
        state.center = center;
        if (size)
        {
            state.size = *size;
            state.scale.currentScale = size->w / state.baseSize.w;
        }
        else
        {
            state.scale = estimateScale(buildScaleSamples(frame, center, state.baseSize, state.scale), state.scale);
            state.size = {state.baseSize.w * state.scale.currentScale, state.baseSize.h * state.scale.currentScale};
        }
        if (!(state.size.w >= 1.0) || !(state.size.h >= 1.0) || !std::isfinite(state.size.w)
            || !std::isfinite(state.size.h))
            throw InvalidTarget("target size collapsed");

        // losses refer to the responses that produced this frame's estimate
        std::vector<double> rates(state.models.size(), _config.eta);
        for (std::size_t k = 0; k < state.models.size(); ++k)
        {
            const ResponseMap& r = detection.responses[k];
            const GridIndex at = translationToCell(detection.patchShift, r.cellSize, r.data.rows(), r.data.cols());
            updateStability(state.stats[k], layerLoss(r, at));
            if (_config.adaptiveLr)
                rates[k] = state.stats[k].etaK;
        }

        const FeatureStack x = features(frame, frameIndex, state.center, state.size);
        checkLayers(x, &state);
        for (std::size_t k = 0; k < state.models.size(); ++k)
        {
            const DualModel fresh = trainDualModel(x.layers[k], state.labels[k], _config.lambda, _config.kernelSigma);
            state.models[k] = updateModel(state.models[k], fresh, rates[k]);
        }
        state.frameIndex = frameIndex;
    }

    StepResult Tracker::step(TrackState& state, const Image& frame)
    {
        const int frameIndex = state.frameIndex + 1;
        const Detection d = detect(state, frame, frameIndex);
        const Point2 move = patchToFrame(d.patchShift, state.size);
        const Point2 center{state.center.x + move.x, state.center.y + move.y};

        const BBox search = BBox::fromCenter(center, {_config.padding * state.size.w, _config.padding * state.size.h});
        const bool outside = search.x + search.w <= 0.0 || search.y + search.h <= 0.0 || search.x >= frame.cols()
            || search.y >= frame.rows();
        if (!finite(center) || outside)
        {
            ++state.frameIndex;
            return {state.box(), TrackStatus::Lost};
        }

        TrackState next = state;
        try
        {
            adapt(next, frame, frameIndex, center, d);
        }
        catch (const InvalidTarget&)
        {
            ++state.frameIndex;
            return {state.box(), TrackStatus::Lost};
        }
        state = std::move(next);
        return {state.box(), TrackStatus::Ok};
    }

    SequenceRun runSequence(int frameCount, const std::function<Image(int)>& frameAt, const BBox& initBox,
        Tracker& tracker)
    {
        if (frameCount < 1)
            throw EmptySequence("sequence has no frames");
        const auto t0 = std::chrono::steady_clock::now();
        SequenceRun run;
        run.boxes.reserve(frameCount);
        TrackState state = tracker.init(frameAt(0), initBox);
        run.boxes.push_back(initBox);
        for (int t = 1; t < frameCount; ++t)
        {
            const StepResult r = tracker.step(state, frameAt(t));
            if (r.status == TrackStatus::Lost)
                ++run.lostFrames;
            run.boxes.push_back(r.box);
        }
        run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return run;
    }

    SequenceRun runSequence(const std::vector<Image>& frames, const BBox& initBox, Tracker& tracker)
    {
        return runSequence(static_cast<int>(frames.size()), [&](int i) { return frames[i]; }, initBox, tracker);
    }
}
