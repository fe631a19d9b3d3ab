#ifndef KMC_TRACKER_HPP_
#define KMC_TRACKER_HPP_

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kmc/adaptation.hpp"
#include "kmc/decoder.hpp"
#include "kmc/scale.hpp"

namespace kmc
{
    enum class FeatureKind
    {
        Gray,
        Hog,
        Kmcf
    };

    struct TrackerConfig
    {
        double padding = 2.2;
        int patchWidth = kPatchWidth;
        int patchHeight = kPatchHeight;
        double kernelSigma = 0.2;
        double eta = 0.0025;
        double etaMax = -1.0; // negative: 10 * eta
        double lambda = 1e-4;
        double labelBandwidth = 0.1;
        int scales = 11;
        double scaleFactor = 1.02;
        int stabilityWindow = 5;
        bool decoder = false;
        std::filesystem::path decoderWeights;
        bool adaptiveLr = true;
        FeatureKind features = FeatureKind::Gray;
        std::filesystem::path featureFile; // kmcf only
    };

    /// Applies one key=value setting; throws ConfigError for unknown keys or bad values.
    void setConfigValue(TrackerConfig& config, const std::string& key, const std::string& value);

    /// key=value lines; '#' starts a comment. Errors carry the line number.
    TrackerConfig parseTrackerConfig(std::istream& in);
    TrackerConfig loadTrackerConfig(const std::filesystem::path& path);

    // Every key, one per line, in a fixed order; parseTrackerConfig reads it back.
    std::string formatTrackerConfig(const TrackerConfig& config);

    std::string featureSpec(const TrackerConfig& config);

    struct TrackState
    {
        Point2 center;
        Size2 size;
        Size2 baseSize; // size at initialisation; size = baseSize * scale.currentScale
        std::vector<DualModel> models;
        std::vector<LayerStats> stats;
        std::vector<LabelMap> labels;
        ScaleState scale;
        int frameIndex = 1;

        BBox box() const noexcept { return BBox::fromCenter(center, size); }
    };

    enum class TrackStatus
    {
        Ok,
        Lost
    };

    struct Detection
    {
        std::vector<ResponseMap> responses;
        ResponseStack stack;
        Translation patchShift; // patch pixels, decoder or MaxRes
    };

    struct StepResult
    {
        BBox box;
        TrackStatus status = TrackStatus::Ok;
    };

    class Tracker
    {
    public:
        /// Loads decoder weights and opens the feature file as configured.
        explicit Tracker(TrackerConfig config);

        /// Uses `decoder` regardless of config.decoderWeights.
        Tracker(TrackerConfig config, DecoderNet decoder);

        ~Tracker();
        Tracker(Tracker&&) noexcept;
        Tracker& operator=(Tracker&&) noexcept;

        const TrackerConfig& config() const noexcept { return _config; }
        const std::optional<DecoderNet>& decoder() const noexcept { return _decoder; }

        TrackState init(const Image& frame, const BBox& box, int frameIndex = 1);

        /**
         * Tracks into the next frame. On a degenerate crop the state is left
         * untouched and the previous box is returned with status Lost.
         */
        StepResult step(TrackState& state, const Image& frame);

        // Responses of every layer on `frame`, searched around the current state.
        Detection detect(const TrackState& state, const Image& frame, int frameIndex);

        /**
         * Moves the state to `center` (and `size`, if given, instead of
         * estimating scale), then updates every layer model on `frame`.
         */
        void adapt(TrackState& state, const Image& frame, int frameIndex, Point2 center, const Detection& detection,
            std::optional<Size2> size = std::nullopt);

        /// Feature stack of the padded patch, windowed and energy-normalised.
        FeatureStack features(const Image& frame, int frameIndex, Point2 center, Size2 size);

        /// Frame-pixel displacement of a patch-pixel shift for a target of `size`.
        Point2 patchToFrame(Translation patchShift, Size2 size) const;

    private:
        struct FeatureFile;

        void validate();
        Translation decode(const ResponseStack& stack) const;
        void checkLayers(const FeatureStack& stack, const TrackState* state) const;

        TrackerConfig _config;
        std::optional<DecoderNet> _decoder;
        std::unique_ptr<FeatureFile> _file;
    };

    struct SequenceRun
    {
        std::vector<BBox> boxes; // one per frame, the first is the initial box
        int lostFrames = 0;
        double seconds = 0.0;
    };

    /// One-pass run: init on frame 0, step through the rest.
    SequenceRun runSequence(int frameCount, const std::function<Image(int)>& frameAt, const BBox& initBox,
        Tracker& tracker);

    SequenceRun runSequence(const std::vector<Image>& frames, const BBox& initBox, Tracker& tracker);
}

#endif
