#ifndef KMC_EVALUATION_HPP_
#define KMC_EVALUATION_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "kmc/decoder_training.hpp"
#include "kmc/synthetic.hpp"
#include "kmc/tracker.hpp"

namespace kmc
{
    struct Sequence
    {
        std::string name;
        std::filesystem::path dir;
        std::vector<std::filesystem::path> frames; // ascending frame number
        std::vector<BBox> groundTruth;

        int size() const noexcept { return static_cast<int>(frames.size()); }
    };

    /// Files of `img` whose stem is a frame number, in ascending numeric order.
    std::vector<std::filesystem::path> listFrames(const std::filesystem::path& img);

    /**
     * OTB layout: dir/img/ holds numbered frames, dir/groundtruth_rect.txt one
     * "x,y,w,h" line per frame (commas, tabs or spaces).
     */
    Sequence loadSequence(const std::filesystem::path& dir);

    /// Every subdirectory of `root` holding a groundtruth_rect.txt, sorted by name.
    std::vector<Sequence> loadDataset(const std::filesystem::path& root);

    std::vector<BBox> parseGroundTruth(std::istream& in);

    // Frame as a planar image in [0, 1]; gray stays one channel, colour becomes RGB.
    Image loadFrame(const std::filesystem::path& path);

    /// Writes img/0001.png ... and groundtruth_rect.txt under `dir`.
    void writeSequence(const std::filesystem::path& dir, const SyntheticSequence& seq);

    double centerDistance(const BBox& a, const BBox& b);
    double iou(const BBox& a, const BBox& b);

    constexpr int kPrecisionThresholds = 51; // 0..50 px
    constexpr int kSuccessThresholds = 51;   // 0, 0.02, ..., 1

    double successThreshold(int i);

    struct MetricCurves
    {
        std::vector<double> precision;
        std::vector<double> success;
        double p20 = 0.0;
        double auc = 0.0;
    };

    MetricCurves precisionCurve(const std::vector<BBox>& pred, const std::vector<BBox>& gt);
    MetricCurves successCurve(const std::vector<BBox>& pred, const std::vector<BBox>& gt);
    MetricCurves computeMetrics(const std::vector<BBox>& pred, const std::vector<BBox>& gt);

    /// Unweighted mean, summed in the given order.
    MetricCurves averageCurves(const std::vector<const MetricCurves*>& curves);

    struct SequenceResult
    {
        std::string name;
        bool ok = false;
        std::string error;
        int frames = 0;
        int lostFrames = 0;
        double seconds = 0.0;
        std::vector<BBox> boxes;
        MetricCurves curves;
    };

    struct OpeResult
    {
        std::vector<SequenceResult> sequences; // input order
        MetricCurves aggregate;                // over successful sequences
        int succeeded = 0;
    };

    /**
     * One-pass evaluation of every sequence from its first ground-truth box,
     * on up to `jobs` threads. A sequence that throws is marked failed and
     * left out of the aggregate. A relative kmcf feature path is resolved
     * inside each sequence directory.
     */
    OpeResult runOpe(const std::vector<Sequence>& sequences, const TrackerConfig& config, int jobs = 1,
        const DecoderNet* decoder = nullptr);

    /**
     * results.csv (name,status,frames,lost,p20,auc plus an aggregate row),
     * precision.csv and success.csv (threshold, aggregate, one column per
     * sequence) and boxes/<name>.csv. Wall-clock figures go to timing.csv
     * alone, so every other file is reproducible byte for byte.
     */
    void writeOpeCsv(const std::filesystem::path& outDir, const OpeResult& result);

    void writeBoxesCsv(const std::filesystem::path& path, const std::vector<BBox>& boxes);

    /**
     * Tracks along the ground truth: every frame is searched around the true
     * previous box and the models are then updated at the true box. Each
     * response stack is paired with the true normalised shift; shifts outside
     * [-0.5, 0.5] are skipped.
     */
    std::vector<TrainingSample> recordSamples(const Sequence& seq, Tracker& tracker);
    std::vector<TrainingSample> recordSamples(const std::vector<Image>& frames, const std::vector<BBox>& gt,
        Tracker& tracker);
}

#endif
