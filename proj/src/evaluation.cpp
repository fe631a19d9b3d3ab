#include "kmc/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace kmc
{
    namespace
    {
        bool allDigits(const std::string& s)
        {
            return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
        }

        std::string fixed(double v, int decimals = 6)
        {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
            return buf;
        }

        std::string shortest(double v)
        {
            char buf[64];
            const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
            return std::string(buf, ptr);
        }

        void requireSameLength(const std::vector<BBox>& pred, const std::vector<BBox>& gt, const char* where)
        {
            if (pred.size() != gt.size())
                throw ShapeError(std::string(where) + ": " + std::to_string(pred.size()) + " predictions for "
                    + std::to_string(gt.size()) + " ground-truth boxes");
        }

        std::ofstream openOut(const std::filesystem::path& path)
        {
            std::ofstream out(path, std::ios::binary);
            if (!out)
                throw IoError("cannot write " + path.string());
            return out;
        }
    }

    std::vector<BBox> parseGroundTruth(std::istream& in)
    {
        std::vector<BBox> boxes;
        std::string line;
        int number = 0;
        while (std::getline(in, line))
        {
            ++number;
            std::replace_if(line.begin(), line.end(), [](char c) { return c == ',' || c == '\t' || c == '\r'; }, ' ');
            if (line.find_first_not_of(' ') == std::string::npos)
                continue;
            std::istringstream fields(line);
            std::string tok;
            double v[4];
            int n = 0;
            while (fields >> tok)
            {
                if (n == 4)
                    throw ParseError("more than four values", number);
                const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v[n]);
                if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v[n]))
                    throw ParseError("not a number: '" + tok + "'", number);
                ++n;
            }
            if (n != 4)
                throw ParseError("expected x,y,w,h", number);
            if (!(v[2] > 0.0) || !(v[3] > 0.0))
                throw ParseError("box must have positive area", number);
            boxes.push_back({v[0], v[1], v[2], v[3]});
        }
        return boxes;
    }

    std::vector<std::filesystem::path> listFrames(const std::filesystem::path& img)
    {
        namespace fs = std::filesystem;
        if (!fs::is_directory(img))
            throw LayoutError(img.string() + " is not a directory");
        std::vector<std::pair<long long, fs::path>> numbered;
        for (const auto& entry : fs::directory_iterator(img))
        {
            if (!entry.is_regular_file())
                continue;
            const std::string stem = entry.path().stem().string();
            if (allDigits(stem) && stem.size() < 18)
                numbered.emplace_back(std::stoll(stem), entry.path());
        }
        std::sort(numbered.begin(), numbered.end());
        for (std::size_t i = 1; i < numbered.size(); ++i)
            if (numbered[i].first == numbered[i - 1].first)
                throw LayoutError("duplicate frame number " + std::to_string(numbered[i].first) + " in " + img.string());
        std::vector<fs::path> frames;
        for (auto& [n, p] : numbered)
            frames.push_back(std::move(p));
        return frames;
    }

    Sequence loadSequence(const std::filesystem::path& dir)
    {
        Sequence seq;
        seq.dir = dir;
        seq.name = dir.filename().string();
        if (seq.name.empty())
            seq.name = dir.parent_path().filename().string();

        seq.frames = listFrames(dir / "img");

        std::ifstream gt(dir / "groundtruth_rect.txt");
        if (!gt)
            throw LayoutError(dir.string() + " has no groundtruth_rect.txt");
        seq.groundTruth = parseGroundTruth(gt);
        if (seq.frames.size() != seq.groundTruth.size())
            throw LayoutError(seq.name + ": " + std::to_string(seq.frames.size()) + " frames but "
                + std::to_string(seq.groundTruth.size()) + " ground-truth boxes");
        if (seq.frames.empty())
            throw LayoutError(seq.name + ": no frames");
        return seq;
    }

    std::vector<Sequence> loadDataset(const std::filesystem::path& root)
    {
        namespace fs = std::filesystem;
        if (!fs::is_directory(root))
            throw LayoutError(root.string() + " is not a directory");
        std::vector<fs::path> dirs;
        for (const auto& entry : fs::directory_iterator(root))
            if (entry.is_directory() && fs::exists(entry.path() / "groundtruth_rect.txt"))
                dirs.push_back(entry.path());
        std::sort(dirs.begin(), dirs.end());
        std::vector<Sequence> out;
        for (const auto& d : dirs)
            out.push_back(loadSequence(d));
        return out;
    }

    Image loadFrame(const std::filesystem::path& path)
    {
        const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
        if (m.empty())
            throw IoError("cannot read image " + path.string());
        double scale = 1.0;
        switch (m.depth())
        {
        case CV_8U:
            scale = 1.0 / 255.0;
            break;
        case CV_16U:
            scale = 1.0 / 65535.0;
            break;
        default:
            throw FormatError("unsupported pixel depth in " + path.string());
        }
        cv::Mat d;
        m.convertTo(d, CV_64F, scale);
        const int ch = d.channels();
        if (ch == 1)
        {
            Image img(1, d.rows, d.cols);
            for (int r = 0; r < d.rows; ++r)
                std::copy_n(d.ptr<double>(r), d.cols, &img(r, 0));
            return img;
        }
        if (ch != 3 && ch != 4)
            throw FormatError("unsupported channel count in " + path.string());
        Image img(3, d.rows, d.cols);
        for (int r = 0; r < d.rows; ++r)
        {
            const double* p = d.ptr<double>(r);
            for (int c = 0; c < d.cols; ++c)
                for (int k = 0; k < 3; ++k)
                    img(k, r, c) = p[c * ch + (2 - k)]; // BGR(A) -> RGB
        }
        return img;
    }

    void writeSequence(const std::filesystem::path& dir, const SyntheticSequence& seq)
    {
        namespace fs = std::filesystem;
        fs::create_directories(dir / "img");
        for (std::size_t t = 0; t < seq.frames.size(); ++t)
        {
            const Image gray = toGray(seq.frames[t]);
            cv::Mat m(gray.rows(), gray.cols(), CV_8UC1);
            for (int r = 0; r < gray.rows(); ++r)
                for (int c = 0; c < gray.cols(); ++c)
                    m.at<unsigned char>(r, c) = static_cast<unsigned char>(std::lround(std::clamp(gray(r, c), 0.0, 1.0) * 255.0));
            char name[32];
            std::snprintf(name, sizeof name, "%04zu.png", t + 1);
            if (!cv::imwrite((dir / "img" / name).string(), m))
                throw IoError("cannot write frame " + (dir / "img" / name).string());
        }
        std::ofstream gt = openOut(dir / "groundtruth_rect.txt");
        for (const BBox& b : seq.groundTruth)
            gt << shortest(b.x) << ',' << shortest(b.y) << ',' << shortest(b.w) << ',' << shortest(b.h) << '\n';
    }

    double centerDistance(const BBox& a, const BBox& b)
    {
        const Point2 ca = a.center();
        const Point2 cb = b.center();
        return std::hypot(ca.x - cb.x, ca.y - cb.y);
    }

    double iou(const BBox& a, const BBox& b)
    {
        const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
        const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
        const double inter = ix * iy;
        const double uni = a.w * a.h + b.w * b.h - inter;
        if (!(uni > 0.0))
            return 0.0;
        return std::clamp(inter / uni, 0.0, 1.0);
    }

    double successThreshold(int i)
    {
        return i / 50.0;
    }

    MetricCurves precisionCurve(const std::vector<BBox>& pred, const std::vector<BBox>& gt)
    {
        requireSameLength(pred, gt, "precisionCurve");
        if (gt.empty())
            throw EmptySequence("precisionCurve of an empty sequence");
        std::vector<double> dist(gt.size());
        for (std::size_t i = 0; i < gt.size(); ++i)
        {
            dist[i] = centerDistance(pred[i], gt[i]);
            if (!std::isfinite(dist[i]))
                dist[i] = std::numeric_limits<double>::infinity();
        }
        MetricCurves m;
        m.precision.resize(kPrecisionThresholds);
        for (int t = 0; t < kPrecisionThresholds; ++t)
        {
            const auto hits = std::count_if(dist.begin(), dist.end(), [t](double d) { return d <= t; });
            m.precision[t] = static_cast<double>(hits) / static_cast<double>(dist.size());
        }
        m.p20 = m.precision[20];
        return m;
    }

    MetricCurves successCurve(const std::vector<BBox>& pred, const std::vector<BBox>& gt)
    {
        requireSameLength(pred, gt, "successCurve");
        if (gt.empty())
            throw EmptySequence("successCurve of an empty sequence");
        std::vector<double> overlap(gt.size());
        for (std::size_t i = 0; i < gt.size(); ++i)
            overlap[i] = iou(pred[i], gt[i]);
        MetricCurves m;
        m.success.resize(kSuccessThresholds);
        double sum = 0.0;
        for (int t = 0; t < kSuccessThresholds; ++t)
        {
            const double tau = successThreshold(t);
            const auto hits = std::count_if(overlap.begin(), overlap.end(), [tau](double o) { return o > tau; });
            m.success[t] = static_cast<double>(hits) / static_cast<double>(overlap.size());
            sum += m.success[t];
        }
        m.auc = sum / kSuccessThresholds;
        return m;
    }

    MetricCurves computeMetrics(const std::vector<BBox>& pred, const std::vector<BBox>& gt)
    {
        MetricCurves m = precisionCurve(pred, gt);
        const MetricCurves s = successCurve(pred, gt);
        m.success = s.success;
        m.auc = s.auc;
        return m;
    }

    MetricCurves averageCurves(const std::vector<const MetricCurves*>& curves)
    {
        MetricCurves m;
        m.precision.assign(kPrecisionThresholds, 0.0);
        m.success.assign(kSuccessThresholds, 0.0);
        if (curves.empty())
            return m;
        const double n = static_cast<double>(curves.size());
        for (const MetricCurves* c : curves)
        {
            for (int t = 0; t < kPrecisionThresholds; ++t)
                m.precision[t] += c->precision[t];
            for (int t = 0; t < kSuccessThresholds; ++t)
                m.success[t] += c->success[t];
            m.p20 += c->p20;
            m.auc += c->auc;
        }
        for (double& v : m.precision)
            v /= n;
        for (double& v : m.success)
            v /= n;
        m.p20 /= n;
        m.auc /= n;
        return m;
    }

    OpeResult runOpe(const std::vector<Sequence>& sequences, const TrackerConfig& config, int jobs,
        const DecoderNet* decoder)
    {
        if (sequences.empty())
            throw EmptyDataset("no sequences to evaluate");
        OpeResult result;
        result.sequences.resize(sequences.size());

        auto evaluate = [&](std::size_t i) {
            const Sequence& seq = sequences[i];
            SequenceResult& r = result.sequences[i];
            r.name = seq.name;
            r.frames = seq.size();
            try
            {
                TrackerConfig c = config;
                if (c.features == FeatureKind::Kmcf && c.featureFile.is_relative())
                    c.featureFile = seq.dir / c.featureFile;
                Tracker tracker = decoder ? Tracker(c, *decoder) : Tracker(c);
                const SequenceRun run = runSequence(
                    seq.size(), [&](int t) { return loadFrame(seq.frames[t]); }, seq.groundTruth.front(), tracker);
                r.boxes = run.boxes;
                r.lostFrames = run.lostFrames;
                r.seconds = run.seconds;
                r.curves = computeMetrics(run.boxes, seq.groundTruth);
                r.ok = true;
            }
            catch (const std::exception& e)
            {
                r.ok = false;
                r.error = e.what();
            }
        };

        const int workers = std::clamp(jobs, 1, static_cast<int>(sequences.size()));
        if (workers == 1)
        {
            for (std::size_t i = 0; i < sequences.size(); ++i)
                evaluate(i);
        }
        else
        {
            std::atomic<std::size_t> next{0};
            std::vector<std::thread> pool;
            for (int w = 0; w < workers; ++w)
                pool.emplace_back([&] {
                    for (std::size_t i = next++; i < sequences.size(); i = next++)
                        evaluate(i);
                });
            for (auto& t : pool)
                t.join();
        }

        // summed in name order so the aggregate does not depend on input order
        std::vector<const SequenceResult*> ok;
        for (const auto& r : result.sequences)
            if (r.ok)
                ok.push_back(&r);
        std::sort(ok.begin(), ok.end(), [](const SequenceResult* a, const SequenceResult* b) { return a->name < b->name; });
        std::vector<const MetricCurves*> curves;
        for (const auto* r : ok)
            curves.push_back(&r->curves);
        result.aggregate = averageCurves(curves);
        result.succeeded = static_cast<int>(ok.size());
        return result;
    }

    void writeBoxesCsv(const std::filesystem::path& path, const std::vector<BBox>& boxes)
    {
        std::ofstream out = openOut(path);
        out << "frame,x,y,w,h\n";
        for (std::size_t i = 0; i < boxes.size(); ++i)
            out << i + 1 << ',' << fixed(boxes[i].x, 4) << ',' << fixed(boxes[i].y, 4) << ',' << fixed(boxes[i].w, 4)
                << ',' << fixed(boxes[i].h, 4) << '\n';
    }

    void writeOpeCsv(const std::filesystem::path& outDir, const OpeResult& result)
    {
        namespace fs = std::filesystem;
        fs::create_directories(outDir / "boxes");

        std::ofstream res = openOut(outDir / "results.csv");
        res << "name,status,frames,lost,p20,auc\n";
        int frames = 0;
        for (const auto& r : result.sequences)
        {
            if (r.ok)
            {
                res << r.name << ",ok," << r.frames << ',' << r.lostFrames << ',' << fixed(r.curves.p20) << ','
                    << fixed(r.curves.auc) << '\n';
                frames += r.frames;
            }
            else
            {
                res << r.name << ",failed," << r.frames << ",,,\n";
            }
        }
        res << "aggregate," << result.succeeded << '/' << result.sequences.size() << ',' << frames << ",,"
            << fixed(result.aggregate.p20) << ',' << fixed(result.aggregate.auc) << '\n';

        auto curveFile = [&](const fs::path& path, int count, auto threshold, auto values) {
            std::ofstream out = openOut(path);
            out << "threshold,aggregate";
            for (const auto& r : result.sequences)
                if (r.ok)
                    out << ',' << r.name;
            out << '\n';
            for (int t = 0; t < count; ++t)
            {
                out << threshold(t) << ',' << fixed(values(result.aggregate)[t]);
                for (const auto& r : result.sequences)
                    if (r.ok)
                        out << ',' << fixed(values(r.curves)[t]);
                out << '\n';
            }
        };
        curveFile(outDir / "precision.csv", kPrecisionThresholds, [](int t) { return std::to_string(t); },
            [](const MetricCurves& m) -> const std::vector<double>& { return m.precision; });
        curveFile(outDir / "success.csv", kSuccessThresholds, [](int t) { return fixed(successThreshold(t), 2); },
            [](const MetricCurves& m) -> const std::vector<double>& { return m.success; });

        for (const auto& r : result.sequences)
            if (r.ok)
                writeBoxesCsv(outDir / "boxes" / (r.name + ".csv"), r.boxes);

        std::ofstream timing = openOut(outDir / "timing.csv");
        timing << "name,frames,seconds,fps\n";
        for (const auto& r : result.sequences)
            if (r.ok)
                timing << r.name << ',' << r.frames << ',' << fixed(r.seconds, 3) << ','
                       << fixed(r.seconds > 0.0 ? r.frames / r.seconds : 0.0, 2) << '\n';

        std::ofstream errors = openOut(outDir / "failures.csv");
        errors << "name,error\n";
        for (const auto& r : result.sequences)
            if (!r.ok)
            {
                std::string msg = r.error;
                std::replace(msg.begin(), msg.end(), '"', '\'');
                std::replace(msg.begin(), msg.end(), '\n', ' ');
                errors << r.name << ",\"" << msg << "\"\n";
            }
    }

    std::vector<TrainingSample> recordSamples(const std::vector<Image>& frames, const std::vector<BBox>& gt,
        Tracker& tracker)
    {
        if (frames.size() != gt.size())
            throw ShapeError("recordSamples: frame and ground-truth counts differ");
        if (frames.empty())
            throw EmptySequence("recordSamples of an empty sequence");
        const TrackerConfig& c = tracker.config();
        const PixelSize patch{c.patchWidth, c.patchHeight};

        std::vector<TrainingSample> out;
        TrackState s = tracker.init(frames[0], gt[0]);
        for (std::size_t t = 1; t < frames.size(); ++t)
        {
            const int frameIndex = static_cast<int>(t) + 1;
            Detection d = tracker.detect(s, frames[t], frameIndex);
            const Point2 to = gt[t].center();
            const Translation px{(to.x - s.center.x) * c.patchWidth / (c.padding * s.size.w),
                (to.y - s.center.y) * c.patchHeight / (c.padding * s.size.h)};
            const Translation n = normalizeTranslation(px, patch);
            if (std::abs(n.dx) <= 0.5 && std::abs(n.dy) <= 0.5)
                out.push_back({d.stack, n});
            d.patchShift = px;
            tracker.adapt(s, frames[t], frameIndex, to, d, gt[t].size());
        }
        return out;
    }

    std::vector<TrainingSample> recordSamples(const Sequence& seq, Tracker& tracker)
    {
        std::vector<Image> frames;
        frames.reserve(seq.frames.size());
        for (const auto& p : seq.frames)
            frames.push_back(loadFrame(p));
        return recordSamples(frames, seq.groundTruth, tracker);
    }
}
