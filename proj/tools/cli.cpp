#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "kmc/decoder_training.hpp"
#include "kmc/evaluation.hpp"
#include "kmc/synthetic.hpp"
#include "kmc/tracker.hpp"

namespace kmc::cli
{
    namespace
    {
        namespace fs = std::filesystem;
        using Json = nlohmann::ordered_json;

        class UsageError : public std::runtime_error
        {
        public:
            using std::runtime_error::runtime_error;
        };

        struct Options
        {
            std::string out;
            std::string config;
            std::string features;
            std::string decoder;
            std::string weights;
            std::string adaptiveLr;
            std::string initBox;
            std::string seq;
            std::string dataset;
            std::string samples;
            std::uint64_t seed = 1;
            int jobs = 1;
            int synthetic = 0;
            int epochs = 30;
            int channels = 3;
            int frames = 50;
            double zoom = 1.0;
        };

        const char* errorName(const std::exception& e)
        {
            if (dynamic_cast<const ParseError*>(&e))
                return "ParseError";
            if (dynamic_cast<const FormatError*>(&e))
                return "FormatError";
            if (dynamic_cast<const IoError*>(&e))
                return "IoError";
            if (dynamic_cast<const LayoutError*>(&e))
                return "LayoutError";
            if (dynamic_cast<const ConfigError*>(&e))
                return "ConfigError";
            if (dynamic_cast<const EmptyDataset*>(&e))
                return "EmptyDataset";
            if (dynamic_cast<const EmptySequence*>(&e))
                return "EmptySequence";
            if (dynamic_cast<const InvalidTarget*>(&e))
                return "InvalidTarget";
            if (dynamic_cast<const IndexError*>(&e))
                return "IndexError";
            if (dynamic_cast<const ShapeError*>(&e))
                return "ShapeError";
            if (dynamic_cast<const InvalidRate*>(&e))
                return "InvalidRate";
            if (dynamic_cast<const NumericError*>(&e))
                return "NumericError";
            if (dynamic_cast<const Error*>(&e))
                return "Error";
            return "error";
        }

        std::string utcNow()
        {
            const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
            std::tm tm{};
            gmtime_r(&now, &tm);
            char buf[32];
            std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
            return buf;
        }

        std::string fixed(double v)
        {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.6f", v);
            return buf;
        }

        TrackerConfig trackerConfig(const Options& o)
        {
            TrackerConfig c = o.config.empty() ? TrackerConfig{} : loadTrackerConfig(o.config);
            try
            {
                if (!o.features.empty())
                    setConfigValue(c, "features", o.features);
                if (!o.weights.empty())
                    setConfigValue(c, "decoder_weights", o.weights);
                if (!o.decoder.empty())
                    setConfigValue(c, "decoder", o.decoder);
                if (!o.adaptiveLr.empty())
                    setConfigValue(c, "adaptive_lr", o.adaptiveLr);
            }
            catch (const ConfigError& e)
            {
                throw UsageError(e.what());
            }
            return c;
        }

        Json configJson(const TrackerConfig& c)
        {
            Json j = Json::object();
            std::istringstream lines(formatTrackerConfig(c));
            std::string line;
            while (std::getline(lines, line))
            {
                const auto eq = line.find('=');
                j[line.substr(0, eq)] = line.substr(eq + 1);
            }
            return j;
        }

        void writeManifest(const Options& o, const std::string& command, const std::vector<std::string>& args,
            Json inputs, const TrackerConfig* config)
        {
            Json m;
            m["tool"] = "kmc";
            m["command"] = command;
            m["arguments"] = args;
            m["seed"] = o.seed;
            m["out"] = o.out;
            m["inputs"] = std::move(inputs);
            if (config)
                m["config"] = configJson(*config);
            m["started_utc"] = utcNow();
            std::ofstream f(fs::path(o.out) / "manifest.json");
            if (!f)
                throw IoError("cannot write manifest in " + o.out);
            f << m.dump(2) << '\n';
        }

        BBox parseBox(const std::string& text)
        {
            std::istringstream in(text);
            std::vector<BBox> boxes;
            try
            {
                boxes = parseGroundTruth(in);
            }
            catch (const ParseError& e)
            {
                throw UsageError(std::string("--init-box: ") + e.what());
            }
            if (boxes.size() != 1)
                throw UsageError("--init-box expects x,y,w,h");
            return boxes.front();
        }

        TrackerConfig forSequence(TrackerConfig c, const fs::path& dir)
        {
            if (c.features == FeatureKind::Kmcf && c.featureFile.is_relative())
                c.featureFile = dir / c.featureFile;
            return c;
        }

        void writeSyntheticDataset(const fs::path& root, int count, std::uint64_t seed, int frames, double zoom)
        {
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> vx(-2.0, 2.0), vy(-1.5, 1.5);
            for (int i = 0; i < count; ++i)
            {
                SyntheticSceneConfig c;
                c.frames = frames;
                c.zoom = zoom;
                c.vx = vx(rng);
                c.vy = vy(rng);
                c.seed = rng();
                char name[32];
                std::snprintf(name, sizeof name, "synth_%03d", i + 1);
                writeSequence(root / name, renderSyntheticSequence(c));
            }
        }

        int cmdTrack(const Options& o, const std::vector<std::string>& args, std::ostream& out)
        {
            const fs::path dir = o.seq;
            const bool hasGt = fs::exists(dir / "groundtruth_rect.txt");
            if (!hasGt && o.initBox.empty())
                throw UsageError(dir.string() + " has no groundtruth_rect.txt; pass --init-box x,y,w,h");

            std::vector<fs::path> frames;
            std::vector<BBox> gt;
            BBox init;
            if (hasGt)
            {
                const Sequence s = loadSequence(dir);
                frames = s.frames;
                gt = s.groundTruth;
                init = gt.front();
            }
            else
            {
                frames = listFrames(dir / "img");
            }
            if (!o.initBox.empty())
                init = parseBox(o.initBox);
            if (frames.empty())
                throw EmptySequence(dir.string() + " has no frames");

            const TrackerConfig config = trackerConfig(o);
            fs::create_directories(o.out);
            writeManifest(o, "track", args, {{"sequence", o.seq}, {"init_box", {init.x, init.y, init.w, init.h}}},
                &config);

            Tracker tracker(config);
            const SequenceRun run = runSequence(
                static_cast<int>(frames.size()), [&](int t) { return loadFrame(frames[t]); }, init, tracker);
            writeBoxesCsv(fs::path(o.out) / "boxes.csv", run.boxes);

            out << "frames " << run.boxes.size() << " lost " << run.lostFrames << '\n';
            if (hasGt)
            {
                const MetricCurves m = computeMetrics(run.boxes, gt);
                out << "p20 " << fixed(m.p20) << " auc " << fixed(m.auc) << '\n';
            }
            return run.lostFrames > 0 ? ExitLost : ExitOk;
        }

        int cmdEval(const Options& o, const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
        {
            if (o.dataset.empty() == (o.synthetic <= 0))
                throw UsageError("eval needs exactly one of --dataset or --synthetic");
            const TrackerConfig config = trackerConfig(o);
            fs::create_directories(o.out);
            const fs::path root = o.dataset.empty() ? fs::path(o.out) / "dataset" : fs::path(o.dataset);
            writeManifest(o, "eval", args,
                {{"dataset", root.string()}, {"synthetic", o.synthetic}, {"frames", o.frames}, {"zoom", o.zoom},
                    {"jobs", o.jobs}},
                &config);
            if (o.synthetic > 0)
                writeSyntheticDataset(root, o.synthetic, o.seed, o.frames, o.zoom);

            const OpeResult result = runOpe(loadDataset(root), config, o.jobs);
            writeOpeCsv(o.out, result);
            for (const auto& s : result.sequences)
                if (!s.ok)
                    err << "failed " << s.name << ": " << s.error << '\n';
            out << "sequences " << result.succeeded << '/' << result.sequences.size() << " p20 "
                << fixed(result.aggregate.p20) << " auc " << fixed(result.aggregate.auc) << '\n';
            return result.succeeded > 0 ? ExitOk : ExitError;
        }

        int cmdSynth(const Options& o, const std::vector<std::string>& args, std::ostream& out)
        {
            if (o.synthetic <= 0)
                throw UsageError("synth needs --synthetic N with N > 0");
            fs::create_directories(o.out);
            writeManifest(o, "synth", args, {{"synthetic", o.synthetic}, {"frames", o.frames}, {"zoom", o.zoom}},
                nullptr);
            writeSyntheticDataset(o.out, o.synthetic, o.seed, o.frames, o.zoom);
            out << "sequences " << o.synthetic << " frames " << o.frames << '\n';
            return ExitOk;
        }

        int cmdTrainDecoder(const Options& o, const std::vector<std::string>& args, std::ostream& out)
        {
            if (o.samples.empty() == (o.synthetic <= 0))
                throw UsageError("train-decoder needs exactly one of --samples or --synthetic");
            if (o.epochs < 1)
                throw UsageError("--epochs must be positive");
            fs::create_directories(o.out);
            writeManifest(o, "train-decoder", args,
                {{"samples", o.samples}, {"synthetic", o.synthetic}, {"channels", o.channels}, {"epochs", o.epochs}},
                nullptr);

            const std::vector<TrainingSample> samples = o.samples.empty()
                ? generateSyntheticSamples(o.synthetic, benchmarkSynthetic(o.channels), o.seed)
                : readSamples(o.samples);
            if (samples.size() < 2)
                throw EmptyDataset("need at least two samples to train, got " + std::to_string(samples.size()));

            std::vector<std::size_t> order(samples.size());
            std::iota(order.begin(), order.end(), 0);
            std::mt19937_64 rng(o.seed);
            std::shuffle(order.begin(), order.end(), rng);
            const std::size_t holdout = std::max<std::size_t>(1, samples.size() / 5);
            std::vector<TrainingSample> train, validation;
            for (std::size_t i = 0; i < order.size(); ++i)
                (i < order.size() - holdout ? train : validation).push_back(samples[order[i]]);

            TrainConfig tc;
            tc.seed = o.seed;
            tc.maxEpochs = o.epochs;
            const TrainResult r = trainDecoder(train, validation, tc);
            writeDecoder(fs::path(o.out) / "decoder.kmcd", r.net);

            std::ofstream curve(fs::path(o.out) / "training.csv");
            curve << "epoch,train_rms,validation_rms\n";
            for (std::size_t e = 0; e < r.trainRms.size(); ++e)
                curve << e + 1 << ',' << fixed(r.trainRms[e]) << ',' << fixed(r.validationRms[e]) << '\n';

            double maxres = 0.0;
            for (const TrainingSample& s : validation)
                maxres += lossRms(normalizeTranslation(maxresDecode(s.stack)), s.target);
            maxres /= static_cast<double>(validation.size());

            out << "epochs " << r.epochs << " best_epoch " << r.bestEpoch << '\n'
                << "train_rms " << fixed(meanLossRms(r.net, train)) << '\n'
                << "validation_rms " << fixed(meanLossRms(r.net, validation)) << '\n'
                << "maxres_validation_rms " << fixed(maxres) << '\n';
            return ExitOk;
        }

        int cmdRecordSamples(const Options& o, const std::vector<std::string>& args, std::ostream& out)
        {
            if (o.seq.empty() == o.dataset.empty())
                throw UsageError("record-samples needs exactly one of --seq or --dataset");
            TrackerConfig config = trackerConfig(o);
            config.decoder = false;
            fs::create_directories(o.out);
            writeManifest(o, "record-samples", args, {{"sequence", o.seq}, {"dataset", o.dataset}}, &config);

            const std::vector<Sequence> sequences =
                o.seq.empty() ? loadDataset(o.dataset) : std::vector<Sequence>{loadSequence(o.seq)};
            if (sequences.empty())
                throw EmptyDataset("no sequences under " + o.dataset);
            std::vector<TrainingSample> all;
            for (const Sequence& s : sequences)
            {
                Tracker tracker(forSequence(config, s.dir));
                auto recorded = recordSamples(s, tracker);
                all.insert(all.end(), std::make_move_iterator(recorded.begin()), std::make_move_iterator(recorded.end()));
            }
            writeSamples(fs::path(o.out) / "samples.kmcs", all);
            out << "sequences " << sequences.size() << " samples " << all.size() << '\n';
            return ExitOk;
        }

        void trackerFlags(CLI::App* sub, Options& o)
        {
            sub->add_option("--config", o.config, "tracker configuration file (key=value lines)");
            sub->add_option("--features", o.features, "gray, hog or kmcf:PATH");
            sub->add_option("--decoder", o.decoder, "use the trained decoder instead of MaxRes")
                ->check(CLI::IsMember({"on", "off"}));
            sub->add_option("--weights", o.weights, "decoder weight file (KMCD)");
            sub->add_option("--adaptive-lr", o.adaptiveLr, "per-layer adaptive learning rate")
                ->check(CLI::IsMember({"on", "off"}));
        }
    }

    int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
    {
        CLI::App app{"Kernelized multi-resolution correlation tracker", "kmc"};
        app.require_subcommand(1);
        Options o;

        auto common = [&](CLI::App* sub) {
            sub->add_option("--out", o.out, "output directory")->required();
            sub->add_option("--seed", o.seed, "random seed");
        };

        CLI::App* track = app.add_subcommand("track", "track one sequence and write boxes.csv");
        common(track);
        trackerFlags(track, o);
        track->add_option("--seq", o.seq, "sequence directory (img/ and optional groundtruth_rect.txt)")->required();
        track->add_option("--init-box", o.initBox, "initial box x,y,w,h");

        CLI::App* eval = app.add_subcommand("eval", "one-pass evaluation over a dataset");
        common(eval);
        trackerFlags(eval, o);
        eval->add_option("--dataset", o.dataset, "dataset root, one subdirectory per sequence");
        eval->add_option("--synthetic", o.synthetic, "evaluate N generated sequences instead");
        eval->add_option("--frames", o.frames, "frames per generated sequence")->check(CLI::PositiveNumber);
        eval->add_option("--zoom", o.zoom, "per-frame zoom of generated sequences")->check(CLI::PositiveNumber);
        eval->add_option("--jobs", o.jobs, "sequences evaluated in parallel")->check(CLI::PositiveNumber);

        CLI::App* synth = app.add_subcommand("synth", "write a synthetic dataset");
        common(synth);
        synth->add_option("--synthetic", o.synthetic, "number of sequences")->required();
        synth->add_option("--frames", o.frames, "frames per sequence")->check(CLI::PositiveNumber);
        synth->add_option("--zoom", o.zoom, "per-frame zoom")->check(CLI::PositiveNumber);

        CLI::App* train = app.add_subcommand("train-decoder", "train the response decoder");
        common(train);
        train->add_option("--samples", o.samples, "KMCS sample file");
        train->add_option("--synthetic", o.synthetic, "generate N synthetic samples instead");
        train->add_option("--channels", o.channels, "layers per synthetic sample")->check(CLI::PositiveNumber);
        train->add_option("--epochs", o.epochs, "maximum epochs");

        CLI::App* record = app.add_subcommand("record-samples", "record response stacks along the ground truth");
        common(record);
        trackerFlags(record, o);
        record->add_option("--seq", o.seq, "single sequence directory");
        record->add_option("--dataset", o.dataset, "dataset root");

        std::vector<const char*> argv{"kmc"};
        for (const auto& a : args)
            argv.push_back(a.c_str());
        try
        {
            app.parse(static_cast<int>(argv.size()), argv.data());
        }
        catch (const CLI::CallForHelp& e)
        {
            app.exit(e, out, err);
            return ExitOk;
        }
        catch (const CLI::ParseError& e)
        {
            app.exit(e, out, err);
            return ExitUsage;
        }

        try
        {
            if (track->parsed())
                return cmdTrack(o, args, out);
            if (eval->parsed())
                return cmdEval(o, args, out, err);
            if (synth->parsed())
                return cmdSynth(o, args, out);
            if (train->parsed())
                return cmdTrainDecoder(o, args, out);
            return cmdRecordSamples(o, args, out);
        }
        catch (const UsageError& e)
        {
            err << "usage: " << e.what() << '\n';
            return ExitUsage;
        }
        catch (const std::exception& e)
        {
            err << "error: " << errorName(e) << ": " << e.what() << '\n';
            return ExitError;
        }
    }
}
