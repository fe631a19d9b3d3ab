#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cli.hpp"
#include "kmc/decoder_training.hpp"

using namespace kmc;
namespace fs = std::filesystem;

namespace
{
    struct Outcome
    {
        int code;
        std::string out;
        std::string err;
    };

    Outcome kmcRun(const std::vector<std::string>& args)
    {
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        return {code, out.str(), err.str()};
    }

    fs::path freshDir(const std::string& name)
    {
        const fs::path p = fs::temp_directory_path() / ("kmc_test_cli_" + name);
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }

    std::string slurp(const fs::path& p)
    {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }

    int lineCount(const fs::path& p)
    {
        std::ifstream in(p);
        std::string line;
        int n = 0;
        while (std::getline(in, line))
            ++n;
        return n;
    }

    fs::path syntheticDataset(const std::string& name, int sequences, int frames)
    {
        const fs::path root = freshDir(name);
        const Outcome r = kmcRun({"synth", "--out", (root / "ds").string(), "--synthetic", std::to_string(sequences),
            "--frames", std::to_string(frames), "--seed", "5"});
        EXPECT_EQ(r.code, 0) << r.err;
        return root;
    }
}

TEST(CliTrack, WritesOneRowPerFrameAndManifest)
{
    const fs::path root = syntheticDataset("track", 1, 8);
    const fs::path out = root / "out";
    const Outcome r = kmcRun({"track", "--seq", (root / "ds" / "synth_001").string(), "--out", out.string()});
    ASSERT_EQ(r.code, cli::ExitOk) << r.err;
    EXPECT_EQ(lineCount(out / "boxes.csv"), 9);
    EXPECT_TRUE(fs::exists(out / "manifest.json"));
    EXPECT_NE(slurp(out / "manifest.json").find("\"command\": \"track\""), std::string::npos);
    EXPECT_NE(r.out.find("p20 1.000000"), std::string::npos) << r.out;
}

TEST(CliTrack, MissingGroundTruthNeedsInitBox)
{
    const fs::path root = syntheticDataset("nogt", 1, 3);
    const fs::path seq = root / "ds" / "synth_001";
    fs::remove(seq / "groundtruth_rect.txt");
    EXPECT_EQ(kmcRun({"track", "--seq", seq.string(), "--out", (root / "a").string()}).code, cli::ExitUsage);
    EXPECT_EQ(kmcRun({"track", "--seq", seq.string(), "--out", (root / "b").string(), "--init-box", "1,2,3"}).code,
        cli::ExitUsage);

    const Outcome ok = kmcRun({"track", "--seq", seq.string(), "--out", (root / "c").string(), "--init-box",
        "142,108,36,24"});
    EXPECT_EQ(ok.code, cli::ExitOk) << ok.err;
    EXPECT_EQ(lineCount(root / "c" / "boxes.csv"), 4);
}

TEST(CliTrack, BadFeatureFileIsAnError)
{
    const fs::path root = syntheticDataset("badkmcf", 1, 3);
    std::ofstream(root / "bad.kmcf") << "not a feature file";
    const Outcome r = kmcRun({"track", "--seq", (root / "ds" / "synth_001").string(), "--out", (root / "o").string(),
        "--features", "kmcf:" + (root / "bad.kmcf").string()});
    EXPECT_EQ(r.code, cli::ExitError);
    EXPECT_NE(r.err.find("FormatError"), std::string::npos) << r.err;
}

TEST(CliEval, AggregateRowAndDeterminism)
{
    const fs::path root = freshDir("eval");
    const std::vector<std::string> base{"eval", "--synthetic", "2", "--frames", "10", "--seed", "9"};
    auto withOut = [&](const std::string& d, const std::string& jobs) {
        auto a = base;
        a.insert(a.end(), {"--out", (root / d).string(), "--jobs", jobs});
        return kmcRun(a);
    };
    const Outcome first = withOut("one", "1");
    const Outcome second = withOut("two", "2");
    ASSERT_EQ(first.code, cli::ExitOk) << first.err;
    ASSERT_EQ(second.code, cli::ExitOk) << second.err;

    const std::string results = slurp(root / "one" / "results.csv");
    EXPECT_NE(results.find("\naggregate,2/2,20,"), std::string::npos) << results;
    for (const char* f : {"results.csv", "precision.csv", "success.csv", "boxes/synth_001.csv", "boxes/synth_002.csv",
             "dataset/synth_001/groundtruth_rect.txt"})
        EXPECT_EQ(slurp(root / "one" / f), slurp(root / "two" / f)) << f;
}

TEST(CliEval, EmptyDatasetAndUsage)
{
    const fs::path root = freshDir("evalerr");
    fs::create_directories(root / "empty");
    EXPECT_EQ(kmcRun({"eval", "--dataset", (root / "empty").string(), "--out", (root / "o").string()}).code,
        cli::ExitError);
    EXPECT_EQ(kmcRun({"eval", "--out", (root / "o").string()}).code, cli::ExitUsage);
    EXPECT_EQ(kmcRun({"eval", "--synthetic", "1", "--out", (root / "o").string(), "--decoder", "maybe"}).code,
        cli::ExitUsage);
    EXPECT_EQ(kmcRun({"eval", "--synthetic", "1", "--out", (root / "o").string(), "--features", "sift"}).code,
        cli::ExitUsage);
    EXPECT_EQ(kmcRun({"frobnicate"}).code, cli::ExitUsage);
    EXPECT_EQ(kmcRun({}).code, cli::ExitUsage);
}

TEST(CliRecordSamples, CountRangeAndTraining)
{
    const fs::path root = syntheticDataset("record", 1, 10);
    const Outcome r = kmcRun({"record-samples", "--seq", (root / "ds" / "synth_001").string(), "--out",
        (root / "rec").string()});
    ASSERT_EQ(r.code, cli::ExitOk) << r.err;
    const auto samples = readSamples(root / "rec" / "samples.kmcs");
    ASSERT_EQ(samples.size(), 9u);
    for (const auto& s : samples)
    {
        EXPECT_LE(std::abs(s.target.dx), 0.5);
        EXPECT_LE(std::abs(s.target.dy), 0.5);
    }

    const Outcome t = kmcRun({"train-decoder", "--samples", (root / "rec" / "samples.kmcs").string(), "--out",
        (root / "dec").string(), "--epochs", "2"});
    EXPECT_EQ(t.code, cli::ExitOk) << t.err;
    EXPECT_TRUE(fs::exists(root / "dec" / "decoder.kmcd"));
}

TEST(CliTrainDecoder, SameSeedSameWeights)
{
    const fs::path root = freshDir("train");
    auto train = [&](const std::string& d) {
        return kmcRun({"train-decoder", "--synthetic", "120", "--epochs", "2", "--seed", "7", "--out",
            (root / d).string()});
    };
    const Outcome a = train("a");
    const Outcome b = train("b");
    ASSERT_EQ(a.code, cli::ExitOk) << a.err;
    ASSERT_EQ(b.code, cli::ExitOk) << b.err;
    EXPECT_EQ(a.out, b.out);
    EXPECT_NE(a.out.find("validation_rms"), std::string::npos);
    EXPECT_NE(a.out.find("maxres_validation_rms"), std::string::npos);
    EXPECT_EQ(slurp(root / "a" / "decoder.kmcd"), slurp(root / "b" / "decoder.kmcd"));
    EXPECT_EQ(kmcRun({"train-decoder", "--synthetic", "1", "--out", (root / "c").string()}).code, cli::ExitError);
}

TEST(CliTrainDecoder, TrackerUsesTrainedWeights)
{
    const fs::path root = syntheticDataset("decoder_on", 1, 6);
    ASSERT_EQ(kmcRun({"train-decoder", "--synthetic", "120", "--epochs", "1", "--out", (root / "dec").string()}).code,
        cli::ExitOk);
    const std::string weights = (root / "dec" / "decoder.kmcd").string();
    const Outcome on = kmcRun({"eval", "--dataset", (root / "ds").string(), "--out", (root / "on").string(),
        "--decoder", "on", "--weights", weights});
    EXPECT_EQ(on.code, cli::ExitOk) << on.err;
    EXPECT_EQ(kmcRun({"eval", "--dataset", (root / "ds").string(), "--out", (root / "x").string(), "--decoder", "on"})
                  .code,
        cli::ExitError);
}
