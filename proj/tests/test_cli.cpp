#include "boxlens/report.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace fx = boxlens::testing;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        ASSERT_EQ(run(std::string(MAKE_FIXTURES_PATH) + " " + fx_dir()), 0);
    }

    std::string fx_dir() const { return dir.path().string(); }

    int run(const std::string& command) const {
        const int status = std::system((command + " >" + (dir / "log.txt").string() + " 2>&1").c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    int boxlens(const std::string& args) const { return run(std::string(BOXLENS_CLI_PATH) + " " + args); }

    std::string explain_args(const std::string& out) const {
        const std::string d = fx_dir() + "/";
        return "explain --model " + d + "tiny.onnx --preprocess " + d + "tiny_preprocess.json --class-names " + d +
               "tiny_classes.txt --layers relu2,relu3 --k 2 --blur-sigma 1.5 --seed 7 --out " + d + out;
    }

    fx::TempDir dir{"cli"};
};

}  // namespace

TEST_F(Cli, ExplainIsDeterministic) {
    const std::string image = " --image " + fx_dir() + "/quadrant.png --true-class texture";
    ASSERT_EQ(boxlens(explain_args("a") + image), 0) << slurp(dir / "log.txt");
    ASSERT_EQ(boxlens(explain_args("b") + image + " --jobs 3"), 0);
    const auto a = slurp(dir / "a" / "report.json");
    EXPECT_EQ(a, slurp(dir / "b" / "report.json"));
    EXPECT_EQ(slurp(dir / "a" / "overlay.png"), slurp(dir / "b" / "overlay.png"));
    const auto report = boxlens::read_report(dir / "a" / "report.json");
    EXPECT_EQ(report.true_class_name, "texture");
    EXPECT_EQ(report.features.size(), 2u);
}

TEST_F(Cli, JsonOnlyFormatAndPlot) {
    const std::string image = " --image " + fx_dir() + "/quadrant.png --true-class 0 --format json";
    ASSERT_EQ(boxlens(explain_args("j") + image), 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "j" / "report.json"));
    EXPECT_FALSE(std::filesystem::exists(dir / "j" / "overlay.png"));
    ASSERT_EQ(boxlens("plot --report " + (dir / "j" / "report.json").string()), 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "j" / "ir_chart.png"));
    EXPECT_TRUE(std::filesystem::exists(dir / "j" / "irp_chart.png"));
}

TEST_F(Cli, MissingModelIsAConfigError) {
    const std::string d = fx_dir() + "/";
    EXPECT_EQ(boxlens("explain --model " + d + "absent.onnx --image " + d + "quadrant.png --true-class 0 --out " + d +
                      "x"),
              2);
    EXPECT_FALSE(std::filesystem::exists(dir / "x"));
}

TEST_F(Cli, BadArgumentsAreConfigErrors) {
    const std::string image = " --image " + fx_dir() + "/quadrant.png";
    EXPECT_EQ(boxlens(explain_args("e1") + image), 2);                           // no true class
    EXPECT_EQ(boxlens(explain_args("e2") + image + " --true-class zebra"), 2);  // unknown name
    EXPECT_EQ(boxlens(explain_args("e3") + image + " --true-class 0 --layers nope"), 2);
    EXPECT_EQ(boxlens(explain_args("e4") + image + " --true-class 0 --neutral-band 1.2,1.4"), 2);
    EXPECT_EQ(boxlens(explain_args("e5") + " --image " + fx_dir() + "/absent.png --true-class 0"), 2);
    EXPECT_EQ(boxlens("explain --bogus"), 2);
}

TEST_F(Cli, CorruptModelIsAModelError) {
    EXPECT_EQ(boxlens("layers --model " + fx_dir() + "/corrupt.onnx"), 3);
    EXPECT_EQ(boxlens("layers --model " + fx_dir() + "/tiny.onnx"), 0);
    EXPECT_NE(slurp(dir / "log.txt").find("relu2"), std::string::npos);
}

TEST_F(Cli, BatchWithOneBadImageIsPartialFailure) {
    EXPECT_EQ(boxlens(explain_args("batch") + " --manifest " + fx_dir() + "/batch.txt"), 4);
    EXPECT_TRUE(std::filesystem::exists(dir / "batch" / "quadrant" / "report.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "batch" / "quadrant_dark" / "report.json"));
    const auto summary = boxlens::ordered_json::parse(slurp(dir / "batch" / "batch_summary.json"));
    EXPECT_EQ(summary["succeeded"].size(), 2u);
    ASSERT_EQ(summary["failed"].size(), 1u);
    EXPECT_NE(summary["failed"][0]["image"].get<std::string>().find("corrupt.png"), std::string::npos);

    EXPECT_EQ(boxlens(explain_args("ok") + " --manifest " + fx_dir() + "/batch_ok.txt"), 0);
}
