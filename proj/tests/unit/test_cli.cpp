#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string("\"") + M2RNET_EXE + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const char* name) {
    const fs::path p = fs::temp_directory_path() / ("m2r_cli_" + std::string(name) + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST(Cli, HelpSucceeds) { EXPECT_EQ(run("--help"), 0); }

TEST(Cli, UnknownFlagIsUsageError) { EXPECT_EQ(run("train --no-such-flag"), 1); }

TEST(Cli, MissingSubcommandIsUsageError) { EXPECT_EQ(run(""), 1); }

TEST(Cli, MissingDirectoryIsIoError) {
    const fs::path out = scratch("missing");
    EXPECT_EQ(run("eval --pred-dir /nonexistent/pred --gt-dir /nonexistent/gt --out " + out.string()), 2);
    fs::remove_all(out);
}

TEST(Cli, UnknownConfigKeyIsRejected) {
    const fs::path out = scratch("badkey");
    EXPECT_EQ(run("gen-data --set no_such_key=1 --out " + out.string()), 1);
    fs::remove_all(out);
}

TEST(Cli, GenDataWritesManifest) {
    const fs::path out = scratch("gen");
    ASSERT_EQ(run("gen-data --set train_samples=2 --set test_samples=1 --set resolution=16 --out " + out.string()), 0);
    EXPECT_TRUE(fs::exists(out / "manifest.txt"));
    EXPECT_TRUE(fs::exists(out / "rgb" / "0000.ppm"));
    EXPECT_TRUE(fs::exists(out / "depth" / "0002.pgm"));
    EXPECT_TRUE(fs::exists(out / "gt" / "0001.pgm"));
    fs::remove_all(out);
}

TEST(Cli, GradcheckSubsetPasses) {
    const fs::path out = scratch("gc");
    EXPECT_EQ(run("gradcheck --trials 2 --filter relu --out " + out.string()), 0);
    EXPECT_TRUE(fs::exists(out / "gradcheck.csv"));
    fs::remove_all(out);
}
