#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "focalforge/config.hpp"

using namespace focalforge;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(FOCALFORGE_BIN) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("help exits cleanly, bad usage exits 1, runtime errors exit 2") {
    CHECK(run("--help") == 0);
    CHECK(run("fuse --help") == 0);
    CHECK(run("no-such-subcommand") == 1);
    CHECK(run("fuse --stack missing_dir_xyz --out out.png --method average") == 2);
    CHECK(run("fuse --stack . --out out.png --method bogus") == 2);
}

TEST_CASE("gen-data -> synth -> fuse -> eval round trip") {
    const std::string root = "cli_tmp";
    fs::remove_all(root);
    fs::create_directories(root);

    CHECK(run("gen-data --out " + root + "/data --count 2 --size 32 --seed 5") == 0);
    CHECK(fs::exists(root + "/data/scene_0000.png"));
    CHECK(fs::exists(root + "/data/scene_0001.ffd"));
    CHECK(fs::exists(root + "/data/run_config_gen-data.txt"));

    CHECK(run("synth --images " + root + "/data --depths " + root + "/data --layers 3 "
              "--blur-gain 1.5 --seed 5 --out " + root + "/stacks") == 0);
    CHECK(fs::exists(root + "/stacks/scene_0000/layer_000.png"));
    CHECK(fs::exists(root + "/stacks/scene_0000/layer_002.png"));
    CHECK(fs::exists(root + "/stacks/scene_0000/depth.ffd"));
    CHECK(fs::exists(root + "/stacks/scene_0000/manifest.json"));

    fs::create_directories(root + "/fused");
    CHECK(run("fuse --stack " + root + "/stacks/scene_0000 --method laplacian --out " + root +
              "/fused/scene_0000.png --save-map " + root + "/fused/scene_0000.ffm") == 0);
    CHECK(fs::exists(root + "/fused/scene_0000.png"));
    CHECK(fs::exists(root + "/fused/scene_0000.ffm"));

    fs::create_directories(root + "/gt");
    fs::copy_file(root + "/data/scene_0000.png", root + "/gt/scene_0000.png");
    CHECK(run("eval --pred " + root + "/fused --gt " + root + "/gt --out " + root +
              "/report.csv") == 0);
    CHECK(fs::exists(root + "/report.csv"));
}

TEST_CASE("key-value config parser") {
    const KvConfig cfg = KvConfig::parse_string(
        "# comment line\n"
        "epochs = 12\n"
        "lr=0.001  # trailing comment\n"
        "name = toy run\n"
        "\n");
    CHECK(cfg.get_int("epochs", 0) == 12);
    CHECK(cfg.get_double("lr", 0.0) == doctest::Approx(0.001));
    CHECK(cfg.get_str("name", "") == "toy run");
    CHECK(cfg.get_int("missing", 42) == 42);
    CHECK_THROWS_AS(KvConfig::parse_string("not a pair\n"), std::invalid_argument);
}

TEST_CASE("seed resolution order: flag, environment, fallback") {
    unsetenv("FOCALFORGE_SEED");
    CHECK(resolve_seed(true, 9, 1) == 9);
    CHECK(resolve_seed(false, 9, 1) == 1);
    setenv("FOCALFORGE_SEED", "123", 1);
    CHECK(resolve_seed(false, 9, 1) == 123);
    CHECK(resolve_seed(true, 9, 1) == 9);
    setenv("FOCALFORGE_SEED", "junk", 1);
    CHECK_THROWS_AS(resolve_seed(false, 9, 1), std::invalid_argument);
    unsetenv("FOCALFORGE_SEED");
}
