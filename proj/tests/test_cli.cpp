#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <string>
#include <sys/wait.h>

namespace {

struct Run {
    int status = -1;
    std::string out;
    std::string err;
};

Run flowgen(const testing::TempDir& dir, const std::string& args)
{
    const auto out = dir / "stdout.txt";
    const auto err = dir / "stderr.txt";
    const std::string cmd = std::string("\"") + FLOWGEN_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                            err.string() + "\"";
    const int raw = std::system(cmd.c_str());
    Run r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out    = testing::slurp(out);
    r.err    = testing::slurp(err);
    return r;
}

std::string q(const std::filesystem::path& p)
{
    return "\"" + p.string() + "\"";
}

std::string data_flags(const testing::TempDir& dir)
{
    return " --locations " + q(dir / "data/locations.csv") + " --features " + q(dir / "data/features.csv") +
           " --flows " + q(dir / "data/flows.csv") + " --tessellation " + q(dir / "tess/tessellation.csv");
}

std::size_t line_count(const std::filesystem::path& p)
{
    const auto text = testing::slurp(p);
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

} // namespace

TEST_CASE("bad input exits 2")
{
    testing::TempDir dir("cli");
    auto r = flowgen(dir, "tessellate --locations " + q(dir / "nope.csv") + " --out-dir " + q(dir.path()));
    CHECK(r.status == 2);
    CHECK(r.err.find("input not found") != std::string::npos);

    r = flowgen(dir, "generate --model " + q(dir / "missing.json") + " --locations " + q(dir / "nope.csv"));
    CHECK(r.status == 2);

    r = flowgen(dir, "train --variant xyz --locations x.csv");
    CHECK(r.status == 2);
    r = flowgen(dir, "frobnicate");
    CHECK(r.status == 2);
}

TEST_CASE("help lists every flag with defaults")
{
    testing::TempDir dir("cli");
    const auto r = flowgen(dir, "train --help");
    CHECK(r.status == 0);
    for (const char* flag : {"--variant", "--epochs", "--lr", "--momentum", "--batch-origins", "--negatives",
                             "--seed", "--split", "--regions", "--out", "--knn-k", "--cell-size"}) {
        CAPTURE(flag);
        CHECK(r.out.find(flag) != std::string::npos);
    }
    CHECK(r.out.find("5e-06") != std::string::npos);
    CHECK(flowgen(dir, "--help").out.find("--config") != std::string::npos);
    for (const char* sub : {"tessellate", "featurize", "synth", "generate", "evaluate", "explain"}) {
        CAPTURE(sub);
        const auto h = flowgen(dir, std::string(sub) + " --help");
        CHECK(h.status == 0);
        CHECK(h.out.find("--out") != std::string::npos);
    }
}

TEST_CASE("finer grids give more regions")
{
    testing::TempDir dir("cli");
    REQUIRE(flowgen(dir, "synth --regions 4 --locations-per-region 25 --seed 3 --out-dir " + q(dir / "data")).status == 0);
    REQUIRE(flowgen(dir, "tessellate --locations " + q(dir / "data/locations.csv") + " --cell-size 25 --out-dir " +
                             q(dir / "t25"))
                .status == 0);
    REQUIRE(flowgen(dir, "tessellate --locations " + q(dir / "data/locations.csv") + " --cell-size 10 --out-dir " +
                             q(dir / "t10"))
                .status == 0);
    const auto c25 = nlohmann::json::parse(testing::slurp(dir / "t25/tessellation.json"));
    const auto c10 = nlohmann::json::parse(testing::slurp(dir / "t10/tessellation.json"));
    CHECK(std::filesystem::exists(dir / "t25/tessellation.csv"));
    CHECK(c25.at("n_cells") == 4);
    CHECK(c10.at("n_cells").get<int>() > c25.at("n_cells").get<int>());
}

TEST_CASE("config files supply option defaults and flags win")
{
    testing::TempDir dir("cli");
    dir.write("synth.ini", "[synth]\nregions=3\nlocations-per-region=9\nseed=4\n[train]\nepochs=2\n");
    REQUIRE(flowgen(dir, "synth --config " + q(dir / "synth.ini") + " --out-dir " + q(dir / "a")).status == 0);
    CHECK(line_count(dir / "a/locations.csv") == 1 + 27);
    REQUIRE(flowgen(dir, "synth --config " + q(dir / "synth.ini") + " --regions 2 --out-dir " + q(dir / "b")).status == 0);
    CHECK(line_count(dir / "b/locations.csv") == 1 + 18);
}

TEST_CASE("synthetic pipeline end to end")
{
    testing::TempDir dir("cli");
    REQUIRE(flowgen(dir, "synth --generator nonlinear_truth --regions 10 --locations-per-region 16 --seed 2 --out-dir " +
                             q(dir / "data"))
                .status == 0);
    REQUIRE(flowgen(dir, "tessellate --locations " + q(dir / "data/locations.csv") + " --out-dir " + q(dir / "tess"))
                .status == 0);

    const std::string train = "train --variant dg --epochs 3 --lr 1e-4 --seed 7 --split-seed 5" + data_flags(dir);
    auto r = flowgen(dir, train + " --out " + q(dir / "dg.json"));
    REQUIRE(r.status == 0);
    REQUIRE(std::filesystem::exists(dir / "dg.split.json"));
    r = flowgen(dir, train + " --out " + q(dir / "dg2.json") + " --split " + q(dir / "dg.split.json"));
    REQUIRE(r.status == 0);
    CHECK(testing::slurp(dir / "dg.json") == testing::slurp(dir / "dg2.json"));

    const auto model = nlohmann::json::parse(testing::slurp(dir / "dg.json"));
    const auto split = nlohmann::json::parse(testing::slurp(dir / "dg.split.json"));
    CHECK(model.at("provenance").at("train_region_ids") == split.at("train_region_ids"));
    CHECK(model.at("provenance").at("seed") == 7);
    CHECK(model.at("provenance").at("config_hash").get<std::string>().size() == 16);
    CHECK(model.at("training_log").size() == 3);

    SUBCASE("training on a test region is refused")
    {
        const std::string test_region = split.at("test_region_ids").at(0);
        r = flowgen(dir, train + " --split " + q(dir / "dg.split.json") + " --regions " + test_region + " --out " +
                             q(dir / "leak.json"));
        CHECK(r.status == 3);
        CHECK_FALSE(std::filesystem::exists(dir / "leak.json"));
    }
    SUBCASE("generate and evaluate")
    {
        REQUIRE(flowgen(dir, "train --variant g --split " + q(dir / "dg.split.json") + data_flags(dir) + " --out " +
                                 q(dir / "g.json"))
                    .status == 0);
        r = flowgen(dir, "generate --model " + q(dir / "dg.json") + " --split " + q(dir / "dg.split.json") +
                             data_flags(dir) + " --out " + q(dir / "gen.csv"));
        REQUIRE(r.status == 0);
        CHECK(testing::slurp(dir / "gen.csv").rfind("origin_id,destination_id,flow\n", 0) == 0);
        CHECK(line_count(dir / "gen.csv") > 1);

        const std::string eval = "evaluate --model " + q(dir / "dg.json") + " --baseline " + q(dir / "g.json") +
                                 " --split " + q(dir / "dg.split.json") + data_flags(dir);
        REQUIRE(flowgen(dir, eval + " --out-dir " + q(dir / "e1")).status == 0);
        REQUIRE(flowgen(dir, eval + " --jobs 4 --out-dir " + q(dir / "e2")).status == 0);
        CHECK(testing::slurp(dir / "e1/report.json") == testing::slurp(dir / "e2/report.json"));
        CHECK(testing::slurp(dir / "e1/report.csv") == testing::slurp(dir / "e2/report.csv"));
        const auto report = nlohmann::json::parse(testing::slurp(dir / "e1/report.json"));
        CHECK(report.at("format") == "flowgen-report/1");
        CHECK(line_count(dir / "e1/report.csv") == 1 + 2 * split.at("test_region_ids").size());

        r = flowgen(dir, "explain --model " + q(dir / "dg.json") + " --split " + q(dir / "dg.split.json") +
                             data_flags(dir) + " --pairs 5 --background 10 --permutations 20 --out-dir " +
                             q(dir / "x"));
        REQUIRE(r.status == 0);
        CHECK(line_count(dir / "x/beeswarm.csv") == 1 + 5 * 39);
        CHECK(line_count(dir / "x/ranking.csv") == 1 + 39);
    }
}
