#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fabsched/cli.hpp"
#include "fabsched/dispatch.hpp"
#include "fabsched/harness.hpp"
#include "fabsched/sim.hpp"
#include "support.hpp"

using namespace fabsched;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string minifab_path() { return test::data_path("minifab.json").string(); }

bool same(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

std::size_t line_count(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
}

void check_same_aggregates(const AggregateReport& a, const AggregateReport& b) {
    REQUIRE(a.types.size() == b.types.size());
    for (std::size_t i = 0; i < a.types.size(); ++i) {
        CHECK(a.types[i].dispatcher == b.types[i].dispatcher);
        CHECK(a.types[i].type == b.types[i].type);
        CHECK(same(a.types[i].on_time_mean, b.types[i].on_time_mean));
        CHECK(same(a.types[i].on_time_std, b.types[i].on_time_std));
        CHECK(same(a.types[i].cycle_mean, b.types[i].cycle_mean));
        CHECK(same(a.types[i].cycle_std, b.types[i].cycle_std));
        CHECK(a.types[i].count == b.types[i].count);
    }
    REQUIRE(a.costs.size() == b.costs.size());
    for (std::size_t i = 0; i < a.costs.size(); ++i) {
        CHECK(a.costs[i].dispatcher == b.costs[i].dispatcher);
        CHECK(same(a.costs[i].cost_mean, b.costs[i].cost_mean));
        CHECK(same(a.costs[i].cost_std, b.costs[i].cost_std));
        CHECK(same(a.costs[i].finished_mean, b.costs[i].finished_mean));
        CHECK(same(a.costs[i].wip_mean, b.costs[i].wip_mean));
        CHECK(a.costs[i].seeds == b.costs[i].seeds);
    }
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
    CHECK(cli({}).code == kExitValidation);
    CHECK(cli({"frobnicate"}).code == kExitValidation);
    CHECK(cli({"simulate"}).code == kExitValidation);
    CHECK(cli({"--help"}).code == kExitOk);

    const auto r = cli({"simulate", "--scenario", minifab_path(), "--dispatcher", "random"});
    CHECK(r.code == kExitValidation);
    for (const auto& n : heuristic_names()) CHECK(r.err.find(n) != std::string::npos);
}

TEST_CASE("validate") {
    const auto ok = cli({"validate", "--scenario", minifab_path()});
    CHECK(ok.code == kExitOk);
    CHECK(ok.out.find("valid") != std::string::npos);

    const auto dir = test::scratch_dir("cli-validate");
    std::ofstream(dir / "corrupt.json") << "{ not json";
    const auto corrupt = cli({"validate", "--scenario", (dir / "corrupt.json").string()});
    CHECK(corrupt.code == kExitValidation);
    CHECK_FALSE(corrupt.err.empty());

    Scenario s = test::minifab();
    s.tool_groups[0].machine_count = 0;
    s.penalty = -1;
    std::ofstream(dir / "invalid.json") << scenario_to_string(s);
    const auto invalid = cli({"validate", "--scenario", (dir / "invalid.json").string()});
    CHECK(invalid.code == kExitValidation);
    CHECK(std::count(invalid.err.begin(), invalid.err.end(), '\n') >= 2);

    CHECK(cli({"validate", "--scenario", (dir / "missing.json").string()}).code != kExitOk);
}

TEST_CASE("generate writes a valid scenario") {
    const auto dir = test::scratch_dir("cli-generate");
    const auto path = (dir / "g.json").string();
    CHECK(cli({"generate", "--out", path, "--seed", "4", "--route-length", "12"}).code == kExitOk);
    CHECK(cli({"validate", "--scenario", path}).code == kExitOk);
    GeneratorConfig g;
    g.seed = 4;
    g.route_length = 12;
    CHECK(load_scenario(path) == generate_minifab(g));
}

TEST_CASE("simulate writes one trace line per record") {
    const auto dir = test::scratch_dir("cli-simulate");
    const auto trace = dir / "t.jsonl";
    const auto r = cli({"simulate", "--scenario", minifab_path(), "--dispatcher", "edd", "--seed", "3",
                        "--horizon-days", "20", "--trace-out", trace.string(), "--json"});
    REQUIRE(r.code == kExitOk);
    const RunResult direct = run(test::minifab(), 3, *make_dispatcher("edd"), 20 * kMinutesPerDay);
    CHECK(line_count(trace) == direct.trace.size());
    CHECK(nlohmann::json::parse(r.out).contains("cost"));
}

TEST_CASE("evaluate pairs seeds and its files round-trip") {
    const auto dir = test::scratch_dir("cli-evaluate");
    const auto r = cli({"evaluate", "--scenario", minifab_path(), "--dispatchers", "fifo,cr", "--seeds", "3", "--seed",
                        "40", "--horizon-days", "20", "--out", dir.string()});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("regular") != std::string::npos);

    const AggregateReport back = read_report(dir);
    REQUIRE(back.runs.size() == 6);
    std::vector<std::uint64_t> fifo, cr;
    for (const auto& run : back.runs) (run.dispatcher == "fifo" ? fifo : cr).push_back(run.seed);
    CHECK(fifo == std::vector<std::uint64_t>{40, 41, 42});
    CHECK(cr == fifo);
    for (const auto& run : back.runs) CHECK(run.cost.total == doctest::Approx(run.cost.finished + run.cost.wip));

    // Aggregates recomputed from the per-seed files match the aggregate files.
    check_same_aggregates(aggregate(back.runs), back);

    // Writing what was read reproduces the files byte for byte.
    const auto again = test::scratch_dir("cli-evaluate-again");
    write_report(back, again, &test::minifab());
    for (const char* f : {"kpis.csv", "cost.csv", "runs.csv", "run_kpis.csv"}) {
        std::ifstream a(dir / f), b(again / f);
        std::stringstream sa, sb;
        sa << a.rdbuf();
        sb << b.rdbuf();
        CAPTURE(f);
        CHECK(sa.str() == sb.str());
    }

    const auto rep = cli({"report", "--in", dir.string(), "--json"});
    CHECK(rep.code == kExitOk);
    CHECK(nlohmann::json::parse(rep.out)["costs"].size() == 2);
}

TEST_CASE("benchmark edge cases") {
    BenchmarkConfig cfg;
    cfg.dispatchers = {"fifo"};
    cfg.seeds = 1;
    cfg.horizon = 10 * kMinutesPerDay;
    const AggregateReport one = run_benchmark(test::minifab(), cfg);
    REQUIRE(one.costs.size() == 1);
    CHECK(one.costs[0].cost_std == 0.0);
    for (const auto& t : one.types) {
        if (!std::isnan(t.on_time_std)) CHECK(t.on_time_std == 0.0);
    }

    cfg.threads = 1;
    cfg.seeds = 2;
    const AggregateReport serial = run_benchmark(test::minifab(), cfg);
    cfg.threads = 3;
    check_same_aggregates(run_benchmark(test::minifab(), cfg), serial);

    cfg.seeds = 0;
    CHECK_THROWS_AS(run_benchmark(test::minifab(), cfg), std::invalid_argument);
    cfg.seeds = 1;
    cfg.dispatchers = {"fifo", "nope"};
    CHECK_THROWS_AS(run_benchmark(test::minifab(), cfg), UnknownDispatcherError);

    const auto dir = test::scratch_dir("cli-empty");
    write_report(AggregateReport{}, dir);
    CHECK(line_count(dir / "kpis.csv") == 1);
    CHECK(line_count(dir / "cost.csv") == 1);
    const AggregateReport empty = read_report(dir);
    CHECK(empty.types.empty());
    CHECK(empty.costs.empty());
}

TEST_CASE("the training commands chain together") {
    const auto dir = test::scratch_dir("cli-pipeline");
    const auto norm = (dir / "norm.json").string();
    const auto ssl = (dir / "ssl.json").string();
    const auto agent = (dir / "agent.json").string();
    const auto history = (dir / "history.csv").string();
    REQUIRE(cli({"fit-normalizer", "--scenario", minifab_path(), "--out", norm, "--horizon-days", "10"}).code == kExitOk);
    const auto s = cli({"train-ssl", "--scenario", minifab_path(), "--normalizer", norm, "--out", ssl, "--horizon-days",
                        "5", "--epochs", "2", "--heldout-seed", "9", "--cache-dir", (dir / "cache").string(), "--json"});
    REQUIRE(s.code == kExitOk);
    CHECK(nlohmann::json::parse(s.out).contains("heldout_accuracy"));
    CHECK(load_params(ssl).params.frozen_encoding);

    const auto n = cli({"train-nes", "--scenario", minifab_path(), "--ssl-params", ssl, "--out", agent, "--history",
                        history, "--checkpoint-dir", (dir / "ckpt").string(), "--population", "2", "--iterations", "2",
                        "--horizon-days", "5", "--threads", "1"});
    REQUIRE(n.code == kExitOk);
    CHECK(line_count(history) == 3);
    CHECK(std::filesystem::exists(dir / "ckpt" / "iter_0001.json"));
    CHECK(load_params(agent).params.block(Block::encoding) == load_params(ssl).params.block(Block::encoding));

    const auto e = cli({"evaluate", "--scenario", minifab_path(), "--dispatchers", "fifo,agent:" + agent, "--seeds", "2",
                        "--horizon-days", "5", "--json"});
    CHECK(e.code == kExitOk);
    CHECK(cli({"train-nes", "--scenario", minifab_path(), "--ssl-params", (dir / "none.json").string(), "--out",
               agent}).code == kExitRuntime);
}
