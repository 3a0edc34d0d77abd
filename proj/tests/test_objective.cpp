#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fabsched/dispatch.hpp"
#include "fabsched/objective.hpp"
#include "fabsched/rng.hpp"
#include "oracles/objective_oracle.hpp"
#include "support.hpp"

using namespace fabsched;

namespace {

ObjectiveConfig minute_units() {
    ObjectiveConfig c;
    c.minutes_per_unit = 1;
    return c;
}

LotOutcome finished(ProductId p, Priority pr, double due, double done) {
    return LotOutcome{{p, pr}, due, done, 0};
}

LotOutcome in_progress(ProductId p, Priority pr, double due, double remaining) {
    return LotOutcome{{p, pr}, due, std::nullopt, remaining};
}

}  // namespace

TEST_CASE("finished cost examples") {
    ObjectiveConfig days;
    CHECK(finished_cost(std::vector{finished(0, Priority::regular, 100, 90)}, days) == 0);
    CHECK(finished_cost(std::vector{finished(0, Priority::regular, 0, 5 * 1440)}, days) == doctest::Approx(15));
    const std::vector two_types{finished(0, Priority::hot, 0, 3), finished(0, Priority::hot, 10, 10),
                                finished(1, Priority::regular, 0, 1)};
    CHECK(finished_cost(two_types, minute_units()) == doctest::Approx(24));
    CHECK(finished_cost(std::vector<LotOutcome>{}, days) == 0);
    CHECK_THROWS(finished_cost(std::vector{in_progress(0, Priority::regular, 0, 10)}, days));
}

TEST_CASE("WIP cost examples") {
    const std::map<LotType, double> unit_stretch{{{0, Priority::regular}, 1.0}};
    const auto cfg = minute_units();
    CHECK(wip_cost(std::vector{in_progress(0, Priority::regular, 110, 20)}, 100, unit_stretch, cfg) ==
          doctest::Approx(20));
    CHECK(wip_cost(std::vector{in_progress(0, Priority::regular, 10'000, 20)}, 100, unit_stretch, cfg) == 0);
    CHECK(wip_cost(std::vector<LotOutcome>{}, 100, unit_stretch, cfg) == 0);
    CHECK_THROWS(wip_cost(std::vector{in_progress(3, Priority::hot, 110, 20)}, 100, unit_stretch, cfg));

    const std::map<LotType, double> stretch2{{{0, Priority::regular}, 2.0}};
    // forecast = 110 - 2 * 20 = 70 -> 10 + 30
    CHECK(wip_cost(std::vector{in_progress(0, Priority::regular, 110, 20)}, 100, stretch2, cfg) == doctest::Approx(40));
}

TEST_CASE("the two terms add up") {
    const auto cfg = minute_units();
    const std::vector done{finished(0, Priority::hot, 0, 3), finished(0, Priority::hot, 10, 10),
                           finished(1, Priority::regular, 0, 1)};
    const std::map<LotType, double> stretch{{{0, Priority::regular}, 1.0}};
    const double total = finished_cost(done, cfg) +
                         wip_cost(std::vector{in_progress(0, Priority::regular, 110, 20)}, 100, stretch, cfg);
    CHECK(total == doctest::Approx(44));
}

TEST_CASE("randomized micro-cases agree with the brute-force oracle") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        CounterStream rng(seed, "objective-cases");
        const int types = static_cast<int>(rng.uniform_int(1, 5));
        const int lots = static_cast<int>(rng.uniform_int(1, 10));
        test::OracleConfig oc;
        oc.penalty = 1 + rng.uniform() * 20;
        oc.unit = rng.bernoulli(0.5) ? 1440 : 1;
        ObjectiveConfig cfg;
        cfg.penalty = oc.penalty;
        cfg.minutes_per_unit = oc.unit;
        for (int k = 0; k < 3; ++k) {
            oc.weights[k] = 0.5 + rng.uniform() * 4;
            cfg.weights.values[static_cast<std::size_t>(k)] = oc.weights[k];
        }
        std::vector<test::OracleLot> raw;
        std::vector<LotOutcome> done;
        std::vector<LotOutcome> wip;
        std::map<LotType, double> stretch;
        for (int i = 0; i < lots; ++i) {
            const int type = static_cast<int>(rng.uniform_int(0, types - 1));
            test::OracleLot l;
            l.product = type / 3;
            l.priority = static_cast<Priority>(type % 3);
            l.due = static_cast<double>(rng.uniform_int(0, 20'000));
            l.completion = static_cast<double>(rng.uniform_int(0, 20'000));
            l.remaining = static_cast<double>(rng.uniform_int(0, 5'000));
            raw.push_back(l);
            done.push_back(finished(l.product, l.priority, l.due, l.completion));
            wip.push_back(in_progress(l.product, l.priority, l.due, l.remaining));
            stretch[{l.product, l.priority}] = 1.0 + static_cast<double>(l.product + rank(l.priority)) * 0.5;
        }
        auto a = [](ProductId p, Priority pr) { return 1.0 + static_cast<double>(p + rank(pr)) * 0.5; };
        const double now = static_cast<double>(rng.uniform_int(0, 20'000));
        CAPTURE(seed);
        CHECK(std::abs(finished_cost(done, cfg) - test::oracle_finished(raw, oc)) < 1e-9);
        CHECK(std::abs(wip_cost(wip, now, stretch, cfg) - test::oracle_wip(raw, now, a, oc)) < 1e-9);
    }
}

TEST_CASE("objective properties") {
    CounterStream rng(17, "objective-properties");
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<LotOutcome> done;
        for (int i = 0; i < 12; ++i) {
            done.push_back(finished(static_cast<ProductId>(rng.uniform_int(0, 2)),
                                    static_cast<Priority>(rng.uniform_int(0, 2)),
                                    static_cast<double>(rng.uniform_int(0, 5000)),
                                    static_cast<double>(rng.uniform_int(0, 5000))));
        }
        ObjectiveConfig cfg;
        const double base = finished_cost(done, cfg);
        CHECK(base >= 0);

        auto shuffled = done;
        std::reverse(shuffled.begin(), shuffled.end());
        std::rotate(shuffled.begin(), shuffled.begin() + 5, shuffled.end());
        CHECK(finished_cost(shuffled, cfg) == doctest::Approx(base).epsilon(1e-12));

        for (auto& l : done) {
            if (*l.completion > l.due) {
                auto later = done;
                const auto idx = static_cast<std::size_t>(&l - done.data());
                *later[idx].completion += 60;
                CHECK(finished_cost(later, cfg) > base);
                break;
            }
        }

        ObjectiveConfig scaled = cfg;
        for (double& w : scaled.weights.values) w *= 3.0;
        CHECK(finished_cost(done, scaled) == doctest::Approx(3.0 * base));
    }
}

TEST_CASE("total cost of a fab") {
    const Scenario& s = test::minifab();
    FabState empty = init(s, 1, 0);
    const auto cfg = ObjectiveConfig::from(s);
    CHECK(total_cost(empty, cfg).total == 0);

    const HierarchicalDispatcher fifo(TieBreakRule::FIFO);
    const auto r = run(s, 2, fifo, 40 * kMinutesPerDay);
    const CostBreakdown c = total_cost(r.state, cfg);
    CHECK(c.total == c.finished + c.wip);
    CHECK(c.total >= 0);

    const auto a = stretch_factors(r.state);
    CHECK(a.size() == s.products.size() * 3);
    for (const auto& [type, factor] : a) {
        double sum = 0;
        int n = 0;
        for (LotId id : r.state.finished_lots) {
            const Lot& l = r.state.lot(id);
            if (l.type() != type) continue;
            sum += static_cast<double>(*l.completion_time - l.release_time) /
                   static_cast<double>(s.products[static_cast<std::size_t>(l.product_id)].raw_processing_time());
            ++n;
        }
        const double expected = n > 0 ? sum / n : s.products[static_cast<std::size_t>(type.product)].flow_factor;
        CHECK(factor == doctest::Approx(expected));
    }
}

TEST_CASE("KPI rows from lot completions") {
    Scenario s = test::minifab();
    Trace t;
    TraceRecord r;
    r.kind = TraceKind::lot_complete;
    r.product = 0;
    r.priority = Priority::regular;
    r.start = 0;
    r.end = 3 * kMinutesPerDay;
    r.time = 2 * kMinutesPerDay;
    t.push_back(r);
    KpiReport k = kpis(s, t, 10 * kMinutesPerDay);
    REQUIRE(k.rows.size() == 9);
    CHECK(k.rows[0].type == LotType{0, Priority::regular});
    CHECK(k.rows[0].count == 1);
    CHECK(k.rows[0].on_time_pct == 100);
    CHECK(k.rows[0].mean_cycle_days == doctest::Approx(2.0));
    CHECK(k.rows[1].count == 0);
    CHECK(std::isnan(k.rows[1].on_time_pct));
    CHECK(std::isnan(k.rows[1].mean_cycle_days));

    r.time = 4 * kMinutesPerDay;
    t.push_back(r);
    k = kpis(s, t, 10 * kMinutesPerDay);
    CHECK(k.rows[0].on_time_pct == 50);
    CHECK(k.rows[0].mean_cycle_days == doctest::Approx(3.0));

    const std::string csv = kpi_csv(k);
    std::istringstream in(csv);
    std::string header, first, second;
    std::getline(in, header);
    std::getline(in, first);
    std::getline(in, second);
    CHECK(header == "type,on_time_pct,cycle_days,count");
    CHECK(first == "regular-0,50,3,2");
    CHECK(second == "hot-0,NA,NA,0");
}

TEST_CASE("evaluated runs report percentages in range") {
    const HierarchicalDispatcher fifo(TieBreakRule::FIFO);
    const auto r = run(test::minifab(), 8, fifo, 60 * kMinutesPerDay);
    const KpiReport k = evaluate_run(r.state, r.trace, ObjectiveConfig::from(test::minifab()));
    std::int64_t finished_in_trace = 0;
    for (const auto& row : k.rows) {
        finished_in_trace += row.count;
        if (row.count > 0) {
            CHECK(row.on_time_pct >= 0);
            CHECK(row.on_time_pct <= 100);
        }
    }
    CHECK(finished_in_trace == static_cast<std::int64_t>(r.state.finished_lots.size()));
    CHECK(k.cost.total == k.cost.finished + k.cost.wip);
}
