#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fabsched/features.hpp"
#include "fabsched/objective.hpp"
#include "fabsched/scenario.hpp"

namespace fabsched {

struct BenchmarkConfig {
    std::vector<std::string> dispatchers;
    int seeds = 20;
    std::uint64_t base_seed = 0;
    Minutes horizon = 180 * kMinutesPerDay;
    /// Used by `agent:` dispatchers whose parameter file carries no normalizer.
    std::optional<Normalizer> normalizer;
    /// 0 means one worker per hardware thread.
    int threads = 0;

    /// Throws std::invalid_argument for an empty dispatcher list or fewer than one seed.
    void check() const;
    /// The simulator seeds every dispatcher sees, in order.
    std::vector<std::uint64_t> seed_list() const;
};

/// One (dispatcher, seed) cell.
struct RunRecord {
    std::string dispatcher;
    std::uint64_t seed = 0;
    CostBreakdown cost;
    std::int64_t cqt_violations = 0;
    std::int64_t decisions = 0;
    /// Median wall-clock dispatcher latency, microseconds.
    double median_decision_us = 0;
    std::vector<KpiRow> kpis;
};

struct TypeAggregate {
    std::string dispatcher;
    LotType type;
    double on_time_mean = 0;
    double on_time_std = 0;
    double cycle_mean = 0;
    double cycle_std = 0;
    /// Seeds in which the type completed at least one lot.
    std::int64_t count = 0;
};

struct CostAggregate {
    std::string dispatcher;
    double cost_mean = 0;
    double cost_std = 0;
    double finished_mean = 0;
    double wip_mean = 0;
    std::int64_t seeds = 0;
    double median_decision_us = 0;
};

struct AggregateReport {
    std::vector<TypeAggregate> types;
    std::vector<CostAggregate> costs;
    /// Per-cell results, sorted by dispatcher order then seed.
    std::vector<RunRecord> runs;
};

/// Runs every (dispatcher, seed) cell, in parallel, with the same seed list for every
/// dispatcher. Throws UnknownDispatcherError or the loader's error for a bad `agent:` file.
AggregateReport run_benchmark(const Scenario& s, const BenchmarkConfig& cfg);

/// Mean and population standard deviation over seeds, in first-appearance dispatcher order.
/// Undefined KPI values (no completions) are left out of their type's statistics.
AggregateReport aggregate(std::vector<RunRecord> runs);

/// Writes kpis.csv, cost.csv, runs.csv, run_kpis.csv and report.txt.
void write_report(const AggregateReport& r, const std::filesystem::path& dir, const Scenario* s = nullptr);

/// Parses the aggregate files (kpis.csv, cost.csv) and per-seed files (runs.csv,
/// run_kpis.csv) that write_report produced.
AggregateReport read_report(const std::filesystem::path& dir);

/// Text table: one block per priority class with per-product rows, then costs.
std::string format_report(const AggregateReport& r, const Scenario* s = nullptr);
std::string report_json(const AggregateReport& r);

inline constexpr const char* kKpiCsvHeader = "dispatcher,lot_type,on_time_mean,on_time_std,cycle_mean,cycle_std,count";
inline constexpr const char* kCostCsvHeader =
    "dispatcher,cost_mean,cost_std,finished_mean,wip_mean,seeds,median_decision_us";
inline constexpr const char* kRunsCsvHeader =
    "dispatcher,seed,cost,finished_cost,wip_cost,cqt_violations,decisions,median_decision_us";
inline constexpr const char* kRunKpisCsvHeader = "dispatcher,seed,lot_type,on_time_pct,cycle_days,count";

}  // namespace fabsched
