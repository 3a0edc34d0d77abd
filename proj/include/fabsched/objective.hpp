#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fabsched/scenario.hpp"
#include "fabsched/sim.hpp"

namespace fabsched {

struct ObjectiveConfig {
    double penalty = 10.0;
    PriorityWeights weights;
    /// Tardiness is scored in days; unit tests switch this to 1 to score raw minutes.
    double minutes_per_unit = static_cast<double>(kMinutesPerDay);

    static ObjectiveConfig from(const Scenario& s);
};

/// The fields of a lot that the objective reads.
struct LotOutcome {
    LotType type;
    double due = 0;
    std::optional<double> completion;
    /// e_l, minutes of mean processing still ahead (WIP lots).
    double remaining_work = 0;
};

struct CostBreakdown {
    double finished = 0;
    double wip = 0;
    double total = 0;
};

/// Sum over lot types of the per-type mean of w_l (p + tardiness) over tardy finished lots.
/// Throws std::invalid_argument for a lot without a completion time.
double finished_cost(std::span<const LotOutcome> finished, const ObjectiveConfig& cfg);

/// Sum over lot types of the per-type mean penalty of WIP lots whose forecast
/// completion d_l - a_i e_l lies before `now`. `stretch` maps each type to a_i.
double wip_cost(std::span<const LotOutcome> wip, double now, const std::map<LotType, double>& stretch,
                const ObjectiveConfig& cfg);

/// a_i per type: mean realized cycle time over raw processing time of the finished lots,
/// falling back to the product flow factor when a type has none.
std::map<LotType, double> stretch_factors(const FabState& st);

CostBreakdown total_cost(const FabState& st, const ObjectiveConfig& cfg);

struct KpiRow {
    LotType type;
    std::int64_t count = 0;
    /// NaN when count is 0.
    double on_time_pct = 0;
    double mean_cycle_days = 0;
};

struct KpiReport {
    std::vector<KpiRow> rows;
    CostBreakdown cost;
    std::int64_t cqt_violations = 0;
};

/// Per-type on-time percentage and mean cycle time from the lot completions in a trace,
/// one row for every (product, priority) pair of the scenario.
KpiReport kpis(const Scenario& s, const Trace& trace, Minutes horizon);

/// kpis() plus the objective of the final state.
KpiReport evaluate_run(const FabState& st, const Trace& trace, const ObjectiveConfig& cfg);

std::string kpi_csv(const KpiReport& r);
std::string kpi_summary_json(const KpiReport& r);

}  // namespace fabsched
