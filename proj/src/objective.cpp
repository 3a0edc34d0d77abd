#include "fabsched/objective.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace fabsched {

ObjectiveConfig ObjectiveConfig::from(const Scenario& s) {
    ObjectiveConfig cfg;
    cfg.penalty = s.penalty;
    cfg.weights = s.priority_weights;
    return cfg;
}

namespace {

struct TypeSum {
    double sum = 0;
    std::int64_t count = 0;
};

double sum_of_means(const std::map<LotType, TypeSum>& per_type) {
    double total = 0;
    for (const auto& [type, acc] : per_type) {
        if (acc.count > 0) total += acc.sum / static_cast<double>(acc.count);
    }
    return total;
}

LotOutcome outcome_of(const FabState& st, const Lot& l) {
    LotOutcome o;
    o.type = l.type();
    o.due = static_cast<double>(l.due_date);
    if (l.completion_time) o.completion = static_cast<double>(*l.completion_time);
    if (l.status != LotStatus::finished) o.remaining_work = static_cast<double>(st.lot_remaining_work(l));
    return o;
}

}  // namespace

double finished_cost(std::span<const LotOutcome> finished, const ObjectiveConfig& cfg) {
    std::map<LotType, TypeSum> per_type;
    for (const auto& l : finished) {
        if (!l.completion) throw std::invalid_argument("finished_cost: lot without completion time");
        auto& acc = per_type[l.type];
        ++acc.count;
        if (*l.completion > l.due) {
            acc.sum += cfg.weights[l.type.priority] * (cfg.penalty + (*l.completion - l.due) / cfg.minutes_per_unit);
        }
    }
    return sum_of_means(per_type);
}

double wip_cost(std::span<const LotOutcome> wip, double now, const std::map<LotType, double>& stretch,
                const ObjectiveConfig& cfg) {
    std::map<LotType, TypeSum> per_type;
    for (const auto& l : wip) {
        auto it = stretch.find(l.type);
        if (it == stretch.end()) throw std::invalid_argument("wip_cost: no stretch factor for " + to_string(l.type));
        auto& acc = per_type[l.type];
        ++acc.count;
        const double forecast = l.due - it->second * l.remaining_work;
        if (forecast < now) {
            acc.sum += cfg.weights[l.type.priority] * (cfg.penalty + (now - forecast) / cfg.minutes_per_unit);
        }
    }
    return sum_of_means(per_type);
}

std::map<LotType, double> stretch_factors(const FabState& st) {
    std::map<LotType, TypeSum> realized;
    for (LotId id : st.finished_lots) {
        const Lot& l = st.lot(id);
        const double raw = static_cast<double>(st.product(l.product_id).raw_processing_time());
        auto& acc = realized[l.type()];
        acc.sum += static_cast<double>(*l.completion_time - l.release_time) / raw;
        ++acc.count;
    }
    std::map<LotType, double> out;
    for (const auto& p : st.scenario->products) {
        for (Priority pr : kAllPriorities) {
            const LotType t{p.product_id, pr};
            auto it = realized.find(t);
            out[t] = it != realized.end() ? it->second.sum / static_cast<double>(it->second.count) : p.flow_factor;
        }
    }
    return out;
}

CostBreakdown total_cost(const FabState& st, const ObjectiveConfig& cfg) {
    std::vector<LotOutcome> finished;
    std::vector<LotOutcome> wip;
    finished.reserve(st.finished_lots.size());
    wip.reserve(st.wip_count());
    for (const Lot& l : st.lots) {
        (l.status == LotStatus::finished ? finished : wip).push_back(outcome_of(st, l));
    }
    CostBreakdown c;
    c.finished = finished_cost(finished, cfg);
    c.wip = wip_cost(wip, static_cast<double>(st.clock), stretch_factors(st), cfg);
    c.total = c.finished + c.wip;
    return c;
}

KpiReport kpis(const Scenario& s, const Trace& trace, Minutes horizon) {
    struct Acc {
        std::int64_t count = 0;
        std::int64_t on_time = 0;
        double cycle_days = 0;
    };
    std::map<LotType, Acc> acc;
    KpiReport r;
    for (const auto& rec : trace) {
        if (rec.time > horizon) continue;
        if (rec.kind == TraceKind::cqt_violation) ++r.cqt_violations;
        if (rec.kind != TraceKind::lot_complete) continue;
        auto& a = acc[LotType{rec.product, rec.priority}];
        ++a.count;
        if (rec.time <= rec.end) ++a.on_time;
        a.cycle_days += static_cast<double>(rec.time - rec.start) / static_cast<double>(kMinutesPerDay);
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& p : s.products) {
        for (Priority pr : kAllPriorities) {
            const LotType t{p.product_id, pr};
            KpiRow row;
            row.type = t;
            auto it = acc.find(t);
            if (it == acc.end() || it->second.count == 0) {
                row.on_time_pct = nan;
                row.mean_cycle_days = nan;
            } else {
                const double n = static_cast<double>(it->second.count);
                row.count = it->second.count;
                row.on_time_pct = 100.0 * static_cast<double>(it->second.on_time) / n;
                row.mean_cycle_days = it->second.cycle_days / n;
            }
            r.rows.push_back(row);
        }
    }
    return r;
}

KpiReport evaluate_run(const FabState& st, const Trace& trace, const ObjectiveConfig& cfg) {
    KpiReport r = kpis(*st.scenario, trace, st.clock);
    r.cost = total_cost(st, cfg);
    r.cqt_violations = st.cqt_violations;
    return r;
}

namespace {

std::string fmt_number(double x) {
    if (std::isnan(x)) return "NA";
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

}  // namespace

std::string kpi_csv(const KpiReport& r) {
    std::ostringstream os;
    os << "type,on_time_pct,cycle_days,count\n";
    for (const auto& row : r.rows) {
        os << to_string(row.type) << ',' << fmt_number(row.on_time_pct) << ',' << fmt_number(row.mean_cycle_days)
           << ',' << row.count << '\n';
    }
    return os.str();
}

std::string kpi_summary_json(const KpiReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        nlohmann::json j{{"type", to_string(row.type)}, {"count", row.count}};
        j["on_time_pct"] = std::isnan(row.on_time_pct) ? nlohmann::json(nullptr) : nlohmann::json(row.on_time_pct);
        j["cycle_days"] = std::isnan(row.mean_cycle_days) ? nlohmann::json(nullptr) : nlohmann::json(row.mean_cycle_days);
        rows.push_back(j);
    }
    nlohmann::json j{{"cost", r.cost.total},
                     {"finished_cost", r.cost.finished},
                     {"wip_cost", r.cost.wip},
                     {"cqt_violations", r.cqt_violations},
                     {"types", rows}};
    return j.dump(2) + "\n";
}

}  // namespace fabsched
