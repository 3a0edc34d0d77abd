#pragma once

// Invariant checker for simulator runs. It wraps a dispatcher to inspect every
// decision point and then audits the finished trace. It reads raw state fields
// only and does not reuse any simulator helper.

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fabsched/dispatcher.hpp"
#include "fabsched/sim.hpp"

namespace fabsched::test {

struct InvariantReport {
    std::vector<std::string> failures;
    std::int64_t decision_points = 0;

    bool ok() const { return failures.empty(); }
    void fail(const std::string& what) {
        if (failures.size() < 20) failures.push_back(what);
    }
};

class CheckingDispatcher final : public Dispatcher {
public:
    CheckingDispatcher(const Dispatcher& inner, InvariantReport& report) : inner_(inner), report_(report) {}

    std::vector<LotId> order(const FabState& st, std::span<const LotId> legal) const override {
        ++report_.decision_points;
        if (st.clock < last_clock_) report_.fail("clock moved backwards at t=" + std::to_string(st.clock));
        last_clock_ = st.clock;

        std::size_t finished = 0;
        for (const Lot& l : st.lots) {
            const auto route_len = static_cast<int>(st.scenario->products[static_cast<std::size_t>(l.product_id)].route.size());
            const bool done = l.status == LotStatus::finished;
            finished += done ? 1 : 0;
            if (done != l.completion_time.has_value() || done != (l.step_index == route_len)) {
                report_.fail("lot " + std::to_string(l.lot_id) + " completion/step mismatch");
            }
            if (l.step_index > route_len || l.total_wait < 0) report_.fail("lot " + std::to_string(l.lot_id) + " out of range");
            auto [it, fresh] = last_step_.try_emplace(l.lot_id, l.step_index);
            if (!fresh) {
                if (l.step_index < it->second) report_.fail("lot " + std::to_string(l.lot_id) + " step went backwards");
                it->second = l.step_index;
            }
        }
        if (finished != st.finished_lots.size()) report_.fail("finished list disagrees with lot states");
        if (st.wip_count() + st.finished_lots.size() != st.lots.size()) report_.fail("lot conservation broken");

        for (const auto& m : st.machines) {
            const int cap = st.scenario->tool_groups[static_cast<std::size_t>(m.group_id)].batch_max;
            if (static_cast<int>(m.current_batch.size()) > cap) report_.fail("batch over capacity");
            if (m.status == MachineStatus::busy && !m.busy_until) report_.fail("busy machine without busy_until");
        }
        for (LotId id : legal) {
            if (st.lots[static_cast<std::size_t>(id)].status != LotStatus::queued) report_.fail("non-queued lot offered");
        }
        return inner_.order(st, legal);
    }
    std::string name() const override { return inner_.name(); }

private:
    const Dispatcher& inner_;
    InvariantReport& report_;
    mutable Minutes last_clock_ = std::numeric_limits<Minutes>::min();
    mutable std::map<LotId, int> last_step_;
};

/// Trace-level audit: machine exclusivity, one start per (lot, step), ordered
/// trace times and one violation record per counted CQT violation.
inline void audit_trace(const Trace& trace, std::int64_t cqt_count, InvariantReport& report) {
    std::map<MachineId, std::vector<std::pair<Minutes, Minutes>>> busy;
    std::set<std::pair<LotId, int>> started;
    std::set<std::pair<LotId, int>> violated;
    std::int64_t violations = 0;
    Minutes last = std::numeric_limits<Minutes>::min();
    for (const auto& r : trace) {
        if (r.time < last) report.fail("trace time decreased at " + std::to_string(r.time));
        last = r.time;
        if (r.kind == TraceKind::op_complete) {
            if (r.start > r.end) report.fail("operation ends before it starts");
            busy[r.machine].emplace_back(r.start, r.end);
            for (LotId id : r.lots) {
                if (!started.insert({id, r.step}).second) {
                    report.fail("lot " + std::to_string(id) + " ran step " + std::to_string(r.step) + " twice");
                }
            }
        }
        if (r.kind == TraceKind::cqt_violation) {
            ++violations;
            if (!violated.insert({r.lot, r.step}).second) report.fail("CQT violation logged twice");
            if (r.time <= r.end) report.fail("CQT violation logged before its deadline");
        }
    }
    for (auto& [machine, intervals] : busy) {
        std::sort(intervals.begin(), intervals.end());
        for (std::size_t k = 1; k < intervals.size(); ++k) {
            if (intervals[k].first < intervals[k - 1].second) {
                std::ostringstream os;
                os << "machine " << machine << " overlaps: [" << intervals[k - 1].first << ',' << intervals[k - 1].second
                   << ") and [" << intervals[k].first << ',' << intervals[k].second << ')';
                report.fail(os.str());
            }
        }
    }
    if (violations != cqt_count) report.fail("CQT violation count disagrees with the trace");
}

}  // namespace fabsched::test
