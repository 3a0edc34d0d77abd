#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <span>
#include <stdexcept>
#include <vector>

#include "fabsched/dispatcher.hpp"
#include "fabsched/rng.hpp"
#include "fabsched/scenario.hpp"
#include "fabsched/types.hpp"

namespace fabsched {

inline constexpr Minutes kNoHorizon = std::numeric_limits<Minutes>::max();

enum class LotStatus : std::uint8_t { queued, in_transport, held, processing, finished };

struct Lot {
    LotId lot_id = 0;
    ProductId product_id = 0;
    Priority priority = Priority::regular;
    Minutes release_time = 0;
    Minutes due_date = 0;
    int wafer_count = kNominalWafers;
    /// Index of the current (not yet started) route step; equals the route length once finished.
    int step_index = 0;
    Minutes queue_entry_time = 0;
    /// Waiting accumulated over completed queue visits.
    Minutes total_wait = 0;
    std::optional<Minutes> completion_time;
    /// bind step index -> machine chosen there.
    std::map<int, MachineId> dedications;
    std::optional<Minutes> cqt_deadline;
    LotStatus status = LotStatus::queued;
    MachineId machine = -1;

    LotType type() const { return {product_id, priority}; }
};

enum class MachineStatus : std::uint8_t { idle, busy, in_setup, down, maintenance, holding };

struct MachineState {
    MachineId machine_id = 0;
    GroupId group_id = 0;
    MachineStatus status = MachineStatus::idle;
    std::optional<SetupId> current_setup;
    Minutes idle_since = 0;
    std::optional<Minutes> busy_until;
    std::vector<LotId> current_batch;

    Minutes op_start = 0;
    Minutes setup_end = 0;
    /// Bumped whenever a pending op_complete or batch_timeout is superseded.
    std::uint32_t token = 0;
    bool down_while_busy = false;
    bool maintenance_pending = false;
    bool breakdown_pending = false;

    /// Stored status, refined to in_setup while the changeover part of an operation runs.
    MachineStatus status_at(Minutes t) const {
        if (status == MachineStatus::busy && t < setup_end) return MachineStatus::in_setup;
        return status;
    }
};

enum class EventKind : std::uint8_t {
    op_complete,
    repair,
    maintenance_end,
    batch_timeout,
    transport_arrival,
    lot_release,
    breakdown,
    maintenance_start,
};

struct Event {
    Minutes time = 0;
    EventKind kind = EventKind::op_complete;
    std::int32_t entity = 0;
    std::uint32_t token = 0;
    std::uint64_t seq = 0;

    /// Pop order: time, then kind rank, then entity id, then insertion order.
    friend bool operator>(const Event& a, const Event& b) {
        if (a.time != b.time) return a.time > b.time;
        if (a.kind != b.kind) return a.kind > b.kind;
        if (a.entity != b.entity) return a.entity > b.entity;
        return a.seq > b.seq;
    }
};

class EventQueue {
public:
    void push(Minutes time, EventKind kind, std::int32_t entity, std::uint32_t token = 0) {
        heap_.push(Event{time, kind, entity, token, next_seq_++});
    }
    bool empty() const { return heap_.empty(); }
    std::size_t size() const { return heap_.size(); }
    const Event& top() const { return heap_.top(); }
    Event pop() {
        Event e = heap_.top();
        heap_.pop();
        return e;
    }

private:
    std::priority_queue<Event, std::vector<Event>, std::greater<>> heap_;
    std::uint64_t next_seq_ = 0;
};

enum class TraceKind : std::uint8_t { decision, op_complete, lot_complete, cqt_violation, skip };

/// One trace line. Fields not meaningful for a kind keep their defaults.
struct TraceRecord {
    Minutes time = 0;
    TraceKind kind = TraceKind::decision;
    LotId lot = -1;
    MachineId machine = -1;
    ProductId product = -1;
    Priority priority = Priority::regular;
    int step = -1;
    /// op_complete: operation start. lot_complete: release time.
    Minutes start = 0;
    /// op_complete: operation end. lot_complete: due date. cqt_violation: the deadline.
    Minutes end = 0;
    /// decision: the final dispatch order. op_complete: the processed batch.
    std::vector<LotId> lots;

    bool operator==(const TraceRecord&) const = default;
};

using Trace = std::vector<TraceRecord>;

enum class TraceLevel : std::uint8_t {
    off,
    /// Lot completions and CQT violations only.
    outcomes,
    full,
};

struct FabState {
    const Scenario* scenario = nullptr;
    std::uint64_t seed = 0;
    Minutes clock = 0;
    Minutes horizon = kNoHorizon;
    bool started = false;
    bool done = false;

    EventQueue events;
    std::vector<MachineState> machines;
    /// Every released lot, indexed by lot id.
    std::vector<Lot> lots;
    std::vector<LotId> finished_lots;
    /// Lots waiting at each tool group, in arrival order.
    std::vector<std::vector<LotId>> queues;
    /// First machine id of each group; machines of a group are contiguous.
    std::vector<MachineId> group_first_machine;
    /// remaining_work[product][step]: sum of mean processing times from step to the end.
    std::vector<std::vector<Minutes>> remaining_work;

    CounterStream release_stream;
    CounterStream lot_attr_stream;
    CounterStream skip_stream;
    std::vector<CounterStream> breakdown_streams;

    TraceLevel trace_level = TraceLevel::full;
    Trace trace;
    std::int64_t cqt_violations = 0;
    std::int64_t decisions = 0;

    std::size_t released_count() const { return lots.size(); }
    std::size_t wip_count() const { return lots.size() - finished_lots.size(); }

    const Lot& lot(LotId id) const { return lots[static_cast<std::size_t>(id)]; }
    Lot& lot(LotId id) { return lots[static_cast<std::size_t>(id)]; }
    const MachineState& machine(MachineId id) const { return machines[static_cast<std::size_t>(id)]; }
    MachineState& machine(MachineId id) { return machines[static_cast<std::size_t>(id)]; }
    const ToolGroup& group(GroupId g) const { return scenario->tool_groups[static_cast<std::size_t>(g)]; }
    const Product& product(ProductId p) const { return scenario->products[static_cast<std::size_t>(p)]; }

    /// Route step the lot is waiting for (or processing).
    const RouteStep& current_step(const Lot& l) const {
        return product(l.product_id).route[static_cast<std::size_t>(l.step_index)];
    }
    /// e_l: mean processing time still ahead of the lot, current step included.
    Minutes lot_remaining_work(const Lot& l) const {
        return remaining_work[static_cast<std::size_t>(l.product_id)][static_cast<std::size_t>(l.step_index)];
    }
    std::span<const MachineState> group_machines(GroupId g) const {
        const auto first = static_cast<std::size_t>(group_first_machine[static_cast<std::size_t>(g)]);
        return {machines.data() + first, static_cast<std::size_t>(group(g).machine_count)};
    }
};

class DispatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fresh world at clock 0 with `initial_wip` lots spread over the routes and the
/// first release, breakdown and maintenance events scheduled.
FabState init(const Scenario& s, std::uint64_t seed, int initial_wip, Minutes horizon = kNoHorizon,
              TraceLevel trace_level = TraceLevel::full);

/// Changeover a machine needs before it can run `step`.
Minutes setup_time(const FabState& st, const MachineState& m, const RouteStep& step);

/// Whether `m` can take lot `l` right now (idle, or holding a compatible open batch),
/// honouring a reuse dedication.
bool machine_accepts(const FabState& st, const MachineState& m, const Lot& l);

/// Machine a reuse step is pinned to, if the lot has one.
std::optional<MachineId> bound_machine(const FabState& st, const Lot& l);

bool is_legal(const FabState& st, const Lot& l);

/// Lots whose current operation can start now, sorted by lot id.
std::vector<LotId> legal_lots(const FabState& st);

/// Stable re-sort of the agent order: active CQT first, then priority class.
/// Throws DispatchError when `agent_order` is not a permutation of the legal set.
std::vector<LotId> apply_hierarchy(const FabState& st, std::span<const LotId> agent_order);

/// Dedicated machine, else longest-idle machine for setup-free work, else a machine
/// already holding the setup, else the cheapest changeover. Ties go to the lowest id.
MachineId allocate(const FabState& st, const Lot& l);

/// Starts lots in order while resources remain, then advances to the next decision point.
void dispatch_step(FabState& st, std::span<const LotId> ordered);

/// Processes events until some lot is legal (returns true) or the horizon is reached
/// (returns false and marks the state done).
bool advance_to_decision(FabState& st);

struct RunOptions {
    /// Defaults to the scenario's own initial WIP.
    std::optional<int> initial_wip;
    TraceLevel trace_level = TraceLevel::full;
    bool time_decisions = false;
};

struct RunResult {
    FabState state;
    Trace trace;
    /// Wall-clock dispatcher latency per decision, nanoseconds (only with time_decisions).
    std::vector<std::int64_t> decision_ns;
};

RunResult run(const Scenario& s, std::uint64_t seed, const Dispatcher& dispatcher, Minutes horizon,
              const RunOptions& options = {});

std::string_view to_string(TraceKind k);
std::string trace_record_to_json(const TraceRecord& r);
void write_trace(const Trace& trace, const std::filesystem::path& path);

}  // namespace fabsched
