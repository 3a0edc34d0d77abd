#include "fabsched/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace fabsched {

namespace {

Minutes round_minutes(double x) { return static_cast<Minutes>(std::llround(x)); }

Minutes at_least_one(double x) { return std::max<Minutes>(1, round_minutes(x)); }

void record(FabState& st, TraceRecord r, TraceLevel needed) {
    if (st.trace_level >= needed && st.trace_level != TraceLevel::off) st.trace.push_back(std::move(r));
}

void remove_from_queue(FabState& st, GroupId g, LotId id) {
    auto& q = st.queues[static_cast<std::size_t>(g)];
    auto it = std::find(q.begin(), q.end(), id);
    if (it != q.end()) q.erase(it);
}

void finish_lot(FabState& st, Lot& l) {
    l.completion_time = st.clock;
    l.status = LotStatus::finished;
    l.machine = -1;
    st.finished_lots.push_back(l.lot_id);
    TraceRecord r;
    r.time = st.clock;
    r.kind = TraceKind::lot_complete;
    r.lot = l.lot_id;
    r.product = l.product_id;
    r.priority = l.priority;
    r.start = l.release_time;
    r.end = l.due_date;
    record(st, std::move(r), TraceLevel::outcomes);
}

void enqueue(FabState& st, Lot& l) {
    l.status = LotStatus::queued;
    l.machine = -1;
    l.queue_entry_time = st.clock;
    st.queues[static_cast<std::size_t>(st.current_step(l).group_id)].push_back(l.lot_id);
}

/// Lot reaches the queue of its current step, resolving metrology skips on entry.
void arrive(FabState& st, Lot& l) {
    const auto& route = st.product(l.product_id).route;
    while (true) {
        const auto& step = route[static_cast<std::size_t>(l.step_index)];
        if (step.skip_probability > 0.0 && st.skip_stream.bernoulli(step.skip_probability)) {
            TraceRecord r;
            r.time = st.clock;
            r.kind = TraceKind::skip;
            r.lot = l.lot_id;
            r.product = l.product_id;
            r.step = l.step_index;
            record(st, std::move(r), TraceLevel::full);
            // A skipped step is never started, so a pending CQT has nothing left to constrain.
            l.cqt_deadline.reset();
            ++l.step_index;
            if (l.step_index == static_cast<int>(route.size())) {
                finish_lot(st, l);
                return;
            }
            continue;
        }
        enqueue(st, l);
        return;
    }
}

Lot make_lot(FabState& st, ProductId pid, Minutes release) {
    const auto& p = st.product(pid);
    Lot l;
    l.lot_id = static_cast<LotId>(st.lots.size());
    l.product_id = pid;
    const double u = st.lot_attr_stream.uniform();
    double acc = 0.0;
    l.priority = Priority::regular;
    for (Priority pr : kAllPriorities) {
        acc += p.priority_mix[static_cast<std::size_t>(rank(pr))];
        if (u < acc) {
            l.priority = pr;
            break;
        }
    }
    l.wafer_count = static_cast<int>(st.lot_attr_stream.uniform_int(p.wafer_min, p.wafer_max));
    l.release_time = release;
    l.due_date = release + round_minutes(p.flow_factor * static_cast<double>(p.raw_processing_time()));
    return l;
}

Minutes op_duration(const RouteStep& step, const Lot& l) {
    if (!step.per_wafer) return step.mean_proc_time;
    return at_least_one(static_cast<double>(step.mean_proc_time) * l.wafer_count / kNominalWafers);
}

bool same_operation(const Lot& a, const Lot& b) {
    return a.product_id == b.product_id && a.step_index == b.step_index;
}

void start_operation(FabState& st, MachineState& m, std::vector<LotId> batch) {
    const Lot& head = st.lot(batch.front());
    const RouteStep& step = st.current_step(head);
    const ToolGroup& g = st.group(m.group_id);

    const Minutes setup = setup_time(st, m, step);
    if (step.setup_id) m.current_setup = step.setup_id;
    Minutes proc = 0;
    for (LotId id : batch) proc = std::max(proc, op_duration(step, st.lot(id)));

    m.status = MachineStatus::busy;
    m.op_start = st.clock;
    m.setup_end = st.clock + setup;
    m.busy_until = m.setup_end + g.load_time + proc + g.unload_time;
    ++m.token;
    st.events.push(*m.busy_until, EventKind::op_complete, m.machine_id, m.token);

    for (LotId id : batch) {
        Lot& l = st.lot(id);
        if (l.status == LotStatus::queued) remove_from_queue(st, m.group_id, id);
        l.status = LotStatus::processing;
        l.machine = m.machine_id;
        l.total_wait += st.clock - l.queue_entry_time;
        if (l.cqt_deadline) {
            if (st.clock > *l.cqt_deadline) {
                ++st.cqt_violations;
                TraceRecord r;
                r.time = st.clock;
                r.kind = TraceKind::cqt_violation;
                r.lot = id;
                r.machine = m.machine_id;
                r.product = l.product_id;
                r.priority = l.priority;
                r.step = l.step_index;
                r.end = *l.cqt_deadline;
                record(st, std::move(r), TraceLevel::outcomes);
            }
            l.cqt_deadline.reset();
        }
        if (step.dedication == Dedication::bind) l.dedications[l.step_index] = m.machine_id;
    }
    m.current_batch = std::move(batch);
}

void hold_batch(FabState& st, MachineState& m, std::vector<LotId> batch) {
    const RouteStep& step = st.current_step(st.lot(batch.front()));
    for (LotId id : batch) {
        Lot& l = st.lot(id);
        if (l.status == LotStatus::queued) remove_from_queue(st, m.group_id, id);
        l.status = LotStatus::held;
        l.machine = m.machine_id;
    }
    if (m.status != MachineStatus::holding) {
        m.status = MachineStatus::holding;
        ++m.token;
        st.events.push(st.clock + std::max<Minutes>(1, step.mean_proc_time / 2), EventKind::batch_timeout,
                       m.machine_id, m.token);
    }
    m.current_batch = std::move(batch);
}

/// Held lots go back to their queue with their original entry time.
void release_held(FabState& st, MachineState& m) {
    for (LotId id : m.current_batch) {
        Lot& l = st.lot(id);
        l.status = LotStatus::queued;
        l.machine = -1;
        auto& q = st.queues[static_cast<std::size_t>(m.group_id)];
        q.push_back(id);
    }
    m.current_batch.clear();
    ++m.token;
}

void schedule_breakdown(FabState& st, MachineState& m) {
    const auto& g = st.group(m.group_id);
    if (!g.mtbf_mean) return;
    auto& rs = st.breakdown_streams[static_cast<std::size_t>(m.machine_id)];
    st.events.push(st.clock + at_least_one(rs.exponential(*g.mtbf_mean)), EventKind::breakdown, m.machine_id);
}

void begin_maintenance(FabState& st, MachineState& m) {
    const auto& g = st.group(m.group_id);
    m.maintenance_pending = false;
    m.status = MachineStatus::maintenance;
    st.events.push(st.clock + *g.maintenance_duration, EventKind::maintenance_end, m.machine_id);
}

void machine_freed(FabState& st, MachineState& m) {
    m.status = MachineStatus::idle;
    m.idle_since = st.clock;
    m.busy_until.reset();
    if (m.maintenance_pending) begin_maintenance(st, m);
}

void on_breakdown(FabState& st, MachineState& m) {
    const auto& g = st.group(m.group_id);
    if (m.status == MachineStatus::maintenance) {
        m.breakdown_pending = true;
        return;
    }
    auto& rs = st.breakdown_streams[static_cast<std::size_t>(m.machine_id)];
    const Minutes ttr = at_least_one(rs.exponential(*g.mttr_mean));
    if (m.status == MachineStatus::busy) {
        // Preempt-resume: the interrupted operation finishes ttr later.
        *m.busy_until += ttr;
        ++m.token;
        st.events.push(*m.busy_until, EventKind::op_complete, m.machine_id, m.token);
        m.down_while_busy = true;
    } else if (m.status == MachineStatus::holding) {
        release_held(st, m);
    }
    m.status = MachineStatus::down;
    st.events.push(st.clock + ttr, EventKind::repair, m.machine_id);
}

void on_repair(FabState& st, MachineState& m) {
    if (m.down_while_busy) {
        m.down_while_busy = false;
        m.status = MachineStatus::busy;
    } else {
        machine_freed(st, m);
    }
    schedule_breakdown(st, m);
}

void on_op_complete(FabState& st, MachineState& m) {
    if (st.trace_level == TraceLevel::full) {
        TraceRecord r;
        r.time = st.clock;
        r.kind = TraceKind::op_complete;
        r.machine = m.machine_id;
        const Lot& head = st.lot(m.current_batch.front());
        r.product = head.product_id;
        r.step = head.step_index;
        r.start = m.op_start;
        r.end = st.clock;
        r.lots = m.current_batch;
        st.trace.push_back(std::move(r));
    }
    const std::vector<LotId> batch = std::move(m.current_batch);
    m.current_batch.clear();
    machine_freed(st, m);

    for (LotId id : batch) {
        Lot& l = st.lot(id);
        const auto& route = st.product(l.product_id).route;
        const RouteStep& done = route[static_cast<std::size_t>(l.step_index)];
        if (done.cqt_limit_to_next) l.cqt_deadline = st.clock + *done.cqt_limit_to_next;
        ++l.step_index;
        l.machine = -1;
        if (l.step_index == static_cast<int>(route.size())) {
            finish_lot(st, l);
            continue;
        }
        const auto& next = route[static_cast<std::size_t>(l.step_index)];
        const auto from = static_cast<std::size_t>(st.group(done.group_id).family_id);
        const auto to = static_cast<std::size_t>(st.group(next.group_id).family_id);
        l.status = LotStatus::in_transport;
        st.events.push(st.clock + st.scenario->transport_delay[from][to], EventKind::transport_arrival, id);
    }
}

void on_release(FabState& st, ProductId pid) {
    Lot l = make_lot(st, pid, st.clock);
    st.lots.push_back(std::move(l));
    arrive(st, st.lots.back());
    const auto& p = st.product(pid);
    const double mean_gap = static_cast<double>(kMinutesPerDay) / p.release_rate;
    st.events.push(st.clock + round_minutes(st.release_stream.exponential(mean_gap)), EventKind::lot_release, pid);
}

void handle(FabState& st, const Event& e) {
    switch (e.kind) {
    case EventKind::op_complete: {
        auto& m = st.machine(e.entity);
        if (e.token == m.token && m.status == MachineStatus::busy) on_op_complete(st, m);
        break;
    }
    case EventKind::batch_timeout: {
        auto& m = st.machine(e.entity);
        if (e.token == m.token && m.status == MachineStatus::holding) {
            std::vector<LotId> batch = std::move(m.current_batch);
            m.current_batch.clear();
            start_operation(st, m, std::move(batch));
        }
        break;
    }
    case EventKind::transport_arrival:
        arrive(st, st.lot(e.entity));
        break;
    case EventKind::lot_release:
        on_release(st, e.entity);
        break;
    case EventKind::breakdown:
        on_breakdown(st, st.machine(e.entity));
        break;
    case EventKind::repair:
        on_repair(st, st.machine(e.entity));
        break;
    case EventKind::maintenance_start: {
        auto& m = st.machine(e.entity);
        const auto& g = st.group(m.group_id);
        st.events.push(e.time + *g.maintenance_period, EventKind::maintenance_start, m.machine_id);
        if (m.status == MachineStatus::idle || m.status == MachineStatus::holding) {
            if (m.status == MachineStatus::holding) release_held(st, m);
            begin_maintenance(st, m);
        } else {
            m.maintenance_pending = true;
        }
        break;
    }
    case EventKind::maintenance_end: {
        auto& m = st.machine(e.entity);
        machine_freed(st, m);
        if (m.breakdown_pending) {
            m.breakdown_pending = false;
            on_breakdown(st, m);
        }
        break;
    }
    }
}

void process_events_at(FabState& st, Minutes t) {
    while (!st.events.empty() && st.events.top().time == t) handle(st, st.events.pop());
}

bool any_legal(const FabState& st) {
    for (std::size_t g = 0; g < st.queues.size(); ++g) {
        if (st.queues[g].empty()) continue;
        bool open = false;
        for (const auto& m : st.group_machines(static_cast<GroupId>(g))) {
            if (m.status == MachineStatus::idle || m.status == MachineStatus::holding) open = true;
        }
        if (!open) continue;
        for (LotId id : st.queues[g]) {
            if (is_legal(st, st.lot(id))) return true;
        }
    }
    return false;
}

}  // namespace

FabState init(const Scenario& s, std::uint64_t seed, int initial_wip, Minutes horizon, TraceLevel trace_level) {
    FabState st;
    st.scenario = &s;
    st.seed = seed;
    st.horizon = horizon;
    st.trace_level = trace_level;
    st.release_stream = CounterStream(seed, "release");
    st.lot_attr_stream = CounterStream(seed, "lot-attributes");
    st.skip_stream = CounterStream(seed, "metrology-skip");

    st.queues.assign(s.tool_groups.size(), {});
    MachineId next = 0;
    for (const auto& g : s.tool_groups) {
        st.group_first_machine.push_back(next);
        for (int k = 0; k < g.machine_count; ++k) {
            MachineState m;
            m.machine_id = next++;
            m.group_id = g.group_id;
            if (!g.setups.empty()) m.current_setup = 0;
            st.breakdown_streams.emplace_back(seed, "breakdown", static_cast<std::uint64_t>(m.machine_id));
            st.machines.push_back(std::move(m));
        }
    }
    for (const auto& p : s.products) {
        std::vector<Minutes> suffix(p.route.size() + 1, 0);
        for (std::size_t k = p.route.size(); k-- > 0;) suffix[k] = suffix[k + 1] + p.route[k].mean_proc_time;
        st.remaining_work.push_back(std::move(suffix));
    }

    CounterStream wip_stream(seed, "initial-wip");
    double total_rate = 0.0;
    for (const auto& p : s.products) total_rate += p.release_rate;
    for (int i = 0; i < initial_wip; ++i) {
        ProductId pid = 0;
        if (total_rate > 0) {
            const double u = wip_stream.uniform() * total_rate;
            double acc = 0.0;
            pid = static_cast<ProductId>(s.products.size() - 1);
            for (const auto& p : s.products) {
                acc += p.release_rate;
                if (u < acc) {
                    pid = p.product_id;
                    break;
                }
            }
        } else {
            pid = static_cast<ProductId>(wip_stream.uniform_int(0, static_cast<std::int64_t>(s.products.size()) - 1));
        }
        const auto& p = s.products[static_cast<std::size_t>(pid)];
        const int step = static_cast<int>(wip_stream.uniform_int(0, static_cast<std::int64_t>(p.route.size()) - 1));
        const double done = static_cast<double>(p.raw_processing_time() - p.remaining_work(static_cast<std::size_t>(step)));
        const double stretch = 1.0 + wip_stream.uniform() * (p.flow_factor - 1.0);
        Lot l = make_lot(st, pid, -round_minutes(done * stretch));
        l.step_index = step;
        st.lots.push_back(std::move(l));
        // Placed lots are already waiting at their step; no skip draw applies.
        enqueue(st, st.lots.back());
    }

    for (const auto& p : s.products) {
        if (p.release_rate <= 0) continue;
        const double mean_gap = static_cast<double>(kMinutesPerDay) / p.release_rate;
        st.events.push(round_minutes(st.release_stream.exponential(mean_gap)), EventKind::lot_release, p.product_id);
    }
    CounterStream maintenance_phase(seed, "maintenance-phase");
    for (auto& m : st.machines) {
        schedule_breakdown(st, m);
        const auto& g = s.tool_groups[static_cast<std::size_t>(m.group_id)];
        if (g.maintenance_period) {
            st.events.push(maintenance_phase.uniform_int(0, *g.maintenance_period - 1), EventKind::maintenance_start,
                           m.machine_id);
        }
    }
    return st;
}

Minutes setup_time(const FabState& st, const MachineState& m, const RouteStep& step) {
    if (!step.setup_id) return 0;
    const auto& g = st.group(m.group_id);
    const auto to = static_cast<std::size_t>(*step.setup_id);
    if (m.current_setup == step.setup_id) return step.force_resetup ? g.changeover[to][to] : 0;
    if (!m.current_setup) return 0;
    return g.changeover[static_cast<std::size_t>(*m.current_setup)][to];
}

std::optional<MachineId> bound_machine(const FabState& st, const Lot& l) {
    const auto& route = st.product(l.product_id).route;
    const auto& step = route[static_cast<std::size_t>(l.step_index)];
    if (step.dedication != Dedication::reuse) return std::nullopt;
    for (int j = l.step_index - 1; j >= 0; --j) {
        const auto& prior = route[static_cast<std::size_t>(j)];
        if (prior.dedication == Dedication::bind && prior.group_id == step.group_id) {
            auto it = l.dedications.find(j);
            if (it == l.dedications.end()) return std::nullopt;  // bind step predates the run
            return it->second;
        }
    }
    return std::nullopt;
}

bool machine_accepts(const FabState& st, const MachineState& m, const Lot& l) {
    if (auto b = bound_machine(st, l); b && *b != m.machine_id) return false;
    if (m.status == MachineStatus::idle) return true;
    if (m.status != MachineStatus::holding || m.current_batch.empty()) return false;
    const auto& g = st.group(m.group_id);
    return static_cast<int>(m.current_batch.size()) < g.batch_max &&
           same_operation(st.lot(m.current_batch.front()), l);
}

bool is_legal(const FabState& st, const Lot& l) {
    if (l.status != LotStatus::queued) return false;
    const GroupId g = st.current_step(l).group_id;
    for (const auto& m : st.group_machines(g)) {
        if (machine_accepts(st, m, l)) return true;
    }
    return false;
}

std::vector<LotId> legal_lots(const FabState& st) {
    std::vector<LotId> out;
    for (const auto& q : st.queues) {
        for (LotId id : q) {
            if (is_legal(st, st.lot(id))) out.push_back(id);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<LotId> apply_hierarchy(const FabState& st, std::span<const LotId> agent_order) {
    std::vector<LotId> expected = legal_lots(st);
    std::vector<LotId> given(agent_order.begin(), agent_order.end());
    std::sort(given.begin(), given.end());
    if (given != expected) {
        throw DispatchError("dispatch order is not a permutation of the " + std::to_string(expected.size()) +
                            " legal lots");
    }
    std::vector<LotId> out(agent_order.begin(), agent_order.end());
    std::stable_sort(out.begin(), out.end(), [&st](LotId a, LotId b) {
        const Lot& la = st.lot(a);
        const Lot& lb = st.lot(b);
        const bool ca = la.cqt_deadline.has_value();
        const bool cb = lb.cqt_deadline.has_value();
        if (ca != cb) return ca;
        return rank(la.priority) > rank(lb.priority);
    });
    return out;
}

MachineId allocate(const FabState& st, const Lot& l) {
    std::vector<const MachineState*> candidates;
    const RouteStep& step = st.current_step(l);
    for (const auto& m : st.group_machines(step.group_id)) {
        if (machine_accepts(st, m, l)) candidates.push_back(&m);
    }
    if (candidates.empty()) throw DispatchError("allocate: lot " + std::to_string(l.lot_id) + " is not legal");

    // Rule 1: lot-to-lens dedication (machine_accepts already filtered to the bound machine).
    if (bound_machine(st, l)) return candidates.front()->machine_id;

    // Open batches waiting for this operation absorb the lot first.
    for (const auto* m : candidates) {
        if (m->status == MachineStatus::holding) return m->machine_id;
    }

    auto longest_idle = [](const std::vector<const MachineState*>& pool) {
        const MachineState* best = pool.front();
        for (const auto* m : pool) {
            if (m->idle_since < best->idle_since) best = m;
        }
        return best->machine_id;
    };

    if (!step.setup_id) {
        // Rule 2: prefer machines without an installed setup, then the longest waiting.
        std::vector<const MachineState*> bare;
        for (const auto* m : candidates) {
            if (!m->current_setup) bare.push_back(m);
        }
        return longest_idle(bare.empty() ? candidates : bare);
    }

    // Rule 3: a machine already holding the setup, otherwise the cheapest changeover.
    std::vector<const MachineState*> holders;
    for (const auto* m : candidates) {
        if (m->current_setup == step.setup_id) holders.push_back(m);
    }
    if (!holders.empty()) return longest_idle(holders);
    const MachineState* best = candidates.front();
    Minutes best_cost = setup_time(st, *best, step);
    for (const auto* m : candidates) {
        const Minutes c = setup_time(st, *m, step);
        if (c < best_cost) {
            best = m;
            best_cost = c;
        }
    }
    return best->machine_id;
}

void dispatch_step(FabState& st, std::span<const LotId> ordered) {
    if (!st.done) {
        ++st.decisions;
        if (st.trace_level == TraceLevel::full) {
            TraceRecord r;
            r.time = st.clock;
            r.kind = TraceKind::decision;
            r.lots.assign(ordered.begin(), ordered.end());
            st.trace.push_back(std::move(r));
        }
    }
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const LotId id = ordered[i];
        const Lot& l = st.lot(id);
        if (!is_legal(st, l)) continue;
        MachineState& m = st.machine(allocate(st, l));
        const ToolGroup& g = st.group(m.group_id);
        if (!g.is_batch()) {
            start_operation(st, m, {id});
            continue;
        }
        std::vector<LotId> batch = m.status == MachineStatus::holding ? m.current_batch : std::vector<LotId>{};
        batch.push_back(id);
        for (std::size_t j = i + 1; j < ordered.size() && static_cast<int>(batch.size()) < g.batch_max; ++j) {
            const Lot& other = st.lot(ordered[j]);
            if (other.status != LotStatus::queued || !same_operation(l, other)) continue;
            if (auto b = bound_machine(st, other); b && *b != m.machine_id) continue;
            batch.push_back(other.lot_id);
        }
        if (static_cast<int>(batch.size()) >= g.batch_min) {
            m.current_batch.clear();
            start_operation(st, m, std::move(batch));
        } else {
            hold_batch(st, m, std::move(batch));
        }
    }
    advance_to_decision(st);
}

bool advance_to_decision(FabState& st) {
    if (st.done) return false;
    if (!st.started) {
        st.started = true;
        if (st.clock < st.horizon) {
            process_events_at(st, st.clock);
            if (any_legal(st)) return true;
        }
    }
    while (true) {
        if (st.events.empty() || st.events.top().time >= st.horizon) {
            if (st.horizon != kNoHorizon) st.clock = std::max(st.clock, st.horizon);
            st.done = true;
            return false;
        }
        const Minutes t = st.events.top().time;
        if (t < st.clock) throw std::logic_error("event queue went back in time");
        st.clock = t;
        process_events_at(st, t);
        if (any_legal(st)) return true;
    }
}

RunResult run(const Scenario& s, std::uint64_t seed, const Dispatcher& dispatcher, Minutes horizon,
              const RunOptions& options) {
    if (horizon < 0) throw std::invalid_argument("run: horizon must be >= 0");
    RunResult result{init(s, seed, options.initial_wip.value_or(s.initial_wip), horizon, options.trace_level), {}, {}};
    FabState& st = result.state;
    advance_to_decision(st);
    while (!st.done) {
        const std::vector<LotId> legal = legal_lots(st);
        std::vector<LotId> order;
        if (options.time_decisions) {
            const auto t0 = std::chrono::steady_clock::now();
            order = dispatcher.order(st, legal);
            const auto t1 = std::chrono::steady_clock::now();
            result.decision_ns.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
        } else {
            order = dispatcher.order(st, legal);
        }
        dispatch_step(st, apply_hierarchy(st, order));
    }
    result.trace = std::move(st.trace);
    st.trace.clear();
    return result;
}

std::string_view to_string(TraceKind k) {
    switch (k) {
    case TraceKind::decision:
        return "decision";
    case TraceKind::op_complete:
        return "op_complete";
    case TraceKind::lot_complete:
        return "lot_complete";
    case TraceKind::cqt_violation:
        return "cqt_violation";
    case TraceKind::skip:
        return "skip";
    }
    return "decision";
}

std::string trace_record_to_json(const TraceRecord& r) {
    nlohmann::json j{{"t", r.time}, {"kind", std::string(to_string(r.kind))}};
    switch (r.kind) {
    case TraceKind::decision:
        j["order"] = r.lots;
        break;
    case TraceKind::op_complete:
        j["machine"] = r.machine;
        j["product"] = r.product;
        j["step"] = r.step;
        j["start"] = r.start;
        j["end"] = r.end;
        j["lots"] = r.lots;
        break;
    case TraceKind::lot_complete:
        j["lot"] = r.lot;
        j["product"] = r.product;
        j["priority"] = std::string(to_string(r.priority));
        j["release"] = r.start;
        j["due"] = r.end;
        break;
    case TraceKind::cqt_violation:
        j["lot"] = r.lot;
        j["machine"] = r.machine;
        j["step"] = r.step;
        j["deadline"] = r.end;
        break;
    case TraceKind::skip:
        j["lot"] = r.lot;
        j["product"] = r.product;
        j["step"] = r.step;
        break;
    }
    return j.dump();
}

void write_trace(const Trace& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trace file " + path.string());
    for (const auto& r : trace) out << trace_record_to_json(r) << '\n';
}

}  // namespace fabsched
