#include "fabsched/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fabsched {

FeatureVector LotFeatures::values() const {
    return {critical_ratio,   time_to_deadline, total_wait,        wait_since_last_op,
            remaining_dedications, priority_weight, remaining_work, min_setup_time,
            current_proc_time, compatible_idle_machines, batch_min, batch_max};
}

LotFeatures extract(const FabState& st, LotId id) {
    const Lot& l = st.lot(id);
    if (!is_legal(st, l)) throw DispatchError("extract: lot " + std::to_string(id) + " is not legal");
    const RouteStep& step = st.current_step(l);
    const ToolGroup& g = st.group(step.group_id);
    const auto& route = st.product(l.product_id).route;

    LotFeatures f;
    const double remaining = static_cast<double>(st.lot_remaining_work(l));
    const double slack = static_cast<double>(l.due_date - st.clock);
    f.critical_ratio = slack / std::max(remaining, 1.0);
    f.time_to_deadline = slack;
    const Minutes waiting_now = st.clock - l.queue_entry_time;
    f.total_wait = static_cast<double>(l.total_wait + waiting_now);
    f.wait_since_last_op = static_cast<double>(waiting_now);
    int dedications = 0;
    for (std::size_t k = static_cast<std::size_t>(l.step_index); k < route.size(); ++k) {
        if (route[k].dedication != Dedication::none) ++dedications;
    }
    f.remaining_dedications = dedications;
    f.priority_weight = st.scenario->priority_weights[l.priority];
    f.remaining_work = remaining;

    Minutes min_setup = std::numeric_limits<Minutes>::max();
    int ready = 0;
    for (const auto& m : st.group_machines(step.group_id)) {
        if (!machine_accepts(st, m, l)) continue;
        const Minutes c = m.status == MachineStatus::holding ? 0 : setup_time(st, m, step);
        min_setup = std::min(min_setup, c);
        if (m.status == MachineStatus::idle && c == 0) ++ready;
    }
    f.min_setup_time = static_cast<double>(min_setup);
    f.current_proc_time = static_cast<double>(step.mean_proc_time);
    f.compatible_idle_machines = ready;
    f.batch_min = g.batch_min;
    f.batch_max = g.batch_max;
    f.family_index = g.family_id;
    return f;
}

void RunningStats::add(const FeatureVector& x) {
    ++count_;
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double delta = x[i] - mean_[i];
        mean_[i] += delta / n;
        m2_[i] += delta * (x[i] - mean_[i]);
    }
}

FeatureVector RunningStats::population_std() const {
    FeatureVector out{};
    if (count_ == 0) return out;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(std::max(0.0, m2_[i] / static_cast<double>(count_)));
    return out;
}

Normalizer Normalizer::from_stats(const RunningStats& stats, std::uint64_t seed) {
    Normalizer n;
    n.mean = stats.mean();
    n.std = stats.population_std();
    for (double& s : n.std) s = std::max(s, kStdFloor);
    n.sample_count = stats.count();
    n.source_seed = seed;
    return n;
}

Normalizer Normalizer::identity() {
    Normalizer n;
    n.std.fill(1.0);
    return n;
}

namespace {

class RecordingDispatcher final : public Dispatcher {
public:
    RecordingDispatcher(const Dispatcher& inner, RunningStats& stats) : inner_(inner), stats_(stats) {}

    std::vector<LotId> order(const FabState& st, std::span<const LotId> legal) const override {
        for (LotId id : legal) stats_.add(extract(st, id).values());
        return inner_.order(st, legal);
    }
    std::string name() const override { return inner_.name(); }

private:
    const Dispatcher& inner_;
    RunningStats& stats_;
};

}  // namespace

Normalizer fit_normalizer(const Scenario& s, const Dispatcher& heuristic, Minutes horizon, std::uint64_t seed) {
    RunningStats stats;
    RecordingDispatcher rec(heuristic, stats);
    RunOptions opts;
    opts.trace_level = TraceLevel::off;
    run(s, seed, rec, horizon, opts);
    if (stats.count() == 0) {
        throw std::runtime_error("fit_normalizer: rollout produced no legal-lot samples");
    }
    return Normalizer::from_stats(stats, seed);
}

std::pair<FeatureVector, FamilyId> normalize(const Normalizer& n, const LotFeatures& fs) {
    FeatureVector v = fs.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - n.mean[i]) / n.std[i];
    return {v, fs.family_index};
}

std::string normalizer_to_string(const Normalizer& n) {
    nlohmann::json j{{"format", "fabsched-normalizer"},
                     {"version", 1},
                     {"mean", n.mean},
                     {"std", n.std},
                     {"sample_count", n.sample_count},
                     {"source_seed", n.source_seed}};
    return j.dump(2) + "\n";
}

Normalizer normalizer_from_string(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "fabsched-normalizer" || j.value("version", 0) != 1) {
        throw std::runtime_error("not a version-1 normalizer document");
    }
    Normalizer n;
    n.mean = j.at("mean").get<FeatureVector>();
    n.std = j.at("std").get<FeatureVector>();
    n.sample_count = j.at("sample_count").get<std::int64_t>();
    n.source_seed = j.at("source_seed").get<std::uint64_t>();
    for (double s : n.std) {
        if (!(s > 0)) throw std::runtime_error("normalizer std must be positive");
    }
    return n;
}

void save_normalizer(const Normalizer& n, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write normalizer file " + path.string());
    out << normalizer_to_string(n);
}

Normalizer load_normalizer(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open normalizer file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return normalizer_from_string(buf.str());
}

}  // namespace fabsched
