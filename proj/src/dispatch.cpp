#include "fabsched/dispatch.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

namespace fabsched {

std::string_view to_string(TieBreakRule r) {
    switch (r) {
    case TieBreakRule::FIFO:
        return "fifo";
    case TieBreakRule::CR:
        return "cr";
    case TieBreakRule::SPT:
        return "spt";
    case TieBreakRule::SRPT:
        return "srpt";
    case TieBreakRule::EDD:
        return "edd";
    case TieBreakRule::LS:
        return "ls";
    }
    return "fifo";
}

bool HierarchyKey::before(const HierarchyKey& o) const {
    if (active_cqt != o.active_cqt) return active_cqt;
    if (priority != o.priority) return priority > o.priority;
    if (setup_free != o.setup_free) return setup_free;
    if (rule_key != o.rule_key) return rule_key < o.rule_key;
    return lot < o.lot;
}

HierarchyKey hierarchy_key(TieBreakRule rule, const FabState& st, LotId id) {
    const Lot& l = st.lot(id);
    const RouteStep& step = st.current_step(l);
    HierarchyKey k;
    k.lot = id;
    k.active_cqt = l.cqt_deadline.has_value();
    k.priority = rank(l.priority);
    for (const auto& m : st.group_machines(step.group_id)) {
        if (!machine_accepts(st, m, l)) continue;
        if (m.status == MachineStatus::holding || setup_time(st, m, step) == 0) {
            k.setup_free = true;
            break;
        }
    }
    const double remaining = static_cast<double>(st.lot_remaining_work(l));
    const double slack = static_cast<double>(l.due_date - st.clock);
    switch (rule) {
    case TieBreakRule::FIFO:
        k.rule_key = static_cast<double>(l.queue_entry_time);
        break;
    case TieBreakRule::CR:
        k.rule_key = slack / std::max(remaining, 1.0);
        break;
    case TieBreakRule::SPT:
        k.rule_key = static_cast<double>(step.mean_proc_time);
        break;
    case TieBreakRule::SRPT:
        k.rule_key = remaining;
        break;
    case TieBreakRule::EDD:
        k.rule_key = static_cast<double>(l.due_date);
        break;
    case TieBreakRule::LS:
        k.rule_key = slack - remaining;
        break;
    }
    return k;
}

std::vector<LotId> hierarchical_order(TieBreakRule rule, const FabState& st, std::span<const LotId> legal) {
    std::vector<HierarchyKey> keys;
    keys.reserve(legal.size());
    for (LotId id : legal) keys.push_back(hierarchy_key(rule, st, id));
    std::sort(keys.begin(), keys.end(), [](const HierarchyKey& a, const HierarchyKey& b) { return a.before(b); });
    std::vector<LotId> out;
    out.reserve(keys.size());
    for (const auto& k : keys) out.push_back(k.lot);
    return out;
}

std::string HierarchicalDispatcher::name() const { return std::string(to_string(rule_)); }

LotBatch build_batch(const FabState& st, std::span<const LotId> lots, const Normalizer& normalizer) {
    LotBatch b;
    b.features.resize(static_cast<Eigen::Index>(lots.size()), kModelDim);
    b.family.reserve(lots.size());
    for (std::size_t i = 0; i < lots.size(); ++i) {
        const auto [x, fam] = normalize(normalizer, extract(st, lots[i]));
        for (int c = 0; c < kModelDim; ++c) b.features(static_cast<Eigen::Index>(i), c) = x[static_cast<std::size_t>(c)];
        b.family.push_back(fam);
    }
    return b;
}

std::vector<LotId> PolicyDispatcher::order(const FabState& st, std::span<const LotId> legal) const {
    std::vector<LotId> out(legal.begin(), legal.end());
    if (out.size() <= 1) return out;
    const Eigen::VectorXd scores = forward_policy(params_, build_batch(st, legal, normalizer_));
    std::vector<std::size_t> idx(out.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double sa = scores(static_cast<Eigen::Index>(a));
        const double sb = scores(static_cast<Eigen::Index>(b));
        if (sa != sb) return sa > sb;
        return legal[a] < legal[b];
    });
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = legal[idx[i]];
    return out;
}

std::vector<std::string> heuristic_names() {
    std::vector<std::string> out;
    for (TieBreakRule r : kAllRules) out.emplace_back(to_string(r));
    return out;
}

std::optional<TieBreakRule> rule_from_name(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (TieBreakRule r : kAllRules) {
        if (lower == to_string(r)) return r;
    }
    return std::nullopt;
}

std::unique_ptr<Dispatcher> make_dispatcher(std::string_view name, const std::optional<Normalizer>& normalizer) {
    if (auto rule = rule_from_name(name)) return std::make_unique<HierarchicalDispatcher>(*rule);
    constexpr std::string_view agent_prefix = "agent:";
    if (name.starts_with(agent_prefix)) {
        ParamsFile file = load_params(std::filesystem::path(std::string(name.substr(agent_prefix.size()))));
        std::optional<Normalizer> norm = file.normalizer ? file.normalizer : normalizer;
        if (!norm) throw std::invalid_argument("agent parameters carry no normalizer and none was given");
        return std::make_unique<PolicyDispatcher>(std::move(file.params), *norm);
    }
    std::string valid;
    for (const auto& n : heuristic_names()) valid += n + ", ";
    throw UnknownDispatcherError("unknown dispatcher '" + std::string(name) + "'; valid names: " + valid +
                                 "agent:<params-path>");
}

}  // namespace fabsched
