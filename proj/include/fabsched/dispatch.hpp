#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fabsched/dispatcher.hpp"
#include "fabsched/features.hpp"
#include "fabsched/net.hpp"
#include "fabsched/sim.hpp"

namespace fabsched {

enum class TieBreakRule : std::uint8_t { FIFO, CR, SPT, SRPT, EDD, LS };

inline constexpr std::array<TieBreakRule, 6> kAllRules{TieBreakRule::FIFO, TieBreakRule::CR,   TieBreakRule::SPT,
                                                       TieBreakRule::SRPT, TieBreakRule::EDD, TieBreakRule::LS};

std::string_view to_string(TieBreakRule r);

/// Sort key of one lot; lexicographically smaller dispatches first.
struct HierarchyKey {
    bool active_cqt = false;
    int priority = 0;
    /// Some accepting machine can start the lot without a changeover.
    bool setup_free = false;
    double rule_key = 0;
    LotId lot = 0;

    bool before(const HierarchyKey& o) const;
};

HierarchyKey hierarchy_key(TieBreakRule rule, const FabState& st, LotId lot);

/// CQT lots, then priority class, then setup avoidance, then the rule, then lot id.
std::vector<LotId> hierarchical_order(TieBreakRule rule, const FabState& st, std::span<const LotId> legal);

class HierarchicalDispatcher final : public Dispatcher {
public:
    explicit HierarchicalDispatcher(TieBreakRule rule) : rule_(rule) {}
    std::vector<LotId> order(const FabState& st, std::span<const LotId> legal) const override {
        return hierarchical_order(rule_, st, legal);
    }
    std::string name() const override;
    TieBreakRule rule() const { return rule_; }

private:
    TieBreakRule rule_;
};

/// Normalized feature batch of the given lots, in the given order.
LotBatch build_batch(const FabState& st, std::span<const LotId> lots, const Normalizer& normalizer);

/// Orders lots by descending network score, ties by lot id.
class PolicyDispatcher final : public Dispatcher {
public:
    PolicyDispatcher(PolicyParams params, Normalizer normalizer)
        : params_(std::move(params)), normalizer_(normalizer) {}
    std::vector<LotId> order(const FabState& st, std::span<const LotId> legal) const override;
    std::string name() const override { return "agent"; }
    const PolicyParams& params() const { return params_; }

private:
    PolicyParams params_;
    Normalizer normalizer_;
};

class UnknownDispatcherError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dispatcher names accepted by make_dispatcher, `agent:<path>` excluded.
std::vector<std::string> heuristic_names();
std::optional<TieBreakRule> rule_from_name(std::string_view name);

/// `fifo`, `cr`, `spt`, `srpt`, `edd`, `ls` or `agent:<params-path>`. An agent file without
/// an embedded normalizer uses `normalizer`; with neither it is an error.
std::unique_ptr<Dispatcher> make_dispatcher(std::string_view name,
                                            const std::optional<Normalizer>& normalizer = std::nullopt);

}  // namespace fabsched
