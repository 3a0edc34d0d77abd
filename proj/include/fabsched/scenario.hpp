#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fabsched/types.hpp"

namespace fabsched {

struct ToolFamily {
    FamilyId family_id = 0;
    std::string name;

    bool operator==(const ToolFamily&) const = default;
};

struct ToolGroup {
    GroupId group_id = 0;
    FamilyId family_id = 0;
    std::string name;
    int machine_count = 1;
    /// Setup identifiers are indices into this list.
    std::vector<std::string> setups;
    /// changeover[from][to] in minutes. The diagonal is only charged when a step forces
    /// a re-setup; keeping an installed setup is otherwise free.
    std::vector<std::vector<Minutes>> changeover;
    int batch_min = 1;
    int batch_max = 1;
    Minutes load_time = 0;
    Minutes unload_time = 0;
    std::optional<double> mtbf_mean;
    std::optional<double> mttr_mean;
    std::optional<Minutes> maintenance_period;
    std::optional<Minutes> maintenance_duration;

    bool is_batch() const { return batch_max > 1; }
    bool operator==(const ToolGroup&) const = default;
};

enum class Dedication : std::uint8_t { none, bind, reuse };

struct RouteStep {
    GroupId group_id = 0;
    /// Mean processing time for a nominal lot of kNominalWafers wafers.
    Minutes mean_proc_time = 1;
    bool per_wafer = false;
    std::optional<SetupId> setup_id;
    bool force_resetup = false;
    std::optional<Minutes> cqt_limit_to_next;
    bool metrology = false;
    double skip_probability = 0.0;
    Dedication dedication = Dedication::none;

    bool operator==(const RouteStep&) const = default;
};

/// Per-wafer steps scale their duration relative to this lot size.
inline constexpr int kNominalWafers = 25;

struct Product {
    ProductId product_id = 0;
    std::string name;
    std::vector<RouteStep> route;
    /// Mean lots released per day.
    double release_rate = 1.0;
    /// Probabilities for {regular, hot, super-hot}.
    std::array<double, 3> priority_mix{1.0, 0.0, 0.0};
    double flow_factor = 2.0;
    int wafer_min = kNominalWafers;
    int wafer_max = kNominalWafers;

    /// Sum of mean processing times over the whole route.
    Minutes raw_processing_time() const;
    /// Sum of mean processing times from `step` (inclusive) to the end.
    Minutes remaining_work(std::size_t step) const;

    bool operator==(const Product&) const = default;
};

inline constexpr int kScenarioSchemaVersion = 1;

struct Scenario {
    std::string name;
    std::vector<ToolFamily> families;
    std::vector<ToolGroup> tool_groups;
    std::vector<Product> products;
    /// transport_delay[from_family][to_family] in minutes.
    std::vector<std::vector<Minutes>> transport_delay;
    PriorityWeights priority_weights;
    double penalty = 10.0;
    /// Lots already in progress when a run starts.
    int initial_wip = 0;
    /// Tie-break rule of the scenario's own hierarchical baseline.
    std::string default_rule = "fifo";

    int family_count() const { return static_cast<int>(families.size()); }
    int machine_count() const;

    bool operator==(const Scenario&) const = default;
};

class ScenarioParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ScenarioValidationError : public std::runtime_error {
public:
    explicit ScenarioValidationError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const { return violations_; }

private:
    std::vector<std::string> violations_;
};

/// Every violated invariant, each message naming the offending entity. Empty iff valid.
std::vector<std::string> validate(const Scenario& s);

Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);
std::string scenario_to_string(const Scenario& s);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

/// Stable 64-bit digest of the canonical document form.
std::uint64_t scenario_hash(const Scenario& s);

struct GeneratorConfig {
    int families = 4;
    int groups_per_family = 3;
    int products = 3;
    int route_length = 50;
    std::uint64_t seed = 7;
    /// Target long-run utilization of the busiest group.
    double target_utilization = 0.85;
    double lots_per_day = 6.0;
    double flow_factor = 2.5;
    int initial_wip = 20;
};

inline constexpr int kMinGeneratedRouteLength = 6;

/// Desk-scale reentrant fab. Every route carries a CQT pair, a batch step, a skippable
/// metrology step and a bind/reuse dedication pair.
Scenario generate_minifab(const GeneratorConfig& cfg);

}  // namespace fabsched
