#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace fabsched {

/// Simulation time in integer minutes.
using Minutes = std::int64_t;

inline constexpr Minutes kMinutesPerDay = 1440;

using LotId = std::int32_t;
using MachineId = std::int32_t;
using GroupId = std::int32_t;
using FamilyId = std::int32_t;
using ProductId = std::int32_t;
using SetupId = std::int32_t;

enum class Priority : std::uint8_t { regular = 0, hot = 1, super_hot = 2 };

inline constexpr std::array<Priority, 3> kAllPriorities{Priority::regular, Priority::hot,
                                                        Priority::super_hot};

constexpr int rank(Priority p) { return static_cast<int>(p); }

std::string_view to_string(Priority p);
std::optional<Priority> priority_from_string(std::string_view s);

/// Lot type: the (product, priority class) pair that KPIs and the objective group by.
struct LotType {
    ProductId product = 0;
    Priority priority = Priority::regular;

    auto operator<=>(const LotType&) const = default;
};

std::string to_string(const LotType& t);
/// Inverse of to_string(LotType), e.g. "hot-2".
std::optional<LotType> lot_type_from_string(std::string_view s);

/// Per-class weights, indexed by rank(priority).
struct PriorityWeights {
    std::array<double, 3> values{1.0, 2.0, 4.0};

    double operator[](Priority p) const { return values[static_cast<std::size_t>(rank(p))]; }
    double& operator[](Priority p) { return values[static_cast<std::size_t>(rank(p))]; }

    bool operator==(const PriorityWeights&) const = default;
};

}  // namespace fabsched
