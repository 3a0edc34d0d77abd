#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

#include "fabsched/dispatcher.hpp"
#include "fabsched/sim.hpp"

namespace fabsched {

inline constexpr int kLotFeatureCount = 12;
using FeatureVector = std::array<double, kLotFeatureCount>;

/// Per-lot state representation. The first twelve entries are real-valued inputs;
/// the tool family index is kept apart and only feeds the learned encoding.
struct LotFeatures {
    double critical_ratio = 0;
    double time_to_deadline = 0;
    double total_wait = 0;
    double wait_since_last_op = 0;
    double remaining_dedications = 0;
    double priority_weight = 0;
    double remaining_work = 0;
    double min_setup_time = 0;
    double current_proc_time = 0;
    double compatible_idle_machines = 0;
    double batch_min = 0;
    double batch_max = 0;
    FamilyId family_index = 0;

    FeatureVector values() const;
    bool operator==(const LotFeatures&) const = default;
};

/// Features of a legal lot. Throws DispatchError for a lot that cannot start now.
LotFeatures extract(const FabState& st, LotId lot);

inline constexpr double kStdFloor = 1e-6;

/// Streaming mean / population variance (Welford).
class RunningStats {
public:
    void add(const FeatureVector& x);
    std::int64_t count() const { return count_; }
    FeatureVector mean() const { return mean_; }
    FeatureVector population_std() const;

private:
    std::int64_t count_ = 0;
    FeatureVector mean_{};
    FeatureVector m2_{};
};

struct Normalizer {
    FeatureVector mean{};
    FeatureVector std{};
    std::int64_t sample_count = 0;
    std::uint64_t source_seed = 0;

    static Normalizer from_stats(const RunningStats& stats, std::uint64_t seed);
    /// Mean 0, std 1: leaves features untouched.
    static Normalizer identity();

    bool operator==(const Normalizer&) const = default;
};

inline constexpr Minutes kNormalizerHorizon = 60 * kMinutesPerDay;

/// Feature statistics over every legal-lot record of a rollout under `heuristic`.
/// Throws std::runtime_error when the rollout produced no decision points.
Normalizer fit_normalizer(const Scenario& s, const Dispatcher& heuristic, Minutes horizon, std::uint64_t seed);

/// (f_i - mean_i) / std_i for the twelve real features; the family index passes through.
std::pair<FeatureVector, FamilyId> normalize(const Normalizer& n, const LotFeatures& fs);

void save_normalizer(const Normalizer& n, const std::filesystem::path& path);
Normalizer load_normalizer(const std::filesystem::path& path);
std::string normalizer_to_string(const Normalizer& n);
Normalizer normalizer_from_string(const std::string& text);

}  // namespace fabsched
