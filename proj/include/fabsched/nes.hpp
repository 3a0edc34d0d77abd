#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fabsched/features.hpp"
#include "fabsched/net.hpp"
#include "fabsched/scenario.hpp"

namespace fabsched {

enum class FitnessShaping : std::uint8_t { raw, centered_rank };

struct NesConfig {
    int population = 64;
    double sigma = 0.005;
    double sigma_decay = 0.975;
    double lr_max = 0.01;
    int iterations = 40;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double epsilon = 1e-4;
    Minutes horizon = 180 * kMinutesPerDay;
    std::uint64_t master_seed = 0;
    /// Rollout seed used to score the center parameters every iteration.
    std::uint64_t eval_seed = 1'000'003;
    FitnessShaping shaping = FitnessShaping::centered_rank;
    bool antithetic = false;
    /// Worker threads for population rollouts; 0 means one per hardware thread.
    int threads = 0;

    /// Throws std::invalid_argument for a population below 2, non-positive sigma or decay outside (0, 1].
    void check() const;
};

double sigma_at(const NesConfig& cfg, int t);
/// Cosine-annealed step size. Throws std::out_of_range outside [0, iterations].
double cosine_lr(const NesConfig& cfg, int i);

/// Ranks scaled to [-0.5, 0.5]; tied values share their mean rank.
std::vector<double> centered_ranks(std::span<const double> fitness);

/// Perturbation directions, one row per population member.
using NoiseMatrix = std::vector<std::vector<double>>;

/// Member i draws from its own stream keyed by (seed, i). With antithetic sampling odd
/// members mirror their even predecessor.
NoiseMatrix draw_noise(std::size_t dim, int population, std::uint64_t seed, bool antithetic);

/// (1 / (sigma N)) sum_i shape(F_i) eps_i, accumulated in member order.
std::vector<double> combine_gradient(std::span<const double> fitness, const NoiseMatrix& noise, double sigma,
                                     FitnessShaping shaping);

class NonFiniteFitness : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fitness of a parameter vector. Must be safe to call from several threads at once.
using FitnessFn = std::function<double(std::span<const double> theta)>;

struct GradientEstimate {
    std::vector<double> gradient;
    std::vector<double> fitness;
};

/// Evaluates F(theta + sigma eps_i) for the population (in parallel) and combines the
/// results. Throws NonFiniteFitness naming the member and noise seed.
GradientEstimate estimate_gradient(std::span<const double> theta, double sigma, int population, const FitnessFn& f,
                                   std::uint64_t noise_seed, FitnessShaping shaping, bool antithetic = false,
                                   int threads = 1);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;

    explicit AdamState(std::size_t dim = 0) : m(dim, 0.0), v(dim, 0.0) {}
};

/// One bias-corrected Adam ascent step on theta.
void adam_step(AdamState& state, std::span<double> theta, std::span<const double> grad, double lr,
               const NesConfig& cfg);

struct NesHistoryRow {
    int iteration = 0;
    double sigma = 0;
    double lr = 0;
    double mean_fitness = 0;
    double max_fitness = 0;
    /// Fitness of the center parameters before this iteration's update.
    double center_fitness = 0;
};

struct OptimizeResult {
    std::vector<double> theta;
    std::vector<NesHistoryRow> history;
    /// Fitness of the final center.
    double final_center_fitness = 0;
};

/// Fitness under a given rollout seed: members of one iteration share that seed.
using SeededFitnessFn = std::function<double(std::span<const double> theta, std::uint64_t rollout_seed)>;
using IterationCallback = std::function<void(const NesHistoryRow&, std::span<const double> theta)>;

/// The generic NES loop over a flat vector: estimate, Adam step, repeat for cfg.iterations.
OptimizeResult nes_optimize(std::vector<double> theta, const SeededFitnessFn& f, const NesConfig& cfg,
                            const IterationCallback& on_iteration = {});

/// Offsets of the parameters NES may change: everything but a frozen encoding.
std::vector<std::size_t> free_parameter_indices(const PolicyParams& p);

/// Negated total cost of one rollout under a policy dispatcher.
double policy_fitness(const Scenario& s, const PolicyParams& p, const Normalizer& normalizer, Minutes horizon,
                      std::uint64_t seed);

struct TrainResult {
    PolicyParams params;
    std::vector<NesHistoryRow> history;
    double final_center_cost = 0;
};

using TrainCallback = std::function<void(const NesHistoryRow&, const PolicyParams&)>;

/// Policy training on a scenario. Fitness is the negated objective; history costs are
/// recorded as fitness values.
TrainResult train(const Scenario& s, const PolicyParams& pretrained, const Normalizer& normalizer,
                  const NesConfig& cfg, const TrainCallback& on_iteration = {});

std::string history_csv(const std::vector<NesHistoryRow>& rows);

}  // namespace fabsched
