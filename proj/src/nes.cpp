#include "fabsched/nes.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include "fabsched/dispatch.hpp"
#include "fabsched/objective.hpp"
#include "fabsched/rng.hpp"
#include "fabsched/sim.hpp"

namespace fabsched {

void NesConfig::check() const {
    if (population < 2) throw std::invalid_argument("NES population must be at least 2");
    if (!(sigma > 0)) throw std::invalid_argument("NES sigma must be positive");
    if (!(sigma_decay > 0 && sigma_decay <= 1)) throw std::invalid_argument("NES sigma decay must lie in (0, 1]");
    if (iterations < 0) throw std::invalid_argument("NES iteration count must be non-negative");
    if (antithetic && population % 2 != 0) throw std::invalid_argument("antithetic sampling needs an even population");
}

double sigma_at(const NesConfig& cfg, int t) { return std::pow(cfg.sigma_decay, t) * cfg.sigma; }

double cosine_lr(const NesConfig& cfg, int i) {
    if (i < 0 || i > cfg.iterations) {
        throw std::out_of_range("cosine_lr: iteration " + std::to_string(i) + " outside [0, " +
                                std::to_string(cfg.iterations) + "]");
    }
    if (cfg.iterations == 0) return cfg.lr_max;
    return 0.5 * cfg.lr_max *
           (1.0 + std::cos(static_cast<double>(i) * std::numbers::pi / static_cast<double>(cfg.iterations)));
}

std::vector<double> centered_ranks(std::span<const double> fitness) {
    const std::size_t n = fitness.size();
    std::vector<double> out(n, 0.0);
    if (n < 2) return out;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fitness[a] < fitness[b]; });
    for (std::size_t lo = 0; lo < n;) {
        std::size_t hi = lo + 1;
        while (hi < n && fitness[idx[hi]] == fitness[idx[lo]]) ++hi;
        const double mean_rank = 0.5 * static_cast<double>(lo + hi - 1);
        for (std::size_t k = lo; k < hi; ++k) out[idx[k]] = mean_rank / static_cast<double>(n - 1) - 0.5;
        lo = hi;
    }
    return out;
}

NoiseMatrix draw_noise(std::size_t dim, int population, std::uint64_t seed, bool antithetic) {
    NoiseMatrix eps(static_cast<std::size_t>(population), std::vector<double>(dim));
    for (int i = 0; i < population; ++i) {
        auto& row = eps[static_cast<std::size_t>(i)];
        if (antithetic && i % 2 == 1) {
            const auto& twin = eps[static_cast<std::size_t>(i - 1)];
            for (std::size_t k = 0; k < dim; ++k) row[k] = -twin[k];
            continue;
        }
        CounterStream rng(seed, "nes_noise", static_cast<std::uint64_t>(antithetic ? i / 2 : i));
        for (double& x : row) x = rng.normal();
    }
    return eps;
}

std::vector<double> combine_gradient(std::span<const double> fitness, const NoiseMatrix& noise, double sigma,
                                     FitnessShaping shaping) {
    if (fitness.size() != noise.size()) throw std::invalid_argument("combine_gradient: fitness and noise sizes differ");
    if (noise.empty()) return {};
    const std::vector<double> weights = shaping == FitnessShaping::centered_rank
                                            ? centered_ranks(fitness)
                                            : std::vector<double>(fitness.begin(), fitness.end());
    std::vector<double> grad(noise.front().size(), 0.0);
    for (std::size_t i = 0; i < noise.size(); ++i) {
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += weights[i] * noise[i][k];
    }
    const double scale = 1.0 / (sigma * static_cast<double>(noise.size()));
    for (double& g : grad) g *= scale;
    return grad;
}

GradientEstimate estimate_gradient(std::span<const double> theta, double sigma, int population, const FitnessFn& f,
                                   std::uint64_t noise_seed, FitnessShaping shaping, bool antithetic, int threads) {
    const NoiseMatrix eps = draw_noise(theta.size(), population, noise_seed, antithetic);
    std::vector<double> fitness(static_cast<std::size_t>(population), 0.0);

    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        std::vector<double> probe(theta.size());
        for (int i = next++; i < population; i = next++) {
            try {
                const auto& e = eps[static_cast<std::size_t>(i)];
                for (std::size_t k = 0; k < probe.size(); ++k) probe[k] = theta[k] + sigma * e[k];
                fitness[static_cast<std::size_t>(i)] = f(probe);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int workers = std::clamp(threads, 1, population);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    for (int i = 0; i < population; ++i) {
        if (!std::isfinite(fitness[static_cast<std::size_t>(i)])) {
            throw NonFiniteFitness("non-finite fitness for population member " + std::to_string(i) +
                                   " (noise seed " + std::to_string(noise_seed) + ")");
        }
    }
    return {combine_gradient(fitness, eps, sigma, shaping), std::move(fitness)};
}

void adam_step(AdamState& state, std::span<double> theta, std::span<const double> grad, double lr,
               const NesConfig& cfg) {
    if (theta.size() != grad.size() || state.m.size() != theta.size() || state.v.size() != theta.size()) {
        throw std::invalid_argument("adam_step: shape mismatch");
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < theta.size(); ++k) {
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * grad[k];
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
        const double m_hat = state.m[k] / c1;
        const double v_hat = state.v[k] / c2;
        theta[k] += lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

OptimizeResult nes_optimize(std::vector<double> theta, const SeededFitnessFn& f, const NesConfig& cfg,
                            const IterationCallback& on_iteration) {
    cfg.check();
    const int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    OptimizeResult r;
    AdamState adam(theta.size());
    for (int i = 0; i < cfg.iterations; ++i) {
        NesHistoryRow row;
        row.iteration = i;
        row.sigma = sigma_at(cfg, i);
        row.lr = cosine_lr(cfg, i);
        row.center_fitness = f(theta, cfg.eval_seed);
        const std::uint64_t rollout_seed = mix_seed(mix_seed(cfg.master_seed, fnv1a64("rollout")), i);
        const std::uint64_t noise_seed = mix_seed(mix_seed(cfg.master_seed, fnv1a64("noise")), i);
        const GradientEstimate est = estimate_gradient(
            theta, row.sigma, cfg.population, [&](std::span<const double> th) { return f(th, rollout_seed); },
            noise_seed, cfg.shaping, cfg.antithetic, threads);
        row.mean_fitness = std::accumulate(est.fitness.begin(), est.fitness.end(), 0.0) /
                           static_cast<double>(est.fitness.size());
        row.max_fitness = *std::max_element(est.fitness.begin(), est.fitness.end());
        adam_step(adam, theta, est.gradient, row.lr, cfg);
        r.history.push_back(row);
        if (on_iteration) on_iteration(row, theta);
    }
    r.final_center_fitness = f(theta, cfg.eval_seed);
    r.theta = std::move(theta);
    return r;
}

std::vector<std::size_t> free_parameter_indices(const PolicyParams& p) {
    std::vector<std::size_t> out;
    const auto& enc = p.info(Block::encoding);
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p.frozen_encoding && k >= enc.offset && k < enc.offset + enc.size()) continue;
        out.push_back(k);
    }
    return out;
}

double policy_fitness(const Scenario& s, const PolicyParams& p, const Normalizer& normalizer, Minutes horizon,
                      std::uint64_t seed) {
    PolicyDispatcher agent(p, normalizer);
    RunOptions opts;
    opts.trace_level = TraceLevel::off;
    const RunResult r = run(s, seed, agent, horizon, opts);
    return -total_cost(r.state, ObjectiveConfig::from(s)).total;
}

TrainResult train(const Scenario& s, const PolicyParams& pretrained, const Normalizer& normalizer,
                  const NesConfig& cfg, const TrainCallback& on_iteration) {
    const std::vector<std::size_t> free = free_parameter_indices(pretrained);
    auto inject = [&](std::span<const double> theta) {
        PolicyParams p = pretrained;
        auto w = p.flat();
        for (std::size_t k = 0; k < free.size(); ++k) w[free[k]] = theta[k];
        return p;
    };
    std::vector<double> theta0(free.size());
    for (std::size_t k = 0; k < free.size(); ++k) theta0[k] = pretrained.flat()[free[k]];

    const SeededFitnessFn fitness = [&](std::span<const double> theta, std::uint64_t seed) {
        return policy_fitness(s, inject(theta), normalizer, cfg.horizon, seed);
    };
    IterationCallback cb;
    if (on_iteration) {
        cb = [&](const NesHistoryRow& row, std::span<const double> theta) { on_iteration(row, inject(theta)); };
    }
    OptimizeResult r = nes_optimize(std::move(theta0), fitness, cfg, cb);
    return {inject(r.theta), std::move(r.history), -r.final_center_fitness};
}

std::string history_csv(const std::vector<NesHistoryRow>& rows) {
    std::ostringstream os;
    os.precision(17);
    os << "iteration,sigma,lr,mean_fitness,max_fitness,center_cost\n";
    for (const auto& r : rows) {
        os << r.iteration << ',' << r.sigma << ',' << r.lr << ',' << r.mean_fitness << ',' << r.max_fitness << ','
           << -r.center_fitness << '\n';
    }
    return os.str();
}

}  // namespace fabsched
