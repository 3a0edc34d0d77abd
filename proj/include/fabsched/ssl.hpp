#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fabsched/dispatcher.hpp"
#include "fabsched/features.hpp"
#include "fabsched/net.hpp"
#include "fabsched/scenario.hpp"

namespace fabsched {

/// One normalized lot batch per decision point of a heuristic rollout.
struct PretextDataset {
    std::vector<LotBatch> items;
    std::uint64_t seed = 0;
    std::string dispatcher;

    std::size_t size() const { return items.size(); }
    std::size_t lot_count() const;
};

inline constexpr Minutes kPretextHorizon = 60 * kMinutesPerDay;

/// Throws std::runtime_error when the rollout has no decision points.
PretextDataset collect_dataset(const Scenario& s, const Dispatcher& dispatcher, const Normalizer& normalizer,
                               Minutes horizon, std::uint64_t seed);

/// Cache file name for a dataset: scenario hash, dispatcher, horizon, seed and normalizer.
std::string dataset_cache_key(const Scenario& s, const std::string& dispatcher, Minutes horizon, std::uint64_t seed,
                              const Normalizer& normalizer);
void save_dataset(const std::filesystem::path& path, const PretextDataset& d);
/// Throws std::runtime_error on a wrong magic number, version or truncated file.
PretextDataset load_dataset(const std::filesystem::path& path);

/// collect_dataset through an on-disk cache in `cache_dir`.
PretextDataset collect_dataset_cached(const std::filesystem::path& cache_dir, const Scenario& s,
                                      const Dispatcher& dispatcher, const Normalizer& normalizer, Minutes horizon,
                                      std::uint64_t seed);

struct SslConfig {
    double lambda = 0.2;
    double learning_rate = 0.01;
    int max_epochs = 200;
    std::uint64_t shuffle_seed = 0;
    /// Stop once the epoch-mean loss improves by less than this fraction.
    double tolerance = 1e-4;
};

struct PretextResult {
    /// The trained pretext network, classifier head included.
    PolicyParams pretext;
    /// Fresh policy weights carrying the trained encoding, flagged frozen.
    PolicyParams downstream;
    std::vector<double> epoch_loss;
    /// Frobenius norm of the encoding after each epoch.
    std::vector<double> encoding_norm;
};

/// Plain SGD on the pretext loss, one decision point per step. Throws std::runtime_error
/// on an empty dataset or a non-finite loss.
PretextResult train_pretext(const PretextDataset& d, const PolicyParams& init, const SslConfig& cfg);

/// Fraction of lots whose most probable family is their own. 0 for an empty dataset.
double pretext_accuracy(const PolicyParams& p, const PretextDataset& d);

}  // namespace fabsched
