#include "fabsched/ssl.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "fabsched/dispatch.hpp"
#include "fabsched/rng.hpp"
#include "fabsched/sim.hpp"

namespace fabsched {

std::size_t PretextDataset::lot_count() const {
    std::size_t n = 0;
    for (const auto& b : items) n += static_cast<std::size_t>(b.size());
    return n;
}

namespace {

class BatchRecorder final : public Dispatcher {
public:
    BatchRecorder(const Dispatcher& inner, const Normalizer& normalizer, std::vector<LotBatch>& out)
        : inner_(inner), normalizer_(normalizer), out_(out) {}

    std::vector<LotId> order(const FabState& st, std::span<const LotId> legal) const override {
        out_.push_back(build_batch(st, legal, normalizer_));
        return inner_.order(st, legal);
    }
    std::string name() const override { return inner_.name(); }

private:
    const Dispatcher& inner_;
    const Normalizer& normalizer_;
    std::vector<LotBatch>& out_;
};

constexpr char kDatasetMagic[4] = {'F', 'S', 'D', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("dataset file is truncated");
    return v;
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    CounterStream rng(seed, "ssl_shuffle", static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

}  // namespace

PretextDataset collect_dataset(const Scenario& s, const Dispatcher& dispatcher, const Normalizer& normalizer,
                               Minutes horizon, std::uint64_t seed) {
    PretextDataset d;
    d.seed = seed;
    d.dispatcher = dispatcher.name();
    BatchRecorder recorder(dispatcher, normalizer, d.items);
    RunOptions opts;
    opts.trace_level = TraceLevel::off;
    run(s, seed, recorder, horizon, opts);
    if (d.items.empty()) throw std::runtime_error("collect_dataset: rollout produced no decision points");
    return d;
}

std::string dataset_cache_key(const Scenario& s, const std::string& dispatcher, Minutes horizon, std::uint64_t seed,
                              const Normalizer& normalizer) {
    const std::uint64_t norm_hash = fnv1a64(normalizer_to_string(normalizer));
    char buf[160];
    std::snprintf(buf, sizeof buf, "pretext-%016llx-%s-%lld-%llu-%016llx.bin",
                  static_cast<unsigned long long>(scenario_hash(s)), dispatcher.c_str(), static_cast<long long>(horizon),
                  static_cast<unsigned long long>(seed), static_cast<unsigned long long>(norm_hash));
    return buf;
}

void save_dataset(const std::filesystem::path& path, const PretextDataset& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write dataset file " + path.string());
    out.write(kDatasetMagic, sizeof kDatasetMagic);
    put(out, kDatasetVersion);
    put(out, d.seed);
    put(out, static_cast<std::uint32_t>(d.dispatcher.size()));
    out.write(d.dispatcher.data(), static_cast<std::streamsize>(d.dispatcher.size()));
    put(out, static_cast<std::uint64_t>(d.items.size()));
    for (const auto& b : d.items) {
        put(out, static_cast<std::uint32_t>(b.size()));
        out.write(reinterpret_cast<const char*>(b.features.data()),
                  static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(b.features.size())));
        out.write(reinterpret_cast<const char*>(b.family.data()),
                  static_cast<std::streamsize>(sizeof(FamilyId) * b.family.size()));
    }
    if (!out) throw std::runtime_error("failed writing dataset file " + path.string());
}

PretextDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
    char magic[4];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kDatasetMagic, sizeof magic) != 0) {
        throw std::runtime_error(path.string() + " is not a pretext dataset");
    }
    if (get<std::uint32_t>(in) != kDatasetVersion) throw std::runtime_error("unsupported dataset version");
    PretextDataset d;
    d.seed = get<std::uint64_t>(in);
    d.dispatcher.resize(get<std::uint32_t>(in));
    in.read(d.dispatcher.data(), static_cast<std::streamsize>(d.dispatcher.size()));
    const auto count = get<std::uint64_t>(in);
    d.items.resize(count);
    for (auto& b : d.items) {
        const auto n = get<std::uint32_t>(in);
        b.features.resize(n, kModelDim);
        b.family.resize(n);
        in.read(reinterpret_cast<char*>(b.features.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(b.features.size())));
        in.read(reinterpret_cast<char*>(b.family.data()), static_cast<std::streamsize>(sizeof(FamilyId) * n));
        if (!in) throw std::runtime_error("dataset file is truncated");
    }
    return d;
}

PretextDataset collect_dataset_cached(const std::filesystem::path& cache_dir, const Scenario& s,
                                      const Dispatcher& dispatcher, const Normalizer& normalizer, Minutes horizon,
                                      std::uint64_t seed) {
    const auto path = cache_dir / dataset_cache_key(s, dispatcher.name(), horizon, seed, normalizer);
    if (std::filesystem::exists(path)) return load_dataset(path);
    PretextDataset d = collect_dataset(s, dispatcher, normalizer, horizon, seed);
    std::filesystem::create_directories(cache_dir);
    save_dataset(path, d);
    return d;
}

PretextResult train_pretext(const PretextDataset& d, const PolicyParams& init, const SslConfig& cfg) {
    if (d.items.empty()) throw std::runtime_error("train_pretext: empty dataset");
    if (cfg.lambda < 0) throw std::invalid_argument("train_pretext: lambda must be non-negative");
    PretextResult r{init, PolicyParams(init.families()), {}, {}};
    PolicyParams& p = r.pretext;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double total = 0;
        for (std::size_t i : shuffled(d.items.size(), cfg.shuffle_seed, epoch)) {
            const LotBatch& b = d.items[i];
            const PretextGradient g = backward_pretext(p, b, b.family, cfg.lambda);
            if (!std::isfinite(g.loss)) {
                throw std::runtime_error("train_pretext: non-finite loss in epoch " + std::to_string(epoch) +
                                         " at batch " + std::to_string(i) + "; lower the learning rate");
            }
            total += g.loss;
            auto w = p.flat();
            const auto dw = g.grad.flat();
            for (std::size_t k = 0; k < w.size(); ++k) w[k] -= cfg.learning_rate * dw[k];
        }
        const double mean = total / static_cast<double>(d.items.size());
        r.epoch_loss.push_back(mean);
        r.encoding_norm.push_back(p.block(Block::encoding).norm());
        if (epoch > 0) {
            const double prev = r.epoch_loss[r.epoch_loss.size() - 2];
            if (prev - mean < cfg.tolerance * std::abs(prev)) break;
        }
    }
    r.downstream = init_params(mix_seed(init.seed, fnv1a64("downstream")), init.families());
    r.downstream.seed = init.seed;
    r.downstream.block(Block::encoding) = p.block(Block::encoding);
    r.downstream.frozen_encoding = true;
    return r;
}

double pretext_accuracy(const PolicyParams& p, const PretextDataset& d) {
    std::size_t hits = 0;
    std::size_t total = 0;
    for (const auto& b : d.items) {
        const RowMatrix probs = forward_pretext(p, b);
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
            Eigen::Index best = 0;
            probs.row(i).maxCoeff(&best);
            if (static_cast<FamilyId>(best) == b.family[static_cast<std::size_t>(i)]) ++hits;
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace fabsched
