#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>

#include "fabsched/dispatch.hpp"
#include "fabsched/ssl.hpp"
#include "support.hpp"

using namespace fabsched;

namespace {

const Normalizer& fitted() {
    static const Normalizer n = fit_normalizer(test::minifab(), *make_dispatcher("fifo"), kNormalizerHorizon, 11);
    return n;
}

const PretextDataset& month_dataset() {
    static const PretextDataset d =
        collect_dataset(test::minifab(), *make_dispatcher("fifo"), fitted(), 30 * kMinutesPerDay, 5);
    return d;
}

SslConfig no_early_stop(int epochs) {
    SslConfig cfg;
    cfg.max_epochs = epochs;
    cfg.tolerance = -std::numeric_limits<double>::infinity();
    return cfg;
}

}  // namespace

TEST_CASE("dataset collection") {
    const PretextDataset& d = month_dataset();
    const int families = test::minifab().family_count();
    REQUIRE(d.size() > 0);
    CHECK(d.seed == 5);
    CHECK(d.dispatcher == "fifo");
    for (const auto& b : d.items) {
        CHECK(b.size() > 0);
        CHECK(b.features.cols() == kModelDim);
        for (FamilyId f : b.family) CHECK((f >= 0 && f < families));
    }
    const PretextDataset again =
        collect_dataset(test::minifab(), *make_dispatcher("fifo"), fitted(), 30 * kMinutesPerDay, 5);
    REQUIRE(again.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(again.items[i].features == d.items[i].features);
        CHECK(again.items[i].family == d.items[i].family);
    }
    CHECK_THROWS_AS(collect_dataset(test::minifab(), *make_dispatcher("fifo"), Normalizer::identity(), 0, 5),
                    std::runtime_error);
}

TEST_CASE("dataset files round-trip and the cache reuses them") {
    const auto dir = test::scratch_dir("ssl-cache");
    const PretextDataset& d = month_dataset();
    save_dataset(dir / "d.bin", d);
    const PretextDataset back = load_dataset(dir / "d.bin");
    CHECK(back.seed == d.seed);
    CHECK(back.dispatcher == d.dispatcher);
    REQUIRE(back.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(back.items[i].features == d.items[i].features);
        CHECK(back.items[i].family == d.items[i].family);
    }

    const auto fifo = make_dispatcher("fifo");
    const auto first = collect_dataset_cached(dir / "cache", test::minifab(), *fifo, Normalizer::identity(),
                                              10 * kMinutesPerDay, 3);
    const auto key = dataset_cache_key(test::minifab(), "fifo", 10 * kMinutesPerDay, 3, Normalizer::identity());
    CHECK(std::filesystem::exists(dir / "cache" / key));
    const auto second = collect_dataset_cached(dir / "cache", test::minifab(), *fifo, Normalizer::identity(),
                                               10 * kMinutesPerDay, 3);
    CHECK(second.size() == first.size());
    CHECK(key != dataset_cache_key(test::minifab(), "fifo", 10 * kMinutesPerDay, 4, Normalizer::identity()));

    std::ofstream(dir / "junk.bin") << "nope";
    CHECK_THROWS_AS(load_dataset(dir / "junk.bin"), std::runtime_error);
}

TEST_CASE("lambda = 0 on one repeated batch never increases the loss") {
    PretextDataset d;
    for (int i = 0; i < 20; ++i) d.items.push_back(month_dataset().items[40]);
    const PretextResult r = train_pretext(d, init_params(2, test::minifab().family_count()), [] {
        SslConfig c = no_early_stop(10);
        c.lambda = 0;
        return c;
    }());
    REQUIRE(r.epoch_loss.size() == 10);
    for (std::size_t e = 1; e < r.epoch_loss.size(); ++e) CHECK(r.epoch_loss[e] <= r.epoch_loss[e - 1]);
}

TEST_CASE("a dominant penalty shrinks the encoding every epoch") {
    // Each step scales E by (1 - 2 lambda lr); the rate must keep that contraction
    // spread over several epochs instead of finishing inside the first one.
    SslConfig cfg = no_early_stop(10);
    cfg.lambda = 1e3;
    cfg.learning_rate = 1e-7;
    const PretextResult r = train_pretext(month_dataset(), init_params(3, test::minifab().family_count()), cfg);
    REQUIRE(r.encoding_norm.size() == 10);
    for (std::size_t e = 1; e < r.encoding_norm.size(); ++e) CHECK(r.encoding_norm[e] < r.encoding_norm[e - 1]);
    CHECK(r.encoding_norm.back() < 0.1 * init_params(3, test::minifab().family_count()).block(Block::encoding).norm());
}

TEST_CASE("a zero learning rate leaves the weights untouched") {
    SslConfig cfg = no_early_stop(3);
    cfg.learning_rate = 0;
    const PolicyParams init = init_params(4, test::minifab().family_count());
    const PretextResult r = train_pretext(month_dataset(), init, cfg);
    CHECK(r.pretext == init);
}

TEST_CASE("training output: frozen encoding over a fresh trunk") {
    SslConfig cfg;
    cfg.max_epochs = 3;
    const PolicyParams init = init_params(6, test::minifab().family_count());
    const PretextResult r = train_pretext(month_dataset(), init, cfg);
    CHECK(r.downstream.frozen_encoding);
    CHECK(r.downstream.block(Block::encoding) == r.pretext.block(Block::encoding));
    CHECK(r.downstream.alpha() == 1.0);
    CHECK(r.downstream.beta() == 0.0);
    CHECK(r.downstream.block(Block::query0) != r.pretext.block(Block::query0));
    CHECK(r.downstream.block(Block::query0) != init.block(Block::query0));

    const PretextResult again = train_pretext(month_dataset(), init, cfg);
    CHECK(again.downstream == r.downstream);
    CHECK(again.epoch_loss == r.epoch_loss);
    CHECK(pretext_accuracy(r.pretext, month_dataset()) == pretext_accuracy(again.pretext, month_dataset()));
}

TEST_CASE("pretext accuracy") {
    // Balanced synthetic data with a constant classifier: every lot gets the same
    // prediction, so accuracy is exactly one in F.
    const int families = 4;
    PolicyParams p = init_params(8, families);
    p.block(Block::cls_w).setZero();
    PretextDataset d;
    for (int k = 0; k < 10; ++k) {
        LotBatch b;
        b.features = RowMatrix::Random(families, kModelDim);
        for (int f = 0; f < families; ++f) b.family.push_back(static_cast<FamilyId>(f));
        d.items.push_back(b);
    }
    CHECK(pretext_accuracy(p, d) == doctest::Approx(1.0 / families));
    CHECK(pretext_accuracy(p, PretextDataset{}) == 0.0);
    CHECK_THROWS_AS(train_pretext(PretextDataset{}, p, SslConfig{}), std::runtime_error);
}

TEST_CASE("divergence is reported") {
    SslConfig cfg = no_early_stop(50);
    cfg.learning_rate = 1e6;
    CHECK_THROWS_AS(train_pretext(month_dataset(), init_params(9, test::minifab().family_count()), cfg),
                    std::runtime_error);
}
