#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fabsched/net.hpp"
#include "fabsched/rng.hpp"
#include "oracles/attention_oracle.hpp"
#include "support.hpp"

using namespace fabsched;

namespace {

constexpr int kFamilies = 4;

LotBatch random_batch(std::uint64_t seed, int n, int families = kFamilies) {
    CounterStream rng(seed, "test-batch");
    LotBatch b;
    b.features.resize(n, kModelDim);
    for (Eigen::Index i = 0; i < b.features.size(); ++i) b.features.data()[i] = rng.normal();
    for (int i = 0; i < n; ++i) b.family.push_back(static_cast<FamilyId>(rng.uniform_int(0, families - 1)));
    return b;
}

PolicyParams random_params(std::uint64_t seed, double beta = 0.7) {
    PolicyParams p = init_params(seed, kFamilies);
    p.alpha() = 1.3;
    p.beta() = beta;
    return p;
}

test::Grid to_grid(const RowMatrix& m) {
    test::Grid g(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
    return g;
}

}  // namespace

TEST_CASE("initialization") {
    const PolicyParams p = init_params(9, kFamilies);
    CHECK(p.alpha() == 1.0);
    CHECK(p.beta() == 0.0);
    CHECK(p == init_params(9, kFamilies));
    CHECK_FALSE(p == init_params(10, kFamilies));
    CHECK_FALSE(p.frozen_encoding);
    for (int b = 0; b < kBlockCount; ++b) {
        const auto& info = p.info(static_cast<Block>(b));
        if (info.name == "alpha" || info.name == "beta") continue;
        int fan_in = info.rows;
        if (info.name == "ffn_b1" || info.name == "cls_b") fan_in = kModelDim;
        if (info.name == "ffn_b2" || info.name == "ffn_b3") fan_in = kFfnDim;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t k = 0; k < info.size(); ++k) CHECK(std::abs(p.flat()[info.offset + k]) <= bound);
    }
    // Manifest covers the flat vector without gaps.
    std::size_t expected = 0;
    for (const auto& info : p.manifest()) {
        CHECK(info.offset == expected);
        expected += info.size();
    }
    CHECK(expected == p.size());
}

TEST_CASE("encode adds the family row") {
    PolicyParams p(3);
    p.block(Block::encoding).row(1).setConstant(0.5);
    LotBatch b;
    b.features = RowMatrix::Ones(2, kModelDim);
    b.family = {0, 1};
    const RowMatrix s = encode(p, b);
    CHECK(s.row(0).isApprox(RowMatrix::Ones(1, kModelDim)));
    CHECK(s.row(1).isApprox(RowMatrix::Constant(1, kModelDim, 1.5)));
    b.family = {0, 3};
    CHECK_THROWS_AS(encode(p, b), std::out_of_range);
    b.family = {0, -1};
    CHECK_THROWS_AS(encode(p, b), std::out_of_range);
}

TEST_CASE("attention of a single lot is its projected value") {
    const PolicyParams p = random_params(1);
    const RowMatrix x = random_batch(2, 1).features;
    RowMatrix concat(1, kHeads * kHeadDim);
    concat.leftCols(kHeadDim) = x * p.block(Block::value0);
    concat.rightCols(kHeadDim) = x * p.block(Block::value1);
    CHECK(attention_forward(p, x).isApprox(concat * p.block(Block::out_proj), 1e-12));
}

TEST_CASE("zero value weights give zero attention") {
    PolicyParams p = random_params(3);
    p.block(Block::value0).setZero();
    p.block(Block::value1).setZero();
    CHECK(attention_forward(p, random_batch(4, 7).features).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("attention matches the scalar oracle") {
    for (int n : {2, 3, 9}) {
        const PolicyParams p = random_params(10 + static_cast<std::uint64_t>(n));
        const RowMatrix x = random_batch(20 + static_cast<std::uint64_t>(n), n).features;
        const auto got = to_grid(attention_forward(p, x));
        const auto want = test::oracle_attention(p, to_grid(x));
        for (std::size_t i = 0; i < got.size(); ++i)
            for (std::size_t d = 0; d < got[i].size(); ++d) CHECK(got[i][d] == doctest::Approx(want[i][d]).epsilon(1e-10));
    }
}

TEST_CASE("the trunk is permutation equivariant") {
    const PolicyParams p = random_params(5);
    const LotBatch b = random_batch(6, 8);
    LotBatch r = b;
    for (int i = 0; i < 8; ++i) {
        r.features.row(i) = b.features.row(7 - i);
        r.family[static_cast<std::size_t>(i)] = b.family[static_cast<std::size_t>(7 - i)];
    }
    const Eigen::VectorXd s = forward_policy(p, b);
    const Eigen::VectorXd t = forward_policy(p, r);
    const RowMatrix ps = forward_pretext(p, b);
    const RowMatrix pt = forward_pretext(p, r);
    for (int i = 0; i < 8; ++i) {
        CHECK(s(i) == doctest::Approx(t(7 - i)).epsilon(1e-12));
        CHECK(ps.row(i).isApprox(pt.row(7 - i), 1e-12));
    }
}

TEST_CASE("with beta = 0 a lot's score ignores the other lots") {
    const PolicyParams p = random_params(7, 0.0);
    const LotBatch b = random_batch(8, 5);
    const Eigen::VectorXd all = forward_policy(p, b);
    for (int i = 0; i < 5; ++i) {
        LotBatch one;
        one.features = b.features.row(i);
        one.family = {b.family[static_cast<std::size_t>(i)]};
        CHECK(forward_policy(p, one)(0) == doctest::Approx(all(i)).epsilon(1e-12));
    }
}

TEST_CASE("outputs have the right shape for any batch size") {
    const PolicyParams p = random_params(11);
    for (int n = 1; n <= 64; ++n) {
        const LotBatch b = random_batch(100 + static_cast<std::uint64_t>(n), n);
        const Eigen::VectorXd s = forward_policy(p, b);
        const RowMatrix probs = forward_pretext(p, b);
        REQUIRE(s.size() == n);
        REQUIRE(probs.rows() == n);
        REQUIRE(probs.cols() == kFamilies);
        CHECK(s.allFinite());
        for (int i = 0; i < n; ++i) CHECK(probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("a zero classifier predicts the uniform distribution") {
    PolicyParams p = random_params(12);
    p.block(Block::cls_w).setZero();
    p.block(Block::cls_b).setZero();
    const RowMatrix probs = forward_pretext(p, random_batch(13, 6));
    CHECK(probs.isApprox(RowMatrix::Constant(6, kFamilies, 1.0 / kFamilies), 1e-14));
    const LotBatch b = random_batch(13, 6);
    CHECK(pretext_loss(p, b, b.family, 0.0) == doctest::Approx(std::log(double(kFamilies))).epsilon(1e-12));
}

TEST_CASE("pretext gradient matches central differences") {
    const LotBatch b = random_batch(21, 6);
    for (double lambda : {0.0, 0.2}) {
        const PolicyParams p = random_params(22);
        const PretextGradient g = backward_pretext(p, b, b.family, lambda);
        CHECK(g.loss == doctest::Approx(pretext_loss(p, b, b.family, lambda)).epsilon(1e-12));
        const double h = 1e-5;
        for (const auto& info : p.manifest()) {
            CAPTURE(info.name);
            for (std::size_t k = 0; k < info.size(); ++k) {
                const std::size_t idx = info.offset + k;
                PolicyParams up = p;
                PolicyParams down = p;
                up.flat()[idx] += h;
                down.flat()[idx] -= h;
                const double fd = (pretext_loss(up, b, b.family, lambda) - pretext_loss(down, b, b.family, lambda)) / (2 * h);
                const double an = g.grad.flat()[idx];
                if (info.name.rfind("ffn_", 0) == 0) {
                    CHECK(an == 0.0);
                    CHECK(std::abs(fd) < 1e-9);
                    continue;
                }
                const double scale = std::max({std::abs(fd), std::abs(an), 1e-6});
                CHECK(std::abs(fd - an) / scale < 1e-4);
            }
        }
    }
}

TEST_CASE("gradient descent can overfit a single batch") {
    PolicyParams p = init_params(30, kFamilies);
    p.beta() = 0.5;
    const LotBatch b = random_batch(31, 12);
    const double before = pretext_loss(p, b, b.family, 0.0);
    for (int it = 0; it < 500; ++it) {
        const PretextGradient g = backward_pretext(p, b, b.family, 0.0);
        auto w = p.flat();
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= 0.1 * g.grad.flat()[k];
    }
    CHECK(pretext_loss(p, b, b.family, 0.0) < 0.1 * before);
    const RowMatrix probs = forward_pretext(p, b);
    for (int i = 0; i < b.size(); ++i) {
        Eigen::Index best = 0;
        probs.row(i).maxCoeff(&best);
        CHECK(best == b.family[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("label checks") {
    const PolicyParams p = random_params(40);
    const LotBatch b = random_batch(41, 3);
    CHECK_THROWS_AS(pretext_loss(p, b, std::vector<FamilyId>{0, 1}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(pretext_loss(p, b, std::vector<FamilyId>{0, 1, 9}, 0.0), std::out_of_range);
}

TEST_CASE("parameter files round-trip bit-exactly") {
    PolicyParams p = random_params(50);
    p.frozen_encoding = true;
    p.seed = 77;
    const ParamsFile back = params_from_string(params_to_string(p));
    CHECK(back.params == p);
    CHECK_FALSE(back.normalizer);

    const auto dir = test::scratch_dir("net-params");
    save_params(dir / "p.json", p, Normalizer::identity());
    const ParamsFile loaded = load_params(dir / "p.json");
    CHECK(loaded.params == p);
    REQUIRE(loaded.normalizer);
    CHECK(*loaded.normalizer == Normalizer::identity());

    CHECK_THROWS(params_from_string("{}"));
    CHECK_THROWS(params_from_string("not json"));
    CHECK_THROWS(load_params(dir / "missing.json"));
}
