#include "fabsched/net.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fabsched/rng.hpp"

namespace fabsched {

namespace {

struct BlockShape {
    const char* name;
    int rows;
    int cols;
};

std::vector<BlockShape> block_shapes(int families) {
    return {
        {"encoding", families, kModelDim},
        {"query0", kModelDim, kHeadDim},
        {"key0", kModelDim, kHeadDim},
        {"value0", kModelDim, kHeadDim},
        {"query1", kModelDim, kHeadDim},
        {"key1", kModelDim, kHeadDim},
        {"value1", kModelDim, kHeadDim},
        {"out_proj", kHeads * kHeadDim, kModelDim},
        {"alpha", 1, 1},
        {"beta", 1, 1},
        {"ffn_w1", kModelDim, kFfnDim},
        {"ffn_b1", 1, kFfnDim},
        {"ffn_w2", kFfnDim, kFfnDim},
        {"ffn_b2", 1, kFfnDim},
        {"ffn_w3", kFfnDim, 1},
        {"ffn_b3", 1, 1},
        {"cls_w", kModelDim, families},
        {"cls_b", 1, families},
    };
}

Block query_block(int head) { return head == 0 ? Block::query0 : Block::query1; }
Block key_block(int head) { return head == 0 ? Block::key0 : Block::key1; }
Block value_block(int head) { return head == 0 ? Block::value0 : Block::value1; }

void softmax_rows(RowMatrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
    }
}

/// Forward intermediates kept for the backward pass.
struct AttentionCache {
    std::array<RowMatrix, kHeads> q, k, v, weights;
    RowMatrix concat;
    RowMatrix out;
};

AttentionCache attend(const PolicyParams& p, const RowMatrix& x) {
    AttentionCache c;
    const Eigen::Index n = x.rows();
    const double scale = 1.0 / std::sqrt(static_cast<double>(kHeadDim));
    c.concat.resize(n, kHeads * kHeadDim);
    for (int h = 0; h < kHeads; ++h) {
        c.q[h] = x * p.block(query_block(h));
        c.k[h] = x * p.block(key_block(h));
        c.v[h] = x * p.block(value_block(h));
        c.weights[h] = (c.q[h] * c.k[h].transpose()) * scale;
        softmax_rows(c.weights[h]);
        c.concat.middleCols(h * kHeadDim, kHeadDim) = c.weights[h] * c.v[h];
    }
    c.out = c.concat * p.block(Block::out_proj);
    return c;
}

struct TrunkCache {
    RowMatrix encoded;
    RowMatrix scaled;
    AttentionCache attention;
    RowMatrix y;
};

TrunkCache run_trunk(const PolicyParams& p, const LotBatch& batch) {
    TrunkCache t;
    t.encoded = encode(p, batch);
    t.scaled = p.alpha() * t.encoded;
    t.attention = attend(p, t.scaled);
    t.y = t.scaled + p.beta() * t.attention.out;
    return t;
}

RowMatrix logits_of(const PolicyParams& p, const RowMatrix& y) {
    RowMatrix z = y * p.block(Block::cls_w);
    z.rowwise() += p.block(Block::cls_b).row(0);
    return z;
}

void check_labels(const PolicyParams& p, const LotBatch& batch, std::span<const FamilyId> labels) {
    if (labels.size() != static_cast<std::size_t>(batch.size())) {
        throw std::invalid_argument("pretext labels do not match the batch size");
    }
    for (FamilyId f : labels) {
        if (f < 0 || f >= p.families()) throw std::out_of_range("pretext label out of range");
    }
}

/// Mean cross-entropy of row-softmax(logits) against labels, via log-sum-exp.
double cross_entropy(const RowMatrix& logits, std::span<const FamilyId> labels) {
    double total = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
        total += lse - logits(i, labels[static_cast<std::size_t>(i)]);
    }
    return total / static_cast<double>(logits.rows());
}

}  // namespace

PolicyParams::PolicyParams(int families) : families_(families) {
    if (families < 1) throw std::invalid_argument("PolicyParams needs at least one tool family");
    std::size_t offset = 0;
    for (const auto& s : block_shapes(families)) {
        manifest_.push_back(BlockInfo{s.name, s.rows, s.cols, offset});
        offset += manifest_.back().size();
    }
    values_.assign(offset, 0.0);
}

MatrixView PolicyParams::block(Block b) {
    const auto& i = info(b);
    return MatrixView(values_.data() + i.offset, i.rows, i.cols);
}

ConstMatrixView PolicyParams::block(Block b) const {
    const auto& i = info(b);
    return ConstMatrixView(values_.data() + i.offset, i.rows, i.cols);
}

PolicyParams init_params(std::uint64_t seed, int families) {
    PolicyParams p(families);
    p.seed = seed;
    CounterStream rng(seed, "init_params");
    for (int b = 0; b < kBlockCount; ++b) {
        const auto block = static_cast<Block>(b);
        if (block == Block::alpha || block == Block::beta) continue;
        const auto& info = p.info(block);
        // Biases share the fan-in of the weight matrix they follow; the encoding
        // behaves like a linear layer over a one-hot family vector.
        int fan_in = info.rows;
        if (block == Block::ffn_b1 || block == Block::cls_b) fan_in = kModelDim;
        if (block == Block::ffn_b2 || block == Block::ffn_b3) fan_in = kFfnDim;
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        auto flat = p.flat().subspan(info.offset, info.size());
        for (double& w : flat) w = (2.0 * rng.uniform() - 1.0) * bound;
    }
    p.alpha() = 1.0;
    p.beta() = 0.0;
    return p;
}

RowMatrix encode(const PolicyParams& p, const LotBatch& batch) {
    if (batch.family.size() != static_cast<std::size_t>(batch.features.rows())) {
        throw std::invalid_argument("LotBatch family count does not match feature rows");
    }
    if (batch.features.cols() != kModelDim) throw std::invalid_argument("LotBatch must have 12 feature columns");
    const auto table = p.block(Block::encoding);
    RowMatrix s = batch.features;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const FamilyId f = batch.family[static_cast<std::size_t>(i)];
        if (f < 0 || f >= p.families()) {
            throw std::out_of_range("tool family index " + std::to_string(f) + " out of range");
        }
        s.row(i) += table.row(f);
    }
    return s;
}

RowMatrix attention_forward(const PolicyParams& p, const RowMatrix& input) { return attend(p, input).out; }

RowMatrix trunk_forward(const PolicyParams& p, const LotBatch& batch) { return run_trunk(p, batch).y; }

Eigen::VectorXd forward_policy(const PolicyParams& p, const LotBatch& batch) {
    const RowMatrix y = trunk_forward(p, batch);
    RowMatrix h1 = y * p.block(Block::ffn_w1);
    h1.rowwise() += p.block(Block::ffn_b1).row(0);
    h1 = h1.array().tanh().matrix();
    RowMatrix h2 = h1 * p.block(Block::ffn_w2);
    h2.rowwise() += p.block(Block::ffn_b2).row(0);
    h2 = h2.array().tanh().matrix();
    Eigen::VectorXd out = h2 * p.block(Block::ffn_w3);
    out.array() += p.block(Block::ffn_b3)(0, 0);
    return out;
}

RowMatrix forward_pretext(const PolicyParams& p, const LotBatch& batch) {
    RowMatrix probs = logits_of(p, trunk_forward(p, batch));
    softmax_rows(probs);
    return probs;
}

double pretext_loss(const PolicyParams& p, const LotBatch& batch, std::span<const FamilyId> labels, double lambda) {
    check_labels(p, batch, labels);
    const double ce = cross_entropy(logits_of(p, trunk_forward(p, batch)), labels);
    return ce + lambda * p.block(Block::encoding).squaredNorm();
}

PretextGradient backward_pretext(const PolicyParams& p, const LotBatch& batch, std::span<const FamilyId> labels,
                                 double lambda) {
    check_labels(p, batch, labels);
    const TrunkCache t = run_trunk(p, batch);
    const Eigen::Index n = batch.features.rows();
    const RowMatrix logits = logits_of(p, t.y);

    PretextGradient g{0, 0, PolicyParams(p.families())};
    g.cross_entropy = cross_entropy(logits, labels);
    g.loss = g.cross_entropy + lambda * p.block(Block::encoding).squaredNorm();

    // Classifier head.
    RowMatrix d_logits = logits;
    softmax_rows(d_logits);
    for (Eigen::Index i = 0; i < n; ++i) d_logits(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    d_logits /= static_cast<double>(n);
    g.grad.block(Block::cls_w) = t.y.transpose() * d_logits;
    g.grad.block(Block::cls_b) = d_logits.colwise().sum();
    const RowMatrix d_y = d_logits * p.block(Block::cls_w).transpose();

    // y = x + beta * attn(x), x = alpha * s'.
    g.grad.beta() = (d_y.array() * t.attention.out.array()).sum();
    const RowMatrix d_attn = p.beta() * d_y;
    RowMatrix d_x = d_y;

    const AttentionCache& a = t.attention;
    g.grad.block(Block::out_proj) = a.concat.transpose() * d_attn;
    const RowMatrix d_concat = d_attn * p.block(Block::out_proj).transpose();
    const double scale = 1.0 / std::sqrt(static_cast<double>(kHeadDim));
    for (int h = 0; h < kHeads; ++h) {
        const RowMatrix d_head = d_concat.middleCols(h * kHeadDim, kHeadDim);
        const RowMatrix d_weights = d_head * a.v[h].transpose();
        const RowMatrix d_v = a.weights[h].transpose() * d_head;
        const Eigen::VectorXd row_dot = (d_weights.array() * a.weights[h].array()).rowwise().sum();
        const RowMatrix d_scores =
            (a.weights[h].array() * (d_weights.colwise() - row_dot).array()).matrix() * scale;
        const RowMatrix d_q = d_scores * a.k[h];
        const RowMatrix d_k = d_scores.transpose() * a.q[h];
        g.grad.block(query_block(h)) = t.scaled.transpose() * d_q;
        g.grad.block(key_block(h)) = t.scaled.transpose() * d_k;
        g.grad.block(value_block(h)) = t.scaled.transpose() * d_v;
        d_x += d_q * p.block(query_block(h)).transpose() + d_k * p.block(key_block(h)).transpose() +
               d_v * p.block(value_block(h)).transpose();
    }

    g.grad.alpha() = (d_x.array() * t.encoded.array()).sum();
    const RowMatrix d_encoded = p.alpha() * d_x;
    auto d_table = g.grad.block(Block::encoding);
    for (Eigen::Index i = 0; i < n; ++i) d_table.row(batch.family[static_cast<std::size_t>(i)]) += d_encoded.row(i);
    d_table += 2.0 * lambda * p.block(Block::encoding);
    return g;
}

std::string params_to_string(const PolicyParams& p, const std::optional<Normalizer>& normalizer) {
    nlohmann::json blocks = nlohmann::json::array();
    const auto flat = p.flat();
    for (const auto& b : p.manifest()) {
        blocks.push_back({{"name", b.name},
                          {"rows", b.rows},
                          {"cols", b.cols},
                          {"values", std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                                         flat.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size()))}});
    }
    nlohmann::json j{{"format", "fabsched-params"},
                     {"version", 1},
                     {"families", p.families()},
                     {"seed", p.seed},
                     {"frozen_encoding", p.frozen_encoding},
                     {"blocks", blocks}};
    if (normalizer) j["normalizer"] = nlohmann::json::parse(normalizer_to_string(*normalizer));
    return j.dump() + "\n";
}

ParamsFile params_from_string(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "fabsched-params" || j.value("version", 0) != 1) {
        throw std::runtime_error("not a version-1 parameter document");
    }
    ParamsFile out{PolicyParams(j.at("families").get<int>()), std::nullopt};
    PolicyParams& p = out.params;
    p.seed = j.at("seed").get<std::uint64_t>();
    p.frozen_encoding = j.at("frozen_encoding").get<bool>();
    const auto& blocks = j.at("blocks");
    if (blocks.size() != p.manifest().size()) throw std::runtime_error("parameter document has wrong block count");
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const auto& info = p.manifest()[b];
        const auto& jb = blocks[b];
        if (jb.at("name").get<std::string>() != info.name || jb.at("rows").get<int>() != info.rows ||
            jb.at("cols").get<int>() != info.cols) {
            throw std::runtime_error("parameter block " + info.name + " does not match the expected layout");
        }
        const auto values = jb.at("values").get<std::vector<double>>();
        if (values.size() != info.size()) throw std::runtime_error("parameter block " + info.name + " has wrong size");
        for (std::size_t k = 0; k < values.size(); ++k) {
            if (!std::isfinite(values[k])) throw std::runtime_error("non-finite value in block " + info.name);
            p.flat()[info.offset + k] = values[k];
        }
    }
    if (j.contains("normalizer")) out.normalizer = normalizer_from_string(j.at("normalizer").dump());
    return out;
}

void save_params(const std::filesystem::path& path, const PolicyParams& p, const std::optional<Normalizer>& normalizer) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write parameter file " + path.string());
    out << params_to_string(p, normalizer);
}

ParamsFile load_params(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open parameter file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return params_from_string(buf.str());
}

}  // namespace fabsched
