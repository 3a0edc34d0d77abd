#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fabsched/features.hpp"
#include "fabsched/types.hpp"

namespace fabsched {

inline constexpr int kModelDim = kLotFeatureCount;
inline constexpr int kHeads = 2;
inline constexpr int kHeadDim = 6;
inline constexpr int kFfnDim = 16;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

/// Named parameter blocks, in flat-vector order.
enum class Block : int {
    encoding,
    query0,
    key0,
    value0,
    query1,
    key1,
    value1,
    out_proj,
    alpha,
    beta,
    ffn_w1,
    ffn_b1,
    ffn_w2,
    ffn_b2,
    ffn_w3,
    ffn_b3,
    cls_w,
    cls_b,
};
inline constexpr int kBlockCount = 18;

struct BlockInfo {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::size_t offset = 0;

    std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
    bool operator==(const BlockInfo&) const = default;
};

/// Every learnable weight of the policy and pretext networks in one flat vector,
/// addressed through a block manifest so evolution strategies can perturb it directly.
class PolicyParams {
public:
    PolicyParams() : PolicyParams(1) {}
    /// All-zero parameters for `families` tool families.
    explicit PolicyParams(int families);

    int families() const { return families_; }
    std::size_t size() const { return values_.size(); }
    std::span<double> flat() { return values_; }
    std::span<const double> flat() const { return values_; }
    const std::vector<BlockInfo>& manifest() const { return manifest_; }
    const BlockInfo& info(Block b) const { return manifest_[static_cast<std::size_t>(b)]; }

    MatrixView block(Block b);
    ConstMatrixView block(Block b) const;

    double alpha() const { return values_[info(Block::alpha).offset]; }
    double beta() const { return values_[info(Block::beta).offset]; }
    double& alpha() { return values_[info(Block::alpha).offset]; }
    double& beta() { return values_[info(Block::beta).offset]; }

    /// Set once the encoding has been trained on the pretext task; NES leaves it alone.
    bool frozen_encoding = false;
    std::uint64_t seed = 0;

    bool operator==(const PolicyParams&) const = default;

private:
    int families_ = 1;
    std::vector<BlockInfo> manifest_;
    std::vector<double> values_;
};

/// Normalized features of the lots at one decision point.
struct LotBatch {
    RowMatrix features;  // n x kModelDim
    std::vector<FamilyId> family;

    int size() const { return static_cast<int>(features.rows()); }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, alpha = 1, beta = 0.
PolicyParams init_params(std::uint64_t seed, int families);

/// s'_i = x_i + E[fam_i]. Throws std::out_of_range for a bad family index.
RowMatrix encode(const PolicyParams& p, const LotBatch& batch);

/// Two-head scaled dot-product self-attention followed by the output projection.
RowMatrix attention_forward(const PolicyParams& p, const RowMatrix& input);

/// y = alpha s' + beta attention(alpha s'), the trunk both heads read.
RowMatrix trunk_forward(const PolicyParams& p, const LotBatch& batch);

/// Position-wise FFN scalar head over the trunk: one priority score per lot.
Eigen::VectorXd forward_policy(const PolicyParams& p, const LotBatch& batch);

/// Row-softmax tool-family distribution per lot (n x families).
RowMatrix forward_pretext(const PolicyParams& p, const LotBatch& batch);

/// Mean cross-entropy against `labels` plus lambda * ||E||^2.
double pretext_loss(const PolicyParams& p, const LotBatch& batch, std::span<const FamilyId> labels, double lambda);

struct PretextGradient {
    double loss = 0;
    double cross_entropy = 0;
    PolicyParams grad;
};

/// Analytic gradient of pretext_loss with respect to every block. Blocks that the
/// pretext graph does not touch (the FFN head) come back as exact zeros.
PretextGradient backward_pretext(const PolicyParams& p, const LotBatch& batch, std::span<const FamilyId> labels,
                                 double lambda);

struct ParamsFile {
    PolicyParams params;
    std::optional<Normalizer> normalizer;
};

std::string params_to_string(const PolicyParams& p, const std::optional<Normalizer>& normalizer = std::nullopt);
ParamsFile params_from_string(const std::string& text);
void save_params(const std::filesystem::path& path, const PolicyParams& p,
                 const std::optional<Normalizer>& normalizer = std::nullopt);
ParamsFile load_params(const std::filesystem::path& path);

}  // namespace fabsched
