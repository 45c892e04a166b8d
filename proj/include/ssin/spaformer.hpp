#ifndef SSIN_SPAFORMER_HPP
#define SSIN_SPAFORMER_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "ssin/attnkernel.hpp"
#include "ssin/numcore/ops.hpp"
#include "ssin/numcore/tape.hpp"
#include "ssin/rng.hpp"

namespace ssin::model {

using num::Index;
using num::Matrix;
using num::Scalar;
using num::Var;
using num::Vector;

enum class Embedding { fcn, linear_nobias };
enum class Position { srpe, sape };

NLOHMANN_JSON_SERIALIZE_ENUM(Embedding, {{Embedding::fcn, "fcn"}, {Embedding::linear_nobias, "linear_nobias"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Position, {{Position::srpe, "srpe"}, {Position::sape, "sape"}})

struct ModelConfig {
    Index layers = 3;   // T
    Index heads = 2;    // H
    Index d_e = 16;
    Index d_k = 16;     // per head; concatenated width is heads * d_k
    Index d_f = 256;
    Embedding emb_input = Embedding::fcn;
    Embedding emb_pos = Embedding::fcn;
    Position position = Position::srpe;
    bool shield = true;
    bool srpe_per_head = false;
    Scalar dropout = 0.0;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

enum class ParamKind { weight, bias, gain, shift };

struct ParamSpec {
    std::string name;
    Index rows = 0;
    Index cols = 0;
    ParamKind kind = ParamKind::weight;
    std::string group;  // iem, srpe, ape, layer, pm

    Index count() const { return rows * cols; }
};

// Ordered list of every learnable tensor the configuration needs.
std::vector<ParamSpec> parameter_layout(const ModelConfig& config);

class ModelParams {
public:
    ModelParams() = default;
    // Zero-filled tensors with the layout of `config`.
    explicit ModelParams(const ModelConfig& config);

    // Fan-in scaled uniform weights U(-sqrt(3/fan_in), +sqrt(3/fan_in)), zero
    // biases and shifts, unit gains.
    static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

    std::size_t size() const { return values_.size(); }
    const std::string& name(std::size_t k) const { return specs_[k].name; }
    const ParamSpec& spec(std::size_t k) const { return specs_[k]; }
    Matrix& operator[](std::size_t k) { return values_[k]; }
    const Matrix& operator[](std::size_t k) const { return values_[k]; }
    Matrix& at(const std::string& name);
    const Matrix& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    std::size_t index_of(const std::string& name) const;

    std::span<Matrix> tensors() { return values_; }
    std::span<const Matrix> tensors() const { return values_; }

    std::size_t parameter_count() const;

private:
    std::vector<ParamSpec> specs_;
    std::vector<Matrix> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Parameters placed on a tape, addressable by name.
class BoundParams {
public:
    BoundParams(num::Tape& tape, const ModelParams& params, bool trainable = true);

    Var operator()(const std::string& name) const { return vars_[params_->index_of(name)]; }
    const std::vector<Var>& vars() const { return vars_; }
    num::Tape& tape() const { return *tape_; }
    const ModelParams& params() const { return *params_; }

    // Gradients after tape.backward(), aligned with the parameter order.
    std::vector<Matrix> gradients() const;

private:
    num::Tape* tape_;
    const ModelParams* params_;
    std::vector<Var> vars_;
};

// Standardized relative positions over a fixed roster: row a*n + b of
// `standardized` is the pair (roster a, roster b). `nodes` maps sequence
// position to roster index.
struct RelPosTableInput {
    std::shared_ptr<const Matrix> standardized;  // (n*n) x 2
    Index roster_size = 0;
    std::vector<Index> nodes;
};

// Computes the standardized relative position of sequence nodes (i, j).
using RelPosFn = std::function<Eigen::Vector2d(Index, Index)>;

struct ModelInput {
    Vector x;  // standardized inputs, mean-filled nodes at their fill value
    attn::AttentionPlan plan;
    std::optional<RelPosTableInput> table;
    RelPosFn relpos;  // used when `table` is absent
    Matrix abs_pos;   // L x 2 standardized (lat, lon); absolute-position variant only

    Index length() const { return static_cast<Index>(x.size()); }
};

struct ForwardOptions {
    // Precomputed SRPE over the roster table (one entry, or one per head).
    const std::vector<Var>* srpe_table = nullptr;
    Rng* dropout_rng = nullptr;
    std::vector<attn::KernelStats>* kernel_stats = nullptr;
};

// e = (x v1 + b1) W2 + b2, or x g for the linear variant. x is L x 1.
Var embed_input(const ModelConfig& config, const BoundParams& p, Var x);
// c = (r W1 + b1) W2 + b2, or r W; rows of r are (distance, azimuth).
// `head` selects the per-head embedding when enabled.
Var embed_relpos(const ModelConfig& config, const BoundParams& p, Var r, Index head = 0);
Var embed_abspos(const ModelConfig& config, const BoundParams& p, Var coords);

// sum(q * k * c) / sqrt(d_k).
template <typename A, typename B, typename C>
Scalar attention_score(const Eigen::MatrixBase<A>& q, const Eigen::MatrixBase<B>& k, const Eigen::MatrixBase<C>& c) {
    return q.cwiseProduct(k).cwiseProduct(c).sum() / std::sqrt(static_cast<Scalar>(q.size()));
}

// SRPE for every roster pair of `table`; one Var, or one per head.
std::vector<Var> srpe_for_table(const ModelConfig& config, const BoundParams& p, const RelPosTableInput& table);

struct AttentionContext {
    std::shared_ptr<const attn::PairList> pairs;
    std::vector<Var> srpe;                           // empty for the absolute-position variant
    std::shared_ptr<const std::vector<Index>> rows;  // pair -> SRPE row, null when per-pair
};

// Shielded multi-head attention with SRPE, projected by W^O.
Var multi_head_attention(const ModelConfig& config, const BoundParams& p, Index layer, Var x,
                         const AttentionContext& ctx, std::vector<attn::KernelStats>* stats = nullptr);

// X1 = LN(X + Attn(X)); X' = LN(X1 + FFN(X1)).
Var encoder_layer(const ModelConfig& config, const BoundParams& p, Index layer, Var x, const AttentionContext& ctx,
                  Rng* dropout_rng = nullptr, std::vector<attn::KernelStats>* stats = nullptr);

AttentionContext attention_context(const ModelConfig& config, const BoundParams& p, const ModelInput& input,
                                   const ForwardOptions& options = {});

// L x 1 predictions in standardized space.
Var forward(const ModelConfig& config, const BoundParams& p, const ModelInput& input,
            const ForwardOptions& options = {});

// Mean squared error over the masked rows only.
Var masked_mse_loss(Var pred, const std::vector<Index>& mask, const Vector& targets);

// Inference without gradients.
Vector predict(const ModelConfig& config, const ModelParams& params, const ModelInput& input,
               std::vector<attn::KernelStats>* stats = nullptr);

}  // namespace ssin::model

#endif  // SSIN_SPAFORMER_HPP
