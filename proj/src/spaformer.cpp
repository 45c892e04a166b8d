#include "ssin/spaformer.hpp"

#include <cmath>

#include "ssin/error.hpp"

namespace ssin::model {

void ModelConfig::validate() const {
    if (layers < 1 || heads < 1 || d_e < 1 || d_k < 1 || d_f < 1) {
        throw ConfigError("model config: every dimension must be >= 1");
    }
    if (position == Position::srpe && d_k != d_e) {
        throw ConfigError("model config: relative-position scoring needs d_k == d_e");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model config: dropout must be in [0, 1)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"layers", c.layers},       {"heads", c.heads},
                       {"d_e", c.d_e},             {"d_k", c.d_k},
                       {"d_f", c.d_f},             {"emb_input", c.emb_input},
                       {"emb_pos", c.emb_pos},     {"position", c.position},
                       {"shield", c.shield},       {"srpe_per_head", c.srpe_per_head},
                       {"dropout", c.dropout}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.layers = j.value("layers", d.layers);
    c.heads = j.value("heads", d.heads);
    c.d_e = j.value("d_e", d.d_e);
    c.d_k = j.value("d_k", c.d_e);
    c.d_f = j.value("d_f", d.d_f);
    c.emb_input = j.value("emb_input", d.emb_input);
    c.emb_pos = j.value("emb_pos", d.emb_pos);
    c.position = j.value("position", d.position);
    c.shield = j.value("shield", d.shield);
    c.srpe_per_head = j.value("srpe_per_head", d.srpe_per_head);
    c.dropout = j.value("dropout", d.dropout);
}

namespace {

void add_two_layer(std::vector<ParamSpec>& out, const std::string& prefix, const std::string& group, Index in,
                   Index d, Embedding kind) {
    if (kind == Embedding::linear_nobias) {
        out.push_back({prefix + ".W", in, d, ParamKind::weight, group});
        return;
    }
    out.push_back({prefix + ".W1", in, d, ParamKind::weight, group});
    out.push_back({prefix + ".b1", 1, d, ParamKind::bias, group});
    out.push_back({prefix + ".W2", d, d, ParamKind::weight, group});
    out.push_back({prefix + ".b2", 1, d, ParamKind::bias, group});
}

std::string layer_prefix(Index l) { return "layer" + std::to_string(l); }

std::string srpe_prefix(const ModelConfig& c, Index head) {
    return c.srpe_per_head ? "srpe.h" + std::to_string(head) : std::string("srpe");
}

}  // namespace

std::vector<ParamSpec> parameter_layout(const ModelConfig& c) {
    c.validate();
    std::vector<ParamSpec> out;
    add_two_layer(out, "iem", "iem", 1, c.d_e, c.emb_input);
    if (c.position == Position::srpe) {
        const Index copies = c.srpe_per_head ? c.heads : 1;
        for (Index h = 0; h < copies; ++h) add_two_layer(out, srpe_prefix(c, h), "srpe", 2, c.d_e, c.emb_pos);
    } else {
        add_two_layer(out, "ape", "ape", 2, c.d_e, c.emb_pos);
    }
    for (Index l = 0; l < c.layers; ++l) {
        const auto lp = layer_prefix(l);
        for (Index h = 0; h < c.heads; ++h) {
            const auto hp = lp + ".head" + std::to_string(h);
            out.push_back({hp + ".WQ", c.d_e, c.d_k, ParamKind::weight, "layer"});
            out.push_back({hp + ".WK", c.d_e, c.d_k, ParamKind::weight, "layer"});
            out.push_back({hp + ".WV", c.d_e, c.d_k, ParamKind::weight, "layer"});
        }
        out.push_back({lp + ".WO", c.heads * c.d_k, c.d_e, ParamKind::weight, "layer"});
        out.push_back({lp + ".ln1.gain", 1, c.d_e, ParamKind::gain, "layer"});
        out.push_back({lp + ".ln1.shift", 1, c.d_e, ParamKind::shift, "layer"});
        out.push_back({lp + ".ffn.W1", c.d_e, c.d_f, ParamKind::weight, "layer"});
        out.push_back({lp + ".ffn.b1", 1, c.d_f, ParamKind::bias, "layer"});
        out.push_back({lp + ".ffn.W2", c.d_f, c.d_e, ParamKind::weight, "layer"});
        out.push_back({lp + ".ffn.b2", 1, c.d_e, ParamKind::bias, "layer"});
        out.push_back({lp + ".ln2.gain", 1, c.d_e, ParamKind::gain, "layer"});
        out.push_back({lp + ".ln2.shift", 1, c.d_e, ParamKind::shift, "layer"});
    }
    out.push_back({"pm.W1", c.d_e, c.d_e, ParamKind::weight, "pm"});
    out.push_back({"pm.b1", 1, c.d_e, ParamKind::bias, "pm"});
    out.push_back({"pm.W2", c.d_e, 1, ParamKind::weight, "pm"});
    out.push_back({"pm.b2", 1, 1, ParamKind::bias, "pm"});
    return out;
}

ModelParams::ModelParams(const ModelConfig& config) : specs_(parameter_layout(config)) {
    values_.reserve(specs_.size());
    for (std::size_t k = 0; k < specs_.size(); ++k) {
        values_.push_back(Matrix::Zero(specs_[k].rows, specs_[k].cols));
        index_.emplace(specs_[k].name, k);
    }
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
    ModelParams p(config);
    Rng rng(seed);
    for (std::size_t k = 0; k < p.size(); ++k) {
        auto& m = p.values_[k];
        switch (p.specs_[k].kind) {
            case ParamKind::weight: {
                const Scalar a = std::sqrt(3.0 / static_cast<Scalar>(m.rows()));
                for (Index t = 0; t < m.size(); ++t) m.data()[t] = rng.uniform(-a, a);
                break;
            }
            case ParamKind::gain:
                m.setOnes();
                break;
            case ParamKind::bias:
            case ParamKind::shift:
                m.setZero();
                break;
        }
    }
    return p;
}

std::size_t ModelParams::index_of(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ContractViolation("unknown parameter '" + name + "'");
    return it->second;
}

Matrix& ModelParams::at(const std::string& name) { return values_[index_of(name)]; }
const Matrix& ModelParams::at(const std::string& name) const { return values_[index_of(name)]; }

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
}

BoundParams::BoundParams(num::Tape& tape, const ModelParams& params, bool trainable)
    : tape_(&tape), params_(&params) {
    vars_.reserve(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
        vars_.push_back(trainable ? tape.leaf(params[k]) : tape.constant(params[k]));
    }
}

std::vector<Matrix> BoundParams::gradients() const {
    std::vector<Matrix> out;
    out.reserve(vars_.size());
    for (const auto& v : vars_) out.push_back(tape_->grad(v));
    return out;
}

namespace {

Var two_layer(const BoundParams& p, const std::string& prefix, Embedding kind, Var x) {
    if (kind == Embedding::linear_nobias) return num::matmul(x, p(prefix + ".W"));
    const auto h = num::linear(x, p(prefix + ".W1"), p(prefix + ".b1"));
    return num::linear(h, p(prefix + ".W2"), p(prefix + ".b2"));
}

}  // namespace

Var embed_input(const ModelConfig& config, const BoundParams& p, Var x) {
    SSIN_EXPECTS(x.cols() == 1, "embed_input: x must be L x 1");
    return two_layer(p, "iem", config.emb_input, x);
}

Var embed_relpos(const ModelConfig& config, const BoundParams& p, Var r, Index head) {
    SSIN_EXPECTS(r.cols() == 2, "embed_relpos: rows must be (distance, azimuth)");
    return two_layer(p, srpe_prefix(config, head), config.emb_pos, r);
}

Var embed_abspos(const ModelConfig& config, const BoundParams& p, Var coords) {
    SSIN_EXPECTS(coords.cols() == 2, "embed_abspos: rows must be (lat, lon)");
    return two_layer(p, "ape", config.emb_pos, coords);
}

std::vector<Var> srpe_for_table(const ModelConfig& config, const BoundParams& p, const RelPosTableInput& table) {
    SSIN_EXPECTS(table.standardized && table.standardized->rows() == table.roster_size * table.roster_size,
                 "srpe_for_table: table must hold n*n rows");
    const auto r = p.tape().constant(*table.standardized);
    std::vector<Var> out;
    const Index copies = config.srpe_per_head ? config.heads : 1;
    for (Index h = 0; h < copies; ++h) out.push_back(embed_relpos(config, p, r, h));
    return out;
}

AttentionContext attention_context(const ModelConfig& config, const BoundParams& p, const ModelInput& input,
                                   const ForwardOptions& options) {
    const Index L = input.length();
    SSIN_EXPECTS(input.plan.length == L, "forward: plan length differs from the input length");
    AttentionContext ctx;
    ctx.pairs = std::make_shared<const attn::PairList>(config.shield ? attn::PairList::shielded(input.plan)
                                                                     : attn::PairList::dense(L));
    if (config.position != Position::srpe) return ctx;

    const auto& pairs = *ctx.pairs;
    if (input.table) {
        const auto& t = *input.table;
        SSIN_EXPECTS(static_cast<Index>(t.nodes.size()) == L, "forward: table node map differs from the input length");
        auto rows = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(pairs.total()));
        for (Index i = 0; i < L; ++i) {
            const Index a = t.nodes[static_cast<std::size_t>(i)];
            SSIN_EXPECTS(a >= 0 && a < t.roster_size, "forward: node outside the relative-position table");
            for (Index q = pairs.begin(i); q < pairs.end(i); ++q) {
                (*rows)[static_cast<std::size_t>(q)] = a * t.roster_size + t.nodes[static_cast<std::size_t>(pairs.col(q))];
            }
        }
        ctx.rows = std::move(rows);
        ctx.srpe = options.srpe_table ? *options.srpe_table : srpe_for_table(config, p, t);
    } else {
        SSIN_EXPECTS(static_cast<bool>(input.relpos), "forward: no relative-position source");
        Matrix r(pairs.total(), 2);
        for (Index i = 0; i < L; ++i)
            for (Index q = pairs.begin(i); q < pairs.end(i); ++q) r.row(q) = input.relpos(i, pairs.col(q)).transpose();
        const auto rv = p.tape().constant(std::move(r));
        const Index copies = config.srpe_per_head ? config.heads : 1;
        for (Index h = 0; h < copies; ++h) ctx.srpe.push_back(embed_relpos(config, p, rv, h));
    }
    return ctx;
}

Var multi_head_attention(const ModelConfig& config, const BoundParams& p, Index layer, Var x,
                         const AttentionContext& ctx, std::vector<attn::KernelStats>* stats) {
    const auto lp = layer_prefix(layer);
    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(config.heads));
    for (Index h = 0; h < config.heads; ++h) {
        const auto hp = lp + ".head" + std::to_string(h);
        const auto q = num::matmul(x, p(hp + ".WQ"));
        const auto k = num::matmul(x, p(hp + ".WK"));
        const auto v = num::matmul(x, p(hp + ".WV"));
        std::optional<Var> c;
        if (!ctx.srpe.empty()) c = ctx.srpe[ctx.srpe.size() == 1 ? 0 : static_cast<std::size_t>(h)];
        attn::KernelStats s;
        heads.push_back(attn::shielded_attention(q, k, v, c, ctx.pairs, ctx.rows, stats ? &s : nullptr));
        if (stats) stats->push_back(s);
    }
    const auto z = heads.size() == 1 ? heads[0] : num::concat_cols(heads);
    return num::matmul(z, p(lp + ".WO"));
}

Var encoder_layer(const ModelConfig& config, const BoundParams& p, Index layer, Var x, const AttentionContext& ctx,
                  Rng* dropout_rng, std::vector<attn::KernelStats>* stats) {
    const auto lp = layer_prefix(layer);
    auto maybe_dropout = [&](Var v) {
        return (dropout_rng && config.dropout > 0.0) ? num::dropout(v, config.dropout, *dropout_rng) : v;
    };
    const auto a = maybe_dropout(multi_head_attention(config, p, layer, x, ctx, stats));
    const auto x1 = num::layer_norm(num::add(x, a), p(lp + ".ln1.gain"), p(lp + ".ln1.shift"));
    const auto h = num::relu(num::linear(x1, p(lp + ".ffn.W1"), p(lp + ".ffn.b1")));
    const auto f = maybe_dropout(num::linear(h, p(lp + ".ffn.W2"), p(lp + ".ffn.b2")));
    return num::layer_norm(num::add(x1, f), p(lp + ".ln2.gain"), p(lp + ".ln2.shift"));
}

Var forward(const ModelConfig& config, const BoundParams& p, const ModelInput& input, const ForwardOptions& options) {
    auto& tape = p.tape();
    const Index L = input.length();
    SSIN_EXPECTS(L >= 1, "forward: empty sequence");
    auto e = embed_input(config, p, tape.constant(Matrix(input.x)));
    if (config.position == Position::sape) {
        SSIN_EXPECTS(input.abs_pos.rows() == L && input.abs_pos.cols() == 2,
                     "forward: absolute positions must be L x 2");
        e = num::add(e, embed_abspos(config, p, tape.constant(input.abs_pos)));
    }
    const auto ctx = attention_context(config, p, input, options);
    auto x = e;
    for (Index l = 0; l < config.layers; ++l) {
        x = encoder_layer(config, p, l, x, ctx, options.dropout_rng, options.kernel_stats);
    }
    const auto h = num::linear(x, p("pm.W1"), p("pm.b1"));
    return num::linear(h, p("pm.W2"), p("pm.b2"));
}

Var masked_mse_loss(Var pred, const std::vector<Index>& mask, const Vector& targets) {
    SSIN_EXPECTS(!mask.empty(), "masked_mse_loss: empty mask");
    SSIN_EXPECTS(static_cast<Index>(mask.size()) == targets.size(), "masked_mse_loss: one target per masked node");
    SSIN_EXPECTS(pred.cols() == 1, "masked_mse_loss: predictions must be L x 1");
    auto& tape = *pred.tape;
    const auto diff = num::sub(num::gather_rows(pred, mask), tape.constant(Matrix(targets)));
    return num::scale(num::sum(num::mul(diff, diff)), 1.0 / static_cast<Scalar>(mask.size()));
}

Vector predict(const ModelConfig& config, const ModelParams& params, const ModelInput& input,
               std::vector<attn::KernelStats>* stats) {
    num::Tape tape;
    const BoundParams bound(tape, params, false);
    ForwardOptions options;
    options.kernel_stats = stats;
    return forward(config, bound, input, options).value().col(0);
}

}  // namespace ssin::model
