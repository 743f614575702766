#include "gnnformer/message_passing.hpp"

#include <cmath>

#include "gnnformer/ops.hpp"

namespace gnnformer {

std::string to_string(PropagatorKind kind) {
    switch (kind) {
        case PropagatorKind::GcnLike: return "gcn";
        case PropagatorKind::SageLike: return "sage";
        case PropagatorKind::GatLike: return "gat";
        case PropagatorKind::DenseAttention: return "dense";
    }
    return "?";
}

PropagatorKind parse_propagator(std::string_view text) {
    if (text == "gcn") return PropagatorKind::GcnLike;
    if (text == "sage") return PropagatorKind::SageLike;
    if (text == "gat") return PropagatorKind::GatLike;
    if (text == "dense") return PropagatorKind::DenseAttention;
    throw ConfigError("unknown propagator '" + std::string(text) + "' (expected gcn, sage, gat or dense)");
}

OperatorSpec OperatorSpec::parse(std::string_view text) {
    OperatorSpec spec;
    std::size_t start = 0;
    while (true) {
        const auto plus = text.find('+', start);
        const auto part = text.substr(start, plus == std::string_view::npos ? std::string_view::npos : plus - start);
        if (part.size() != 2) throw ConfigError("block '" + std::string(part) + "' must have exactly two slots");
        SlotPair pair{};
        for (std::size_t k = 0; k < 2; ++k) {
            if (part[k] == 'P')
                pair[k] = Slot::P;
            else if (part[k] == 'T')
                pair[k] = Slot::T;
            else
                throw ConfigError("slot '" + std::string(1, part[k]) + "' is neither P nor T");
        }
        spec.blocks.push_back(pair);
        if (plus == std::string_view::npos) break;
        start = plus + 1;
    }
    return spec;
}

OperatorSpec OperatorSpec::repeat(SlotPair pair, std::size_t n) { return OperatorSpec{std::vector<SlotPair>(n, pair)}; }

std::string OperatorSpec::to_string() const {
    std::string out;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (b > 0) out += '+';
        for (Slot s : blocks[b]) out += s == Slot::P ? 'P' : 'T';
    }
    return out;
}

void OperatorSpec::validate(bool relax_depth) const {
    if (blocks.empty()) throw ConfigError("at least one PT-block is required");
    if (!relax_depth && blocks.size() > 3)
        throw ConfigError("at most 3 PT-blocks are allowed, got " + std::to_string(blocks.size()));
}

std::shared_ptr<const GraphContext> GraphContext::build(const CsrGraph& graph) {
    auto ctx = std::make_shared<GraphContext>();
    ctx->adjacency = graph.unweighted();
    ctx->gcn = sym_norm_weights(graph, true);
    ctx->mean = mean_weights(graph.unweighted());
    ctx->looped = graph.with_self_loops();
    return ctx;
}

MatrixXd glorot(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    MatrixXd m(fan_in, fan_out);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
    return m;
}

SlotParams init_transform(int width, Rng& rng) { return TransformParams{Tensor::parameter(glorot(width, width, rng))}; }

SlotParams init_propagator(PropagatorKind kind, int width, int heads, Rng& rng) {
    switch (kind) {
        case PropagatorKind::GcnLike: return std::monostate{};
        case PropagatorKind::SageLike:
            return SageParams{Tensor::parameter(glorot(width, width, rng)), Tensor::parameter(glorot(width, width, rng))};
        case PropagatorKind::GatLike:
        case PropagatorKind::DenseAttention: {
            if (heads < 1 || width % heads != 0)
                throw ConfigError("heads (" + std::to_string(heads) + ") must divide the hidden width (" +
                                  std::to_string(width) + ")");
            const int head_width = width / heads;
            if (kind == PropagatorKind::GatLike) {
                GatParams p;
                for (int k = 0; k < heads; ++k)
                    p.heads.push_back(AttentionHead{Tensor::parameter(glorot(width, head_width, rng)),
                                                    Tensor::parameter(glorot(head_width, 1, rng)),
                                                    Tensor::parameter(glorot(head_width, 1, rng))});
                return p;
            }
            MhaParams p;
            for (int k = 0; k < heads; ++k)
                p.heads.push_back(MhaHead{Tensor::parameter(glorot(width, head_width, rng)),
                                          Tensor::parameter(glorot(width, head_width, rng)),
                                          Tensor::parameter(glorot(width, head_width, rng))});
            return p;
        }
    }
    throw ConfigError("unknown propagator");
}

SlotParams init_slot(Slot slot, PropagatorKind kind, int width, int heads, Rng& rng) {
    return slot == Slot::T ? init_transform(width, rng) : init_propagator(kind, width, heads, rng);
}

void append_parameters(const SlotParams& params, const std::string& prefix, std::vector<NamedParameter>& out) {
    if (const auto* t = std::get_if<TransformParams>(&params)) {
        out.push_back({prefix + ".weight", t->weight, true});
    } else if (const auto* s = std::get_if<SageParams>(&params)) {
        out.push_back({prefix + ".w_self", s->w_self, true});
        out.push_back({prefix + ".w_neigh", s->w_neigh, true});
    } else if (const auto* g = std::get_if<GatParams>(&params)) {
        for (std::size_t k = 0; k < g->heads.size(); ++k) {
            const auto head = prefix + ".head" + std::to_string(k);
            out.push_back({head + ".projection", g->heads[k].projection, true});
            out.push_back({head + ".attn_src", g->heads[k].attn_src, true});
            out.push_back({head + ".attn_dst", g->heads[k].attn_dst, true});
        }
    } else if (const auto* m = std::get_if<MhaParams>(&params)) {
        for (std::size_t k = 0; k < m->heads.size(); ++k) {
            const auto head = prefix + ".head" + std::to_string(k);
            out.push_back({head + ".wq", m->heads[k].wq, true});
            out.push_back({head + ".wk", m->heads[k].wk, true});
            out.push_back({head + ".wv", m->heads[k].wv, true});
        }
    }
}

Tensor transform(Tape& tape, const Tensor& h, const Tensor& w, double dropout_rate, bool training, Rng& rng) {
    if (w.rows() != w.cols()) throw DimensionError("transform weight must be square, got " + w.shape());
    return dropout(tape, relu(tape, matmul(tape, h, w)), dropout_rate, training, rng);
}

Tensor gcn_propagate(Tape& tape, const Tensor& h, const CsrGraph& normalized) {
    if (!normalized.weighted()) throw ContractError("gcn_propagate expects sym-normalized edge weights");
    return spmm(tape, normalized, h);
}

Tensor sage_propagate(Tape& tape, const Tensor& h, const CsrGraph& mean_graph, const Tensor& w_self,
                      const Tensor& w_neigh) {
    if (!mean_graph.weighted()) throw ContractError("sage_propagate expects row-mean edge weights");
    if (h.cols() != w_self.rows() || h.cols() != w_neigh.rows() || w_self.cols() != w_neigh.cols())
        throw DimensionError("sage_propagate: features " + h.shape() + " vs weights " + w_self.shape() + ", " +
                             w_neigh.shape());
    return add(tape, matmul(tape, h, w_self), matmul(tape, spmm(tape, mean_graph, h), w_neigh));
}

Tensor gat_propagate(Tape& tape, const Tensor& h, const CsrGraph& looped, const GatParams& params,
                     double attn_dropout, bool training, Rng& rng, std::vector<std::vector<double>>* alphas) {
    if (params.heads.empty()) throw ConfigError("graph attention needs at least one head");
    std::vector<Tensor> outputs;
    outputs.reserve(params.heads.size());
    if (alphas) alphas->clear();
    for (const auto& head : params.heads) {
        if (h.cols() != head.projection.rows())
            throw DimensionError("gat_propagate: features " + h.shape() + " vs projection " + head.projection.shape());
        const Tensor projected = matmul(tape, h, head.projection);
        const Tensor src = matmul(tape, projected, head.attn_src);
        const Tensor dst = matmul(tape, projected, head.attn_dst);
        std::vector<double> alpha;
        outputs.push_back(neighborhood_attention(tape, looped, src, dst, projected, kGatNegativeSlope, attn_dropout,
                                                 training, rng, alphas ? &alpha : nullptr));
        if (alphas) alphas->push_back(std::move(alpha));
    }
    return outputs.size() == 1 ? outputs.front() : concat_cols<double>(tape, outputs);
}

Tensor dense_mha_propagate(Tape& tape, const Tensor& h, const MhaParams& params, std::vector<MatrixXd>* attention) {
    if (params.heads.empty()) throw ConfigError("self-attention needs at least one head");
    std::vector<Tensor> outputs;
    if (attention) attention->clear();
    for (const auto& head : params.heads) {
        if (h.cols() != head.wq.rows())
            throw DimensionError("dense_mha_propagate: features " + h.shape() + " vs projection " + head.wq.shape());
        const Tensor q = matmul(tape, h, head.wq);
        const Tensor k = matmul(tape, h, head.wk);
        const Tensor v = matmul(tape, h, head.wv);
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head.wq.cols()));
        const Tensor scores = scale(tape, matmul(tape, q, transpose(tape, k)), inv_sqrt);
        const Tensor weights = row_softmax(tape, scores);
        if (attention) attention->push_back(weights.value());
        outputs.push_back(matmul(tape, weights, v));
    }
    return outputs.size() == 1 ? outputs.front() : concat_cols<double>(tape, outputs);
}

Tensor propagate(Tape& tape, PropagatorKind kind, const Tensor& h, const GraphContext& ctx, const SlotParams& params,
                 double dropout_rate, bool training, Rng& rng) {
    switch (kind) {
        case PropagatorKind::GcnLike: return gcn_propagate(tape, h, ctx.gcn);
        case PropagatorKind::SageLike: {
            const auto* p = std::get_if<SageParams>(&params);
            if (!p) throw ConfigError("SAGE-like propagation needs SAGE parameters");
            return sage_propagate(tape, h, ctx.mean, p->w_self, p->w_neigh);
        }
        case PropagatorKind::GatLike: {
            const auto* p = std::get_if<GatParams>(&params);
            if (!p) throw ConfigError("GAT-like propagation needs attention parameters");
            return gat_propagate(tape, h, ctx.looped, *p, dropout_rate, training, rng);
        }
        case PropagatorKind::DenseAttention: {
            const auto* p = std::get_if<MhaParams>(&params);
            if (!p) throw ConfigError("dense attention needs self-attention parameters");
            return dense_mha_propagate(tape, h, *p);
        }
    }
    throw ConfigError("unknown propagator");
}

Tensor apply_operator_pair(Tape& tape, const SlotPair& pair, const Tensor& h, const GraphContext& ctx,
                           PropagatorKind kind, const std::array<SlotParams, 2>& params, double dropout_rate,
                           bool training, Rng& rng) {
    if (kind == PropagatorKind::DenseAttention)
        throw ConfigError("dense attention is only available in the vanilla graph-transformer baseline");
    Tensor out = h;
    for (std::size_t k = 0; k < 2; ++k) {
        if (pair[k] == Slot::T) {
            const auto* p = std::get_if<TransformParams>(&params[k]);
            if (!p) throw ConfigError("T slot " + std::to_string(k) + " lacks a transform weight");
            out = transform(tape, out, p->weight, dropout_rate, training, rng);
        } else {
            out = propagate(tape, kind, out, ctx, params[k], dropout_rate, training, rng);
        }
    }
    return out;
}

}  // namespace gnnformer
