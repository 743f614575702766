#pragma once

#include <array>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gnnformer/graph.hpp"
#include "gnnformer/tensor.hpp"

namespace gnnformer {

enum class PropagatorKind { GcnLike, SageLike, GatLike, DenseAttention };
enum class Slot { P, T };
using SlotPair = std::array<Slot, 2>;

std::string to_string(PropagatorKind kind);
PropagatorKind parse_propagator(std::string_view text);

/// Block layout such as "TP+TP": one two-slot pair per PT-block.
struct OperatorSpec {
    std::vector<SlotPair> blocks;

    static OperatorSpec parse(std::string_view text);
    /// `n` copies of one pair.
    static OperatorSpec repeat(SlotPair pair, std::size_t n);
    std::string to_string() const;
    /// 1 to 3 blocks unless `relax_depth` is set (depth diagnostics only).
    void validate(bool relax_depth = false) const;

    friend bool operator==(const OperatorSpec&, const OperatorSpec&) = default;
};

/// Per-graph operators derived once from the raw adjacency. Tape records hold
/// references into this object, so it is shared and never moved after creation.
struct GraphContext {
    CsrGraph adjacency;  // A, unweighted, no self-loops
    CsrGraph gcn;        // D̃^{-1/2}(A+I)D̃^{-1/2}
    CsrGraph mean;       // row-mean over neighbors, empty rows for isolated nodes
    CsrGraph looped;     // A+I structure for attention neighborhoods

    static std::shared_ptr<const GraphContext> build(const CsrGraph& graph);
};

struct TransformParams {
    Tensor weight;
};
struct SageParams {
    Tensor w_self;
    Tensor w_neigh;
};
struct AttentionHead {
    Tensor projection;  // d' x d_h
    Tensor attn_src;    // d_h x 1, applied to the receiving node
    Tensor attn_dst;    // d_h x 1, applied to the sending node
};
struct GatParams {
    std::vector<AttentionHead> heads;
};
struct MhaHead {
    Tensor wq, wk, wv;  // each d' x d_h
};
struct MhaParams {
    std::vector<MhaHead> heads;
};

/// monostate stands for the parameter-free GCN-like propagator.
using SlotParams = std::variant<std::monostate, TransformParams, SageParams, GatParams, MhaParams>;

constexpr double kGatNegativeSlope = 0.2;

/// Uniform Glorot initialization.
MatrixXd glorot(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

SlotParams init_transform(int width, Rng& rng);
SlotParams init_propagator(PropagatorKind kind, int width, int heads, Rng& rng);
SlotParams init_slot(Slot slot, PropagatorKind kind, int width, int heads, Rng& rng);

struct NamedParameter {
    std::string name;
    Tensor tensor;
    bool decay = true;  // weight decay applies
};
void append_parameters(const SlotParams& params, const std::string& prefix, std::vector<NamedParameter>& out);

/// T: dropout(ReLU(h * w)).
Tensor transform(Tape& tape, const Tensor& h, const Tensor& w, double dropout_rate, bool training, Rng& rng);

/// Parameter-free propagation over sym-normalized A+I.
Tensor gcn_propagate(Tape& tape, const Tensor& h, const CsrGraph& normalized);

/// h * w_self + mean_{j in N(i)} h[j] * w_neigh. `mean_graph` comes from mean_weights().
Tensor sage_propagate(Tape& tape, const Tensor& h, const CsrGraph& mean_graph, const Tensor& w_self,
                      const Tensor& w_neigh);

/// Multi-head graph attention over `looped` (neighborhoods including self).
/// `alphas`, when given, receives one coefficient vector per head.
Tensor gat_propagate(Tape& tape, const Tensor& h, const CsrGraph& looped, const GatParams& params,
                     double attn_dropout, bool training, Rng& rng,
                     std::vector<std::vector<double>>* alphas = nullptr);

/// Dense all-pairs multi-head self-attention; the graph is ignored.
/// `attention`, when given, receives each head's n x n coefficient matrix.
Tensor dense_mha_propagate(Tape& tape, const Tensor& h, const MhaParams& params,
                           std::vector<MatrixXd>* attention = nullptr);

/// Applies one propagation step of the given kind.
Tensor propagate(Tape& tape, PropagatorKind kind, const Tensor& h, const GraphContext& ctx, const SlotParams& params,
                 double dropout_rate, bool training, Rng& rng);

/// Applies the two slots of one block left to right.
Tensor apply_operator_pair(Tape& tape, const SlotPair& pair, const Tensor& h, const GraphContext& ctx,
                           PropagatorKind kind, const std::array<SlotParams, 2>& params, double dropout_rate,
                           bool training, Rng& rng);

}  // namespace gnnformer
