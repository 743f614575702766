#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gnnformer/tensor.hpp"

namespace gnnformer {

using NodeId = std::int32_t;
using Edge = std::pair<NodeId, NodeId>;

/// Immutable compressed-row adjacency. Columns within a row are strictly
/// increasing. Weights, when present, align with col_indices.
class CsrGraph {
public:
    CsrGraph() = default;

    /// Builds from raw arrays and validates them. Symmetry is checked only
    /// when `require_symmetric` is set.
    CsrGraph(NodeId n, std::vector<std::int64_t> row_offsets, std::vector<NodeId> col_indices,
             std::optional<std::vector<double>> edge_weights = std::nullopt, bool require_symmetric = true);

    /// Symmetrized, deduplicated, self-loop-free graph over `n` nodes.
    static CsrGraph from_edge_list(NodeId n, std::span<const Edge> edges);

    NodeId num_nodes() const { return n_; }
    /// Stored (directed) entries; each undirected edge counts twice, a self-loop once.
    std::int64_t num_entries() const { return static_cast<std::int64_t>(col_indices_.size()); }
    /// Undirected edges excluding self-loops.
    std::int64_t num_undirected_edges() const;

    std::span<const std::int64_t> row_offsets() const { return row_offsets_; }
    std::span<const NodeId> col_indices() const { return col_indices_; }
    std::span<const NodeId> neighbors(NodeId i) const {
        return {col_indices_.data() + row_offsets_[i], col_indices_.data() + row_offsets_[i + 1]};
    }
    std::int64_t degree(NodeId i) const { return row_offsets_[i + 1] - row_offsets_[i]; }

    bool weighted() const { return weights_.has_value(); }
    std::span<const double> edge_weights() const {
        if (!weights_) throw ContractError("graph carries no edge weights");
        return *weights_;
    }
    /// Weight of the k-th stored entry; 1 for unweighted graphs.
    double weight_at(std::int64_t k) const { return weights_ ? (*weights_)[k] : 1.0; }

    bool has_edge(NodeId i, NodeId j) const;
    bool has_self_loops() const;

    /// Copy with a self-loop on every node (existing loops kept once). Weights dropped.
    CsrGraph with_self_loops() const;
    /// Same structure, new weights.
    CsrGraph with_weights(std::vector<double> weights) const;
    /// Same structure, weights dropped.
    CsrGraph unweighted() const;
    /// Relabels nodes: node i becomes perm[i].
    CsrGraph permuted(std::span<const NodeId> perm) const;

    std::vector<Edge> undirected_edges() const;
    MatrixXd to_dense() const;

    friend bool operator==(const CsrGraph&, const CsrGraph&) = default;

private:
    NodeId n_ = 0;
    std::vector<std::int64_t> row_offsets_{0};
    std::vector<NodeId> col_indices_;
    std::optional<std::vector<double>> weights_;
};

/// D̃^{-1/2} Ã D̃^{-1/2} weights, with Ã = A + I when `add_self_loops` is set.
CsrGraph sym_norm_weights(const CsrGraph& g, bool add_self_loops);

/// Row-mean weights 1/deg(i) over the existing neighbors (no self-loops added).
/// Rows of isolated nodes stay empty, so their aggregate is the zero vector.
CsrGraph mean_weights(const CsrGraph& g);

}  // namespace gnnformer
