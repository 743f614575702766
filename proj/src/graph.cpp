#include "gnnformer/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gnnformer {

CsrGraph::CsrGraph(NodeId n, std::vector<std::int64_t> row_offsets, std::vector<NodeId> col_indices,
                   std::optional<std::vector<double>> edge_weights, bool require_symmetric)
    : n_(n), row_offsets_(std::move(row_offsets)), col_indices_(std::move(col_indices)),
      weights_(std::move(edge_weights)) {
    if (n_ < 0) throw ValidationError("negative node count");
    if (row_offsets_.size() != static_cast<std::size_t>(n_) + 1)
        throw ValidationError("row_offsets must have n+1 entries");
    if (row_offsets_.front() != 0 || row_offsets_.back() != static_cast<std::int64_t>(col_indices_.size()))
        throw ValidationError("row_offsets must start at 0 and end at the entry count");
    if (weights_ && weights_->size() != col_indices_.size())
        throw ValidationError("edge_weights must align with col_indices");
    for (NodeId i = 0; i < n_; ++i) {
        if (row_offsets_[i + 1] < row_offsets_[i]) throw ValidationError("row_offsets must be nondecreasing");
        auto row = neighbors(i);
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (row[k] < 0 || row[k] >= n_)
                throw ValidationError("column index " + std::to_string(row[k]) + " out of range in row " +
                                      std::to_string(i));
            if (k > 0 && row[k] <= row[k - 1])
                throw ValidationError("columns of row " + std::to_string(i) + " not strictly increasing");
        }
    }
    if (weights_) {
        for (double w : *weights_)
            if (!std::isfinite(w)) throw ValidationError("non-finite edge weight");
    }
    if (require_symmetric) {
        for (NodeId i = 0; i < n_; ++i)
            for (NodeId j : neighbors(i))
                if (!has_edge(j, i))
                    throw ValidationError("graph not symmetric: edge (" + std::to_string(i) + "," +
                                          std::to_string(j) + ") lacks its reverse");
    }
}

CsrGraph CsrGraph::from_edge_list(NodeId n, std::span<const Edge> edges) {
    if (n < 0) throw ValidationError("negative node count");
    std::vector<std::vector<NodeId>> adj(n);
    for (const auto& [i, j] : edges) {
        if (i < 0 || i >= n || j < 0 || j >= n)
            throw ValidationError("edge (" + std::to_string(i) + "," + std::to_string(j) +
                                  ") out of range for n=" + std::to_string(n));
        if (i == j) continue;
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    std::vector<std::int64_t> offsets(static_cast<std::size_t>(n) + 1, 0);
    std::vector<NodeId> cols;
    for (NodeId i = 0; i < n; ++i) {
        auto& row = adj[i];
        std::sort(row.begin(), row.end());
        row.erase(std::unique(row.begin(), row.end()), row.end());
        cols.insert(cols.end(), row.begin(), row.end());
        offsets[i + 1] = static_cast<std::int64_t>(cols.size());
    }
    return CsrGraph(n, std::move(offsets), std::move(cols), std::nullopt, false);
}

std::int64_t CsrGraph::num_undirected_edges() const {
    std::int64_t count = 0;
    for (NodeId i = 0; i < n_; ++i)
        for (NodeId j : neighbors(i))
            if (j > i) ++count;
    return count;
}

bool CsrGraph::has_edge(NodeId i, NodeId j) const {
    auto row = neighbors(i);
    return std::binary_search(row.begin(), row.end(), j);
}

bool CsrGraph::has_self_loops() const {
    for (NodeId i = 0; i < n_; ++i)
        if (has_edge(i, i)) return true;
    return false;
}

CsrGraph CsrGraph::with_self_loops() const {
    std::vector<std::int64_t> offsets(static_cast<std::size_t>(n_) + 1, 0);
    std::vector<NodeId> cols;
    cols.reserve(col_indices_.size() + static_cast<std::size_t>(n_));
    for (NodeId i = 0; i < n_; ++i) {
        bool placed = false;
        for (NodeId j : neighbors(i)) {
            if (!placed && j >= i) {
                if (j != i) cols.push_back(i);
                placed = true;
            }
            cols.push_back(j);
        }
        if (!placed) cols.push_back(i);
        offsets[i + 1] = static_cast<std::int64_t>(cols.size());
    }
    return CsrGraph(n_, std::move(offsets), std::move(cols), std::nullopt, false);
}

CsrGraph CsrGraph::with_weights(std::vector<double> weights) const {
    return CsrGraph(n_, row_offsets_, col_indices_, std::move(weights), false);
}

CsrGraph CsrGraph::unweighted() const { return CsrGraph(n_, row_offsets_, col_indices_, std::nullopt, false); }

CsrGraph CsrGraph::permuted(std::span<const NodeId> perm) const {
    if (perm.size() != static_cast<std::size_t>(n_)) throw DimensionError("permutation length mismatch");
    std::vector<std::vector<std::pair<NodeId, double>>> rows(n_);
    for (NodeId i = 0; i < n_; ++i)
        for (std::int64_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k)
            rows[perm[i]].emplace_back(perm[col_indices_[k]], weight_at(k));
    std::vector<std::int64_t> offsets(static_cast<std::size_t>(n_) + 1, 0);
    std::vector<NodeId> cols;
    std::vector<double> weights;
    for (NodeId i = 0; i < n_; ++i) {
        std::sort(rows[i].begin(), rows[i].end());
        for (const auto& [j, w] : rows[i]) {
            cols.push_back(j);
            weights.push_back(w);
        }
        offsets[i + 1] = static_cast<std::int64_t>(cols.size());
    }
    std::optional<std::vector<double>> w;
    if (weights_) w = std::move(weights);
    return CsrGraph(n_, std::move(offsets), std::move(cols), std::move(w), false);
}

std::vector<Edge> CsrGraph::undirected_edges() const {
    std::vector<Edge> out;
    for (NodeId i = 0; i < n_; ++i)
        for (NodeId j : neighbors(i))
            if (j > i) out.emplace_back(i, j);
    return out;
}

MatrixXd CsrGraph::to_dense() const {
    MatrixXd dense = MatrixXd::Zero(n_, n_);
    for (NodeId i = 0; i < n_; ++i)
        for (std::int64_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k)
            dense(i, col_indices_[k]) = weight_at(k);
    return dense;
}

CsrGraph sym_norm_weights(const CsrGraph& g, bool add_self_loops) {
    CsrGraph base = add_self_loops ? g.with_self_loops() : g.unweighted();
    const NodeId n = base.num_nodes();
    for (NodeId i = 0; i < n; ++i)
        if (base.degree(i) == 0)
            throw DegenerateError("node " + std::to_string(i) + " has zero degree; enable self-loops");
    std::vector<double> weights(static_cast<std::size_t>(base.num_entries()));
    auto offsets = base.row_offsets();
    auto cols = base.col_indices();
    for (NodeId i = 0; i < n; ++i)
        for (std::int64_t k = offsets[i]; k < offsets[i + 1]; ++k)
            weights[k] = 1.0 / std::sqrt(static_cast<double>(base.degree(i) * base.degree(cols[k])));
    return base.with_weights(std::move(weights));
}

CsrGraph mean_weights(const CsrGraph& g) {
    std::vector<double> weights(static_cast<std::size_t>(g.num_entries()));
    auto offsets = g.row_offsets();
    for (NodeId i = 0; i < g.num_nodes(); ++i) {
        const double w = 1.0 / static_cast<double>(std::max<std::int64_t>(g.degree(i), 1));
        for (std::int64_t k = offsets[i]; k < offsets[i + 1]; ++k) weights[k] = w;
    }
    return g.with_weights(std::move(weights));
}

}  // namespace gnnformer
