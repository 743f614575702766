#pragma once

// Independent reference implementations used by unit and acceptance tests.
// Nothing here calls into the code it is checking except to evaluate the
// forward function being differentiated.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "gnnformer/bundle.hpp"
#include "gnnformer/graph.hpp"
#include "gnnformer/tensor.hpp"

namespace oracle {

using gnnformer::MatrixXd;
using gnnformer::NodeId;
using gnnformer::Rng;
using gnnformer::Tape;
using gnnformer::Tensor;

struct FdReport {
    double max_rel_err = 0;
    std::size_t checked = 0;
};

/// Central differences of the scalar `loss` with respect to every entry of
/// every tensor in `params`, compared to the tape's analytic gradient.
/// Relative error uses max(|analytic|, |numeric|, floor) as denominator.
inline FdReport finite_difference_check(std::vector<Tensor> params, const std::function<Tensor(Tape&)>& loss,
                                        double step = 1e-5, double floor = 1e-6) {
    for (auto& p : params) p.zero_grad();
    {
        Tape tape;
        const Tensor l = loss(tape);
        tape.backward(l);
    }
    std::vector<MatrixXd> analytic;
    for (const auto& p : params)
        analytic.push_back(p.has_grad() ? p.grad() : MatrixXd::Zero(p.rows(), p.cols()));

    auto eval = [&] {
        Tape tape(false);
        return loss(tape).item();
    };
    FdReport report;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& value = params[k].mutable_value();
        for (Eigen::Index i = 0; i < value.size(); ++i) {
            double& x = value.data()[i];
            const double saved = x;
            x = saved + step;
            const double up = eval();
            x = saved - step;
            const double down = eval();
            x = saved;
            const double numeric = (up - down) / (2 * step);
            const double a = analytic[k].data()[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            report.max_rel_err = std::max(report.max_rel_err, std::abs(a - numeric) / denom);
            ++report.checked;
        }
    }
    return report;
}

inline MatrixXd uniform(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

/// Erdős–Rényi edge list, i < j.
inline std::vector<gnnformer::Edge> random_edges(NodeId n, double p, Rng& rng) {
    std::bernoulli_distribution coin(p);
    std::vector<gnnformer::Edge> edges;
    for (NodeId i = 0; i < n; ++i)
        for (NodeId j = i + 1; j < n; ++j)
            if (coin(rng)) edges.emplace_back(i, j);
    return edges;
}

inline gnnformer::CsrGraph random_graph(NodeId n, double p, Rng& rng) {
    const auto edges = random_edges(n, p, rng);
    return gnnformer::CsrGraph::from_edge_list(n, edges);
}

/// 0/1 symmetric adjacency built straight from the edge list.
inline MatrixXd dense_adjacency(NodeId n, const std::vector<gnnformer::Edge>& edges) {
    MatrixXd a = MatrixXd::Zero(n, n);
    for (auto [i, j] : edges) {
        if (i == j) continue;
        a(i, j) = 1;
        a(j, i) = 1;
    }
    return a;
}

/// D̃^{-1/2}(A+I)D̃^{-1/2} from the dense adjacency.
inline MatrixXd dense_gcn(const MatrixXd& a) {
    const MatrixXd looped = a + MatrixXd::Identity(a.rows(), a.cols());
    const Eigen::VectorXd inv_sqrt = looped.rowwise().sum().array().rsqrt();
    return inv_sqrt.asDiagonal() * looped * inv_sqrt.asDiagonal();
}

/// Row-mean operator over neighbors (zero row for isolated nodes).
inline MatrixXd dense_mean(const MatrixXd& a) {
    MatrixXd m = a;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double deg = a.row(i).sum();
        if (deg > 0) m.row(i) /= deg;
    }
    return m;
}

/// Labels cycle through classes; features random; one split per seed in `seeds`.
inline gnnformer::GraphBundle random_bundle(NodeId n, int d, int classes, double p, Rng& rng,
                                           std::vector<gnnformer::Seed> seeds = {0}) {
    gnnformer::GraphBundle b;
    b.graph = random_graph(n, p, rng);
    b.features = uniform(n, d, rng);
    b.num_classes = classes;
    for (NodeId i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(i % classes));
    return gnnformer::make_splits(std::move(b), seeds);
}

inline std::vector<NodeId> random_permutation(NodeId n, Rng& rng) {
    std::vector<NodeId> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

/// Row i of `m` moved to row perm[i].
inline MatrixXd permute_rows(const MatrixXd& m, const std::vector<NodeId>& perm) {
    MatrixXd out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(perm[i]) = m.row(i);
    return out;
}

/// -trace(Yᵀ log P) over the masked rows, with Y one-hot.
inline double trace_cross_entropy(const MatrixXd& probs, const std::vector<int>& labels,
                                  const std::vector<NodeId>& mask, double floor = 1e-12) {
    MatrixXd y = MatrixXd::Zero(static_cast<Eigen::Index>(mask.size()), probs.cols());
    MatrixXd logp(static_cast<Eigen::Index>(mask.size()), probs.cols());
    for (std::size_t r = 0; r < mask.size(); ++r) {
        y(r, labels[mask[r]]) = 1;
        logp.row(r) = probs.row(mask[r]).array().max(floor).log();
    }
    return -(y.transpose() * logp).trace();
}

}  // namespace oracle
