#pragma once

// Differentiable dense and sparse operations over BasicTensor. Every op takes
// the tape first; when no input requires a gradient (or the tape is not
// recording) nothing is recorded and the op is a plain evaluation.
//
// Sparse ops keep a reference to their CsrGraph until backward(): the graph
// must outlive the tape records that use it.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gnnformer/errors.hpp"
#include "gnnformer/graph.hpp"
#include "gnnformer/tensor.hpp"

namespace gnnformer {

namespace detail {

template <typename Scalar>
void require_same_shape(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

template <typename Scalar>
constexpr Scalar gelu_c = Scalar(0.7978845608028654);  // sqrt(2/pi)
template <typename Scalar>
constexpr Scalar gelu_k = Scalar(0.044715);

}  // namespace detail

template <typename Scalar>
BasicTensor<Scalar> matmul(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
    if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ, " + a.shape() + " * " + b.shape());
    BasicTensor<Scalar> out((a.value() * b.value()).eval());
    if (tape.wants({&a, &b})) {
        tape.record(out, [a, b](const MatrixX<Scalar>& g) {
            if (a.requires_grad()) a.accumulate_grad(g * b.value().transpose());
            if (b.requires_grad()) b.accumulate_grad(a.value().transpose() * g);
        });
    }
    return out;
}

template <typename Scalar>
BasicTensor<Scalar> add(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
    detail::require_same_shape(a, b, "add");
    BasicTensor<Scalar> out((a.value() + b.value()).eval());
    if (tape.wants({&a, &b})) {
        tape.record(out, [a, b](const MatrixX<Scalar>& g) {
            a.accumulate_grad(g);
            b.accumulate_grad(g);
        });
    }
    return out;
}

template <typename Scalar>
BasicTensor<Scalar> sub(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
    detail::require_same_shape(a, b, "sub");
    BasicTensor<Scalar> out((a.value() - b.value()).eval());
    if (tape.wants({&a, &b})) {
        tape.record(out, [a, b](const MatrixX<Scalar>& g) {
            a.accumulate_grad(g);
            b.accumulate_grad(-g);
        });
    }
    return out;
}

/// Hadamard product.
template <typename Scalar>
BasicTensor<Scalar> mul(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
    detail::require_same_shape(a, b, "mul");
    BasicTensor<Scalar> out(a.value().cwiseProduct(b.value()).eval());
    if (tape.wants({&a, &b})) {
        tape.record(out, [a, b](const MatrixX<Scalar>& g) {
            if (a.requires_grad()) a.accumulate_grad(g.cwiseProduct(b.value()));
            if (b.requires_grad()) b.accumulate_grad(g.cwiseProduct(a.value()));
        });
    }
    return out;
}

template <typename Scalar>
BasicTensor<Scalar> scale(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a, Scalar factor) {
    BasicTensor<Scalar> out((a.value() * factor).eval());
    if (tape.wants({&a})) {
        tape.record(out, [a, factor](const MatrixX<Scalar>& g) { a.accumulate_grad(g * factor); });
    }
    return out;
}

template <typename Scalar>
BasicTensor<Scalar> transpose(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a) {
    BasicTensor<Scalar> out(MatrixX<Scalar>(a.value().transpose()));
    if (tape.wants({&a})) {
        tape.record(out, [a](const MatrixX<Scalar>& g) { a.accumulate_grad(g.transpose()); });
    }
    return out;
}

/// Horizontal concatenation of equally tall blocks.
template <typename Scalar>
BasicTensor<Scalar> concat_cols(BasicTape<Scalar>& tape, std::span<const BasicTensor<Scalar>> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw DimensionError("concat_cols: row mismatch " + p.shape());
        cols += p.cols();
    }
    MatrixX<Scalar> value(rows, cols);
    Eigen::Index offset = 0;
    bool any_grad = false;
    for (const auto& p : parts) {
        value.middleCols(offset, p.cols()) = p.value();
        offset += p.cols();
        any_grad = any_grad || tape.wants({&p});
    }
    BasicTensor<Scalar> out(std::move(value));
    if (any_grad) {
        std::vector<BasicTensor<Scalar>> inputs(parts.begin(), parts.end());
        tape.record(out, [inputs](const MatrixX<Scalar>& g) {
            Eigen::Index off = 0;
            for (const auto& p : inputs) {
                if (p.requires_grad()) p.accumulate_grad(g.middleCols(off, p.cols()));
                off += p.cols();
            }
        });
    }
    return out;
}

template <typename Scalar>
BasicTensor<Scalar> relu(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a) {
    BasicTensor<Scalar> out(a.value().cwiseMax(Scalar(0)).eval());
    if (tape.wants({&a})) {
        tape.record(out, [a](const MatrixX<Scalar>& g) {
            a.accumulate_grad((a.value().array() > Scalar(0)).select(g, Scalar(0)).matrix());
        });
    }
    return out;
}

template <typename Scalar>
BasicTensor<Scalar> leaky_relu(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a, Scalar slope) {
    BasicTensor<Scalar> out((a.value().array() > Scalar(0)).select(a.value(), a.value() * slope).eval());
    if (tape.wants({&a})) {
        tape.record(out, [a, slope](const MatrixX<Scalar>& g) {
            a.accumulate_grad((a.value().array() > Scalar(0)).select(g, g * slope).matrix());
        });
    }
    return out;
}

template <typename Scalar>
BasicTensor<Scalar> sigmoid(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a) {
    BasicTensor<Scalar> out(a.value().unaryExpr([](Scalar x) { return detail::sigmoid(x); }).eval());
    if (tape.wants({&a})) {
        tape.record(out, [a, y = out.value()](const MatrixX<Scalar>& g) {
            a.accumulate_grad((g.array() * y.array() * (Scalar(1) - y.array())).matrix());
        });
    }
    return out;
}

/// x * sigmoid(x), i.e. SiLU.
template <typename Scalar>
BasicTensor<Scalar> swish(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a) {
    BasicTensor<Scalar> out(a.value().unaryExpr([](Scalar x) { return x * detail::sigmoid(x); }).eval());
    if (tape.wants({&a})) {
        tape.record(out, [a](const MatrixX<Scalar>& g) {
            MatrixX<Scalar> d = a.value().unaryExpr([](Scalar x) {
                const Scalar s = detail::sigmoid(x);
                return s * (Scalar(1) + x * (Scalar(1) - s));
            });
            a.accumulate_grad(g.cwiseProduct(d));
        });
    }
    return out;
}

/// GELU, tanh approximation.
template <typename Scalar>
BasicTensor<Scalar> gelu(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a) {
    constexpr Scalar c = detail::gelu_c<Scalar>;
    constexpr Scalar k = detail::gelu_k<Scalar>;
    BasicTensor<Scalar> out(a.value()
                                .unaryExpr([](Scalar x) {
                                    return Scalar(0.5) * x * (Scalar(1) + std::tanh(c * (x + k * x * x * x)));
                                })
                                .eval());
    if (tape.wants({&a})) {
        tape.record(out, [a](const MatrixX<Scalar>& g) {
            MatrixX<Scalar> d = a.value().unaryExpr([](Scalar x) {
                const Scalar t = std::tanh(c * (x + k * x * x * x));
                return Scalar(0.5) * (Scalar(1) + t) +
                       Scalar(0.5) * x * (Scalar(1) - t * t) * c * (Scalar(1) + Scalar(3) * k * x * x);
            });
            a.accumulate_grad(g.cwiseProduct(d));
        });
    }
    return out;
}

enum class Elementwise { Add, Mul, Relu, Sigmoid, Swish, Gelu };

/// Single entry point over the elementwise family. Binary ops need `b`.
template <typename Scalar>
BasicTensor<Scalar> elementwise(BasicTape<Scalar>& tape, Elementwise op, const BasicTensor<Scalar>& a,
                                const BasicTensor<Scalar>* b = nullptr) {
    switch (op) {
        case Elementwise::Add:
        case Elementwise::Mul:
            if (b == nullptr) throw DimensionError("binary elementwise op needs a second operand");
            return op == Elementwise::Add ? add(tape, a, *b) : mul(tape, a, *b);
        case Elementwise::Relu: return relu(tape, a);
        case Elementwise::Sigmoid: return sigmoid(tape, a);
        case Elementwise::Swish: return swish(tape, a);
        case Elementwise::Gelu: return gelu(tape, a);
    }
    throw ConfigError("unknown elementwise op");
}

/// Sum of all entries as a 1x1 tensor.
template <typename Scalar>
BasicTensor<Scalar> sum(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& a) {
    auto out = BasicTensor<Scalar>::scalar(a.value().sum());
    if (tape.wants({&a})) {
        tape.record(out, [a](const MatrixX<Scalar>& g) {
            a.accumulate_grad(MatrixX<Scalar>::Constant(a.rows(), a.cols(), g(0, 0)));
        });
    }
    return out;
}

/// Row-wise normalization to zero mean / unit variance followed by the affine
/// `gain`, `bias` (both 1 x d).
template <typename Scalar>
BasicTensor<Scalar> layer_norm(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& h, const BasicTensor<Scalar>& gain,
                               const BasicTensor<Scalar>& bias, Scalar eps) {
    const Eigen::Index n = h.rows(), d = h.cols();
    if (d < 1) throw DimensionError("layer_norm: need at least one column");
    if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d)
        throw DimensionError("layer_norm: affine must be 1x" + std::to_string(d) + ", got " + gain.shape() + " and " +
                             bias.shape());
    if (!(eps > Scalar(0))) throw ConfigError("layer_norm: eps must be positive");

    MatrixX<Scalar> normalized(n, d);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = h.value().row(i);
        const Scalar mean = row.mean();
        const Scalar var = (row.array() - mean).square().mean();
        inv_std(i) = Scalar(1) / std::sqrt(var + eps);
        normalized.row(i) = (row.array() - mean) * inv_std(i);
    }
    MatrixX<Scalar> y = normalized;
    y.array().rowwise() *= gain.value().row(0).array();
    y.array().rowwise() += bias.value().row(0).array();
    BasicTensor<Scalar> out(std::move(y));
    if (tape.wants({&h, &gain, &bias})) {
        tape.record(out, [h, gain, bias, normalized = std::move(normalized), inv_std](const MatrixX<Scalar>& g) {
            if (gain.requires_grad()) gain.accumulate_grad(g.cwiseProduct(normalized).colwise().sum());
            if (bias.requires_grad()) bias.accumulate_grad(g.colwise().sum());
            if (h.requires_grad()) {
                MatrixX<Scalar> dn = g;
                dn.array().rowwise() *= gain.value().row(0).array();
                MatrixX<Scalar> dh(dn.rows(), dn.cols());
                for (Eigen::Index i = 0; i < dn.rows(); ++i) {
                    const Scalar mean_dn = dn.row(i).mean();
                    const Scalar mean_dn_x = dn.row(i).cwiseProduct(normalized.row(i)).mean();
                    dh.row(i) = inv_std(i) *
                                (dn.row(i).array() - mean_dn - normalized.row(i).array() * mean_dn_x);
                }
                h.accumulate_grad(dh);
            }
        });
    }
    return out;
}

/// Softmax along each row with max subtraction. Entries where `mask` is false
/// are excluded and come out as exact zeros.
template <typename Scalar>
BasicTensor<Scalar> row_softmax(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& scores,
                                const MaskMatrix* mask = nullptr) {
    const Eigen::Index n = scores.rows(), m = scores.cols();
    if (mask && (mask->rows() != n || mask->cols() != m))
        throw DimensionError("row_softmax: mask shape differs from scores " + scores.shape());
    MatrixX<Scalar> y = MatrixX<Scalar>::Zero(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        Scalar row_max = -std::numeric_limits<Scalar>::infinity();
        Eigen::Index valid = 0;
        for (Eigen::Index j = 0; j < m; ++j)
            if (!mask || (*mask)(i, j)) {
                row_max = std::max(row_max, scores.value()(i, j));
                ++valid;
            }
        // non-finite scores fall through and surface as NaN for the caller's divergence check
        if (valid == 0)
            throw DegenerateError("row_softmax: row " + std::to_string(i) + " has no valid entry");
        Scalar total = 0;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (mask && !(*mask)(i, j)) continue;
            y(i, j) = std::exp(scores.value()(i, j) - row_max);
            total += y(i, j);
        }
        y.row(i) /= total;
    }
    BasicTensor<Scalar> out(std::move(y));
    if (tape.wants({&scores})) {
        tape.record(out, [scores, y = out.value()](const MatrixX<Scalar>& g) {
            const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
            MatrixX<Scalar> ds = g;
            ds.colwise() -= dot;
            scores.accumulate_grad(ds.cwiseProduct(y));
        });
    }
    return out;
}

/// out[i] = sum over stored entries (i, j) of w_ij * h[j].
template <typename Scalar>
BasicTensor<Scalar> spmm(BasicTape<Scalar>& tape, const CsrGraph& g, const BasicTensor<Scalar>& h) {
    const NodeId n = g.num_nodes();
    if (h.rows() != n)
        throw DimensionError("spmm: graph has " + std::to_string(n) + " nodes, features are " + h.shape());
    MatrixX<Scalar> out_value = MatrixX<Scalar>::Zero(n, h.cols());
    auto offsets = g.row_offsets();
    auto cols = g.col_indices();
    for (NodeId i = 0; i < n; ++i)
        for (std::int64_t k = offsets[i]; k < offsets[i + 1]; ++k)
            out_value.row(i) += static_cast<Scalar>(g.weight_at(k)) * h.value().row(cols[k]);
    BasicTensor<Scalar> out(std::move(out_value));
    if (tape.wants({&h})) {
        tape.record(out, [&g, h](const MatrixX<Scalar>& grad) {
            MatrixX<Scalar> dh = MatrixX<Scalar>::Zero(h.rows(), h.cols());
            auto offsets = g.row_offsets();
            auto cols = g.col_indices();
            for (NodeId i = 0; i < g.num_nodes(); ++i)
                for (std::int64_t k = offsets[i]; k < offsets[i + 1]; ++k)
                    dh.row(cols[k]) += static_cast<Scalar>(g.weight_at(k)) * grad.row(i);
            h.accumulate_grad(dh);
        });
    }
    return out;
}

/// Inverted dropout: survivors are scaled by 1/(1-rate). Identity in eval mode.
template <typename Scalar>
BasicTensor<Scalar> dropout(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& h, double rate, bool training,
                            Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return h;
    std::bernoulli_distribution keep(1.0 - rate);
    const Scalar survivor_scale = Scalar(1) / Scalar(1.0 - rate);
    MatrixX<Scalar> mask(h.rows(), h.cols());
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
        for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = keep(rng) ? survivor_scale : Scalar(0);
    BasicTensor<Scalar> out(h.value().cwiseProduct(mask).eval());
    if (tape.wants({&h})) {
        tape.record(out, [h, mask = std::move(mask)](const MatrixX<Scalar>& g) {
            h.accumulate_grad(g.cwiseProduct(mask));
        });
    }
    return out;
}

/// s * a + (1 - s) * b with s = sigmoid(logit), logit a 1x1 tensor.
template <typename Scalar>
BasicTensor<Scalar> sigmoid_mix(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& logit, const BasicTensor<Scalar>& a,
                                const BasicTensor<Scalar>& b) {
    detail::require_same_shape(a, b, "sigmoid_mix");
    const Scalar s = detail::sigmoid(logit.item());
    BasicTensor<Scalar> out((s * a.value() + (Scalar(1) - s) * b.value()).eval());
    if (tape.wants({&logit, &a, &b})) {
        tape.record(out, [logit, a, b, s](const MatrixX<Scalar>& g) {
            if (a.requires_grad()) a.accumulate_grad(s * g);
            if (b.requires_grad()) b.accumulate_grad((Scalar(1) - s) * g);
            if (logit.requires_grad()) {
                MatrixX<Scalar> d(1, 1);
                d(0, 0) = s * (Scalar(1) - s) * g.cwiseProduct(a.value() - b.value()).sum();
                logit.accumulate_grad(d);
            }
        });
    }
    return out;
}

/// s * a with s = sigmoid(logit).
template <typename Scalar>
BasicTensor<Scalar> sigmoid_gate(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& logit,
                                 const BasicTensor<Scalar>& a) {
    const Scalar s = detail::sigmoid(logit.item());
    BasicTensor<Scalar> out((s * a.value()).eval());
    if (tape.wants({&logit, &a})) {
        tape.record(out, [logit, a, s](const MatrixX<Scalar>& g) {
            if (a.requires_grad()) a.accumulate_grad(s * g);
            if (logit.requires_grad()) {
                MatrixX<Scalar> d(1, 1);
                d(0, 0) = s * (Scalar(1) - s) * g.cwiseProduct(a.value()).sum();
                logit.accumulate_grad(d);
            }
        });
    }
    return out;
}

/// Sum over `rows` of -log(max(probs[i, labels[i]], floor)).
template <typename Scalar>
BasicTensor<Scalar> masked_nll(BasicTape<Scalar>& tape, const BasicTensor<Scalar>& probs, std::span<const int> labels,
                               std::span<const NodeId> rows, Scalar floor = Scalar(1e-12)) {
    if (static_cast<Eigen::Index>(labels.size()) != probs.rows())
        throw DimensionError("masked_nll: " + std::to_string(labels.size()) + " labels for " + probs.shape());
    Scalar loss = 0;
    for (NodeId i : rows) {
        const int y = labels[i];
        if (y < 0 || y >= probs.cols()) throw DimensionError("masked_nll: label out of range");
        loss -= std::log(std::max(probs.value()(i, y), floor));
    }
    auto out = BasicTensor<Scalar>::scalar(loss);
    if (tape.wants({&probs})) {
        std::vector<NodeId> kept(rows.begin(), rows.end());
        std::vector<int> ys(labels.begin(), labels.end());
        tape.record(out, [probs, kept = std::move(kept), ys = std::move(ys), floor](const MatrixX<Scalar>& g) {
            MatrixX<Scalar> d = MatrixX<Scalar>::Zero(probs.rows(), probs.cols());
            for (NodeId i : kept) {
                const Scalar p = probs.value()(i, ys[i]);
                if (p > floor) d(i, ys[i]) -= g(0, 0) / p;
            }
            probs.accumulate_grad(d);
        });
    }
    return out;
}

/// Graph attention over a neighborhood structure (self-loops included by the
/// caller). For each stored entry (i, j):
///   e_ij  = leaky_relu(src[i] + dst[j])
///   a_ij  = softmax over j in row i of e_ij, then dropout on a_ij
///   out_i = sum_j a_ij * values[j]
/// `src` and `dst` are n x 1 score columns. When `alpha_out` is given it
/// receives the pre-dropout coefficients aligned with the graph's entries.
template <typename Scalar>
BasicTensor<Scalar> neighborhood_attention(BasicTape<Scalar>& tape, const CsrGraph& g, const BasicTensor<Scalar>& src,
                                           const BasicTensor<Scalar>& dst, const BasicTensor<Scalar>& values,
                                           Scalar slope, double dropout_rate, bool training, Rng& rng,
                                           std::vector<Scalar>* alpha_out = nullptr) {
    const NodeId n = g.num_nodes();
    if (src.rows() != n || dst.rows() != n || values.rows() != n || src.cols() != 1 || dst.cols() != 1)
        throw DimensionError("neighborhood_attention: expected n x 1 scores and n-row values for n=" +
                             std::to_string(n));
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("attention dropout must lie in [0, 1)");
    auto offsets = g.row_offsets();
    auto cols = g.col_indices();
    const std::size_t entries = static_cast<std::size_t>(g.num_entries());

    std::vector<Scalar> pre(entries), alpha(entries), kept(entries, Scalar(1));
    for (NodeId i = 0; i < n; ++i) {
        if (offsets[i] == offsets[i + 1])
            throw DegenerateError("neighborhood_attention: node " + std::to_string(i) + " has an empty neighborhood");
        Scalar row_max = -std::numeric_limits<Scalar>::infinity();
        for (std::int64_t k = offsets[i]; k < offsets[i + 1]; ++k) {
            pre[k] = src.value()(i, 0) + dst.value()(cols[k], 0);
            const Scalar e = pre[k] > 0 ? pre[k] : slope * pre[k];
            alpha[k] = e;
            row_max = std::max(row_max, e);
        }
        Scalar total = 0;
        for (std::int64_t k = offsets[i]; k < offsets[i + 1]; ++k) {
            alpha[k] = std::exp(alpha[k] - row_max);
            total += alpha[k];
        }
        for (std::int64_t k = offsets[i]; k < offsets[i + 1]; ++k) alpha[k] /= total;
    }
    if (training && dropout_rate > 0.0) {
        std::bernoulli_distribution keep(1.0 - dropout_rate);
        const Scalar survivor_scale = Scalar(1) / Scalar(1.0 - dropout_rate);
        for (auto& m : kept) m = keep(rng) ? survivor_scale : Scalar(0);
    }
    MatrixX<Scalar> out_value = MatrixX<Scalar>::Zero(n, values.cols());
    for (NodeId i = 0; i < n; ++i)
        for (std::int64_t k = offsets[i]; k < offsets[i + 1]; ++k)
            out_value.row(i) += (alpha[k] * kept[k]) * values.value().row(cols[k]);
    if (alpha_out) *alpha_out = alpha;

    BasicTensor<Scalar> out(std::move(out_value));
    if (tape.wants({&src, &dst, &values})) {
        tape.record(out, [&g, src, dst, values, slope, pre = std::move(pre), alpha = std::move(alpha),
                          kept = std::move(kept)](const MatrixX<Scalar>& grad) {
            auto offsets = g.row_offsets();
            auto cols = g.col_indices();
            const NodeId n = g.num_nodes();
            MatrixX<Scalar> dvalues = MatrixX<Scalar>::Zero(values.rows(), values.cols());
            MatrixX<Scalar> dsrc = MatrixX<Scalar>::Zero(n, 1);
            MatrixX<Scalar> ddst = MatrixX<Scalar>::Zero(n, 1);
            std::vector<Scalar> dalpha(alpha.size());
            for (NodeId i = 0; i < n; ++i) {
                Scalar weighted = 0;
                for (std::int64_t k = offsets[i]; k < offsets[i + 1]; ++k) {
                    const NodeId j = cols[k];
                    dvalues.row(j) += (alpha[k] * kept[k]) * grad.row(i);
                    dalpha[k] = kept[k] * grad.row(i).dot(values.value().row(j));
                    weighted += alpha[k] * dalpha[k];
                }
                for (std::int64_t k = offsets[i]; k < offsets[i + 1]; ++k) {
                    const Scalar de = alpha[k] * (dalpha[k] - weighted);
                    const Scalar dpre = pre[k] > 0 ? de : slope * de;
                    dsrc(i, 0) += dpre;
                    ddst(cols[k], 0) += dpre;
                }
            }
            if (values.requires_grad()) values.accumulate_grad(dvalues);
            if (src.requires_grad()) src.accumulate_grad(dsrc);
            if (dst.requires_grad()) dst.accumulate_grad(ddst);
        });
    }
    return out;
}

}  // namespace gnnformer
