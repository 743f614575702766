#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gnnformer/errors.hpp"

namespace gnnformer {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatrixXd = MatrixX<double>;
using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

/// Shared handle to a dense 2-D value that may participate in reverse-mode
/// differentiation. Copies alias the same storage, so a parameter handed to
/// several ops accumulates one gradient.
template <typename Scalar>
class BasicTensor {
public:
    using Matrix = MatrixX<Scalar>;

    BasicTensor() = default;

    explicit BasicTensor(Matrix value, bool requires_grad = false)
        : node_(std::make_shared<Node>(Node{std::move(value), std::nullopt, requires_grad})) {}

    static BasicTensor constant(Matrix value) { return BasicTensor(std::move(value), false); }
    static BasicTensor parameter(Matrix value) { return BasicTensor(std::move(value), true); }
    static BasicTensor zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad = false) {
        return BasicTensor(Matrix::Zero(rows, cols), requires_grad);
    }
    static BasicTensor scalar(Scalar v, bool requires_grad = false) {
        Matrix m(1, 1);
        m(0, 0) = v;
        return BasicTensor(std::move(m), requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    std::string shape() const { return shape_string(node_->value); }

    const Matrix& value() const { return node_->value; }
    /// Direct write access, for optimizers and finite-difference probes.
    Matrix& mutable_value() { return node_->value; }
    Scalar item() const {
        if (rows() != 1 || cols() != 1) throw ContractError("item() on non-scalar tensor " + shape());
        return node_->value(0, 0);
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) {
        node_->requires_grad = flag;
        if (!flag) node_->grad.reset();
    }

    bool has_grad() const { return node_->grad.has_value(); }
    const Matrix& grad() const {
        if (!node_->grad) throw ContractError("tensor has no gradient");
        return *node_->grad;
    }
    void zero_grad() { node_->grad.reset(); }

    /// Adds into the gradient buffer. No-op for tensors that do not require grad.
    template <typename Derived>
    void accumulate_grad(const Eigen::MatrixBase<Derived>& g) const {
        if (!node_->requires_grad) return;
        if (g.rows() != rows() || g.cols() != cols())
            throw DimensionError("gradient shape " + shape_string(g) + " does not match tensor " + shape());
        if (node_->grad)
            *node_->grad += g;
        else
            node_->grad.emplace(g);
    }

    bool same_as(const BasicTensor& other) const { return node_ == other.node_; }

private:
    struct Node {
        Matrix value;
        std::optional<Matrix> grad;
        bool requires_grad = false;
    };
    std::shared_ptr<Node> node_;
};

/// Ordered record of differentiable operations. backward() replays the
/// records once, newest first; a second call without reset() is rejected.
template <typename Scalar>
class BasicTape {
public:
    using Tensor = BasicTensor<Scalar>;
    using Matrix = MatrixX<Scalar>;
    using BackwardFn = std::function<void(const Matrix& output_grad)>;

    explicit BasicTape(bool recording = true) : recording_(recording) {}

    BasicTape(const BasicTape&) = delete;
    BasicTape& operator=(const BasicTape&) = delete;
    BasicTape(BasicTape&&) noexcept = default;
    BasicTape& operator=(BasicTape&&) noexcept = default;

    bool recording() const { return recording_; }
    std::size_t size() const { return records_.size(); }

    /// True when an op over these inputs must be recorded.
    bool wants(std::initializer_list<const Tensor*> inputs) const {
        if (!recording_) return false;
        for (const Tensor* t : inputs)
            if (t->requires_grad()) return true;
        return false;
    }

    /// Registers `output` as produced by a differentiable op. The output is
    /// flagged requires_grad so that downstream ops keep recording.
    void record(Tensor& output, BackwardFn fn) {
        if (consumed_) throw ContractError("tape already replayed; call reset() before recording");
        output.set_requires_grad(true);
        records_.push_back(Record{output, std::move(fn)});
    }

    void backward(const Tensor& loss) {
        if (loss.rows() != 1 || loss.cols() != 1)
            throw ContractError("backward() needs a 1x1 loss, got " + loss.shape());
        if (consumed_) throw ContractError("backward() called twice without reset()");
        consumed_ = true;
        if (!loss.requires_grad()) return;
        loss.accumulate_grad(Matrix::Ones(1, 1));
        for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
            if (!it->output.has_grad()) continue;
            it->backward(it->output.grad());
        }
    }

    /// Drops all records (and with them every intermediate buffer).
    void reset() {
        records_.clear();
        consumed_ = false;
    }

private:
    struct Record {
        Tensor output;
        BackwardFn backward;
    };
    std::vector<Record> records_;
    bool recording_ = true;
    bool consumed_ = false;
};

using Tensor = BasicTensor<double>;
using Tape = BasicTape<double>;

}  // namespace gnnformer
