#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gdbn/tensor.hpp"

namespace gdbn {

class Tape;

/// Lightweight handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
    long rows() const { return value().rows(); }
    long cols() const { return value().cols(); }
};

/// Reverse-mode autodiff tape. Define-by-run: every primitive appends a node
/// holding its value, the input node ids and a closure that applies the
/// vector-Jacobian product during backward(). The tape is rebuilt every
/// training step; clear() recycles the value/grad buffers through a pool so
/// steady-state training does no large allocations.
///
/// Every primitive validates shapes before computing and checks the result
/// for NaN/Inf afterwards; a non-finite value is a contract violation and
/// throws immediately, naming the op.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Register an external tensor. Gradients are tracked only when
    /// requires_grad is set (parameters); data/constants leave it false.
    Var leaf(const Tensor& v, bool requires_grad = false);

    // --- primitives ------------------------------------------------------
    Var matmul(Var a, Var b);
    /// Shared-lhs batched product: a is (n x k), b is (batch*k x m) holding
    /// `batch` stacked (k x m) blocks; the result is (batch*n x m). The lhs
    /// gradient accumulates over the batch.
    Var matmul_shared(Var a, Var b, long batch);
    /// Equal shapes, or b a (1 x m) row vector broadcast over a's rows, or b
    /// scalar.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scalar_mul(Var a, double s);
    Var add_scalar(Var a, double s);
    Var sin_(Var a);
    Var tanh_(Var a);
    Var relu(Var a);
    Var exp_(Var a);
    Var log_(Var a);
    Var square(Var a);
    Var abs_(Var a);
    /// Clamp to [lo, hi]; gradient passes through inside the interval.
    Var clamp(Var a, double lo, double hi);
    Var sum(Var a);
    Var mean(Var a);
    /// Same elements, new shape (numel must match).
    Var reshape(Var a, std::vector<long> shape);
    Var concat_cols(Var a, Var b);
    Var slice_cols(Var a, long start, long len);
    Var slice_rows(Var a, long start, long len);
    /// (1 x c) -> (n x c)
    Var broadcast_rows(Var a, long n);
    /// (r x c) -> (outer*r*inner x c): each row repeated `inner` times in a
    /// row, the whole block repeated `outer` times.
    Var repeat_rows(Var a, long inner, long outer);
    /// Interleaved row-stack of L equally shaped (B*block x c) slices into
    /// (B*L*block x c), laid out batch-major: rows of batch element b are the
    /// `block` rows of slice 0, then slice 1, ... slice L-1.
    Var stack_interleaved(std::span<const Var> slices, long block);

    /// Accumulate d(root)/d(leaf) into every reachable node that requires
    /// grad. root must be scalar. Each node's vjp runs exactly once, in
    /// reverse insertion (= reverse topological) order.
    void backward(Var root);

    const Tensor& value(Var v) const { return node(v.id).value; }
    /// Gradient of v after backward(); zeros if v was unreachable.
    Tensor grad(Var v) const;
    bool requires_grad(Var v) const { return node(v.id).requires_grad; }
    const char* op_name(Var v) const { return node(v.id).op; }
    const std::vector<int>& inputs_of(Var v) const { return node(v.id).inputs; }
    size_t size() const { return nodes_.size(); }

    /// Drop all nodes, recycling their buffers for the next build.
    void clear();

private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until backward touches it
        const char* op = "leaf";
        bool requires_grad = false;
        std::vector<int> inputs;
        std::function<void(Tape&, int)> vjp;  // id of the node itself
    };

    Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

    Tensor pooled(std::vector<long> shape);
    Tensor pooled_zeros(std::vector<long> shape);
    void recycle(Tensor&& t);

    int push(const char* op, Tensor value, std::vector<int> inputs,
             std::function<void(Tape&, int)> vjp);
    void check_same_tape(Var v) const;
    Tensor& grad_buffer(int id);

    std::vector<Node> nodes_;
    std::unordered_map<size_t, std::vector<std::vector<double>>> pool_;
};

/// Report from comparing AD gradients against central finite differences.
struct FdReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst_param;
    long elements_checked = 0;

    bool within(double tol) const { return max_rel_error < tol; }
};

/// A differentiable scalar loss over named external parameter tensors. The
/// checker registers every param as a leaf (in order) and passes the leaves to
/// `build`, which wires the graph and returns the scalar root. The build must
/// be deterministic given the current parameter values (fix any noise draws
/// before calling).
struct FdProblem {
    std::vector<std::pair<std::string, Tensor*>> params;
    std::function<Var(Tape&, std::vector<Var>&)> build;
};

/// Central-difference check of the AD gradient, elementwise over every
/// parameter. Relative error uses max(|ad|, |fd|) as the scale; elements
/// where both are below 1e-6 in absolute value count as exact.
FdReport finite_difference_check(FdProblem& problem, double step = 1e-5);

}  // namespace gdbn
