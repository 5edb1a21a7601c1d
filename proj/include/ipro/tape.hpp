#pragma once

#include "ipro/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ipro {

/// Op kinds recorded on the tape.
enum class Op : std::uint8_t {
    kLeaf,         // differentiable input (parameters, probe points)
    kConstant,     // non-differentiable input (data, noise, reference values)
    kMatMul,       // [m,k]x[k,n] -> [m,n] or [m,k]x[k] -> [m]
    kAdd,          // elementwise; scalar broadcasts against tensor
    kSub,
    kMul,
    kScalarMul,    // tensor times compile-time-known scalar
    kTanh,
    kSum,          // -> [1]
    kMean,         // -> [1]
    kL2Norm,       // sqrt(sum x^2 + eps) -> [1]
    kL2Normalize,  // x / sqrt(sum x^2 + eps)
    kDot,          // rank-1 pair -> [1]
    kCosSim,       // rank-1 pair -> [1]
    kSqErrMean,    // mean((a-b)^2) -> [1]
    kConcat,       // rank-1 inputs -> rank-1
    kSlice,        // flat [offset, offset+len) -> [len]
    kReshape,      // same data, new shape
    kStopGrad,     // identity forward, blocks backward
};

const char* op_name(Op op);

struct Node {
    Op op = Op::kLeaf;
    std::int32_t a = -1;
    std::int32_t b = -1;
    std::vector<std::int32_t> rest;  // concat inputs beyond the first two
    Tensor value;
    Array adjoint;   // sized lazily by backward()
    bool touched = false;
    double scalar = 0.0;       // kScalarMul factor
    std::int64_t offset = 0;   // kSlice start
};

class Tape;

/// Lightweight handle to a tape node.
struct Var {
    Tape* tape = nullptr;
    std::int32_t idx = -1;
    bool valid() const { return tape != nullptr && idx >= 0; }
};

/// Define-by-run reverse-mode tape over dense 64-bit-float tensors. A tape is
/// single-threaded; distinct tapes over read-only parameter snapshots may run
/// concurrently.
class Tape {
  public:
    Var leaf(Tensor value);
    Var constant(Tensor value);
    Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

    const Tensor& value(Var v) const;
    /// Adjoint of a node after backward(); zero-sized before.
    const Array& adjoint(Var v) const;
    Tensor adjoint_tensor(Var v) const;

    /// Reverse sweep from a scalar-shaped root. Resets all adjoints first, so
    /// repeated calls on the same graph are bitwise reproducible.
    void backward(Var root);

    std::size_t node_count() const { return nodes_.size(); }

    // Low-level recording hooks used by the op free functions.
    Var push(Node n);
    void check_owned(Var v, const char* op) const;

  private:
    std::vector<Node> nodes_;

    Node& at(Var v);
    const Node& at(Var v) const;
    void propagate(std::int32_t i);
    void accumulate(std::int32_t target, const Array& g);
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scalar_mul(Var a, double c);
Var tanh(Var a);
Var sum(Var a);
Var mean(Var a);
Var l2_norm(Var a);
Var l2_normalize(Var a);
Var dot(Var a, Var b);
Var cosine_similarity(Var a, Var b);
Var squared_error_mean(Var a, Var b);
Var concat(std::span<const Var> xs);
Var slice(Var a, std::int64_t offset, std::int64_t len);
Var reshape(Var a, std::vector<std::int64_t> shape);
Var stop_gradient(Var a);

}  // namespace ipro
