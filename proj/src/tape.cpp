#include "ipro/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ipro {

const char* op_name(Op op) {
    switch (op) {
        case Op::kLeaf: return "leaf";
        case Op::kConstant: return "constant";
        case Op::kMatMul: return "matmul";
        case Op::kAdd: return "add";
        case Op::kSub: return "subtract";
        case Op::kMul: return "elementwise-multiply";
        case Op::kScalarMul: return "scalar-multiply";
        case Op::kTanh: return "tanh";
        case Op::kSum: return "sum";
        case Op::kMean: return "mean";
        case Op::kL2Norm: return "l2-norm";
        case Op::kL2Normalize: return "l2-normalize";
        case Op::kDot: return "dot";
        case Op::kCosSim: return "cosine-similarity";
        case Op::kSqErrMean: return "squared-error-mean";
        case Op::kConcat: return "concatenate";
        case Op::kSlice: return "slice";
        case Op::kReshape: return "reshape";
        case Op::kStopGrad: return "stop-gradient";
    }
    return "?";
}

namespace {

[[noreturn]] void shape_error(Op op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op_name(op)) + ": incompatible shapes " +
                                shape_str(a.shape) + " and " + shape_str(b.shape));
}

[[noreturn]] void shape_error(Op op, const Tensor& a, const char* what) {
    throw std::invalid_argument(std::string(op_name(op)) + ": " + what + ", got " + shape_str(a.shape));
}

bool scalar_broadcast_ok(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) || a.is_scalar() || b.is_scalar();
}

void require_same_tape(Var a, Var b, Op op) {
    if (a.tape != b.tape)
        throw std::logic_error(std::string(op_name(op)) + ": operands live on different tapes");
}

void require_rank1_pair(Op op, const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size()) shape_error(op, a, b);
}

}  // namespace

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Node& Tape::at(Var v) { return nodes_[static_cast<std::size_t>(v.idx)]; }
const Node& Tape::at(Var v) const { return nodes_[static_cast<std::size_t>(v.idx)]; }

void Tape::check_owned(Var v, const char* op) const {
    if (v.tape != this || v.idx < 0 || static_cast<std::size_t>(v.idx) >= nodes_.size())
        throw std::logic_error(std::string(op) + ": var does not belong to this tape");
}

Var Tape::leaf(Tensor value) {
    Node n;
    n.op = Op::kLeaf;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::constant(Tensor value) {
    Node n;
    n.op = Op::kConstant;
    n.value = std::move(value);
    return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
    check_owned(v, "value");
    return at(v).value;
}

const Array& Tape::adjoint(Var v) const {
    check_owned(v, "adjoint");
    return at(v).adjoint;
}

Tensor Tape::adjoint_tensor(Var v) const {
    check_owned(v, "adjoint");
    const Node& n = at(v);
    if (n.adjoint.size() != n.value.size())
        throw std::logic_error("adjoint_tensor: backward has not run over this node");
    return Tensor(n.value.shape, n.adjoint);
}

void Tape::accumulate(std::int32_t target, const Array& g) {
    Node& t = nodes_[static_cast<std::size_t>(target)];
    t.adjoint += g;
    t.touched = true;
}

void Tape::backward(Var root) {
    check_owned(root, "backward");
    if (!at(root).value.is_scalar())
        throw std::invalid_argument("backward: root must be scalar-shaped, got " +
                                    shape_str(at(root).value.shape));
    for (Node& n : nodes_) {
        n.adjoint = Array::Zero(n.value.size());
        n.touched = false;
    }
    Node& r = at(root);
    r.adjoint(0) = 1.0;
    r.touched = true;
    for (std::int32_t i = root.idx; i >= 0; --i) {
        if (nodes_[static_cast<std::size_t>(i)].touched) propagate(i);
    }
}

void Tape::propagate(std::int32_t i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    const Array& g = n.adjoint;
    switch (n.op) {
        case Op::kLeaf:
        case Op::kConstant:
        case Op::kStopGrad:
            return;
        case Op::kMatMul: {
            Node& na = nodes_[static_cast<std::size_t>(n.a)];
            Node& nb = nodes_[static_cast<std::size_t>(n.b)];
            const std::int64_t m = na.value.shape[0];
            const std::int64_t k = na.value.shape[1];
            MatView A(na.value.data.data(), m, k);
            // Accumulate straight into the input adjoints; the outer products
            // dominate backward cost, so no temporaries here.
            if (nb.value.rank() == 1) {
                Eigen::Map<const Eigen::VectorXd> x(nb.value.data.data(), k);
                Eigen::Map<const Eigen::VectorXd> gv(g.data(), m);
                MutMatView(na.adjoint.data(), m, k).noalias() += gv * x.transpose();
                na.touched = true;
                Eigen::Map<Eigen::VectorXd>(nb.adjoint.data(), k).noalias() += A.transpose() * gv;
                nb.touched = true;
            } else {
                const std::int64_t c = nb.value.shape[1];
                MatView B(nb.value.data.data(), k, c);
                MatView G(g.data(), m, c);
                MutMatView(na.adjoint.data(), m, k).noalias() += G * B.transpose();
                na.touched = true;
                MutMatView(nb.adjoint.data(), k, c).noalias() += A.transpose() * G;
                nb.touched = true;
            }
            return;
        }
        case Op::kAdd:
        case Op::kSub: {
            const Node& na = nodes_[static_cast<std::size_t>(n.a)];
            const Node& nb = nodes_[static_cast<std::size_t>(n.b)];
            const double sign = (n.op == Op::kSub) ? -1.0 : 1.0;
            if (na.value.is_scalar() && !n.value.is_scalar())
                accumulate(n.a, Array::Constant(1, g.sum()));
            else
                accumulate(n.a, g);
            if (nb.value.is_scalar() && !n.value.is_scalar())
                accumulate(n.b, Array::Constant(1, sign * g.sum()));
            else
                accumulate(n.b, sign * g);
            return;
        }
        case Op::kMul: {
            const Node& na = nodes_[static_cast<std::size_t>(n.a)];
            const Node& nb = nodes_[static_cast<std::size_t>(n.b)];
            if (na.value.is_scalar() && !nb.value.is_scalar()) {
                accumulate(n.a, Array::Constant(1, (g * nb.value.data).sum()));
                accumulate(n.b, g * na.value.data(0));
            } else if (nb.value.is_scalar() && !na.value.is_scalar()) {
                accumulate(n.a, g * nb.value.data(0));
                accumulate(n.b, Array::Constant(1, (g * na.value.data).sum()));
            } else {
                accumulate(n.a, g * nb.value.data);
                accumulate(n.b, g * na.value.data);
            }
            return;
        }
        case Op::kScalarMul:
            accumulate(n.a, n.scalar * g);
            return;
        case Op::kTanh:
            accumulate(n.a, g * (1.0 - n.value.data.square()));
            return;
        case Op::kSum:
            accumulate(n.a, Array::Constant(nodes_[static_cast<std::size_t>(n.a)].value.size(), g(0)));
            return;
        case Op::kMean: {
            const auto sz = nodes_[static_cast<std::size_t>(n.a)].value.size();
            accumulate(n.a, Array::Constant(sz, g(0) / static_cast<double>(sz)));
            return;
        }
        case Op::kL2Norm: {
            const Array& x = nodes_[static_cast<std::size_t>(n.a)].value.data;
            accumulate(n.a, (g(0) / n.value.data(0)) * x);
            return;
        }
        case Op::kL2Normalize: {
            const Array& y = n.value.data;
            const double norm = n.scalar;  // cached forward norm
            const double yg = (y * g).sum();
            accumulate(n.a, (g - yg * y) / norm);
            return;
        }
        case Op::kDot: {
            const Array& a = nodes_[static_cast<std::size_t>(n.a)].value.data;
            const Array& b = nodes_[static_cast<std::size_t>(n.b)].value.data;
            accumulate(n.a, g(0) * b);
            accumulate(n.b, g(0) * a);
            return;
        }
        case Op::kCosSim: {
            const Array& a = nodes_[static_cast<std::size_t>(n.a)].value.data;
            const Array& b = nodes_[static_cast<std::size_t>(n.b)].value.data;
            const double na = std::sqrt(a.square().sum() + kNormEps);
            const double nb = std::sqrt(b.square().sum() + kNormEps);
            const double c = n.value.data(0);
            accumulate(n.a, g(0) * (b / (na * nb) - (c / (na * na)) * a));
            accumulate(n.b, g(0) * (a / (na * nb) - (c / (nb * nb)) * b));
            return;
        }
        case Op::kSqErrMean: {
            const Array& a = nodes_[static_cast<std::size_t>(n.a)].value.data;
            const Array& b = nodes_[static_cast<std::size_t>(n.b)].value.data;
            const double scale = 2.0 * g(0) / static_cast<double>(a.size());
            Array d = scale * (a - b);
            accumulate(n.a, d);
            accumulate(n.b, -d);
            return;
        }
        case Op::kConcat: {
            std::int64_t off = 0;
            auto feed = [&](std::int32_t in) {
                const auto sz = nodes_[static_cast<std::size_t>(in)].value.size();
                accumulate(in, g.segment(off, sz));
                off += sz;
            };
            feed(n.a);
            if (n.b >= 0) feed(n.b);
            for (auto in : n.rest) feed(in);
            return;
        }
        case Op::kSlice: {
            const Node& na = nodes_[static_cast<std::size_t>(n.a)];
            Array full = Array::Zero(na.value.size());
            full.segment(n.offset, n.value.size()) = g;
            accumulate(n.a, full);
            return;
        }
        case Op::kReshape:
            accumulate(n.a, g);
            return;
    }
}

// ---------------------------------------------------------------------------
// Recording free functions
// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
    require_same_tape(a, b, Op::kMatMul);
    a.tape->check_owned(a, "matmul");
    const Tensor& ta = a.tape->value(a);
    const Tensor& tb = b.tape->value(b);
    if (ta.rank() != 2) shape_error(Op::kMatMul, ta, tb);
    const std::int64_t m = ta.shape[0];
    const std::int64_t k = ta.shape[1];
    Node n;
    n.op = Op::kMatMul;
    n.a = a.idx;
    n.b = b.idx;
    if (tb.rank() == 1) {
        if (tb.shape[0] != k) shape_error(Op::kMatMul, ta, tb);
        Array out(m);
        Eigen::Map<Eigen::VectorXd>(out.data(), m) =
            MatView(ta.data.data(), m, k) * Eigen::Map<const Eigen::VectorXd>(tb.data.data(), k);
        n.value = Tensor({m}, std::move(out));
    } else if (tb.rank() == 2) {
        if (tb.shape[0] != k) shape_error(Op::kMatMul, ta, tb);
        const std::int64_t c = tb.shape[1];
        Array out(m * c);
        MutMatView(out.data(), m, c) = MatView(ta.data.data(), m, k) * MatView(tb.data.data(), k, c);
        n.value = Tensor({m, c}, std::move(out));
    } else {
        shape_error(Op::kMatMul, ta, tb);
    }
    return a.tape->push(std::move(n));
}

namespace {

Var elementwise2(Op op, Var a, Var b) {
    require_same_tape(a, b, op);
    a.tape->check_owned(a, op_name(op));
    const Tensor& ta = a.tape->value(a);
    const Tensor& tb = b.tape->value(b);
    if (!scalar_broadcast_ok(ta, tb)) shape_error(op, ta, tb);
    Node n;
    n.op = op;
    n.a = a.idx;
    n.b = b.idx;
    const Tensor& big = ta.is_scalar() ? tb : ta;
    Array out(big.size());
    switch (op) {
        case Op::kAdd:
            if (ta.is_scalar() && !tb.is_scalar()) out = ta.data(0) + tb.data;
            else if (tb.is_scalar() && !ta.is_scalar()) out = ta.data + tb.data(0);
            else out = ta.data + tb.data;
            break;
        case Op::kSub:
            if (ta.is_scalar() && !tb.is_scalar()) out = ta.data(0) - tb.data;
            else if (tb.is_scalar() && !ta.is_scalar()) out = ta.data - tb.data(0);
            else out = ta.data - tb.data;
            break;
        case Op::kMul:
            if (ta.is_scalar() && !tb.is_scalar()) out = ta.data(0) * tb.data;
            else if (tb.is_scalar() && !ta.is_scalar()) out = ta.data * tb.data(0);
            else out = ta.data * tb.data;
            break;
        default:
            throw std::logic_error("elementwise2: bad op");
    }
    n.value = Tensor(big.shape, std::move(out));
    return a.tape->push(std::move(n));
}

}  // namespace

Var add(Var a, Var b) { return elementwise2(Op::kAdd, a, b); }
Var sub(Var a, Var b) { return elementwise2(Op::kSub, a, b); }
Var mul(Var a, Var b) { return elementwise2(Op::kMul, a, b); }

Var scalar_mul(Var a, double c) {
    a.tape->check_owned(a, "scalar-multiply");
    const Tensor& ta = a.tape->value(a);
    Node n;
    n.op = Op::kScalarMul;
    n.a = a.idx;
    n.scalar = c;
    n.value = Tensor(ta.shape, c * ta.data);
    return a.tape->push(std::move(n));
}

Var tanh(Var a) {
    a.tape->check_owned(a, "tanh");
    const Tensor& ta = a.tape->value(a);
    Node n;
    n.op = Op::kTanh;
    n.a = a.idx;
    n.value = Tensor(ta.shape, ta.data.tanh());
    return a.tape->push(std::move(n));
}

Var sum(Var a) {
    a.tape->check_owned(a, "sum");
    Node n;
    n.op = Op::kSum;
    n.a = a.idx;
    n.value = Tensor::scalar(a.tape->value(a).data.sum());
    return a.tape->push(std::move(n));
}

Var mean(Var a) {
    a.tape->check_owned(a, "mean");
    const Tensor& ta = a.tape->value(a);
    Node n;
    n.op = Op::kMean;
    n.a = a.idx;
    n.value = Tensor::scalar(ta.data.sum() / static_cast<double>(ta.size()));
    return a.tape->push(std::move(n));
}

Var l2_norm(Var a) {
    a.tape->check_owned(a, "l2-norm");
    Node n;
    n.op = Op::kL2Norm;
    n.a = a.idx;
    n.value = Tensor::scalar(std::sqrt(a.tape->value(a).data.square().sum() + kNormEps));
    return a.tape->push(std::move(n));
}

Var l2_normalize(Var a) {
    a.tape->check_owned(a, "l2-normalize");
    const Tensor& ta = a.tape->value(a);
    Node n;
    n.op = Op::kL2Normalize;
    n.a = a.idx;
    const double norm = std::sqrt(ta.data.square().sum() + kNormEps);
    n.scalar = norm;
    n.value = Tensor(ta.shape, ta.data / norm);
    return a.tape->push(std::move(n));
}

Var dot(Var a, Var b) {
    require_same_tape(a, b, Op::kDot);
    a.tape->check_owned(a, "dot");
    const Tensor& ta = a.tape->value(a);
    const Tensor& tb = b.tape->value(b);
    require_rank1_pair(Op::kDot, ta, tb);
    Node n;
    n.op = Op::kDot;
    n.a = a.idx;
    n.b = b.idx;
    n.value = Tensor::scalar((ta.data * tb.data).sum());
    return a.tape->push(std::move(n));
}

Var cosine_similarity(Var a, Var b) {
    require_same_tape(a, b, Op::kCosSim);
    a.tape->check_owned(a, "cosine-similarity");
    const Tensor& ta = a.tape->value(a);
    const Tensor& tb = b.tape->value(b);
    require_rank1_pair(Op::kCosSim, ta, tb);
    Node n;
    n.op = Op::kCosSim;
    n.a = a.idx;
    n.b = b.idx;
    const double na = std::sqrt(ta.data.square().sum() + kNormEps);
    const double nb = std::sqrt(tb.data.square().sum() + kNormEps);
    n.value = Tensor::scalar((ta.data * tb.data).sum() / (na * nb));
    return a.tape->push(std::move(n));
}

Var squared_error_mean(Var a, Var b) {
    require_same_tape(a, b, Op::kSqErrMean);
    a.tape->check_owned(a, "squared-error-mean");
    const Tensor& ta = a.tape->value(a);
    const Tensor& tb = b.tape->value(b);
    if (!ta.same_shape(tb)) shape_error(Op::kSqErrMean, ta, tb);
    Node n;
    n.op = Op::kSqErrMean;
    n.a = a.idx;
    n.b = b.idx;
    n.value = Tensor::scalar((ta.data - tb.data).square().sum() / static_cast<double>(ta.size()));
    return a.tape->push(std::move(n));
}

Var concat(std::span<const Var> xs) {
    if (xs.empty()) throw std::invalid_argument("concatenate: no inputs");
    Tape* tape = xs[0].tape;
    std::int64_t total = 0;
    for (const Var& x : xs) {
        if (x.tape != tape) throw std::logic_error("concatenate: operands live on different tapes");
        const Tensor& t = tape->value(x);
        if (t.rank() != 1) shape_error(Op::kConcat, t, "rank-1 inputs required");
        total += t.size();
    }
    Node n;
    n.op = Op::kConcat;
    Array out(total);
    std::int64_t off = 0;
    for (const Var& x : xs) {
        const Tensor& t = tape->value(x);
        out.segment(off, t.size()) = t.data;
        off += t.size();
    }
    n.a = xs[0].idx;
    if (xs.size() > 1) n.b = xs[1].idx;
    for (std::size_t i = 2; i < xs.size(); ++i) n.rest.push_back(xs[i].idx);
    n.value = Tensor({total}, std::move(out));
    return tape->push(std::move(n));
}

Var slice(Var a, std::int64_t offset, std::int64_t len) {
    a.tape->check_owned(a, "slice");
    const Tensor& ta = a.tape->value(a);
    if (offset < 0 || len <= 0 || offset + len > ta.size())
        throw std::invalid_argument("slice: range [" + std::to_string(offset) + "," +
                                    std::to_string(offset + len) + ") out of bounds for " +
                                    shape_str(ta.shape));
    Node n;
    n.op = Op::kSlice;
    n.a = a.idx;
    n.offset = offset;
    n.value = Tensor({len}, ta.data.segment(offset, len));
    return a.tape->push(std::move(n));
}

Var reshape(Var a, std::vector<std::int64_t> shape) {
    a.tape->check_owned(a, "reshape");
    const Tensor& ta = a.tape->value(a);
    if (shape_product(shape) != ta.size())
        throw std::invalid_argument("reshape: target " + shape_str(shape) + " does not match " +
                                    shape_str(ta.shape));
    Node n;
    n.op = Op::kReshape;
    n.a = a.idx;
    n.value = Tensor(std::move(shape), ta.data);
    return a.tape->push(std::move(n));
}

Var stop_gradient(Var a) {
    a.tape->check_owned(a, "stop-gradient");
    Node n;
    n.op = Op::kStopGrad;
    n.a = a.idx;
    n.value = a.tape->value(a);
    return a.tape->push(std::move(n));
}

}  // namespace ipro
