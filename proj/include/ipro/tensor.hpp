#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipro {

/// Flat 64-bit-float storage; all tensors are row-major views over it.
using Array = Eigen::ArrayXd;

/// Epsilon added under the square root in norm-like reductions so that
/// near-zero inputs stay differentiable. Shared by every code path that
/// normalizes, so oracles and implementation agree exactly.
inline constexpr double kNormEps = 1e-12;

inline std::int64_t shape_product(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto s : shape) n *= s;
    return n;
}

inline std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense 64-bit-float tensor: a shape plus flat row-major data.
struct Tensor {
    std::vector<std::int64_t> shape;
    Array data;

    Tensor() = default;
    Tensor(std::vector<std::int64_t> shape_, Array data_)
        : shape(std::move(shape_)), data(std::move(data_)) {
        if (shape_product(shape) != data.size())
            throw std::invalid_argument("Tensor: shape " + shape_str(shape) +
                                        " does not match data length " + std::to_string(data.size()));
        for (auto s : shape)
            if (s <= 0) throw std::invalid_argument("Tensor: non-positive dimension in " + shape_str(shape));
    }

    static Tensor zeros(std::vector<std::int64_t> shape_) {
        auto n = shape_product(shape_);
        return Tensor(std::move(shape_), Array::Zero(n));
    }

    static Tensor scalar(double v) {
        Array a(1);
        a(0) = v;
        return Tensor({1}, std::move(a));
    }

    static Tensor vector(std::initializer_list<double> vs) {
        Array a(static_cast<Eigen::Index>(vs.size()));
        Eigen::Index i = 0;
        for (double v : vs) a(i++) = v;
        return Tensor({static_cast<std::int64_t>(vs.size())}, std::move(a));
    }

    static Tensor from_array(Array a) {
        std::vector<std::int64_t> s{a.size()};
        return Tensor(std::move(s), std::move(a));
    }

    std::int64_t size() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    bool is_scalar() const { return size() == 1; }

    /// Value of a size-1 tensor.
    double item() const {
        if (!is_scalar()) throw std::logic_error("Tensor::item on shape " + shape_str(shape));
        return data(0);
    }

    bool all_finite() const { return data.isFinite().all(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

/// Row-major matrix view helpers (matmul is the only rank-2 consumer).
using MatView = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutMatView = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline MatView mat_view(const Tensor& t) {
    if (t.rank() != 2) throw std::invalid_argument("mat_view: expected rank-2, got " + shape_str(t.shape));
    return MatView(t.data.data(), t.shape[0], t.shape[1]);
}

}  // namespace ipro
