#pragma once

#include <Eigen/Core>

#include "funnelctl/errors.hpp"

namespace funnelctl {

/// A point (zeta, zeta', ..., zeta^(r-1)) of R^{rm}, stored as an m x r
/// matrix whose column j holds the j-th time derivative. Column-major
/// storage makes the stacked rm-vector a plain reshape.
template <typename Scalar = double>
class DerivativeStack {
public:
    using Blocks = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    DerivativeStack() = default;

    DerivativeStack(Eigen::Index order, Eigen::Index dim) : blocks_(Blocks::Zero(dim, order)) {
        if (order < 1 || dim < 1) throw UsageError("DerivativeStack needs r >= 1 and m >= 1");
    }

    template <typename Derived>
    explicit DerivativeStack(const Eigen::MatrixBase<Derived>& blocks) : blocks_(blocks) {
        if (blocks_.cols() < 1 || blocks_.rows() < 1)
            throw UsageError("DerivativeStack needs r >= 1 and m >= 1");
    }

    /// Builds a stack from the stacked vector (z_1, ..., z_r), each z_j in R^m.
    template <typename Derived>
    static DerivativeStack from_stacked(const Eigen::MatrixBase<Derived>& z, Eigen::Index dim) {
        if (dim < 1 || z.size() == 0 || z.size() % dim != 0)
            throw UsageError("stacked vector length is not a multiple of m");
        Blocks b = Eigen::Map<const Blocks>(Vector(z).data(), dim, z.size() / dim);
        return DerivativeStack(b);
    }

    Eigen::Index order() const noexcept { return blocks_.cols(); }
    Eigen::Index dim() const noexcept { return blocks_.rows(); }

    auto block(Eigen::Index j) { return blocks_.col(j); }
    auto block(Eigen::Index j) const { return blocks_.col(j); }

    Blocks& blocks() noexcept { return blocks_; }
    const Blocks& blocks() const noexcept { return blocks_; }

    Vector stacked() const { return Eigen::Map<const Vector>(blocks_.data(), blocks_.size()); }

    bool all_finite() const { return blocks_.allFinite(); }

    friend DerivativeStack operator-(const DerivativeStack& a, const DerivativeStack& b) {
        if (a.order() != b.order() || a.dim() != b.dim())
            throw UsageError("DerivativeStack shape mismatch");
        return DerivativeStack(Blocks(a.blocks_ - b.blocks_));
    }
    friend DerivativeStack operator+(const DerivativeStack& a, const DerivativeStack& b) {
        if (a.order() != b.order() || a.dim() != b.dim())
            throw UsageError("DerivativeStack shape mismatch");
        return DerivativeStack(Blocks(a.blocks_ + b.blocks_));
    }
    friend DerivativeStack operator*(Scalar s, const DerivativeStack& a) {
        return DerivativeStack(Blocks(s * a.blocks_));
    }

private:
    Blocks blocks_;
};

using Stack = DerivativeStack<double>;

}  // namespace funnelctl
