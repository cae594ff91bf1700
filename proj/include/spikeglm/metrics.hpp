#pragma once

// Recovery metrics comparing fitted filters against ground truth.

#include <Eigen/Dense>

#include <cmath>

namespace spikeglm {

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar pearson_correlation(const Eigen::MatrixBase<DerivedA>& a,
                                              const Eigen::MatrixBase<DerivedB>& b)
{
    using Scalar = typename DerivedA::Scalar;
    const auto ca = (a.array() - a.mean()).matrix().eval();
    const auto cb = (b.array() - b.mean()).matrix().eval();
    const Scalar denom = ca.norm() * cb.norm();
    return denom > Scalar(0) ? ca.dot(cb) / denom : Scalar(0);
}

/// ||estimate - truth||_F / ||truth||_F
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar relative_frobenius_error(const Eigen::MatrixBase<DerivedA>& estimate,
                                                   const Eigen::MatrixBase<DerivedB>& truth)
{
    return (estimate - truth).norm() / truth.norm();
}

}  // namespace spikeglm
