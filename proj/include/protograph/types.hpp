#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace protograph {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrixd = Matrix<double>;
using Vectord = Vector<double>;

/// Per-class embedding coordinates, one row per class.
template <typename Scalar>
using EmbeddingMatrix = Matrix<Scalar>;

/// Symmetric pairwise distances with a zero diagonal.
template <typename Scalar>
using DistanceMatrix = Matrix<Scalar>;

/// K x feature_dim matrix of learned class prototypes, one row per class.
template <typename Scalar>
using PrototypeSet = Matrix<Scalar>;

}  // namespace protograph
