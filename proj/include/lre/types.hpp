#pragma once
#include <Eigen/Dense>

namespace lre {

template <class S> using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S> using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S> using Mat2 = Eigen::Matrix<S, 2, 2>;
template <class S> using Vec2 = Eigen::Matrix<S, 2, 1>;

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Matrix2d = Eigen::Matrix2d;
using Vector2d = Eigen::Vector2d;
using ConstMatrixRef = Eigen::Ref<const MatrixXd>;
using ConstVectorRef = Eigen::Ref<const VectorXd>;

}  // namespace lre
