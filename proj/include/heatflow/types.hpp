#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

namespace heatflow {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

template <typename S>
using VecXT = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using MatXT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec3T = Eigen::Matrix<S, 3, 1>;
template <typename S>
using Mat3T = Eigen::Matrix<S, 3, 3>;

/// Dense rank-3 array T(a, i, j), column-major with `a` fastest.
///
/// Used for first-derivative stacks (e.g. dH_dq with slice_last(i) = dH/dq_i)
/// and for second partials of vector-valued maps, where T(b, i, j) is the
/// (i, j) second partial of output component b.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(int d0, int d1, int d2)
      : d0_(d0), d1_(d1), d2_(d2),
        data_(static_cast<std::size_t>(d0) * d1 * d2, 0.0) {}

  double& operator()(int a, int i, int j) { return data_[index(a, i, j)]; }
  double operator()(int a, int i, int j) const { return data_[index(a, i, j)]; }

  int dim0() const { return d0_; }
  int dim1() const { return d1_; }
  int dim2() const { return d2_; }

  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  /// View of the d0 x d1 matrix T(:, :, j); contiguous by construction.
  Eigen::Map<const MatX> slice_last(int j) const {
    return Eigen::Map<const MatX>(data_.data() + static_cast<std::size_t>(j) * d0_ * d1_,
                                  d0_, d1_);
  }
  Eigen::Map<MatX> slice_last(int j) {
    return Eigen::Map<MatX>(data_.data() + static_cast<std::size_t>(j) * d0_ * d1_,
                            d0_, d1_);
  }

  /// R(i, j) = sum_a z(a) * T(a, i, j).
  MatX contract_first(const VecX& z) const {
    MatX r(d1_, d2_);
    for (int j = 0; j < d2_; ++j)
      for (int i = 0; i < d1_; ++i) {
        double acc = 0.0;
        for (int a = 0; a < d0_; ++a) acc += z(a) * (*this)(a, i, j);
        r(i, j) = acc;
      }
    return r;
  }

  /// M(a, i) = sum_j T(a, i, j) * u(j)  (directional derivative of a Jacobian stack).
  MatX contract_last(const VecX& u) const {
    MatX m = MatX::Zero(d0_, d1_);
    for (int j = 0; j < d2_; ++j) m += slice_last(j) * u(j);
    return m;
  }

 private:
  std::size_t index(int a, int i, int j) const {
    return (static_cast<std::size_t>(j) * d1_ + i) * d0_ + a;
  }

  int d0_ = 0, d1_ = 0, d2_ = 0;
  std::vector<double> data_;
};

/// Dense rank-4 array T(a, b, i, j); slice(i, j) views the (a, b) matrix.
class Tensor4 {
 public:
  Tensor4() = default;
  Tensor4(int d0, int d1, int d2, int d3)
      : d0_(d0), d1_(d1), d2_(d2), d3_(d3),
        data_(static_cast<std::size_t>(d0) * d1 * d2 * d3, 0.0) {}

  double& operator()(int a, int b, int i, int j) { return data_[index(a, b, i, j)]; }
  double operator()(int a, int b, int i, int j) const { return data_[index(a, b, i, j)]; }

  int dim0() const { return d0_; }
  int dim1() const { return d1_; }
  int dim2() const { return d2_; }
  int dim3() const { return d3_; }

  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  Eigen::Map<const MatX> slice(int i, int j) const {
    return Eigen::Map<const MatX>(
        data_.data() + (static_cast<std::size_t>(j) * d2_ + i) * d0_ * d1_, d0_, d1_);
  }
  Eigen::Map<MatX> slice(int i, int j) {
    return Eigen::Map<MatX>(
        data_.data() + (static_cast<std::size_t>(j) * d2_ + i) * d0_ * d1_, d0_, d1_);
  }

 private:
  std::size_t index(int a, int b, int i, int j) const {
    return ((static_cast<std::size_t>(j) * d2_ + i) * d1_ + b) * d0_ + a;
  }

  int d0_ = 0, d1_ = 0, d2_ = 0, d3_ = 0;
  std::vector<double> data_;
};

}  // namespace heatflow
