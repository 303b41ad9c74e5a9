#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace rkhs_rl {

/// Filter-state features (log prior error, windowed posterior error, log
/// input norm, smoothed log displacement).
using State = Eigen::Vector4d;

/// Concatenated [state; action] coordinates fed to the kernel.
using Encoded = Eigen::Matrix<double, 5, 1>;

inline constexpr int kEncodedDim = 5;

/// A state-action point. `action` is the LMP exponent p.
struct Point {
  State state = State::Zero();
  double action = 1.0;

  Encoded encode() const;
  bool operator==(const Point& other) const;
};

/// Gaussian kernel on the encoded state-action coordinates.
double gaussian_kernel(const Point& z1, const Point& z2, double bandwidth);

/// Gaussian kernel on raw vectors of equal length (states, for instance).
double gaussian_kernel(const Eigen::Ref<const Eigen::VectorXd>& x1,
                       const Eigen::Ref<const Eigen::VectorXd>& x2,
                       double bandwidth);

/// Frozen random-Fourier-feature embedding of the Gaussian kernel.
///
/// Row i of `frequencies()` is v_i ~ N(0, I / bandwidth^2) and `phases()(i)`
/// is u_i ~ U[0, 2 pi). The embedding is
///   phi(z)_i = sqrt(2 / D) cos(v_i . enc(z) + u_i),
/// so phi(z) . phi(z') approximates gaussian_kernel(z, z', bandwidth).
class RffMap {
 public:
  RffMap(Eigen::MatrixXd frequencies, Eigen::VectorXd phases,
         double bandwidth, std::uint64_t seed);

  const Eigen::MatrixXd& frequencies() const { return frequencies_; }
  const Eigen::VectorXd& phases() const { return phases_; }
  double bandwidth() const { return bandwidth_; }
  int feature_dim() const { return static_cast<int>(phases_.size()); }
  std::uint64_t seed() const { return seed_; }

  /// Scale applied to every coordinate, sqrt(2 / D).
  double amplitude() const { return amplitude_; }

 private:
  Eigen::MatrixXd frequencies_;  // D x 5
  Eigen::VectorXd phases_;       // D
  double bandwidth_;
  std::uint64_t seed_;
  double amplitude_;
};

/// Draws an RffMap deterministically from `seed`.
RffMap sample_rff(std::uint64_t seed, int feature_dim, double bandwidth);

/// phi(z) in RFF coordinates.
Eigen::VectorXd featurize(const RffMap& map, const Point& z);

/// Columns are featurize(points[i]).
Eigen::MatrixXd feature_matrix(const RffMap& map, std::span<const Point> points);

/// Gram matrix Phi^T Phi of a feature matrix.
Eigen::MatrixXd gram(const Eigen::MatrixXd& features);

}  // namespace rkhs_rl
