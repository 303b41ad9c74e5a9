#pragma once

#include <Eigen/Dense>

namespace rkhs_rl::linalg {

/// Condition-number ceiling for symmetric and general solves.
inline constexpr double kConditionGuard = 1e12;

/// Relative cutoff below which eigenvalues are dropped by `pinv_psd`.
inline constexpr double kPinvCutoff = 1e-10;

/// 2-norm condition estimate of a symmetric positive semidefinite matrix.
double condition_psd(const Eigen::MatrixXd& a);

/// 2-norm condition number of a general square matrix (via SVD).
double condition_general(const Eigen::MatrixXd& a);

/// Solves (K + sigma I) X = B for symmetric K without forming an inverse.
///
/// Throws SingularSystem when the condition estimate of K + sigma I reaches
/// kConditionGuard; the message carries the estimate.
Eigen::MatrixXd solve_ridge(const Eigen::MatrixXd& k, double sigma,
                            const Eigen::MatrixXd& rhs);

/// LU solve of a general square system with the same condition guard.
Eigen::MatrixXd solve_general(const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& rhs);

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix by spectral
/// truncation at kPinvCutoff times the largest eigenvalue.
Eigen::MatrixXd pinv_psd(const Eigen::MatrixXd& k);

/// Largest eigenvalue of a symmetric PSD matrix (its spectral norm).
double spectral_norm_psd(const Eigen::MatrixXd& k);

/// Orthogonal projector onto the column span of `basis`.
Eigen::MatrixXd column_space_projector(const Eigen::MatrixXd& basis);

}  // namespace rkhs_rl::linalg
