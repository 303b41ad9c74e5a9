#include "rkhs_rl/linalg.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "rkhs_rl/errors.hpp"

namespace rkhs_rl::linalg {

namespace {

[[noreturn]] void throw_singular(const char* what, double cond) {
  std::ostringstream os;
  os << what << ": condition estimate " << cond << " exceeds guard "
     << kConditionGuard;
  throw SingularSystem(os.str(), cond);
}

}  // namespace

double condition_psd(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double hi = ev.maxCoeff();
  const double lo = ev.minCoeff();
  if (hi <= 0.0) return std::numeric_limits<double>::infinity();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

double condition_general(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return 1.0;
  const double lo = sv(sv.size() - 1);
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / lo;
}

Eigen::MatrixXd solve_ridge(const Eigen::MatrixXd& k, double sigma,
                            const Eigen::MatrixXd& rhs) {
  if (k.rows() != k.cols() || k.rows() != rhs.rows()) {
    throw InvalidInput("solve_ridge: dimension mismatch");
  }
  if (!(sigma >= 0.0)) throw InvalidInput("solve_ridge: sigma must be >= 0");
  Eigen::MatrixXd a = k;
  a.diagonal().array() += sigma;
  // Small systems (trajectory sets) dominate; an eigen-decomposition gives a
  // trustworthy condition estimate where LLT::rcond would only bound it.
  const double cond = condition_psd(a);
  if (!(cond < kConditionGuard)) throw_singular("solve_ridge", cond);
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw_singular("solve_ridge", cond);
  return llt.solve(rhs);
}

Eigen::MatrixXd solve_general(const Eigen::MatrixXd& a,
                              const Eigen::MatrixXd& rhs) {
  if (a.rows() != a.cols() || a.rows() != rhs.rows()) {
    throw InvalidInput("solve_general: dimension mismatch");
  }
  const double cond = condition_general(a);
  if (!(cond < kConditionGuard)) throw_singular("solve_general", cond);
  return a.partialPivLu().solve(rhs);
}

Eigen::MatrixXd pinv_psd(const Eigen::MatrixXd& k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  const auto& ev = es.eigenvalues();
  const double cutoff = kPinvCutoff * std::max(ev.maxCoeff(), 0.0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > cutoff && ev(i) > 0.0) inv(i) = 1.0 / ev(i);
  }
  const auto& u = es.eigenvectors();
  return u * inv.asDiagonal() * u.transpose();
}

double spectral_norm_psd(const Eigen::MatrixXd& k) {
  if (k.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k, Eigen::EigenvaluesOnly);
  return std::max(es.eigenvalues().maxCoeff(), 0.0);
}

Eigen::MatrixXd column_space_projector(const Eigen::MatrixXd& basis) {
  const Eigen::MatrixXd gram = basis.transpose() * basis;
  return basis * pinv_psd(gram) * basis.transpose();
}

}  // namespace rkhs_rl::linalg
