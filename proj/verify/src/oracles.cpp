#include "rkhs_rl/verify/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rkhs_rl/errors.hpp"

namespace rkhs_rl::verify {

double kolmogorov_sf(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (lambda < 1.18) {
    // Theta-function form converges fast for small lambda.
    double cdf = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double t = (2.0 * k - 1.0) * pi / lambda;
      cdf += std::exp(-t * t / 8.0);
    }
    cdf *= std::sqrt(2.0 * pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-300) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidInput("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double en = std::sqrt(na * nb / (na + nb));
  return {d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d)};
}

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double diff = (a - b).norm();
  const double scale = b.norm();
  return scale > 0.0 ? diff / scale : diff;
}

Eigen::MatrixXd lmp_oracle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           double p, double rho) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(x.rows());
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index n = 0; n < x.cols(); ++n) {
    const double e = y(n) - theta.dot(x.col(n));
    double gain = 0.0;
    if (e != 0.0) {
      gain = rho * p * std::pow(std::abs(e), p - 1.0) * (e > 0.0 ? 1.0 : -1.0);
    }
    theta += gain * x.col(n);
    out.col(n) = theta;
  }
  return out;
}

State random_state(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> nd(0.0, scale);
  State s;
  for (int i = 0; i < 4; ++i) s(i) = nd(rng);
  return s;
}

TrajectorySet random_trajectories(std::mt19937_64& rng, int n,
                                  std::span<const double> grid, double scale) {
  std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
  TrajectorySet out;
  for (int i = 0; i < n; ++i) {
    const State s = random_state(rng, scale);
    const double a = grid[pick(rng)];
    out.push_back({s, a, random_state(rng, scale)});
  }
  return out;
}

QFunction random_q(std::mt19937_64& rng, int feature_dim, double scale) {
  std::normal_distribution<double> nd(0.0, scale);
  QFunction q = QFunction::zero(feature_dim);
  for (int i = 0; i < feature_dim; ++i) q.weights(i) = nd(rng);
  return q;
}

RandomInstance random_instance(std::uint64_t seed, int n, int feature_dim,
                               double alpha, double sigma,
                               std::vector<double> grid) {
  std::mt19937_64 rng(seed);
  RandomInstance out{sample_rff(seed ^ 0x9e3779b97f4a7c15ULL, feature_dim, 1.0),
                     {}, std::move(grid), {}, {}, {}};
  out.traj = random_trajectories(rng, n, out.grid);
  out.policy_q = random_q(rng, feature_dim);
  Eigen::VectorXd g(n);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int i = 0; i < n; ++i) g(i) = nd(rng);
  const Policy mu = greedy_policy(out.policy_q, out.grid, out.map);
  out.inst = make_instance(out.traj, out.map, sigma, alpha, mu, g);
  out.var = {out.inst.phi_traj, out.inst.phi_av_mu, g, alpha, sigma};
  return out;
}

}  // namespace rkhs_rl::verify
