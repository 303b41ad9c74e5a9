#include "rkhs_rl/features.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "rkhs_rl/errors.hpp"

namespace rkhs_rl {

Encoded Point::encode() const {
  Encoded e;
  e.head<4>() = state;
  e(4) = action;
  return e;
}

bool Point::operator==(const Point& other) const {
  return action == other.action && state == other.state;
}

double gaussian_kernel(const Point& z1, const Point& z2, double bandwidth) {
  return gaussian_kernel(Eigen::VectorXd(z1.encode()),
                         Eigen::VectorXd(z2.encode()), bandwidth);
}

double gaussian_kernel(const Eigen::Ref<const Eigen::VectorXd>& x1,
                       const Eigen::Ref<const Eigen::VectorXd>& x2,
                       double bandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw InvalidInput("gaussian_kernel: bandwidth must be positive");
  }
  if (x1.size() != x2.size()) {
    throw InvalidInput("gaussian_kernel: dimension mismatch");
  }
  if (!x1.allFinite() || !x2.allFinite()) {
    throw InvalidInput("gaussian_kernel: non-finite input");
  }
  const double d2 = (x1 - x2).squaredNorm();
  return std::exp(-d2 / (2.0 * bandwidth * bandwidth));
}

RffMap::RffMap(Eigen::MatrixXd frequencies, Eigen::VectorXd phases,
               double bandwidth, std::uint64_t seed)
    : frequencies_(std::move(frequencies)),
      phases_(std::move(phases)),
      bandwidth_(bandwidth),
      seed_(seed) {
  if (phases_.size() < 1) throw InvalidInput("RffMap: feature_dim must be >= 1");
  if (frequencies_.rows() != phases_.size() ||
      frequencies_.cols() != kEncodedDim) {
    throw InvalidInput("RffMap: frequencies must be feature_dim x 5");
  }
  if (!(bandwidth_ > 0.0)) throw InvalidInput("RffMap: bandwidth must be positive");
  amplitude_ = std::sqrt(2.0 / static_cast<double>(phases_.size()));
}

RffMap sample_rff(std::uint64_t seed, int feature_dim, double bandwidth) {
  if (feature_dim < 1) throw InvalidInput("sample_rff: feature_dim must be >= 1");
  if (!(bandwidth > 0.0)) throw InvalidInput("sample_rff: bandwidth must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / bandwidth);
  std::uniform_real_distribution<double> uniform(0.0, 2.0 * std::numbers::pi);
  Eigen::MatrixXd freq(feature_dim, kEncodedDim);
  Eigen::VectorXd phase(feature_dim);
  for (int i = 0; i < feature_dim; ++i) {
    for (int j = 0; j < kEncodedDim; ++j) freq(i, j) = normal(rng);
    phase(i) = uniform(rng);
  }
  return RffMap(std::move(freq), std::move(phase), bandwidth, seed);
}

Eigen::VectorXd featurize(const RffMap& map, const Point& z) {
  const Encoded e = z.encode();
  Eigen::VectorXd arg = map.frequencies() * e + map.phases();
  return map.amplitude() * arg.array().cos().matrix();
}

Eigen::MatrixXd feature_matrix(const RffMap& map, std::span<const Point> points) {
  if (points.empty()) throw InvalidInput("feature_matrix: empty point list");
  // Column by column so that every column is bitwise equal to featurize().
  Eigen::MatrixXd out(map.feature_dim(), static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = featurize(map, points[i]);
  }
  return out;
}

Eigen::MatrixXd gram(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd k = features.transpose() * features;
  // Exact symmetry keeps downstream eigen-solvers honest.
  return 0.5 * (k + k.transpose());
}

}  // namespace rkhs_rl
