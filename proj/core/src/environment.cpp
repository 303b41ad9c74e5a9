#include "rkhs_rl/environment.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "rkhs_rl/errors.hpp"

namespace rkhs_rl::env {

namespace {

constexpr double kPi = std::numbers::pi;

constexpr double kNmsdFloorDb = -300.0;

double log10_floored(double v) { return std::log10(std::max(v, kLogFloor)); }

Rng substream(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

}  // namespace

void validate(const NoiseModel& model) {
  std::visit(
      [](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, AlphaStable>) {
          if (!(m.alpha > 0.0 && m.alpha <= 2.0)) throw InvalidInput("alpha-stable: alpha must lie in (0, 2]");
          if (!(m.beta >= -1.0 && m.beta <= 1.0)) throw InvalidInput("alpha-stable: beta must lie in [-1, 1]");
          if (!(m.scale > 0.0)) throw InvalidInput("alpha-stable: scale must be positive");
        } else {
          if (!(m.prob >= 0.0 && m.prob <= 1.0)) throw InvalidInput("sparse noise: outlier_prob must lie in [0, 1]");
          if (!(m.lo < m.hi)) throw InvalidInput("sparse noise: outlier range needs lo < hi");
          if (!std::isfinite(m.snr_db)) throw InvalidInput("sparse noise: snr_db must be finite");
        }
      },
      model);
}

double gen_alpha_stable(Rng& rng, double alpha, double beta, double scale) {
  std::uniform_real_distribution<double> unif(-kPi / 2.0, kPi / 2.0);
  std::exponential_distribution<double> expo(1.0);
  double v = unif(rng);
  while (v == -kPi / 2.0) v = unif(rng);
  double w = expo(rng);
  while (w == 0.0) w = expo(rng);

  if (alpha == 1.0) {
    const double half_pi_bv = kPi / 2.0 + beta * v;
    const double x = (2.0 / kPi) *
                     (half_pi_bv * std::tan(v) -
                      beta * std::log((kPi / 2.0) * w * std::cos(v) / half_pi_bv));
    return scale * x + (2.0 / kPi) * beta * scale * std::log(scale);
  }
  const double t = beta * std::tan(kPi * alpha / 2.0);
  const double b = std::atan(t) / alpha;
  const double s = std::pow(1.0 + t * t, 1.0 / (2.0 * alpha));
  const double x = s * std::sin(alpha * (v + b)) / std::pow(std::cos(v), 1.0 / alpha) *
                   std::pow(std::cos(v - alpha * (v + b)) / w, (1.0 - alpha) / alpha);
  return scale * x;
}

double gen_sparse_noise(Rng& rng, double outlier_prob, double lo, double hi,
                        double snr_db, double signal_power) {
  if (!(lo < hi)) throw InvalidInput("gen_sparse_noise: need lo < hi");
  std::bernoulli_distribution outlier(outlier_prob);
  if (outlier(rng)) {
    std::uniform_real_distribution<double> u(lo, hi);
    return u(rng);
  }
  const double variance = signal_power / std::pow(10.0, snr_db / 10.0);
  std::normal_distribution<double> g(0.0, std::sqrt(variance));
  return g(rng);
}

double draw_noise(Rng& rng, const NoiseModel& model, double signal_power) {
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, AlphaStable>) {
          return gen_alpha_stable(rng, m.alpha, m.beta, m.scale);
        } else {
          return gen_sparse_noise(rng, m.prob, m.lo, m.hi, m.snr_db, signal_power);
        }
      },
      model);
}

// LMP filter ----------------------------------------------------------------

LmpStep lmp_step(const Eigen::VectorXd& theta, const Eigen::VectorXd& x,
                 double y, double p, double rho) {
  if (!(p >= 1.0 && p <= 2.0)) throw InvalidInput("lmp_step: p must lie in [1, 2]");
  const double e = y - theta.dot(x);
  if (!std::isfinite(e)) throw RunAborted("lmp_step: non-finite prior error", -1);
  if (e == 0.0) return {theta, e};
  const double sign = e > 0.0 ? 1.0 : -1.0;
  const double gain = rho * p * std::pow(std::abs(e), p - 1.0) * sign;
  return {theta + gain * x, e};
}

FilterState FilterState::initial(int filter_len) {
  FilterState fs;
  fs.theta = Eigen::VectorXd::Zero(filter_len);
  fs.theta_prev = fs.theta;
  return fs;
}

double lmp_update(FilterState& fs, const FilterParams& params,
                  const Eigen::VectorXd& x, double y, double p) {
  LmpStep step = lmp_step(fs.theta, x, y, p, params.rho);
  fs.theta_prev = std::move(fs.theta);
  fs.theta = std::move(step.theta);
  fs.p_prev = p;
  fs.e_prev = step.error;
  fs.x_prev_norm = x.norm();
  fs.history.push_back({x, y});
  while (static_cast<int>(fs.history.size()) > params.m_av) fs.history.pop_front();
  return step.error;
}

State successor_state(const Eigen::VectorXd& candidate,
                      const Eigen::VectorXd& theta_prev,
                      const std::deque<Sample>& history,
                      const Eigen::VectorXd& x_n, double y_n, double s4_prev,
                      const FilterParams& params) {
  if (history.empty()) throw InvalidState("successor_state: empty data history");
  State s;
  const double e = y_n - candidate.dot(x_n);
  s(0) = log10_floored(e * e);
  // Warm-up windows shorter than m_av average over what is available.
  const std::size_t count = std::min(history.size(), static_cast<std::size_t>(params.m_av));
  double acc = 0.0;
  for (std::size_t i = history.size() - count; i < history.size(); ++i) {
    const auto& h = history[i];
    const double r = h.y - candidate.dot(h.x);
    acc += log10_floored(r * r) - log10_floored(h.x.squaredNorm());
  }
  s(1) = acc / static_cast<double>(count);
  s(2) = 0.5 * log10_floored(x_n.squaredNorm());
  const double disp = (candidate - theta_prev).norm() / params.rho;
  s(3) = params.varpi * s4_prev + (1.0 - params.varpi) * log10_floored(disp);
  return s;
}

State compute_successor_state(const FilterState& fs, const FilterParams& params,
                              const Eigen::VectorXd& x_n, double y_n) {
  return successor_state(fs.theta, fs.theta_prev, fs.history, x_n, y_n,
                         fs.s4_prev, params);
}

double displacement_feature_expanded(double s4_prev, double varpi, double p,
                                     double e, double x_norm) {
  return varpi * s4_prev +
         (1.0 - varpi) * ((p - 1.0) * std::log10(std::abs(e)) +
                          std::log10(x_norm) + std::log10(p));
}

double nmsd_db(const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_star) {
  if (theta.size() != theta_star.size()) throw InvalidInput("nmsd: dimension mismatch");
  const double denom = theta_star.squaredNorm();
  if (!(denom > 0.0)) throw InvalidInput("nmsd: theta_star must be nonzero");
  const double ratio = (theta - theta_star).squaredNorm() / denom;
  if (!(ratio > 0.0)) return kNmsdFloorDb;
  return std::max(10.0 * std::log10(ratio), kNmsdFloorDb);
}

// Data streams --------------------------------------------------------------

const Eigen::VectorXd& DataStream::theta_star(long n) const {
  std::size_t k = 0;
  while (k + 1 < system_begin.size() && system_begin[k + 1] <= n) ++k;
  return systems[k];
}

std::uint64_t DataStream::checksum() const {
  // FNV-1a over the raw bytes of x and y.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const double* p, Eigen::Index n) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (Eigen::Index i = 0; i < n * static_cast<Eigen::Index>(sizeof(double)); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  mix(x.data(), x.size());
  mix(y.data(), y.size());
  return h;
}

void validate(const StreamSpec& spec) {
  if (spec.filter_len < 1) throw InvalidInput("StreamSpec: filter_len must be >= 1");
  if (spec.n_iters < 1) throw InvalidInput("StreamSpec: n_iters must be >= 1");
  if (spec.noise.empty() || spec.noise.front().begin != 0) {
    throw InvalidInput("StreamSpec: noise schedule must start at iteration 0");
  }
  for (std::size_t i = 0; i < spec.noise.size(); ++i) {
    validate(spec.noise[i].model);
    if (i > 0 && spec.noise[i].begin <= spec.noise[i - 1].begin) {
      throw InvalidInput("StreamSpec: noise segments must be strictly increasing");
    }
  }
  if (spec.system_change == 0 || spec.system_change >= spec.n_iters) {
    if (spec.system_change != -1) {
      throw InvalidInput("StreamSpec: system_change must lie in (0, n_iters) or be -1");
    }
  }
}

DataStream generate_stream(const StreamSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng system_rng = substream(seed, 1);
  Rng input_rng = substream(seed, 2);
  Rng noise_rng = substream(seed, 3);
  std::normal_distribution<double> normal(0.0, 1.0);

  DataStream ds;
  const auto l = spec.filter_len;
  const auto n = spec.n_iters;
  auto draw_system = [&] {
    Eigen::VectorXd t(l);
    for (int i = 0; i < l; ++i) t(i) = normal(system_rng);
    return t;
  };
  ds.systems.push_back(draw_system());
  ds.system_begin.push_back(0);
  if (spec.system_change > 0) {
    ds.systems.push_back(draw_system());
    ds.system_begin.push_back(spec.system_change);
  }

  ds.x.resize(l, n);
  ds.y.resize(n);
  ds.noise.resize(n);
  std::size_t seg = 0;
  std::size_t sys = 0;
  for (long i = 0; i < n; ++i) {
    while (seg + 1 < spec.noise.size() && spec.noise[seg + 1].begin <= i) ++seg;
    while (sys + 1 < ds.system_begin.size() && ds.system_begin[sys + 1] <= i) ++sys;
    for (int j = 0; j < l; ++j) ds.x(j, i) = normal(input_rng);
    const auto& th = ds.systems[sys];
    const double o = draw_noise(noise_rng, spec.noise[seg].model, th.squaredNorm());
    ds.noise(i) = o;
    ds.y(i) = th.dot(ds.x.col(i)) + o;
  }
  return ds;
}

}  // namespace rkhs_rl::env
