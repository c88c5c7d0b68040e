#include "biascorrect/mfcm.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <string>

#include "biascorrect/parallel.hpp"
#include "biascorrect/thresholding.hpp"

namespace biascorrect {

namespace {

constexpr double kInvNeighborhood = 1.0 / static_cast<double>(kNeighborhoodSize);

double pow_m(double mu, double m) { return m == 2.0 ? mu * mu : std::pow(mu, m); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

void check_state(const FcmProblem& problem, const FcmState& s) {
  if (s.clusters == 0 || s.centers.size() != s.clusters ||
      s.mu.size() != problem.size() * s.clusters || s.bias.size() != problem.size()) {
    throw ValidationError("FCM state does not match the problem dimensions");
  }
}

// Residuals r_n = y_n - b_n.
std::vector<double> residuals(const FcmProblem& problem, const FcmState& s, unsigned threads) {
  std::vector<double> r(problem.size());
  parallel_for(problem.size(), threads,
               [&](std::size_t n) { r[n] = problem.y(n) - s.bias[n]; });
  return r;
}

std::vector<double> membership_powers(const FcmState& s, double m, unsigned threads) {
  std::vector<double> pm(s.mu.size());
  parallel_for(s.mu.size(), threads, [&](std::size_t k) { pm[k] = pow_m(s.mu[k], m); });
  return pm;
}

// Reorders clusters so centers ascend; memberships follow. J* is unchanged.
void sort_clusters(FcmState& s) {
  std::vector<std::size_t> order(s.clusters);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s.centers[a] < s.centers[b]; });
  if (std::is_sorted(order.begin(), order.end())) return;

  const FcmState old = s;
  for (std::size_t i = 0; i < s.clusters; ++i) {
    s.centers[i] = old.centers[order[i]];
    s.stale[i] = old.stale[order[i]];
  }
  const std::size_t voxels = s.bias.size();
  for (std::size_t n = 0; n < voxels; ++n) {
    for (std::size_t i = 0; i < s.clusters; ++i) {
      s.mu[n * s.clusters + i] = old.mu[n * s.clusters + order[i]];
    }
  }
}

}  // namespace

void FcmParams::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("invalid FCM parameter '" + field + "': " + why);
  };
  if (clusters < 2) fail("clusters", "must be at least 2");
  if (!(fuzziness > 1.0) || !std::isfinite(fuzziness)) fail("m", "must be a finite value > 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha", "must be finite and >= 0");
  if (!(epsilon > 0.0)) fail("epsilon", "must be > 0");
  if (max_iters == 0) fail("max_iters", "must be positive");
  if (!(bias_init_scale >= 0.0)) fail("bias_init_scale", "must be >= 0");
  for (double s : smoothing_sigma) {
    if (!(s >= 0.0) || !std::isfinite(s)) fail("sigma", "entries must be finite and >= 0");
  }
}

FcmProblem::FcmProblem(const Volume& observed, const Mask& mask) : dims_(observed.dims()), mask_(mask) {
  require_same_dims(observed.dims(), mask.dims(), "observed volume vs mask");
  std::vector<std::uint32_t> compact(mask.size(), std::numeric_limits<std::uint32_t>::max());
  for (std::size_t n = 0; n < mask.size(); ++n) {
    if (!mask[n]) continue;
    compact[n] = static_cast<std::uint32_t>(voxels_.size());
    voxels_.push_back(n);
    y_.push_back(observed[n]);
  }
  if (voxels_.empty()) throw DegenerateError("mask has no foreground voxels");

  neighbors_.assign(voxels_.size() * kNeighborhoodSize, 0);
  neighbor_count_.assign(voxels_.size(), 0);
  for (std::size_t c = 0; c < voxels_.size(); ++c) {
    for (std::size_t r : neighbors_in_slice(voxels_[c], dims_)) {
      if (!mask[r]) continue;
      neighbors_[c * kNeighborhoodSize + neighbor_count_[c]++] = compact[r];
    }
  }
}

FcmState FcmState::initial(const FcmProblem& problem, std::vector<double> centers) {
  FcmState s;
  s.clusters = centers.size();
  s.centers = std::move(centers);
  s.mu.assign(problem.size() * s.clusters, 1.0 / static_cast<double>(s.clusters));
  s.bias.assign(problem.size(), 0.0);
  s.stale.assign(s.clusters, false);
  return s;
}

double objective(const FcmProblem& problem, const FcmState& s, const FcmParams& p) {
  check_state(problem, s);
  const std::size_t I = s.clusters;
  const auto r = residuals(problem, s, p.threads);
  const double w = p.alpha * kInvNeighborhood;
  return deterministic_sum(problem.size(), p.threads, [&](std::size_t n) {
    double total = 0.0;
    for (std::size_t i = 0; i < I; ++i) {
      const double c = s.centers[i];
      const double d = (r[n] - c) * (r[n] - c);
      double neighborhood = 0.0;
      for (std::uint32_t q : problem.neighbors(n)) neighborhood += (r[q] - c) * (r[q] - c);
      total += pow_m(s.mu[n * I + i], p.fuzziness) * (d + w * neighborhood);
    }
    return total;
  });
}

void update_memberships(const FcmProblem& problem, FcmState& s, const FcmParams& p) {
  check_state(problem, s);
  const std::size_t I = s.clusters;
  const auto r = residuals(problem, s, p.threads);
  const double w = p.alpha * kInvNeighborhood;
  const double exponent = 1.0 / (p.fuzziness - 1.0);

  parallel_chunks(problem.size(), p.threads, [&](std::size_t, std::size_t b, std::size_t e) {
    std::vector<double> dist(I);
    for (std::size_t n = b; n < e; ++n) {
      double* mu = &s.mu[n * I];
      std::size_t zeros = 0;
      double smallest = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < I; ++i) {
        const double c = s.centers[i];
        double neighborhood = 0.0;
        for (std::uint32_t q : problem.neighbors(n)) neighborhood += (r[q] - c) * (r[q] - c);
        dist[i] = (r[n] - c) * (r[n] - c) + w * neighborhood;
        if (dist[i] == 0.0) ++zeros;
        smallest = std::min(smallest, dist[i]);
      }
      if (zeros > 0) {
        for (std::size_t i = 0; i < I; ++i) {
          mu[i] = dist[i] == 0.0 ? 1.0 / static_cast<double>(zeros) : 0.0;
        }
        continue;
      }
      // (1/d_i)^e / sum_j (1/d_j)^e, scaled by the smallest distance so every
      // ratio lies in (0, 1].
      double total = 0.0;
      for (std::size_t i = 0; i < I; ++i) {
        mu[i] = exponent == 1.0 ? smallest / dist[i] : std::pow(smallest / dist[i], exponent);
        total += mu[i];
      }
      for (std::size_t i = 0; i < I; ++i) mu[i] /= total;
    }
  });
}

void update_centers(const FcmProblem& problem, FcmState& s, const FcmParams& p) {
  check_state(problem, s);
  const std::size_t I = s.clusters;
  const auto r = residuals(problem, s, p.threads);
  const double w = p.alpha * kInvNeighborhood;

  // Accumulators: [numerator_i..., denominator_i..., raw membership mass_i...].
  const auto sums = deterministic_sums(
      problem.size(), 3 * I, p.threads, [&](std::size_t b, std::size_t e, double* acc) {
        for (std::size_t n = b; n < e; ++n) {
          const auto nb = problem.neighbors(n);
          double neighbor_residual = 0.0;
          for (std::uint32_t q : nb) neighbor_residual += r[q];
          const double target = r[n] + w * neighbor_residual;
          const double weight = 1.0 + w * static_cast<double>(nb.size());
          for (std::size_t i = 0; i < I; ++i) {
            const double pm = pow_m(s.mu[n * I + i], p.fuzziness);
            acc[i] += pm * target;
            acc[I + i] += pm * weight;
            acc[2 * I + i] += pm;
          }
        }
      });
  s.stale.assign(I, false);
  for (std::size_t i = 0; i < I; ++i) {
    if (sums[2 * I + i] == 0.0) {
      s.stale[i] = true;
      continue;
    }
    s.centers[i] = sums[i] / sums[I + i];
  }
}

void update_bias(const FcmProblem& problem, FcmState& s, const FcmParams& p) {
  check_state(problem, s);
  const std::size_t I = s.clusters;
  const std::size_t N = problem.size();
  const double w = p.alpha * kInvNeighborhood;
  const auto pm = membership_powers(s, p.fuzziness, p.threads);

  // q_n = C_n / S_n and 1 / S_n.
  std::vector<double> weighted_center(N);
  std::vector<double> inv_total(N);
  parallel_for(N, p.threads, [&](std::size_t n) {
    double total = 0.0;
    double centered = 0.0;
    for (std::size_t i = 0; i < I; ++i) {
      double beta = pm[n * I + i];
      double reverse = 0.0;
      for (std::uint32_t q : problem.neighbors(n)) reverse += pm[q * I + i];
      beta += w * reverse;
      total += beta;
      centered += s.centers[i] * beta;
    }
    assert(total > 0.0);
    inv_total[n] = 1.0 / total;
    weighted_center[n] = centered / total;
  });

  const auto sums = deterministic_sums(N, 2, p.threads, [&](std::size_t b, std::size_t e, double* acc) {
    for (std::size_t n = b; n < e; ++n) {
      acc[0] += inv_total[n];
      acc[1] += problem.y(n) - weighted_center[n];
    }
  });
  s.lambda = 2.0 * sums[1] / sums[0];
  const double half_lambda = 0.5 * s.lambda;
  parallel_for(N, p.threads, [&](std::size_t n) {
    s.bias[n] = (problem.y(n) - weighted_center[n]) - half_lambda * inv_total[n];
  });
}

std::vector<double> random_bias(const FcmProblem& problem, double scale, std::uint64_t seed) {
  std::vector<double> b(problem.size());
  const std::uint64_t key = splitmix64(seed);
  for (std::size_t n = 0; n < b.size(); ++n) {
    const std::uint64_t bits = splitmix64(key ^ splitmix64(problem.voxel(n)));
    const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
    b[n] = scale * (2.0 * u - 1.0);
  }
  return b;
}

FcmSolver::FcmSolver(const FcmProblem& problem, const FcmParams& params)
    : problem_(problem), params_(params) {
  params_.validate();
  if (params_.clusters > 4) {
    throw ValidationError("Otsu initialization supports at most 4 clusters");
  }
  Volume y(problem.dims(), {}, 0.0f);
  for (std::size_t n = 0; n < problem.size(); ++n) {
    y[problem.voxel(n)] = static_cast<float>(problem.y(n));
  }
  state_ = FcmState::initial(problem, init_centers(y, problem.mask(), params_.clusters));
  if (params_.estimate_bias) {
    state_.bias = random_bias(problem, params_.bias_init_scale, params_.seed);
  }
}

FcmSolver::FcmSolver(const FcmProblem& problem, const FcmParams& params, FcmState start)
    : problem_(problem), params_(params), state_(std::move(start)) {
  params_.validate();
  check_state(problem, state_);
  if (state_.stale.size() != state_.clusters) state_.stale.assign(state_.clusters, false);
}

SweepReport FcmSolver::sweep() {
  const auto previous = state_.centers;
  update_memberships(problem_, state_, params_);
  update_centers(problem_, state_, params_);
  if (params_.estimate_bias) update_bias(problem_, state_, params_);
  sort_clusters(state_);
  ++state_.sweep;
  state_.objective = objective(problem_, state_, params_);

  double change = 0.0;
  for (std::size_t i = 0; i < previous.size(); ++i) {
    change += (state_.centers[i] - previous[i]) * (state_.centers[i] - previous[i]);
  }
  return {state_.sweep, state_.objective, std::sqrt(change)};
}

bool FcmSolver::run(const SweepObserver& observer) {
  converged_ = false;
  while (state_.sweep < params_.max_iters) {
    const SweepReport report = sweep();
    if (observer) observer(report, state_);
    if (report.center_change < params_.epsilon) {
      converged_ = true;
      break;
    }
  }
  return converged_;
}

CorrectionResult solve(const Volume& observed, const Mask& mask, const FcmParams& params,
                       const SweepObserver& observer) {
  const FcmProblem problem(observed, mask);
  FcmSolver solver(problem, params);
  const bool converged = solver.run(observer);

  CorrectionResult out{solver.state(), converged, Volume(observed.dims(), observed.spacing()),
                       Volume(observed.dims(), observed.spacing()), observed};

  std::vector<double> raw(observed.size(), 0.0);
  for (std::size_t n = 0; n < problem.size(); ++n) raw[problem.voxel(n)] = out.state.bias[n];
  auto smoothed = gaussian_smooth_field(raw, mask, params.smoothing_sigma);
  remove_masked_mean(smoothed, mask);

  for (std::size_t v = 0; v < observed.size(); ++v) {
    out.bias[v] = static_cast<float>(raw[v]);
    if (!mask[v]) continue;
    out.smoothed_bias[v] = static_cast<float>(smoothed[v]);
    out.corrected[v] = static_cast<float>(static_cast<double>(observed[v]) - smoothed[v]);
  }
  return out;
}

}  // namespace biascorrect
