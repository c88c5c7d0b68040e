#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "biascorrect/smoothing.hpp"
#include "biascorrect/volume.hpp"

namespace biascorrect {

/// Configuration of the bias-corrected fuzzy C-means solver. Defaults are the
/// published tuning: 3 clusters, m = 2, alpha = 1, 8-neighborhood, 1e-5.
struct FcmParams {
  std::size_t clusters = 3;
  double fuzziness = 2.0;  // m
  double alpha = 1.0;      // neighborhood weight
  double epsilon = 1e-5;   // stop when ||c_new - c_old||_2 < epsilon
  std::size_t max_iters = 200;
  double bias_init_scale = 1e-3;  // initial b uniform on [-scale, scale]
  std::uint64_t seed = 0;
  Sigma3 smoothing_sigma = kDefaultBiasSigma;
  unsigned threads = 1;  // 0 = all cores
  bool estimate_bias = true;  // false freezes b at zero (plain regularized FCM)

  /// Throws ValidationError naming the offending field.
  void validate() const;
};

/// Observed intensities over the masked voxels together with their in-mask
/// slice neighbors, in compact (foreground-only) indexing.
class FcmProblem {
 public:
  FcmProblem(const Volume& observed, const Mask& mask);

  std::size_t size() const { return y_.size(); }
  const Dims& dims() const { return dims_; }
  const Mask& mask() const { return mask_; }

  double y(std::size_t n) const { return y_[n]; }
  std::size_t voxel(std::size_t n) const { return voxels_[n]; }

  /// Compact indices of the in-mask members of M_n. The relation is
  /// symmetric, so this is also the reverse set {r : n in M_r}.
  std::span<const std::uint32_t> neighbors(std::size_t n) const {
    return {&neighbors_[n * kNeighborhoodSize], neighbor_count_[n]};
  }

 private:
  Dims dims_;
  Mask mask_;
  std::vector<std::size_t> voxels_;
  std::vector<double> y_;
  std::vector<std::uint32_t> neighbors_;
  std::vector<std::uint8_t> neighbor_count_;
};

/// Iterate of the coordinate descent. Per-voxel arrays use compact indexing.
struct FcmState {
  std::size_t clusters = 0;
  std::vector<double> mu;       // mu[n * clusters + i]
  std::vector<double> centers;  // c_i
  std::vector<double> bias;     // b_n
  std::vector<bool> stale;      // center i had zero total membership at last update
  double lambda = 0.0;          // multiplier of the zero-mean bias constraint
  std::size_t sweep = 0;
  double objective = 0.0;

  double membership(std::size_t n, std::size_t i) const { return mu[n * clusters + i]; }

  /// Uniform memberships, given centers, zero bias.
  static FcmState initial(const FcmProblem& problem, std::vector<double> centers);
};

/// Modified objective: sum_i sum_n mu^m (D_in + alpha/|M| R_in) with
/// D_in = (y_n - b_n - c_i)^2 and R_in summing D_ir over in-mask neighbors.
double objective(const FcmProblem& problem, const FcmState& s, const FcmParams& p);

/// Closed-form membership minimizer. A voxel with zero weighted distance to
/// some clusters is shared uniformly among exactly those clusters.
void update_memberships(const FcmProblem& problem, FcmState& s, const FcmParams& p);

/// Exact center minimizer with memberships and bias fixed:
///   c_i = sum_n mu^m ((y_n - b_n) + alpha/|M| sum_{r in M_n} (y_r - b_r))
///         / sum_n mu^m (1 + alpha |M_n| / |M|)
/// which is the (1 + alpha) form whenever every neighborhood is complete.
/// Clusters with zero total membership keep their center and are marked stale.
void update_centers(const FcmProblem& problem, FcmState& s, const FcmParams& p);

/// Exact bias minimizer under sum_n b_n = 0. With
///   beta_in = mu_in^m + alpha/|M| sum_{r : n in M_r} mu_ir^m
/// the multiplier is
///   lambda = 2 (sum_n 1/S_n)^-1 sum_n (y_n - C_n/S_n),  S_n = sum_i beta_in,
///   C_n = sum_i c_i beta_in
/// and b_n = y_n - (C_n + lambda/2) / S_n.
void update_bias(const FcmProblem& problem, FcmState& s, const FcmParams& p);

/// Deterministic initial bias, uniform on [-scale, scale], keyed by the flat
/// voxel index so it does not depend on the mask.
std::vector<double> random_bias(const FcmProblem& problem, double scale, std::uint64_t seed);

struct SweepReport {
  std::size_t sweep = 0;
  double objective = 0.0;
  double center_change = 0.0;  // ||c_new - c_old||_2 over the sweep
};

using SweepObserver = std::function<void(const SweepReport&, const FcmState&)>;

/// Steps the coordinate descent one sweep at a time.
class FcmSolver {
 public:
  /// Otsu-initialized centers, seeded random bias.
  FcmSolver(const FcmProblem& problem, const FcmParams& params);
  FcmSolver(const FcmProblem& problem, const FcmParams& params, FcmState start);

  /// One pass of memberships, centers, bias (bias skipped when frozen).
  SweepReport sweep();

  /// Sweeps until the center change drops below epsilon or max_iters.
  /// Returns true on convergence.
  bool run(const SweepObserver& observer = {});

  const FcmState& state() const { return state_; }
  bool converged() const { return converged_; }

 private:
  const FcmProblem& problem_;
  FcmParams params_;
  FcmState state_;
  bool converged_ = false;
};

struct CorrectionResult {
  FcmState state;
  bool converged = false;
  Volume bias;           // raw estimate, background 0
  Volume smoothed_bias;  // Gaussian-smoothed, zero mean over the mask
  Volume corrected;      // observed - smoothed_bias on the mask, observed elsewhere
};

/// Full correction: Otsu init, coordinate descent, smoothing of the converged
/// bias, subtraction from the observed volume.
CorrectionResult solve(const Volume& observed, const Mask& mask, const FcmParams& params,
                       const SweepObserver& observer = {});

}  // namespace biascorrect
