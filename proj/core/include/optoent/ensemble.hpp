#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "optoent/trajectory.hpp"

namespace optoent {

/// Worker count used when 0 is passed: hardware concurrency, at least 1.
unsigned default_workers();

/// Calls fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception thrown by any task is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned workers = 0);

namespace trajectory {

/// Independent steady-state records, each from the vacuum with `burn_in`
/// discarded. Record k uses derive_seed(root_seed, k); the output does not
/// depend on the worker count.
std::vector<ClickRecord> simulate_records(const ChannelSet& channels, std::size_t n_records,
                                          double duration, double burn_in, std::uint64_t root_seed,
                                          const EvolveOptions& options = {}, unsigned workers = 0);

struct MomentPoint {
  double time = 0.0;
  double n1 = 0.0;
  double n2 = 0.0;
  double n1_se = 0.0;
  double n2_se = 0.0;
  cplx coherence;  ///< <c2^dag c1>
  double coherence_re_se = 0.0;
  double coherence_im_se = 0.0;
  double top_level = 0.0;
};

/// Ensemble averages of occupations and <c2^dag c1> at the given times.
std::vector<MomentPoint> ensemble_moments(const ChannelSet& channels, const JointState& initial,
                                          const std::vector<double>& times, std::size_t n_trajectories,
                                          std::uint64_t root_seed, const EvolveOptions& options = {},
                                          unsigned workers = 0);

struct ConditionalOptions {
  std::size_t n_records = 4;
  double record_duration = 2000.0;
  double burn_in = 10.0;
  std::vector<double> tau_grid;  ///< delays after the trigger, 0 means just after it
  std::size_t min_clicks = 100;
  std::size_t batches_per_record = 8;
  DetectorTag trigger{Detector::A, Color::red};
};

struct ConditionalPoint {
  double tau = 0.0;
  double p00 = 0.0, p01 = 0.0, p10 = 0.0, p11 = 0.0;
  double remainder = 0.0;  ///< weight outside the 0/1-phonon sector
  cplx q;                  ///< <c2^dag c1> restricted to the 0/1 sector
  double concurrence = 0.0;
  double concurrence_se = 0.0;
  double ratio = 0.0;  ///< p00 p11 / |q|^2
  double ratio_se = 0.0;
};

struct ConditionalResult {
  std::vector<ConditionalPoint> points;
  std::size_t n_clicks = 0;
  double top_level_weight = 0.0;
};

/// Conditional density-matrix elements after each trigger click in steady
/// state, averaged over clicks; errors by jackknife over time batches.
/// Throws "insufficient clicks" below options.min_clicks.
ConditionalResult conditional_after_red(const ChannelSet& channels, const ConditionalOptions& options,
                                        std::uint64_t seed, const EvolveOptions& evolve_options = {},
                                        unsigned workers = 0);

}  // namespace trajectory
}  // namespace optoent
