#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "optoent/analytic.hpp"
#include "optoent/core.hpp"
#include "optoent/counting.hpp"
#include "optoent/trajectory.hpp"

namespace optoent::heterodyne {

using cplx = std::complex<double>;

/// Demodulated complex record of one detector. With the transform convention
/// X(w) = sum_n x_n e^{+i w t_n} dt, the blue sideband sits at +omega_m and the
/// red one at -omega_m. Unit noise_floor means white noise of unit two-sided
/// spectral density.
struct HeterodyneRecord {
  std::vector<cplx> samples;
  double dt = 0.0;
  double noise_floor = 1.0;
  double frame = 0.0;    ///< reference frequency offset, rad/s
  double omega_m = 0.0;  ///< sideband offset used by the filters
  double start_time = 0.0;
  std::uint64_t seed = 0;
  Detector detector = Detector::single;
  std::vector<std::pair<std::string, std::string>> params;

  double duration() const { return static_cast<double>(samples.size()) * dt; }
};

/// Classical complex Gaussian field with the same-colour moments of the
/// cooled oscillator: sqrt(f_r) c* e^{+i w t} + sqrt(f_b) c e^{-i w t}, plus
/// unit white noise, c an OU process of decay gamma_eff/2 and variance n_m.
/// Requires dt < 0.1 / omega_m.
HeterodyneRecord synthesize_surrogate(const DerivedParams& d, double duration, double dt,
                                      std::uint64_t seed);

struct QsdOptions {
  int n_max = 5;
  double duration = 0.0;
  double dt = 1e-3;
  double burn_in = 10.0;
  std::optional<double> eta_esc;  ///< defaults to kappa_r / kappa
  std::size_t trace_stride = 0;   ///< 0 disables the state trace
  double truncation_tolerance = 1e-2;
};

struct StateSample {
  double time = 0.0;
  double n1 = 0.0;
  double n2 = 0.0;
  cplx coherence;  ///< <c2^dag c1>
  double top = 0.0;
};

struct QsdResult {
  std::vector<HeterodyneRecord> records;  ///< A and B, or the single detector
  std::vector<StateSample> trace;
  double top_level_weight = 0.0;
};

/// Heterodyne (state-diffusion) unravelling of the observed sideband channels.
/// Each detector sees L(t) = e^{-i w t} B + e^{+i w t} R with B and R the blue
/// and red jump operators of the counting model; unobserved and thermal
/// channels remain quantum jumps whose outcomes are discarded.
QsdResult unravel_qsd(const TwoCavityParams& p, const DerivedParams& d, const QsdOptions& options,
                      std::uint64_t seed);
QsdResult unravel_qsd_single(const DerivedParams& d, const QsdOptions& options, std::uint64_t seed);
/// Runs on prebuilt channels; observed channels must come in blue/red pairs per detector.
QsdResult unravel_qsd(const trajectory::ChannelSet& channels, const DerivedParams& d,
                      const QsdOptions& options, std::uint64_t seed);

enum class FilterShape { gaussian, raised_cosine };

std::string to_string(FilterShape s);

/// Real sideband filter. The raised-cosine variant cos^2(pi x / 2w) on |x| < w
/// has w chosen so that its noise bandwidth equals the Gaussian one.
struct SidebandFilter {
  FilterShape shape = FilterShape::gaussian;
  double lambda = 0.0;
  double omega_m = 0.0;

  /// Centre of the colour's passband in the record transform convention.
  double centre(Color c) const { return c == Color::blue ? omega_m : -omega_m; }
  /// Response at transform frequency omega.
  double response(double omega, Color c) const;
  /// |F|^2 continued to complex detuning x from the centre.
  cplx power_continued(cplx x) const;
  /// Integral of |F|^2 over d omega / 2 pi.
  double noise_bandwidth() const;
  /// Detuning beyond which the response is below 1e-8.
  double half_support() const;
};

struct Periodogram {
  std::vector<double> power;  ///< |X_k|^2 / T in FFT order
  double d_omega = 0.0;
  double omega(std::size_t k) const;
};

Periodogram periodogram(const HeterodyneRecord& rec);

struct FloorFit {
  double level = 0.0;
  std::size_t bins_used = 0;
  double lower_half = 0.0;  ///< medians over the inner and outer halves of the bins used
  double upper_half = 0.0;
};

/// Median / ln 2 over bins at least 5 lambda from the carrier and both
/// sidebands. Throws "floor fit failed" if too few bins remain or the two
/// halves disagree by more than 10%.
FloorFit fit_noise_floor(const Periodogram& pg, double omega_m, double lambda);

/// Filtered sideband currents stored as demodulated envelopes:
/// i_c(t_m) = exp(-i centre_c t_m) env_c[m], t_m = m dt_env from the record start.
struct SidebandCurrents {
  Detector detector = Detector::single;
  std::size_t trial = 0;  ///< currents sharing a trial index share a time base
  SidebandFilter filter;
  std::vector<cplx> env_red;
  std::vector<cplx> env_blue;
  double dt_env = 0.0;
  double carrier_red = 0.0;   ///< demodulation frequency (on the FFT grid)
  double carrier_blue = 0.0;
  FloorFit floor;
  double nb_red = 0.0;  ///< discrete noise bandwidth sum |F_k|^2 / T
  double nb_blue = 0.0;
  double w_red = 0.0;   ///< floor-subtracted filtered sideband weight
  double w_blue = 0.0;
  std::vector<std::string> warnings;

  const std::vector<cplx>& envelope(Color c) const { return c == Color::red ? env_red : env_blue; }
  double carrier(Color c) const { return c == Color::red ? carrier_red : carrier_blue; }
  double weight(Color c) const { return c == Color::red ? w_red : w_blue; }
  double bandwidth(Color c) const { return c == Color::red ? nb_red : nb_blue; }
  /// Filtered current at envelope sample m.
  cplx current(Color c, std::size_t m) const;
};

struct FilterOptions {
  FilterShape shape = FilterShape::gaussian;
  double envelope_dt = 0.0;  ///< 0 picks 0.25 / lambda
  std::size_t trial = 0;
};

/// FFT filtering of the record with both sideband filters. Throws "aliasing"
/// when omega_m + 6 lambda exceeds the Nyquist frequency and
/// "carrier leakage" when the response at zero exceeds 1e-8.
SidebandCurrents filter_sidebands(const HeterodyneRecord& rec, double lambda,
                                  const FilterOptions& options = {});

struct ReconstructOptions {
  std::vector<double> tau_grid;
  std::vector<std::pair<DetectorTag, DetectorTag>> pairs;  ///< (from, to); empty picks all
  std::size_t blocks_per_trial = 16;
  bool tail_correction = true;
  std::optional<double> gamma_eff_hint;
  unsigned workers = 0;
};

struct Reconstruction {
  std::vector<counting::CorrelationEstimate> estimates;
  double gamma_eff = 0.0;  ///< fitted or hinted, 0 when unavailable
  double tail_factor = 1.0;
  std::vector<std::string> warnings;

  const counting::CorrelationEstimate& find(DetectorTag from, DetectorTag to) const;
};

/// g2_{j|i}(tau) = 1 + (|Lambda_ij|^2 + |Gamma_ij|^2) / (W_i W_j) from
/// filtered currents pooled over trials, jackknife errors over time blocks.
/// With tail_correction, W is rescaled for the finite filter width using
/// gamma_eff (hinted, or fitted from the decay of same-colour Lambda).
Reconstruction reconstruct_g2(std::span<const SidebandCurrents> currents,
                              const ReconstructOptions& options);

/// Record files: "# key = value" header lines closed by "# end", followed by
/// little-endian f64 (re, im) pairs.
void save_record(const std::string& path, const HeterodyneRecord& rec);
HeterodyneRecord load_record(const std::string& path);

}  // namespace optoent::heterodyne
