#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "optoent/core.hpp"

namespace optoent {

enum class Detector { A, B, single };
enum class Color { red, blue };

struct DetectorTag {
  Detector detector = Detector::single;
  Color color = Color::red;

  friend bool operator==(const DetectorTag&, const DetectorTag&) = default;
};

std::string to_string(Detector d);
std::string to_string(Color c);
std::string to_string(const DetectorTag& t);  // e.g. "A_red"

namespace analytic {

/// The reduced parameter set on which all tau-domain formulas depend.
struct SidebandModel {
  double n_m = 0.0;
  double gamma_eff = 1.0;
  double delta = 0.0;
  double phi = 0.0;
  double kappa = 0.0;   ///< for the validity window, 0 = ignore
  double lambda = 0.0;  ///< filter linewidth for the validity window, 0 = ignore

  static SidebandModel from(const DerivedParams& d, double lambda = 0.0);
  static SidebandModel from(const TwoCavityParams& p, const DerivedParams& d, double lambda = 0.0);

  /// tau >= 10 max(1/kappa, 1/lambda).
  double validity_start() const;
};

/// A tau-domain value with the validity flag of its derivation.
struct TauValue {
  double value = 0.0;
  bool extrapolated = false;
};

TauValue g2_single_same(double tau, const SidebandModel& m);
TauValue g2_single_same(double tau, const DerivedParams& d);

enum class CrossDirection { blue_given_red, red_given_blue };

/// Throws "undefined" for blue_given_red at n_m = 0.
TauValue g2_single_cross(double tau, CrossDirection dir, const SidebandModel& m);
TauValue g2_single_cross(double tau, CrossDirection dir, const DerivedParams& d);

/// Blue-after-red correlations between detectors A and B behind the beam
/// splitter. `from` must be a red tag and `to` a blue tag on A or B.
TauValue g2_two_cavity(double tau, DetectorTag from, DetectorTag to, const SidebandModel& m);
TauValue g2_two_cavity(double tau, DetectorTag from, DetectorTag to, const TwoCavityParams& p,
                       const DerivedParams& d);

/// 4 (g_aa + g_ba - 1) / (g_aa - g_ba)^2. Throws "degenerate" when the
/// difference is below `tolerance`.
double witness_from_g2(double g2_aa, double g2_ba, double tolerance = 1e-10);

inline constexpr double kBlindSpotTolerance = 1e-6;

/// Closed-form witness bound conditioned on A_r. Throws "blind spot".
TauValue witness_rm(double tau, const SidebandModel& m);
TauValue witness_rm(double tau, const TwoCavityParams& p, const DerivedParams& d);

/// Positive root of 7 n^2 + 2 n - 1 = 0.
double witness_threshold_occupancy();

struct ViolationBoundary {
  double n_max = 0.0;
  double tau_max = 0.0;  ///< seconds (or 1/gamma_eff units)
};

/// Throws "no violation possible" if n_m >= n_max.
ViolationBoundary violation_boundary(double n_m, double gamma_eff);
ViolationBoundary violation_boundary(const DerivedParams& d);

/// g_AbAr / (g_AbAr + g_BbAr); the classical bound is 2/3.
double classical_ratio(double tau, const SidebandModel& m);
/// Delay below which the ratio exceeds 2/3 for delta = 0; 0 if it never does.
double classical_ratio_crossover(const SidebandModel& m);

struct SpectrumTerms {
  double carrier = 0.0;
  double red = 0.0;
  double blue = 0.0;
  double total = 0.0;
  bool carrier_included = false;
};

/// Output spectrum in the rotating frame: red at +omega_eff, blue at
/// -omega_eff, suppressed carrier of width laser_linewidth at 0.
SpectrumTerms output_spectrum(double omega, const DerivedParams& d, double laser_linewidth,
                              double r_suppress);

struct SidebandCorrelator {
  std::complex<double> anomalous;  ///< <b_r^dag(t) b_b^dag(t + tau)>
  std::complex<double> normal;     ///< <b_r^dag(t) b_b(t + tau)>, zero to this order
  double vartheta = 0.0;           ///< filter phase, drops out of every |.|^2
  bool extrapolated = false;
};

SidebandCorrelator sideband_cross_correlator(double tau, const SystemParams& p,
                                             const DerivedParams& d, double vartheta = 0.0);

struct FilterChainParams {
  double mu = 0.0;
  double delta1 = 0.0;
  double capital_delta1 = 0.0;
  double lambda = 0.0;
  double delta2 = 0.0;
  double gamma_laser = 0.0;
  double r_suppress = 1.0;
};

std::complex<double> filter_rho(double omega, const FilterChainParams& fc);
std::complex<double> filter_blue(double omega, const FilterChainParams& fc, double omega_m);
std::complex<double> filter_red(double omega, const FilterChainParams& fc, double omega_m);

struct FilterChainReport {
  std::vector<double> omega;
  std::vector<std::complex<double>> f_blue;
  std::vector<std::complex<double>> f_red;
  double leakage_ratio = 0.0;          ///< f_c^(b) / f_c, closed-form approximation
  double leakage_ratio_numeric = 0.0;  ///< same, by quadrature over the carrier peak
  std::optional<double> fb_over_fc;
  std::optional<double> fb_over_fcb;
  /// Fraction of each sideband flux that survives its own filter.
  double blue_transmission = 0.0;
  double red_transmission = 0.0;
  std::vector<std::string> warnings;
};

/// Evaluates the filter functions on `grid_points` frequencies spanning
/// [-2 omega_m, 2 omega_m] together with the leakage and flux budget.
FilterChainReport filter_chain(const FilterChainParams& fc, const DerivedParams& d,
                               int grid_points = 801);

/// max(2(|q| - sqrt(p00 p11)), 0).
double concurrence(double p00, double p11, std::complex<double> q);

/// max(1 - R_m, 0) over (gamma_eff tau, n_m) with the violation boundary.
struct WitnessMap {
  std::vector<double> scaled_tau;  ///< gamma_eff tau
  std::vector<double> n_m;
  std::vector<double> values;  ///< row-major, n_m index outer
  std::vector<std::pair<double, double>> boundary;  ///< (gamma_eff tau_max, n_m)
};

WitnessMap witness_map(int n_tau = 201, int n_occupancy = 151, double tau_extent = 4.0,
                       double n_extent = 0.3);

}  // namespace analytic
}  // namespace optoent
