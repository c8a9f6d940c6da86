#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace optoent {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kHbar = 1.054571817e-34;      // J s
inline constexpr double kBoltzmann = 1.380649e-23;    // J/K

/// Mechanical bath, specified either by temperature or by occupancy.
class Bath {
 public:
  static Bath from_temperature(double kelvin);
  static Bath from_occupancy(double n_th);

  bool is_temperature() const noexcept { return by_temperature_; }
  double value() const noexcept { return value_; }
  /// n_th = k_B T / (hbar omega_m) when given as a temperature.
  double occupancy(double omega_m) const;
  double temperature(double omega_m) const;

 private:
  Bath(bool by_temperature, double value) : by_temperature_(by_temperature), value_(value) {}
  bool by_temperature_ = false;
  double value_ = 0.0;
};

/// Exactly one of the two must be present; otherwise "invalid bath".
Bath make_bath(std::optional<double> temperature_kelvin, std::optional<double> n_th);

/// One cavity plus its mechanical oscillator. All rates in rad/s.
struct SystemParams {
  double omega_m = 0.0;
  double gamma = 0.0;
  double kappa = 0.0;
  double kappa_r = 0.0;
  double alpha_mag = 0.0;  ///< |alpha| = g x_zpf |abar|
  double detuning = 0.0;   ///< Delta, -omega_m for the cooling protocol
  Bath bath = Bath::from_occupancy(0.0);
  std::optional<double> abar_mag;       ///< intracavity amplitude, enables f_c
  std::optional<double> bare_coupling;  ///< g x_zpf (rad/s), enables f_c via |alpha|/g x_zpf
  std::optional<double> omega_eff;      ///< override for the spring-shifted frequency

  double n_th() const { return bath.occupancy(omega_m); }
  double eta_esc() const { return kappa_r / kappa; }
  double effective_frequency() const { return omega_eff.value_or(omega_m); }
  std::optional<double> carrier_amplitude() const;
};

/// Throws a config error for non-physical inputs.
void validate(const SystemParams& p);

struct DerivedParams {
  double a_minus = 0.0;
  double a_plus = 0.0;
  double gamma_opt = 0.0;
  double gamma_eff = 0.0;
  double n_opt = 0.0;
  double n_m = 0.0;
  double f_r = 0.0;
  double f_b = 0.0;
  std::optional<double> f_c;  ///< absent unless |abar| is derivable

  // Inputs echoed for downstream modules.
  double omega_m = 0.0;
  double omega_eff = 0.0;
  double gamma = 0.0;
  double n_th = 0.0;
  double kappa = 0.0;
  double kappa_r = 0.0;

  std::vector<std::string> warnings;

  double eta_esc() const { return kappa_r / kappa; }
};

std::complex<double> cavity_susceptibility(const SystemParams& p, double omega);
std::complex<double> mechanical_susceptibility(double gamma_eff, double omega_eff, double omega);

/// Cooling rates, occupancies and output fluxes. Throws "heating regime".
DerivedParams derive(const SystemParams& p);

enum class CoolingRegime { optical_dominated, bath_dominated, intermediate };

struct OccupancyBreakdown {
  double bath_part = 0.0;        ///< gamma n_th / gamma_eff
  double backaction_part = 0.0;  ///< gamma_opt n_opt / gamma_eff
  double exact = 0.0;
  double optical_limit = 0.0;  ///< (gamma/gamma_opt) n_th + n_opt
  double bath_limit = 0.0;     ///< n_th + (gamma_opt/gamma) n_opt
  CoolingRegime regime = CoolingRegime::intermediate;
};

OccupancyBreakdown occupancy_regime(const SystemParams& p);
std::string to_string(CoolingRegime r);

struct TwoCavityParams {
  SystemParams cavity1;
  SystemParams cavity2;
  double delta = 0.0;  ///< omega_m2 - omega_m1
  double phi = 0.0;    ///< interferometer phase
};

/// Derives cavity 1 and checks the pair. Asymmetry above 1% in kappa, kappa_r,
/// |alpha|, gamma_eff, n_m or the fluxes throws "asymmetric setup"; a large
/// delta only adds a warning.
DerivedParams derive_pair(const TwoCavityParams& p);

/// Paper-scale parameters: 2 MHz oscillator, Q = 2e7, 1 MHz cavity, 10 kHz coupling, 20 mK.
SystemParams paper_preset();

/// Dimensionless parameters with gamma_eff = 1 and the requested n_m.
/// n_th = n_opt = n_m so the split between bath and backaction is arbitrary;
/// bath_share sets gamma / gamma_eff.
SystemParams desk_preset(double n_m, double omega_m = 50.0, double bath_share = 0.1);

}  // namespace optoent
