#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "optoent/analytic.hpp"
#include "optoent/click_record.hpp"
#include "optoent/core.hpp"
#include "optoent/fock.hpp"
#include "optoent/rng.hpp"

namespace optoent::trajectory {

enum class ChannelKind { observed, unobserved, thermal };

struct JumpChannel {
  std::string tag;  ///< "A_red", "unobserved_blue_1", "thermal_up_2", ...
  ChannelKind kind = ChannelKind::thermal;
  std::optional<DetectorTag> detector;  ///< set for observed channels
  SparseOp op;

  bool observed() const { return kind == ChannelKind::observed; }
};

/// Jump operators and effective Hamiltonian of the conditioned oscillators.
struct ChannelSet {
  FockSpace space{2, 5};
  std::vector<JumpChannel> channels;
  SparseOp hamiltonian;  ///< Hermitian part, delta n_2
  SparseOp decay;        ///< sum of L^dag L
  double max_rate = 0.0;
  double eta_esc = 1.0;
  double delta = 0.0;
  double phi = 0.0;

  /// H_eff = H - (i/2) sum L^dag L.
  SparseOp effective_hamiltonian() const;
  /// True when H_eff is diagonal in the Fock basis.
  bool diagonal() const;
};

/// Two oscillators behind the beam splitter. Blue channels at A and B are
/// sqrt(eta a_minus / 2)(i c1 + e^{i theta} c2) and
/// sqrt(eta a_minus / 2)(c1 + i e^{i theta} c2), red ones the same with c^dag
/// and a_plus, with path phase theta = pi/2 - phi for both colours.
/// Throws "rate inconsistency" if the summed dissipator misses n_m.
ChannelSet build_channels(const TwoCavityParams& p, const DerivedParams& d, int n_max,
                          double eta_esc);
ChannelSet build_channels(const TwoCavityParams& p, const DerivedParams& d, int n_max);

/// One oscillator with a single detector per colour.
ChannelSet build_single_channels(const DerivedParams& d, int n_max, double eta_esc);

/// Steady occupancy implied by the summed up and down rates of oscillator `osc`.
double implied_occupancy(const ChannelSet& channels, int osc);

struct EvolveOptions {
  double dt = 0.0;                     ///< 0 selects dt_scale / max_rate
  double dt_scale = 0.02;
  double truncation_tolerance = 1e-2;  ///< limit on the time-averaged top-level weight
  bool check_truncation = true;
};

/// Called during propagation. `psi` is unnormalized between jumps.
class Observer {
 public:
  virtual ~Observer() = default;
  virtual void on_step(double time, const Eigen::VectorXcd& psi, double norm2);
  virtual void on_jump(double time, std::size_t channel, const Eigen::VectorXcd& psi);
};

/// One Monte Carlo wave-function trajectory. Between jumps the state follows
/// H_eff; a jump fires when the squared norm falls below a uniform threshold,
/// located by linear interpolation of the norm inside the step.
class Trajectory {
 public:
  Trajectory(const ChannelSet& channels, const JointState& initial, std::uint64_t seed,
             const EvolveOptions& options = {});

  /// Propagates to exactly t_end. Observed jumps are appended to `record`.
  void advance_to(double t_end, Observer* observer = nullptr, ClickRecord* record = nullptr);

  JointState state() const;
  double time() const { return time_; }
  double dt() const { return dt_; }
  /// Time average of the top-level Fock weight since construction.
  double top_level_weight() const;
  std::size_t jumps() const { return jumps_; }
  const std::vector<std::size_t>& jumps_per_channel() const { return per_channel_; }

 private:
  void propagate(double h, bool regular);
  std::size_t jump();
  void refresh_support();

  const ChannelSet* channels_;
  EvolveOptions options_;
  Engine rng_;
  bool diagonal_;
  Eigen::VectorXcd heff_diag_;
  Eigen::VectorXcd step_diag_;  // exp(-i H_eff dt)
  Eigen::MatrixXcd heff_dense_;
  Eigen::MatrixXcd step_dense_;
  std::vector<char> top_flag_;
  std::vector<int> support_;
  Eigen::VectorXcd psi_;
  Eigen::VectorXcd scratch_;
  double norm2_ = 1.0;
  double threshold_ = 0.0;
  double time_ = 0.0;
  double start_time_ = 0.0;
  double dt_ = 0.0;
  double top_accum_ = 0.0;
  std::size_t jumps_ = 0;
  std::vector<std::size_t> per_channel_;
  std::vector<double> weights_;
};

struct EvolveResult {
  ClickRecord record;
  JointState final_state;
  double top_level_weight = 0.0;
  std::size_t jumps = 0;
};

/// Runs one trajectory for `duration` from `initial`. Deterministic in `seed`.
/// Throws "truncation exceeded" when the time-averaged top-level weight
/// exceeds the tolerance.
EvolveResult evolve(const ChannelSet& channels, const JointState& initial, double duration,
                    std::uint64_t seed, const EvolveOptions& options = {});

/// Throws "truncation exceeded" if weight > tolerance.
void check_truncation(double weight, double tolerance, const std::string& context);

/// Key/value description of the model for record headers.
std::vector<std::pair<std::string, std::string>> snapshot(const ChannelSet& channels,
                                                          const DerivedParams& d);

}  // namespace optoent::trajectory
