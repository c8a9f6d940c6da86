#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "optoent/click_record.hpp"

namespace optoent::counting {

/// Binned estimate of g2(tau) or of the witness. Bin k covers (k bin, (k+1) bin].
struct CorrelationEstimate {
  std::string quantity = "g2";  ///< "g2" or "witness"
  DetectorTag from;
  DetectorTag to;
  double bin_width = 0.0;
  std::vector<double> tau;  ///< bin centres
  std::vector<double> values;
  std::vector<double> std_errors;
  std::vector<std::uint64_t> counts;
  std::vector<char> defined;  ///< counts > 0 (g2) or a finite witness
  std::uint64_t n_from = 0;   ///< conditioning events used
  std::uint64_t n_to = 0;
  double duration = 0.0;

  std::vector<double> bootstrap_errors;  ///< empty unless requested

  // Witness only.
  std::vector<char> degenerate;
};

/// Ordered-pair estimator [C_k / (N_from bin)] / (N_to / duration) pooled over
/// records, with Poisson errors. Conditioning events later than
/// end - tau_max are skipped so that every window is complete.
/// Throws "empty channel" when either tag has no events.
CorrelationEstimate estimate_g2(std::span<const ClickRecord> records, DetectorTag from, DetectorTag to,
                                double tau_max, double bin, unsigned workers = 0);
CorrelationEstimate estimate_g2(const ClickRecord& record, DetectorTag from, DetectorTag to,
                                double tau_max, double bin, unsigned workers = 0);

struct BootstrapOptions {
  std::size_t resamples = 200;
  double block_length = 0.0;  ///< 0 picks total duration / 50; about 10 / gamma_eff suits bunched light
  std::uint64_t seed = 1;
};

/// As above, plus block-bootstrap errors in bootstrap_errors. Poisson errors
/// ignore the bunching of trigger clicks and understate the spread when the
/// source is strongly correlated.
CorrelationEstimate estimate_g2(std::span<const ClickRecord> records, DetectorTag from, DetectorTag to,
                                double tau_max, double bin, const BootstrapOptions& bootstrap,
                                unsigned workers = 0);

struct WitnessOptions {
  std::size_t bootstrap_resamples = 200;  ///< 0 disables the bootstrap
  double block_length = 0.0;              ///< 0 picks duration / 50
  std::uint64_t seed = 1;
  DetectorTag trigger{Detector::A, Color::red};
};

/// R_m per bin from g2_{A_b|trigger} and g2_{B_b|trigger}. Errors by first-order
/// propagation; a block bootstrap over record segments goes into
/// bootstrap_errors. Bins where the two g2 differ by less than twice their
/// combined error are flagged degenerate.
CorrelationEstimate estimate_witness(std::span<const ClickRecord> records, double tau_max, double bin,
                                     const WitnessOptions& options = {});

struct FirstBlueAfterRed {
  std::vector<double> tau;
  std::vector<std::uint64_t> total;
  std::vector<std::uint64_t> at_a;
  std::vector<double> p_a;  ///< P(first blue at A | delay bin)
  std::vector<double> p_a_se;
  std::vector<double> density;  ///< waiting-time density per unit delay
  std::uint64_t n_triggers = 0;
  std::uint64_t n_truncated = 0;  ///< triggers with no later blue click in the record
  double p_a_overall = 0.0;
  double p_a_overall_se = 0.0;
};

FirstBlueAfterRed first_blue_after_red(std::span<const ClickRecord> records, double tau_max, double bin,
                                       DetectorTag trigger = {Detector::A, Color::red});
FirstBlueAfterRed first_blue_after_red(const ClickRecord& record, double tau_max, double bin,
                                       DetectorTag trigger = {Detector::A, Color::red});

struct InequalityPoint {
  double tau = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double sigma = 0.0;         ///< combined uncertainty of lhs - rhs
  double significance = 0.0;  ///< (lhs - rhs) / sigma
  bool violated = false;
};

struct ClassicalInputs {
  const CorrelationEstimate* cross = nullptr;       ///< g2_{b|r}
  const CorrelationEstimate* red_same = nullptr;    ///< g2_{r|r}
  const CorrelationEstimate* blue_same = nullptr;   ///< g2_{b|b}
  const CorrelationEstimate* same_detector = nullptr;   ///< g2_{A_b|A_r}
  const CorrelationEstimate* other_detector = nullptr;  ///< g2_{B_b|A_r}
  double threshold_sigma = 3.0;
};

struct ClassicalReport {
  std::vector<InequalityPoint> cauchy_schwarz;  ///< [g2_b|r(tau)]^2 <= g2_rr(0) g2_bb(0)
  std::vector<InequalityPoint> ratio_bound;     ///< g_AA / (g_AA + g_BA) <= 2/3
  double g2_rr0 = 0.0, g2_rr0_se = 0.0;
  double g2_bb0 = 0.0, g2_bb0_se = 0.0;
  double max_cs_significance = 0.0;
  double max_ratio_significance = 0.0;
  bool cs_violated = false;
  bool ratio_violated = false;
};

/// Zero-delay value by linear extrapolation of the first two bins.
std::pair<double, double> extrapolate_zero(const CorrelationEstimate& e);

ClassicalReport classical_tests(const ClassicalInputs& in);

/// Columns tau,value,std_error,counts, then bootstrap_error when present and degenerate for the witness.
void write_csv(std::ostream& os, const CorrelationEstimate& e);
nlohmann::json to_json(const CorrelationEstimate& e);
nlohmann::json to_json(const FirstBlueAfterRed& f);
nlohmann::json to_json(const ClassicalReport& r);

}  // namespace optoent::counting
