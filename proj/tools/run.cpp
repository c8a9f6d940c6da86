#include "run.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "optoent/analytic.hpp"
#include "optoent/click_io.hpp"
#include "optoent/core.hpp"
#include "optoent/counting.hpp"
#include "optoent/ensemble.hpp"
#include "optoent/error.hpp"
#include "optoent/heterodyne.hpp"
#include "optoent/rng.hpp"
#include "optoent/trajectory.hpp"
#include "svg.hpp"

namespace optoent::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const DetectorTag kAr{Detector::A, Color::red};
const DetectorTag kAb{Detector::A, Color::blue};
const DetectorTag kBb{Detector::B, Color::blue};
const DetectorTag kSr{Detector::single, Color::red};
const DetectorTag kSb{Detector::single, Color::blue};

struct Ctx {
  explicit Ctx(Config& c) : cfg(c) {}

  Config& cfg;
  std::string mode;
  std::string preset;
  std::string format;
  std::uint64_t seed = 1;
  fs::path out;
  std::vector<std::string> inputs;
  unsigned workers = 0;
  bool quiet = false;
  std::string manifest;

  UnitSystem units() const {
    if (cfg.units() != UnitSystem::unset) return cfg.units();
    return preset == "desk" ? UnitSystem::scaled : UnitSystem::si;
  }
  bool json_out() const { return format == "json"; }

  // Tables, plots and the summary are held until the config has been fully
  // checked, so a rejected run leaves no partial artifacts behind.
  void write(const std::string& name, std::string content) { staged.emplace_back(name, std::move(content)); }
  void say(const std::string& line) {
    if (!quiet) summary += line + "\n";
  }
  void flush() const {
    for (const auto& [name, content] : staged) {
      const fs::path path = out / name;
      std::ofstream os(path, std::ios::binary);
      if (!os) fail_config("io error", "cannot open '" + path.string() + "' for writing");
      os << content;
      if (!os) fail_config("io error", "failed writing '" + path.string() + "'");
    }
    std::cout << summary << std::flush;
  }

  std::vector<std::pair<std::string, std::string>> staged;
  std::string summary;
};

// Reads one config section and echoes every resolved value into the manifest.
class Section {
 public:
  Section(Ctx& ctx, std::string name) : ctx_(ctx), name_(std::move(name)) { w_.section(name_); }
  ~Section() { ctx_.manifest += w_.str(); }
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  std::optional<double> maybe(const std::string& key, Dim dim) {
    const auto v = ctx_.cfg.quantity(name_, key, dim);
    if (v) put(key, *v, dim);
    return v;
  }
  double get(const std::string& key, Dim dim, double fallback) {
    const double v = ctx_.cfg.quantity(name_, key, dim).value_or(fallback);
    put(key, v, dim);
    return v;
  }
  double need(const std::string& key, Dim dim) {
    const auto v = ctx_.cfg.quantity(name_, key, dim);
    if (!v) fail_config("missing key", name_ + "." + key + " is required");
    put(key, *v, dim);
    return *v;
  }
  long long integer(const std::string& key, long long fallback, long long lo, long long hi) {
    const long long v = ctx_.cfg.integer(name_, key).value_or(fallback);
    if (v < lo || v > hi) {
      fail_config("invalid config", name_ + "." + key + " = " + std::to_string(v) + " outside [" +
                                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    w_.integer(key, v);
    return v;
  }
  std::string choice(const std::string& key, const std::string& fallback, const std::set<std::string>& allowed) {
    const std::string v = ctx_.cfg.text(name_, key).value_or(fallback);
    if (!allowed.count(v)) {
      std::string opts;
      for (const auto& a : allowed) opts += (opts.empty() ? "" : ", ") + a;
      fail_config("invalid config", name_ + "." + key + " = '" + v + "' is not one of " + opts);
    }
    w_.text(key, v);
    return v;
  }
  bool flag(const std::string& key, bool fallback) {
    return choice(key, fallback ? "yes" : "no", {"yes", "no"}) == "yes";
  }
  void put(const std::string& key, double v, Dim dim) { w_.quantity(key, v, dim, ctx_.units()); }
  void text(const std::string& key, const std::string& v) { w_.text(key, v); }

 private:
  Ctx& ctx_;
  std::string name_;
  ConfigWriter w_;
};

// ---------------------------------------------------------------- system

struct SystemSpec {
  bool desk = false;
  std::map<std::string, double> v;
};

const std::vector<std::pair<std::string, Dim>> kSystemKeys = {
    {"omega_m", Dim::rate},   {"gamma", Dim::rate},        {"kappa", Dim::rate},
    {"kappa_r", Dim::rate},   {"alpha", Dim::rate},        {"detuning", Dim::rate},
    {"temperature", Dim::temperature}, {"n_th", Dim::none}, {"abar", Dim::none},
    {"bare_coupling", Dim::rate}, {"omega_eff", Dim::rate}};
const std::vector<std::pair<std::string, Dim>> kDeskKeys = {
    {"n_m", Dim::none}, {"omega_m", Dim::rate}, {"bath_share", Dim::none}};
const std::set<std::string> kRequired = {"omega_m", "gamma", "kappa", "kappa_r", "alpha", "detuning"};

Dim system_dim(const SystemSpec& s, const std::string& key) {
  for (const auto& [k, d] : s.desk ? kDeskKeys : kSystemKeys) {
    if (k == key) return d;
  }
  fail_config("invalid config", "'" + key + "' is not a " + (s.desk ? "desk" : "system") + " parameter");
}

SystemParams build(const SystemSpec& s) {
  if (s.desk) return desk_preset(s.v.at("n_m"), s.v.at("omega_m"), s.v.at("bath_share"));
  SystemParams p;
  p.omega_m = s.v.at("omega_m");
  p.gamma = s.v.at("gamma");
  p.kappa = s.v.at("kappa");
  p.kappa_r = s.v.at("kappa_r");
  p.alpha_mag = s.v.at("alpha");
  p.detuning = s.v.at("detuning");
  auto opt = [&](const char* k) -> std::optional<double> {
    const auto it = s.v.find(k);
    return it == s.v.end() ? std::nullopt : std::optional<double>(it->second);
  };
  p.bath = make_bath(opt("temperature"), opt("n_th"));
  p.abar_mag = opt("abar");
  p.bare_coupling = opt("bare_coupling");
  p.omega_eff = opt("omega_eff");
  return p;
}

SystemSpec resolve_system(Ctx& ctx) {
  SystemSpec spec;
  Section sec(ctx, "system");
  if (ctx.preset == "desk") {
    ctx.cfg.require_units(UnitSystem::scaled, "the desk preset");
    spec.desk = true;
    spec.v["n_m"] = sec.get("n_m", Dim::none, 0.1);
    spec.v["omega_m"] = sec.get("omega_m", Dim::rate, 50.0);
    spec.v["bath_share"] = sec.get("bath_share", Dim::none, 0.1);
    return spec;
  }
  std::map<std::string, double> base;
  if (ctx.preset == "paper") {
    ctx.cfg.require_units(UnitSystem::si, "the paper preset");
    const SystemParams p = paper_preset();
    base = {{"omega_m", p.omega_m}, {"gamma", p.gamma},         {"kappa", p.kappa},
            {"kappa_r", p.kappa_r}, {"alpha", p.alpha_mag},     {"detuning", p.detuning}};
  }
  for (const auto& [key, dim] : kSystemKeys) {
    auto v = ctx.cfg.quantity("system", key, dim);
    if (!v && base.count(key)) v = base.at(key);
    if (v) spec.v[key] = *v;
  }
  for (const auto& key : kRequired) {
    if (!spec.v.count(key)) fail_config("missing key", "system." + key + " is required without a preset");
  }
  if (!spec.v.count("temperature") && !spec.v.count("n_th") && ctx.preset == "paper") {
    spec.v["temperature"] = paper_preset().bath.value();
  }
  if (spec.v.count("temperature") && ctx.units() == UnitSystem::scaled) {
    fail_config("ambiguous units", "a bath temperature needs SI frequencies; give n_th in scaled units");
  }
  // Echo in a fixed order.
  for (const auto& [key, dim] : kSystemKeys) {
    if (spec.v.count(key)) sec.put(key, spec.v.at(key), dim);
  }
  build(spec);  // surfaces "invalid bath" early
  return spec;
}

TwoCavityParams resolve_pair(Ctx& ctx, const SystemParams& sp) {
  Section sec(ctx, "pair");
  TwoCavityParams p{sp, sp, 0.0, 0.0};
  p.delta = sec.get("delta", Dim::rate, 0.0);
  p.phi = sec.get("phi", Dim::angle, 0.0);
  return p;
}

// ---------------------------------------------------------------- tables

std::string num(double x) { return std::isfinite(x) ? format_double(x) : "nan"; }

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string provenance(const Ctx& ctx, const std::string& what) {
  return "optoent " + ctx.mode + ": " + what + "; preset " + ctx.preset + ", seed " + std::to_string(ctx.seed) +
         "; parameters in manifest.cfg";
}

std::string estimate_name(const counting::CorrelationEstimate& e) {
  if (e.quantity == "witness") return "witness";
  return "g2_" + to_string(e.to) + "_given_" + to_string(e.from);
}

std::string estimate_csv(const counting::CorrelationEstimate& e) {
  std::ostringstream os;
  counting::write_csv(os, e);
  return os.str();
}

// Evaluates f, mapping domain errors of the closed forms to NaN.
double guarded(const std::function<double()>& f) {
  try {
    return f();
  } catch (const Error&) {
    return kNaN;
  }
}

struct Curve {
  std::string label;
  std::function<double(double)> f;
};

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / (n - 1);
  return out;
}

Series curve_series(const Curve& c, double t0, double t1) {
  Series s{c.label, linspace(t0, t1, 241), {}, {}, false};
  for (double t : s.x) s.y.push_back(guarded([&] { return c.f(t); }));
  return s;
}

Series estimate_series(const counting::CorrelationEstimate& e, const std::string& label) {
  Series s{label, e.tau, {}, {}, true};
  for (std::size_t k = 0; k < e.tau.size(); ++k) {
    s.y.push_back(e.defined[k] ? e.values[k] : kNaN);
    const double b = k < e.bootstrap_errors.size() ? e.bootstrap_errors[k] : 0.0;
    s.err.push_back(std::max(e.std_errors[k], std::isfinite(b) ? b : 0.0));
  }
  return s;
}

std::string analytic_csv(const std::vector<double>& tau, const std::vector<Curve>& curves) {
  std::string s = "tau";
  for (const auto& c : curves) s += "," + c.label;
  s += "\n";
  for (double t : tau) {
    s += num(t);
    for (const auto& c : curves) s += "," + num(guarded([&] { return c.f(t); }));
    s += "\n";
  }
  return s;
}

json analytic_json(const std::vector<double>& tau, const std::vector<Curve>& curves) {
  json j = json::object();
  j["tau"] = tau;
  for (const auto& c : curves) {
    std::vector<double> v;
    for (double t : tau) v.push_back(guarded([&] { return c.f(t); }));
    j[c.label] = v;
  }
  return j;
}

std::string classical_csv(const counting::ClassicalReport& r) {
  std::string s = "test,tau,lhs,rhs,sigma,significance,violated\n";
  auto rows = [&](const char* name, const std::vector<counting::InequalityPoint>& v) {
    for (const auto& p : v) {
      s += std::string(name) + "," + num(p.tau) + "," + num(p.lhs) + "," + num(p.rhs) + "," + num(p.sigma) + "," +
           num(p.significance) + "," + (p.violated ? "1" : "0") + "\n";
    }
  };
  rows("cauchy_schwarz", r.cauchy_schwarz);
  rows("ratio_bound", r.ratio_bound);
  return s;
}

std::string first_blue_csv(const counting::FirstBlueAfterRed& f) {
  std::string s = "tau,total,at_a,p_a,p_a_se,density\n";
  for (std::size_t k = 0; k < f.tau.size(); ++k) {
    s += num(f.tau[k]) + "," + std::to_string(f.total[k]) + "," + std::to_string(f.at_a[k]) + "," + num(f.p_a[k]) +
         "," + num(f.p_a_se[k]) + "," + num(f.density[k]) + "\n";
  }
  return s;
}

// ---------------------------------------------------------------- analyses

struct ClickAnalysis {
  double tau_max = 0.0;
  double bin = 0.0;
  std::size_t bootstrap = 0;
  double block = 0.0;
};

ClickAnalysis resolve_click_analysis(Ctx& ctx, std::optional<double> scale) {
  Section sec(ctx, "analysis");
  ClickAnalysis a;
  if (scale) {
    a.tau_max = sec.get("tau_max", Dim::time, 3.0 * *scale);
    a.bin = sec.get("bin", Dim::time, 0.2 * *scale);
    a.bootstrap = static_cast<std::size_t>(sec.integer("bootstrap", 200, 0, 100000));
    a.block = sec.get("block_length", Dim::time, 10.0 * *scale);
  } else {
    a.tau_max = sec.need("tau_max", Dim::time);
    a.bin = sec.need("bin", Dim::time);
    a.bootstrap = static_cast<std::size_t>(sec.integer("bootstrap", 200, 0, 100000));
    a.block = sec.get("block_length", Dim::time, 0.0);
  }
  if (!(a.bin > 0.0) || !(a.tau_max >= a.bin)) fail_config("invalid binning", "need 0 < bin <= tau_max");
  return a;
}

bool has_pair_detectors(std::span<const ClickRecord> recs) {
  bool pair = false;
  bool single = false;
  for (const auto& r : recs) {
    for (const auto& e : r.events) (e.tag.detector == Detector::single ? single : pair) = true;
  }
  if (pair && single) fail_config("invalid record", "records mix single-cavity and beam-splitter detectors");
  return pair;
}

void analyze_clicks(Ctx& ctx, const std::vector<ClickRecord>& recs, const ClickAnalysis& a,
                    const std::optional<analytic::SidebandModel>& model) {
  const bool pair = has_pair_detectors(recs);
  auto g2 = [&](DetectorTag from, DetectorTag to) {
    if (a.bootstrap > 0) {
      return counting::estimate_g2(recs, from, to, a.tau_max, a.bin,
                                   counting::BootstrapOptions{a.bootstrap, a.block, ctx.seed}, ctx.workers);
    }
    return counting::estimate_g2(recs, from, to, a.tau_max, a.bin, ctx.workers);
  };

  std::vector<counting::CorrelationEstimate> est;
  std::vector<Curve> curves;
  counting::ClassicalReport classical;
  std::optional<counting::CorrelationEstimate> witness;
  std::optional<counting::FirstBlueAfterRed> first;
  if (pair) {
    est.push_back(g2(kAr, kAb));
    est.push_back(g2(kAr, kBb));
    witness = counting::estimate_witness(recs, a.tau_max, a.bin, {a.bootstrap, a.block, ctx.seed, kAr});
    first = counting::first_blue_after_red(recs, a.tau_max, a.bin);
    classical = counting::classical_tests({nullptr, nullptr, nullptr, &est[0], &est[1], 3.0});
    if (model) {
      const auto m = *model;
      curves.push_back({"g2_A_blue_given_A_red", [m](double t) { return analytic::g2_two_cavity(t, kAr, kAb, m).value; }});
      curves.push_back({"g2_B_blue_given_A_red", [m](double t) { return analytic::g2_two_cavity(t, kAr, kBb, m).value; }});
      curves.push_back({"witness", [m](double t) { return analytic::witness_rm(t, m).value; }});
    }
  } else {
    est.push_back(g2(kSr, kSb));
    est.push_back(g2(kSb, kSr));
    est.push_back(g2(kSr, kSr));
    est.push_back(g2(kSb, kSb));
    classical = counting::classical_tests({&est[0], &est[2], &est[3], nullptr, nullptr, 3.0});
    if (model) {
      const auto m = *model;
      using analytic::CrossDirection;
      curves.push_back({"g2_S_blue_given_S_red", [m](double t) {
                          return analytic::g2_single_cross(t, CrossDirection::blue_given_red, m).value;
                        }});
      curves.push_back({"g2_S_red_given_S_blue", [m](double t) {
                          return analytic::g2_single_cross(t, CrossDirection::red_given_blue, m).value;
                        }});
      curves.push_back({"g2_same_color", [m](double t) { return analytic::g2_single_same(t, m).value; }});
    }
  }

  const std::vector<double>& tau = est.front().tau;
  if (ctx.json_out()) {
    json j;
    j["estimates"] = json::array();
    for (const auto& e : est) j["estimates"].push_back(counting::to_json(e));
    if (witness) j["witness"] = counting::to_json(*witness);
    if (first) j["first_blue_after_red"] = counting::to_json(*first);
    j["classical"] = counting::to_json(classical);
    if (!curves.empty()) j["analytic"] = analytic_json(tau, curves);
    ctx.write("results.json", j.dump(2) + "\n");
  } else {
    for (const auto& e : est) ctx.write(estimate_name(e) + ".csv", estimate_csv(e));
    if (witness) ctx.write("witness.csv", estimate_csv(*witness));
    if (first) ctx.write("first_blue_after_red.csv", first_blue_csv(*first));
    ctx.write("classical.csv", classical_csv(classical));
    if (!curves.empty()) ctx.write("analytic.csv", analytic_csv(tau, curves));
  }

  LinePlot plot{pair ? "Blue clicks after a red click at A" : "Sideband click correlations", "tau", "g2(tau)", {}, 1.0};
  for (const auto& e : est) plot.series.push_back(estimate_series(e, to_string(e.to) + " | " + to_string(e.from)));
  for (const auto& c : curves) {
    if (c.label != "witness") plot.series.push_back(curve_series(c, 0.0, a.tau_max));
  }
  ctx.write("g2.svg", render(plot, provenance(ctx, "click-count g2 estimates with closed forms")));
  if (witness) {
    LinePlot wp{"Entanglement witness R_m", "tau", "R_m(tau)", {estimate_series(*witness, "estimate")}, 1.0};
    for (const auto& c : curves) {
      if (c.label == "witness") wp.series.push_back(curve_series({"closed form", c.f}, a.bin / 2, a.tau_max));
    }
    ctx.write("witness.svg", render(wp, provenance(ctx, "witness estimate with closed form")));
  }

  std::uint64_t clicks = 0;
  for (const auto& r : recs) clicks += r.events.size();
  ctx.say("records: " + std::to_string(recs.size()) + ", clicks: " + std::to_string(clicks));
  for (const auto& e : est) {
    ctx.say(estimate_name(e) + ": first bin " + fixed(e.values.front(), 4) + " +- " + fixed(e.std_errors.front(), 4) +
            " (" + std::to_string(e.n_from) + " triggers)");
  }
  if (witness) {
    double best = kNaN;
    double at = kNaN;
    for (std::size_t k = 0; k < witness->tau.size(); ++k) {
      if (witness->defined[k] && !(witness->values[k] >= best)) {
        best = witness->values[k];
        at = witness->tau[k];
      }
    }
    ctx.say("witness minimum " + fixed(best, 4) + " at tau " + fixed(at, 4));
  }
  ctx.say(std::string("Cauchy-Schwarz violated: ") + (classical.cs_violated ? "yes" : "no") +
          ", 2/3 ratio bound violated: " + (classical.ratio_violated ? "yes" : "no"));
}

struct HeterodyneAnalysis {
  double lambda = 0.0;
  heterodyne::FilterShape shape = heterodyne::FilterShape::gaussian;
  std::vector<double> grid;
  bool tail_correction = true;
  std::size_t blocks = 16;
};

HeterodyneAnalysis resolve_heterodyne_analysis(Ctx& ctx, std::optional<double> gamma_eff) {
  Section sec(ctx, "analysis");
  HeterodyneAnalysis a;
  double t0 = 0.0;
  double t1 = 0.0;
  double step = 0.0;
  if (gamma_eff) {
    const double s = 1.0 / *gamma_eff;
    a.lambda = sec.get("lambda", Dim::rate, 8.0 * *gamma_eff);
    t0 = sec.get("tau_min", Dim::time, std::max(0.75 * s, 6.0 / a.lambda));
    t1 = sec.get("tau_max", Dim::time, 3.0 * s);
    step = sec.get("tau_step", Dim::time, 0.25 * s);
  } else {
    a.lambda = sec.need("lambda", Dim::rate);
    t0 = sec.need("tau_min", Dim::time);
    t1 = sec.need("tau_max", Dim::time);
    step = sec.need("tau_step", Dim::time);
  }
  a.shape = sec.choice("filter", "gaussian", {"gaussian", "raised-cosine"}) == "gaussian"
                ? heterodyne::FilterShape::gaussian
                : heterodyne::FilterShape::raised_cosine;
  a.tail_correction = sec.flag("tail_correction", true);
  a.blocks = static_cast<std::size_t>(sec.integer("blocks", 16, 2, 100000));
  if (!(step > 0.0) || !(t0 >= 0.0) || !(t1 >= t0)) fail_config("invalid binning", "need 0 <= tau_min <= tau_max, tau_step > 0");
  const auto n = static_cast<std::size_t>(std::floor((t1 - t0) / step + 1e-9)) + 1;
  for (std::size_t k = 0; k < n; ++k) a.grid.push_back(t0 + static_cast<double>(k) * step);
  return a;
}

void analyze_heterodyne(Ctx& ctx, const std::vector<heterodyne::SidebandCurrents>& cur, const HeterodyneAnalysis& a,
                        std::optional<double> gamma_hint, const std::optional<analytic::SidebandModel>& model,
                        bool pair) {
  heterodyne::ReconstructOptions ro;
  ro.tau_grid = a.grid;
  ro.tail_correction = a.tail_correction;
  ro.gamma_eff_hint = gamma_hint;
  ro.blocks_per_trial = a.blocks;
  ro.workers = ctx.workers;
  const heterodyne::Reconstruction r = heterodyne::reconstruct_g2(cur, ro);

  std::vector<Curve> curves;
  if (model) {
    const auto m = *model;
    curves.push_back({"g2_same_color", [m](double t) { return analytic::g2_single_same(t, m).value; }});
    if (pair) {
      curves.push_back({"g2_A_blue_given_A_red", [m](double t) { return analytic::g2_two_cavity(t, kAr, kAb, m).value; }});
      curves.push_back({"g2_B_blue_given_A_red", [m](double t) { return analytic::g2_two_cavity(t, kAr, kBb, m).value; }});
    } else {
      using analytic::CrossDirection;
      curves.push_back({"g2_S_blue_given_S_red", [m](double t) {
                          return analytic::g2_single_cross(t, CrossDirection::blue_given_red, m).value;
                        }});
      curves.push_back({"g2_S_red_given_S_blue", [m](double t) {
                          return analytic::g2_single_cross(t, CrossDirection::red_given_blue, m).value;
                        }});
    }
  }
  const std::vector<double>& tau = r.estimates.front().tau;
  if (ctx.json_out()) {
    json j;
    j["estimates"] = json::array();
    for (const auto& e : r.estimates) j["estimates"].push_back(counting::to_json(e));
    j["gamma_eff"] = r.gamma_eff;
    j["tail_factor"] = r.tail_factor;
    j["warnings"] = r.warnings;
    json fl = json::array();
    for (const auto& c : cur) {
      fl.push_back({{"detector", to_string(c.detector)},
                    {"trial", c.trial},
                    {"noise_floor", c.floor.level},
                    {"w_red", c.w_red},
                    {"w_blue", c.w_blue}});
    }
    j["currents"] = fl;
    if (!curves.empty()) j["analytic"] = analytic_json(tau, curves);
    ctx.write("results.json", j.dump(2) + "\n");
  } else {
    for (const auto& e : r.estimates) ctx.write(estimate_name(e) + ".csv", estimate_csv(e));
    std::string s = "detector,trial,noise_floor,w_red,w_blue\n";
    for (const auto& c : cur) {
      s += to_string(c.detector) + "," + std::to_string(c.trial) + "," + num(c.floor.level) + "," + num(c.w_red) +
           "," + num(c.w_blue) + "\n";
    }
    ctx.write("currents.csv", s);
    if (!curves.empty()) ctx.write("analytic.csv", analytic_csv(tau, curves));
  }

  LinePlot plot{"Heterodyne g2 reconstruction", "tau", "g2(tau)", {}, 1.0};
  for (const auto& e : r.estimates) {
    if (pair && !(e.from == kAr)) continue;
    plot.series.push_back(estimate_series(e, to_string(e.to) + " | " + to_string(e.from)));
  }
  for (const auto& c : curves) plot.series.push_back(curve_series(c, a.grid.front(), a.grid.back()));
  ctx.write("g2.svg", render(plot, provenance(ctx, "filtered-current g2 reconstruction with closed forms")));

  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  ctx.say("currents: " + std::to_string(cur.size()) + ", gamma_eff used for the tail " + fixed(r.gamma_eff, 4) +
          ", tail factor " + fixed(r.tail_factor, 4));
  for (const auto& e : r.estimates) {
    if (pair && !(e.from == kAr)) continue;
    ctx.say(estimate_name(e) + "(" + fixed(e.tau.front(), 3) + ") = " + fixed(e.values.front(), 4) + " +- " +
            fixed(e.std_errors.front(), 4));
  }
}

// ---------------------------------------------------------------- modes

void mode_derive(Ctx& ctx) {
  const SystemSpec spec = resolve_system(ctx);
  const SystemParams sp = build(spec);
  const DerivedParams d = derive(sp);
  const OccupancyBreakdown occ = occupancy_regime(sp);
  const double threshold = analytic::witness_threshold_occupancy();
  const double tau_max = d.n_m < threshold ? analytic::violation_boundary(d).tau_max : kNaN;
  const bool si = ctx.units() == UnitSystem::si;
  const std::string rate = si ? "rad/s" : "scaled";
  const std::string flux = si ? "1/s" : "scaled";
  const std::string time = si ? "s" : "scaled";

  struct Row {
    std::string name;
    double value;
    std::string unit;
  };
  std::vector<Row> rows = {{"omega_m", d.omega_m, rate},
                           {"omega_eff", d.omega_eff, rate},
                           {"gamma", d.gamma, rate},
                           {"kappa", d.kappa, rate},
                           {"a_minus", d.a_minus, rate},
                           {"a_plus", d.a_plus, rate},
                           {"gamma_opt", d.gamma_opt, rate},
                           {"gamma_eff", d.gamma_eff, rate},
                           {"n_th", d.n_th, "1"},
                           {"n_opt", d.n_opt, "1"},
                           {"n_m", d.n_m, "1"},
                           {"bath_part", occ.bath_part, "1"},
                           {"backaction_part", occ.backaction_part, "1"},
                           {"f_r", d.f_r, flux},
                           {"f_b", d.f_b, flux}};
  if (d.f_c) rows.push_back({"f_c", *d.f_c, flux});
  rows.push_back({"n_m_threshold", threshold, "1"});
  rows.push_back({"tau_max", tau_max, time});

  if (ctx.json_out()) {
    json j = json::object();
    for (const auto& r : rows) j[r.name] = {{"value", r.value}, {"unit", r.unit}};
    j["regime"] = to_string(occ.regime);
    j["warnings"] = d.warnings;
    ctx.write("derive.json", j.dump(2) + "\n");
  } else {
    std::string s = "quantity,value,unit\n";
    for (const auto& r : rows) s += r.name + "," + num(r.value) + "," + r.unit + "\n";
    s += "regime," + to_string(occ.regime) + ",\n";
    ctx.write("derive.csv", s);
  }

  char line[160];
  auto show = [&](const char* label, double v, const char* unit) {
    std::snprintf(line, sizeof line, "%-16s %12.4g %s", label, v, unit);
    ctx.say(line);
  };
  show("n_M", d.n_m, "");
  show("n_opt", d.n_opt, "");
  show("n_th", d.n_th, "");
  if (si) {
    show("gamma_eff/2pi", d.gamma_eff / kTwoPi * 1e-3, "kHz");
    show("gamma_opt/2pi", d.gamma_opt / kTwoPi * 1e-3, "kHz");
    show("f_r", d.f_r, "1/s");
    show("f_b", d.f_b, "1/s");
    if (d.f_c) show("f_c", *d.f_c, "1/s");
    show("tau_max", tau_max * 1e3, "ms");
  } else {
    show("gamma_eff", d.gamma_eff, "");
    show("gamma_opt", d.gamma_opt, "");
    show("f_r", d.f_r, "");
    show("f_b", d.f_b, "");
    show("tau_max", tau_max, "");
  }
  show("n_M threshold", threshold, "");
  ctx.say("regime           " + to_string(occ.regime));
  for (const auto& w : d.warnings) std::cerr << "warning: " << w << "\n";
}

void mode_sweep(Ctx& ctx) {
  SystemSpec spec = resolve_system(ctx);
  Section sec(ctx, "sweep");
  const auto name = ctx.cfg.text("sweep", "parameter");
  if (!name) fail_config("missing key", "sweep.parameter is required");
  const Dim dim = system_dim(spec, *name);
  sec.text("parameter", *name);
  const double start = sec.need("start", dim);
  const double stop = sec.need("stop", dim);
  const auto points = static_cast<std::size_t>(sec.integer("points", 21, 2, 100000));
  const bool log = sec.choice("spacing", "linear", {"linear", "log"}) == "log";
  if (log && !(start > 0.0 && stop > 0.0)) fail_config("invalid config", "log spacing needs positive start and stop");

  // A bath sweep replaces the other bath description.
  if (*name == "temperature") spec.v.erase("n_th");
  if (*name == "n_th") spec.v.erase("temperature");

  struct Point {
    double x;
    double n_m = kNaN, n_opt = kNaN, gamma_eff = kNaN, f_r = kNaN, f_b = kNaN, tau_max = kNaN;
    std::string status = "ok";
  };
  std::vector<Point> pts;
  for (std::size_t k = 0; k < points; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(points - 1);
    Point p{log ? start * std::pow(stop / start, t) : start + (stop - start) * t};
    SystemSpec s = spec;
    s.v[*name] = p.x;
    try {
      const DerivedParams d = derive(build(s));
      p.n_m = d.n_m;
      p.n_opt = d.n_opt;
      p.gamma_eff = d.gamma_eff;
      p.f_r = d.f_r;
      p.f_b = d.f_b;
      if (d.n_m < analytic::witness_threshold_occupancy()) p.tau_max = analytic::violation_boundary(d).tau_max;
    } catch (const Error& e) {
      p.status = e.code();
    }
    pts.push_back(p);
  }

  if (ctx.json_out()) {
    json j = json::array();
    for (const auto& p : pts) {
      j.push_back({{*name, p.x}, {"n_m", p.n_m}, {"n_opt", p.n_opt}, {"gamma_eff", p.gamma_eff},
                   {"f_r", p.f_r}, {"f_b", p.f_b}, {"tau_max", p.tau_max}, {"status", p.status}});
    }
    ctx.write("sweep.json", json{{"parameter", *name}, {"points", j}}.dump(2) + "\n");
  } else {
    std::string s = *name + ",n_m,n_opt,gamma_eff,f_r,f_b,tau_max,status\n";
    for (const auto& p : pts) {
      s += num(p.x) + "," + num(p.n_m) + "," + num(p.n_opt) + "," + num(p.gamma_eff) + "," + num(p.f_r) + "," +
           num(p.f_b) + "," + num(p.tau_max) + "," + p.status + "\n";
    }
    ctx.write("sweep.csv", s);
  }
  Series s{"n_M", {}, {}, {}, false};
  for (const auto& p : pts) {
    s.x.push_back(p.x);
    s.y.push_back(p.n_m);
  }
  LinePlot plot{"Phonon occupancy versus " + *name, *name, "n_M", {s}, analytic::witness_threshold_occupancy()};
  ctx.write("sweep.svg", render(plot, provenance(ctx, "derived occupancy sweep; dashed line is the witness threshold")));
  std::size_t ok = 0;
  for (const auto& p : pts) ok += p.status == "ok";
  ctx.say("swept " + *name + " over " + std::to_string(points) + " points, " + std::to_string(ok) + " derivable");
}

void mode_simulate_jumps(Ctx& ctx) {
  const SystemSpec spec = resolve_system(ctx);
  const SystemParams sp = build(spec);
  const DerivedParams d0 = derive(sp);
  const double scale = 1.0 / d0.gamma_eff;

  int cavities = 2;
  int n_max = 5;
  std::size_t records = 4;
  double duration = 0.0;
  double burn_in = 0.0;
  std::optional<double> eta;
  bool save = true;
  bool binary = false;
  trajectory::EvolveOptions eo;
  {
    Section sec(ctx, "simulation");
    cavities = static_cast<int>(sec.integer("cavities", 2, 1, 2));
    n_max = static_cast<int>(sec.integer("n_max", 5, 1, 40));
    records = static_cast<std::size_t>(sec.integer("records", 4, 1, 100000));
    duration = sec.get("duration", Dim::time, 2000.0 * scale);
    burn_in = sec.get("burn_in", Dim::time, 20.0 * scale);
    eta = sec.maybe("eta_esc", Dim::none);
    eo.truncation_tolerance = sec.get("truncation_tolerance", Dim::none, 1e-2);
    save = sec.flag("save_clicks", true);
    binary = sec.choice("click_format", "text", {"text", "binary"}) == "binary";
  }
  std::optional<TwoCavityParams> pair;
  if (cavities == 2) pair = resolve_pair(ctx, sp);
  const DerivedParams d = pair ? derive_pair(*pair) : d0;
  const double eta_esc = eta.value_or(d.eta_esc());
  const ClickAnalysis a = resolve_click_analysis(ctx, scale);

  const trajectory::ChannelSet channels = pair ? trajectory::build_channels(*pair, d, n_max, eta_esc)
                                               : trajectory::build_single_channels(d, n_max, eta_esc);
  const auto recs = trajectory::simulate_records(channels, records, duration, burn_in, ctx.seed, eo, ctx.workers);
  if (save) {
    for (std::size_t k = 0; k < recs.size(); ++k) {
      const std::string name = "clicks_" + std::to_string(k) + (binary ? ".bin" : ".txt");
      save_clicks((ctx.out / name).string(), recs[k], binary);
    }
  }
  const auto model = pair ? analytic::SidebandModel::from(*pair, d) : analytic::SidebandModel::from(d);
  analyze_clicks(ctx, recs, a, model);
  for (const auto& w : d.warnings) std::cerr << "warning: " << w << "\n";
}

void mode_simulate_heterodyne(Ctx& ctx) {
  const SystemSpec spec = resolve_system(ctx);
  const SystemParams sp = build(spec);
  const DerivedParams d0 = derive(sp);
  const double scale = 1.0 / d0.gamma_eff;

  std::string source;
  int cavities = 1;
  heterodyne::QsdOptions qo;
  std::size_t records = 4;
  std::optional<double> eta;
  bool save = true;
  {
    Section sec(ctx, "simulation");
    source = sec.choice("source", "qsd", {"qsd", "surrogate"});
    cavities = static_cast<int>(sec.integer("cavities", 1, 1, 2));
    records = static_cast<std::size_t>(sec.integer("records", 4, 1, 100000));
    qo.n_max = static_cast<int>(sec.integer("n_max", 5, 1, 40));
    qo.duration = sec.get("duration", Dim::time, 1000.0 * scale);
    qo.dt = sec.get("dt", Dim::time, std::min(1e-3 * scale, 0.05 / d0.omega_eff));
    qo.burn_in = sec.get("burn_in", Dim::time, 10.0 * scale);
    qo.truncation_tolerance = sec.get("truncation_tolerance", Dim::none, 1e-2);
    eta = sec.maybe("eta_esc", Dim::none);
    save = sec.flag("save_records", true);
  }
  if (source == "surrogate" && cavities != 1) fail_config("invalid config", "the surrogate source models one cavity");
  if (!(qo.dt > 0.0) || qo.duration / qo.dt > 2e8) {
    fail_config("invalid params", "duration / dt must stay below 2e8 samples per record");
  }
  qo.eta_esc = eta;
  std::optional<TwoCavityParams> pair;
  if (cavities == 2) pair = resolve_pair(ctx, sp);
  const DerivedParams d = pair ? derive_pair(*pair) : d0;
  const HeterodyneAnalysis a = resolve_heterodyne_analysis(ctx, d.gamma_eff);

  std::vector<heterodyne::SidebandCurrents> cur;
  double top = 0.0;
  for (std::size_t k = 0; k < records; ++k) {
    const std::uint64_t seed = derive_seed(ctx.seed, k);
    std::vector<heterodyne::HeterodyneRecord> recs;
    if (source == "surrogate") {
      recs.push_back(heterodyne::synthesize_surrogate(d, qo.duration, qo.dt, seed));
    } else {
      auto res = pair ? heterodyne::unravel_qsd(*pair, d, qo, seed) : heterodyne::unravel_qsd_single(d, qo, seed);
      top = std::max(top, res.top_level_weight);
      recs = std::move(res.records);
    }
    for (const auto& rec : recs) {
      if (save) {
        save_record((ctx.out / ("record_" + std::to_string(k) + "_" + to_string(rec.detector) + ".bin")).string(), rec);
      }
      cur.push_back(heterodyne::filter_sidebands(rec, a.lambda, {a.shape, 0.0, k}));
    }
  }
  const auto model = pair ? analytic::SidebandModel::from(*pair, d, a.lambda) : analytic::SidebandModel::from(d, a.lambda);
  analyze_heterodyne(ctx, cur, a, d.gamma_eff, model, pair.has_value());
  if (source == "qsd") ctx.say("largest time-averaged top-level weight " + fixed(top, 5));
  for (const auto& w : d.warnings) std::cerr << "warning: " << w << "\n";
}

bool is_heterodyne_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail_config("io error", "cannot open '" + path + "'");
  std::string first;
  std::getline(is, first);
  return first == "# optoent heterodyne record";
}

void mode_analyze(Ctx& ctx) {
  if (ctx.inputs.empty()) fail_config("missing key", "analyze needs --input files or run.inputs");
  const bool het = is_heterodyne_file(ctx.inputs.front());
  for (const auto& p : ctx.inputs) {
    if (is_heterodyne_file(p) != het) fail_config("invalid record", "inputs mix click and heterodyne records");
  }
  // Closed forms are overlaid only when the config describes the system.
  const bool with_system = ctx.preset != "none" || ctx.cfg.has_section("system");
  std::optional<DerivedParams> d;
  std::optional<TwoCavityParams> pair;
  if (with_system) {
    const SystemParams sp = build(resolve_system(ctx));
    d = derive(sp);
    if (ctx.cfg.has_section("pair")) {
      pair = resolve_pair(ctx, sp);
      d = derive_pair(*pair);
    }
  }
  std::optional<double> scale;
  if (d) scale = 1.0 / d->gamma_eff;

  if (!het) {
    std::vector<ClickRecord> recs;
    for (const auto& p : ctx.inputs) recs.push_back(load_clicks(p));
    const ClickAnalysis a = resolve_click_analysis(ctx, scale);
    std::optional<analytic::SidebandModel> model;
    if (d) model = pair ? analytic::SidebandModel::from(*pair, *d) : analytic::SidebandModel::from(*d);
    analyze_clicks(ctx, recs, a, model);
    return;
  }
  const HeterodyneAnalysis a = resolve_heterodyne_analysis(ctx, d ? std::optional<double>(d->gamma_eff) : std::nullopt);
  // Records sharing a seed came from one run and share a time base.
  std::map<std::uint64_t, std::size_t> trial_of;
  std::vector<heterodyne::SidebandCurrents> cur;
  bool two = false;
  for (const auto& p : ctx.inputs) {
    const auto rec = heterodyne::load_record(p);
    two = two || rec.detector != Detector::single;
    const auto [it, fresh] = trial_of.emplace(rec.seed, trial_of.size());
    cur.push_back(heterodyne::filter_sidebands(rec, a.lambda, {a.shape, 0.0, it->second}));
  }
  std::optional<analytic::SidebandModel> model;
  if (d) model = pair ? analytic::SidebandModel::from(*pair, *d, a.lambda) : analytic::SidebandModel::from(*d, a.lambda);
  analyze_heterodyne(ctx, cur, a, d ? std::optional<double>(d->gamma_eff) : std::nullopt, model, two);
}

void mode_witness_map(Ctx& ctx) {
  Section sec(ctx, "map");
  const int n_tau = static_cast<int>(sec.integer("n_tau", 201, 2, 100000));
  const int n_occ = static_cast<int>(sec.integer("n_occupancy", 151, 2, 100000));
  const double tau_extent = sec.get("tau_extent", Dim::none, 4.0);
  const double n_extent = sec.get("n_extent", Dim::none, 0.3);
  if (!(tau_extent > 0.0) || !(n_extent > 0.0)) fail_config("invalid config", "map extents must be positive");
  const analytic::WitnessMap m = analytic::witness_map(n_tau, n_occ, tau_extent, n_extent);

  if (ctx.json_out()) {
    json b = json::array();
    for (const auto& [t, n] : m.boundary) b.push_back({t, n});
    const json j = {{"scaled_tau", m.scaled_tau}, {"n_m", m.n_m}, {"values", m.values}, {"boundary", b},
                    {"n_m_threshold", analytic::witness_threshold_occupancy()}};
    ctx.write("witness_map.json", j.dump(2) + "\n");
  } else {
    std::string s = "scaled_tau,n_m,value\n";
    for (std::size_t j = 0; j < m.n_m.size(); ++j) {
      for (std::size_t i = 0; i < m.scaled_tau.size(); ++i) {
        s += num(m.scaled_tau[i]) + "," + num(m.n_m[j]) + "," + num(m.values[j * m.scaled_tau.size() + i]) + "\n";
      }
    }
    ctx.write("witness_map.csv", s);
    std::string b = "scaled_tau_max,n_m\n";
    for (const auto& [t, n] : m.boundary) b += num(t) + "," + num(n) + "\n";
    ctx.write("boundary.csv", b);
  }
  HeatMap hm{"max(1 - R_m, 0)", "gamma_eff tau", "n_M", m.scaled_tau, m.n_m, m.values, {}};
  Series edge{"violation boundary", {}, {}, {}, false};
  for (const auto& [t, n] : m.boundary) {
    if (t <= tau_extent) {
      edge.x.push_back(t);
      edge.y.push_back(n);
    }
  }
  hm.overlays.push_back(edge);
  ctx.write("witness_map.svg", render(hm, provenance(ctx, "closed-form witness map with its violation boundary")));

  const double nmax = analytic::witness_threshold_occupancy();
  ctx.say("boundary meets the n_M axis at " + fixed(nmax, 4));
  const double small = 1e-3;
  ctx.say("at n_M = 0.001 the boundary sits at gamma_eff tau = " +
          fixed(analytic::violation_boundary(small, 1.0).tau_max, 4) + " and grows as ln(1/n_M)");
}

}  // namespace

void run(RunRequest req) {
  Config& cfg = req.config;
  const auto cfg_mode = cfg.text("run", "mode");
  const auto cfg_preset = cfg.text("run", "preset");
  const auto cfg_seed = cfg.text("run", "seed");
  const auto cfg_format = cfg.text("run", "format");
  const auto cfg_inputs = cfg.list("run", "inputs");

  Ctx ctx(cfg);
  ctx.mode = !req.mode.empty() ? req.mode : cfg_mode.value_or("");
  if (ctx.mode.empty()) fail_config("missing key", "no mode given; name a subcommand or set run.mode");
  if (std::find(kModes.begin(), kModes.end(), ctx.mode) == kModes.end()) {
    fail_config("invalid config", "unknown mode '" + ctx.mode + "'");
  }
  ctx.preset = !req.preset.empty() ? req.preset : cfg_preset.value_or("none");
  if (ctx.preset != "paper" && ctx.preset != "desk" && ctx.preset != "none") {
    fail_config("invalid config", "preset must be paper, desk or none, got '" + ctx.preset + "'");
  }
  if (req.seed) {
    ctx.seed = *req.seed;
  } else if (cfg_seed) {
    // Seeds span the full unsigned 64-bit range.
    const char* end = cfg_seed->data() + cfg_seed->size();
    const auto [ptr, ec] = std::from_chars(cfg_seed->data(), end, ctx.seed);
    if (ec != std::errc() || ptr != end) {
      fail_config("invalid config", "run.seed must be an unsigned 64-bit integer, got '" + *cfg_seed + "'");
    }
  }
  ctx.format = !req.format.empty() ? req.format : cfg_format.value_or("csv");
  if (ctx.format != "csv" && ctx.format != "json") fail_config("invalid config", "format must be csv or json");
  ctx.inputs = !req.inputs.empty() ? req.inputs : cfg_inputs;
  ctx.out = req.out_dir;
  ctx.workers = req.workers;
  ctx.quiet = req.quiet;

  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec) fail_config("io error", "cannot create output directory '" + ctx.out.string() + "': " + ec.message());

  {
    ConfigWriter w;
    w.section("run");
    w.text("mode", ctx.mode);
    w.text("preset", ctx.preset);
    w.text("seed", std::to_string(ctx.seed));
    w.text("format", ctx.format);
    if (!ctx.inputs.empty()) {
      std::string joined;
      for (const auto& p : ctx.inputs) joined += (joined.empty() ? "" : ", ") + p;
      w.text("inputs", joined);
    }
    ctx.manifest = w.str();
  }

  if (ctx.mode == "derive") {
    mode_derive(ctx);
  } else if (ctx.mode == "sweep") {
    mode_sweep(ctx);
  } else if (ctx.mode == "simulate-jumps") {
    mode_simulate_jumps(ctx);
  } else if (ctx.mode == "simulate-heterodyne") {
    mode_simulate_heterodyne(ctx);
  } else if (ctx.mode == "analyze") {
    mode_analyze(ctx);
  } else {
    mode_witness_map(ctx);
  }
  cfg.reject_unused();
  ctx.write("manifest.cfg", "# optoent run manifest; rerun with: optoent --config manifest.cfg\n" + ctx.manifest);
  ctx.flush();
}

}  // namespace optoent::cli
