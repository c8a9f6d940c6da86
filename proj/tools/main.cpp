#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "optoent/error.hpp"
#include "run.hpp"

namespace {

const char* category_name(optoent::ErrorCategory c) {
  switch (c) {
    case optoent::ErrorCategory::config: return "config";
    case optoent::ErrorCategory::numerical: return "numerical";
    case optoent::ErrorCategory::statistical: return "statistical";
  }
  return "unknown";
}

void report(const std::string& category, const std::string& code, const std::string& detail, int exit_code) {
  const nlohmann::json j = {
      {"error", {{"category", category}, {"code", code}, {"detail", detail}, {"exit_code", exit_code}}}};
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  using optoent::cli::RunRequest;

  CLI::App app{"Sideband photon statistics of optomechanical cooling"};
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::string config_path;
  std::string preset;
  std::uint64_t seed = 0;
  std::string format;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
  std::vector<std::string> inputs;
  unsigned workers = 0;
  bool quiet = false;

  app.add_option("--config", config_path, "Config file; a manifest.cfg reproduces its run");
  app.add_option("--preset", preset, "System preset")->check(CLI::IsMember({"paper", "desk", "none"}));
  auto* seed_opt = app.add_option("--seed", seed, "Root seed of every random stream");
  app.add_option("--out-dir", out_dir, "Directory for artifacts and the manifest");
  app.add_option("--format", format, "Table format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--set", overrides, "Override a config entry, section.key=value")->take_all();
  app.add_option("--input", inputs, "Record files for analyze")->take_all();
  app.add_option("--workers", workers, "Worker threads, 0 for all cores");
  app.add_flag("--quiet", quiet, "No summary on stdout");

  for (const auto& m : optoent::cli::kModes) app.add_subcommand(m, "Run the " + m + " mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report("config", "invalid arguments", e.what(), 2);
    return 2;
  }

  try {
    RunRequest req;
    if (!config_path.empty()) req.config = optoent::cli::Config::load(config_path);
    for (const auto& s : overrides) req.config.set(s);
    for (const auto* sub : app.get_subcommands()) req.mode = sub->get_name();
    req.preset = preset;
    if (seed_opt->count() > 0) req.seed = seed;
    req.format = format;
    req.out_dir = out_dir;
    req.inputs = inputs;
    req.workers = workers;
    req.quiet = quiet;
    optoent::cli::run(std::move(req));
  } catch (const optoent::Error& e) {
    std::string detail = e.what();
    const std::string prefix = e.code() + ": ";
    if (detail.rfind(prefix, 0) == 0) detail.erase(0, prefix.size());
    report(category_name(e.category()), e.code(), detail, e.exit_code());
    return e.exit_code();
  } catch (const std::exception& e) {
    report("internal", "unexpected", e.what(), 1);
    return 1;
  }
  return 0;
}
