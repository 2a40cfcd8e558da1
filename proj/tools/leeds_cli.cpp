// Command-line front end: run / sweep / theory / calibrate.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "leeds/harness.hpp"

namespace {

using leeds::harness::json;

// Leftover "--dotted.path value" pairs become config overrides.
void apply_extras(json &doc, const std::vector<std::string> &extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string &flag = extras[i];
    if (flag.rfind("--", 0) != 0)
      throw std::invalid_argument("expected --path.to.field, got: " + flag);
    std::string path = flag.substr(2);
    std::string value;
    const auto eq = path.find('=');
    if (eq != std::string::npos) {
      value = path.substr(eq + 1);
      path = path.substr(0, eq);
    } else {
      if (i + 1 >= extras.size())
        throw std::invalid_argument("missing value for override " + flag);
      value = extras[++i];
    }
    leeds::harness::apply_override(doc, path, value);
  }
}

leeds::harness::ExperimentConfig load_with_overrides(const std::string &path,
                                                     const std::vector<std::string> &extras) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const std::exception &e) {
    throw std::invalid_argument("config parse error in " + path + ": " + std::string(e.what()));
  }
  apply_extras(doc, extras);
  return leeds::harness::parse_config(doc);
}

std::vector<double> parse_values(const std::string &csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument("bad numeric value: " + tok);
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("--values is empty");
  return out;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Online meta-learning laboratory for non-stationary task streams"};
  app.require_subcommand(1);
  app.allow_extras();

  std::string config_path, sweep_param, sweep_values, out_path;
  int calib_seed = 0;

  auto *run = app.add_subcommand("run", "Run the configured experiment");
  run->add_option("config", config_path, "JSON config file")->required();
  run->allow_extras();

  auto *sw = app.add_subcommand("sweep", "Sweep one parameter over a value list");
  sw->add_option("config", config_path, "JSON config file")->required();
  sw->add_option("--param", sweep_param, "Parameter to sweep (ell, tau, delta, p_stay)")
      ->required();
  sw->add_option("--values", sweep_values, "Comma-separated values")->required();
  sw->add_option("--out", out_path, "Output CSV path (default <output_dir>/sweep.csv)");
  sw->allow_extras();

  auto *th = app.add_subcommand("theory", "Run the regret-theory verification checks");
  th->add_option("config", config_path, "JSON config file")->required();
  th->add_option("--out", out_path, "Report JSON path (default <output_dir>/theory.json)");
  th->allow_extras();

  auto *cal = app.add_subcommand("calibrate", "Print calibrated detector thresholds");
  cal->add_option("config", config_path, "JSON config file")->required();
  cal->add_option("--seed-index", calib_seed, "Seed index to calibrate for (default 0)");
  cal->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    CLI::App *sub = app.get_subcommands().front();
    const auto cfg = load_with_overrides(config_path, sub->remaining());

    if (sub == run) {
      const auto res = leeds::harness::run_experiment(cfg);
      for (const auto &mm : res.per_mode)
        std::printf("%-14s acc %.4f +/- %.4f  precision %.4f  recall %.4f\n", mm.mode.c_str(),
                    mm.overall_acc_mean, mm.overall_acc_std, mm.precision_mean, mm.recall_mean);
      std::printf("wrote %s/summary.csv\n", cfg.output_dir.c_str());
    } else if (sub == sw) {
      const auto values = parse_values(sweep_values);
      const std::string out = out_path.empty() ? cfg.output_dir + "/sweep.csv" : out_path;
      leeds::harness::sweep(cfg, sweep_param, values, out);
      std::printf("wrote %s\n", out.c_str());
    } else if (sub == th) {
      const std::string out = out_path.empty() ? cfg.output_dir + "/theory.json" : out_path;
      const int failed = leeds::harness::run_theory_checks(cfg, out);
      std::printf("wrote %s (%d check%s failed)\n", out.c_str(), failed, failed == 1 ? "" : "s");
      if (failed > 0) return 1;
    } else if (sub == cal) {
      const auto det = leeds::harness::calibrate_detector(cfg, calib_seed);
      std::printf("ell %.9g\ntau %.9g\ndelta %.9g\n", det.ell, det.tau, det.delta);
    }
  } catch (const std::invalid_argument &e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
