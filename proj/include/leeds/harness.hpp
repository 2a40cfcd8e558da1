#pragma once

// Experiment orchestration: JSON config parsing with strict validation,
// multi-seed execution with a pretrain cache, metric aggregation, threshold
// sweeps, and atomic CSV/JSON outputs.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "leeds/learner.hpp"
#include "leeds/theory.hpp"

#include "json.hpp"

namespace leeds::harness {

using json = nlohmann::ordered_json;

using learner::Hyperparams;
using learner::Mode;
using learner::RunRecord;
using netcore::NetConfig;
using stream::StreamConfig;

struct ExperimentConfig {
  NetConfig net;
  StreamConfig stream;
  Hyperparams hp;
  detect::DetectorParams det;
  bool det_auto = true; // "det": "auto" calibrates ell/tau from the pretrain domain
  std::vector<Mode> modes;
  long n_steps = 0;
  int n_seeds = 1;
  std::string output_dir;
  std::optional<theory::TheoryConfig> theory;

  void validate() const; // throws std::invalid_argument with field-level message
};

// Strict parse: unknown fields are rejected. Throws std::invalid_argument.
ExperimentConfig parse_config(const json &j);
ExperimentConfig load_config(const std::string &path);
json to_json(const ExperimentConfig &cfg);

// Applies "--dotted.path value" overrides to the raw JSON document before
// parsing; values are parsed as JSON when possible, else taken as strings.
void apply_override(json &doc, const std::string &dotted_path,
                    const std::string &value);

struct PrecisionRecall {
  double precision = 0.0; // NaN when the detector never fires
  double recall = 0.0;    // NaN when there are no true switches
};

// On detected_switch vs truth_switched, excluding step 0.
PrecisionRecall precision_recall(const RunRecord &record);

struct ModeMetrics {
  std::string mode;
  int seed_count = 0;
  double overall_acc_mean = 0.0, overall_acc_std = 0.0;
  double pretrain_acc_mean = 0.0;
  std::map<int, double> ood_acc_mean; // keyed by domain_id
  double precision_mean = 0.0;
  double recall_mean = 0.0;
  // per-seed values, for aggregation checks
  std::vector<double> overall_acc_per_seed;
};

struct ExperimentResult {
  std::vector<ModeMetrics> per_mode;
  std::vector<std::string> episode_files;
};

// Threshold overrides applied after auto-calibration (used by sweeps).
struct RunOverrides {
  std::optional<double> ell;
  std::optional<double> tau;
};

// Runs modes x seeds (pretrain cached per seed across modes, identical
// stream seeds across modes), writes per-run episode CSVs plus summary.csv
// and summary.json under cfg.output_dir.
ExperimentResult run_experiment(const ExperimentConfig &cfg, const RunOverrides &ov = {});

// One summary row per value of param_name in {ell, tau, delta, p_stay};
// invalid values produce an error row and the sweep continues.
void sweep(const ExperimentConfig &cfg, const std::string &param_name,
           const std::vector<double> &values, const std::string &out_path);

// Calibrated detector for one seed (pretrains or loads the cached model).
detect::DetectorParams calibrate_detector(const ExperimentConfig &cfg, int seed_index);

// Theory verification pass; writes a report JSON (per-check name, measured
// value, bound/target, pass flag) and returns the number of failed checks.
int run_theory_checks(const ExperimentConfig &cfg, const std::string &out_path);

// Atomic file write (temp + rename).
void write_file_atomic(const std::string &path, const std::string &content);

} // namespace leeds::harness
