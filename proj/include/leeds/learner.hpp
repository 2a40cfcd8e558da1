#pragma once

// MAML pre-training, the detection-driven online loop, and the comparison
// learners. Meta gradients are first-order throughout: the query-loss
// gradient is evaluated at the adapted parameters and applied to the
// previous meta parameters.

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "leeds/detect.hpp"
#include "leeds/netcore.hpp"
#include "leeds/stream.hpp"

namespace leeds::learner {

using detect::DetectorParams;
using netcore::NetConfig;
using netcore::ParamSet;
using stream::DomainSpec;
using stream::Episode;
using stream::StreamConfig;
using stream::TaskBatch;
using stream::TaskSpec;

enum class Mode { leeds, leeds_no_da, maml_reset, meta_ogd, cmaml_detect };

Mode mode_from_string(const std::string &s);
std::string to_string(Mode m);

struct Hyperparams {
  double alpha1 = 0.0; // adaptation step size
  double alpha2 = 0.0; // meta step size
  int inner_steps_pretrain = 1;
  int pretrain_tasks = 0; // total task draws during pre-training
  int pretrain_meta_batch = 1;
  double cmaml_gamma = 1.0; // successive-loss jump threshold for cmaml_detect

  void validate() const;
};

enum class Branch { switch_taken, no_switch_ind, no_switch_ood };

const char *to_string(Branch b);

struct EpisodeOutcome {
  long step = 0;
  double query_loss = 0.0;
  double query_accuracy = 0.0;
  double support_loss = 0.0;
  bool detected_switch = false;
  bool detected_ood = false;
  bool truth_switched = false;
  int truth_domain_id = 0;
  Branch branch = Branch::switch_taken;
};

struct LearnerState {
  ParamSet meta;   // theta
  ParamSet online; // phi
  DetectorParams det;
  Mode mode = Mode::leeds;
  double last_support_loss = std::numeric_limits<double>::quiet_NaN();
  long steps_taken = 0; // step 0 forces the switch branch
};

// One MAML pre-training run on the given domain: hp.pretrain_tasks task
// draws in meta-batches of hp.pretrain_meta_batch, inner adaptation of
// hp.inner_steps_pretrain SGD steps. Throws std::runtime_error (with the
// iteration index) if the meta loss diverges.
ParamSet pretrain_maml(const DomainSpec &domain, const NetConfig &net, const Hyperparams &hp,
                       int n_shot, int n_query, Rng &rng);

// One step of the detection-driven online loop (Algorithm branches):
//   switch:        phi_t = theta_adapt; theta always updated
//   no-switch:     phi continues from phi_{t-1}; theta updated only on OOD
LearnerState leeds_step(const LearnerState &state, const Episode &ep, const NetConfig &net,
                        const Hyperparams &hp, EpisodeOutcome &out);

// Dispatch on state.mode (leeds modes route to leeds_step).
LearnerState baseline_step(const LearnerState &state, const Episode &ep, const NetConfig &net,
                           const Hyperparams &hp, EpisodeOutcome &out);

// Ground-truth task segment, kept for post-hoc regret accounting.
struct TaskSegment {
  long start_step = 0;
  TaskSpec task;
  ParamSet phi0; // parameters adaptation started from at the segment's first episode
};

struct RunRecord {
  Mode mode = Mode::leeds;
  uint64_t stream_seed = 0;
  std::vector<EpisodeOutcome> outcomes;
  std::vector<TaskSegment> segments;
  std::vector<TaskBatch> batches; // populated only when keep_batches is set
  bool kept_batches = false;
};

struct RunOptions {
  bool keep_batches = false;
  // Invoked after every episode; used for incremental flushing to disk.
  std::function<void(const EpisodeOutcome &)> sink;
};

// Advances the stream and the learner jointly for n_steps episodes.
RunRecord run_stream(const LearnerState &initial, const StreamConfig &scfg, long n_steps,
                     const NetConfig &net, const Hyperparams &hp, Rng &stream_rng,
                     const RunOptions &opts = {});

} // namespace leeds::learner
