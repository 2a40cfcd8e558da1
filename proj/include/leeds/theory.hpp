#pragma once

// Empirical verification of the regret theory: task-averaged regret
// accounting, comparator construction, contraction/smoothness checks, the
// Hoeffding detection-error bound, and an end-to-end OGD-meta simulation
// on synthetic quadratic task families.

#include <functional>
#include <vector>

#include "leeds/learner.hpp"
#include "leeds/netcore.hpp"
#include "leeds/stream.hpp"

namespace leeds::theory {

using learner::RunRecord;
using netcore::NetConfig;
using netcore::ParamSet;
using stream::StreamConfig;
using stream::TaskSpec;

struct TheoryConfig {
  double M_clip = 0.0; // per-sample loss upper bound M
  double ell_m = 0.0;  // expected same-task loss bound (estimated when 0)
  double ell_p = 0.0;  // expected cross-task loss bound (estimated when 0)
  double c_support = 0.0; // support sizing constant in S = c log R (0 = auto)
  double rho_target = 0.5;
  double comparator_tol = 1e-6;
  double noise_sigma = 0.25; // loss observation noise in quadratic detection runs

  void validate() const;
};

// Family of quadratic tasks f_t(phi) = 1/2 (phi-c_t)' A_t (phi-c_t) with
// diagonal A_t spectrum in [mu, beta]; GD with step alpha in (0, 2/beta)
// is the contraction map.
struct QuadTaskFamily {
  int dim = 0;
  std::vector<std::vector<double>> centers; // the phi_t*
  double curvature_lo = 0.0;                // mu
  double curvature_hi = 0.0;                // beta
  double alpha = 0.0;
  std::vector<int> K_per_task;

  void validate() const;
};

struct RegretReport {
  double tar = 0.0;
  double sigma_star_sq = 0.0;
  std::vector<double> phi_star_mean;
  std::vector<double> per_task_regret;
  double bound_value = 0.0;
  double detection_error = 0.0; // fraction of wrong boundary decisions (detector runs only)
};

struct ComparatorResult {
  ParamSet params;
  double residual_loss = 0.0;
  double residual_grad_norm = 0.0;
  bool warning = false; // residual loss >= 0.1
};

// Trains a fresh net by full-batch GD on a large (n_shot*20 per class)
// sample of the task until the gradient norm drops below comparator_tol
// or 5000 steps elapse. Residuals are reported, never hidden.
ComparatorResult compute_comparator(const TaskSpec &task, const NetConfig &net,
                                    const TheoryConfig &cfg, int n_shot, Rng &rng);

// TAR over the ground-truth task segments of a RunRecord (which must have
// kept its batches), against the given per-segment comparators.
RegretReport task_averaged_regret(const RunRecord &run, const NetConfig &net,
                                  const std::vector<ComparatorResult> &comparators);

struct ContractionResult {
  double empirical_rho = 0.0;
  double closed_form_rho = 0.0; // max(|1-alpha*mu|, |1-alpha*beta|)
};

// Lipschitz ratio of the GD map on random diagonal quadratics with
// spectrum in [mu, beta] (endpoints always present).
ContractionResult contraction_ratio(double mu, double beta, double alpha, int trials, Rng &rng);

// exp(-S (ell_p - ell_m)^2 / (2 M^2))
double hoeffding_bound(long S, const TheoryConfig &cfg);

struct DetectionErrorReport {
  double rate = 0.0;
  double miss_rate = 0.0;        // missed boundaries / trials
  double false_alarm_rate = 0.0; // spurious boundaries / trials
  double ell_m = 0.0;
  double ell_p = 0.0;
  double tau_thm = 0.0; // (ell_m + ell_p) / 2
  bool regime_ok = true; // false when calibration finds ell_m >= ell_p
};

// Monte-Carlo error rate of the threshold switch detector at support size
// S_support, on the synthetic stream. Per-sample losses are clipped at
// M_clip before averaging; the threshold is (ell_m + ell_p)/2 with the
// constants estimated from a 500-episode calibration pass (unless set in cfg).
DetectionErrorReport empirical_detection_error(const StreamConfig &scfg, const NetConfig &net,
                                               const ParamSet &learner_init, double adapt_lr,
                                               int S_support, long trials, TheoryConfig cfg,
                                               Rng &rng);

using MetaLrSchedule = std::function<double(long t)>; // t is 1-based task index

// OGD step 2/(t+1) on the 1-strongly-convex loss 1/2 ||phi0 - phi*||^2.
MetaLrSchedule default_meta_schedule();

// Simulates the proof construction end-to-end on a quadratic family:
// per task, K_t contraction steps from the current meta point, then an
// OGD meta update toward the task center. With detector_on, boundaries
// are detected from noisy clipped losses instead of given.
RegretReport theory_run(const QuadTaskFamily &fam, const TheoryConfig &cfg,
                        const MetaLrSchedule &schedule, bool detector_on, Rng &rng);

// Helper for building families: T centers uniform on the sphere of radius
// `spread` around `base`, with per-task segment lengths ~ 1 + Geometric.
QuadTaskFamily make_quad_family(int dim, int n_tasks, double spread,
                                const std::vector<double> &base, double mu, double beta,
                                double alpha, double mean_segment_len, Rng &rng);

} // namespace leeds::theory
