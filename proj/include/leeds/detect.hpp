#pragma once

// The two detection mechanisms: loss-threshold task-switch detection and
// energy-based distribution-shift detection, plus threshold calibration
// heuristics. All operations are pure.

#include <vector>

#include "leeds/netcore.hpp"

namespace leeds::detect {

using netcore::LabeledBatch;
using netcore::Matrix;
using netcore::NetConfig;
using netcore::ParamSet;

// The free-energy formula as implemented uses exp(-g_k/delta) ("paper");
// the usual energy-OOD literature uses exp(+g_k/delta) ("literature").
// Both are exposed; defaults use "paper".
enum class EnergySign { paper, literature };

struct DetectorParams {
  double ell = 0.0;   // switch-loss threshold
  double tau = 0.0;   // negative-energy threshold
  double delta = 1.0; // temperature
  EnergySign energy_sign = EnergySign::paper;
};

// Helmholtz free energy of one logit vector:
//   paper:      -delta * log sum_k exp(-g_k / delta)
//   literature: -delta * log sum_k exp(+g_k / delta)
// computed via log-sum-exp with max subtraction.
double energy(const std::vector<double> &logits, double delta,
              EnergySign sign = EnergySign::paper);

// Mean of -energy over the rows of `inputs` under the given model.
double mean_neg_energy(const Matrix &inputs, const ParamSet &params, const NetConfig &cfg,
                       double delta, EnergySign sign = EnergySign::paper);

// Binary covariate-shift classifier: true (shift, C=1) iff the mean
// negative energy over the support is <= tau. Equality flags a shift.
bool ood_classify(const Matrix &support_inputs, const ParamSet &params, const NetConfig &cfg,
                  const DetectorParams &det);

struct SwitchResult {
  bool switched = false;
  double loss = 0.0;
};

// Task-switch test: loss of the previous online model on the new support;
// switched iff loss > ell (equality means no switch). Callers must force
// the switch branch at step 0 themselves.
SwitchResult switch_detect(const ParamSet &prev_online, const NetConfig &cfg,
                           const LabeledBatch &support, double ell);

// Largest threshold such that at least ceil(coverage * n) of the scores are
// strictly above it; ties resolved by stepping just below the boundary
// score. Deterministic.
double tau_from_scores(std::vector<double> scores, double coverage);

// Calibrates tau so that a fraction >= coverage of the pretrain supports
// score strictly above it (classified IND). Requires >= 20 supports.
double calibrate_tau(const std::vector<Matrix> &pretrain_supports, const ParamSet &params,
                     const NetConfig &cfg, double delta, double coverage = 0.95,
                     EnergySign sign = EnergySign::paper);

// Loss of a random model on balanced n_ways-way classification: ln(n_ways).
double default_ell(int n_ways);

} // namespace leeds::detect
