#include "leeds/detect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace leeds::detect {

double energy(const std::vector<double> &logits, double delta, EnergySign sign) {
  if (logits.empty()) throw std::invalid_argument("energy: empty logits");
  if (!(delta > 0.0)) throw std::invalid_argument("energy: delta must be > 0");
  const double s = (sign == EnergySign::paper) ? -1.0 : 1.0;
  double mx = s * logits[0] / delta;
  for (double g : logits) mx = std::max(mx, s * g / delta);
  double sum = 0.0;
  for (double g : logits) sum += std::exp(s * g / delta - mx);
  return -delta * (mx + std::log(sum));
}

double mean_neg_energy(const Matrix &inputs, const ParamSet &params, const NetConfig &cfg,
                       double delta, EnergySign sign) {
  if (inputs.rows == 0) throw std::invalid_argument("mean_neg_energy: empty inputs");
  const Matrix logits = netcore::forward(params, cfg, inputs);
  double total = 0.0;
  std::vector<double> row(logits.cols);
  for (int r = 0; r < logits.rows; ++r) {
    for (int k = 0; k < logits.cols; ++k) row[k] = logits.at(r, k);
    total += -energy(row, delta, sign);
  }
  return total / logits.rows;
}

bool ood_classify(const Matrix &support_inputs, const ParamSet &params, const NetConfig &cfg,
                  const DetectorParams &det) {
  const double score = mean_neg_energy(support_inputs, params, cfg, det.delta, det.energy_sign);
  return score <= det.tau;
}

SwitchResult switch_detect(const ParamSet &prev_online, const NetConfig &cfg,
                           const LabeledBatch &support, double ell) {
  SwitchResult r;
  r.loss = netcore::ce_loss(netcore::forward(prev_online, cfg, support.inputs), support.labels);
  r.switched = r.loss > ell;
  return r;
}

double tau_from_scores(std::vector<double> scores, double coverage) {
  if (scores.empty()) throw std::invalid_argument("tau_from_scores: empty scores");
  if (!(coverage > 0.0 && coverage < 1.0))
    throw std::invalid_argument("tau_from_scores: coverage must be in (0,1)");
  std::sort(scores.begin(), scores.end());
  const std::size_t n = scores.size();
  const std::size_t k = static_cast<std::size_t>(std::ceil(coverage * n)); // scores required above tau
  const auto tie_tol = [](double ref) { return 1e-9 * std::max(1.0, std::abs(ref)); };
  if (k >= n) return scores.front() - tie_tol(scores.front());
  const double boundary = scores[n - k]; // smallest score that must stay above tau
  const double below = scores[n - k - 1];
  if (below < boundary) return below;
  return boundary - tie_tol(boundary);
}

double calibrate_tau(const std::vector<Matrix> &pretrain_supports, const ParamSet &params,
                     const NetConfig &cfg, double delta, double coverage, EnergySign sign) {
  if (pretrain_supports.empty()) throw std::invalid_argument("calibrate_tau: empty support list");
  if (pretrain_supports.size() < 20)
    throw std::invalid_argument("calibrate_tau: needs at least 20 pretrain supports");
  std::vector<double> scores;
  scores.reserve(pretrain_supports.size());
  for (const auto &s : pretrain_supports)
    scores.push_back(mean_neg_energy(s, params, cfg, delta, sign));
  return tau_from_scores(std::move(scores), coverage);
}

double default_ell(int n_ways) {
  if (n_ways < 2) throw std::invalid_argument("default_ell: n_ways must be >= 2");
  return std::log(static_cast<double>(n_ways));
}

} // namespace leeds::detect
