#include "leeds/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace leeds::theory {

void TheoryConfig::validate() const {
  if (!(M_clip > 0.0)) throw std::invalid_argument("theory.M_clip must be > 0");
  if (ell_m < 0.0 || ell_m > ell_p || ell_p > M_clip)
    throw std::invalid_argument("theory: need 0 <= ell_m <= ell_p <= M_clip");
  if (!(rho_target > 0.0 && rho_target < 1.0))
    throw std::invalid_argument("theory.rho_target must be in (0,1)");
  if (!(comparator_tol > 0.0)) throw std::invalid_argument("theory.comparator_tol must be > 0");
  if (noise_sigma < 0.0) throw std::invalid_argument("theory.noise_sigma must be >= 0");
}

void QuadTaskFamily::validate() const {
  if (dim < 1) throw std::invalid_argument("quad family: dim must be >= 1");
  if (centers.empty()) throw std::invalid_argument("quad family: centers must be nonempty");
  for (const auto &c : centers)
    if (static_cast<int>(c.size()) != dim)
      throw std::invalid_argument("quad family: center dimension mismatch");
  if (!(curvature_lo > 0.0 && curvature_lo <= curvature_hi))
    throw std::invalid_argument("quad family: need 0 < mu <= beta");
  if (!(alpha > 0.0 && alpha < 2.0 / curvature_hi))
    throw std::invalid_argument("quad family: alpha must lie in (0, 2/beta)");
  if (K_per_task.size() != centers.size())
    throw std::invalid_argument("quad family: K_per_task size must match centers");
  for (int k : K_per_task)
    if (k < 1) throw std::invalid_argument("quad family: K_per_task entries must be >= 1");
}

ComparatorResult compute_comparator(const TaskSpec &task, const NetConfig &net,
                                    const TheoryConfig &cfg, int n_shot, Rng &rng) {
  const int per_class = n_shot * 20;
  netcore::LabeledBatch big;
  {
    const auto tb = stream::sample_batch(task, per_class, 1, task.noise_sigma, rng);
    big = tb.support;
  }
  ComparatorResult res;
  res.params = netcore::init_params(net, rng);
  double lr = 0.25;
  double loss = std::numeric_limits<double>::infinity();
  double gnorm = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 5000; ++it) {
    const auto lg = netcore::loss_and_grad(res.params, net, big);
    gnorm = 0.0;
    for (double g : lg.grad) gnorm += g * g;
    gnorm = std::sqrt(gnorm);
    loss = lg.loss;
    if (gnorm < cfg.comparator_tol) break;
    ParamSet cand = netcore::sgd_step(res.params, lg.grad, lr);
    const double cand_loss =
        netcore::ce_loss(netcore::forward(cand, net, big.inputs), big.labels);
    if (cand_loss > lg.loss) {
      lr *= 0.5; // overshoot, retry smaller
      if (lr < 1e-8) break;
      continue;
    }
    res.params = std::move(cand);
    lr = std::min(lr * 1.05, 1.0);
  }
  res.residual_loss = loss;
  res.residual_grad_norm = gnorm;
  res.warning = !(loss < 0.1);
  return res;
}

RegretReport task_averaged_regret(const RunRecord &run, const NetConfig &net,
                                  const std::vector<ComparatorResult> &comparators) {
  if (!run.kept_batches)
    throw std::invalid_argument("task_averaged_regret: run did not keep batches");
  if (comparators.size() != run.segments.size())
    throw std::invalid_argument("task_averaged_regret: comparator count does not match segments");
  const std::size_t T = run.segments.size();
  RegretReport rep;
  rep.per_task_regret.resize(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const long start = run.segments[t].start_step;
    const long end = (t + 1 < T) ? run.segments[t + 1].start_step
                                 : static_cast<long>(run.outcomes.size());
    for (long k = start; k < end; ++k) {
      const auto &q = run.batches[static_cast<std::size_t>(k)].query;
      const double comp_loss =
          netcore::ce_loss(netcore::forward(comparators[t].params, net, q.inputs), q.labels);
      rep.per_task_regret[t] += run.outcomes[static_cast<std::size_t>(k)].query_loss - comp_loss;
    }
  }
  double tar = 0.0;
  for (double r : rep.per_task_regret) tar += r;
  rep.tar = tar / static_cast<double>(T);

  const std::size_t dim = comparators.front().params.values.size();
  rep.phi_star_mean.assign(dim, 0.0);
  for (const auto &c : comparators)
    for (std::size_t i = 0; i < dim; ++i) rep.phi_star_mean[i] += c.params.values[i] / T;
  double var = 0.0;
  for (const auto &c : comparators) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = c.params.values[i] - rep.phi_star_mean[i];
      d2 += d * d;
    }
    var += d2;
  }
  rep.sigma_star_sq = var / static_cast<double>(T);
  rep.bound_value = std::numeric_limits<double>::quiet_NaN(); // no usable L for neural losses
  return rep;
}

ContractionResult contraction_ratio(double mu, double beta, double alpha, int trials, Rng &rng) {
  if (!(mu > 0.0 && mu <= beta)) throw std::invalid_argument("contraction_ratio: need 0 < mu <= beta");
  ContractionResult res;
  res.closed_form_rho = std::max(std::abs(1.0 - alpha * mu), std::abs(1.0 - alpha * beta));
  const int dim = 8;
  for (int tr = 0; tr < trials; ++tr) {
    std::vector<double> spec(dim);
    spec[0] = mu;
    spec[1] = beta;
    for (int i = 2; i < dim; ++i) spec[i] = rng.uniform(mu, beta);
    std::vector<double> center = rng.normal_vec(dim);
    auto gd_map = [&](const std::vector<double> &phi) {
      std::vector<double> out(dim);
      for (int i = 0; i < dim; ++i) out[i] = phi[i] - alpha * spec[i] * (phi[i] - center[i]);
      return out;
    };
    std::vector<double> base = rng.normal_vec(dim);
    const auto u_base = gd_map(base);
    // probe along each coordinate axis to expose the full spectrum
    for (int i = 0; i < dim; ++i) {
      std::vector<double> probe = base;
      probe[i] += 1.0;
      const auto u_probe = gd_map(probe);
      double num = 0.0;
      for (int j = 0; j < dim; ++j) {
        const double d = u_probe[j] - u_base[j];
        num += d * d;
      }
      res.empirical_rho = std::max(res.empirical_rho, std::sqrt(num));
    }
  }
  return res;
}

double hoeffding_bound(long S, const TheoryConfig &cfg) {
  if (S < 1) throw std::invalid_argument("hoeffding_bound: S must be >= 1");
  const double gap = cfg.ell_p - cfg.ell_m;
  return std::exp(-static_cast<double>(S) * gap * gap / (2.0 * cfg.M_clip * cfg.M_clip));
}

namespace {

double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double idx = p * (static_cast<double>(v.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(idx);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = idx - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

// Per-sample cross-entropy losses, clipped to [0, M].
std::vector<double> clipped_sample_losses(const ParamSet &params, const NetConfig &net,
                                          const netcore::Matrix &inputs,
                                          const std::vector<int> &labels, double M) {
  const auto logits = netcore::forward(params, net, inputs);
  std::vector<double> out(static_cast<std::size_t>(logits.rows));
  for (int r = 0; r < logits.rows; ++r) {
    double mx = logits.at(r, 0);
    for (int k = 1; k < logits.cols; ++k) mx = std::max(mx, logits.at(r, k));
    double sum = 0.0;
    for (int k = 0; k < logits.cols; ++k) sum += std::exp(logits.at(r, k) - mx);
    const double loss = (mx + std::log(sum)) - logits.at(r, labels[r]);
    out[static_cast<std::size_t>(r)] = std::clamp(loss, 0.0, M);
  }
  return out;
}

// i.i.d. support of size S from a task: labels uniform, inputs noisy prototypes.
void iid_support(const TaskSpec &task, int S, Rng &rng, netcore::Matrix &inputs,
                 std::vector<int> &labels) {
  const int dim = task.prototypes.cols;
  inputs = netcore::Matrix(S, dim);
  labels.resize(static_cast<std::size_t>(S));
  for (int r = 0; r < S; ++r) {
    const int c = static_cast<int>(rng.uniform_index(task.prototypes.rows));
    labels[static_cast<std::size_t>(r)] = c;
    for (int j = 0; j < dim; ++j)
      inputs.at(r, j) = task.prototypes.at(c, j) + task.noise_sigma * rng.normal();
  }
}

ParamSet adapt_on_task(const TaskSpec &task, const NetConfig &net, const ParamSet &init,
                       double lr, int steps, int n_shot, Rng &rng) {
  const auto tb = stream::sample_batch(task, n_shot, 1, task.noise_sigma, rng);
  ParamSet phi = init;
  for (int s = 0; s < steps; ++s) {
    const auto lg = netcore::loss_and_grad(phi, net, tb.support);
    phi = netcore::sgd_step(phi, lg.grad, lr);
  }
  return phi;
}

} // namespace

DetectionErrorReport empirical_detection_error(const StreamConfig &scfg, const NetConfig &net,
                                               const ParamSet &learner_init, double adapt_lr,
                                               int S_support, long trials, TheoryConfig cfg,
                                               Rng &rng) {
  if (trials < 1000)
    throw std::invalid_argument("empirical_detection_error: trials must be >= 1000");
  cfg.validate();
  const auto &pre = scfg.pretrain_domain();
  const int adapt_steps = 10;

  // pool of adapted task models standing in for post-adaptation phi
  const int n_pool = 64;
  std::vector<TaskSpec> tasks(n_pool);
  std::vector<ParamSet> models(n_pool);
  for (int i = 0; i < n_pool; ++i) {
    tasks[i] = stream::sample_task(pre, rng);
    models[i] = adapt_on_task(tasks[i], net, learner_init, adapt_lr, adapt_steps, scfg.n_shot, rng);
  }

  netcore::Matrix inputs;
  std::vector<int> labels;
  auto mean_clipped = [&](int model_idx, int task_idx) {
    iid_support(tasks[task_idx], S_support, rng, inputs, labels);
    const auto losses =
        clipped_sample_losses(models[model_idx], net, inputs, labels, cfg.M_clip);
    double s = 0.0;
    for (double l : losses) s += l;
    return s / losses.size();
  };

  DetectionErrorReport rep;
  if (cfg.ell_m == 0.0 && cfg.ell_p == 0.0) {
    // 500-episode calibration pass
    std::vector<double> same, cross;
    int cur = 0;
    for (int e = 0; e < 500; ++e) {
      const bool sw = rng.uniform01() >= scfg.p_stay;
      int nxt = cur;
      if (sw) {
        do {
          nxt = static_cast<int>(rng.uniform_index(n_pool));
        } while (nxt == cur);
      }
      const double loss = mean_clipped(cur, nxt);
      (sw ? cross : same).push_back(loss);
      cur = nxt;
    }
    if (same.size() < 10 || cross.size() < 10)
      throw std::runtime_error("empirical_detection_error: calibration pass too unbalanced");
    rep.ell_m = percentile(same, 0.95);
    rep.ell_p = percentile(cross, 0.05);
  } else {
    rep.ell_m = cfg.ell_m;
    rep.ell_p = cfg.ell_p;
  }
  rep.regime_ok = rep.ell_m < rep.ell_p;
  rep.tau_thm = 0.5 * (rep.ell_m + rep.ell_p);

  long misses = 0, false_alarms = 0;
  int cur = 0;
  for (long t = 0; t < trials; ++t) {
    const bool sw = rng.uniform01() >= scfg.p_stay;
    int nxt = cur;
    if (sw) {
      do {
        nxt = static_cast<int>(rng.uniform_index(n_pool));
      } while (nxt == cur);
    }
    const bool detected = mean_clipped(cur, nxt) > rep.tau_thm;
    if (sw && !detected) ++misses;
    if (!sw && detected) ++false_alarms;
    cur = nxt;
  }
  rep.miss_rate = static_cast<double>(misses) / static_cast<double>(trials);
  rep.false_alarm_rate = static_cast<double>(false_alarms) / static_cast<double>(trials);
  rep.rate = rep.miss_rate + rep.false_alarm_rate;
  return rep;
}

MetaLrSchedule default_meta_schedule() {
  return [](long t) { return 2.0 / static_cast<double>(t + 1); };
}

QuadTaskFamily make_quad_family(int dim, int n_tasks, double spread,
                                const std::vector<double> &base, double mu, double beta,
                                double alpha, double mean_segment_len, Rng &rng) {
  QuadTaskFamily fam;
  fam.dim = dim;
  fam.curvature_lo = mu;
  fam.curvature_hi = beta;
  fam.alpha = alpha;
  for (int t = 0; t < n_tasks; ++t) {
    if (spread > 0.0) {
      fam.centers.push_back(rng.on_sphere(base, spread));
    } else {
      fam.centers.push_back(base);
    }
    int K = 1;
    const double p_continue = 1.0 - 1.0 / std::max(1.0, mean_segment_len);
    while (rng.uniform01() < p_continue && K < 200) ++K;
    fam.K_per_task.push_back(K);
  }
  fam.validate();
  return fam;
}

RegretReport theory_run(const QuadTaskFamily &fam, const TheoryConfig &cfg,
                        const MetaLrSchedule &schedule, bool detector_on, Rng &rng) {
  fam.validate();
  cfg.validate();
  const std::size_t T = fam.centers.size();
  const int dim = fam.dim;

  long R = 0;
  for (int k : fam.K_per_task) R += k;

  // per-task diagonal curvatures, spectrum endpoints always present
  std::vector<std::vector<double>> curv(T, std::vector<double>(dim));
  for (auto &a : curv) {
    a[0] = fam.curvature_lo;
    a[dim - 1] = fam.curvature_hi;
    for (int i = 1; i < dim - 1; ++i) a[i] = rng.uniform(fam.curvature_lo, fam.curvature_hi);
  }

  auto f_val = [&](std::size_t t, const std::vector<double> &phi) {
    double v = 0.0;
    for (int i = 0; i < dim; ++i) {
      const double d = phi[i] - fam.centers[t][i];
      v += 0.5 * curv[t][i] * d * d;
    }
    return v;
  };
  auto gd_step = [&](std::size_t t, std::vector<double> &phi) {
    for (int i = 0; i < dim; ++i)
      phi[i] -= fam.alpha * curv[t][i] * (phi[i] - fam.centers[t][i]);
  };

  // detection setup
  double tau_thm = 0.0;
  int S = 1;
  double ell_m = cfg.ell_m, ell_p = cfg.ell_p;
  if (detector_on) {
    if (ell_m == 0.0 && ell_p == 0.0) {
      // calibration: post-contraction same-task vs cross-task observed losses
      std::vector<double> same, cross;
      for (int rep = 0; rep < 200; ++rep) {
        const std::size_t a = rng.uniform_index(T);
        std::size_t b = rng.uniform_index(T);
        if (T > 1 && b == a) b = (a + 1) % T;
        std::vector<double> phi(dim, 0.0);
        const int K_typ = std::max(1, fam.K_per_task[a]);
        for (int k = 0; k < K_typ; ++k) gd_step(a, phi);
        same.push_back(std::clamp(f_val(a, phi) + cfg.noise_sigma * rng.normal(), 0.0, cfg.M_clip));
        cross.push_back(std::clamp(f_val(b, phi) + cfg.noise_sigma * rng.normal(), 0.0, cfg.M_clip));
      }
      ell_m = percentile(same, 0.95);
      ell_p = percentile(cross, 0.05);
    }
    tau_thm = 0.5 * (ell_m + ell_p);
    const double gap = std::max(ell_p - ell_m, 1e-6);
    const double c = cfg.c_support > 0.0
                         ? cfg.c_support
                         : std::ceil(4.0 * cfg.M_clip * cfg.M_clip / (gap * gap)) + 1.0;
    // When the calibrated loss gap is tiny, c = 4M^2/gap^2 explodes and the
    // implied support size is astronomical; cap it so runs always terminate.
    const long long s_raw = std::llround(c * std::log(std::max<long>(R, 2)));
    S = static_cast<int>(std::clamp<long long>(s_raw, 1, 10000));
  }

  auto observed_mean_loss = [&](std::size_t t, const std::vector<double> &phi) {
    double s = 0.0;
    for (int i = 0; i < S; ++i)
      s += std::clamp(f_val(t, phi) + cfg.noise_sigma * rng.normal(), 0.0, cfg.M_clip);
    return s / S;
  };

  RegretReport rep;
  rep.per_task_regret.resize(T, 0.0);

  std::vector<double> theta(dim, 0.0);
  std::vector<double> phi(dim, 0.0);
  long decisions = 0, errors = 0;
  bool first_step = true;
  for (std::size_t t = 0; t < T; ++t) {
    for (int k = 0; k < fam.K_per_task[t]; ++k) {
      const bool truth_switch = (k == 0);
      bool detected;
      if (first_step) {
        detected = true;
      } else if (detector_on) {
        detected = observed_mean_loss(t, phi) > tau_thm;
        ++decisions;
        if (detected != truth_switch) ++errors;
      } else {
        detected = truth_switch;
      }
      if (detected) phi = theta;
      first_step = false;
      gd_step(t, phi);
      rep.per_task_regret[t] += f_val(t, phi); // f at the comparator is 0
    }
    // OGD meta update on 1/2 ||theta - c_t||^2
    const double lr = schedule(static_cast<long>(t) + 1);
    for (int i = 0; i < dim; ++i) theta[i] -= lr * (theta[i] - fam.centers[t][i]);
  }

  double tar = 0.0;
  for (double r : rep.per_task_regret) tar += r;
  rep.tar = tar / static_cast<double>(T);
  rep.detection_error = decisions > 0 ? static_cast<double>(errors) / decisions : 0.0;

  rep.phi_star_mean.assign(dim, 0.0);
  for (const auto &c : fam.centers)
    for (int i = 0; i < dim; ++i) rep.phi_star_mean[i] += c[i] / static_cast<double>(T);
  double var = 0.0;
  for (const auto &c : fam.centers) {
    double d2 = 0.0;
    for (int i = 0; i < dim; ++i) {
      const double d = c[i] - rep.phi_star_mean[i];
      d2 += d * d;
    }
    var += d2;
  }
  rep.sigma_star_sq = var / static_cast<double>(T);

  const double rho = std::max(std::abs(1.0 - fam.alpha * fam.curvature_lo),
                              std::abs(1.0 - fam.alpha * fam.curvature_hi));
  const double denom = std::max(1.0 - rho * rho, 1e-12);
  rep.bound_value = fam.curvature_hi / (2.0 * denom) *
                    (rep.sigma_star_sq + std::log(static_cast<double>(T) + 1.0) / T);
  return rep;
}

} // namespace leeds::theory
