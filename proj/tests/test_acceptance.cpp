// Acceptance gate: ten end-to-end checks, one pass/fail line each.
// Each check prints its measured values so a failure is diagnosable from
// the log alone. The binary exits with the number of failed checks.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "leeds/harness.hpp"
#include "leeds/theory.hpp"

using namespace leeds;
namespace fs = std::filesystem;

#ifndef ACC_CONFIG_PATH
#define ACC_CONFIG_PATH "configs/default.json"
#endif

namespace {

struct Check {
  std::string name;
  std::function<bool(std::string &)> fn; // fills a detail string
};

std::string slurp(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string &leaf) {
  const fs::path p = fs::temp_directory_path() / "leeds_acceptance" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

harness::ExperimentConfig default_config() {
  return harness::load_config(ACC_CONFIG_PATH);
}

std::string fmt(const char *f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------- check 1
bool check_gradient_oracle(std::string &detail) {
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    netcore::NetConfig net;
    net.input_dim = 2 + static_cast<int>(rng.uniform_index(5));
    const int n_hidden = static_cast<int>(rng.uniform_index(3));
    for (int h = 0; h < n_hidden; ++h)
      net.hidden_dims.push_back(3 + static_cast<int>(rng.uniform_index(6)));
    net.n_classes = 2 + static_cast<int>(rng.uniform_index(4));
    net.activation = (i % 2 == 0) ? netcore::Activation::relu : netcore::Activation::tanh;

    auto params = netcore::init_params(net, rng);
    for (auto &v : params.values) v += 0.3 * rng.normal(); // move off the Glorot manifold

    netcore::LabeledBatch batch;
    const int rows = 3 + static_cast<int>(rng.uniform_index(10));
    batch.inputs = netcore::Matrix(rows, net.input_dim);
    for (auto &x : batch.inputs.data) x = rng.normal();
    for (int r = 0; r < rows; ++r)
      batch.labels.push_back(static_cast<int>(rng.uniform_index(net.n_classes)));

    const auto lg = netcore::loss_and_grad(params, net, batch);
    const auto fd = netcore::finite_diff_grad(params, net, batch, 1e-5);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < fd.size(); ++k) {
      num += (lg.grad[k] - fd[k]) * (lg.grad[k] - fd[k]);
      den += fd[k] * fd[k];
    }
    worst = std::max(worst, std::sqrt(num / std::max(den, 1e-300)));
  }
  detail = fmt("worst relative L2 error %.3e (limit 1e-4)", worst);
  return worst < 1e-4;
}

// ---------------------------------------------------------------- check 2
bool check_detector_micro_facts(std::string &detail) {
  const double e0 = detect::energy({0.0, 0.0}, 1.0);
  const bool a = std::abs(e0 - (-std::log(2.0))) <= 1e-12;

  Rng rng(102);
  double worst_shift = 0.0;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> g(2 + rng.uniform_index(8));
    for (auto &x : g) x = 10.0 * rng.normal();
    const double c = 10.0 * rng.normal();
    auto shifted = g;
    for (auto &x : shifted) x += c;
    const double delta = std::exp(rng.uniform(-1.5, 1.5));
    worst_shift = std::max(worst_shift, std::abs(detect::energy(shifted, delta) -
                                                 (detect::energy(g, delta) + c)));
  }
  const bool b = worst_shift <= 1e-10;

  const double ell10 = detect::default_ell(10);
  const bool c = std::abs(ell10 - 2.302585) <= 1e-6;

  detail = fmt("energy([0,0])=%.15f, worst translation defect %.2e, default_ell(10)=%.7f", e0,
               worst_shift, ell10);
  return a && b && c;
}

// ---------------------------------------------------------------- check 3
bool check_switch_detection(std::string &detail) {
  auto cfg = default_config();
  // Restrict the stream to its well-separated domains: the low-contrast
  // near domain (small radius, high noise) is deliberately hard and is
  // exercised by check 8 instead.
  cfg.stream.domains.resize(2);
  cfg.modes = {learner::Mode::leeds};
  cfg.output_dir = scratch_dir("c3").string();
  const auto res = harness::run_experiment(cfg);
  const auto &m = res.per_mode.at(0);
  detail = fmt("precision %.4f, recall %.4f over %d seeds (limit 0.95 each)", m.precision_mean,
               m.recall_mean, m.seed_count);
  return m.precision_mean >= 0.95 && m.recall_mean >= 0.95;
}

// ---------------------------------------------------------------- check 4
bool check_hoeffding_dominance(std::string &detail) {
  stream::StreamConfig scfg;
  scfg.p_stay = 0.9;
  scfg.eta_ind = 0.5;
  scfg.n_shot = 5;
  scfg.n_query = 5;
  scfg.seed = 57;
  stream::DomainSpec pre;
  pre.domain_id = 0;
  pre.prototype_center.assign(8, 0.0);
  pre.prototype_radius = 3.0;
  pre.sample_noise_sigma = 1.0; // moderate separation: errors actually occur
  pre.n_ways = 8;
  pre.is_pretrain = true;
  scfg.domains.push_back(pre);
  auto ood = pre;
  ood.domain_id = 1;
  ood.is_pretrain = false;
  scfg.domains.push_back(ood);

  netcore::NetConfig net;
  net.input_dim = 8;
  net.hidden_dims = {16};
  net.n_classes = 8;
  Rng rng(58);
  const auto theta = netcore::init_params(net, rng);
  theory::TheoryConfig cfg;
  cfg.M_clip = 2.0 * std::log(8.0);
  cfg.noise_sigma = 0.25;

  const long trials = 10000;
  bool ok = true;
  std::string parts;
  for (int S : {4, 8, 16, 32}) {
    const auto r = theory::empirical_detection_error(scfg, net, theta, 0.5, S, trials, cfg, rng);
    theory::TheoryConfig b = cfg;
    b.ell_m = r.ell_m;
    b.ell_p = r.ell_p;
    const double bound = theory::hoeffding_bound(S, b);
    const double p = std::max(r.rate, 1.0 / trials);
    const double slack = 3.0 * std::sqrt(p * (1.0 - p) / trials);
    ok = ok && r.rate <= bound + slack;
    parts += fmt(" S=%d:%.4f<=%.4f", S, r.rate, bound + slack);
  }
  detail = "empirical error vs bound+3sigma:" + parts;
  return ok;
}

// ---------------------------------------------------------------- check 5
bool check_contraction(std::string &detail) {
  Rng rng(52);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double mu = rng.uniform(0.2, 1.0);
    const double beta = mu + rng.uniform(0.0, 2.0);
    const double alpha = rng.uniform(0.05, 1.95) / beta;
    const auto r = theory::contraction_ratio(mu, beta, alpha, 4, rng);
    worst = std::max(worst, std::abs(r.empirical_rho - r.closed_form_rho));
  }

  // chained decay on random diagonal quadratics
  double worst_excess = 0.0;
  for (int i = 0; i < 20; ++i) {
    const int dim = 3 + static_cast<int>(rng.uniform_index(5));
    const double mu = rng.uniform(0.2, 1.0);
    const double beta = mu + rng.uniform(0.1, 2.0);
    const double alpha = rng.uniform(0.05, 1.95) / beta;
    const double rho = std::max(std::abs(1.0 - alpha * mu), std::abs(1.0 - alpha * beta));
    std::vector<double> a(dim), c(dim), phi(dim);
    for (int d = 0; d < dim; ++d) {
      a[d] = rng.uniform(mu, beta);
      c[d] = rng.normal();
      phi[d] = c[d] + 2.0 * rng.normal();
    }
    a[0] = mu;
    a[dim - 1] = beta;
    double d0 = 0.0;
    for (int d = 0; d < dim; ++d) d0 += (phi[d] - c[d]) * (phi[d] - c[d]);
    d0 = std::sqrt(d0);
    const int K = 1 + static_cast<int>(rng.uniform_index(30));
    for (int k = 0; k < K; ++k)
      for (int d = 0; d < dim; ++d) phi[d] -= alpha * a[d] * (phi[d] - c[d]);
    double dk = 0.0;
    for (int d = 0; d < dim; ++d) dk += (phi[d] - c[d]) * (phi[d] - c[d]);
    dk = std::sqrt(dk);
    const double limit = std::pow(rho, K) * d0 * (1.0 + 1e-8);
    worst_excess = std::max(worst_excess, dk - limit);
  }
  detail = fmt("worst |rho_emp - rho_closed| %.2e (limit 1e-8), worst chained-decay excess %.2e",
               worst, worst_excess);
  return worst < 1e-8 && worst_excess <= 0.0;
}

// ---------------------------------------------------------------- check 6
bool check_tar_behavior(std::string &detail) {
  theory::TheoryConfig cfg;
  cfg.M_clip = 10.0;
  cfg.noise_sigma = 0.25;
  const std::vector<double> base(6, 1.5);
  const int seeds = 20;
  auto mean_rep = [&](int T, double spread, bool det) {
    double tar = 0.0, derr = 0.0;
    for (int s = 0; s < seeds; ++s) {
      Rng rng(300 + static_cast<uint64_t>(s));
      const auto fam = theory::make_quad_family(6, T, spread, base, 1.0, 2.0, 0.5, 10.0, rng);
      const auto r = theory::theory_run(fam, cfg, theory::default_meta_schedule(), det, rng);
      tar += r.tar / seeds;
      derr += r.detection_error / seeds;
    }
    return std::pair<double, double>{tar, derr};
  };

  const double t20 = mean_rep(20, 0.0, false).first;
  const double t200z = mean_rep(200, 0.0, false).first;
  const bool a = t200z < 0.5 * t20;

  const double t200 = mean_rep(200, 1.0, false).first;
  const double t400 = mean_rep(400, 1.0, false).first;
  const bool b = std::abs(t400 - t200) < 0.1 * t200;

  bool c = true;
  double prev_tar = -1.0, prev_err = 2.0;
  std::string grid;
  for (double sp : {0.5, 1.0, 2.0}) {
    const auto [t, e] = mean_rep(200, sp, true);
    c = c && t > prev_tar && e < prev_err;
    grid += fmt(" (%.1f: tar %.4f err %.4f)", sp, t, e);
    prev_tar = t;
    prev_err = e;
  }
  detail = fmt("decay %.4f<0.5*%.4f:%s; plateau |%.4f-%.4f|<0.1*%.4f:%s; grid%s", t200z, t20,
               a ? "yes" : "NO", t400, t200, t200, b ? "yes" : "NO", grid.c_str());
  return a && b && c;
}

// ---------------------------------------------------------------- check 7
// 2-class/2-feature linear fixture worked by hand (closed-form softmax CE
// gradient for a single row).
std::vector<double> linear_grad(const std::vector<double> &v, const double x[2], int y) {
  const double z0 = x[0] * v[0] + x[1] * v[2] + v[4];
  const double z1 = x[0] * v[1] + x[1] * v[3] + v[5];
  const double m = std::max(z0, z1);
  const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
  const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
  const double d0 = p0 - (y == 0 ? 1.0 : 0.0);
  const double d1 = p1 - (y == 1 ? 1.0 : 0.0);
  return {x[0] * d0, x[0] * d1, x[1] * d0, x[1] * d1, d0, d1};
}

bool check_branch_fixture(std::string &detail) {
  netcore::NetConfig net;
  net.input_dim = 2;
  net.hidden_dims = {};
  net.n_classes = 2;

  stream::Episode ep;
  ep.step_index = 1;
  ep.batch.support.inputs = netcore::Matrix(1, 2);
  ep.batch.support.inputs.at(0, 0) = 1.0;
  ep.batch.support.inputs.at(0, 1) = -2.0;
  ep.batch.support.labels = {0};
  ep.batch.query.inputs = netcore::Matrix(1, 2);
  ep.batch.query.inputs.at(0, 0) = 0.5;
  ep.batch.query.inputs.at(0, 1) = 1.0;
  ep.batch.query.labels = {1};
  const double xs[2] = {1.0, -2.0}, xq[2] = {0.5, 1.0};

  learner::Hyperparams hp;
  hp.alpha1 = 0.7;
  hp.alpha2 = 0.3;

  learner::LearnerState st;
  st.mode = learner::Mode::leeds;
  st.meta = netcore::zeros_like(net);
  st.meta.values = {0.3, -0.1, 0.2, 0.4, 0.05, -0.2};
  st.online = st.meta;
  st.steps_taken = 5;

  auto axpy = [](const std::vector<double> &a, const std::vector<double> &g, double lr) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - lr * g[i];
    return out;
  };

  double worst = 0.0;
  bool branches_ok = true;

  { // switch branch: phi = theta - a1*grad_S(theta); theta -= a2*grad_Q(phi)
    auto s = st;
    s.det.ell = -1.0;
    s.det.tau = -std::numeric_limits<double>::infinity();
    learner::EpisodeOutcome out;
    const auto next = learner::leeds_step(s, ep, net, hp, out);
    branches_ok = branches_ok && out.branch == learner::Branch::switch_taken;
    const auto adapt = axpy(s.meta.values, linear_grad(s.meta.values, xs, 0), hp.alpha1);
    const auto theta2 = axpy(s.meta.values, linear_grad(adapt, xq, 1), hp.alpha2);
    for (int i = 0; i < 6; ++i) {
      worst = std::max(worst, std::abs(next.online.values[i] - adapt[i]));
      worst = std::max(worst, std::abs(next.meta.values[i] - theta2[i]));
    }
  }
  bool theta_bitwise = false;
  { // no-switch IND branch: phi steps from phi_{t-1}; theta untouched
    auto s = st;
    s.online.values[0] = 0.9; // drift phi away from theta
    s.det.ell = 100.0;
    s.det.tau = -std::numeric_limits<double>::infinity();
    learner::EpisodeOutcome out;
    const auto next = learner::leeds_step(s, ep, net, hp, out);
    branches_ok = branches_ok && out.branch == learner::Branch::no_switch_ind;
    theta_bitwise = next.meta.values == s.meta.values;
    const auto expected = axpy(s.online.values, linear_grad(s.online.values, xs, 0), hp.alpha1);
    for (int i = 0; i < 6; ++i)
      worst = std::max(worst, std::abs(next.online.values[i] - expected[i]));
  }
  detail = fmt("worst |observed - hand-computed| %.2e (limit 1e-10), theta bit-identical: %s",
               worst, theta_bitwise ? "yes" : "NO");
  return branches_ok && worst < 1e-10 && theta_bitwise;
}

// ---------------------------------------------------------------- check 8
bool check_directional_reproduction(std::string &detail) {
  auto cfg = default_config();
  cfg.output_dir = scratch_dir("c8").string();
  const auto res = harness::run_experiment(cfg);

  auto find = [&](const std::string &name) -> const harness::ModeMetrics & {
    for (const auto &m : res.per_mode)
      if (m.mode == name) return m;
    throw std::runtime_error("mode missing from results: " + name);
  };
  auto ood_mean = [](const harness::ModeMetrics &m) {
    double s = 0.0;
    for (const auto &[id, a] : m.ood_acc_mean) s += a;
    return m.ood_acc_mean.empty() ? 0.0 : s / m.ood_acc_mean.size();
  };

  const auto &leeds = find("leeds");
  const auto &no_da = find("leeds_no_da");
  const auto &reset = find("maml_reset");
  const auto &ogd = find("meta_ogd");

  auto p75 = cfg;
  p75.stream.p_stay = 0.75;
  p75.modes = {learner::Mode::leeds};
  p75.output_dir = scratch_dir("c8_p75").string();
  const double leeds_p75 = harness::run_experiment(p75).per_mode.at(0).overall_acc_mean;

  const bool vs_reset = leeds.overall_acc_mean > reset.overall_acc_mean;
  const bool vs_ogd = leeds.overall_acc_mean > ogd.overall_acc_mean;
  const double gap = 100.0 * (ood_mean(leeds) - ood_mean(no_da));
  const bool vs_no_da = gap >= 2.0;
  const bool vs_p75 = leeds.overall_acc_mean >= leeds_p75;

  detail = fmt("overall: leeds %.4f vs maml_reset %.4f (%s), vs meta_ogd %.4f (%s); "
               "ood acc gap over no_da %+.2f pts, need >= 2 (%s); p=0.9 %.4f vs p=0.75 %.4f (%s)",
               leeds.overall_acc_mean, reset.overall_acc_mean, vs_reset ? "yes" : "NO",
               ogd.overall_acc_mean, vs_ogd ? "yes" : "NO", gap, vs_no_da ? "yes" : "NO",
               leeds.overall_acc_mean, leeds_p75, vs_p75 ? "yes" : "NO");
  return vs_reset && vs_ogd && vs_no_da && vs_p75;
}

// ---------------------------------------------------------------- check 9
bool check_determinism(std::string &detail) {
  auto cfg = default_config();
  cfg.n_steps = 200;
  cfg.n_seeds = 1;
  cfg.modes = {learner::Mode::leeds};

  std::vector<std::string> episode_bytes, summary_bytes;
  for (int rep = 0; rep < 2; ++rep) {
    auto c = cfg;
    c.output_dir = scratch_dir(rep == 0 ? "c9_a" : "c9_b").string();
    const auto res = harness::run_experiment(c);
    std::string ep_cat;
    for (const auto &f : res.episode_files) ep_cat += slurp(f);
    episode_bytes.push_back(ep_cat);
    summary_bytes.push_back(slurp(c.output_dir + "/summary.csv"));
  }
  const bool ep_same = episode_bytes[0] == episode_bytes[1] && !episode_bytes[0].empty();
  const bool sm_same = summary_bytes[0] == summary_bytes[1] && !summary_bytes[0].empty();
  detail = fmt("episode CSVs byte-identical: %s (%zu bytes), summary CSVs byte-identical: %s",
               ep_same ? "yes" : "NO", episode_bytes[0].size(), sm_same ? "yes" : "NO");
  return ep_same && sm_same;
}

// --------------------------------------------------------------- check 10
bool check_tau_coverage(std::string &detail) {
  auto cfg = default_config();
  cfg.output_dir = scratch_dir("c10").string();
  const auto det = harness::calibrate_detector(cfg, 0);

  // rebuild theta0 exactly as the calibration path does, then score fresh
  // held-out supports from the pretrain domain
  Rng pre_rng = Rng::from_stream(cfg.stream.seed, 1000);
  const auto &pre = cfg.stream.pretrain_domain();
  const auto theta0 = learner::pretrain_maml(pre, cfg.net, cfg.hp, cfg.stream.n_shot,
                                             cfg.stream.n_query, pre_rng);
  Rng rng = Rng::from_stream(777, 5);
  const int n = 400;
  int ind = 0;
  for (int i = 0; i < n; ++i) {
    const auto task = stream::sample_task(pre, rng);
    const auto tb = stream::sample_batch(task, cfg.stream.n_shot, 1, pre.sample_noise_sigma, rng);
    if (!detect::ood_classify(tb.support.inputs, theta0, cfg.net, det)) ++ind;
  }
  const double rate = static_cast<double>(ind) / n;
  // calibration uses 100 supports; allow 1/100 quantile granularity plus
  // 3-sigma Monte-Carlo slack for the held-out estimate
  const double tol = 1.0 / 100.0 + 3.0 * std::sqrt(0.05 * 0.95 / n);
  const bool ok = std::abs(rate - 0.95) <= tol;
  detail = fmt("held-out IND rate %.4f vs requested 0.95 (tolerance %.4f)", rate, tol);
  return ok;
}

} // namespace

int main() {
  const std::vector<Check> checks = {
      {"gradient oracle vs finite differences", check_gradient_oracle},
      {"detector micro-facts", check_detector_micro_facts},
      {"switch detection precision/recall", check_switch_detection},
      {"Hoeffding bound dominates detection error", check_hoeffding_dominance},
      {"contraction closed form and chained decay", check_contraction},
      {"task-averaged regret behavior on quadratics", check_tar_behavior},
      {"online-loop branch arithmetic fixture", check_branch_fixture},
      {"directional experiment reproduction", check_directional_reproduction},
      {"byte-identical repeated runs", check_determinism},
      {"energy threshold calibration coverage", check_tau_coverage},
  };

  int failures = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = checks[i].fn(detail);
    } catch (const std::exception &e) {
      detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%2zu/%zu] %s — %s (%.1fs): %s\n", i + 1, checks.size(),
                ok ? "PASS" : "FAIL", checks[i].name.c_str(), secs, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures > 0) std::printf("%d of %zu checks failed\n", failures, checks.size());
  return failures;
}
