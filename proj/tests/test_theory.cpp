#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "leeds/theory.hpp"

using namespace leeds;
using namespace leeds::theory;

namespace {

TheoryConfig quad_cfg() {
  TheoryConfig cfg;
  cfg.M_clip = 10.0;
  cfg.noise_sigma = 0.25;
  return cfg;
}

stream::TaskSpec separable_task(Rng &rng) {
  stream::DomainSpec d;
  d.domain_id = 0;
  d.prototype_center.assign(8, 0.0);
  d.prototype_radius = 3.0;
  d.sample_noise_sigma = 0.1;
  d.n_ways = 4;
  d.is_pretrain = true;
  return stream::sample_task(d, rng);
}

netcore::NetConfig small_net() {
  netcore::NetConfig cfg;
  cfg.input_dim = 8;
  cfg.hidden_dims = {16};
  cfg.n_classes = 4;
  return cfg;
}

} // namespace

TEST_CASE("default meta schedule is 2/(t+1)") {
  const auto sched = default_meta_schedule();
  CHECK(sched(1) == doctest::Approx(1.0));
  CHECK(sched(3) == doctest::Approx(0.5));
  CHECK(sched(9) == doctest::Approx(0.2));
}

TEST_CASE("hoeffding bound worked values and identities") {
  TheoryConfig cfg = quad_cfg();
  cfg.ell_m = 1.0;
  cfg.ell_p = 1.0;
  CHECK(hoeffding_bound(20, cfg) == doctest::Approx(1.0));

  cfg.M_clip = 2.302585;
  cfg.ell_m = 0.5;
  cfg.ell_p = 1.5;
  CHECK(hoeffding_bound(20, cfg) == doctest::Approx(0.1517).epsilon(1e-3));
  CHECK(hoeffding_bound(40, cfg) ==
        doctest::Approx(hoeffding_bound(20, cfg) * hoeffding_bound(20, cfg)).epsilon(1e-12));
  CHECK_THROWS_AS(hoeffding_bound(0, cfg), std::invalid_argument);
}

TEST_CASE("contraction ratio closed form vs empirical") {
  Rng rng(51);
  {
    const auto r = contraction_ratio(1.0, 1.0, 1.0, 10, rng);
    CHECK(r.closed_form_rho == doctest::Approx(0.0));
    CHECK(r.empirical_rho < 1e-12);
  }
  {
    const auto r = contraction_ratio(0.5, 2.0, 0.5, 10, rng);
    CHECK(r.closed_form_rho == doctest::Approx(0.75));
    CHECK(std::abs(r.empirical_rho - 0.75) < 1e-8);
  }
  {
    const auto r = contraction_ratio(0.5, 2.0, 1.0, 10, rng); // alpha = 2/beta boundary
    CHECK(r.closed_form_rho == doctest::Approx(1.0));
    CHECK(r.empirical_rho <= 1.0 + 1e-10);
  }
  CHECK_THROWS_AS(contraction_ratio(-1.0, 2.0, 0.5, 1, rng), std::invalid_argument);
}

TEST_CASE("50 random quadratics: empirical rho within 1e-8 of closed form") {
  Rng rng(52);
  for (int i = 0; i < 50; ++i) {
    const double mu = rng.uniform(0.2, 1.0);
    const double beta = mu + rng.uniform(0.0, 2.0);
    const double alpha = rng.uniform(0.05, 1.95) / beta;
    const auto r = contraction_ratio(mu, beta, alpha, 4, rng);
    CHECK(std::abs(r.empirical_rho - r.closed_form_rho) < 1e-8);
  }
}

TEST_CASE("comparator on a separable synthetic task reaches near-zero loss") {
  Rng r1(53), r2(53);
  const auto net = small_net();
  const auto task = separable_task(r1);
  const auto task_b = separable_task(r2);
  TheoryConfig cfg = quad_cfg();
  Rng c1(54), c2(54);
  const auto comp = compute_comparator(task, net, cfg, 5, c1);
  CHECK(comp.residual_loss < 1e-2);
  CHECK_FALSE(comp.warning);
  const auto comp2 = compute_comparator(task_b, net, cfg, 5, c2);
  CHECK(comp.params.values == comp2.params.values); // same seeds end to end
}

TEST_CASE("task-averaged regret arithmetic on a hand-built record") {
  netcore::NetConfig net;
  net.input_dim = 1;
  net.hidden_dims = {};
  net.n_classes = 2;

  learner::RunRecord run;
  run.kept_batches = true;
  learner::TaskSegment seg;
  seg.start_step = 0;
  run.segments.push_back(seg);

  stream::TaskBatch tb;
  tb.query.inputs = netcore::Matrix(1, 1); // x = 0: logits are the biases
  tb.query.labels = {0};
  run.batches.push_back(tb);

  learner::EpisodeOutcome out;
  out.step = 0;
  out.query_loss = 1.0; // hand-set learner loss
  run.outcomes.push_back(out);

  // comparator with loss log(1 + e^{b1-b0}) = 0.25
  ComparatorResult comp;
  comp.params = netcore::zeros_like(net);
  comp.params.values[3] = std::log(std::exp(0.25) - 1.0); // b1; b0 = 0
  const auto rep = task_averaged_regret(run, net, {comp});
  CHECK(rep.tar == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(rep.per_task_regret.size() == 1);

  learner::RunRecord no_batches = run;
  no_batches.kept_batches = false;
  CHECK_THROWS_AS(task_averaged_regret(no_batches, net, {comp}), std::invalid_argument);
  CHECK_THROWS_AS(task_averaged_regret(run, net, {}), std::invalid_argument);
}

TEST_CASE("TAR is zero when the comparators are the learner's own parameters") {
  netcore::NetConfig net;
  net.input_dim = 1;
  net.hidden_dims = {};
  net.n_classes = 2;
  learner::RunRecord run;
  run.kept_batches = true;
  learner::TaskSegment seg;
  seg.start_step = 0;
  run.segments.push_back(seg);

  stream::TaskBatch tb;
  tb.query.inputs = netcore::Matrix(1, 1);
  tb.query.inputs.at(0, 0) = 0.7;
  tb.query.labels = {1};
  run.batches.push_back(tb);

  ComparatorResult self;
  self.params = netcore::zeros_like(net);
  self.params.values = {0.4, -0.3, 0.1, 0.2};
  learner::EpisodeOutcome out;
  out.query_loss =
      netcore::ce_loss(netcore::forward(self.params, net, tb.query.inputs), tb.query.labels);
  run.outcomes.push_back(out);
  const auto rep = task_averaged_regret(run, net, {self});
  CHECK(rep.tar == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("theory_run one-step arithmetic at dim 1") {
  TheoryConfig cfg = quad_cfg();
  cfg.noise_sigma = 0.0;
  QuadTaskFamily fam;
  fam.dim = 1;
  fam.centers = {{2.0}};
  fam.curvature_lo = fam.curvature_hi = 1.0;
  fam.K_per_task = {1};

  Rng rng(55);
  fam.alpha = 1.0; // rho = 0: one exact Newton step lands on the comparator
  auto rep = theory_run(fam, cfg, default_meta_schedule(), false, rng);
  CHECK(rep.per_task_regret[0] == doctest::Approx(0.0).epsilon(1e-15));

  fam.alpha = 0.5; // phi1 = c/2, f(phi1) = c^2/8
  rep = theory_run(fam, cfg, default_meta_schedule(), false, rng);
  CHECK(rep.per_task_regret[0] == doctest::Approx(2.0 * 2.0 / 8.0).epsilon(1e-12));
}

TEST_CASE("theory_run per-task regret is nonnegative with exact comparators") {
  TheoryConfig cfg = quad_cfg();
  Rng rng(56);
  const std::vector<double> base(6, 1.5);
  const auto fam = make_quad_family(6, 50, 1.0, base, 1.0, 2.0, 0.5, 10.0, rng);
  const auto rep = theory_run(fam, cfg, default_meta_schedule(), false, rng);
  for (double r : rep.per_task_regret) CHECK(r >= 0.0);
  CHECK(rep.sigma_star_sq > 0.0);
  CHECK(std::isfinite(rep.bound_value));
}

TEST_CASE("TAR decays when all centers coincide") {
  TheoryConfig cfg = quad_cfg();
  const std::vector<double> base(6, 1.5);
  auto mean_tar = [&](int T) {
    double tar = 0.0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
      Rng rng(100 + static_cast<uint64_t>(s));
      const auto fam = make_quad_family(6, T, 0.0, base, 1.0, 2.0, 0.5, 10.0, rng);
      tar += theory_run(fam, cfg, default_meta_schedule(), false, rng).tar / seeds;
    }
    return tar;
  };
  const double t20 = mean_tar(20);
  const double t200 = mean_tar(200);
  CHECK(t200 < 0.5 * t20);
}

TEST_CASE("empirical detection error vanishes on a well-separated stream") {
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
  pre.sample_noise_sigma = 0.01;
  pre.n_ways = 8;
  pre.is_pretrain = true;
  scfg.domains.push_back(pre);
  auto ood = pre;
  ood.domain_id = 1;
  ood.is_pretrain = false;
  scfg.domains.push_back(ood);

  auto net = small_net();
  net.n_classes = 8;
  Rng rng(58);
  auto theta = netcore::init_params(net, rng);
  TheoryConfig cfg = quad_cfg();
  cfg.M_clip = 2.0 * std::log(8.0);

  CHECK_THROWS_AS(
      empirical_detection_error(scfg, net, theta, 0.5, 8, 100, cfg, rng),
      std::invalid_argument); // too few trials

  auto rep = empirical_detection_error(scfg, net, theta, 0.5, 16, 10000, cfg, rng);
  CHECK(rep.regime_ok);
  CHECK(rep.rate == 0.0);

  // near-degenerate chain: no true switches, so only false alarms remain
  stream::StreamConfig stuck = scfg;
  stuck.p_stay = 1.0 - 1e-15;
  TheoryConfig fixed = cfg; // calibration needs switches, so preset the bounds
  fixed.ell_m = rep.ell_m;
  fixed.ell_p = rep.ell_p;
  auto rep2 = empirical_detection_error(stuck, net, theta, 0.5, 16, 2000, fixed, rng);
  CHECK(rep2.miss_rate == 0.0);
  CHECK(rep2.rate == rep2.false_alarm_rate);
}

TEST_CASE("config validation rejects bad values") {
  TheoryConfig cfg = quad_cfg();
  cfg.M_clip = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = quad_cfg();
  cfg.ell_m = 2.0;
  cfg.ell_p = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

  QuadTaskFamily fam;
  fam.dim = 2;
  fam.centers = {{0.0, 0.0}};
  fam.curvature_lo = 1.0;
  fam.curvature_hi = 2.0;
  fam.alpha = 1.0; // 2/beta boundary: rejected
  fam.K_per_task = {1};
  CHECK_THROWS_AS(fam.validate(), std::invalid_argument);
  fam.alpha = 0.5;
  CHECK_NOTHROW(fam.validate());
}
