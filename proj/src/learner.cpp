#include "leeds/learner.hpp"

#include <cmath>
#include <stdexcept>

namespace leeds::learner {

Mode mode_from_string(const std::string &s) {
  if (s == "leeds") return Mode::leeds;
  if (s == "leeds_no_da") return Mode::leeds_no_da;
  if (s == "maml_reset") return Mode::maml_reset;
  if (s == "meta_ogd") return Mode::meta_ogd;
  if (s == "cmaml_detect") return Mode::cmaml_detect;
  throw std::invalid_argument("unknown learner mode: " + s);
}

std::string to_string(Mode m) {
  switch (m) {
  case Mode::leeds: return "leeds";
  case Mode::leeds_no_da: return "leeds_no_da";
  case Mode::maml_reset: return "maml_reset";
  case Mode::meta_ogd: return "meta_ogd";
  case Mode::cmaml_detect: return "cmaml_detect";
  }
  throw std::invalid_argument("unknown learner mode enum");
}

const char *to_string(Branch b) {
  switch (b) {
  case Branch::switch_taken: return "switch";
  case Branch::no_switch_ind: return "no_switch_ind";
  case Branch::no_switch_ood: return "no_switch_ood";
  }
  return "?";
}

void Hyperparams::validate() const {
  if (!(alpha1 > 0.0) || !std::isfinite(alpha1))
    throw std::invalid_argument("hp.alpha1 must be finite and positive");
  if (!(alpha2 > 0.0) || !std::isfinite(alpha2))
    throw std::invalid_argument("hp.alpha2 must be finite and positive");
  if (inner_steps_pretrain < 1)
    throw std::invalid_argument("hp.inner_steps_pretrain must be >= 1");
  if (pretrain_tasks < 0) throw std::invalid_argument("hp.pretrain_tasks must be >= 0");
  if (pretrain_meta_batch < 1)
    throw std::invalid_argument("hp.pretrain_meta_batch must be >= 1");
}

ParamSet pretrain_maml(const DomainSpec &domain, const NetConfig &net, const Hyperparams &hp,
                       int n_shot, int n_query, Rng &rng) {
  if (!domain.is_pretrain)
    throw std::invalid_argument("pretrain_maml: domain must have is_pretrain=true");
  ParamSet theta = netcore::init_params(net, rng);
  int drawn = 0;
  long iter = 0;
  while (drawn < hp.pretrain_tasks) {
    const int batch = std::min(hp.pretrain_meta_batch, hp.pretrain_tasks - drawn);
    std::vector<double> meta_grad(theta.values.size(), 0.0);
    for (int b = 0; b < batch; ++b) {
      const TaskSpec task = stream::sample_task(domain, rng);
      const TaskBatch tb =
          stream::sample_batch(task, n_shot, n_query, domain.sample_noise_sigma, rng);
      ParamSet phi = theta;
      for (int s = 0; s < hp.inner_steps_pretrain; ++s) {
        const auto lg = netcore::loss_and_grad(phi, net, tb.support);
        phi = netcore::sgd_step(phi, lg.grad, hp.alpha1);
      }
      const auto q = netcore::loss_and_grad(phi, net, tb.query);
      if (!std::isfinite(q.loss) || q.loss > 1e3)
        throw std::runtime_error("pretrain_maml: divergence at iteration " + std::to_string(iter));
      for (std::size_t i = 0; i < meta_grad.size(); ++i) meta_grad[i] += q.grad[i] / batch;
    }
    theta = netcore::sgd_step(theta, meta_grad, hp.alpha2);
    drawn += batch;
    ++iter;
  }
  return theta;
}

namespace {

void evaluate_query(const ParamSet &phi, const NetConfig &net, const TaskBatch &tb,
                    EpisodeOutcome &out) {
  const auto logits = netcore::forward(phi, net, tb.query.inputs);
  out.query_loss = netcore::ce_loss(logits, tb.query.labels);
  out.query_accuracy = netcore::accuracy(logits, tb.query.labels);
}

// theta_adapt = theta - a1*grad(S); theta_next = theta - a2*grad_at_adapt(Q)
ParamSet meta_update(const ParamSet &theta, const NetConfig &net, const TaskBatch &tb,
                     const Hyperparams &hp, ParamSet *adapt_out = nullptr) {
  const auto s = netcore::loss_and_grad(theta, net, tb.support);
  ParamSet theta_adapt = netcore::sgd_step(theta, s.grad, hp.alpha1);
  const auto q = netcore::loss_and_grad(theta_adapt, net, tb.query);
  if (adapt_out) *adapt_out = theta_adapt;
  return netcore::sgd_step(theta, q.grad, hp.alpha2);
}

LearnerState step_leeds_family(const LearnerState &state, const Episode &ep, const NetConfig &net,
                               const Hyperparams &hp, EpisodeOutcome &out) {
  LearnerState next = state;
  const bool no_da = state.mode == Mode::leeds_no_da;
  const bool cmaml = state.mode == Mode::cmaml_detect;

  const auto sup = detect::switch_detect(state.online, net, ep.batch.support, state.det.ell);
  out.support_loss = sup.loss;

  bool switched;
  if (state.steps_taken == 0) {
    switched = true; // no previous task model to continue from
  } else if (cmaml) {
    switched = sup.loss - state.last_support_loss > hp.cmaml_gamma;
  } else {
    switched = sup.switched;
  }
  out.detected_switch = switched;

  if (switched) {
    out.branch = Branch::switch_taken;
    ParamSet theta_adapt;
    next.meta = meta_update(state.meta, net, ep.batch, hp, &theta_adapt);
    next.online = std::move(theta_adapt);
    evaluate_query(next.online, net, ep.batch, out);
  } else {
    const auto g = netcore::loss_and_grad(state.online, net, ep.batch.support);
    next.online = netcore::sgd_step(state.online, g.grad, hp.alpha1);
    evaluate_query(next.online, net, ep.batch, out);
    bool ood = false;
    if (!no_da && !cmaml)
      ood = detect::ood_classify(ep.batch.support.inputs, state.meta, net, state.det);
    out.detected_ood = ood;
    if (ood) {
      out.branch = Branch::no_switch_ood;
      next.meta = meta_update(state.meta, net, ep.batch, hp);
    } else {
      out.branch = Branch::no_switch_ind;
      // theta carried over bit-identically
    }
  }

  next.last_support_loss = sup.loss;
  next.steps_taken = state.steps_taken + 1;
  return next;
}

} // namespace

LearnerState leeds_step(const LearnerState &state, const Episode &ep, const NetConfig &net,
                        const Hyperparams &hp, EpisodeOutcome &out) {
  out = EpisodeOutcome{};
  out.step = ep.step_index;
  out.truth_switched = ep.truth_switched;
  out.truth_domain_id = ep.truth_domain_id;
  return step_leeds_family(state, ep, net, hp, out);
}

LearnerState baseline_step(const LearnerState &state, const Episode &ep, const NetConfig &net,
                           const Hyperparams &hp, EpisodeOutcome &out) {
  out = EpisodeOutcome{};
  out.step = ep.step_index;
  out.truth_switched = ep.truth_switched;
  out.truth_domain_id = ep.truth_domain_id;

  switch (state.mode) {
  case Mode::leeds:
  case Mode::leeds_no_da:
  case Mode::cmaml_detect:
    return step_leeds_family(state, ep, net, hp, out);
  case Mode::maml_reset: {
    LearnerState next = state;
    const auto s = netcore::loss_and_grad(state.meta, net, ep.batch.support);
    out.support_loss = s.loss;
    out.detected_switch = true;
    out.branch = Branch::switch_taken;
    next.online = netcore::sgd_step(state.meta, s.grad, hp.alpha1);
    evaluate_query(next.online, net, ep.batch, out);
    next.last_support_loss = s.loss;
    next.steps_taken = state.steps_taken + 1;
    return next;
  }
  case Mode::meta_ogd: {
    LearnerState next = state;
    const auto s = netcore::loss_and_grad(state.meta, net, ep.batch.support);
    out.support_loss = s.loss;
    out.detected_switch = true;
    out.branch = Branch::switch_taken;
    ParamSet theta_adapt;
    next.meta = meta_update(state.meta, net, ep.batch, hp, &theta_adapt);
    next.online = std::move(theta_adapt);
    evaluate_query(next.online, net, ep.batch, out);
    next.last_support_loss = s.loss;
    next.steps_taken = state.steps_taken + 1;
    return next;
  }
  }
  throw std::invalid_argument("baseline_step: unknown mode");
}

RunRecord run_stream(const LearnerState &initial, const StreamConfig &scfg, long n_steps,
                     const NetConfig &net, const Hyperparams &hp, Rng &stream_rng,
                     const RunOptions &opts) {
  if (n_steps < 1) throw std::invalid_argument("run_stream: n_steps must be >= 1");
  RunRecord rec;
  rec.mode = initial.mode;
  rec.stream_seed = scfg.seed;
  rec.kept_batches = opts.keep_batches;
  rec.outcomes.reserve(static_cast<std::size_t>(n_steps));

  stream::StreamState ss;
  LearnerState state = initial;
  for (long t = 0; t < n_steps; ++t) {
    const Episode ep = stream::next_episode(ss, scfg, stream_rng);
    EpisodeOutcome out;
    LearnerState next = baseline_step(state, ep, net, hp, out);
    if (ep.truth_switched) {
      TaskSegment seg;
      seg.start_step = ep.step_index;
      seg.task = ss.current;
      seg.phi0 = out.detected_switch ? state.meta : state.online;
      rec.segments.push_back(std::move(seg));
    }
    if (opts.keep_batches) rec.batches.push_back(ep.batch);
    if (opts.sink) opts.sink(out);
    rec.outcomes.push_back(out);
    state = std::move(next);
  }
  return rec;
}

} // namespace leeds::learner
