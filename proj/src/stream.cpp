#include "leeds/stream.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace leeds::stream {

void StreamConfig::validate(int n_classes) const {
  if (!(p_stay > 0.0 && p_stay < 1.0))
    throw std::invalid_argument("stream.p_stay must be strictly inside (0,1)");
  if (!(eta_ind > 0.0 && eta_ind < 1.0))
    throw std::invalid_argument("stream.eta_ind must be strictly inside (0,1)");
  if (n_shot < 1) throw std::invalid_argument("stream.n_shot must be >= 1");
  if (n_query < 1) throw std::invalid_argument("stream.n_query must be >= 1");
  if (domains.empty()) throw std::invalid_argument("stream.domains must be nonempty");
  int n_pretrain = 0;
  for (const auto &d : domains) {
    if (d.is_pretrain) ++n_pretrain;
    if (d.prototype_radius <= 0.0)
      throw std::invalid_argument("stream.domains: prototype_radius must be > 0");
    if (d.sample_noise_sigma < 0.0)
      throw std::invalid_argument("stream.domains: sample_noise_sigma must be >= 0");
    if (d.n_ways != n_classes)
      throw std::invalid_argument("stream.domains: n_ways must equal net.n_classes");
    if (d.prototype_center.empty())
      throw std::invalid_argument("stream.domains: prototype_center must be nonempty");
  }
  if (n_pretrain != 1)
    throw std::invalid_argument("stream.domains must contain exactly one is_pretrain domain");
  if (domains.size() < 2)
    throw std::invalid_argument("stream.domains must contain at least one non-pretrain domain");
}

const DomainSpec &StreamConfig::pretrain_domain() const {
  for (const auto &d : domains)
    if (d.is_pretrain) return d;
  throw std::invalid_argument("stream: no pretrain domain configured");
}

std::vector<int> StreamConfig::ood_domain_indices() const {
  std::vector<int> idx;
  for (std::size_t i = 0; i < domains.size(); ++i)
    if (!domains[i].is_pretrain) idx.push_back(static_cast<int>(i));
  return idx;
}

TaskSpec sample_task(const DomainSpec &domain, Rng &rng) {
  const int dim = static_cast<int>(domain.prototype_center.size());
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Matrix protos(domain.n_ways, dim);
    for (int c = 0; c < domain.n_ways; ++c) {
      const auto p = rng.on_sphere(domain.prototype_center, domain.prototype_radius);
      for (int j = 0; j < dim; ++j) protos.at(c, j) = p[j];
    }
    double min_dist = 1e300;
    for (int a = 0; a < domain.n_ways; ++a)
      for (int b = a + 1; b < domain.n_ways; ++b) {
        double d2 = 0.0;
        for (int j = 0; j < dim; ++j) {
          const double diff = protos.at(a, j) - protos.at(b, j);
          d2 += diff * diff;
        }
        min_dist = std::min(min_dist, std::sqrt(d2));
      }
    if (min_dist > 1e-6) {
      TaskSpec t;
      t.domain_id = domain.domain_id;
      t.prototypes = std::move(protos);
      t.noise_sigma = domain.sample_noise_sigma;
      return t;
    }
  }
  throw std::runtime_error("sample_task: failed to draw distinct prototypes after 1000 attempts");
}

namespace {
LabeledBatch draw_set(const TaskSpec &task, int per_class, double sigma, Rng &rng) {
  const int n_ways = task.prototypes.rows;
  const int dim = task.prototypes.cols;
  LabeledBatch b;
  b.inputs = Matrix(per_class * n_ways, dim);
  b.labels.resize(static_cast<std::size_t>(per_class) * n_ways);
  int row = 0;
  for (int c = 0; c < n_ways; ++c)
    for (int s = 0; s < per_class; ++s, ++row) {
      for (int j = 0; j < dim; ++j)
        b.inputs.at(row, j) = task.prototypes.at(c, j) + sigma * rng.normal();
      b.labels[row] = c;
    }
  return b;
}
} // namespace

TaskBatch sample_batch(const TaskSpec &task, int n_shot, int n_query, double sigma, Rng &rng) {
  TaskBatch tb;
  tb.support = draw_set(task, n_shot, sigma, rng);
  tb.query = draw_set(task, n_query, sigma, rng);
  return tb;
}

Episode next_episode(StreamState &state, const StreamConfig &cfg, Rng &rng) {
  bool switched;
  if (!state.started) {
    switched = true;
  } else {
    switched = rng.uniform01() >= cfg.p_stay;
  }

  if (switched) {
    const DomainSpec *domain;
    if (rng.uniform01() < cfg.eta_ind) {
      domain = &cfg.pretrain_domain();
    } else {
      const auto ood = cfg.ood_domain_indices();
      if (ood.empty()) throw std::invalid_argument("next_episode: no non-pretrain domain configured");
      domain = &cfg.domains[ood[rng.uniform_index(ood.size())]];
    }
    state.current = sample_task(*domain, rng);
    state.current.task_uid = state.next_uid++;
    state.within_task_index = 0;
  } else {
    ++state.within_task_index;
  }

  Episode ep;
  ep.batch = sample_batch(state.current, cfg.n_shot, cfg.n_query, state.current.noise_sigma, rng);
  ep.truth_switched = switched;
  ep.truth_domain_id = state.current.domain_id;
  ep.step_index = state.step_index;
  ep.within_task_index = state.within_task_index;
  ep.task_uid = state.current.task_uid;

  ++state.step_index;
  state.started = true;
  return ep;
}

} // namespace leeds::stream
