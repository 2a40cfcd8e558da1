#pragma once

// Non-stationary episode stream over synthetic Gaussian-prototype few-shot
// classification domains. A two-level Markov process drives it: with
// probability p_stay the next episode reuses the current task, otherwise a
// new task is drawn from the pre-training domain with probability eta_ind
// or uniformly from the remaining domains. Ground truth (switches, domain
// ids) is recorded for detector scoring but is never visible to learners.

#include <cstdint>
#include <vector>

#include "leeds/netcore.hpp"
#include "leeds/rng.hpp"

namespace leeds::stream {

using netcore::LabeledBatch;
using netcore::Matrix;

struct DomainSpec {
  int domain_id = 0;
  std::vector<double> prototype_center;
  double prototype_radius = 0.0;
  double sample_noise_sigma = 0.0;
  int n_ways = 0;
  bool is_pretrain = false;
};

struct TaskSpec {
  int domain_id = 0;
  Matrix prototypes; // n_ways x input_dim
  long task_uid = 0;
  double noise_sigma = 0.0;
};

struct StreamConfig {
  double p_stay = 0.9;
  double eta_ind = 0.5;
  std::vector<DomainSpec> domains;
  int n_shot = 5;
  int n_query = 5;
  uint64_t seed = 0;

  void validate(int n_classes) const; // throws std::invalid_argument
  const DomainSpec &pretrain_domain() const;
  std::vector<int> ood_domain_indices() const; // indices into domains
};

struct TaskBatch {
  LabeledBatch support; // n_shot * n_ways rows, class-major
  LabeledBatch query;   // n_query * n_ways rows, class-major
};

struct Episode {
  TaskBatch batch;
  bool truth_switched = false;
  int truth_domain_id = 0;
  long step_index = 0;
  long within_task_index = 0;
  long task_uid = 0;
};

struct StreamState {
  bool started = false;
  TaskSpec current;
  long step_index = 0;
  long within_task_index = 0;
  long next_uid = 0;
};

// n_ways prototypes drawn uniformly on the sphere of domain.prototype_radius
// around domain.prototype_center; resamples the whole set until pairwise
// distances exceed 1e-6 (throws std::runtime_error after 1000 attempts).
TaskSpec sample_task(const DomainSpec &domain, Rng &rng);

// Each sample is prototype[label] + N(0, sigma^2 I); labels balanced and
// class-major; support and query use independent draws.
TaskBatch sample_batch(const TaskSpec &task, int n_shot, int n_query, double sigma, Rng &rng);

// Advances the Markov chain by one episode. Step 0 always counts as a switch.
Episode next_episode(StreamState &state, const StreamConfig &cfg, Rng &rng);

} // namespace leeds::stream
