#include "leeds/harness.hpp"

#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace fs = std::filesystem;

namespace leeds::harness {

namespace {

constexpr const char *kVersion = "leeds-1.0.0";

[[noreturn]] void config_error(const std::string &field, const std::string &msg) {
  throw std::invalid_argument("config field '" + field + "': " + msg);
}

void reject_unknown(const json &j, const std::string &where,
                    const std::set<std::string> &allowed) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) config_error(where + "." + it.key(), "unknown field");
}

template <typename T>
T get_required(const json &j, const std::string &where, const std::string &key) {
  if (!j.contains(key)) config_error(where + "." + key, "missing required field");
  try {
    return j.at(key).get<T>();
  } catch (const std::exception &e) {
    config_error(where + "." + key, std::string("bad type/value: ") + e.what());
  }
}

template <typename T>
T get_or(const json &j, const std::string &where, const std::string &key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception &e) {
    config_error(where + "." + key, std::string("bad type/value: ") + e.what());
  }
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

uint64_t fnv1a(const std::string &s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

} // namespace

void ExperimentConfig::validate() const {
  net.validate();
  stream.validate(net.n_classes);
  hp.validate();
  if (!det_auto) {
    if (!(det.ell > 0.0)) config_error("det.ell", "must be > 0");
    if (!(det.delta > 0.0)) config_error("det.delta", "must be > 0");
  }
  if (modes.empty()) config_error("modes", "must list at least one mode");
  if (n_steps < 1) config_error("n_steps", "must be >= 1");
  if (n_seeds < 1) config_error("n_seeds", "must be >= 1");
  if (output_dir.empty()) config_error("output_dir", "must be set");
  for (const auto &d : stream.domains)
    if (static_cast<int>(d.prototype_center.size()) != net.input_dim)
      config_error("stream.domains.prototype_center", "dimension must equal net.input_dim");
  if (theory) theory->validate();
}

ExperimentConfig parse_config(const json &j) {
  if (!j.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
  reject_unknown(j, "config",
                 {"net", "stream", "hp", "det", "modes", "n_steps", "n_seeds", "output_dir",
                  "theory"});
  ExperimentConfig cfg;

  const json &n = j.contains("net") ? j.at("net") : json::object();
  if (!j.contains("net")) config_error("net", "missing required field");
  reject_unknown(n, "net", {"input_dim", "hidden_dims", "n_classes", "activation"});
  cfg.net.input_dim = get_required<int>(n, "net", "input_dim");
  cfg.net.hidden_dims = get_required<std::vector<int>>(n, "net", "hidden_dims");
  cfg.net.n_classes = get_required<int>(n, "net", "n_classes");
  cfg.net.activation =
      netcore::activation_from_string(get_or<std::string>(n, "net", "activation", "relu"));

  const json &s = j.contains("stream") ? j.at("stream") : json::object();
  if (!j.contains("stream")) config_error("stream", "missing required field");
  reject_unknown(s, "stream", {"p_stay", "eta_ind", "domains", "n_shot", "n_query", "seed"});
  cfg.stream.p_stay = get_required<double>(s, "stream", "p_stay");
  cfg.stream.eta_ind = get_required<double>(s, "stream", "eta_ind");
  cfg.stream.n_shot = get_required<int>(s, "stream", "n_shot");
  cfg.stream.n_query = get_required<int>(s, "stream", "n_query");
  cfg.stream.seed = get_required<uint64_t>(s, "stream", "seed");
  if (!s.contains("domains")) config_error("stream.domains", "missing required field");
  for (const auto &dj : s.at("domains")) {
    reject_unknown(dj, "stream.domains",
                   {"domain_id", "prototype_center", "prototype_radius", "sample_noise_sigma",
                    "n_ways", "is_pretrain"});
    stream::DomainSpec d;
    d.domain_id = get_required<int>(dj, "stream.domains", "domain_id");
    d.prototype_center =
        get_required<std::vector<double>>(dj, "stream.domains", "prototype_center");
    d.prototype_radius = get_required<double>(dj, "stream.domains", "prototype_radius");
    d.sample_noise_sigma = get_required<double>(dj, "stream.domains", "sample_noise_sigma");
    d.n_ways = get_or<int>(dj, "stream.domains", "n_ways", cfg.net.n_classes);
    d.is_pretrain = get_or<bool>(dj, "stream.domains", "is_pretrain", false);
    cfg.stream.domains.push_back(std::move(d));
  }

  const json &h = j.contains("hp") ? j.at("hp") : json::object();
  if (!j.contains("hp")) config_error("hp", "missing required field");
  reject_unknown(h, "hp",
                 {"alpha1", "alpha2", "inner_steps_pretrain", "pretrain_tasks",
                  "pretrain_meta_batch", "cmaml_gamma"});
  cfg.hp.alpha1 = get_required<double>(h, "hp", "alpha1");
  cfg.hp.alpha2 = get_required<double>(h, "hp", "alpha2");
  cfg.hp.inner_steps_pretrain = get_or<int>(h, "hp", "inner_steps_pretrain", 1);
  cfg.hp.pretrain_tasks = get_required<int>(h, "hp", "pretrain_tasks");
  cfg.hp.pretrain_meta_batch = get_or<int>(h, "hp", "pretrain_meta_batch", 1);
  cfg.hp.cmaml_gamma = get_or<double>(h, "hp", "cmaml_gamma", 1.0);

  if (j.contains("det") && j.at("det").is_string()) {
    if (j.at("det").get<std::string>() != "auto")
      config_error("det", "must be an object or the string \"auto\"");
    cfg.det_auto = true;
  } else if (j.contains("det")) {
    const json &d = j.at("det");
    reject_unknown(d, "det", {"ell", "tau", "delta", "energy_sign"});
    cfg.det_auto = false;
    cfg.det.ell = get_required<double>(d, "det", "ell");
    cfg.det.tau = get_required<double>(d, "det", "tau");
    cfg.det.delta = get_or<double>(d, "det", "delta", 1.0);
    const auto sign = get_or<std::string>(d, "det", "energy_sign", "paper");
    if (sign == "paper")
      cfg.det.energy_sign = detect::EnergySign::paper;
    else if (sign == "literature")
      cfg.det.energy_sign = detect::EnergySign::literature;
    else
      config_error("det.energy_sign", "must be \"paper\" or \"literature\"");
  } else {
    cfg.det_auto = true;
  }

  for (const auto &m : get_required<std::vector<std::string>>(j, "config", "modes"))
    cfg.modes.push_back(learner::mode_from_string(m));
  cfg.n_steps = get_required<long>(j, "config", "n_steps");
  cfg.n_seeds = get_or<int>(j, "config", "n_seeds", 1);
  cfg.output_dir = get_required<std::string>(j, "config", "output_dir");

  if (j.contains("theory")) {
    const json &t = j.at("theory");
    reject_unknown(t, "theory",
                   {"M_clip", "ell_m", "ell_p", "c_support", "rho_target", "comparator_tol",
                    "noise_sigma"});
    theory::TheoryConfig tc;
    tc.M_clip = get_required<double>(t, "theory", "M_clip");
    tc.ell_m = get_or<double>(t, "theory", "ell_m", 0.0);
    tc.ell_p = get_or<double>(t, "theory", "ell_p", 0.0);
    tc.c_support = get_or<double>(t, "theory", "c_support", 0.0);
    tc.rho_target = get_or<double>(t, "theory", "rho_target", 0.5);
    tc.comparator_tol = get_or<double>(t, "theory", "comparator_tol", 1e-6);
    tc.noise_sigma = get_or<double>(t, "theory", "noise_sigma", 0.25);
    cfg.theory = tc;
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception &e) {
    throw std::invalid_argument("config parse error in " + path + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig &cfg) {
  json j;
  j["net"] = {{"input_dim", cfg.net.input_dim},
              {"hidden_dims", cfg.net.hidden_dims},
              {"n_classes", cfg.net.n_classes},
              {"activation", netcore::to_string(cfg.net.activation)}};
  json domains = json::array();
  for (const auto &d : cfg.stream.domains)
    domains.push_back({{"domain_id", d.domain_id},
                       {"prototype_center", d.prototype_center},
                       {"prototype_radius", d.prototype_radius},
                       {"sample_noise_sigma", d.sample_noise_sigma},
                       {"n_ways", d.n_ways},
                       {"is_pretrain", d.is_pretrain}});
  j["stream"] = {{"p_stay", cfg.stream.p_stay}, {"eta_ind", cfg.stream.eta_ind},
                 {"domains", domains},          {"n_shot", cfg.stream.n_shot},
                 {"n_query", cfg.stream.n_query}, {"seed", cfg.stream.seed}};
  j["hp"] = {{"alpha1", cfg.hp.alpha1},
             {"alpha2", cfg.hp.alpha2},
             {"inner_steps_pretrain", cfg.hp.inner_steps_pretrain},
             {"pretrain_tasks", cfg.hp.pretrain_tasks},
             {"pretrain_meta_batch", cfg.hp.pretrain_meta_batch},
             {"cmaml_gamma", cfg.hp.cmaml_gamma}};
  if (cfg.det_auto) {
    j["det"] = "auto";
  } else {
    j["det"] = {{"ell", cfg.det.ell},
                {"tau", cfg.det.tau},
                {"delta", cfg.det.delta},
                {"energy_sign",
                 cfg.det.energy_sign == detect::EnergySign::paper ? "paper" : "literature"}};
  }
  json modes = json::array();
  for (auto m : cfg.modes) modes.push_back(learner::to_string(m));
  j["modes"] = modes;
  j["n_steps"] = cfg.n_steps;
  j["n_seeds"] = cfg.n_seeds;
  j["output_dir"] = cfg.output_dir;
  if (cfg.theory)
    j["theory"] = {{"M_clip", cfg.theory->M_clip},
                   {"ell_m", cfg.theory->ell_m},
                   {"ell_p", cfg.theory->ell_p},
                   {"c_support", cfg.theory->c_support},
                   {"rho_target", cfg.theory->rho_target},
                   {"comparator_tol", cfg.theory->comparator_tol},
                   {"noise_sigma", cfg.theory->noise_sigma}};
  return j;
}

void apply_override(json &doc, const std::string &dotted_path, const std::string &value) {
  json *node = &doc;
  std::stringstream ss(dotted_path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.'))
    if (!part.empty()) parts.push_back(part);
  if (parts.empty()) throw std::invalid_argument("empty override path");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (...) {
    parsed = value; // plain string
  }
  (*node)[parts.back()] = parsed;
}

void write_file_atomic(const std::string &path, const std::string &content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp);
    out << content;
  }
  fs::rename(tmp, path);
}

PrecisionRecall precision_recall(const RunRecord &record) {
  long tp = 0, fp = 0, fn = 0, true_switches = 0;
  for (const auto &o : record.outcomes) {
    if (o.step == 0) continue;
    if (o.truth_switched) ++true_switches;
    if (o.detected_switch && o.truth_switched) ++tp;
    if (o.detected_switch && !o.truth_switched) ++fp;
    if (!o.detected_switch && o.truth_switched) ++fn;
  }
  if (true_switches < 1)
    throw std::invalid_argument("precision_recall: record has no true switch after step 0");
  PrecisionRecall pr;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  pr.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : nan;
  pr.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : nan;
  return pr;
}

namespace {

std::string pretrain_cache_key(const ExperimentConfig &cfg, uint64_t seed) {
  std::ostringstream k;
  k << "net:" << cfg.net.input_dim << ":";
  for (int h : cfg.net.hidden_dims) k << h << ",";
  k << ":" << cfg.net.n_classes << ":" << netcore::to_string(cfg.net.activation);
  const auto &d = cfg.stream.pretrain_domain();
  k << "|dom:" << d.domain_id << ":" << d.prototype_radius << ":" << d.sample_noise_sigma << ":";
  for (double c : d.prototype_center) k << c << ",";
  k << "|hp:" << cfg.hp.alpha1 << ":" << cfg.hp.alpha2 << ":" << cfg.hp.inner_steps_pretrain
    << ":" << cfg.hp.pretrain_tasks << ":" << cfg.hp.pretrain_meta_batch;
  k << "|shot:" << cfg.stream.n_shot << ":" << cfg.stream.n_query;
  k << "|seed:" << seed;
  return k.str();
}

bool load_params_bin(const std::string &path, netcore::ParamSet &p) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  uint64_t n = 0;
  in.read(reinterpret_cast<char *>(&n), sizeof(n));
  if (!in || n != p.values.size()) return false;
  in.read(reinterpret_cast<char *>(p.values.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  return static_cast<bool>(in);
}

void save_params_bin(const std::string &path, const netcore::ParamSet &p) {
  std::ostringstream buf;
  const uint64_t n = p.values.size();
  buf.write(reinterpret_cast<const char *>(&n), sizeof(n));
  buf.write(reinterpret_cast<const char *>(p.values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  write_file_atomic(path, buf.str());
}

// Pretrained meta parameters for one seed, cached on disk.
netcore::ParamSet pretrained_theta0(const ExperimentConfig &cfg, int seed_index) {
  const uint64_t seed = cfg.stream.seed + static_cast<uint64_t>(seed_index);
  netcore::ParamSet theta = netcore::zeros_like(cfg.net);
  const std::string dir = cfg.output_dir + "/cache";
  fs::create_directories(dir);
  char hex[24];
  std::snprintf(hex, sizeof(hex), "%016" PRIx64, fnv1a(pretrain_cache_key(cfg, seed)));
  const std::string path = dir + "/theta0_" + hex + ".bin";
  if (load_params_bin(path, theta)) return theta;
  Rng rng = Rng::from_stream(seed, 1000);
  theta = learner::pretrain_maml(cfg.stream.pretrain_domain(), cfg.net, cfg.hp,
                                 cfg.stream.n_shot, cfg.stream.n_query, rng);
  save_params_bin(path, theta);
  return theta;
}

detect::DetectorParams detector_for(const ExperimentConfig &cfg, const netcore::ParamSet &theta0,
                                    int seed_index, const RunOverrides &ov) {
  detect::DetectorParams det = cfg.det;
  if (cfg.det_auto) {
    det.delta = cfg.det.delta > 0.0 ? cfg.det.delta : 1.0;
    det.energy_sign = cfg.det.energy_sign;
    det.ell = detect::default_ell(cfg.net.n_classes);
    Rng rng = Rng::from_stream(cfg.stream.seed + static_cast<uint64_t>(seed_index), 2000);
    std::vector<netcore::Matrix> supports;
    supports.reserve(100);
    const auto &pre = cfg.stream.pretrain_domain();
    for (int i = 0; i < 100; ++i) {
      const auto task = stream::sample_task(pre, rng);
      const auto tb = stream::sample_batch(task, cfg.stream.n_shot, 1, pre.sample_noise_sigma, rng);
      supports.push_back(tb.support.inputs);
    }
    det.tau = detect::calibrate_tau(supports, theta0, cfg.net, det.delta, 0.95, det.energy_sign);
  }
  if (ov.ell) det.ell = *ov.ell;
  if (ov.tau) det.tau = *ov.tau;
  return det;
}

std::string episodes_csv(const RunRecord &rec) {
  std::ostringstream out;
  out << "step,truth_switched,truth_domain,detected_switch,detected_ood,support_loss,"
         "query_loss,query_acc,branch_taken\n";
  for (const auto &o : rec.outcomes)
    out << o.step << ',' << (o.truth_switched ? 1 : 0) << ',' << o.truth_domain_id << ','
        << (o.detected_switch ? 1 : 0) << ',' << (o.detected_ood ? 1 : 0) << ','
        << fmt(o.support_loss) << ',' << fmt(o.query_loss) << ',' << fmt(o.query_accuracy) << ','
        << learner::to_string(o.branch) << '\n';
  return out.str();
}

struct SeedStats {
  double overall_acc = 0.0;
  double pretrain_acc = 0.0;
  std::map<int, double> ood_acc;
  double precision = 0.0;
  double recall = 0.0;
};

SeedStats seed_stats(const ExperimentConfig &cfg, const RunRecord &rec) {
  SeedStats st;
  const int pre_id = cfg.stream.pretrain_domain().domain_id;
  std::map<int, std::pair<double, long>> by_domain;
  double total = 0.0;
  for (const auto &o : rec.outcomes) {
    total += o.query_accuracy;
    auto &e = by_domain[o.truth_domain_id];
    e.first += o.query_accuracy;
    e.second += 1;
  }
  st.overall_acc = total / static_cast<double>(rec.outcomes.size());
  for (const auto &[id, e] : by_domain) {
    const double acc = e.first / static_cast<double>(e.second);
    if (id == pre_id)
      st.pretrain_acc = acc;
    else
      st.ood_acc[id] = acc;
  }
  const auto pr = precision_recall(rec);
  st.precision = pr.precision;
  st.recall = pr.recall;
  return st;
}

struct Job {
  Mode mode;
  int seed_index;
};

} // namespace

detect::DetectorParams calibrate_detector(const ExperimentConfig &cfg, int seed_index) {
  const auto theta0 = pretrained_theta0(cfg, seed_index);
  return detector_for(cfg, theta0, seed_index, {});
}

ExperimentResult run_experiment(const ExperimentConfig &cfg, const RunOverrides &ov) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);

  // theta0 shared across modes per seed
  std::vector<netcore::ParamSet> theta0(cfg.n_seeds);
  std::vector<detect::DetectorParams> det(cfg.n_seeds);
  for (int s = 0; s < cfg.n_seeds; ++s) {
    theta0[s] = pretrained_theta0(cfg, s);
    det[s] = detector_for(cfg, theta0[s], s, ov);
  }

  std::vector<Job> jobs;
  for (auto m : cfg.modes)
    for (int s = 0; s < cfg.n_seeds; ++s) jobs.push_back({m, s});
  std::vector<SeedStats> stats(jobs.size());
  std::vector<std::string> files(jobs.size());

  auto run_job = [&](std::size_t ji) {
    const Job &job = jobs[ji];
    learner::LearnerState init;
    init.meta = theta0[job.seed_index];
    init.online = theta0[job.seed_index];
    init.det = det[job.seed_index];
    init.mode = job.mode;

    stream::StreamConfig scfg = cfg.stream;
    scfg.seed = cfg.stream.seed + static_cast<uint64_t>(job.seed_index);
    Rng stream_rng(scfg.seed);

    const std::string base = cfg.output_dir + "/episodes_" + learner::to_string(job.mode) +
                             "_seed" + std::to_string(job.seed_index);
    const std::string csv_path = base + ".csv";

    const auto rec =
        learner::run_stream(init, scfg, cfg.n_steps, cfg.net, cfg.hp, stream_rng, {});
    write_file_atomic(csv_path, episodes_csv(rec));

    json header;
    header["version"] = kVersion;
    header["mode"] = learner::to_string(job.mode);
    header["seed_index"] = job.seed_index;
    header["stream_seed"] = scfg.seed;
    header["det"] = {{"ell", det[job.seed_index].ell},
                     {"tau", det[job.seed_index].tau},
                     {"delta", det[job.seed_index].delta}};
    header["config"] = to_json(cfg);
    write_file_atomic(base + ".json", header.dump(2) + "\n");

    stats[ji] = seed_stats(cfg, rec);
    files[ji] = csv_path;
  };

  // bounded worker pool; each worker owns whole runs
  {
    std::atomic<std::size_t> next{0};
    const unsigned n_workers =
        std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                           static_cast<unsigned>(jobs.size()));
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(n_workers);
    for (unsigned w = 0; w < n_workers; ++w)
      workers.emplace_back([&, w] {
        try {
          for (std::size_t ji = next.fetch_add(1); ji < jobs.size(); ji = next.fetch_add(1))
            run_job(ji);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto &t : workers) t.join();
    for (auto &e : errors)
      if (e) std::rethrow_exception(e);
  }

  // aggregate per mode
  ExperimentResult result;
  result.episode_files = files;
  std::set<int> ood_ids;
  for (const auto &d : cfg.stream.domains)
    if (!d.is_pretrain) ood_ids.insert(d.domain_id);

  for (std::size_t mi = 0; mi < cfg.modes.size(); ++mi) {
    ModeMetrics mm;
    mm.mode = learner::to_string(cfg.modes[mi]);
    mm.seed_count = cfg.n_seeds;
    std::vector<double> overall;
    for (int s = 0; s < cfg.n_seeds; ++s) {
      const auto &st = stats[mi * cfg.n_seeds + s];
      overall.push_back(st.overall_acc);
      mm.pretrain_acc_mean += st.pretrain_acc / cfg.n_seeds;
      for (int id : ood_ids) {
        const auto it = st.ood_acc.find(id);
        mm.ood_acc_mean[id] += (it != st.ood_acc.end() ? it->second : 0.0) / cfg.n_seeds;
      }
      mm.precision_mean += st.precision / cfg.n_seeds;
      mm.recall_mean += st.recall / cfg.n_seeds;
    }
    double mean = 0.0;
    for (double v : overall) mean += v / overall.size();
    double var = 0.0;
    for (double v : overall) var += (v - mean) * (v - mean) / overall.size();
    mm.overall_acc_mean = mean;
    mm.overall_acc_std = std::sqrt(var);
    mm.overall_acc_per_seed = overall;
    result.per_mode.push_back(std::move(mm));
  }

  // summary.csv
  std::ostringstream csv;
  csv << "mode,seed_count,overall_acc_mean,overall_acc_std,pretrain_acc_mean";
  for (int id : ood_ids) csv << ",ood" << id << "_acc_mean";
  csv << ",precision_mean,recall_mean\n";
  for (const auto &mm : result.per_mode) {
    csv << mm.mode << ',' << mm.seed_count << ',' << fmt(mm.overall_acc_mean) << ','
        << fmt(mm.overall_acc_std) << ',' << fmt(mm.pretrain_acc_mean);
    for (int id : ood_ids) csv << ',' << fmt(mm.ood_acc_mean.at(id));
    csv << ',' << fmt(mm.precision_mean) << ',' << fmt(mm.recall_mean) << '\n';
  }
  write_file_atomic(cfg.output_dir + "/summary.csv", csv.str());

  json summary;
  summary["version"] = kVersion;
  summary["modes"] = json::array();
  for (const auto &mm : result.per_mode) {
    json m;
    m["mode"] = mm.mode;
    m["seed_count"] = mm.seed_count;
    m["overall_acc_mean"] = mm.overall_acc_mean;
    m["overall_acc_std"] = mm.overall_acc_std;
    m["pretrain_acc_mean"] = mm.pretrain_acc_mean;
    for (const auto &[id, v] : mm.ood_acc_mean) m["ood" + std::to_string(id) + "_acc_mean"] = v;
    m["precision_mean"] = mm.precision_mean;
    m["recall_mean"] = mm.recall_mean;
    summary["modes"].push_back(std::move(m));
  }
  write_file_atomic(cfg.output_dir + "/summary.json", summary.dump(2) + "\n");
  return result;
}

void sweep(const ExperimentConfig &cfg, const std::string &param_name,
           const std::vector<double> &values, const std::string &out_path) {
  if (param_name != "ell" && param_name != "tau" && param_name != "delta" &&
      param_name != "p_stay")
    throw std::invalid_argument("sweep: param must be one of ell, tau, delta, p_stay");

  std::set<int> ood_ids;
  for (const auto &d : cfg.stream.domains)
    if (!d.is_pretrain) ood_ids.insert(d.domain_id);

  std::ostringstream csv;
  csv << "param,value,mode,seed_count,overall_acc_mean,overall_acc_std,pretrain_acc_mean";
  for (int id : ood_ids) csv << ",ood" << id << "_acc_mean";
  csv << ",precision_mean,recall_mean,error\n";

  for (double v : values) {
    ExperimentConfig c = cfg;
    RunOverrides ov;
    std::string err;
    if (param_name == "ell") {
      if (v > 0.0)
        ov.ell = v;
      else
        err = "ell must be > 0";
    } else if (param_name == "tau") {
      ov.tau = v;
    } else if (param_name == "delta") {
      if (v > 0.0)
        c.det.delta = v;
      else
        err = "delta must be > 0";
    } else { // p_stay
      if (v > 0.0 && v < 1.0)
        c.stream.p_stay = v;
      else
        err = "p_stay must be strictly inside (0,1)";
    }
    if (!err.empty()) {
      csv << param_name << ',' << fmt(v) << ",,,,,,";
      for (std::size_t i = 0; i < ood_ids.size(); ++i) csv << ',';
      csv << err << '\n';
      continue;
    }
    c.output_dir = cfg.output_dir + "/sweep_" + param_name + "_" + fmt(v);
    const auto res = run_experiment(c, ov);
    for (const auto &mm : res.per_mode) {
      csv << param_name << ',' << fmt(v) << ',' << mm.mode << ',' << mm.seed_count << ','
          << fmt(mm.overall_acc_mean) << ',' << fmt(mm.overall_acc_std) << ','
          << fmt(mm.pretrain_acc_mean);
      for (int id : ood_ids) csv << ',' << fmt(mm.ood_acc_mean.at(id));
      csv << ',' << fmt(mm.precision_mean) << ',' << fmt(mm.recall_mean) << ",\n";
    }
  }
  write_file_atomic(out_path, csv.str());
}

namespace {

json check_entry(const std::string &name, double measured, double target, bool pass) {
  return {{"name", name}, {"measured", measured}, {"target", target}, {"pass", pass}};
}

} // namespace

int run_theory_checks(const ExperimentConfig &cfg, const std::string &out_path) {
  theory::TheoryConfig tc;
  if (cfg.theory) {
    tc = *cfg.theory;
  } else {
    tc.M_clip = 2.0 * std::log(static_cast<double>(cfg.net.n_classes));
  }
  tc.validate();

  json checks = json::array();
  int failed = 0;
  auto add = [&](const std::string &name, double measured, double target, bool pass) {
    checks.push_back(check_entry(name, measured, target, pass));
    if (!pass) ++failed;
  };

  // contraction: closed-form vs empirical on random (mu, beta, alpha)
  {
    Rng rng(71);
    double max_diff = 0.0;
    for (int i = 0; i < 50; ++i) {
      const double mu = rng.uniform(0.2, 1.0);
      const double beta = mu + rng.uniform(0.0, 2.0);
      const double alpha = rng.uniform(0.05, 1.95) / beta;
      const auto cr = theory::contraction_ratio(mu, beta, alpha, 4, rng);
      max_diff = std::max(max_diff, std::abs(cr.empirical_rho - cr.closed_form_rho));
    }
    add("contraction_closed_vs_empirical", max_diff, 1e-8, max_diff < 1e-8);
  }

  // chained decay on one quadratic
  {
    Rng rng(72);
    const double mu = 0.5, beta = 2.0, alpha = 0.5;
    const double rho = std::max(std::abs(1.0 - alpha * mu), std::abs(1.0 - alpha * beta));
    const int dim = 8;
    std::vector<double> spec(dim);
    spec[0] = mu;
    spec[dim - 1] = beta;
    for (int i = 1; i < dim - 1; ++i) spec[i] = rng.uniform(mu, beta);
    std::vector<double> center = rng.normal_vec(dim);
    std::vector<double> phi = rng.normal_vec(dim);
    double d0 = 0.0;
    for (int i = 0; i < dim; ++i) d0 += (phi[i] - center[i]) * (phi[i] - center[i]);
    d0 = std::sqrt(d0);
    double worst = 0.0;
    for (int k = 1; k <= 20; ++k) {
      for (int i = 0; i < dim; ++i) phi[i] -= alpha * spec[i] * (phi[i] - center[i]);
      double dk = 0.0;
      for (int i = 0; i < dim; ++i) dk += (phi[i] - center[i]) * (phi[i] - center[i]);
      dk = std::sqrt(dk);
      worst = std::max(worst, dk / (std::pow(rho, k) * d0));
    }
    add("contraction_chained_decay", worst, 1.0 + 1e-8, worst <= 1.0 + 1e-8);
  }

  // Hoeffding dominance on the configured stream
  {
    Rng rng(73);
    const auto theta0 = pretrained_theta0(cfg, 0);
    for (int S : {4, 8, 16, 32}) {
      const long trials = 10000;
      auto rep = theory::empirical_detection_error(cfg.stream, cfg.net, theta0, cfg.hp.alpha1, S,
                                                   trials, tc, rng);
      theory::TheoryConfig bc = tc;
      bc.ell_m = rep.ell_m;
      bc.ell_p = std::min(rep.ell_p, tc.M_clip);
      const double bound = theory::hoeffding_bound(S, bc);
      const double slack = 3.0 * std::sqrt(bound / static_cast<double>(trials));
      add("hoeffding_dominance_S" + std::to_string(S), rep.rate, bound + slack,
          rep.regime_ok && rep.rate <= bound + slack);
    }
  }

  // Theorem-1 behavior on quadratics, >= 20 seeds each
  {
    const int dim = 6;
    const std::vector<double> base(dim, 1.5);
    const double mu = 1.0, beta = 2.0, alpha = 0.5;
    auto mean_tar = [&](int T, double spread, bool det_on, double &det_err) {
      double tar = 0.0;
      det_err = 0.0;
      const int seeds = 20;
      for (int s = 0; s < seeds; ++s) {
        Rng rng(1234 + static_cast<uint64_t>(s));
        const auto fam =
            theory::make_quad_family(dim, T, spread, base, mu, beta, alpha, 10.0, rng);
        const auto rep =
            theory::theory_run(fam, tc, theory::default_meta_schedule(), det_on, rng);
        tar += rep.tar / seeds;
        det_err += rep.detection_error / seeds;
      }
      return tar;
    };
    double dummy;
    const double tar20 = mean_tar(20, 0.0, false, dummy);
    const double tar200 = mean_tar(200, 0.0, false, dummy);
    add("tar_decay_zero_variance", tar200, 0.5 * tar20, tar200 < 0.5 * tar20);

    const double p200 = mean_tar(200, 1.0, false, dummy);
    const double p400 = mean_tar(400, 1.0, false, dummy);
    add("tar_plateau", std::abs(p400 - p200), 0.1 * p200, std::abs(p400 - p200) < 0.1 * p200);

    double e_lo, e_mid, e_hi;
    const double t_lo = mean_tar(300, 0.5, true, e_lo);
    const double t_mid = mean_tar(300, 1.0, true, e_mid);
    const double t_hi = mean_tar(300, 2.0, true, e_hi);
    add("tradeoff_tar_increases_with_spread", t_hi - t_lo, 0.0,
        t_lo < t_mid && t_mid < t_hi);
    add("tradeoff_detection_error_decreases_with_spread", e_lo - e_hi, 0.0,
        e_lo >= e_mid && e_mid >= e_hi);
  }

  json report;
  report["version"] = kVersion;
  report["checks"] = checks;
  report["failed"] = failed;
  write_file_atomic(out_path, report.dump(2) + "\n");
  return failed;
}

} // namespace leeds::harness
