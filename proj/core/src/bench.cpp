#include "vaelab/bench.hpp"

#include "vaelab/rpca.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace vaelab {
namespace {

using Clock = std::chrono::steady_clock;

std::string nu_label(double nu) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", nu);
  return buf;
}

std::string file_safe(std::string s) {
  for (char& c : s)
    if (c == '[' || c == ']' || c == '=' || c == ',' || c == '/') c = '_';
  return s;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

/// Runs every task on `workers` threads. Tasks report their own failures.
void run_tasks(const std::vector<std::function<void()>>& tasks, int workers) {
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) tasks[i]();
  };
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), tasks.size());
  if (count <= 1) {
    loop();
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(loop);
  for (auto& t : pool) t.join();
}

std::uint64_t cell_seed(const ExperimentConfig& cfg, int repeat) {
  return cfg.seed + static_cast<std::uint64_t>(repeat);
}

std::string cell_label(Index kappa, double nu, const std::string& model) {
  return "k" + std::to_string(kappa) + "/nu" + nu_label(nu) + "/" + model;
}

std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, const std::string& experiment, Index kappa,
                                      double nu, const std::string& model, std::uint64_t seed) {
  return cfg.out_dir / "ckpt" /
         (experiment + "_k" + std::to_string(kappa) + "_nu" + nu_label(nu) + "_" + file_safe(model) + "_s" +
          std::to_string(seed) + ".vaec");
}

double c2_for(const ExperimentConfig& cfg, ModelKind kind) {
  if (kind == ModelKind::ae_l2) return cfg.c2_ae_l2;
  if (kind == ModelKind::ae_l1) return cfg.c2_ae_l1;
  return cfg.train.c2;
}

/// Ground truth per (kappa, repeat), shared by every nu and model.
class GroundTruthSet {
 public:
  GroundTruthSet(const ExperimentConfig& cfg, ExperimentOutput& out) {
    std::vector<std::pair<Index, int>> keys;
    for (Index k : cfg.kappas)
      for (int r = 0; r < cfg.repeats; ++r) keys.emplace_back(k, r);
    std::vector<std::function<void()>> tasks;
    std::mutex mu;
    for (const auto& key : keys) {
      tasks.push_back([&, key] {
        auto [kappa, repeat] = key;
        const std::uint64_t seed = cell_seed(cfg, repeat);
        GeneratorConfig g;
        g.kappa = kappa;
        g.hidden1 = cfg.generator_hidden1;
        g.hidden2 = cfg.generator_hidden2;
        g.d = cfg.d;
        g.n = cfg.n;
        g.seed = RngStream(seed, "ground_truth/k" + std::to_string(kappa)).key();
        Entry e;
        try {
          auto gt = std::make_shared<GroundTruth>(gen_ground_truth(g));
          if (cfg.fit_inverse) {
            InverseFitConfig inv;
            inv.max_epochs = cfg.inverse_epochs;
            fit_inverse_encoder(*gt, inv);
          }
          if (cfg.save_checkpoints) {
            save_checkpoint(ground_truth_arrays(*gt), cfg.out_dir / "ckpt" /
                                                          ("ground_truth_k" + std::to_string(kappa) + "_s" +
                                                           std::to_string(seed) + ".vaec"));
          }
          e.gt = std::move(gt);
        } catch (const std::exception& ex) {
          e.error = ex.what();
        }
        std::lock_guard lock(mu);
        entries_[key] = std::move(e);
      });
    }
    run_tasks(tasks, cfg.workers);
    for (const auto& [key, e] : entries_) {
      if (!e.gt) continue;
      GroundTruthRow row;
      row.kappa = key.first;
      row.seed = cell_seed(cfg, key.second);
      row.check_rank = e.gt->low_rank.rank;
      row.low_rank_residual = e.gt->low_rank.residual;
      row.inverse_error = e.gt->inverse_error;
      row.inverse_heldout_error = e.gt->inverse_heldout_error;
      row.inverse_converged = e.gt->inverse_converged;
      out.ground_truth.push_back(row);
    }
  }

  /// The ground truth for (kappa, repeat); throws with the generation error.
  const GroundTruth& get(Index kappa, int repeat) const {
    const auto& e = entries_.at({kappa, repeat});
    if (!e.gt) throw std::runtime_error("ground truth unavailable: " + e.error);
    return *e.gt;
  }

 private:
  struct Entry {
    std::shared_ptr<const GroundTruth> gt;
    std::string error;
  };
  std::map<std::pair<Index, int>, Entry> entries_;
};

struct Cell {
  std::string experiment;
  Index kappa = 0;
  double nu = 0.0;
  std::string model;
  int repeat = 0;
};

ResultRow blank_row(const ExperimentConfig& cfg, const Cell& c) {
  ResultRow r;
  r.experiment = c.experiment;
  r.kappa = c.kappa;
  r.nu = c.nu;
  r.model = c.model;
  r.seed = cell_seed(cfg, c.repeat);
  return r;
}

CorruptedData corrupted_for(const ExperimentConfig& cfg, const DenseMatrix& l, const Cell& c, CorruptionMode mode) {
  const std::uint64_t seed = cell_seed(cfg, c.repeat);
  return corrupt(l, c.nu, mode, RngStream(seed, "corruption/k" + std::to_string(c.kappa)).key());
}

struct TrainedCell {
  GenerativeModel model;
  TrainHistory history;
};

TrainedCell train_cell(const ExperimentConfig& cfg, const Cell& c, ModelKind kind, const DenseMatrix& x,
                       Index latent, const std::vector<Index>& enc, const std::vector<Index>& dec, int tau) {
  const std::uint64_t seed = cell_seed(cfg, c.repeat);
  const std::string label = cell_label(c.kappa, c.nu, c.model);
  Architecture arch{x.rows(), latent, enc, dec};
  TrainedCell out{make_model(kind, arch, RngStream(seed, "model/" + label)), {}};
  TrainConfig t = cfg.train;
  t.c2 = c2_for(cfg, kind);
  t.tau = tau;
  t.seed = RngStream(seed, "train/" + label).key();
  out.history = train(out.model, x, t);
  return out;
}

bool history_improved(const TrainHistory& h) {
  if (h.objective.empty()) return false;
  for (double v : h.objective)
    if (!std::isfinite(v)) return false;
  return h.objective.back() < h.objective.front() || h.objective.size() == 1;
}

void maybe_save(const ExperimentConfig& cfg, const Cell& c, const GenerativeModel& model) {
  if (!cfg.save_checkpoints) return;
  save_checkpoint(model_arrays(model),
                  checkpoint_path(cfg, c.experiment, c.kappa, c.nu, c.model, cell_seed(cfg, c.repeat)));
}

ResultRow run_rpca_cell(const ExperimentConfig& cfg, const Cell& c, const DenseMatrix& x, const DenseMatrix& l) {
  ResultRow r = blank_row(cfg, c);
  RpcaOptions opts;
  opts.lambda = cfg.rpca_lambda;
  opts.max_iterations = cfg.rpca_max_iterations;
  const Decomposition dec = rpca_alm(x, opts);
  r.nmse = nmse(l, dec.l);
  r.converged = dec.converged;
  return r;
}

/// Collects rows from concurrent cells and turns exceptions into error rows.
class Collector {
 public:
  explicit Collector(const ExperimentConfig& cfg) : cfg_(cfg) {}

  void run(const Cell& c, const std::function<void(ResultRow&, ExperimentOutput&)>& body) {
    ExperimentOutput local;
    ResultRow row = blank_row(cfg_, c);
    const auto start = Clock::now();
    try {
      body(row, local);
    } catch (const std::exception& e) {
      row = blank_row(cfg_, c);
      row.converged = false;
      row.error = e.what();
      local = ExperimentOutput{};
    }
    row.seconds = seconds_since(start);
    local.results.push_back(std::move(row));
    std::lock_guard lock(mu_);
    out_.append(std::move(local));
  }

  ExperimentOutput take() {
    out_.sort();
    return std::move(out_);
  }

 private:
  const ExperimentConfig& cfg_;
  std::mutex mu_;
  ExperimentOutput out_;
};

void require_models(const ExperimentConfig& cfg, bool allow_rpca) {
  for (const auto& m : cfg.models) {
    if (m == "rpca") {
      if (!allow_rpca) throw std::invalid_argument("model 'rpca' is not available in this experiment");
      continue;
    }
    model_kind_from_string(m);
  }
}

}  // namespace

ExperimentOutput run_phase_transition(const ExperimentConfig& cfg) {
  cfg.validate();
  require_models(cfg, true);
  ExperimentOutput gt_rows;
  const GroundTruthSet truths(cfg, gt_rows);
  Collector collect(cfg);
  std::vector<std::function<void()>> tasks;
  for (Index kappa : cfg.kappas) {
    for (double nu : cfg.nus) {
      for (int rep = 0; rep < cfg.repeats; ++rep) {
        for (const auto& name : cfg.models) {
          Cell c{"phase", kappa, nu, name, rep};
          tasks.push_back([&, c] {
            collect.run(c, [&](ResultRow& row, ExperimentOutput&) {
              const GroundTruth& gt = truths.get(c.kappa, c.repeat);
              const CorruptedData data = corrupted_for(cfg, gt.l, c, CorruptionMode::gaussian_unit);
              if (c.model == "rpca") {
                row = run_rpca_cell(cfg, c, data.x, gt.l);
                return;
              }
              const ModelKind kind = model_kind_from_string(c.model);
              TrainedCell t = train_cell(cfg, c, kind, data.x, cfg.latent, cfg.encoder_hidden, cfg.decoder_hidden,
                                         cfg.train.tau);
              row.nmse = nmse(gt.l, reconstruct(t.model, data.x));
              row.nonzero_columns = count_nonzero_columns(t.model.decoder.layers()[0].weight).nonzero;
              if (kind == ModelKind::vae) row.frac_var_below_01 = sigma_z_stats(t.model, data.x).fraction_below_01;
              row.converged = history_improved(t.history);
              maybe_save(cfg, c, t.model);
            });
          });
        }
      }
    }
  }
  run_tasks(tasks, cfg.workers);
  ExperimentOutput out = collect.take();
  out.append(std::move(gt_rows));
  out.sort();
  return out;
}

ExperimentOutput run_pruning_study(const ExperimentConfig& cfg) {
  cfg.validate();
  require_models(cfg, false);
  ExperimentOutput gt_rows;
  const GroundTruthSet truths(cfg, gt_rows);
  Collector collect(cfg);
  std::vector<std::function<void()>> tasks;

  struct Key {
    Index kappa;
    double nu;
    std::string model;
    int ne, nd;
    bool operator<(const Key& o) const {
      return std::tie(kappa, nu, model, ne, nd) < std::tie(o.kappa, o.nu, o.model, o.ne, o.nd);
    }
  };
  std::map<std::string, Key> key_of;  // cell model name -> grid key

  for (Index kappa : cfg.kappas) {
    for (double nu : cfg.nus) {
      for (const auto& name : cfg.models) {
        for (int ne : cfg.encoder_depths) {
          for (int nd : cfg.decoder_depths) {
            const std::string cell_name =
                name + "[ne=" + std::to_string(ne) + ",nd=" + std::to_string(nd) + "]";
            key_of.emplace(cell_name, Key{0, 0.0, name, ne, nd});
            for (int rep = 0; rep < cfg.repeats; ++rep) {
              Cell c{"prune", kappa, nu, cell_name, rep};
              tasks.push_back([&, c, name, ne, nd] {
                collect.run(c, [&](ResultRow& row, ExperimentOutput& local) {
                  const GroundTruth& gt = truths.get(c.kappa, c.repeat);
                  const CorruptedData data = corrupted_for(cfg, gt.l, c, CorruptionMode::gaussian_unit);
                  const std::vector<Index> enc(static_cast<std::size_t>(ne), cfg.prune_width);
                  const std::vector<Index> dec(static_cast<std::size_t>(nd), cfg.prune_width);
                  const ModelKind kind = model_kind_from_string(name);
                  TrainedCell t = train_cell(cfg, c, kind, data.x, cfg.latent, enc, dec, cfg.train.tau);
                  const PruneReport rep = count_nonzero_columns(t.model.decoder.layers()[0].weight);
                  row.nmse = nmse(gt.l, reconstruct(t.model, data.x));
                  row.nonzero_columns = rep.nonzero;
                  if (kind == ModelKind::vae) {
                    row.frac_var_below_01 = sigma_z_stats(t.model, data.x).fraction_below_01;
                  }
                  row.converged = history_improved(t.history);
                  for (std::size_t i = 0; i < rep.sorted_norms.size(); ++i) {
                    local.norms.push_back({c.experiment, c.kappa, c.nu, c.model, row.seed, static_cast<Index>(i),
                                           rep.sorted_norms[i]});
                  }
                  maybe_save(cfg, c, t.model);
                });
              });
            }
          }
        }
      }
    }
  }
  run_tasks(tasks, cfg.workers);
  ExperimentOutput out = collect.take();

  std::map<Key, std::pair<double, int>> sums;
  for (const auto& r : out.results) {
    if (!r.error.empty() || !r.nonzero_columns) continue;
    Key k = key_of.at(r.model);
    k.kappa = r.kappa;
    k.nu = r.nu;
    auto& s = sums[k];
    s.first += static_cast<double>(*r.nonzero_columns);
    s.second += 1;
  }
  for (const auto& [k, s] : sums) {
    out.prune_summary.push_back({k.kappa, k.nu, k.model, k.ne, k.nd, s.first / s.second, s.second});
  }
  out.append(std::move(gt_rows));
  out.sort();
  return out;
}

ExperimentOutput run_covariance_study(const ExperimentConfig& cfg) {
  cfg.validate();
  require_models(cfg, false);
  ExperimentOutput gt_rows;
  const GroundTruthSet truths(cfg, gt_rows);
  Collector collect(cfg);
  std::vector<std::function<void()>> tasks;
  for (Index kappa : cfg.kappas) {
    for (double nu : cfg.nus) {
      for (int rep = 0; rep < cfg.repeats; ++rep) {
        for (const auto& name : cfg.models) {
          if (model_kind_from_string(name) != ModelKind::vae) {
            throw std::invalid_argument("covstats needs a model with a variance head, got '" + name + "'");
          }
          Cell c{"covstats", kappa, nu, name, rep};
          tasks.push_back([&, c] {
            collect.run(c, [&](ResultRow& row, ExperimentOutput& local) {
              const GroundTruth& gt = truths.get(c.kappa, c.repeat);
              const CorruptedData data = corrupted_for(cfg, gt.l, c, CorruptionMode::gaussian_unit);
              const Index latent = cfg.latent_equals_kappa ? c.kappa : cfg.latent;
              TrainedCell t =
                  train_cell(cfg, c, ModelKind::vae, data.x, latent, cfg.encoder_hidden, cfg.decoder_hidden,
                             cfg.train.tau);
              const SigmaZReport rep = sigma_z_stats(t.model, data.x);
              row.nmse = nmse(gt.l, reconstruct(t.model, data.x));
              row.nonzero_columns = count_nonzero_columns(t.model.decoder.layers()[0].weight).nonzero;
              row.frac_var_below_01 = rep.fraction_below_01;
              row.converged = history_improved(t.history);
              for (std::size_t b = 0; b < rep.histogram.counts.size(); ++b) {
                local.histograms.push_back({c.experiment, c.kappa, c.nu, c.model, row.seed, rep.histogram.edges[b],
                                            rep.histogram.edges[b + 1], rep.histogram.counts[b]});
              }
              for (std::size_t i = 0; i < rep.sorted_means.size(); ++i) {
                local.sigma_means.push_back(
                    {c.experiment, c.kappa, c.nu, c.model, row.seed, static_cast<Index>(i), rep.sorted_means[i]});
              }
              maybe_save(cfg, c, t.model);
            });
          });
        }
      }
    }
  }
  run_tasks(tasks, cfg.workers);
  ExperimentOutput out = collect.take();
  out.append(std::move(gt_rows));
  out.sort();
  return out;
}

ExperimentOutput run_mnist_denoise(const ExperimentConfig& cfg) {
  cfg.validate();
  require_models(cfg, true);
  const std::filesystem::path images = cfg.mnist_dir / cfg.mnist_images;
  if (cfg.mnist_dir.empty() || !std::filesystem::exists(images)) {
    throw std::runtime_error("mnist: expected the IDX image file '" + cfg.mnist_images + "' in '" +
                             cfg.mnist_dir.string() + "' (set mnist_dir / mnist_images)");
  }
  const IdxData idx = load_idx(images, kIdxImagesMagic);
  if (idx.dims.size() != 3) throw std::runtime_error("mnist: image file must have three dimensions");
  const Index rows = static_cast<Index>(idx.dims[1]) * static_cast<Index>(idx.dims[2]);
  if (rows != cfg.d) {
    throw std::runtime_error("mnist: images have " + std::to_string(rows) + " pixels but d = " +
                             std::to_string(cfg.d));
  }
  const Index n = std::min<Index>(cfg.n, static_cast<Index>(idx.dims[0]));
  DenseMatrix l(rows, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < rows; ++i) l(i, j) = idx.values[static_cast<std::size_t>(j * rows + i)] / 255.0;

  std::vector<std::pair<std::string, int>> variants;  // cell name, tau
  for (const auto& m : cfg.models) {
    if (m == "vae") {
      for (int tau : cfg.taus) variants.emplace_back("vae_tau" + std::to_string(tau), tau);
    } else {
      variants.emplace_back(m, 1);
    }
  }

  Collector collect(cfg);
  std::vector<std::function<void()>> tasks;
  for (double nu : cfg.nus) {
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      for (const auto& [name, tau] : variants) {
        Cell c{"mnist", 0, nu, name, rep};
        tasks.push_back([&, c, tau = tau] {
          collect.run(c, [&](ResultRow& row, ExperimentOutput&) {
            const CorruptedData data = corrupted_for(cfg, l, c, CorruptionMode::uniform_0_1);
            if (c.model == "rpca") {
              row = run_rpca_cell(cfg, c, data.x, l);
              return;
            }
            const ModelKind kind = c.model.rfind("vae", 0) == 0 ? ModelKind::vae : model_kind_from_string(c.model);
            TrainedCell t =
                train_cell(cfg, c, kind, data.x, cfg.latent, cfg.encoder_hidden, cfg.decoder_hidden, tau);
            row.nmse = nmse(l, reconstruct(t.model, data.x));
            row.nonzero_columns = count_nonzero_columns(t.model.decoder.layers()[0].weight).nonzero;
            if (kind == ModelKind::vae) row.frac_var_below_01 = sigma_z_stats(t.model, data.x).fraction_below_01;
            row.converged = history_improved(t.history);
            maybe_save(cfg, c, t.model);
          });
        });
      }
    }
  }
  run_tasks(tasks, cfg.workers);
  return collect.take();
}

ExperimentOutput run_selftest(const ExperimentConfig& cfg) {
  ExperimentConfig phase = cfg;
  phase.kind = ExperimentKind::phase;
  ExperimentOutput out = run_phase_transition(phase);

  ExperimentConfig prune = cfg;
  prune.kind = ExperimentKind::prune;
  prune.models.clear();
  for (const auto& m : cfg.models)
    if (m != "rpca") prune.models.push_back(m);
  ExperimentOutput pruned = run_pruning_study(prune);
  pruned.ground_truth.clear();  // same draws as the phase run
  out.append(std::move(pruned));

  ExperimentConfig cov = cfg;
  cov.kind = ExperimentKind::covstats;
  cov.models = {"vae"};
  ExperimentOutput covs = run_covariance_study(cov);
  covs.ground_truth.clear();
  out.append(std::move(covs));

  // Checkpoint round trip on a freshly initialized model.
  ResultRow row;
  row.experiment = "selftest";
  row.model = "checkpoint_roundtrip";
  row.seed = cfg.seed;
  const auto start = Clock::now();
  try {
    const Architecture arch{cfg.d, cfg.latent, cfg.encoder_hidden, cfg.decoder_hidden};
    const GenerativeModel model = make_model(ModelKind::vae, arch, RngStream(cfg.seed, "selftest/checkpoint"));
    const auto path = cfg.out_dir / "ckpt" / "selftest_roundtrip.vaec";
    const auto arrays = model_arrays(model);
    save_checkpoint(arrays, path);
    const auto loaded = load_checkpoint(path);
    if (loaded != arrays) throw std::runtime_error("checkpoint arrays differ after reload");
    const GenerativeModel back = model_from_arrays(loaded);
    const DenseMatrix probe = sample_gaussian(RngStream(cfg.seed, "selftest/probe"), cfg.d, 16);
    if (reconstruct(back, probe) != reconstruct(model, probe)) {
      throw std::runtime_error("reloaded model reconstructs differently");
    }
  } catch (const std::exception& e) {
    row.converged = false;
    row.error = e.what();
  }
  row.seconds = seconds_since(start);
  out.results.push_back(row);
  out.sort();
  return out;
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case ExperimentKind::phase:
      return run_phase_transition(cfg);
    case ExperimentKind::prune:
      return run_pruning_study(cfg);
    case ExperimentKind::covstats:
      return run_covariance_study(cfg);
    case ExperimentKind::mnist:
      return run_mnist_denoise(cfg);
    case ExperimentKind::selftest:
      return run_selftest(cfg);
  }
  throw std::invalid_argument("run_experiment: unknown experiment kind");
}

}  // namespace vaelab
