// Command-line driver for the experiment grids.
//
//   vaelab phase --config grid.ini --out out/phase --workers 1
//   vaelab selftest

#include "vaelab/bench.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
  std::string scale = "desk";
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "key = value file; [common] and [<experiment>] sections")
      ->check(CLI::ExistingFile);
  sub->add_option("--set", o.overrides, "override one key, e.g. --set epochs=50 (repeatable)");
  sub->add_option("--seed", o.seed, "base seed; repeat r uses seed + r");
  sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--out", o.out, "output directory (default out/<experiment>)");
  sub->add_option("--scale", o.scale, "default grid size")->check(CLI::IsMember({"desk", "paper"}));
}

int run(vaelab::ExperimentKind kind, const Options& o) {
  using namespace vaelab;
  ExperimentConfig cfg = default_config(kind, scale_from_string(o.scale));
  cfg.out_dir = std::filesystem::path("out") / to_string(kind);
  if (!o.config.empty()) apply_config_file(o.config, cfg);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (!o.out.empty()) cfg.out_dir = o.out;

  const ExperimentOutput out = run_experiment(cfg);
  write_outputs(out, cfg.out_dir);

  int failed = 0;
  for (const auto& r : out.results) {
    if (!r.error.empty()) {
      ++failed;
      std::fprintf(stderr, "error: %s kappa=%lld nu=%g %s seed=%llu: %s\n", r.experiment.c_str(),
                   static_cast<long long>(r.kappa), r.nu, r.model.c_str(),
                   static_cast<unsigned long long>(r.seed), r.error.c_str());
    }
  }
  std::printf("%zu cells, %d failed; results in %s\n", out.results.size(), failed, cfg.out_dir.string().c_str());
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust VAE / RPCA experiment driver"};
  app.require_subcommand(1);
  Options opts;
  const std::vector<std::pair<vaelab::ExperimentKind, const char*>> kinds = {
      {vaelab::ExperimentKind::phase, "NMSE over (kappa, nu) for VAE, AE and RPCA"},
      {vaelab::ExperimentKind::prune, "decoder column pruning across encoder/decoder depths"},
      {vaelab::ExperimentKind::covstats, "encoder variance histograms"},
      {vaelab::ExperimentKind::mnist, "denoising MNIST images under uniform corruption"},
      {vaelab::ExperimentKind::selftest, "tiny end-to-end run of every driver"},
  };
  std::vector<std::pair<CLI::App*, vaelab::ExperimentKind>> subs;
  for (const auto& [kind, help] : kinds) {
    CLI::App* sub = app.add_subcommand(vaelab::to_string(kind), help);
    add_common(sub, opts);
    subs.emplace_back(sub, kind);
  }
  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& [sub, kind] : subs)
      if (sub->parsed()) return run(kind, opts);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "vaelab: %s\n", e.what());
    return 2;
  }
  return 2;
}
