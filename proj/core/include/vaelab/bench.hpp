#pragma once

// Experiment configuration, persistence (checkpoints, IDX files, CSV) and the
// experiment drivers behind the command-line tool.

#include "vaelab/manifolds.hpp"
#include "vaelab/models.hpp"
#include "vaelab/probes.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace vaelab {

enum class ExperimentKind { phase, prune, covstats, mnist, selftest };
enum class Scale { desk, paper };

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);
Scale scale_from_string(const std::string& name);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::selftest;

  // data
  Index d = 30;
  Index n = 2000;
  Index generator_hidden1 = 64;
  Index generator_hidden2 = 64;
  std::vector<Index> kappas{2, 6, 10};
  std::vector<double> nus{0.1, 0.3, 0.5};
  bool fit_inverse = true;
  int inverse_epochs = 500;

  // networks
  Index latent = 20;
  std::vector<Index> encoder_hidden{64, 64};
  std::vector<Index> decoder_hidden{64, 64};
  Index prune_width = 64;                       // hidden width in the prune grid
  std::vector<int> encoder_depths{0, 1, 2, 3};  // prune grid over N_e
  std::vector<int> decoder_depths{0, 1, 2, 3};  // prune grid over N_d
  bool latent_equals_kappa = false;             // covstats: latent = kappa_true
  std::vector<std::string> models{"vae", "ae_l2", "ae_l1", "rpca"};

  TrainConfig train;
  double c2_ae_l2 = 1e3;
  double c2_ae_l1 = 100.0;
  std::vector<int> taus{1, 5};  // mnist

  double rpca_lambda = 0.0;  // <= 0: 1 / sqrt(max(d, n))
  int rpca_max_iterations = 1000;

  std::filesystem::path mnist_dir;
  std::string mnist_images = "train-images-idx3-ubyte";

  int repeats = 1;
  std::uint64_t seed = 0;
  int workers = 1;
  std::filesystem::path out_dir = "out";
  bool save_checkpoints = true;
  Scale scale = Scale::desk;

  void validate() const;
};

/// Defaults for an experiment kind at the given scale.
ExperimentConfig default_config(ExperimentKind kind, Scale scale = Scale::desk);

/// Applies `key = value` lines to `cfg`. Blank lines and lines starting with
/// '#' are skipped. A `[name]` line opens a section; keys inside apply only
/// when name is "common" or matches cfg.kind. Lists are comma separated.
/// Unknown keys and malformed values raise std::invalid_argument with the
/// line number.
void apply_config(std::istream& in, ExperimentConfig& cfg);
void apply_config_file(const std::filesystem::path& path, ExperimentConfig& cfg);

/// One key/value assignment, same rules as a config line.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

struct ResultRow {
  std::string experiment;
  Index kappa = 0;
  double nu = 0.0;
  std::string model;
  std::uint64_t seed = 0;
  std::optional<double> nmse;
  std::optional<Index> nonzero_columns;
  std::optional<double> frac_var_below_01;
  double seconds = 0.0;
  bool converged = true;
  std::string error;  // non-empty when the cell failed
};

struct HistogramRow {
  std::string experiment;
  Index kappa = 0;
  double nu = 0.0;
  std::string model;
  std::uint64_t seed = 0;
  double bin_left = 0.0;
  double bin_right = 0.0;
  std::int64_t count = 0;
};

/// One value of a sorted per-model vector (W1 column norms, mean latent variances).
struct SeriesRow {
  std::string experiment;
  Index kappa = 0;
  double nu = 0.0;
  std::string model;
  std::uint64_t seed = 0;
  Index rank = 0;
  double value = 0.0;
};

struct GroundTruthRow {
  Index kappa = 0;
  std::uint64_t seed = 0;
  Index check_rank = 0;
  double low_rank_residual = 0.0;
  double inverse_error = 0.0;
  double inverse_heldout_error = 0.0;
  bool inverse_converged = false;
};

/// Mean nonzero-column count over repeats for one (N_e, N_d) cell.
struct PruneSummaryRow {
  Index kappa = 0;
  double nu = 0.0;
  std::string model;
  int encoder_depth = 0;
  int decoder_depth = 0;
  double mean_nonzero = 0.0;
  int repeats = 0;
};

struct ExperimentOutput {
  std::vector<ResultRow> results;
  std::vector<PruneSummaryRow> prune_summary;
  std::vector<HistogramRow> histograms;
  std::vector<SeriesRow> norms;
  std::vector<SeriesRow> sigma_means;
  std::vector<GroundTruthRow> ground_truth;

  void append(ExperimentOutput&& other);
  /// Sorts every table by (experiment, kappa, nu, model, seed, ...).
  void sort();
};

ExperimentOutput run_phase_transition(const ExperimentConfig& cfg);
ExperimentOutput run_pruning_study(const ExperimentConfig& cfg);
ExperimentOutput run_covariance_study(const ExperimentConfig& cfg);
ExperimentOutput run_mnist_denoise(const ExperimentConfig& cfg);
ExperimentOutput run_selftest(const ExperimentConfig& cfg);
ExperimentOutput run_experiment(const ExperimentConfig& cfg);

/// CSV text of each table. With include_timing = false the seconds column is
/// left empty so outputs of repeated runs can be compared byte for byte.
std::string results_csv(const std::vector<ResultRow>& rows, bool include_timing = true);
std::string histograms_csv(const std::vector<HistogramRow>& rows);
std::string series_csv(const std::vector<SeriesRow>& rows);
std::string ground_truth_csv(const std::vector<GroundTruthRow>& rows);
std::string prune_summary_csv(const std::vector<PruneSummaryRow>& rows);

/// Writes results.csv, histograms.csv, norms.csv, sigma_means.csv,
/// ground_truth.csv and prune_summary.csv into dir (created if missing).
void write_outputs(const ExperimentOutput& out, const std::filesystem::path& dir);

// Checkpoints

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> data;

  bool operator==(const NamedArray&) const = default;
};

/// "VAEC", u32 version (1), u32 array count, then per array: u32 name length,
/// UTF-8 name, u32 ndim, u64 dims, f64 data. All integers and floats little endian.
void save_checkpoint(const std::vector<NamedArray>& arrays, const std::filesystem::path& path);
std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path);

NamedArray matrix_array(const std::string& name, const DenseMatrix& m);
DenseMatrix array_matrix(const NamedArray& a);

std::vector<NamedArray> model_arrays(const GenerativeModel& model);
GenerativeModel model_from_arrays(const std::vector<NamedArray>& arrays);
std::vector<NamedArray> ground_truth_arrays(const GroundTruth& gt);

// IDX files

struct IdxData {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> values;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Parses an unsigned-byte IDX file. When expected_magic is nonzero the
/// header must carry it. Errors report the byte offset of the problem.
IdxData load_idx(const std::filesystem::path& path, std::uint32_t expected_magic = 0);

}  // namespace vaelab
