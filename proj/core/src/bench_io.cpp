#include "vaelab/bench.hpp"

#include <algorithm>
#include <bit>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace vaelab {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  if (trim(value).empty()) return out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + text + "'");
  }
}

long long parse_int(const std::string& key, const std::string& text) {
  long long v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("config: '" + key + "' expects an integer, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("config: '" + key + "' expects an unsigned integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument("config: '" + key + "' expects true or false, got '" + text + "'");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& value, F&& parse_one) {
  std::vector<T> out;
  for (const auto& item : split_list(value)) out.push_back(static_cast<T>(parse_one(item)));
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Little-endian primitives.
void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> bytes) : bytes_(std::move(bytes)) {}

  std::size_t offset() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }

  void need(std::size_t count, const char* what) const {
    if (bytes_.size() - pos_ < count) {
      std::ostringstream msg;
      msg << "truncated at byte offset " << pos_ << ": need " << count << " bytes for " << what << ", "
          << bytes_.size() - pos_ << " remain";
      throw std::runtime_error(msg.str());
    }
  }
  std::uint32_t u32_le(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64_le(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32_be(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::string bytes(std::size_t count, const char* what) {
    need(count, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), count);
    pos_ += count;
    return s;
  }
  const unsigned char* take(std::size_t count, const char* what) {
    need(count, what);
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += count;
    return p;
  }

 private:
  std::vector<unsigned char> bytes_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string() + ": " + std::strerror(errno));
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

constexpr char kMagic[4] = {'V', 'A', 'E', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

int activation_code(Activation a) {
  switch (a) {
    case Activation::relu:
      return 0;
    case Activation::identity:
      return 1;
    case Activation::exponential:
      return 2;
  }
  return 1;
}

Activation activation_from_code(double c) {
  if (c == 0.0) return Activation::relu;
  if (c == 1.0) return Activation::identity;
  if (c == 2.0) return Activation::exponential;
  throw std::runtime_error("checkpoint: unknown activation code " + fmt_short(c));
}

void push_net(std::vector<NamedArray>& out, const std::string& prefix, const MlpNet& net) {
  out.push_back({prefix + ".input_dim", {1}, {static_cast<double>(net.input_dim())}});
  out.push_back({prefix + ".depth", {1}, {static_cast<double>(net.depth())}});
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto& layer = net.layers()[l];
    const std::string p = prefix + "." + std::to_string(l);
    out.push_back(matrix_array(p + ".weight", layer.weight));
    out.push_back({p + ".bias", {static_cast<std::uint64_t>(layer.bias.size())},
                   std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size())});
    out.push_back({p + ".activation", {1}, {static_cast<double>(activation_code(layer.activation))}});
  }
}

const NamedArray& find_array(const std::map<std::string, const NamedArray*>& index, const std::string& name) {
  const auto it = index.find(name);
  if (it == index.end()) throw std::runtime_error("checkpoint: missing array '" + name + "'");
  return *it->second;
}

MlpNet pull_net(const std::map<std::string, const NamedArray*>& index, const std::string& prefix) {
  const auto input_dim = static_cast<Index>(find_array(index, prefix + ".input_dim").data.at(0));
  const auto depth = static_cast<std::size_t>(find_array(index, prefix + ".depth").data.at(0));
  if (depth == 0) return MlpNet(input_dim);
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::string p = prefix + "." + std::to_string(l);
    Layer layer;
    layer.weight = array_matrix(find_array(index, p + ".weight"));
    const auto& bias = find_array(index, p + ".bias");
    layer.bias = Eigen::Map<const Vector>(bias.data.data(), static_cast<Index>(bias.data.size()));
    layer.activation = activation_from_code(find_array(index, p + ".activation").data.at(0));
    layers.push_back(std::move(layer));
  }
  return MlpNet(std::move(layers));
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::phase:
      return "phase";
    case ExperimentKind::prune:
      return "prune";
    case ExperimentKind::covstats:
      return "covstats";
    case ExperimentKind::mnist:
      return "mnist";
    case ExperimentKind::selftest:
      return "selftest";
  }
  return "unknown";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  for (auto k : {ExperimentKind::phase, ExperimentKind::prune, ExperimentKind::covstats, ExperimentKind::mnist,
                 ExperimentKind::selftest}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown experiment '" + name + "' (expected phase, prune, covstats, mnist, selftest)");
}

Scale scale_from_string(const std::string& name) {
  if (name == "desk") return Scale::desk;
  if (name == "paper") return Scale::paper;
  throw std::invalid_argument("unknown scale '" + name + "' (expected desk or paper)");
}

void ExperimentConfig::validate() const {
  if (kappas.empty() || nus.empty()) throw std::invalid_argument("config: kappas and nus must be nonempty");
  if (repeats < 1) throw std::invalid_argument("config: repeats must be >= 1");
  if (workers < 1) throw std::invalid_argument("config: workers must be >= 1");
  if (d < 2 || n < 2 || latent < 1) throw std::invalid_argument("config: d, n >= 2 and latent >= 1 required");
  for (double nu : nus)
    if (nu < 0.0 || nu > 1.0) throw std::invalid_argument("config: every nu must lie in [0, 1]");
  for (Index k : kappas)
    if (k < 1 || k >= d) throw std::invalid_argument("config: every kappa must satisfy 1 <= kappa < d");
  for (const auto& m : models)
    if (m != "rpca") model_kind_from_string(m);
  for (int t : taus)
    if (t < 1) throw std::invalid_argument("config: taus must be >= 1");
  train.validate();
}

ExperimentConfig default_config(ExperimentKind kind, Scale scale) {
  ExperimentConfig c;
  c.kind = kind;
  c.scale = scale;
  c.train.epochs = 200;
  c.train.batch_size = 100;
  c.train.c1 = 5e-4;
  c.train.tau = 1;
  if (scale == Scale::desk) {
    // Desk nets are far smaller than the published ones; these step and floor
    // values reach comparable solutions within 200-400 epochs.
    c.train.learning_rate = 1e-3;
    c.train.alpha = 1e-3;
  } else {
    c.train.learning_rate = 1e-4;
    c.train.alpha = 1e-6;
    c.d = 100;
    c.n = 1000000;
    c.generator_hidden1 = 2000;
    c.generator_hidden2 = 1000;
    c.encoder_hidden = {2000, 1000};
    c.decoder_hidden = {1000, 2000};
    c.kappas = {2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
    c.nus = {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
    c.latent = 50;
  }

  switch (kind) {
    case ExperimentKind::phase:
      if (scale == Scale::desk) {
        c.kappas = {2, 6, 10};
        c.nus = {0.1, 0.3, 0.5};
      }
      break;
    case ExperimentKind::prune:
      c.models = {"vae", "ae_l2"};
      c.c2_ae_l2 = 0.0;
      c.nus = {0.0};
      if (scale == Scale::desk) {
        c.kappas = {5};
        c.latent = 8;
        c.prune_width = 64;
        c.train.alpha = 5e-2;
        c.train.epochs = 400;
      } else {
        c.kappas = {20};
        c.latent = 30;
        c.prune_width = 1000;
      }
      break;
    case ExperimentKind::covstats:
      c.models = {"vae"};
      if (scale == Scale::desk) {
        c.kappas = {2};
        c.nus = {0.0, 0.25, 0.5};
        c.train.alpha = 1e-2;
        c.train.epochs = 400;
      } else {
        c.kappas = {2, 8, 14, 20};
        c.nus = {0.0, 0.25, 0.5};
      }
      break;
    case ExperimentKind::mnist:
      c.models = {"vae", "rpca"};
      c.d = 784;
      c.latent = 30;
      c.nus = {0.25};
      c.kappas = {30};
      c.taus = {1, 5};
      if (scale == Scale::desk) {
        c.n = 10000;
        c.encoder_hidden = {256, 128, 64};
        c.decoder_hidden = {64, 128, 256};
        c.train.epochs = 30;
        c.repeats = 5;
      } else {
        c.n = 70000;
        c.encoder_hidden = {1000, 500, 250};
        c.decoder_hidden = {250, 500, 1000};
      }
      break;
    case ExperimentKind::selftest:
      c.d = 8;
      c.n = 200;
      c.generator_hidden1 = 16;
      c.generator_hidden2 = 16;
      c.kappas = {2};
      c.nus = {0.1};
      c.latent = 4;
      c.encoder_hidden = {16, 16};
      c.decoder_hidden = {16, 16};
      c.prune_width = 16;
      c.encoder_depths = {1};
      c.decoder_depths = {0, 1};
      c.inverse_epochs = 20;
      c.train.epochs = 5;
      c.train.batch_size = 50;
      c.train.learning_rate = 1e-3;
      c.train.alpha = 1e-3;
      c.rpca_max_iterations = 200;
      break;
  }
  return c;
}

void set_config_value(ExperimentConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto as_index = [&](const std::string& s) { return static_cast<Index>(parse_int(key, s)); };
  auto as_int = [&](const std::string& s) { return static_cast<int>(parse_int(key, s)); };
  auto as_double = [&](const std::string& s) { return parse_double(key, s); };

  if (key == "d") c.d = as_index(v);
  else if (key == "n") c.n = as_index(v);
  else if (key == "generator_hidden1") c.generator_hidden1 = as_index(v);
  else if (key == "generator_hidden2") c.generator_hidden2 = as_index(v);
  else if (key == "kappas") c.kappas = parse_list<Index>(v, as_index);
  else if (key == "nus") c.nus = parse_list<double>(v, as_double);
  else if (key == "fit_inverse") c.fit_inverse = parse_bool(key, v);
  else if (key == "inverse_epochs") c.inverse_epochs = as_int(v);
  else if (key == "latent") c.latent = as_index(v);
  else if (key == "encoder_hidden") c.encoder_hidden = parse_list<Index>(v, as_index);
  else if (key == "decoder_hidden") c.decoder_hidden = parse_list<Index>(v, as_index);
  else if (key == "prune_width") c.prune_width = as_index(v);
  else if (key == "encoder_depths") c.encoder_depths = parse_list<int>(v, as_int);
  else if (key == "decoder_depths") c.decoder_depths = parse_list<int>(v, as_int);
  else if (key == "latent_equals_kappa") c.latent_equals_kappa = parse_bool(key, v);
  else if (key == "models") c.models = split_list(v);
  else if (key == "epochs") c.train.epochs = as_int(v);
  else if (key == "batch_size") c.train.batch_size = as_int(v);
  else if (key == "learning_rate") c.train.learning_rate = as_double(v);
  else if (key == "tau") c.train.tau = as_int(v);
  else if (key == "alpha") c.train.alpha = as_double(v);
  else if (key == "c1") c.train.c1 = as_double(v);
  else if (key == "c2_ae_l2") c.c2_ae_l2 = as_double(v);
  else if (key == "c2_ae_l1") c.c2_ae_l1 = as_double(v);
  else if (key == "taus") c.taus = parse_list<int>(v, as_int);
  else if (key == "rpca_lambda") c.rpca_lambda = as_double(v);
  else if (key == "rpca_max_iterations") c.rpca_max_iterations = as_int(v);
  else if (key == "mnist_dir") c.mnist_dir = v;
  else if (key == "mnist_images") c.mnist_images = v;
  else if (key == "repeats") c.repeats = as_int(v);
  else if (key == "seed") c.seed = parse_u64(key, v);
  else if (key == "workers") c.workers = as_int(v);
  else if (key == "out_dir") c.out_dir = v;
  else if (key == "save_checkpoints") c.save_checkpoints = parse_bool(key, v);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

void apply_config(std::istream& in, ExperimentConfig& cfg) {
  std::string line;
  std::string section = "common";
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": unterminated section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section != "common") {
        try {
          experiment_kind_from_string(section);
        } catch (const std::invalid_argument&) {
          throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown section '" + section + "'");
        }
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    if (section != "common" && section != to_string(cfg.kind)) continue;
    try {
      set_config_value(cfg, trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_config_file(const std::filesystem::path& path, ExperimentConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  apply_config(in, cfg);
}

void ExperimentOutput::append(ExperimentOutput&& o) {
  auto move_into = [](auto& dst, auto& src) {
    dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
  };
  move_into(results, o.results);
  move_into(prune_summary, o.prune_summary);
  move_into(histograms, o.histograms);
  move_into(norms, o.norms);
  move_into(sigma_means, o.sigma_means);
  move_into(ground_truth, o.ground_truth);
}

void ExperimentOutput::sort() {
  auto key = [](const auto& r) { return std::tie(r.experiment, r.kappa, r.nu, r.model, r.seed); };
  std::stable_sort(results.begin(), results.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  std::stable_sort(histograms.begin(), histograms.end(), [&](const auto& a, const auto& b) {
    return std::tie(a.experiment, a.kappa, a.nu, a.model, a.seed, a.bin_left) <
           std::tie(b.experiment, b.kappa, b.nu, b.model, b.seed, b.bin_left);
  });
  auto series_less = [](const SeriesRow& a, const SeriesRow& b) {
    return std::tie(a.experiment, a.kappa, a.nu, a.model, a.seed, a.rank) <
           std::tie(b.experiment, b.kappa, b.nu, b.model, b.seed, b.rank);
  };
  std::stable_sort(norms.begin(), norms.end(), series_less);
  std::stable_sort(sigma_means.begin(), sigma_means.end(), series_less);
  std::stable_sort(ground_truth.begin(), ground_truth.end(),
                   [](const auto& a, const auto& b) { return std::tie(a.kappa, a.seed) < std::tie(b.kappa, b.seed); });
  std::stable_sort(prune_summary.begin(), prune_summary.end(), [](const auto& a, const auto& b) {
    return std::tie(a.kappa, a.nu, a.model, a.encoder_depth, a.decoder_depth) <
           std::tie(b.kappa, b.nu, b.model, b.encoder_depth, b.decoder_depth);
  });
}

std::string results_csv(const std::vector<ResultRow>& rows, bool include_timing) {
  std::ostringstream os;
  os << "experiment,kappa,nu,model,seed,nmse,nonzero_columns,frac_var_below_0.1,seconds,converged,error\n";
  for (const auto& r : rows) {
    os << csv_field(r.experiment) << ',' << r.kappa << ',' << fmt_short(r.nu) << ',' << csv_field(r.model) << ','
       << r.seed << ',' << (r.nmse ? fmt(*r.nmse) : "") << ','
       << (r.nonzero_columns ? std::to_string(*r.nonzero_columns) : "") << ','
       << (r.frac_var_below_01 ? fmt(*r.frac_var_below_01) : "") << ','
       << (include_timing ? fmt_short(r.seconds) : "") << ',' << (r.converged ? "true" : "false") << ','
       << csv_field(r.error) << '\n';
  }
  return os.str();
}

std::string histograms_csv(const std::vector<HistogramRow>& rows) {
  std::ostringstream os;
  os << "experiment,kappa,nu,model,seed,bin_left,bin_right,count\n";
  for (const auto& r : rows) {
    os << csv_field(r.experiment) << ',' << r.kappa << ',' << fmt_short(r.nu) << ',' << csv_field(r.model) << ','
       << r.seed << ',' << fmt(r.bin_left) << ',' << fmt(r.bin_right) << ',' << r.count << '\n';
  }
  return os.str();
}

std::string series_csv(const std::vector<SeriesRow>& rows) {
  std::ostringstream os;
  os << "experiment,kappa,nu,model,seed,rank,value\n";
  for (const auto& r : rows) {
    os << csv_field(r.experiment) << ',' << r.kappa << ',' << fmt_short(r.nu) << ',' << csv_field(r.model) << ','
       << r.seed << ',' << r.rank << ',' << fmt(r.value) << '\n';
  }
  return os.str();
}

std::string ground_truth_csv(const std::vector<GroundTruthRow>& rows) {
  std::ostringstream os;
  os << "kappa,seed,check_rank,low_rank_residual,inverse_error,inverse_heldout_error,inverse_converged\n";
  for (const auto& r : rows) {
    os << r.kappa << ',' << r.seed << ',' << r.check_rank << ',' << fmt(r.low_rank_residual) << ','
       << fmt(r.inverse_error) << ',' << fmt(r.inverse_heldout_error) << ','
       << (r.inverse_converged ? "true" : "false") << '\n';
  }
  return os.str();
}

std::string prune_summary_csv(const std::vector<PruneSummaryRow>& rows) {
  std::ostringstream os;
  os << "kappa,nu,model,encoder_depth,decoder_depth,mean_nonzero_columns,repeats\n";
  for (const auto& r : rows) {
    os << r.kappa << ',' << fmt_short(r.nu) << ',' << csv_field(r.model) << ',' << r.encoder_depth << ','
       << r.decoder_depth << ',' << fmt(r.mean_nonzero) << ',' << r.repeats << '\n';
  }
  return os.str();
}

void write_outputs(const ExperimentOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    os << text;
  };
  write("results.csv", results_csv(out.results));
  write("histograms.csv", histograms_csv(out.histograms));
  write("norms.csv", series_csv(out.norms));
  write("sigma_means.csv", series_csv(out.sigma_means));
  write("ground_truth.csv", ground_truth_csv(out.ground_truth));
  write("prune_summary.csv", prune_summary_csv(out.prune_summary));
}

void save_checkpoint(const std::vector<NamedArray>& arrays, const std::filesystem::path& path) {
  for (const auto& a : arrays) {
    std::uint64_t count = 1;
    for (auto dim : a.shape) count *= dim;
    if (count != a.data.size()) {
      throw std::invalid_argument("save_checkpoint: array '" + a.name + "' shape does not match its data");
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot write " + path.string());
  os.write(kMagic, 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    put_u32(os, static_cast<std::uint32_t>(a.name.size()));
    os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    put_u32(os, static_cast<std::uint32_t>(a.shape.size()));
    for (auto dim : a.shape) put_u64(os, dim);
    for (double v : a.data) put_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path) {
  Reader r(read_file(path));
  try {
    const std::string magic = r.bytes(4, "magic");
    if (magic != std::string(kMagic, 4)) throw std::runtime_error("bad magic at byte offset 0 (expected VAEC)");
    const std::uint32_t version = r.u32_le("version");
    if (version != kCheckpointVersion) {
      throw std::runtime_error("unsupported version " + std::to_string(version) + " at byte offset 4 (expected 1)");
    }
    const std::uint32_t count = r.u32_le("array count");
    std::vector<NamedArray> out;
    for (std::uint32_t k = 0; k < count; ++k) {
      NamedArray a;
      const std::uint32_t len = r.u32_le("name length");
      a.name = r.bytes(len, "name");
      const std::uint32_t ndim = r.u32_le("ndim");
      std::uint64_t total = 1;
      for (std::uint32_t i = 0; i < ndim; ++i) {
        a.shape.push_back(r.u64_le("dimension"));
        total *= a.shape.back();
      }
      if (total > (r.size() - r.offset()) / 8) r.need(total * 8, "array data");
      a.data.resize(total);
      for (auto& v : a.data) v = std::bit_cast<double>(r.u64_le("array data"));
      out.push_back(std::move(a));
    }
    if (r.offset() != r.size()) {
      throw std::runtime_error("trailing bytes after byte offset " + std::to_string(r.offset()));
    }
    return out;
  } catch (const std::runtime_error& e) {
    throw std::runtime_error("load_checkpoint " + path.string() + ": " + e.what());
  }
}

NamedArray matrix_array(const std::string& name, const DenseMatrix& m) {
  return {name,
          {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
          std::vector<double>(m.data(), m.data() + m.size())};
}

DenseMatrix array_matrix(const NamedArray& a) {
  if (a.shape.size() != 2) throw std::runtime_error("array '" + a.name + "' is not two-dimensional");
  DenseMatrix m(static_cast<Index>(a.shape[0]), static_cast<Index>(a.shape[1]));
  std::copy(a.data.begin(), a.data.end(), m.data());
  return m;
}

std::vector<NamedArray> model_arrays(const GenerativeModel& model) {
  std::vector<NamedArray> out;
  out.push_back({"model.kind", {1}, {static_cast<double>(static_cast<int>(model.kind))}});
  push_net(out, "encoder_trunk", model.encoder_trunk);
  push_net(out, "mean_head", model.mean_head);
  push_net(out, "logvar_head", model.logvar_head);
  push_net(out, "decoder", model.decoder);
  return out;
}

GenerativeModel model_from_arrays(const std::vector<NamedArray>& arrays) {
  std::map<std::string, const NamedArray*> index;
  for (const auto& a : arrays) index[a.name] = &a;
  GenerativeModel m;
  const double kind = find_array(index, "model.kind").data.at(0);
  if (kind != 0.0 && kind != 1.0 && kind != 2.0) throw std::runtime_error("checkpoint: unknown model kind");
  m.kind = static_cast<ModelKind>(static_cast<int>(kind));
  m.encoder_trunk = pull_net(index, "encoder_trunk");
  m.mean_head = pull_net(index, "mean_head");
  m.logvar_head = pull_net(index, "logvar_head");
  m.decoder = pull_net(index, "decoder");
  return m;
}

std::vector<NamedArray> ground_truth_arrays(const GroundTruth& gt) {
  std::vector<NamedArray> out;
  push_net(out, "generator", gt.generator);
  push_net(out, "inverse", gt.inverse);
  out.push_back(matrix_array("z", gt.z));
  out.push_back(matrix_array("l", gt.l));
  return out;
}

IdxData load_idx(const std::filesystem::path& path, std::uint32_t expected_magic) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("load_idx: no such file " + path.string());
  Reader r(read_file(path));
  try {
    IdxData out;
    out.magic = r.u32_be("magic");
    if ((out.magic >> 16) != 0 || ((out.magic >> 8) & 0xFF) != 0x08) {
      std::ostringstream msg;
      msg << "magic 0x" << std::hex << out.magic << " at byte offset 0 is not an unsigned-byte IDX header";
      throw std::runtime_error(msg.str());
    }
    if (expected_magic != 0 && out.magic != expected_magic) {
      std::ostringstream msg;
      msg << "magic mismatch at byte offset 0: found 0x" << std::hex << std::setfill('0') << std::setw(8) << out.magic
          << ", expected 0x" << std::setw(8) << expected_magic;
      throw std::runtime_error(msg.str());
    }
    const std::uint32_t ndim = out.magic & 0xFF;
    std::uint64_t total = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
      out.dims.push_back(r.u32_be("dimension size"));
      total *= out.dims.back();
    }
    const unsigned char* p = r.take(total, "pixel/label data");
    out.values.assign(p, p + total);
    return out;
  } catch (const std::runtime_error& e) {
    throw std::runtime_error("load_idx " + path.string() + ": " + e.what());
  }
}

}  // namespace vaelab
