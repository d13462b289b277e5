#pragma once

// Dense linear algebra and seeded sampling shared by every other module.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vaelab {

/// Row-major 64-bit matrix. Samples are stored as columns (d x n) for data
/// matrices and as rows (batch x features) when fed to networks.
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Raised when a numeric routine cannot produce a finite, converged result.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thin SVD M = U diag(s) V^T with s nonincreasing. Each column of U has its
/// largest-magnitude entry nonnegative (the matching V column is flipped too).
struct SvdResult {
  DenseMatrix u;
  Vector s;
  DenseMatrix v;
};

SvdResult svd(const DenseMatrix& m);

/// sign(x) * max(|x| - t, 0); the proximal map of t|.|.
double soft_threshold(double x, double t);
DenseMatrix soft_threshold(const DenseMatrix& m, double t);

/// Singular-value soft thresholding: U diag(soft_threshold(s, t)) V^T.
DenseMatrix sv_shrink(const DenseMatrix& m, double t);

/// Spectral norm (largest singular value).
double spectral_norm(const DenseMatrix& m);

bool all_finite(const DenseMatrix& m);
bool all_finite(const Vector& v);

/// Identity of a deterministic random stream. The pair (seed, label) fully
/// determines every value drawn from engine(); nothing depends on call order
/// across streams or on thread scheduling.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string label);

  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }

  /// Stream for a nested purpose, labelled "<label>/<name>".
  RngStream child(std::string_view name) const;

  /// 64-bit key mixing seed and label.
  std::uint64_t key() const;

  /// Fresh generator positioned at the start of this stream.
  std::mt19937_64 engine() const;

  bool operator==(const RngStream&) const = default;

 private:
  std::uint64_t seed_;
  std::string label_;
};

/// rows x cols i.i.d. N(0, 1) drawn from the start of the stream.
DenseMatrix sample_gaussian(const RngStream& stream, Index rows, Index cols);

/// rows x cols i.i.d. N(0, 1) continuing an existing generator.
DenseMatrix sample_gaussian(std::mt19937_64& engine, Index rows, Index cols);

}  // namespace vaelab
