#include "vaelab/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vaelab {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

SvdResult svd(const DenseMatrix& m) {
  if (m.rows() < 1 || m.cols() < 1) {
    throw std::invalid_argument("svd: matrix must have at least one row and one column");
  }
  if (!all_finite(m)) {
    throw std::invalid_argument("svd: input contains non-finite entries");
  }
  // BDCSVD switches to one-sided Jacobi below 16 columns; its QR iteration
  // is capped internally and reported through info().
  const Eigen::MatrixXd colmajor = m;
  Eigen::BDCSVD<Eigen::MatrixXd> dec(colmajor, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (dec.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "svd: no convergence for " << m.rows() << "x" << m.cols() << " input";
    throw NumericError(msg.str());
  }

  SvdResult out{dec.matrixU(), dec.singularValues(), dec.matrixV()};
  for (Index j = 0; j < out.u.cols(); ++j) {
    Index arg = 0;
    out.u.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.u(arg, j) < 0.0) {
      out.u.col(j) *= -1.0;
      out.v.col(j) *= -1.0;
    }
  }
  if (!all_finite(out.u) || !all_finite(out.v) || !all_finite(out.s)) {
    throw NumericError("svd: non-finite factors");
  }
  return out;
}

double soft_threshold(double x, double t) {
  const double mag = std::abs(x) - t;
  if (mag <= 0.0) return 0.0;
  return x > 0.0 ? mag : -mag;
}

DenseMatrix soft_threshold(const DenseMatrix& m, double t) {
  return m.unaryExpr([t](double x) { return soft_threshold(x, t); });
}

DenseMatrix sv_shrink(const DenseMatrix& m, double t) {
  if (t < 0.0) throw std::invalid_argument("sv_shrink: threshold must be nonnegative");
  const SvdResult f = svd(m);
  Vector shrunk = f.s.unaryExpr([t](double s) { return std::max(s - t, 0.0); });
  return f.u * shrunk.asDiagonal() * f.v.transpose();
}

double spectral_norm(const DenseMatrix& m) {
  if (m.size() == 0) return 0.0;
  return svd(m).s(0);
}

bool all_finite(const DenseMatrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

RngStream::RngStream(std::uint64_t seed, std::string label)
    : seed_(seed), label_(std::move(label)) {}

RngStream RngStream::child(std::string_view name) const {
  std::string next = label_;
  next += '/';
  next += name;
  return RngStream(seed_, std::move(next));
}

std::uint64_t RngStream::key() const {
  return splitmix64(seed_ ^ splitmix64(fnv1a(label_)));
}

std::mt19937_64 RngStream::engine() const {
  const std::uint64_t k = key();
  std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32),
                    static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
  return std::mt19937_64(seq);
}

DenseMatrix sample_gaussian(const RngStream& stream, Index rows, Index cols) {
  auto eng = stream.engine();
  return sample_gaussian(eng, rows, cols);
}

DenseMatrix sample_gaussian(std::mt19937_64& engine, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseMatrix out(rows, cols);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = normal(engine);
  return out;
}

}  // namespace vaelab
