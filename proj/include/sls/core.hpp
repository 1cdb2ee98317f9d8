#pragma once

// Shared scalar-generic dense/sparse aliases, reproducible random draws, and
// a tiny fork-join helper used by the row-parallel audits.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

namespace sls {

using Index = Eigen::Index;

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <class Scalar>
using SparseMat = Eigen::SparseMatrix<Scalar>;
template <class Scalar>
using Triplet = Eigen::Triplet<Scalar>;

// Boolean sparsity grid; scalar-free on purpose.
using BoolGrid = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

template <class Scalar>
Scalar inf_norm(const Mat<Scalar>& m) {
  return m.size() == 0 ? Scalar(0) : m.template lpNorm<Eigen::Infinity>();
}

template <class Scalar>
Scalar spectral_norm(const Mat<Scalar>& m) {
  if (m.size() == 0) return Scalar(0);
  return m.jacobiSvd().singularValues()(0);
}

template <class Scalar>
Scalar spectral_norm(const Mat<std::complex<Scalar>>& m) {
  if (m.size() == 0) return Scalar(0);
  return m.jacobiSvd().singularValues()(0);
}

// Largest eigenvalue magnitude; dense solve, fine at the sizes handled here.
template <class Scalar>
Scalar spectral_radius(const Mat<Scalar>& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("spectral_radius: square matrix required");
  if (a.rows() == 0) return Scalar(0);
  Eigen::EigenSolver<Mat<Scalar>> es(a, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Deterministic uniform draws.  The engine is std::mt19937_64 (bit-exact per
// the standard); the [0,1) mapping takes the top 53 bits, so sequences
// reproduce across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() {
    const std::uint64_t bits = engine_();
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform on [-1, 1].
  double symmetric() { return 2.0 * uniform01() - 1.0; }

  std::uint64_t bits() { return engine_(); }

  int integer(int lo, int hi) {  // inclusive bounds, small ranges only
    if (hi < lo) throw std::invalid_argument("Rng::integer: empty range");
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(engine_() % span);
  }

 private:
  std::mt19937_64 engine_;
};

// Runs fn(i) for i in [0, count); results must be written to disjoint slots.
// Work is chunked deterministically, so output does not depend on scheduling.
inline void parallel_for(Index count, const std::function<void(Index)>& fn) {
  if (count <= 0) return;
  unsigned workers = std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  workers = static_cast<unsigned>(std::min<Index>(workers, count));
  if (workers <= 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (Index i = static_cast<Index>(w); i < count; i += static_cast<Index>(workers)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace sls
