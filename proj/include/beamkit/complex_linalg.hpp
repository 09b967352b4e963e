// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Dense complex Hermitian linear algebra for small (M <= 16) channel
// covariance matrices: construction helpers, Cholesky factorization with
// fallback diagonal loading, inversion, a cyclic complex Jacobi eigensolver
// and a generalized eigensolver based on noise whitening.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "beamkit/errors.hpp"

namespace beamkit {

using cplx = std::complex<double>;
using cvec = std::vector<cplx>;

inline constexpr int kMaxChannels = 16;

// ---------------------------------------------------------------------------
// Small vector helpers.

// Conjugate-linear-in-first-argument inner product: sum_i conj(a_i) * b_i.
inline cplx cdot(std::span<const cplx> a, std::span<const cplx> b) {
  cplx acc{0.0, 0.0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

inline double norm2(std::span<const cplx> a) {
  double acc = 0.0;
  for (const cplx& v : a) acc += std::norm(v);
  return acc;
}

inline cvec scaled(std::span<const cplx> a, cplx s) {
  cvec out(a.begin(), a.end());
  for (cplx& v : out) v *= s;
  return out;
}

// ---------------------------------------------------------------------------
// Hermitian matrix, row-major storage. Construction enforces the Hermitian
// invariant: entries(i,j) == conj(entries(j,i)) and a purely real diagonal.

class HermitianMatrix {
 public:
  HermitianMatrix() = default;

  explicit HermitianMatrix(int dim) : dim_(dim), a_(std::size_t(dim) * dim) {
    check_dim(dim);
  }

  static HermitianMatrix identity(int dim) {
    HermitianMatrix m(dim);
    for (int i = 0; i < dim; ++i) m.a_[std::size_t(i) * dim + i] = 1.0;
    return m;
  }

  // Builds from arbitrary row-major entries; the result is the Hermitian
  // part (A + A^H) / 2 with the diagonal imaginary parts dropped.
  static HermitianMatrix from_entries(int dim, std::span<const cplx> raw) {
    check_dim(dim);
    if (raw.size() != std::size_t(dim) * dim)
      throw std::invalid_argument("from_entries: size mismatch");
    HermitianMatrix m(dim);
    for (int i = 0; i < dim; ++i) {
      m.a_[std::size_t(i) * dim + i] = raw[std::size_t(i) * dim + i].real();
      for (int j = i + 1; j < dim; ++j) {
        const cplx v = 0.5 * (raw[std::size_t(i) * dim + j] +
                              std::conj(raw[std::size_t(j) * dim + i]));
        m.a_[std::size_t(i) * dim + j] = v;
        m.a_[std::size_t(j) * dim + i] = std::conj(v);
      }
    }
    return m;
  }

  // v v^H, exactly Hermitian by construction.
  static HermitianMatrix outer(std::span<const cplx> v) {
    HermitianMatrix m(static_cast<int>(v.size()));
    m.add_weighted_outer(v, 1.0);
    return m;
  }

  int dim() const { return dim_; }

  cplx at(int i, int j) const { return a_[std::size_t(i) * dim_ + j]; }

  const cvec& entries() const { return a_; }

  // A += w * v v^H. Used by the covariance accumulators; keeps the matrix
  // exactly Hermitian regardless of rounding.
  void add_weighted_outer(std::span<const cplx> v, double w) {
    for (int i = 0; i < dim_; ++i) {
      a_[std::size_t(i) * dim_ + i] += w * std::norm(v[i]);
      for (int j = i + 1; j < dim_; ++j) {
        const cplx t = w * v[i] * std::conj(v[j]);
        a_[std::size_t(i) * dim_ + j] += t;
        a_[std::size_t(j) * dim_ + i] += std::conj(t);
      }
    }
  }

  void add_scaled_identity(double s) {
    for (int i = 0; i < dim_; ++i) a_[std::size_t(i) * dim_ + i] += s;
  }

  HermitianMatrix scaled(double s) const {
    HermitianMatrix m(*this);
    for (cplx& v : m.a_) v *= s;
    return m;
  }

  HermitianMatrix plus(const HermitianMatrix& other, double w = 1.0) const {
    if (other.dim_ != dim_) throw std::invalid_argument("plus: dim mismatch");
    HermitianMatrix m(*this);
    for (std::size_t i = 0; i < a_.size(); ++i) m.a_[i] += w * other.a_[i];
    return m;
  }

  double trace() const {
    double t = 0.0;
    for (int i = 0; i < dim_; ++i) t += a_[std::size_t(i) * dim_ + i].real();
    return t;
  }

  double frobenius() const {
    double acc = 0.0;
    for (const cplx& v : a_) acc += std::norm(v);
    return std::sqrt(acc);
  }

 private:
  static void check_dim(int dim) {
    if (dim < 1 || dim > kMaxChannels)
      throw std::invalid_argument("HermitianMatrix: dim out of range");
  }

  int dim_ = 0;
  cvec a_;
};

inline cvec matvec(const HermitianMatrix& m, std::span<const cplx> v) {
  if (v.size() != std::size_t(m.dim()))
    throw std::invalid_argument("matvec: size mismatch");
  cvec out(v.size());
  for (int i = 0; i < m.dim(); ++i) {
    cplx acc{0.0, 0.0};
    for (int j = 0; j < m.dim(); ++j) acc += m.at(i, j) * v[j];
    out[std::size_t(i)] = acc;
  }
  return out;
}

// tr{A B} as the direct double sum: sum_i sum_j A(i,j) B(j,i).
inline cplx trace_product(const HermitianMatrix& a, const HermitianMatrix& b) {
  if (a.dim() != b.dim())
    throw std::invalid_argument("trace_product: dim mismatch");
  cplx acc{0.0, 0.0};
  for (int i = 0; i < a.dim(); ++i)
    for (int j = 0; j < a.dim(); ++j) acc += a.at(i, j) * b.at(j, i);
  return acc;
}

// ---------------------------------------------------------------------------
// Cholesky factorization A = L L^H.
//
// Positive definiteness can be lost when a mask zeroes out a bin's
// statistics, so the factorization retries once with diagonal loading
// delta = 1e-10 * tr{A} / M before giving up. Loading is applied only on
// that fallback path; well-conditioned inputs factor exactly, which keeps
// the closed-form filter identities at machine precision.

struct CholeskyFactor {
  int dim = 0;
  cvec lower;           // row-major, lower triangle populated
  double loading = 0.0;  // diagonal loading actually applied (0 if none)
};

namespace detail {

inline bool try_cholesky(const HermitianMatrix& a, double delta,
                         CholeskyFactor& out, double& smallest_pivot) {
  const int n = a.dim();
  out.dim = n;
  out.lower.assign(std::size_t(n) * n, cplx{0.0, 0.0});
  out.loading = delta;
  smallest_pivot = std::numeric_limits<double>::infinity();
  const double mean_diag = (a.trace() + n * delta) / n;
  const double pivot_floor = 1e-13 * std::max(mean_diag, 0.0);
  for (int j = 0; j < n; ++j) {
    double d = a.at(j, j).real() + delta;
    for (int k = 0; k < j; ++k) d -= std::norm(out.lower[std::size_t(j) * n + k]);
    smallest_pivot = std::min(smallest_pivot, d);
    if (!(d > pivot_floor) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    out.lower[std::size_t(j) * n + j] = ljj;
    for (int i = j + 1; i < n; ++i) {
      cplx s = a.at(i, j);
      for (int k = 0; k < j; ++k)
        s -= out.lower[std::size_t(i) * n + k] *
             std::conj(out.lower[std::size_t(j) * n + k]);
      out.lower[std::size_t(i) * n + j] = s / ljj;
    }
  }
  return true;
}

}  // namespace detail

inline CholeskyFactor cholesky_factor(const HermitianMatrix& a) {
  CholeskyFactor f;
  double pivot = 0.0;
  if (detail::try_cholesky(a, 0.0, f, pivot)) return f;
  double delta = 1e-10 * a.trace() / a.dim();
  if (!(delta > 0.0)) delta = 1e-100;  // zero-trace matrix: nominal loading
  if (detail::try_cholesky(a, delta, f, pivot)) return f;
  std::ostringstream msg;
  msg << "matrix not positive definite even after diagonal loading "
      << delta << "; smallest pivot " << pivot;
  throw NumericalError(msg.str());
}

// Solves L y = b.
inline cvec forward_subst(const CholeskyFactor& f, std::span<const cplx> b) {
  const int n = f.dim;
  cvec y(b.begin(), b.end());
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < i; ++k) y[i] -= f.lower[std::size_t(i) * n + k] * y[k];
    y[i] /= f.lower[std::size_t(i) * n + i];
  }
  return y;
}

// Solves L^H x = y.
inline cvec backward_subst(const CholeskyFactor& f, std::span<const cplx> y) {
  const int n = f.dim;
  cvec x(y.begin(), y.end());
  for (int i = n - 1; i >= 0; --i) {
    for (int k = i + 1; k < n; ++k)
      x[i] -= std::conj(f.lower[std::size_t(k) * n + i]) * x[k];
    x[i] /= f.lower[std::size_t(i) * n + i];
  }
  return x;
}

inline cvec cholesky_solve(const CholeskyFactor& f, std::span<const cplx> b) {
  cvec y = forward_subst(f, b);
  return backward_subst(f, y);
}

inline cvec hermitian_solve(const HermitianMatrix& a, std::span<const cplx> b) {
  return cholesky_solve(cholesky_factor(a), b);
}

inline HermitianMatrix invert(const HermitianMatrix& a) {
  const int n = a.dim();
  const CholeskyFactor f = cholesky_factor(a);
  cvec raw(std::size_t(n) * n);
  cvec e(std::size_t(n), cplx{0.0, 0.0});
  for (int j = 0; j < n; ++j) {
    e[j] = 1.0;
    const cvec col = cholesky_solve(f, e);
    e[j] = 0.0;
    for (int i = 0; i < n; ++i) raw[std::size_t(i) * n + j] = col[i];
  }
  return HermitianMatrix::from_entries(n, raw);
}

// ---------------------------------------------------------------------------
// Hermitian eigendecomposition via cyclic complex Jacobi rotations.
//
// Eigenvalues are returned in descending order. Every eigenvector is phase
// rotated so its largest-magnitude entry is real and positive; magnitude
// ties resolve to the lowest index. For hermitian_evd the vectors are
// orthonormal, for generalized_evd they satisfy B^H Phi_nn B = I.

struct EigenPair {
  std::vector<double> values;
  std::vector<cvec> vectors;  // vectors[j] is the eigenvector of values[j]
};

namespace detail {

inline double offdiag_norm(const cvec& a, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) acc += std::norm(a[std::size_t(i) * n + j]);
  return std::sqrt(acc);
}

inline void fix_phase(cvec& v) {
  int best = 0;
  double best_mag = -1.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double mag = std::abs(v[i]);
    if (mag > best_mag + 1e-15 * (1.0 + best_mag)) {
      best_mag = mag;
      best = static_cast<int>(i);
    }
  }
  if (best_mag <= 0.0) return;
  const cplx phase = v[std::size_t(best)] / best_mag;
  for (cplx& x : v) x *= std::conj(phase);
  v[std::size_t(best)] = cplx{std::abs(v[std::size_t(best)]), 0.0};
}

// Sorts eigenvalues descending and applies the phase convention.
inline EigenPair collect_eigen(const cvec& a, const cvec& vmat, int n) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> diag(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) diag[i] = a[std::size_t(i) * n + i].real();
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return diag[x] > diag[y]; });
  EigenPair out;
  out.values.resize(std::size_t(n));
  out.vectors.resize(std::size_t(n));
  for (int j = 0; j < n; ++j) {
    const int src = order[j];
    out.values[j] = diag[src];
    cvec v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[i] = vmat[std::size_t(i) * n + src];
    fix_phase(v);
    out.vectors[j] = std::move(v);
  }
  return out;
}

}  // namespace detail

inline EigenPair hermitian_evd(const HermitianMatrix& m) {
  const int n = m.dim();
  cvec a = m.entries();
  cvec v(std::size_t(n) * n, cplx{0.0, 0.0});
  for (int i = 0; i < n; ++i) v[std::size_t(i) * n + i] = 1.0;

  double scale = m.frobenius();
  const double threshold = 1e-12 * std::max(scale, 1e-300);
  constexpr int kMaxSweeps = 100;

  int sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    if (detail::offdiag_norm(a, n) <= threshold) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const cplx apq = a[std::size_t(p) * n + q];
        const double r = std::abs(apq);
        if (r <= 1e-300) continue;
        const double app = a[std::size_t(p) * n + p].real();
        const double aqq = a[std::size_t(q) * n + q].real();
        const double beta = (aqq - app) / (2.0 * r);
        // Smaller root of t^2 - 2 beta t - 1 = 0 for a stable rotation.
        const double t = (beta >= 0.0)
                             ? -1.0 / (beta + std::sqrt(beta * beta + 1.0))
                             : 1.0 / (-beta + std::sqrt(beta * beta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sigma = t * c;
        const cplx phase = apq / r;                  // e^{i theta}
        const cplx s = sigma * std::conj(phase);     // rotation coefficient

        // A <- R^H A R with R acting on the (p, q) plane.
        for (int i = 0; i < n; ++i) {
          if (i == p || i == q) continue;
          const cplx aip = a[std::size_t(i) * n + p];
          const cplx aiq = a[std::size_t(i) * n + q];
          const cplx nip = c * aip + s * aiq;
          const cplx niq = -std::conj(s) * aip + c * aiq;
          a[std::size_t(i) * n + p] = nip;
          a[std::size_t(p) * n + i] = std::conj(nip);
          a[std::size_t(i) * n + q] = niq;
          a[std::size_t(q) * n + i] = std::conj(niq);
        }
        const double npp = c * c * app + 2.0 * c * sigma * r + sigma * sigma * aqq;
        const double nqq = sigma * sigma * app - 2.0 * c * sigma * r + c * c * aqq;
        a[std::size_t(p) * n + p] = npp;
        a[std::size_t(q) * n + q] = nqq;
        a[std::size_t(p) * n + q] = 0.0;
        a[std::size_t(q) * n + p] = 0.0;

        // Accumulate eigenvectors: V <- V R.
        for (int i = 0; i < n; ++i) {
          const cplx vip = v[std::size_t(i) * n + p];
          const cplx viq = v[std::size_t(i) * n + q];
          v[std::size_t(i) * n + p] = c * vip + s * viq;
          v[std::size_t(i) * n + q] = -std::conj(s) * vip + c * viq;
        }
      }
    }
  }
  if (sweep == kMaxSweeps) {
    std::ostringstream msg;
    msg << "Jacobi eigensolver did not converge in " << kMaxSweeps
        << " sweeps; off-diagonal norm " << detail::offdiag_norm(a, n);
    throw NumericalError(msg.str());
  }
  return detail::collect_eigen(a, v, n);
}

// Generalized eigendecomposition of the pencil (Phi_xx, Phi_nn) through
// Cholesky whitening: with Phi_nn = L L^H and W = L^{-1} Phi_xx L^{-H},
// the columns b_j = L^{-H} u_j of B satisfy B^H Phi_nn B = I and
// B^H Phi_xx B = diag(values).
inline EigenPair generalized_evd(const HermitianMatrix& xx,
                                 const HermitianMatrix& nn) {
  if (xx.dim() != nn.dim())
    throw std::invalid_argument("generalized_evd: dim mismatch");
  const int n = nn.dim();
  const CholeskyFactor f = cholesky_factor(nn);

  // W = L^{-1} Phi_xx L^{-H}, assembled column by column.
  cvec w_raw(std::size_t(n) * n);
  {
    // First Y = L^{-1} Phi_xx  (forward substitution on each column).
    cvec col(static_cast<std::size_t>(n));
    cvec y(std::size_t(n) * n);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) col[i] = xx.at(i, j);
      const cvec s = forward_subst(f, col);
      for (int i = 0; i < n; ++i) y[std::size_t(i) * n + j] = s[i];
    }
    // Then W = Y L^{-H} = (L^{-1} Y^H)^H.
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) col[i] = std::conj(y[std::size_t(j) * n + i]);
      const cvec s = forward_subst(f, col);
      for (int i = 0; i < n; ++i) w_raw[std::size_t(j) * n + i] = std::conj(s[i]);
    }
  }
  const HermitianMatrix w = HermitianMatrix::from_entries(n, w_raw);
  EigenPair eig = hermitian_evd(w);
  for (cvec& u : eig.vectors) {
    u = backward_subst(f, u);
    detail::fix_phase(u);
  }
  return eig;
}

}  // namespace beamkit
