#pragma once
// Dense complex Hermitian linear algebra and quantum-information primitives.
// Everything downstream (channel maps, SDP assembly, entropy bounds) is built
// on the small set of types and free functions defined here.

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace qkdfk {

using cplx = std::complex<double>;
using cmat = Eigen::MatrixXcd;
using cvec = Eigen::VectorXcd;
using rmat = Eigen::MatrixXd;
using rvec = Eigen::VectorXd;

inline constexpr double pi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Hermitian helpers

inline cmat hermitize(const cmat& m) { return 0.5 * (m + m.adjoint()); }

inline double herm_defect(const cmat& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline bool is_hermitian(const cmat& m, double tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  return herm_defect(m) <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

// Hermitian operator on a finite-dimensional space. Construction symmetrizes
// (M + M^dagger)/2 after checking the defect, so all stored values are exactly
// Hermitian from then on.
struct HermitianMatrix {
  cmat mat;

  HermitianMatrix() = default;
  explicit HermitianMatrix(cmat m, double tol = 1e-12) {
    if (m.rows() != m.cols()) throw std::invalid_argument("HermitianMatrix: not square");
    if (!is_hermitian(m, tol))
      throw std::invalid_argument("HermitianMatrix: Hermiticity defect above tolerance");
    mat = hermitize(m);
  }
  int dim() const { return static_cast<int>(mat.rows()); }
};

// Eigen-decomposition result; eigenvalues ascending, eigenvectors as columns.
struct Spectrum {
  rvec eigenvalues;
  cmat eigenvectors;
};

inline Spectrum eig_hermitian(const cmat& m, double tol = 1e-12) {
  if (!is_hermitian(m, tol))
    throw std::invalid_argument("eig_hermitian: input not Hermitian within tolerance");
  Eigen::SelfAdjointEigenSolver<cmat> es(hermitize(m));
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eig_hermitian: eigensolver failed to converge");
  return Spectrum{es.eigenvalues(), es.eigenvectors()};
}

inline Spectrum eig_hermitian(const HermitianMatrix& m) { return eig_hermitian(m.mat); }

// ---------------------------------------------------------------------------
// Tensor products and partial trace. Subsystem 0 is the outermost (most
// significant) factor, matching kron(a, b) index order (i_a * dim_b + i_b).

inline cmat kron(const cmat& a, const cmat& b) {
  return Eigen::kroneckerProduct(a, b).eval();
}

inline cvec kron_vec(const cvec& a, const cvec& b) {
  return Eigen::kroneckerProduct(a, b).eval();
}

inline HermitianMatrix kron(const HermitianMatrix& a, const HermitianMatrix& b) {
  HermitianMatrix out;
  out.mat = kron(a.mat, b.mat);
  return out;
}

inline cmat identity(int n) { return cmat::Identity(n, n); }

namespace detail {

inline std::vector<int> strides_of(const std::vector<int>& dims) {
  std::vector<int> s(dims.size(), 1);
  for (int i = static_cast<int>(dims.size()) - 2; i >= 0; --i) s[i] = s[i + 1] * dims[i + 1];
  return s;
}

}  // namespace detail

// Partial trace over the complement of `keep` (subsystem indices into `dims`).
inline cmat partial_trace(const cmat& rho, const std::vector<int>& dims,
                          const std::vector<int>& keep) {
  int total = 1;
  for (int d : dims) total *= d;
  if (rho.rows() != total || rho.cols() != total)
    throw std::invalid_argument("partial_trace: dims do not match matrix size");
  std::vector<bool> kept(dims.size(), false);
  for (int k : keep) {
    if (k < 0 || k >= static_cast<int>(dims.size()))
      throw std::out_of_range("partial_trace: subsystem index out of range");
    kept[k] = true;
  }
  std::vector<int> kd, td, kpos, tpos;  // kept/traced dims and positions
  for (size_t i = 0; i < dims.size(); ++i) {
    if (kept[i]) { kd.push_back(dims[i]); kpos.push_back(static_cast<int>(i)); }
    else { td.push_back(dims[i]); tpos.push_back(static_cast<int>(i)); }
  }
  int K = 1, T = 1;
  for (int d : kd) K *= d;
  for (int d : td) T *= d;
  const std::vector<int> strides = detail::strides_of(dims);

  // Precompute the full-space offset of every kept and traced index.
  auto offsets = [&](const std::vector<int>& sub_dims, const std::vector<int>& pos, int n) {
    std::vector<int> off(n, 0);
    for (int idx = 0; idx < n; ++idx) {
      int rem = idx;
      for (int s = static_cast<int>(sub_dims.size()) - 1; s >= 0; --s) {
        int digit = rem % sub_dims[s];
        rem /= sub_dims[s];
        off[idx] += digit * strides[pos[s]];
      }
    }
    return off;
  };
  const std::vector<int> koff = offsets(kd, kpos, K);
  const std::vector<int> toff = offsets(td, tpos, T);

  cmat out = cmat::Zero(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) {
      cplx acc = 0.0;
      for (int t = 0; t < T; ++t) acc += rho(koff[i] + toff[t], koff[j] + toff[t]);
      out(i, j) = acc;
    }
  return out;
}

// Density matrix with labeled subsystem dimensions.
struct DensityMatrix {
  HermitianMatrix matrix;
  std::vector<int> subsystem_dims;

  DensityMatrix() = default;
  DensityMatrix(cmat m, std::vector<int> dims, double tol = 1e-10)
      : matrix(std::move(m), 1e-10), subsystem_dims(std::move(dims)) {
    int prod = 1;
    for (int d : subsystem_dims) {
      if (d <= 0) throw std::invalid_argument("DensityMatrix: nonpositive subsystem dim");
      prod *= d;
    }
    if (prod != matrix.dim())
      throw std::invalid_argument("DensityMatrix: subsystem dims do not multiply to dim");
    if (std::abs(matrix.mat.trace().real() - 1.0) > tol ||
        std::abs(matrix.mat.trace().imag()) > tol)
      throw std::invalid_argument("DensityMatrix: trace must be 1");
    Eigen::SelfAdjointEigenSolver<cmat> es(matrix.mat, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10)
      throw std::invalid_argument("DensityMatrix: negative eigenvalue beyond tolerance");
  }
  int dim() const { return matrix.dim(); }
  const cmat& mat() const { return matrix.mat; }
};

inline DensityMatrix partial_trace(const DensityMatrix& rho, const std::vector<int>& keep) {
  cmat reduced = partial_trace(rho.mat(), rho.subsystem_dims, keep);
  std::vector<int> kd;
  std::vector<bool> kept(rho.subsystem_dims.size(), false);
  for (int k : keep) kept.at(k) = true;
  for (size_t i = 0; i < rho.subsystem_dims.size(); ++i)
    if (kept[i]) kd.push_back(rho.subsystem_dims[i]);
  if (kd.empty()) throw std::invalid_argument("partial_trace: keep set must be nonempty");
  return DensityMatrix(hermitize(reduced), kd);
}

// ---------------------------------------------------------------------------
// Spectral functions

// log2 of (1 - eps_pert) m + eps_pert I / dim, computed spectrally.
// eps_pert = 0 requires strictly positive spectrum.
inline cmat mat_log2_regularized(const cmat& m, double eps_pert) {
  if (eps_pert < 0.0 || eps_pert > 1e-6)
    throw std::invalid_argument("mat_log2_regularized: eps_pert outside [0, 1e-6]");
  const int n = static_cast<int>(m.rows());
  cmat shifted = (1.0 - eps_pert) * hermitize(m) +
                 (eps_pert / static_cast<double>(n)) * cmat::Identity(n, n);
  Spectrum s = eig_hermitian(shifted, 1e-9);
  cmat out = cmat::Zero(n, n);
  const double ln2 = std::log(2.0);
  for (int i = 0; i < n; ++i) {
    double ev = s.eigenvalues(i);
    if (ev < -1e-10)
      throw std::invalid_argument("mat_log2_regularized: negative eigenvalue after perturbation");
    if (ev <= 0.0)
      throw std::invalid_argument("mat_log2_regularized: zero eigenvalue, log undefined");
    out += (std::log(ev) / ln2) * (s.eigenvectors.col(i) * s.eigenvectors.col(i).adjoint());
  }
  return hermitize(out);
}

inline cmat mat_log2_regularized(const HermitianMatrix& m, double eps_pert) {
  return mat_log2_regularized(m.mat, eps_pert);
}

namespace detail {

// Spectral square root with a PSD check (tolerance on small negatives).
inline cmat mat_sqrt_psd(const cmat& m, double tol = 1e-10) {
  Spectrum s = eig_hermitian(m, 1e-9);
  if (s.eigenvalues.minCoeff() < -tol * std::max(1.0, std::abs(s.eigenvalues.maxCoeff())))
    throw std::invalid_argument("mat_sqrt_psd: input is not PSD");
  const int n = static_cast<int>(m.rows());
  cmat out = cmat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double ev = std::max(0.0, s.eigenvalues(i));
    out += std::sqrt(ev) * (s.eigenvectors.col(i) * s.eigenvectors.col(i).adjoint());
  }
  return hermitize(out);
}

}  // namespace detail

// Uhlmann fidelity F(p, q) = (Tr sqrt(sqrt(p) q sqrt(p)))^2 for PSD p, q.
// Serves as the spectral test oracle for the fidelity SDP.
inline double fidelity_oracle(const cmat& p, const cmat& q) {
  cmat sp = detail::mat_sqrt_psd(p);
  cmat inner = hermitize(sp * q * sp);
  Spectrum s = eig_hermitian(inner, 1e-9);
  double acc = 0.0;
  for (int i = 0; i < inner.rows(); ++i) acc += std::sqrt(std::max(0.0, s.eigenvalues(i)));
  return acc * acc;
}

// ---------------------------------------------------------------------------
// Scalar and vector utilities

inline double binary_entropy(double x) {
  if (x < 0.0 || x > 1.0) throw std::domain_error("binary_entropy: argument outside [0,1]");
  auto term = [](double t) { return t > 0.0 ? -t * std::log2(t) : 0.0; };
  return term(x) + term(1.0 - x);
}

// |e> = sum_i |i>|i>, the vertical stacking of identity columns; satisfies
// <e|(A (x) I)|e> = Tr(A^T) = Tr(A).
inline cvec identity_vec(int n) {
  if (n < 1) throw std::invalid_argument("identity_vec: n must be >= 1");
  cvec e = cvec::Zero(static_cast<Eigen::Index>(n) * n);
  for (int i = 0; i < n; ++i) e(static_cast<Eigen::Index>(i) * n + i) = 1.0;
  return e;
}

// ---------------------------------------------------------------------------
// Small conveniences used across modules

inline cmat proj(const cvec& v) { return v * v.adjoint(); }

inline cvec basis_vec(int dim, int i) {
  cvec v = cvec::Zero(dim);
  v(i) = 1.0;
  return v;
}

inline double trace_re(const cmat& m) { return m.trace().real(); }

inline double inner_re(const cmat& a, const cmat& b) {
  return (a.adjoint() * b).trace().real();
}

inline double min_eigenvalue(const cmat& m) {
  Eigen::SelfAdjointEigenSolver<cmat> es(hermitize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Clamp a Hermitian matrix to the PSD cone and renormalize to unit trace.
inline cmat clamp_to_density(const cmat& m) {
  Spectrum s = eig_hermitian(hermitize(m), 1e-6);
  const int n = static_cast<int>(m.rows());
  cmat out = cmat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double ev = std::max(0.0, s.eigenvalues(i));
    out += ev * (s.eigenvectors.col(i) * s.eigenvectors.col(i).adjoint());
  }
  double tr = out.trace().real();
  if (tr <= 0.0) return cmat::Identity(n, n) / static_cast<double>(n);
  return hermitize(out / tr);
}

}  // namespace qkdfk
