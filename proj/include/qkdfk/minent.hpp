#pragma once
// Min-entropy key term via the fidelity SDP. The guessing-entropy of the key
// register against the purifying system satisfies
//   H_min(key|E) = -2 log2 max_sigma sqrtF(S(rho), pinch(sigma)) + log2 p_pass
// for a sifted state S(rho) = sum_b w_b K_b rho K_b^dag, so a certified
// *upper* bound on the best fidelity root gives a certified *lower* bound on
// the pass-adjusted min-entropy. The module builds the minimization dual of
// the fidelity program directly,
//   min  z + ybar + sum_i (y_i hi_i - x_i lo_i)
//   s.t. sum_i (y_i - x_i) Gamma_i + ybar I  >=  sum_b w_b K_b^dag Y11_b K_b
//        z I >= pinch_b(Y22_b)                            (each block)
//        [[Y11_b, -I/2], [-I/2, Y22_b]] >= 0              (each block)
//        x_i >= 0, y_i >= 0,
// because every exactly-feasible point of it dominates the fidelity root of
// every window state, no matter how far the solver got. Near-solutions are
// repaired to exact feasibility by sign clamps and identity shifts that the
// free multipliers ybar and z absorb, then re-verified by certify_dual.

#include <qkdfk/channels.hpp>
#include <qkdfk/constraints.hpp>
#include <qkdfk/lmi.hpp>
#include <qkdfk/matqi.hpp>
#include <qkdfk/sdp.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace qkdfk {

struct MinEntropyBound {
  double hmin_value = 0.0;     // certified lower bound on p_pass-adjusted H_min(key|E), bits
  double fidelity_sqrt = 1.0;  // certified upper bound on the best fidelity root, in (0, 1]
  double p_pass = 1.0;
  CertifiedBound certificate;
};

// The fidelity-root piece alone, for sift maps whose pass probability depends
// on the input state and must be bounded externally.
struct FidelityRootBound {
  double fidelity_sqrt = 1.0;  // certified upper bound on the best fidelity root, in (0, 1]
  CertifiedBound certificate;
};

// p_pass-adjusted min-entropy from a certified fidelity root.
inline double hmin_from_fidelity(double fidelity_sqrt, double p_pass) {
  if (!(fidelity_sqrt > 0.0) || fidelity_sqrt > 1.0 + 1e-12)
    throw std::invalid_argument("hmin_from_fidelity: fidelity root outside (0,1]");
  if (!(p_pass > 0.0) || p_pass > 1.0 + 1e-9)
    throw std::invalid_argument("hmin_from_fidelity: p_pass outside (0,1]");
  const double f = std::min(fidelity_sqrt, 1.0);
  const double p = std::min(p_pass, 1.0);
  return p * (-2.0 * std::log2(f) + std::log2(p));
}

// Sound variant when the pass probability is only known to lie in a window:
// -2 log2(fid) >= 0 takes the lower endpoint, and the concave-looking
// p log2 p term (convex, minimum at 1/e) is minimized over the window.
inline double hmin_from_fidelity_window(double fidelity_sqrt, double p_lo, double p_hi) {
  if (!(fidelity_sqrt > 0.0) || fidelity_sqrt > 1.0 + 1e-12)
    throw std::invalid_argument("hmin_from_fidelity_window: fidelity root outside (0,1]");
  if (!(p_lo >= 0.0) || !(p_hi >= p_lo) || p_hi > 1.0 + 1e-9)
    throw std::invalid_argument("hmin_from_fidelity_window: invalid pass window");
  const double f = std::min(fidelity_sqrt, 1.0);
  const double hi = std::min(p_hi, 1.0);
  auto plog = [](double p) { return p <= 0.0 ? 0.0 : p * std::log2(p); };
  const double pstar = 1.0 / std::exp(1.0);
  const double worst_plog = (p_lo <= pstar && pstar <= hi)
                                ? plog(pstar)
                                : std::min(plog(p_lo), plog(hi));
  return p_lo * (-2.0 * std::log2(f)) + worst_plog;
}

namespace detail {

inline bool minent_needs_complex(const ConstraintSet& constraints, const SiftMap& sift) {
  const double tol = 1e-12;
  for (const auto& c : constraints.items)
    if (c.op.imag().cwiseAbs().maxCoeff() > tol) return true;
  for (const auto& b : sift.blocks) {
    if (b.kraus.imag().cwiseAbs().maxCoeff() > tol) return true;
    for (const auto& z : b.key_projectors)
      if (z.imag().cwiseAbs().maxCoeff() > tol) return true;
  }
  return false;
}

// Tr S(rho) must not depend on rho for the pass-adjusted assembly to be a
// single number; this holds exactly when sum_b w_b K_b^dag K_b is a multiple
// of the identity (unitary or isometric sift branches).
inline double pass_probability(const SiftMap& sift) {
  cmat m = cmat::Zero(sift.in_dim, sift.in_dim);
  for (const auto& b : sift.blocks) m += b.weight * (b.kraus.adjoint() * b.kraus);
  const double c = m.trace().real() / sift.in_dim;
  if ((m - c * identity(sift.in_dim)).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, std::abs(c)))
    throw std::invalid_argument("certified_minent: pass probability varies over input states");
  if (c <= 0.0 || c > 1.0 + 1e-9)
    throw std::invalid_argument("certified_minent: pass probability outside (0, 1]");
  return std::min(c, 1.0);
}

struct MinentLmi {
  LmiProgram prog;
  int z = -1;
  int ybar = -1;
  std::vector<int> xs, ys;  // per constraint; -1 when the bound is infinite
  std::vector<MatVarHandle> y11, y22;
  int lmi_pullback = -1;
  std::vector<int> lmi_cap, lmi_coupling;
  int dim = 0;
  bool complex_field = false;
};

inline MinentLmi build_minent_lmi(const ConstraintSet& constraints, const SiftMap& sift) {
  if (!sift.has_blocks())
    throw std::invalid_argument("build_minent_dual: sift map has no block representation");
  const int d = sift.in_dim;
  if (d < 1) throw std::invalid_argument("build_minent_dual: empty input space");
  for (const auto& b : sift.blocks) {
    if (b.kraus.cols() != d) throw std::invalid_argument("build_minent_dual: kraus dimension mismatch");
    if (!(b.weight > 0.0)) throw std::invalid_argument("build_minent_dual: nonpositive block weight");
    validate_pinch_family(b.key_projectors, static_cast<int>(b.kraus.rows()));
  }
  const double inf = std::numeric_limits<double>::infinity();
  for (const auto& c : constraints.items) {
    if (c.op.rows() != d || c.op.cols() != d)
      throw std::invalid_argument("build_minent_dual: observable dimension mismatch");
    if (!is_hermitian(c.op)) throw std::invalid_argument("build_minent_dual: observable not Hermitian");
    if (c.lo > c.hi) throw std::invalid_argument("build_minent_dual: infeasible bounds");
    if (c.lo == inf || c.hi == -inf)
      throw std::invalid_argument("build_minent_dual: infeasible bounds");
  }

  MinentLmi out;
  out.dim = d;
  out.complex_field = minent_needs_complex(constraints, sift);
  LmiProgram& pg = out.prog;

  out.z = pg.add_var("z", 'f', 1.0);
  out.ybar = pg.add_var("ybar", 'f', 1.0);
  for (const auto& c : constraints.items) {
    out.ys.push_back(std::isfinite(c.hi) ? pg.add_var("y_" + c.label, '+', c.hi) : -1);
    out.xs.push_back(std::isfinite(c.lo) ? pg.add_var("x_" + c.label, '+', -c.lo) : -1);
  }
  for (const auto& b : sift.blocks) {
    const int nb = static_cast<int>(b.kraus.rows());
    out.y11.push_back(pg.add_hermitian_var("Y11_" + b.label, nb, out.complex_field));
    out.y22.push_back(pg.add_hermitian_var("Y22_" + b.label, nb, out.complex_field));
  }

  // Window multipliers must dominate the sift-adjoint of Y11 on the input
  // space; ybar has an identity coefficient, so it doubles as the repair
  // direction for this block.
  out.lmi_pullback = pg.add_lmi(cmat::Zero(d, d), "pullback_dominance");
  pg.add_term(out.lmi_pullback, out.ybar, identity(d));
  for (size_t i = 0; i < constraints.items.size(); ++i) {
    const cmat g = hermitize(constraints.items[i].op);
    if (out.ys[i] >= 0) pg.add_term(out.lmi_pullback, out.ys[i], g);
    if (out.xs[i] >= 0) pg.add_term(out.lmi_pullback, out.xs[i], cmat(-g));
  }
  for (size_t b = 0; b < sift.blocks.size(); ++b) {
    const SiftBlock& blk = sift.blocks[b];
    pg.add_matrix_terms(out.lmi_pullback, out.y11[b], [&](const cmat& h) {
      return cmat(-blk.weight * (blk.kraus.adjoint() * h * blk.kraus));
    });
  }
  pg.lmis[static_cast<size_t>(out.lmi_pullback)].compensator_var = out.ybar;

  for (size_t b = 0; b < sift.blocks.size(); ++b) {
    const SiftBlock& blk = sift.blocks[b];
    const int nb = static_cast<int>(blk.kraus.rows());

    // z I >= pinch(Y22): caps the companion state's overlap per block.
    const int cap = pg.add_lmi(cmat::Zero(nb, nb), "pinch_cap_" + blk.label);
    pg.add_term(cap, out.z, identity(nb));
    pg.add_matrix_terms(cap, out.y22[b], [&](const cmat& h) {
      return cmat(-pinch(h, blk.key_projectors));
    });
    pg.lmis[static_cast<size_t>(cap)].compensator_var = out.z;
    out.lmi_cap.push_back(cap);

    // [[Y11, -I/2], [-I/2, Y22]] >= 0, written as terms minus the constant
    // off-diagonal half-identity.
    cmat c0 = cmat::Zero(2 * nb, 2 * nb);
    c0.block(0, nb, nb, nb) = 0.5 * identity(nb);
    c0.block(nb, 0, nb, nb) = 0.5 * identity(nb);
    const int cpl = pg.add_lmi(c0, "coupling_" + blk.label);
    pg.add_matrix_terms(cpl, out.y11[b], [&](const cmat& h) {
      cmat m = cmat::Zero(2 * nb, 2 * nb);
      m.block(0, 0, nb, nb) = h;
      return m;
    });
    pg.add_matrix_terms(cpl, out.y22[b], [&](const cmat& h) {
      cmat m = cmat::Zero(2 * nb, 2 * nb);
      m.block(nb, nb, nb, nb) = h;
      return m;
    });
    out.lmi_coupling.push_back(cpl);
  }
  return out;
}

// Pushes a near-feasible multiplier vector to exact feasibility. Order
// matters: the coupling shifts enlarge Y11 and Y22, and the ybar / z lifts
// then absorb both those shifts and any residual window slack. Each shift
// adds its own cost to the objective, which only loosens the reported bound.
inline void repair_minent_dual(const MinentLmi& b, const SiftMap& sift, std::vector<double>& w,
                               double margin) {
  for (int v : b.xs)
    if (v >= 0) w[static_cast<size_t>(v)] = std::max(w[static_cast<size_t>(v)], 0.0);
  for (int v : b.ys)
    if (v >= 0) w[static_cast<size_t>(v)] = std::max(w[static_cast<size_t>(v)], 0.0);

  for (size_t k = 0; k < sift.blocks.size(); ++k) {
    const int nb = static_cast<int>(sift.blocks[k].kraus.rows());
    cmat g = cmat::Zero(2 * nb, 2 * nb);
    g.block(0, 0, nb, nb) = b.prog.matrix_value(b.y11[k], w);
    g.block(nb, nb, nb, nb) = b.prog.matrix_value(b.y22[k], w);
    g.block(0, nb, nb, nb) = -0.5 * identity(nb);
    g.block(nb, 0, nb, nb) = -0.5 * identity(nb);
    const double eps = margin * (1.0 + g.cwiseAbs().maxCoeff());
    const double lift = eps - min_eigenvalue(g);
    if (lift > 0.0)
      for (int r = 0; r < nb; ++r) {
        w[static_cast<size_t>(b.y11[k].first + r)] += lift;
        w[static_cast<size_t>(b.y22[k].first + r)] += lift;
      }
  }

  cmat a = w[static_cast<size_t>(b.ybar)] * identity(b.dim);
  for (const auto& t : b.prog.lmis[static_cast<size_t>(b.lmi_pullback)].terms)
    if (t.var != b.ybar) a += w[static_cast<size_t>(t.var)] * t.coeff;
  const double eps_a = margin * (1.0 + a.cwiseAbs().maxCoeff());
  const double lift_a = eps_a - min_eigenvalue(hermitize(a));
  if (lift_a > 0.0) w[static_cast<size_t>(b.ybar)] += lift_a;

  double zmin = w[static_cast<size_t>(b.z)];
  for (size_t k = 0; k < sift.blocks.size(); ++k) {
    const cmat p = pinch(b.prog.matrix_value(b.y22[k], w), sift.blocks[k].key_projectors);
    const double eps_z = margin * (1.0 + p.cwiseAbs().maxCoeff());
    zmin = std::max(zmin, -min_eigenvalue(cmat(-p)) + eps_z);
  }
  w[static_cast<size_t>(b.z)] = zmin;
}

}  // namespace detail

// The minimization dual of the fidelity program, lowered so that the scalar
// and matrix-coordinate variables become the row multipliers.
inline SdpProblem build_minent_dual(const ConstraintSet& constraints, const SiftMap& sift) {
  return lower_lmi(detail::build_minent_lmi(constraints, sift).prog).problem;
}

inline FidelityRootBound certified_fidelity_root(const ConstraintSet& constraints,
                                                 const SiftMap& sift, double tol = 1e-8) {
  detail::MinentLmi bundle = detail::build_minent_lmi(constraints, sift);
  LoweredLmi low = lower_lmi(bundle.prog);
  const SdpSolution sol = solve(low.problem, tol);

  CertifiedBound cert;
  for (double margin : {1e-11, 1e-8}) {
    std::vector<double> w = sol.dual_multipliers;
    detail::repair_minent_dual(bundle, sift, w, margin);
    SdpSolution patched = sol;
    patched.dual_multipliers = std::move(w);
    cert = certify_dual(low.problem, patched);
    if (cert.status == SdpStatus::optimal && std::isfinite(cert.value)) break;
  }
  if (cert.status != SdpStatus::optimal || !std::isfinite(cert.value))
    throw std::runtime_error("certified_fidelity_root: could not certify a feasible dual point");

  // Lowered objective is the negated program objective, and a fidelity root
  // between a subnormalized state and a state never exceeds one.
  double fid = std::min(-cert.value, 1.0);
  if (!(fid > 0.0))
    throw std::runtime_error("certified_fidelity_root: degenerate fidelity certificate");

  FidelityRootBound out;
  out.fidelity_sqrt = fid;
  out.certificate = cert;
  return out;
}

inline MinEntropyBound certified_minent(const ConstraintSet& constraints, const SiftMap& sift,
                                        double tol = 1e-8) {
  const double p_pass = detail::pass_probability(sift);
  FidelityRootBound fr = certified_fidelity_root(constraints, sift, tol);

  MinEntropyBound out;
  out.fidelity_sqrt = fr.fidelity_sqrt;
  out.p_pass = p_pass;
  out.hmin_value = hmin_from_fidelity(fr.fidelity_sqrt, p_pass);
  out.certificate = fr.certificate;
  return out;
}

}  // namespace qkdfk
