#pragma once
// Von Neumann entropy key term. The objective p_pass * H(key|E) of a sifted
// state equals a sum of block relative entropies
//   f(rho) = sum_b w_b D(K_b rho K_b^dag || pinch_b(K_b rho K_b^dag)),
// which this module bounds from below in two steps: a rational block-matrix
// approximation of the matrix logarithm turns min f into a plain SDP whose
// solution gives a near-optimal state (step one), and linearizing the exact
// objective at that state leaves a linear SDP whose rounded dual certificate
// makes the final value a true lower bound (step two). Soundness rests only
// on convexity of f and the exact feasibility of the step-two certificate;
// the approximation quality of step one affects tightness, never validity.

#include <qkdfk/channels.hpp>
#include <qkdfk/constraints.hpp>
#include <qkdfk/lmi.hpp>
#include <qkdfk/matqi.hpp>
#include <qkdfk/sdp.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qkdfk {

struct Quadrature {
  rvec nodes;    // ascending, strictly inside (0, 1)
  rvec weights;  // positive, summing to 1
};

// Gauss-Legendre rule mapped onto [0,1]: Newton iteration on P_m from
// Chebyshev-style initial guesses, weights 2/((1-x^2) P_m'(x)^2) halved by
// the affine map.
inline Quadrature gauss_legendre_unit(int m) {
  if (m < 1) throw std::invalid_argument("gauss_legendre_unit: m must be positive");
  Quadrature q;
  q.nodes.resize(m);
  q.weights.resize(m);
  const double pi = 3.14159265358979323846;
  for (int i = 0; i < m; ++i) {
    double x = std::cos(pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(m) + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 60; ++it) {
      double p0 = 1.0, p1 = x;
      for (int n = 2; n <= m; ++n) {
        double p2 = ((2.0 * n - 1.0) * x * p1 - (n - 1.0) * p0) / static_cast<double>(n);
        p0 = p1;
        p1 = p2;
      }
      // p1 = P_m, p0 = P_{m-1}
      dp = static_cast<double>(m) * (x * p1 - p0) / (x * x - 1.0);
      const double step = p1 / dp;
      x -= step;
      if (std::abs(step) < 1e-15) break;
    }
    // Newton walks the roots in descending order; store ascending on [0,1].
    q.nodes(m - 1 - i) = 0.5 * (1.0 + x);
    q.weights(m - 1 - i) = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return q;
}

struct QreApproxConfig {
  int m = 4;               // quadrature points
  int k = 4;               // halvings of the logarithm argument
  double eps_pert = 1e-9;  // mixing weight toward I/d before taking logs
};

struct KeyTermBound {
  double value = 0.0;          // certified lower bound on p_pass * H(key|E)
  DensityMatrix rho_hat;       // state the linearization was taken at
  CertifiedBound certificate;  // rounded dual certificate of the linear SDP
};

namespace detail {

inline bool relent_needs_complex(const ConstraintSet& cons, const SiftMap& sift) {
  auto has_imag = [](const cmat& m) { return m.imag().cwiseAbs().maxCoeff() > 1e-12; };
  for (const auto& c : cons.items)
    if (has_imag(c.op)) return true;
  for (const auto& b : sift.blocks) {
    if (has_imag(b.kraus)) return true;
    for (const auto& p : b.key_projectors)
      if (has_imag(p)) return true;
  }
  return false;
}

// Row-major vectorization: v(r*n+c) = a(r,c). Against |e> = sum_i |ii> this
// satisfies (a (x) I)|e> = vec_rm(a) and <e|(a (x) b)|e> = tr(a b^T).
inline cvec vec_rm(const cmat& a) {
  const int n = static_cast<int>(a.rows());
  cvec v(n * n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) v(r * n + c) = a(r, c);
  return v;
}

struct QreLmi {
  LmiProgram prog;
  MatVarHandle rho;
  int dim = 0;
  bool complex_field = false;
};

// Variables: rho (Hermitian, constraint windows + unit trace + PSD), per
// sifted block a chain M_1..M_k on the squared space with M_0 = I (x)
// pinch(K rho K^dag)^T and X = (K rho K^dag) (x) I, the quadrature slacks
// t_j capped through Schur-complement blocks
//   [[<e|X|e> - s_j t_j / w_j, <e|X], [X|e>, X + s_j(M_k - X)]] >= 0,
// and tau >= -2^k sum_j t_j, which at the optimum is the block divergence in
// nats; the objective sums w_b tau_b / ln 2. The transpose on the pinched
// factor makes <e|X log(X^-1 M_0)|e> equal -D exactly for complex data (it
// is a no-op for real data), and tau is converted to bits in the objective
// because the integral representation of the logarithm is natural-base.
inline QreLmi build_qre_lmi(const ConstraintSet& cons, const SiftMap& sift,
                            const QreApproxConfig& cfg) {
  if (cfg.m < 1) throw std::invalid_argument("qre approximation: m must be >= 1");
  if (cfg.k < 0) throw std::invalid_argument("qre approximation: k must be >= 0");
  if (!(cfg.eps_pert >= 0.0 && cfg.eps_pert <= 1e-6))
    throw std::invalid_argument("qre approximation: eps_pert outside [0, 1e-6]");
  if (!sift.has_blocks())
    throw std::invalid_argument("qre approximation: sift map has no block representation");
  const int d = sift.in_dim;
  for (const auto& c : cons.items) {
    if (c.op.rows() != d || c.op.cols() != d)
      throw std::invalid_argument("qre approximation: observable dimension mismatch");
    if (!is_hermitian(c.op, 1e-9))
      throw std::invalid_argument("qre approximation: observable not Hermitian");
    if (c.lo > c.hi) throw std::invalid_argument("qre approximation: infeasible bounds");
  }

  QreLmi out;
  out.dim = d;
  out.complex_field = relent_needs_complex(cons, sift);
  LmiProgram& prog = out.prog;
  out.rho = prog.add_hermitian_var("rho", d, out.complex_field);
  const std::vector<cmat> rho_basis = hermitian_basis(d, out.complex_field);

  int psd = prog.add_lmi(cmat::Zero(d, d), "rho_psd");
  prog.add_matrix_terms(psd, out.rho, [](const cmat& e) { return e; });

  {
    std::vector<std::pair<int, double>> terms;
    for (int i = 0; i < out.rho.count; ++i) {
      const double tr = rho_basis[static_cast<size_t>(i)].trace().real();
      if (tr != 0.0) terms.push_back({out.rho.first + i, tr});
    }
    prog.add_scalar_row(std::move(terms), '=', 1.0, "trace");
  }
  for (size_t ci = 0; ci < cons.items.size(); ++ci) {
    const auto& c = cons.items[ci];
    std::vector<std::pair<int, double>> terms;
    for (int i = 0; i < out.rho.count; ++i) {
      const double a = (rho_basis[static_cast<size_t>(i)] * c.op).trace().real();
      if (std::abs(a) > 1e-14) terms.push_back({out.rho.first + i, a});
    }
    const std::string nm = c.label.empty() ? ("gamma" + std::to_string(ci)) : c.label;
    if (c.lo == c.hi) {
      prog.add_scalar_row(std::move(terms), '=', c.lo, nm);
    } else {
      if (std::isfinite(c.lo)) prog.add_scalar_row(terms, '>', c.lo, nm + ".lo");
      if (std::isfinite(c.hi)) prog.add_scalar_row(std::move(terms), '<', c.hi, nm + ".hi");
    }
  }

  const Quadrature quad = gauss_legendre_unit(cfg.m);
  const double two_k = std::ldexp(1.0, cfg.k);
  const double per_bit = 1.0 / std::log(2.0);

  for (size_t bidx = 0; bidx < sift.blocks.size(); ++bidx) {
    const SiftBlock& blk = sift.blocks[bidx];
    const int nb = static_cast<int>(blk.kraus.rows());
    const int nn = nb * nb;
    const std::string tag = blk.label.empty() ? ("blk" + std::to_string(bidx)) : blk.label;

    auto block_of = [&](const cmat& e) {
      return cmat(hermitize(blk.kraus * e * blk.kraus.adjoint()));
    };
    auto xmap = [&](const cmat& e) { return cmat(kron(block_of(e), identity(nb))); };
    auto ymap = [&](const cmat& e) {
      return cmat(kron(identity(nb), cmat(pinch(block_of(e), blk.key_projectors).transpose())));
    };

    std::vector<MatVarHandle> link;
    for (int i = 1; i <= cfg.k; ++i)
      link.push_back(
          prog.add_hermitian_var("m_" + tag + "_" + std::to_string(i), nn, out.complex_field));

    // halving chain [[M_i, M_{i+1}], [M_{i+1}, X]] >= 0 for i = 0..k-1
    for (int i = 0; i < cfg.k; ++i) {
      const int lmi = prog.add_lmi(cmat::Zero(2 * nn, 2 * nn), tag + "_sq" + std::to_string(i));
      auto top_left = [&](const cmat& m) {
        cmat g = cmat::Zero(2 * nn, 2 * nn);
        g.topLeftCorner(nn, nn) = m;
        return g;
      };
      auto cross = [&](const cmat& m) {
        cmat g = cmat::Zero(2 * nn, 2 * nn);
        g.topRightCorner(nn, nn) = m;
        g.bottomLeftCorner(nn, nn) = m.adjoint();
        return g;
      };
      auto bottom_right = [&](const cmat& m) {
        cmat g = cmat::Zero(2 * nn, 2 * nn);
        g.bottomRightCorner(nn, nn) = m;
        return g;
      };
      if (i == 0) {
        prog.add_matrix_terms(lmi, out.rho,
                              [&](const cmat& e) { return cmat(top_left(ymap(e)) + bottom_right(xmap(e))); });
      } else {
        prog.add_matrix_terms(lmi, link[static_cast<size_t>(i - 1)], top_left);
        prog.add_matrix_terms(lmi, out.rho, [&](const cmat& e) { return bottom_right(xmap(e)); });
      }
      prog.add_matrix_terms(lmi, link[static_cast<size_t>(i)], cross);
    }

    std::vector<int> tvar;
    for (int j = 0; j < cfg.m; ++j)
      tvar.push_back(prog.add_var("t_" + tag + "_" + std::to_string(j), 'f', 0.0));
    const int tau = prog.add_var("tau_" + tag, 'f', blk.weight * per_bit);

    for (int j = 0; j < cfg.m; ++j) {
      const double s = quad.nodes(j);
      const double w = quad.weights(j);
      const int lmi = prog.add_lmi(cmat::Zero(nn + 1, nn + 1), tag + "_gl" + std::to_string(j));
      prog.add_matrix_terms(lmi, out.rho, [&](const cmat& e) {
        const cmat a = block_of(e);
        cmat g = cmat::Zero(nn + 1, nn + 1);
        g(0, 0) = a.trace();
        const cvec v = vec_rm(a);
        g.block(1, 0, nn, 1) = v;
        g.block(0, 1, 1, nn) = v.adjoint();
        cmat trail = (1.0 - s) * kron(a, identity(nb));
        if (cfg.k == 0) trail += s * ymap(e);
        g.bottomRightCorner(nn, nn) = trail;
        return g;
      });
      if (cfg.k >= 1) {
        prog.add_matrix_terms(lmi, link.back(), [&](const cmat& e) {
          cmat g = cmat::Zero(nn + 1, nn + 1);
          g.bottomRightCorner(nn, nn) = s * e;
          return g;
        });
      }
      cmat cap = cmat::Zero(nn + 1, nn + 1);
      cap(0, 0) = -s / w;
      prog.add_term(lmi, tvar[static_cast<size_t>(j)], cap);
    }

    {
      std::vector<std::pair<int, double>> terms;
      for (int j = 0; j < cfg.m; ++j) terms.push_back({tvar[static_cast<size_t>(j)], two_k});
      terms.push_back({tau, 1.0});
      prog.add_scalar_row(std::move(terms), '>', 0.0, tag + "_log");
    }
  }
  return out;
}

// log2 restricted to the support; eigenvalues under a relative floor are
// treated as exact zeros and left out.
inline cmat support_log2(const cmat& m) {
  const Spectrum s = eig_hermitian(hermitize(m), 1e-8);
  const int n = static_cast<int>(m.rows());
  const double top = std::max(s.eigenvalues.maxCoeff(), 0.0);
  cmat out = cmat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double ev = s.eigenvalues(i);
    if (ev > 1e-13 * std::max(top, 1e-30)) out += std::log2(ev) * proj(cvec(s.eigenvectors.col(i)));
  }
  return hermitize(out);
}

// Clamp to the PSD cone and renormalize to unit trace.
inline cmat project_state(const cmat& m) {
  const int n = static_cast<int>(m.rows());
  const Spectrum s = eig_hermitian(hermitize(m), 1e-6);
  cmat out = cmat::Zero(n, n);
  double tr = 0.0;
  for (int i = 0; i < n; ++i) {
    const double ev = s.eigenvalues(i);
    if (ev > 0.0) {
      out += ev * proj(cvec(s.eigenvectors.col(i)));
      tr += ev;
    }
  }
  if (tr <= 1e-12) return identity(n) / n;
  return hermitize(out / tr);
}

inline cmat mix_toward_id(const cmat& rho, double eps) {
  const int n = static_cast<int>(rho.rows());
  return hermitize((1.0 - eps) * rho + (eps / n) * identity(n));
}

struct LinearKeySdp {
  SdpProblem prob;
  int state_block = 0;
};

// min <grad, sigma> over the same window; the unit-trace row doubles as the
// rounding compensator for the dual certificate.
inline LinearKeySdp build_linear_sdp(const ConstraintSet& cons, int dim, const cmat& grad) {
  LinearKeySdp out;
  out.prob.sense = SdpProblem::Sense::minimize;
  out.state_block = out.prob.add_block("sigma", dim);
  out.prob.set_objective(out.state_block, hermitize(grad));
  const int trace_row = out.prob.add_row('=', 1.0, {{out.state_block, identity(dim)}}, "trace");
  out.prob.compensator_rows[out.state_block] = trace_row;
  for (size_t ci = 0; ci < cons.items.size(); ++ci) {
    const auto& c = cons.items[ci];
    const std::string nm = c.label.empty() ? ("gamma" + std::to_string(ci)) : c.label;
    const cmat op = hermitize(c.op);
    if (c.lo == c.hi) {
      out.prob.add_row('=', c.lo, {{out.state_block, op}}, nm);
    } else {
      if (std::isfinite(c.lo)) out.prob.add_row('>', c.lo, {{out.state_block, op}}, nm + ".lo");
      if (std::isfinite(c.hi)) out.prob.add_row('<', c.hi, {{out.state_block, op}}, nm + ".hi");
    }
  }
  return out;
}

}  // namespace detail

// The (m,k) approximation of min f as a solver-ready problem; the reported
// optimum of the returned (maximization-sense) problem is the approximate
// entropy term in bits.
inline SdpProblem build_qre_sdp(const ConstraintSet& constraints, const SiftMap& sift,
                                const QreApproxConfig& cfg) {
  detail::QreLmi bundle = detail::build_qre_lmi(constraints, sift, cfg);
  LoweredLmi low = lower_lmi(bundle.prog);
  SdpProblem prob = std::move(low.problem);
  prob.sense = SdpProblem::Sense::maximize;
  for (auto& g : prob.objective) g = cmat(-g);
  return prob;
}

// Exact objective sum_b w_b D(K_b rho K_b^dag || pinch_b(...)) in bits.
inline double objective_value(const cmat& rho, const SiftMap& sift) {
  if (!sift.has_blocks())
    throw std::invalid_argument("objective_value: sift map has no block representation");
  double total = 0.0;
  for (const auto& blk : sift.blocks) {
    const cmat r = hermitize(blk.kraus * rho * blk.kraus.adjoint());
    const cmat p = pinch(r, blk.key_projectors);
    const Spectrum sr = eig_hermitian(r, 1e-8);
    const Spectrum sp = eig_hermitian(p, 1e-8);
    double acc = 0.0;
    for (int i = 0; i < sr.eigenvalues.size(); ++i) {
      const double ev = sr.eigenvalues(i);
      if (ev > 1e-300) acc += ev * std::log2(ev);
    }
    for (int i = 0; i < sp.eigenvalues.size(); ++i) {
      const cvec u = sp.eigenvectors.col(i);
      const double mass = std::real((u.adjoint() * r * u)(0));
      if (mass > 1e-15) acc -= mass * std::log2(std::max(sp.eigenvalues(i), 1e-300));
    }
    total += blk.weight * acc;
  }
  return total;
}

inline double objective_value(const DensityMatrix& rho, const SiftMap& sift) {
  return objective_value(rho.mat(), sift);
}

// Gradient of f at a state mixed with eps_pert of the maximally mixed state,
// in bits. Block prefactors cancel between the two logarithms, so only
// log(K rho K^dag) and log(pinch(...)) appear; without a block
// representation the same difference is taken on the support of the dilated
// sifted state and pulled back through the adjoint map.
inline cmat grad_objective(const cmat& rho_hat, const SiftMap& sift, double eps_pert) {
  if (!(eps_pert >= 0.0 && eps_pert <= 1e-6))
    throw std::invalid_argument("grad_objective: eps_pert outside [0, 1e-6]");
  const cmat rho = detail::mix_toward_id(rho_hat, eps_pert);
  if (sift.has_blocks()) {
    std::vector<cmat> parts;
    for (const auto& blk : sift.blocks) {
      const cmat r = hermitize(blk.kraus * rho * blk.kraus.adjoint());
      parts.push_back(cmat(mat_log2_regularized(r, 0.0) -
                           mat_log2_regularized(pinch(r, blk.key_projectors), 0.0)));
    }
    return sift_adjoint(sift, parts);
  }
  const cmat tilde = sift_apply_dilated(sift, rho).blocks[0];
  const cmat pinched = pinch(tilde, sift.key_projectors);
  return sift_adjoint(sift,
                      cmat(detail::support_log2(tilde) - detail::support_log2(pinched)));
}

inline cmat grad_objective(const DensityMatrix& rho_hat, const SiftMap& sift, double eps_pert) {
  return grad_objective(rho_hat.mat(), sift, eps_pert);
}

// Two-step certified lower bound on min f over the constraint window:
// f(sigma) >= f(rho_hat) - tr(grad rho_hat) + min_sigma tr(grad sigma) for
// every state sigma, so the rounded dual certificate of the linear SDP makes
// the total a sound bound whatever state the linearization was taken at. A
// few descent rounds toward the linear minimizer tighten rho_hat; the best
// certified value wins.
inline KeyTermBound certified_keyterm(const ConstraintSet& constraints, const SiftMap& sift,
                                      const QreApproxConfig& cfg) {
  detail::QreLmi bundle = detail::build_qre_lmi(constraints, sift, cfg);
  const int d = bundle.dim;

  // step one (heuristic): moderate tolerance is plenty for a linearization point
  const LmiSolution step_one = solve_lmi(bundle.prog, 1e-6);
  cmat rho_hat = identity(d) / d;  // fallback: interior, keeps the bound valid
  if (step_one.status == SdpStatus::optimal || step_one.status == SdpStatus::near_optimal) {
    bool finite = true;
    for (double v : step_one.w) finite = finite && std::isfinite(v);
    if (finite) rho_hat = bundle.prog.matrix_value(bundle.rho, step_one.w);
  }
  const double eps = cfg.eps_pert;
  cmat cur = detail::mix_toward_id(detail::project_state(rho_hat), eps);

  double best = -std::numeric_limits<double>::infinity();
  CertifiedBound best_cert;
  cmat best_rho = cur;
  for (int round = 0; round < 3; ++round) {
    const cmat g = grad_objective(cur, sift, 0.0);
    const double f_cur = objective_value(cur, sift);
    const double affine = f_cur - std::real((g * cur).trace());
    detail::LinearKeySdp lin = detail::build_linear_sdp(constraints, d, g);
    const SdpSolution inner = solve(lin.prob, 1e-8);
    if (inner.status == SdpStatus::infeasible)
      throw std::runtime_error("certified_keyterm: constraint window admits no state");
    const CertifiedBound cert = certify_dual(lin.prob, inner);
    if (cert.status == SdpStatus::optimal && std::isfinite(cert.value)) {
      const double candidate = affine + cert.value;
      if (candidate > best) {
        best = candidate;
        best_cert = cert;
        best_rho = cur;
      }
    }
    if (round == 2) break;
    if (inner.status != SdpStatus::optimal && inner.status != SdpStatus::near_optimal) break;

    // line search toward the linear minimizer (f is convex along the segment)
    const cmat target = detail::mix_toward_id(
        detail::project_state(inner.primal_blocks[static_cast<size_t>(lin.state_block)]), eps);
    auto fval = [&](double t) {
      return objective_value(cmat((1.0 - t) * cur + t * target), sift);
    };
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = 0.0, b = 1.0;
    double t1 = b - gr * (b - a), t2 = a + gr * (b - a);
    double f1 = fval(t1), f2 = fval(t2);
    for (int it = 0; it < 30; ++it) {
      if (f1 <= f2) {
        b = t2;
        t2 = t1;
        f2 = f1;
        t1 = b - gr * (b - a);
        f1 = fval(t1);
      } else {
        a = t1;
        t1 = t2;
        f1 = f2;
        t2 = a + gr * (b - a);
        f2 = fval(t2);
      }
    }
    const double t_star = 0.5 * (a + b);
    if (fval(t_star) >= f_cur - 1e-10) break;
    cur = hermitize((1.0 - t_star) * cur + t_star * target);
  }
  if (!std::isfinite(best))
    throw std::runtime_error("certified_keyterm: no valid dual certificate obtained");
  return KeyTermBound{best, DensityMatrix(best_rho, {d}), best_cert};
}

}  // namespace qkdfk
