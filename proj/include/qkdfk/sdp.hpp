#pragma once
// Self-contained semidefinite programming over Hermitian PSD blocks with
// scalar linear rows:
//
//   minimize / maximize   sum_k <G_k, X_k>
//   subject to            sum_k <C_{j,k}, X_k>  (= | <= | >=)  b_j
//                         X_k  PSD
//
// solve() runs a Nesterov-Todd scaled primal-dual path-following method on
// the homogeneous self-dual embedding, so it returns primal blocks and dual
// multipliers together and can certify infeasibility. Complex Hermitian
// blocks are embedded as real symmetric blocks of doubled dimension and
// mapped back afterwards.
//
// Multiplier convention (minimize): the dual is
//   maximize b'y  s.t.  S_k = G_k - sum_j y_j C_{j,k} >= 0,
//   y_j >= 0 for '>' rows, y_j <= 0 for '<' rows, free for '=' rows,
// and any exactly-feasible y gives b'y <= <G, X> for every feasible X.
// For maximize-sense problems the reported multipliers satisfy the mirrored
// convention (S_k = sum_j y_j C_{j,k} - G_k >= 0, signs flipped) and bound
// the optimum from above. certify_dual() projects the returned multipliers
// to exact dual feasibility by shifting identity-coefficient row multipliers
// and re-evaluates the bound, which then holds regardless of solver status.

#include <qkdfk/matqi.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace qkdfk {

enum class SdpStatus { optimal, near_optimal, infeasible, numerical_failure };

inline const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::optimal: return "optimal";
    case SdpStatus::near_optimal: return "near-optimal";
    case SdpStatus::infeasible: return "infeasible";
    default: return "numerical-failure";
  }
}

struct SdpBlock {
  std::string name;
  int dim = 1;
};

struct SdpRow {
  std::vector<std::pair<int, cmat>> coeffs;  // (block index, Hermitian coefficient)
  char rel = '=';                            // '=', '<' or '>'
  double bound = 0.0;
  std::string label;
};

struct SdpProblem {
  enum class Sense { minimize, maximize };
  Sense sense = Sense::minimize;
  std::vector<SdpBlock> blocks;
  std::vector<cmat> objective;  // one Hermitian cost matrix per block
  std::vector<SdpRow> rows;
  // Optional hints for certify_dual: block index -> row whose coefficient on
  // that block is a multiple of the identity (and touches no other block).
  std::map<int, int> compensator_rows;

  int add_block(const std::string& name, int dim) {
    blocks.push_back({name, dim});
    objective.push_back(cmat::Zero(dim, dim));
    return static_cast<int>(blocks.size()) - 1;
  }

  void set_objective(int block, const cmat& g) { objective.at(static_cast<size_t>(block)) = g; }

  int add_row(char rel, double bound, std::vector<std::pair<int, cmat>> coeffs,
              const std::string& label = "") {
    rows.push_back({std::move(coeffs), rel, bound, label});
    return static_cast<int>(rows.size()) - 1;
  }

  void validate() const {
    if (blocks.empty()) throw std::invalid_argument("SdpProblem: no blocks");
    if (objective.size() != blocks.size())
      throw std::invalid_argument("SdpProblem: objective/block count mismatch");
    for (size_t k = 0; k < blocks.size(); ++k) {
      if (blocks[k].dim < 1) throw std::invalid_argument("SdpProblem: block dim < 1");
      if (objective[k].rows() != blocks[k].dim || objective[k].cols() != blocks[k].dim)
        throw std::invalid_argument("SdpProblem: objective dim mismatch");
      if (herm_defect(objective[k]) > 1e-9)
        throw std::invalid_argument("SdpProblem: objective not Hermitian");
    }
    for (const auto& r : rows) {
      if (r.rel != '=' && r.rel != '<' && r.rel != '>')
        throw std::invalid_argument("SdpProblem: bad relation");
      if (!std::isfinite(r.bound)) throw std::invalid_argument("SdpProblem: bad bound");
      for (const auto& [k, c] : r.coeffs) {
        if (k < 0 || k >= static_cast<int>(blocks.size()))
          throw std::invalid_argument("SdpProblem: row references unknown block");
        if (c.rows() != blocks[static_cast<size_t>(k)].dim ||
            c.cols() != blocks[static_cast<size_t>(k)].dim)
          throw std::invalid_argument("SdpProblem: row coefficient dim mismatch");
        if (herm_defect(c) > 1e-9)
          throw std::invalid_argument("SdpProblem: row coefficient not Hermitian");
      }
    }
  }
};

struct SdpSolution {
  std::vector<cmat> primal_blocks;
  std::vector<double> dual_multipliers;
  double primal_value = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;
  int iterations = 0;
  SdpStatus status = SdpStatus::numerical_failure;
};

struct CertifiedBound {
  double value = 0.0;
  enum class Direction { lower, upper };
  Direction direction = Direction::lower;
  double psd_residual = 0.0;
  double linear_residual = 0.0;
  SdpStatus status = SdpStatus::numerical_failure;
};

struct SlaterReport {
  bool feasible = false;       // scalar rows admit some PSD solution
  bool primal_strict = false;  // a strictly positive-definite solution exists
  bool dual_strict = false;    // the dual has a strictly feasible multiplier
  double primal_margin = 0.0;  // best t with X >= t*I feasible (capped at 1)
  double dual_margin = 0.0;    // best t with S_k >= t*I dual-feasible (capped at 1)
  std::string note;
};

// ---------------------------------------------------------------------------
// Internal lowered representation and interior-point engine

namespace detail {

inline bool matrix_is_real(const cmat& m, double tol = 1e-13) {
  for (int c = 0; c < m.cols(); ++c)
    for (int r = 0; r < m.rows(); ++r)
      if (std::abs(m(r, c).imag()) > tol) return false;
  return true;
}

// Half-scaled real embedding: <embed_half(A), embed_half_var(X)> matches the
// complex pairing <A, X> exactly.
inline rmat embed_half(const cmat& m) {
  const int d = static_cast<int>(m.rows());
  rmat out(2 * d, 2 * d);
  out.topLeftCorner(d, d) = 0.5 * m.real();
  out.bottomRightCorner(d, d) = 0.5 * m.real();
  out.topRightCorner(d, d) = -0.5 * m.imag();
  out.bottomLeftCorner(d, d) = 0.5 * m.imag();
  return out;
}

// Inverse map for primal solutions of embedded blocks.
inline cmat extract_complex(const rmat& y) {
  const int d = static_cast<int>(y.rows()) / 2;
  rmat a = 0.5 * (y.topLeftCorner(d, d) + y.bottomRightCorner(d, d));
  rmat bmat = 0.5 * (y.bottomLeftCorner(d, d) - y.topRightCorner(d, d));
  cmat out = a.cast<cplx>() + cplx(0.0, 1.0) * bmat.cast<cplx>();
  return hermitize(out);
}

struct CoeffEntry {
  int r, c;
  double v;
};

// Sparse symmetric coefficient with a dense fallback for heavy rows.
struct BlockCoeff {
  std::vector<CoeffEntry> ent;  // upper triangle (r <= c)
  rmat dense;
  bool has_dense = false;

  void build(const rmat& m) {
    const int d = static_cast<int>(m.rows());
    ent.clear();
    for (int c = 0; c < d; ++c)
      for (int r = 0; r <= c; ++r)
        if (m(r, c) != 0.0) ent.push_back({r, c, m(r, c)});
    has_dense = static_cast<int>(ent.size()) > d;
    if (has_dense) dense = m;
  }

  double inner(const rmat& x) const {
    if (has_dense) return (dense.array() * x.array()).sum();
    double acc = 0.0;
    for (const auto& e : ent) acc += (e.r == e.c ? 1.0 : 2.0) * e.v * x(e.r, e.c);
    return acc;
  }

  void scatter(rmat& x, double scale) const {
    if (has_dense) {
      x.noalias() += scale * dense;
      return;
    }
    for (const auto& e : ent) {
      x(e.r, e.c) += scale * e.v;
      if (e.r != e.c) x(e.c, e.r) += scale * e.v;
    }
  }

  // P * C * P using outer products of P's columns when sparse.
  void congruence(const rmat& p, rmat& out) const {
    if (has_dense) {
      out.noalias() = p * dense * p;
      return;
    }
    out.setZero();
    for (const auto& e : ent) {
      if (e.r == e.c) {
        out.noalias() += e.v * (p.col(e.r) * p.col(e.r).transpose());
      } else {
        out.noalias() += e.v * (p.col(e.r) * p.col(e.c).transpose());
        out.noalias() += e.v * (p.col(e.c) * p.col(e.r).transpose());
      }
    }
  }
};

struct LpCol {
  double cost = 0.0;
  std::vector<std::pair<int, double>> rows;  // (row index, coefficient)
  int user_block = -1;                       // -1 for internal slack columns
};

struct Lowered {
  int p = 0;  // number of rows (all equalities after slacks)
  rvec b;
  // PSD part
  std::vector<int> psd_dim;         // internal (possibly doubled) dims
  std::vector<int> psd_user;        // user block index
  std::vector<bool> psd_complex;    // embedded?
  std::vector<rmat> cost_psd;
  std::vector<std::vector<std::pair<int, BlockCoeff>>> rows_by_psd;  // per block: (row, coeff)
  // LP part
  std::vector<LpCol> lp;
  std::vector<int> lp_of_user;  // user block index -> lp column (or -1)
  double flip = 1.0;            // +1 minimize, -1 maximize (objective pre-multiplied)
};

inline Lowered lower(const SdpProblem& prob) {
  prob.validate();
  Lowered low;
  low.flip = (prob.sense == SdpProblem::Sense::minimize) ? 1.0 : -1.0;
  const int nb = static_cast<int>(prob.blocks.size());
  low.p = static_cast<int>(prob.rows.size());

  // Field detection per user block.
  std::vector<bool> is_complex(static_cast<size_t>(nb), false);
  for (int k = 0; k < nb; ++k)
    if (!matrix_is_real(prob.objective[static_cast<size_t>(k)])) is_complex[static_cast<size_t>(k)] = true;
  for (const auto& r : prob.rows)
    for (const auto& [k, c] : r.coeffs)
      if (!matrix_is_real(c)) is_complex[static_cast<size_t>(k)] = true;

  // Classify user blocks: 1x1 -> LP column, otherwise PSD block.
  std::vector<int> psd_of_user(static_cast<size_t>(nb), -1);
  low.lp_of_user.assign(static_cast<size_t>(nb), -1);
  for (int k = 0; k < nb; ++k) {
    const int d = prob.blocks[static_cast<size_t>(k)].dim;
    const cmat& g = prob.objective[static_cast<size_t>(k)];
    if (d == 1) {
      LpCol col;
      col.cost = low.flip * g(0, 0).real();
      col.user_block = k;
      low.lp_of_user[static_cast<size_t>(k)] = static_cast<int>(low.lp.size());
      low.lp.push_back(std::move(col));
    } else {
      psd_of_user[static_cast<size_t>(k)] = static_cast<int>(low.psd_dim.size());
      low.psd_dim.push_back(is_complex[static_cast<size_t>(k)] ? 2 * d : d);
      low.psd_user.push_back(k);
      low.psd_complex.push_back(is_complex[static_cast<size_t>(k)]);
      low.cost_psd.push_back(is_complex[static_cast<size_t>(k)] ? rmat(low.flip * embed_half(g))
                                                                : rmat(low.flip * g.real()));
    }
  }
  low.rows_by_psd.resize(low.psd_dim.size());

  low.b.resize(low.p);
  for (int j = 0; j < low.p; ++j) {
    const SdpRow& r = prob.rows[static_cast<size_t>(j)];
    low.b(j) = r.bound;
    for (const auto& [k, cc] : r.coeffs) {
      int pk = psd_of_user[static_cast<size_t>(k)];
      if (pk >= 0) {
        BlockCoeff bc;
        bc.build(low.psd_complex[static_cast<size_t>(pk)] ? rmat(embed_half(cc)) : rmat(cc.real()));
        if (!bc.ent.empty())
          low.rows_by_psd[static_cast<size_t>(pk)].push_back({j, std::move(bc)});
      } else {
        int lk = low.lp_of_user[static_cast<size_t>(k)];
        double v = cc(0, 0).real();
        if (v != 0.0) low.lp[static_cast<size_t>(lk)].rows.push_back({j, v});
      }
    }
    if (r.rel != '=') {
      LpCol slack;
      slack.cost = 0.0;
      slack.rows.push_back({j, r.rel == '<' ? 1.0 : -1.0});
      low.lp.push_back(std::move(slack));
    }
  }
  return low;
}

struct ConePoint {
  std::vector<rmat> psd;
  rvec lp;
};

inline double cone_dot(const ConePoint& a, const ConePoint& b) {
  double acc = a.lp.size() ? a.lp.dot(b.lp) : 0.0;
  for (size_t k = 0; k < a.psd.size(); ++k) acc += (a.psd[k].array() * b.psd[k].array()).sum();
  return acc;
}

inline double cone_norm(const ConePoint& a) { return std::sqrt(std::max(0.0, cone_dot(a, a))); }

struct IpmWork {
  const Lowered* low = nullptr;
  // Per block scaling state
  std::vector<rmat> R, Rinv, P, Pinv;
  std::vector<rvec> lambda;
  rvec lp_x_over_s;  // H^{-1} diagonal for LP entries

  ConePoint make_point(double fill) const {
    ConePoint pt;
    for (int d : low->psd_dim) pt.psd.push_back(fill * rmat::Identity(d, d));
    pt.lp = rvec::Constant(static_cast<Eigen::Index>(low->lp.size()), fill);
    return pt;
  }

  rvec a_apply(const ConePoint& x) const {
    rvec out = rvec::Zero(low->p);
    for (size_t k = 0; k < low->rows_by_psd.size(); ++k)
      for (const auto& [j, c] : low->rows_by_psd[k]) out(j) += c.inner(x.psd[k]);
    for (size_t l = 0; l < low->lp.size(); ++l)
      for (const auto& [j, v] : low->lp[l].rows) out(j) += v * x.lp(static_cast<Eigen::Index>(l));
    return out;
  }

  ConePoint at_apply(const rvec& y) const {
    ConePoint out;
    for (size_t k = 0; k < low->psd_dim.size(); ++k) {
      rmat acc = rmat::Zero(low->psd_dim[k], low->psd_dim[k]);
      for (const auto& [j, c] : low->rows_by_psd[k]) c.scatter(acc, y(j));
      out.psd.push_back(std::move(acc));
    }
    out.lp = rvec::Zero(static_cast<Eigen::Index>(low->lp.size()));
    for (size_t l = 0; l < low->lp.size(); ++l)
      for (const auto& [j, v] : low->lp[l].rows) out.lp(static_cast<Eigen::Index>(l)) += v * y(j);
    return out;
  }

  ConePoint cost_point() const {
    ConePoint c;
    c.psd = low->cost_psd;
    c.lp = rvec::Zero(static_cast<Eigen::Index>(low->lp.size()));
    for (size_t l = 0; l < low->lp.size(); ++l) c.lp(static_cast<Eigen::Index>(l)) = low->lp[l].cost;
    return c;
  }

  ConePoint hinv(const ConePoint& v) const {
    ConePoint out;
    for (size_t k = 0; k < v.psd.size(); ++k) out.psd.push_back(P[k] * v.psd[k] * P[k]);
    out.lp = lp_x_over_s.cwiseProduct(v.lp);
    return out;
  }
};

// Maximum step alpha with X + alpha D staying PSD (per-block exact bound).
inline double max_step_psd(const rmat& x, const rmat& d) {
  Eigen::LLT<rmat> llt(x);
  if (llt.info() != Eigen::Success) return 0.0;
  rmat l = llt.matrixL();
  rmat m = l.template triangularView<Eigen::Lower>().solve(d);
  m = l.template triangularView<Eigen::Lower>().solve(rmat(m.transpose()));
  Eigen::SelfAdjointEigenSolver<rmat> es(0.5 * (m + m.transpose()),
                                         Eigen::EigenvaluesOnly);
  double lo = es.eigenvalues().minCoeff();
  if (lo >= 0.0) return std::numeric_limits<double>::infinity();
  return -1.0 / lo;
}

struct IpmResult {
  ConePoint x, s;
  rvec y;
  double tau = 1.0, kappa = 1.0;
  int iterations = 0;
  SdpStatus status = SdpStatus::numerical_failure;
  double pres = 0.0, dres = 0.0, relgap = 0.0;
};

inline IpmResult ipm_solve(const Lowered& low, double tol, int maxiter = 200) {
  IpmWork w;
  w.low = &low;
  const int p = low.p;
  const size_t nblk = low.psd_dim.size();
  double nu = static_cast<double>(low.lp.size());
  for (int d : low.psd_dim) nu += d;

  IpmResult res;
  res.x = w.make_point(1.0);
  res.s = w.make_point(1.0);
  res.y = rvec::Zero(p);
  res.tau = 1.0;
  res.kappa = 1.0;

  const ConePoint c = w.cost_point();
  const rvec& b = low.b;
  const double bnorm = 1.0 + b.norm();
  const double cnorm = 1.0 + cone_norm(c);

  std::vector<std::vector<rmat>> tmats(nblk);  // P C_j P per block, aligned with adjacency
  for (size_t k = 0; k < nblk; ++k) tmats[k].resize(low.rows_by_psd[k].size());

  int stall = 0, collapsed = 0;
  double best_q = std::numeric_limits<double>::infinity();
  IpmResult best = res;
  for (int it = 0; it < maxiter; ++it) {
    res.iterations = it;
    // Residuals of the homogeneous embedding.
    rvec rp = w.a_apply(res.x) - b * res.tau;
    ConePoint aty = w.at_apply(res.y);
    ConePoint rd;
    rd.lp = c.lp * res.tau - aty.lp - res.s.lp;
    for (size_t k = 0; k < nblk; ++k) rd.psd.push_back(c.psd[k] * res.tau - aty.psd[k] - res.s.psd[k]);
    const double cx = cone_dot(c, res.x), by = b.dot(res.y);
    double rg = res.kappa + cx - by;
    double mu = (cone_dot(res.x, res.s) + res.tau * res.kappa) / (nu + 1.0);

    // Convergence on the de-homogenized iterate.
    const double inv_tau = 1.0 / res.tau;
    res.pres = rp.norm() * inv_tau / bnorm;
    res.dres = cone_norm(rd) * inv_tau / cnorm;
    const double pval = cx * inv_tau, dval = by * inv_tau;
    res.relgap = std::abs(pval - dval) / (1.0 + std::abs(pval) + std::abs(dval));
    double q = std::max({res.pres, res.dres, res.relgap});
    if (q < best_q * (1.0 - 1e-12)) {
      best_q = q;
      best = res;
      stall = 0;
    } else if (++stall > 30) {
      break;
    }
    if (q <= tol) {
      res.status = SdpStatus::optimal;
      return res;
    }
    if (res.tau < 1e-9 * res.kappa) {
      res.status = SdpStatus::infeasible;
      return res;
    }
    if (mu < 1e-18) break;

    // Nesterov-Todd scalings.
    w.R.assign(nblk, rmat());
    w.Rinv.assign(nblk, rmat());
    w.P.assign(nblk, rmat());
    w.Pinv.assign(nblk, rmat());
    w.lambda.assign(nblk, rvec());
    bool scale_ok = true;
    for (size_t k = 0; k < nblk; ++k) {
      Eigen::LLT<rmat> lltx(res.x.psd[k]), llts(res.s.psd[k]);
      if (lltx.info() != Eigen::Success || llts.info() != Eigen::Success) {
        scale_ok = false;
        break;
      }
      rmat lx = lltx.matrixL(), ls = llts.matrixL();
      Eigen::JacobiSVD<rmat> svd(rmat(ls.transpose() * lx),
                                 Eigen::ComputeFullU | Eigen::ComputeFullV);
      rvec sv = svd.singularValues();
      if (sv.minCoeff() <= 0.0) {
        scale_ok = false;
        break;
      }
      rvec isq = sv.cwiseSqrt().cwiseInverse();
      w.R[k] = lx * svd.matrixV() * isq.asDiagonal();
      w.Rinv[k] = isq.asDiagonal() * svd.matrixU().transpose() * ls.transpose();
      w.P[k] = w.R[k] * w.R[k].transpose();
      w.Pinv[k] = w.Rinv[k].transpose() * w.Rinv[k];
      w.lambda[k] = sv;
    }
    if (!scale_ok) break;
    w.lp_x_over_s = res.x.lp.cwiseQuotient(res.s.lp);

    // Schur complement M = A H^{-1} A'.
    rmat m = rmat::Zero(p, p);
    for (size_t k = 0; k < nblk; ++k) {
      const auto& adj = low.rows_by_psd[k];
      for (size_t a = 0; a < adj.size(); ++a) {
        tmats[k][a].resize(low.psd_dim[k], low.psd_dim[k]);
        adj[a].second.congruence(w.P[k], tmats[k][a]);
      }
      for (size_t a = 0; a < adj.size(); ++a)
        for (size_t bidx = a; bidx < adj.size(); ++bidx) {
          double v = adj[bidx].second.inner(tmats[k][a]);
          m(adj[a].first, adj[bidx].first) += v;
          if (adj[a].first != adj[bidx].first) m(adj[bidx].first, adj[a].first) += v;
        }
    }
    for (size_t l = 0; l < low.lp.size(); ++l) {
      const auto& rowsl = low.lp[l].rows;
      const double hl = w.lp_x_over_s(static_cast<Eigen::Index>(l));
      for (size_t a = 0; a < rowsl.size(); ++a)
        for (size_t bidx = a; bidx < rowsl.size(); ++bidx) {
          double v = hl * rowsl[a].second * rowsl[bidx].second;
          m(rowsl[a].first, rowsl[bidx].first) += v;
          if (rowsl[a].first != rowsl[bidx].first) m(rowsl[bidx].first, rowsl[a].first) += v;
        }
    }

    Eigen::LLT<rmat> mllt;
    rmat mreg;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 4; ++attempt) {
      mreg = m;
      if (ridge > 0.0) mreg.diagonal().array() += ridge;
      mllt.compute(mreg);
      if (mllt.info() == Eigen::Success) break;
      ridge = (ridge == 0.0) ? 1e-12 * (1.0 + m.diagonal().maxCoeff()) : ridge * 1e3;
    }
    if (mllt.info() != Eigen::Success) break;
    // A couple of refinement passes keep the Newton direction consistent even
    // when the Schur system is nearly singular close to the optimum.
    auto msolve = [&](const rvec& rhs) {
      rvec sol_v = mllt.solve(rhs);
      for (int pass = 0; pass < 2; ++pass) sol_v += mllt.solve(rvec(rhs - mreg * sol_v));
      return sol_v;
    };

    const ConePoint hc = w.hinv(c);
    const rvec a_hc = w.a_apply(hc);
    const rvec u2 = msolve(b + a_hc);
    const double c_hc = cone_dot(c, hc);

    struct Dir {
      ConePoint dx, ds;
      rvec dy;
      double dtau = 0.0, dkappa = 0.0;
    };

    // Solves the scaled Newton system for explicit right-hand-side targets:
    //   A dx - b dtau                  = rp_t
    //   c dtau - A' dy - ds            = rd_t
    //   dkappa + c.dx - b.dy           = rg_t
    //   lambda o (Dx + Ds)             = Rc      (per cone block)
    //   tau dkappa + kappa dtau        = rc_tk
    auto solve_dir = [&](const rvec& rp_t, const ConePoint& rd_t, double rg_t,
                         const std::vector<rmat>& rc_psd, const rvec& rc_lp, double rc_tk,
                         Dir& d) {
      // G_c = R^{-T} Linv(Rc) R^{-1} per block; LP analogue rc/x.
      ConePoint gc;
      for (size_t k = 0; k < nblk; ++k) {
        const rvec& lam = w.lambda[k];
        rmat t = rc_psd[k];
        for (int r = 0; r < t.rows(); ++r)
          for (int col = 0; col < t.cols(); ++col) t(r, col) *= 2.0 / (lam(r) + lam(col));
        gc.psd.push_back(w.Rinv[k].transpose() * t * w.Rinv[k]);
      }
      gc.lp = rc_lp.cwiseQuotient(res.x.lp);

      ConePoint w0;
      for (size_t k = 0; k < nblk; ++k)
        w0.psd.push_back(w.P[k] * (gc.psd[k] + rd_t.psd[k]) * w.P[k]);
      w0.lp = w.lp_x_over_s.cwiseProduct(gc.lp + rd_t.lp);

      rvec q1 = rp_t - w.a_apply(w0);
      rvec y1 = msolve(q1);
      const double denom = (b - a_hc).dot(u2) + c_hc + res.kappa / res.tau;
      double numer = -rg_t + rc_tk / res.tau + cone_dot(c, w0) + a_hc.dot(y1) - b.dot(y1);
      d.dtau = (std::abs(denom) > 1e-300) ? numer / denom : 0.0;
      d.dy = y1 + d.dtau * u2;
      ConePoint aty_d = w.at_apply(d.dy);
      d.dx.psd.clear();
      d.ds.psd.clear();
      for (size_t k = 0; k < nblk; ++k)
        d.dx.psd.push_back(w0.psd[k] + w.P[k] * aty_d.psd[k] * w.P[k] - d.dtau * hc.psd[k]);
      d.dx.lp = w0.lp + w.lp_x_over_s.cwiseProduct(aty_d.lp) - d.dtau * hc.lp;
      // Recover ds from the dual-feasibility row and dkappa from the gap row
      // (rather than from the complementarity rows): those residuals then
      // contract exactly however inaccurate the Schur solve was, and the
      // leftover lands in complementarity where it only perturbs centering.
      for (size_t k = 0; k < nblk; ++k)
        d.ds.psd.push_back(c.psd[k] * d.dtau - aty_d.psd[k] - rd_t.psd[k]);
      d.ds.lp = c.lp * d.dtau - aty_d.lp - rd_t.lp;
      d.dkappa = rg_t - cone_dot(c, d.dx) + b.dot(d.dy);
      // Project out asymmetric roundoff from the scaling sandwiches so the
      // direction we score is the direction the step actually applies.
      for (size_t k = 0; k < nblk; ++k) {
        d.dx.psd[k] = 0.5 * (d.dx.psd[k] + d.dx.psd[k].transpose().eval());
        d.ds.psd[k] = 0.5 * (d.ds.psd[k] + d.ds.psd[k].transpose().eval());
      }
    };

    struct DirResid {
      rvec e_p;
      ConePoint e_d;
      double e_g = 0.0;
      std::vector<rmat> e_c;
      rvec e_clp;
      double e_tk = 0.0;
    };

    auto measure_dir = [&](const rvec& rp_t, const ConePoint& rd_t, double rg_t,
                           const std::vector<rmat>& rc_psd, const rvec& rc_lp, double rc_tk,
                           const Dir& d, DirResid& r) -> double {
      r.e_p = w.a_apply(d.dx) - b * d.dtau - rp_t;
      ConePoint aty_d = w.at_apply(d.dy);
      r.e_d.psd.clear();
      for (size_t k = 0; k < nblk; ++k)
        r.e_d.psd.push_back(c.psd[k] * d.dtau - aty_d.psd[k] - d.ds.psd[k] - rd_t.psd[k]);
      r.e_d.lp = c.lp * d.dtau - aty_d.lp - d.ds.lp - rd_t.lp;
      r.e_g = d.dkappa + cone_dot(c, d.dx) - b.dot(d.dy) - rg_t;
      r.e_c.assign(nblk, rmat());
      for (size_t k = 0; k < nblk; ++k) {
        rmat dxs = w.Rinv[k] * d.dx.psd[k] * w.Rinv[k].transpose();
        rmat dss = w.R[k].transpose() * d.ds.psd[k] * w.R[k];
        rmat sum = dxs + dss;
        const rvec& lam = w.lambda[k];
        for (int rr = 0; rr < sum.rows(); ++rr)
          for (int col = 0; col < sum.cols(); ++col)
            sum(rr, col) *= 0.5 * (lam(rr) + lam(col));
        r.e_c[k] = sum - rc_psd[k];
      }
      r.e_clp = res.s.lp.cwiseProduct(d.dx.lp) + res.x.lp.cwiseProduct(d.ds.lp) - rc_lp;
      r.e_tk = res.tau * d.dkappa + res.kappa * d.dtau - rc_tk;
      double err = std::max({r.e_p.norm(), std::abs(r.e_g), r.e_clp.norm(), std::abs(r.e_tk)});
      for (size_t k = 0; k < nblk; ++k)
        err = std::max({err, r.e_d.psd[k].norm(), r.e_c[k].norm()});
      return std::max(err, r.e_d.lp.norm());
    };

    // Full-system iterative refinement with monotone acceptance: measure the
    // achieved equation residuals, solve for a correction, and keep it only if
    // the measured error actually drops. Once the Schur system turns
    // ill-conditioned near the optimum, unchecked refinement diverges.
    auto polish_dir = [&](const rvec& rp_t, const ConePoint& rd_t, double rg_t,
                          const std::vector<rmat>& rc_psd, const rvec& rc_lp, double rc_tk,
                          Dir& d) -> std::pair<double, double> {
      DirResid r;
      double e_best = measure_dir(rp_t, rd_t, rg_t, rc_psd, rc_lp, rc_tk, d, r);
      const double e0 = e_best;
      for (int round = 0; round < 3 && e_best > 1e-14; ++round) {
        ConePoint e_d_neg;
        for (size_t k = 0; k < nblk; ++k) e_d_neg.psd.push_back(-r.e_d.psd[k]);
        e_d_neg.lp = -r.e_d.lp;
        std::vector<rmat> e_c_neg(nblk);
        for (size_t k = 0; k < nblk; ++k) e_c_neg[k] = -r.e_c[k];
        Dir corr;
        solve_dir(rvec(-r.e_p), e_d_neg, -r.e_g, e_c_neg, rvec(-r.e_clp), -r.e_tk, corr);
        Dir cand = d;
        for (size_t k = 0; k < nblk; ++k) {
          cand.dx.psd[k] += corr.dx.psd[k];
          cand.ds.psd[k] += corr.ds.psd[k];
        }
        cand.dx.lp += corr.dx.lp;
        cand.ds.lp += corr.ds.lp;
        cand.dy += corr.dy;
        cand.dtau += corr.dtau;
        cand.dkappa += corr.dkappa;
        DirResid r_cand;
        double e_cand = measure_dir(rp_t, rd_t, rg_t, rc_psd, rc_lp, rc_tk, cand, r_cand);
        if (!(e_cand < e_best)) break;
        d = std::move(cand);
        r = std::move(r_cand);
        e_best = e_cand;
      }
      return {e0, e_best};
    };

    auto max_alpha = [&](const Dir& d) {
      double alpha = std::numeric_limits<double>::infinity();
      for (size_t k = 0; k < nblk; ++k) {
        alpha = std::min(alpha, max_step_psd(res.x.psd[k], d.dx.psd[k]));
        alpha = std::min(alpha, max_step_psd(res.s.psd[k], d.ds.psd[k]));
      }
      for (Eigen::Index l = 0; l < res.x.lp.size(); ++l) {
        if (d.dx.lp(l) < 0.0) alpha = std::min(alpha, -res.x.lp(l) / d.dx.lp(l));
        if (d.ds.lp(l) < 0.0) alpha = std::min(alpha, -res.s.lp(l) / d.ds.lp(l));
      }
      if (d.dtau < 0.0) alpha = std::min(alpha, -res.tau / d.dtau);
      if (d.dkappa < 0.0) alpha = std::min(alpha, -res.kappa / d.dkappa);
      return alpha;
    };

    // Predictor (affine scaling) direction.
    ConePoint rd_neg;
    for (size_t k = 0; k < nblk; ++k) rd_neg.psd.push_back(-rd.psd[k]);
    rd_neg.lp = -rd.lp;
    std::vector<rmat> rc_aff(nblk);
    for (size_t k = 0; k < nblk; ++k) {
      rc_aff[k] = rmat::Zero(low.psd_dim[k], low.psd_dim[k]);
      rc_aff[k].diagonal() = -w.lambda[k].cwiseProduct(w.lambda[k]);
    }
    rvec rc_lp_aff = -res.x.lp.cwiseProduct(res.s.lp);
    Dir aff;
    solve_dir(rvec(-rp), rd_neg, -rg, rc_aff, rc_lp_aff, -res.tau * res.kappa, aff);
    polish_dir(rvec(-rp), rd_neg, -rg, rc_aff, rc_lp_aff, -res.tau * res.kappa, aff);
    double alpha_aff = std::min(1.0, 0.99 * max_alpha(aff));

    double mu_aff = 0.0;
    {
      ConePoint xa, sa;
      for (size_t k = 0; k < nblk; ++k) {
        xa.psd.push_back(res.x.psd[k] + alpha_aff * aff.dx.psd[k]);
        sa.psd.push_back(res.s.psd[k] + alpha_aff * aff.ds.psd[k]);
      }
      xa.lp = res.x.lp + alpha_aff * aff.dx.lp;
      sa.lp = res.s.lp + alpha_aff * aff.ds.lp;
      mu_aff = (cone_dot(xa, sa) +
                (res.tau + alpha_aff * aff.dtau) * (res.kappa + alpha_aff * aff.dkappa)) /
               (nu + 1.0);
    }
    double sigma = std::min(1.0, std::max(0.0, std::pow(mu_aff / mu, 3.0)));

    // Corrector with Mehrotra second-order term in the scaled space.
    const double eta = 1.0 - sigma;
    ConePoint rd_t;
    for (size_t k = 0; k < nblk; ++k) rd_t.psd.push_back(-eta * rd.psd[k]);
    rd_t.lp = -eta * rd.lp;
    std::vector<rmat> rc_cmb(nblk);
    for (size_t k = 0; k < nblk; ++k) {
      rmat dxs = w.Rinv[k] * aff.dx.psd[k] * w.Rinv[k].transpose();
      rmat dss = w.R[k].transpose() * aff.ds.psd[k] * w.R[k];
      rmat cross = 0.5 * (dxs * dss + dss * dxs);
      rc_cmb[k] = -cross;
      rc_cmb[k].diagonal().array() += sigma * mu;
      rc_cmb[k].diagonal() -= w.lambda[k].cwiseProduct(w.lambda[k]);
    }
    rvec rc_lp_cmb = rvec::Constant(res.x.lp.size(), sigma * mu) -
                     res.x.lp.cwiseProduct(res.s.lp) - aff.dx.lp.cwiseProduct(aff.ds.lp);
    double rc_tk_cmb = sigma * mu - res.tau * res.kappa - aff.dtau * aff.dkappa;
    Dir cmb;
    solve_dir(rvec(-eta * rp), rd_t, -eta * rg, rc_cmb, rc_lp_cmb, rc_tk_cmb, cmb);
    auto [e0, efin] =
        polish_dir(rvec(-eta * rp), rd_t, -eta * rg, rc_cmb, rc_lp_cmb, rc_tk_cmb, cmb);
    double alpha = std::min(1.0, 0.99 * max_alpha(cmb));
    if (std::getenv("QKDFK_IPM_TRACE"))
      std::fprintf(stderr,
                   "it=%3d mu=%9.2e pres=%9.2e dres=%9.2e gap=%9.2e a_aff=%6.3f sigma=%6.3f "
                   "alpha=%6.3f tau=%9.2e kappa=%9.2e ridge=%8.1e e0=%8.1e efin=%8.1e "
                   "nx=%8.1e ny=%8.1e ndx=%8.1e ndy=%8.1e\n",
                   it, mu, res.pres, res.dres, res.relgap, alpha_aff, sigma, alpha, res.tau,
                   res.kappa, ridge, e0, efin, cone_norm(res.x), res.y.norm(),
                   cone_norm(cmb.dx), cmb.dy.norm());
    if (!(alpha > 0.0) || !std::isfinite(alpha)) break;
    if (alpha < 1e-5) {
      if (++collapsed >= 3) break;  // direction noise dominates; keep best iterate
    } else {
      collapsed = 0;
    }

    for (size_t k = 0; k < nblk; ++k) {
      res.x.psd[k] += alpha * cmb.dx.psd[k];
      res.x.psd[k] = 0.5 * (res.x.psd[k] + res.x.psd[k].transpose().eval());
      res.s.psd[k] += alpha * cmb.ds.psd[k];
      res.s.psd[k] = 0.5 * (res.s.psd[k] + res.s.psd[k].transpose().eval());
    }
    res.x.lp += alpha * cmb.dx.lp;
    res.s.lp += alpha * cmb.ds.lp;
    res.y += alpha * cmb.dy;
    res.tau += alpha * cmb.dtau;
    res.kappa += alpha * cmb.dkappa;
  }

  // Fall back to the best iterate seen if the final one drifted.
  {
    double q_final = std::max({res.pres, res.dres, res.relgap});
    if (best_q < q_final) {
      int it_count = res.iterations;
      res = best;
      res.iterations = it_count;
    }
  }
  double q = std::max({res.pres, res.dres, res.relgap});
  if (res.tau < 1e-9 * res.kappa)
    res.status = SdpStatus::infeasible;
  else if (q <= tol)
    res.status = SdpStatus::optimal;
  else if (q <= 1e-5)
    res.status = SdpStatus::near_optimal;
  else
    res.status = SdpStatus::numerical_failure;
  return res;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public entry points

inline SdpSolution solve(const SdpProblem& prob, double tol = 1e-8) {
  detail::Lowered low = detail::lower(prob);
  detail::IpmResult r = detail::ipm_solve(low, tol);

  SdpSolution sol;
  sol.iterations = r.iterations;
  sol.status = r.status;
  const double inv_tau = (r.tau > 0.0) ? 1.0 / r.tau : 0.0;

  // Map the primal point back to user blocks.
  sol.primal_blocks.resize(prob.blocks.size());
  for (size_t k = 0; k < low.psd_dim.size(); ++k) {
    rmat xs = inv_tau * r.x.psd[k];
    const int user = low.psd_user[k];
    sol.primal_blocks[static_cast<size_t>(user)] =
        low.psd_complex[k] ? detail::extract_complex(xs) : cmat(xs.cast<cplx>());
  }
  for (size_t u = 0; u < prob.blocks.size(); ++u) {
    int l = low.lp_of_user[u];
    if (l >= 0) {
      cmat v(1, 1);
      v(0, 0) = inv_tau * r.x.lp(static_cast<Eigen::Index>(l));
      sol.primal_blocks[u] = v;
    }
  }

  sol.dual_multipliers.resize(prob.rows.size());
  for (size_t j = 0; j < prob.rows.size(); ++j)
    sol.dual_multipliers[j] = low.flip * inv_tau * r.y(static_cast<Eigen::Index>(j));

  // Objective values in the stated sense.
  double pint = 0.0;
  for (size_t k = 0; k < low.psd_dim.size(); ++k)
    pint += (low.cost_psd[k].array() * (inv_tau * r.x.psd[k]).array()).sum();
  for (size_t l = 0; l < low.lp.size(); ++l)
    pint += low.lp[l].cost * inv_tau * r.x.lp(static_cast<Eigen::Index>(l));
  double dint = low.b.dot(r.y) * inv_tau;
  sol.primal_value = low.flip * pint;
  sol.dual_value = low.flip * dint;
  sol.gap = std::abs(sol.primal_value - sol.dual_value);
  return sol;
}

// Round the dual multipliers to exact feasibility and re-evaluate the bound.
// For a minimization this returns a value that is <= <G, X> for every
// feasible X; for a maximization, >=. Needs, for each PSD-violated block, an
// equality row whose only coefficient is a multiple of the identity on that
// block (the problems built in this library always have one; hints can be
// given via SdpProblem::compensator_rows).
inline CertifiedBound certify_dual(const SdpProblem& prob, const SdpSolution& sol) {
  prob.validate();
  const double flip = (prob.sense == SdpProblem::Sense::minimize) ? 1.0 : -1.0;
  const size_t nb = prob.blocks.size();
  const size_t p = prob.rows.size();
  if (sol.dual_multipliers.size() != p)
    throw std::invalid_argument("certify_dual: multiplier count mismatch");

  std::vector<double> y(p);
  for (size_t j = 0; j < p; ++j) y[j] = flip * sol.dual_multipliers[j];

  CertifiedBound out;
  out.direction = (prob.sense == SdpProblem::Sense::minimize) ? CertifiedBound::Direction::lower
                                                              : CertifiedBound::Direction::upper;

  // Clamp sign-constrained multipliers (internal min convention: '>' rows
  // need y >= 0, '<' rows y <= 0).
  double lin_viol = 0.0;
  for (size_t j = 0; j < p; ++j) {
    char rel = prob.rows[j].rel;
    if (rel == '>' && y[j] < 0.0) {
      lin_viol = std::max(lin_viol, -y[j]);
      y[j] = 0.0;
    } else if (rel == '<' && y[j] > 0.0) {
      lin_viol = std::max(lin_viol, y[j]);
      y[j] = 0.0;
    }
  }

  // Compensator recipe per block: a combination of equality rows whose
  // coefficients on the block sum to the identity, so shifting the involved
  // multipliers adds delta * I to that block's slack. A single row with an
  // identity coefficient (the common case, and what compensator_rows hints
  // point at) is preferred; otherwise a least-squares combination over all
  // eligible equality rows is synthesized, which covers programs that pin a
  // block entrywise.
  auto block_of_row = [&](int j, int k) -> const cmat* {
    const SdpRow& r = prob.rows[static_cast<size_t>(j)];
    if (r.rel != '=') return nullptr;
    const cmat* ck = nullptr;
    for (const auto& [blk, cc] : r.coeffs) {
      if (prob.blocks[static_cast<size_t>(blk)].dim == 1) continue;  // scalar riders are fine
      if (blk == k)
        ck = &cc;
      else
        return nullptr;  // touches another matrix block
    }
    return ck;
  };
  std::map<int, std::vector<std::pair<int, double>>> recipes;
  auto find_recipe = [&](int k) -> const std::vector<std::pair<int, double>>* {
    auto it = recipes.find(k);
    if (it != recipes.end()) return it->second.empty() ? nullptr : &it->second;
    auto& recipe = recipes[k];
    auto identity_row = [&](int j) {
      const cmat* ck = block_of_row(j, k);
      if (!ck) return false;
      const int d = static_cast<int>(ck->rows());
      double c = ck->trace().real() / d;
      if (std::abs(c) < 1e-12) return false;
      if (((*ck) - c * identity(d)).cwiseAbs().maxCoeff() > 1e-12 * std::abs(c)) return false;
      recipe = {{j, 1.0 / c}};
      return true;
    };
    auto hint = prob.compensator_rows.find(k);
    if (hint != prob.compensator_rows.end() && identity_row(hint->second)) return &recipe;
    for (size_t j = 0; j < p; ++j)
      if (identity_row(static_cast<int>(j))) return &recipe;

    // No single row works: solve sum_j w_j C_{j,k} = I over eligible rows.
    std::vector<int> cand;
    std::vector<const cmat*> cmats;
    for (size_t j = 0; j < p; ++j)
      if (const cmat* ck = block_of_row(static_cast<int>(j), k)) {
        cand.push_back(static_cast<int>(j));
        cmats.push_back(ck);
      }
    if (cand.empty()) return nullptr;
    const int d = prob.blocks[static_cast<size_t>(k)].dim;
    rmat a_ls(2 * d * d, static_cast<Eigen::Index>(cand.size()));
    for (size_t idx = 0; idx < cand.size(); ++idx) {
      cmat h = hermitize(*cmats[idx]);
      for (int r = 0; r < d; ++r)
        for (int col = 0; col < d; ++col) {
          a_ls(r * d + col, static_cast<Eigen::Index>(idx)) = h(r, col).real();
          a_ls(d * d + r * d + col, static_cast<Eigen::Index>(idx)) = h(r, col).imag();
        }
    }
    rvec t = rvec::Zero(2 * d * d);
    for (int r = 0; r < d; ++r) t(r * d + r) = 1.0;
    rvec wt = a_ls.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(t);
    if ((a_ls * wt - t).cwiseAbs().maxCoeff() > 1e-10) return nullptr;
    for (size_t idx = 0; idx < cand.size(); ++idx)
      if (wt(static_cast<Eigen::Index>(idx)) != 0.0)
        recipe.emplace_back(cand[idx], wt(static_cast<Eigen::Index>(idx)));
    if (recipe.empty()) return nullptr;
    return &recipe;
  };

  auto slack_min_eig = [&](size_t k) {
    cmat s = flip * prob.objective[k];
    for (size_t j = 0; j < p; ++j) {
      if (y[j] == 0.0) continue;
      for (const auto& [blk, cc] : prob.rows[j].coeffs)
        if (blk == static_cast<int>(k)) s -= y[j] * cc;
    }
    return min_eigenvalue(s);
  };

  for (size_t j = 0; j < p; ++j)
    if (!std::isfinite(y[j])) {
      out.status = SdpStatus::numerical_failure;
      return out;
    }

  bool all_ok = false;
  for (int pass = 0; pass < 40 && !all_ok; ++pass) {
    all_ok = true;
    for (size_t k = 0; k < nb; ++k) {
      double lo = slack_min_eig(k);
      if (lo >= 0.0) continue;
      all_ok = false;
      const auto* recipe = find_recipe(static_cast<int>(k));
      if (!recipe) {
        out.status = SdpStatus::numerical_failure;
        out.psd_residual = -lo;
        return out;
      }
      // S_k gains delta * I when each y_row moves by -delta * w_row.
      double delta = (-lo) * (1.0 + 1e-9) + 1e-18;
      for (const auto& [row, wj] : *recipe) y[static_cast<size_t>(row)] -= delta * wj;
    }
  }
  if (!all_ok) {
    double worst = 0.0;
    for (size_t k = 0; k < nb; ++k) worst = std::max(worst, -std::min(0.0, slack_min_eig(k)));
    out.status = SdpStatus::numerical_failure;
    out.psd_residual = worst;
    return out;
  }

  double val = 0.0;
  for (size_t j = 0; j < p; ++j) val += prob.rows[j].bound * y[j];
  out.value = flip * val;
  out.psd_residual = 0.0;
  for (size_t k = 0; k < nb; ++k)
    out.psd_residual = std::max(out.psd_residual, -std::min(0.0, slack_min_eig(k)));
  out.linear_residual = 0.0;
  out.status = SdpStatus::optimal;
  return out;
}

// Strict-feasibility probe: pushes the largest uniform eigenvalue margin into
// both the primal variables and the dual slacks (each capped at 1).
inline SlaterReport check_slater(const SdpProblem& prob) {
  prob.validate();
  SlaterReport rep;
  const double flip = (prob.sense == SdpProblem::Sense::minimize) ? 1.0 : -1.0;

  // Primal probe: X = X' + t I, maximize t <= 1.
  {
    SdpProblem aux;
    aux.sense = SdpProblem::Sense::maximize;
    for (const auto& blk : prob.blocks) aux.add_block(blk.name, blk.dim);
    int tp = aux.add_block("margin+", 1);
    int tm = aux.add_block("margin-", 1);
    aux.set_objective(tp, cmat::Constant(1, 1, 1.0));
    aux.set_objective(tm, cmat::Constant(1, 1, -1.0));
    for (const auto& r : prob.rows) {
      double tr_sum = 0.0;
      std::vector<std::pair<int, cmat>> coeffs = r.coeffs;
      for (const auto& [k, cc] : r.coeffs) tr_sum += cc.trace().real();
      coeffs.push_back({tp, cmat::Constant(1, 1, tr_sum)});
      coeffs.push_back({tm, cmat::Constant(1, 1, -tr_sum)});
      aux.add_row(r.rel, r.bound, std::move(coeffs), r.label);
    }
    aux.add_row('<', 1.0,
                {{tp, cmat::Constant(1, 1, 1.0)}, {tm, cmat::Constant(1, 1, -1.0)}}, "cap");
    SdpSolution s = solve(aux, 1e-8);
    if (s.status == SdpStatus::infeasible) {
      rep.feasible = false;
      rep.primal_strict = false;
      rep.primal_margin = -std::numeric_limits<double>::infinity();
      rep.note = "constraint system admits no PSD solution";
    } else {
      rep.feasible = true;
      rep.primal_margin = s.primal_value;
      rep.primal_strict = (s.status == SdpStatus::optimal || s.status == SdpStatus::near_optimal) &&
                          s.primal_value > 1e-7;
    }
  }

  // Dual probe: multipliers with G_k - sum_j y_j C_{j,k} >= t I, maximize t <= 1.
  if (rep.feasible) {
    SdpProblem aux;
    aux.sense = SdpProblem::Sense::minimize;
    for (size_t k = 0; k < prob.blocks.size(); ++k) {
      aux.add_block(prob.blocks[k].name, prob.blocks[k].dim);
      aux.set_objective(static_cast<int>(k), flip * prob.objective[k]);
    }
    int u = aux.add_block("cap", 1);
    aux.set_objective(u, cmat::Constant(1, 1, 1.0));
    // Row relations keep their internal-min-convention multiplier signs; the
    // sense flip is already absorbed into the objective above.
    for (const auto& r : prob.rows) aux.add_row(r.rel, 0.0, r.coeffs, r.label);
    std::vector<std::pair<int, cmat>> trow;
    for (size_t k = 0; k < prob.blocks.size(); ++k)
      trow.push_back({static_cast<int>(k), identity(prob.blocks[k].dim)});
    trow.push_back({u, cmat::Constant(1, 1, 1.0)});
    aux.add_row('=', 1.0, std::move(trow), "margin");
    SdpSolution s = solve(aux, 1e-8);
    if (s.status == SdpStatus::optimal || s.status == SdpStatus::near_optimal) {
      rep.dual_margin = s.dual_value;
      rep.dual_strict = s.dual_value > 1e-7;
    } else if (s.status == SdpStatus::infeasible) {
      rep.dual_margin = -std::numeric_limits<double>::infinity();
      rep.dual_strict = false;
    }
  }

  if (rep.note.empty()) {
    if (rep.primal_strict && rep.dual_strict)
      rep.note = "strictly feasible on both sides; strong duality expected";
    else if (rep.primal_strict || rep.dual_strict)
      rep.note = "one-sided strict feasibility; strong duality expected";
    else
      rep.note = "no strict interior found; rely on certified bounds only";
  }
  return rep;
}

// Sparse text dump of the lowered real form, one line per nonzero:
// constraint-index (0 = objective, 1-based rows), block (negative = LP
// column ~(index)), row, col, value. Rows starting with '#' describe block
// dimensions and constraint relations/bounds.
inline std::string dump_problem(const SdpProblem& prob) {
  detail::Lowered low = detail::lower(prob);
  std::ostringstream os;
  os.precision(17);
  os << "# sense " << (prob.sense == SdpProblem::Sense::minimize ? "minimize" : "maximize")
     << "\n";
  for (size_t k = 0; k < low.psd_dim.size(); ++k)
    os << "# block " << k << " dim " << low.psd_dim[k]
       << (low.psd_complex[k] ? " (embedded complex)" : "") << "\n";
  os << "# lp columns " << low.lp.size() << "\n";
  for (size_t j = 0; j < prob.rows.size(); ++j)
    os << "# row " << j + 1 << " rel " << prob.rows[j].rel << " bound " << low.b(static_cast<Eigen::Index>(j))
       << (prob.rows[j].label.empty() ? "" : (" " + prob.rows[j].label)) << "\n";
  auto emit_psd = [&](int cons, size_t k, const detail::BlockCoeff& c) {
    if (c.has_dense) {
      for (int col = 0; col < c.dense.cols(); ++col)
        for (int r = 0; r <= col; ++r)
          if (c.dense(r, col) != 0.0)
            os << cons << " " << k << " " << r << " " << col << " " << c.dense(r, col) << "\n";
    } else {
      for (const auto& e : c.ent)
        os << cons << " " << k << " " << e.r << " " << e.c << " " << e.v << "\n";
    }
  };
  for (size_t k = 0; k < low.psd_dim.size(); ++k) {
    detail::BlockCoeff obj;
    obj.build(low.cost_psd[k]);
    emit_psd(0, k, obj);
    for (const auto& [j, c] : low.rows_by_psd[k]) emit_psd(j + 1, k, c);
  }
  for (size_t l = 0; l < low.lp.size(); ++l) {
    if (low.lp[l].cost != 0.0)
      os << 0 << " " << -(static_cast<int>(l) + 1) << " 0 0 " << low.lp[l].cost << "\n";
    for (const auto& [j, v] : low.lp[l].rows)
      os << j + 1 << " " << -(static_cast<int>(l) + 1) << " 0 0 " << v << "\n";
  }
  return os.str();
}

}  // namespace qkdfk
