#pragma once
// Builder for programs with scalar variables under linear matrix
// inequalities:
//
//   minimize    sum_i g_i w_i
//   subject to  sum_i w_i F_{i,b} - C_b  PSD          (one per LMI)
//               sum_i a_i w_i  (= | <= | >=)  r        (scalar rows)
//               w_i free / >= 0 / <= 0
//
// Lowered onto SdpProblem so that the w_i become the row multipliers of a
// standard-form problem; the interior-point Schur complement then has one
// row per scalar variable, which keeps entropy programs with many matrix
// coefficients tractable. Hermitian matrix variables are expanded over an
// explicit Hermitian basis so arbitrary linear maps of them can be placed
// into LMIs.

#include <qkdfk/sdp.hpp>

#include <functional>
#include <string>
#include <vector>

namespace qkdfk {

// Hermitian basis with real coordinates: diagonal units, symmetric and (for
// complex fields) antisymmetric off-diagonal units.
inline std::vector<cmat> hermitian_basis(int dim, bool complex_field) {
  std::vector<cmat> basis;
  for (int r = 0; r < dim; ++r) {
    cmat e = cmat::Zero(dim, dim);
    e(r, r) = 1.0;
    basis.push_back(e);
  }
  for (int c = 0; c < dim; ++c)
    for (int r = 0; r < c; ++r) {
      cmat e = cmat::Zero(dim, dim);
      e(r, c) = 1.0;
      e(c, r) = 1.0;
      basis.push_back(e);
      if (complex_field) {
        cmat f = cmat::Zero(dim, dim);
        f(r, c) = cplx(0.0, 1.0);
        f(c, r) = cplx(0.0, -1.0);
        basis.push_back(f);
      }
    }
  return basis;
}

struct LmiProgram;

struct MatVarHandle {
  int first = 0;   // index of the first scalar coordinate
  int count = 0;   // number of coordinates
  int dim = 0;
  bool complex_field = false;
};

struct LmiTerm {
  int var = 0;
  cmat coeff;
};

struct LmiConstraint {
  cmat constant;                // sum_i w_i F_i - constant >= 0
  std::vector<LmiTerm> terms;
  std::string label;
  int compensator_var = -1;     // variable whose coefficient here is c*I
};

struct LmiScalarRow {
  std::vector<std::pair<int, double>> terms;
  char rel = '=';
  double bound = 0.0;
  std::string label;
};

struct LmiProgram {
  std::vector<double> cost;       // g_i
  std::vector<char> sign;         // 'f' free, '+' nonneg, '-' nonpos
  std::vector<std::string> names;
  std::vector<LmiConstraint> lmis;
  std::vector<LmiScalarRow> rows;

  int add_var(const std::string& name, char var_sign = 'f', double g = 0.0) {
    names.push_back(name);
    sign.push_back(var_sign);
    cost.push_back(g);
    return static_cast<int>(cost.size()) - 1;
  }

  MatVarHandle add_hermitian_var(const std::string& name, int dim, bool complex_field) {
    MatVarHandle h;
    h.first = static_cast<int>(cost.size());
    h.dim = dim;
    h.complex_field = complex_field;
    auto basis = hermitian_basis(dim, complex_field);
    h.count = static_cast<int>(basis.size());
    for (int i = 0; i < h.count; ++i) add_var(name + "[" + std::to_string(i) + "]", 'f', 0.0);
    return h;
  }

  int add_lmi(const cmat& constant, const std::string& label = "") {
    LmiConstraint c;
    c.constant = constant;
    c.label = label;
    lmis.push_back(std::move(c));
    return static_cast<int>(lmis.size()) - 1;
  }

  void add_term(int lmi, int var, const cmat& coeff) {
    lmis.at(static_cast<size_t>(lmi)).terms.push_back({var, coeff});
  }

  // Adds f(Y) to the LMI for a Hermitian matrix variable Y, where f is any
  // real-linear map (congruence, transpose, pinching, tensoring, ...).
  void add_matrix_terms(int lmi, const MatVarHandle& h,
                        const std::function<cmat(const cmat&)>& f) {
    auto basis = hermitian_basis(h.dim, h.complex_field);
    for (int i = 0; i < h.count; ++i) {
      cmat m = f(basis[static_cast<size_t>(i)]);
      if (m.cwiseAbs().maxCoeff() > 0.0) add_term(lmi, h.first + i, m);
    }
  }

  int add_scalar_row(std::vector<std::pair<int, double>> terms, char rel, double bound,
                     const std::string& label = "") {
    rows.push_back({std::move(terms), rel, bound, label});
    return static_cast<int>(rows.size()) - 1;
  }

  cmat matrix_value(const MatVarHandle& h, const std::vector<double>& w) const {
    auto basis = hermitian_basis(h.dim, h.complex_field);
    cmat out = cmat::Zero(h.dim, h.dim);
    for (int i = 0; i < h.count; ++i)
      out += w[static_cast<size_t>(h.first + i)] * basis[static_cast<size_t>(i)];
    return out;
  }
};

// Lowered program plus the mapping needed to read the solution back.
struct LoweredLmi {
  SdpProblem problem;          // solve this (sense minimize)
  int nvars = 0;               // w_i == dual multiplier of row i
  std::vector<int> lmi_block;  // LMI index -> SdpProblem block
};

inline LoweredLmi lower_lmi(const LmiProgram& prog) {
  LoweredLmi out;
  out.nvars = static_cast<int>(prog.cost.size());
  SdpProblem& sp = out.problem;
  sp.sense = SdpProblem::Sense::minimize;

  for (size_t b = 0; b < prog.lmis.size(); ++b) {
    const auto& lmi = prog.lmis[b];
    int dim = static_cast<int>(lmi.constant.rows());
    int blk = sp.add_block(lmi.label.empty() ? ("lmi" + std::to_string(b)) : lmi.label, dim);
    sp.set_objective(blk, cmat(-lmi.constant));
    out.lmi_block.push_back(blk);
  }

  // One row per scalar variable; the engine-dual constraint of row i is
  // exactly the w_i-column of the LMI system.
  std::vector<std::vector<std::pair<int, cmat>>> row_coeffs(static_cast<size_t>(out.nvars));
  for (size_t b = 0; b < prog.lmis.size(); ++b)
    for (const auto& t : prog.lmis[b].terms)
      row_coeffs[static_cast<size_t>(t.var)].push_back({out.lmi_block[b], cmat(-t.coeff)});

  // Scalar rows on w become 1x1 columns (their dual constraints).
  struct PendingCol {
    double cost;
    std::vector<std::pair<int, double>> coeffs;
    std::string name;
  };
  std::vector<PendingCol> cols;
  for (size_t q = 0; q < prog.rows.size(); ++q) {
    const auto& row = prog.rows[q];
    std::string nm = row.label.empty() ? ("row" + std::to_string(q)) : row.label;
    if (row.rel == '>' || row.rel == '=') {
      PendingCol pc;
      pc.cost = -row.bound;
      for (const auto& [i, a] : row.terms) pc.coeffs.push_back({i, -a});
      pc.name = nm + "+";
      cols.push_back(std::move(pc));
    }
    if (row.rel == '<' || row.rel == '=') {
      PendingCol pc;
      pc.cost = row.bound;
      for (const auto& [i, a] : row.terms) pc.coeffs.push_back({i, a});
      pc.name = nm + "-";
      cols.push_back(std::move(pc));
    }
  }
  std::vector<int> col_block;
  for (const auto& pc : cols) {
    int blk = sp.add_block(pc.name, 1);
    sp.set_objective(blk, cmat::Constant(1, 1, pc.cost));
    col_block.push_back(blk);
  }
  for (size_t ci = 0; ci < cols.size(); ++ci)
    for (const auto& [i, a] : cols[ci].coeffs)
      row_coeffs[static_cast<size_t>(i)].push_back({col_block[ci], cmat::Constant(1, 1, a)});

  for (int i = 0; i < out.nvars; ++i) {
    char rel = (prog.sign[static_cast<size_t>(i)] == '+')   ? '>'
               : (prog.sign[static_cast<size_t>(i)] == '-') ? '<'
                                                            : '=';
    sp.add_row(rel, -prog.cost[static_cast<size_t>(i)], std::move(row_coeffs[static_cast<size_t>(i)]),
               prog.names[static_cast<size_t>(i)]);
  }

  for (size_t b = 0; b < prog.lmis.size(); ++b)
    if (prog.lmis[b].compensator_var >= 0)
      sp.compensator_rows[out.lmi_block[b]] = prog.lmis[b].compensator_var;

  return out;
}

struct LmiSolution {
  std::vector<double> w;
  double value = 0.0;        // objective of the LMI program at w
  double bound = 0.0;        // solver's bound from the other side
  SdpStatus status = SdpStatus::numerical_failure;
  SdpSolution inner;
};

inline LmiSolution solve_lmi(const LmiProgram& prog, double tol = 1e-8) {
  LoweredLmi low = lower_lmi(prog);
  LmiSolution out;
  out.inner = solve(low.problem, tol);
  out.status = out.inner.status;
  out.w.resize(static_cast<size_t>(low.nvars));
  for (int i = 0; i < low.nvars; ++i) out.w[static_cast<size_t>(i)] = out.inner.dual_multipliers[static_cast<size_t>(i)];
  out.value = -out.inner.dual_value;
  out.bound = -out.inner.primal_value;
  return out;
}

}  // namespace qkdfk
