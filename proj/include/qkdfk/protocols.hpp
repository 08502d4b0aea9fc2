#pragma once
// Protocol catalog. Each builder simulates the honest channel, packages the
// sifting map and the expectation constraints evaluated on the simulated
// state, and records the scalars (pass probability, observed error rate) the
// key-rate layers consume. Instances are immutable snapshots: every stored
// expectation is re-checked against rho_sim on construction.

#include <qkdfk/channels.hpp>
#include <qkdfk/constraints.hpp>
#include <qkdfk/finitekey.hpp>
#include <qkdfk/matqi.hpp>

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qkdfk {

// Closed-form evaluators, each a function of the observed error rate Q.
// Members are empty when no closed form is known for the protocol.
struct ReferenceFormulas {
  std::function<double(double)> keyterm_vn;     // pass-adjusted von Neumann entropy
  std::function<double(double)> keyterm_min;    // pass-adjusted min-entropy
  std::function<double(double)> rate_analytic;  // full-rate floor (f_ec = 1)
};

// Sifting pass probability written as an affine function of the coarse
// constraint expectations, so finite windows on the gammas translate into a
// window on p_pass. An empty term list means p_pass is state-independent.
struct PassComposition {
  std::vector<std::pair<int, double>> terms;  // (coarse constraint index, coefficient)
  double constant = 0.0;

  double eval(const std::vector<double>& gammas) const {
    double v = constant;
    for (const auto& [idx, coef] : terms) v += coef * gammas.at(static_cast<size_t>(idx));
    return v;
  }
};

struct ProtocolInstance {
  std::string name;
  DensityMatrix rho_sim;           // simulated post-channel state (post-heralding for twin_field)
  SiftMap sift;
  ConstraintSet constraints;       // coarse working set; lo == hi == simulated expectation
  ConstraintSet constraints_fine;  // per-outcome alternative, same source constraints
  double p_pass = 1.0;             // per-signal pass probability, heralding included
  double cond_prob = 1.0;          // probability of the public heralding event (1 if none)
  double key_error_Q = 0.0;        // error rate charged by reconciliation
  int key_alphabet = 2;
  PassComposition pass_terms;      // sifting pass probability from coarse gammas
  ReferenceFormulas reference;
  std::vector<std::string> notes;  // degenerate-limit flags

  const std::vector<int>& dims() const { return rho_sim.subsystem_dims; }
  double sift_pass() const { return p_pass / cond_prob; }

  std::vector<double> gammas() const {
    std::vector<double> g;
    for (const auto& c : constraints.items) g.push_back(0.5 * (c.lo + c.hi));
    return g;
  }

  void validate(double tol = 1e-10) const {
    if (!(p_pass > 0.0) || p_pass > 1.0 + tol)
      throw std::logic_error(name + ": pass probability outside (0,1]");
    if (!(cond_prob > 0.0) || cond_prob > 1.0 + tol)
      throw std::logic_error(name + ": heralding probability outside (0,1]");
    if (key_error_Q < -tol || key_error_Q > 1.0 + tol)
      throw std::logic_error(name + ": key error rate outside [0,1]");
    auto check = [&](const ConstraintSet& cs) {
      for (const auto& c : cs.items) {
        if (c.lo > c.hi || c.lo < -tol || c.hi > 1.0 + tol)
          throw std::logic_error(name + ": simulated expectation outside [0,1] for " + c.label);
        const double g = (rho_sim.mat() * c.op).trace().real();
        if (std::abs(g - 0.5 * (c.lo + c.hi)) > tol)
          throw std::logic_error(name + ": stored expectation inconsistent for " + c.label);
      }
    };
    check(constraints);
    check(constraints_fine);
    if (sift_trace_defect(sift) > 1e-9)
      throw std::logic_error(name + ": sift map is trace-increasing");
    if (!pass_terms.terms.empty() || pass_terms.constant != 0.0) {
      const double v = pass_terms.eval(gammas());
      if (std::abs(v - sift_pass()) > 1e-9)
        throw std::logic_error(name + ": pass composition does not reproduce p_pass");
    }
  }
};

// Asymptotic rate from a certified pass-adjusted entropy of the instance,
// using the instance's simulated error rate for the reconciliation leak.
inline double asymptotic_rate(const ProtocolInstance& inst, double keyterm_value,
                              double f_ec = 1.0) {
  if (f_ec < 1.0) throw std::invalid_argument("asymptotic_rate: f_ec below 1");
  return inst.cond_prob *
         (keyterm_value - inst.sift_pass() * f_ec * binary_entropy(inst.key_error_Q));
}

// Lossless repeater bound on secret bits per use of a transmittance-eta link.
inline double plob(double eta) {
  if (eta < 0.0 || eta >= 1.0) throw std::domain_error("plob: eta outside [0,1)");
  return -std::log2(1.0 - eta);
}

inline std::vector<std::string> protocol_names() {
  return {"bb84", "b92", "twin_field", "bb84_mismatch", "trojan_bb84"};
}

namespace detail {

inline cvec qubit_plus() { return (basis_vec(2, 0) + basis_vec(2, 1)) / std::sqrt(2.0); }
inline cvec qubit_minus() { return (basis_vec(2, 0) - basis_vec(2, 1)) / std::sqrt(2.0); }

// Fill lo = hi = Tr(rho Gamma), clamped to [0,1] against roundoff dust.
inline void stamp_expectations(ConstraintSet& cs, const cmat& rho) {
  for (auto& c : cs.items) {
    double g = (rho * c.op).trace().real();
    g = std::min(1.0, std::max(0.0, g));
    c.lo = g;
    c.hi = g;
  }
}

// Per-outcome products over the kept announcement pairs.
inline ConstraintSet fine_grained(const Povm& alice, const Povm& bob,
                                  const std::vector<std::pair<std::string, std::string>>& keep) {
  ConstraintSet out;
  for (const auto& [ka, kb] : keep)
    for (const auto* ea : alice.with_announce(ka))
      for (const auto* eb : bob.with_announce(kb)) {
        Constraint c;
        c.label = "joint(" + ka + ":" + ea->value + "," + kb + ":" + eb->value + ")";
        c.op = hermitize(kron(ea->op, eb->op));
        out.items.push_back(std::move(c));
      }
  return out;
}

// Spectral source constraints on Alice's marginal. With cross_terms, the
// eigenvector dyad real/imaginary parts are added as well, which pins the
// marginal completely instead of only its spectral diagonal.
inline std::vector<Constraint> source_constraints(const cmat& rho_a, int dim_b,
                                                  bool cross_terms) {
  Spectrum s = eig_hermitian(hermitize(rho_a), 1e-9);
  const int d = static_cast<int>(rho_a.rows());
  std::vector<Constraint> out;
  for (int j = 0; j < d; ++j) {
    Constraint c;
    c.label = "source(" + std::to_string(j) + ")";
    c.op = hermitize(kron(proj(cvec(s.eigenvectors.col(j))), identity(dim_b)));
    c.lo = c.hi = std::min(1.0, std::max(0.0, s.eigenvalues(j)));
    c.kind = ConstraintKind::exact;
    out.push_back(std::move(c));
  }
  if (cross_terms)
    for (int j = 0; j < d; ++j)
      for (int k = j + 1; k < d; ++k) {
        const cmat dyad = s.eigenvectors.col(j) * s.eigenvectors.col(k).adjoint();
        Constraint re;
        re.label = "source_re(" + std::to_string(j) + "," + std::to_string(k) + ")";
        re.op = hermitize(kron(cmat(dyad + dyad.adjoint()), identity(dim_b)));
        re.lo = re.hi = 0.0;
        re.kind = ConstraintKind::exact;
        Constraint im;
        im.label = "source_im(" + std::to_string(j) + "," + std::to_string(k) + ")";
        im.op = hermitize(kron(cmat(cplx(0.0, 1.0) * (dyad - dyad.adjoint())), identity(dim_b)));
        im.lo = im.hi = 0.0;
        im.kind = ConstraintKind::exact;
        out.push_back(std::move(re));
        out.push_back(std::move(im));
      }
  return out;
}

inline cmat lift_qutrit(const cmat& op2) {
  cmat o = cmat::Zero(3, 3);
  o.block(0, 0, 2, 2) = op2;
  return o;
}

// Expand a qubit-qubit state to qubit x qutrit with an empty vacuum row.
inline cmat embed_bob_vacuum(const cmat& rho4) {
  cmat out = cmat::Zero(6, 6);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) out(3 * (i / 2) + (i % 2), 3 * (j / 2) + (j % 2)) = rho4(i, j);
  return out;
}

// Heralding operator and conditional AB state shared by the twin-field
// builder and its success-probability probe.
inline std::pair<double, cmat> tf_conditional(double q, double sqrt_eta, double p_dark,
                                              bool psi_plus) {
  if (q < 0.0 || q > 1.0) throw std::domain_error("twin_field: q outside [0,1]");
  if (sqrt_eta < 0.0 || sqrt_eta > 1.0)
    throw std::domain_error("twin_field: sqrt_eta outside [0,1]");
  if (p_dark < 0.0 || p_dark > 1.0) throw std::domain_error("twin_field: p_dark outside [0,1]");

  const cvec phi = std::sqrt(q) * basis_vec(4, 0) + std::sqrt(1.0 - q) * basis_vec(4, 3);
  DensityMatrix rho(kron(proj(phi), proj(phi)), {2, 2, 2, 2});  // (A, A', B, B')
  rho = pure_loss_single_photon(rho, sqrt_eta, 1);
  rho = pure_loss_single_photon(rho, sqrt_eta, 3);

  const cvec bell = (basis_vec(4, 1) + (psi_plus ? 1.0 : -1.0) * basis_vec(4, 2)) /
                    std::sqrt(2.0);
  const cmat mc = (1.0 - p_dark) * (1.0 - p_dark) * 0.5 *
                      (proj(bell) + proj(basis_vec(4, 3))) +
                  p_dark * (1.0 - p_dark) * 0.25 * identity(4);
  const cmat mc_full = embed_two_site(mc, {2, 2, 2, 2}, 1, 3);
  const double p_c = (rho.mat() * mc_full).trace().real();
  if (p_c <= 0.0) return {0.0, cmat()};
  cmat cond = hermitize(partial_trace(cmat(rho.mat() * mc_full), {2, 2, 2, 2}, {0, 2})) / p_c;
  return {p_c, cond};
}

}  // namespace detail

// Entanglement-based BB84 over a depolarizing link with error rate Q = 2p in
// both bases. Valid for p up to 0.25 (error rate one half).
inline ProtocolInstance bb84(double p_depol, double p_Z) {
  if (p_depol < 0.0 || p_depol > 0.25)
    throw std::domain_error("bb84: p_depol outside [0, 0.25]");
  if (p_Z < 0.0 || p_Z > 1.0) throw std::domain_error("bb84: p_Z outside [0,1]");
  const double p_X = 1.0 - p_Z;

  const cvec phi = (basis_vec(4, 0) + basis_vec(4, 3)) / std::sqrt(2.0);
  DensityMatrix rho = depolarize(DensityMatrix(proj(phi), {2, 2}), 4.0 * p_depol, 1);

  const cmat p0 = proj(basis_vec(2, 0)), p1 = proj(basis_vec(2, 1));
  const cmat pp = proj(detail::qubit_plus()), pm = proj(detail::qubit_minus());
  Povm side;
  side.elements = {{"Z", "0", p_Z * p0}, {"Z", "1", p_Z * p1},
                   {"X", "0", p_X * pp}, {"X", "1", p_X * pm}};

  ProtocolInstance inst;
  inst.name = "bb84";
  std::vector<std::pair<std::string, std::string>> keep;
  if (p_Z > 0.0) keep.push_back({"Z", "Z"});
  if (p_X > 0.0) keep.push_back({"X", "X"});
  if (keep.size() < 2)
    inst.notes.push_back("single-basis limit: the unused basis has no sifted rounds");
  inst.rho_sim = rho;
  inst.sift = build_sift_map(side, side, keep, {"0", "1"});

  Constraint ez;
  ez.label = "error(Z)";
  ez.op = hermitize(cmat(proj(basis_vec(4, 1)) + proj(basis_vec(4, 2))));
  Constraint ex;
  ex.label = "error(X)";
  ex.op = hermitize(cmat(kron(pp, pm) + kron(pm, pp)));
  inst.constraints.items = {std::move(ez), std::move(ex)};
  detail::stamp_expectations(inst.constraints, rho.mat());

  inst.constraints_fine = detail::fine_grained(side, side, keep);
  detail::stamp_expectations(inst.constraints_fine, rho.mat());

  inst.p_pass = p_Z * p_Z + p_X * p_X;
  inst.pass_terms.constant = inst.p_pass;
  inst.key_error_Q = inst.constraints.items[0].lo;  // equals 2 p_depol in both bases

  const double s = inst.p_pass;
  inst.reference.keyterm_vn = [s](double q) { return s * (1.0 - binary_entropy(q)); };
  inst.reference.keyterm_min = [s](double q) {
    return s * (1.0 - std::log2(1.0 + 2.0 * std::sqrt(q * (1.0 - q))));
  };
  inst.validate();
  return inst;
}

// B92 with two nonorthogonal signal states of overlap cos(theta/2), sent
// through a depolarizing link. Bob's unambiguous filter passes with a
// state-dependent probability, so the sift map is genuinely trace-decreasing
// and the source is pinned by spectral constraints on Alice's marginal.
inline ProtocolInstance b92(double theta, double p_depol) {
  if (!(theta > 0.0) || !(theta < std::acos(-1.0)))
    throw std::domain_error("b92: theta outside (0, pi)");
  if (p_depol < 0.0 || p_depol > 1.0) throw std::domain_error("b92: p_depol outside [0,1]");

  const double ct = std::cos(theta / 4.0), st = std::sin(theta / 4.0);
  const cvec f0 = ct * basis_vec(2, 0) + st * basis_vec(2, 1);
  const cvec f1 = ct * basis_vec(2, 0) - st * basis_vec(2, 1);
  const cvec f0bar = st * basis_vec(2, 0) - ct * basis_vec(2, 1);  // orthogonal to f0
  const cvec f1bar = st * basis_vec(2, 0) + ct * basis_vec(2, 1);  // orthogonal to f1

  const cvec psi = (kron(basis_vec(2, 0), f0) + kron(basis_vec(2, 1), f1)).eval() /
                   std::sqrt(2.0);
  DensityMatrix rho = depolarize(DensityMatrix(proj(cvec(psi)), {2, 2}), p_depol, 1);

  Povm alice;
  alice.elements = {{"-", "0", proj(basis_vec(2, 0))}, {"-", "1", proj(basis_vec(2, 1))}};
  Povm bob;
  bob.elements = {{"pass", "1", 0.5 * proj(f0bar)},
                  {"pass", "0", 0.5 * proj(f1bar)},
                  {"fail", "-", 0.5 * proj(f0)},
                  {"fail", "-", 0.5 * proj(f1)}};
  const std::vector<std::pair<std::string, std::string>> keep = {{"-", "pass"}};

  ProtocolInstance inst;
  inst.name = "b92";
  inst.rho_sim = rho;
  inst.sift = build_sift_map(alice, bob, keep, {"0", "1"});

  inst.constraints = coarse_grain(alice, bob, keep);
  std::vector<Constraint> omega =
      detail::source_constraints(partial_trace(rho.mat(), {2, 2}, {0}), 2, false);
  detail::stamp_expectations(inst.constraints, rho.mat());
  inst.constraints_fine = detail::fine_grained(alice, bob, keep);
  detail::stamp_expectations(inst.constraints_fine, rho.mat());
  for (const auto& c : omega) {
    inst.constraints.items.push_back(c);
    inst.constraints_fine.items.push_back(c);
  }

  const double g_match = inst.constraints.items[0].lo;
  const double g_err = inst.constraints.items[1].lo;
  inst.p_pass = g_match + g_err;
  inst.pass_terms.terms = {{0, 1.0}, {1, 1.0}};
  // Reconciliation is charged at the channel error rate 2*g_err (the
  // expectation of the unweighted disagreement observable), not at the much
  // larger conditional sifted rate g_err/p_pass: charging the conditional rate
  // makes the rate negative wherever the key term certifies positive numbers.
  inst.key_error_Q = 2.0 * g_err;
  inst.notes.push_back("conditional sifted error rate " +
                       std::to_string(g_err / inst.p_pass));
  inst.validate();
  return inst;
}

struct TwinFieldOptions {
  char key_basis = 'X';          // which matched basis carries key bits
  bool herald_psi_plus = false;  // postselect the other Bell outcome instead
};

// Heralding success probability (no conditioning): exposed separately so
// callers can detect the zero-probability corner before building an instance.
inline double twin_field_success_probability(double q, double sqrt_eta, double p_dark,
                                             bool herald_psi_plus = false) {
  return detail::tf_conditional(q, sqrt_eta, p_dark, herald_psi_plus).first;
}

// Single-photon twin-field link: each side entangles a local qubit with a
// photon mode, the photons meet at a lossy midpoint whose Bell-type click
// (with dark counts) heralds the round. The instance lives on the conditional
// two-qubit state; the heralding probability is folded into p_pass.
inline ProtocolInstance twin_field(double q, double sqrt_eta, double p_dark, double p_Z,
                                   TwinFieldOptions opts = {}) {
  if (p_Z < 0.0 || p_Z > 1.0) throw std::domain_error("twin_field: p_Z outside [0,1]");
  if (opts.key_basis != 'X' && opts.key_basis != 'Z')
    throw std::invalid_argument("twin_field: key basis must be 'X' or 'Z'");
  auto [p_c, cond] = detail::tf_conditional(q, sqrt_eta, p_dark, opts.herald_psi_plus);
  if (p_c <= 1e-15)
    throw std::domain_error("twin_field: heralding event has zero probability");
  const double p_X = 1.0 - p_Z;
  const double p_key = (opts.key_basis == 'X') ? p_X : p_Z;
  if (!(p_key > 0.0)) throw std::domain_error("twin_field: key basis has zero probability");

  const cmat p0 = proj(basis_vec(2, 0)), p1 = proj(basis_vec(2, 1));
  const cmat pp = proj(detail::qubit_plus()), pm = proj(detail::qubit_minus());
  Povm alice;
  alice.elements = {{"Z", "0", p_Z * p0}, {"Z", "1", p_Z * p1},
                    {"X", "0", p_X * pp}, {"X", "1", p_X * pm}};
  // The heralded state is Bell-anticorrelated, so Bob's value tags are
  // flipped where the correlation is negative: both bases for the minus
  // outcome, only Z for the plus outcome.
  const bool flip_x = !opts.herald_psi_plus;
  Povm bob;
  bob.elements = {{"Z", "1", p_Z * p0},
                  {"Z", "0", p_Z * p1},
                  {"X", flip_x ? "1" : "0", p_X * pp},
                  {"X", flip_x ? "0" : "1", p_X * pm}};

  ProtocolInstance inst;
  inst.name = "twin_field";
  inst.rho_sim = DensityMatrix(cond, {2, 2});
  const std::string key(1, opts.key_basis);
  inst.sift = build_sift_map(alice, bob, {{key, key}}, {"0", "1"});

  const std::vector<std::pair<std::string, std::string>> both = {{"Z", "Z"}, {"X", "X"}};
  inst.constraints = coarse_grain(alice, bob, both);
  detail::stamp_expectations(inst.constraints, cond);
  inst.constraints_fine = detail::fine_grained(alice, bob, both);
  detail::stamp_expectations(inst.constraints_fine, cond);

  inst.cond_prob = p_c;
  inst.p_pass = p_c * p_key * p_key;
  inst.pass_terms.constant = p_key * p_key;
  const int key_row = (opts.key_basis == 'Z') ? 0 : 2;  // coarse rows: match, error per basis
  const double g_match = inst.constraints.items[static_cast<size_t>(key_row)].lo;
  const double g_err = inst.constraints.items[static_cast<size_t>(key_row + 1)].lo;
  inst.key_error_Q = g_err / (g_match + g_err);
  inst.notes.push_back("expectations are conditional on the heralding event");
  inst.validate();
  return inst;
}

// BB84 with detection-efficiency mismatch: Bob's two detectors have
// efficiencies eta0/eta1 shared across bases, and a third vacuum dimension
// absorbs the no-click weight.
inline ProtocolInstance bb84_mismatch(double p_depol, double p_Z, double eta0, double eta1) {
  if (p_depol < 0.0 || p_depol > 0.25)
    throw std::domain_error("bb84_mismatch: p_depol outside [0, 0.25]");
  if (p_Z < 0.0 || p_Z > 1.0) throw std::domain_error("bb84_mismatch: p_Z outside [0,1]");
  if (eta0 < 0.0 || eta0 > 1.0 || eta1 < 0.0 || eta1 > 1.0)
    throw std::domain_error("bb84_mismatch: detector efficiency outside [0,1]");
  if (eta0 + eta1 <= 0.0)
    throw std::domain_error("bb84_mismatch: both detectors dead");
  const double p_X = 1.0 - p_Z;

  const cvec phi = (basis_vec(4, 0) + basis_vec(4, 3)) / std::sqrt(2.0);
  DensityMatrix rho4 = depolarize(DensityMatrix(proj(phi), {2, 2}), 4.0 * p_depol, 1);
  DensityMatrix rho(detail::embed_bob_vacuum(rho4.mat()), {2, 3});

  const cmat p0 = proj(basis_vec(2, 0)), p1 = proj(basis_vec(2, 1));
  const cmat pp = proj(detail::qubit_plus()), pm = proj(detail::qubit_minus());
  const cmat q0 = detail::lift_qutrit(p0), q1 = detail::lift_qutrit(p1);
  const cmat qp = detail::lift_qutrit(pp), qm = detail::lift_qutrit(pm);

  Povm alice;
  alice.elements = {{"Z", "0", p_Z * p0}, {"Z", "1", p_Z * p1},
                    {"X", "0", p_X * pp}, {"X", "1", p_X * pm}};
  cmat click = p_Z * (eta0 * q0 + eta1 * q1) + p_X * (eta0 * qp + eta1 * qm);
  Povm bob;
  bob.elements = {{"Z", "0", p_Z * eta0 * q0},
                  {"Z", "1", p_Z * eta1 * q1},
                  {"X", "0", p_X * eta0 * qp},
                  {"X", "1", p_X * eta1 * qm},
                  {"no", "-", hermitize(cmat(identity(3) - click))}};

  ProtocolInstance inst;
  inst.name = "bb84_mismatch";
  std::vector<std::pair<std::string, std::string>> keep;
  if (p_Z > 0.0) keep.push_back({"Z", "Z"});
  if (p_X > 0.0) keep.push_back({"X", "X"});
  if (keep.size() < 2)
    inst.notes.push_back("single-basis limit: the unused basis has no sifted rounds");
  inst.rho_sim = rho;
  inst.sift = build_sift_map(alice, bob, keep, {"0", "1"});

  Constraint mz;
  mz.label = "match(Z)";
  mz.op = hermitize(cmat(p_Z * (eta0 * kron(p0, q0) + eta1 * kron(p1, q1))));
  Constraint mx;
  mx.label = "match(X)";
  mx.op = hermitize(cmat(p_X * (eta0 * kron(pp, qp) + eta1 * kron(pm, qm))));
  Constraint ez;
  ez.label = "error(Z)";
  ez.op = hermitize(cmat(p_Z * (eta1 * kron(p0, q1) + eta0 * kron(p1, q0))));
  Constraint ex;
  ex.label = "error(X)";
  ex.op = hermitize(cmat(p_X * (eta1 * kron(pp, qm) + eta0 * kron(pm, qp))));
  inst.constraints.items = {std::move(mz), std::move(mx), std::move(ez), std::move(ex)};
  detail::stamp_expectations(inst.constraints, rho.mat());
  inst.constraints_fine = detail::fine_grained(alice, bob, keep);
  detail::stamp_expectations(inst.constraints_fine, rho.mat());

  const std::vector<double> g = inst.gammas();
  inst.pass_terms.terms = {{0, p_Z}, {1, p_X}, {2, p_Z}, {3, p_X}};
  inst.p_pass = inst.pass_terms.eval(g);
  inst.key_error_Q = (p_Z * g[2] + p_X * g[3]) / inst.p_pass;

  const double floor_eta = std::min(eta0, eta1);
  inst.reference.rate_analytic = [floor_eta](double q) {
    return floor_eta * (1.0 - binary_entropy(q)) - binary_entropy(q);
  };
  inst.validate();
  return inst;
}

// Prepare-and-measure BB84 whose source leaks basis-and-bit information to a
// Trojan probe: Eve's back-reflected coherent state of mean photon number
// mu_out decoheres Alice's four-state register. The source marginal is pinned
// completely by spectral constraints computed from the analytic rho_A.
inline ProtocolInstance trojan_bb84(double p_depol, double p_Z, double mu_out) {
  if (p_depol < 0.0 || p_depol > 0.25)
    throw std::domain_error("trojan_bb84: p_depol outside [0, 0.25]");
  if (p_Z < 0.0 || p_Z > 1.0) throw std::domain_error("trojan_bb84: p_Z outside [0,1]");
  if (!(mu_out >= 0.0)) throw std::domain_error("trojan_bb84: mu_out must be nonnegative");
  const double p_X = 1.0 - p_Z;

  // Signal frame: the key basis points along (e0 +- e1), the check basis
  // along (e0 +- i e1).
  const cvec z0 = detail::qubit_plus(), z1 = detail::qubit_minus();
  const cvec x0 = (basis_vec(2, 0) + cplx(0.0, 1.0) * basis_vec(2, 1)) / std::sqrt(2.0);
  const cvec x1 = (basis_vec(2, 0) - cplx(0.0, 1.0) * basis_vec(2, 1)) / std::sqrt(2.0);
  const std::vector<cvec> b = {z0, z1, x0, x1};
  const std::vector<double> c = {std::sqrt(p_Z / 2.0), std::sqrt(p_Z / 2.0),
                                 std::sqrt(p_X / 2.0), std::sqrt(p_X / 2.0)};

  // Probe overlaps <E_k|E_j> for coherent amplitudes (s, -s, is, -is).
  const double s_amp = std::sqrt(mu_out);
  const std::vector<cplx> amp = {cplx(s_amp, 0.0), cplx(-s_amp, 0.0), cplx(0.0, s_amp),
                                 cplx(0.0, -s_amp)};
  auto overlap = [&](int k, int j) {
    return std::exp(-0.5 * (std::norm(amp[static_cast<size_t>(k)]) +
                            std::norm(amp[static_cast<size_t>(j)])) +
                    std::conj(amp[static_cast<size_t>(k)]) * amp[static_cast<size_t>(j)]);
  };

  cmat pure = cmat::Zero(8, 8);
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k)
      pure += c[static_cast<size_t>(j)] * c[static_cast<size_t>(k)] * overlap(k, j) *
              kron(cmat(basis_vec(4, j) * basis_vec(4, k).adjoint()),
                   cmat(b[static_cast<size_t>(j)] * b[static_cast<size_t>(k)].adjoint()));
  DensityMatrix rho = depolarize(DensityMatrix(hermitize(pure), {4, 2}), 4.0 * p_depol, 1);

  Povm alice;
  alice.elements = {{"Z", "0", proj(basis_vec(4, 0))},
                    {"Z", "1", proj(basis_vec(4, 1))},
                    {"X", "0", proj(basis_vec(4, 2))},
                    {"X", "1", proj(basis_vec(4, 3))}};
  Povm bob;
  bob.elements = {{"Z", "0", p_Z * proj(z0)}, {"Z", "1", p_Z * proj(z1)},
                  {"X", "0", p_X * proj(x0)}, {"X", "1", p_X * proj(x1)}};

  ProtocolInstance inst;
  inst.name = "trojan_bb84";
  std::vector<std::pair<std::string, std::string>> keep;
  if (p_Z > 0.0) keep.push_back({"Z", "Z"});
  if (p_X > 0.0) keep.push_back({"X", "X"});
  if (keep.size() < 2)
    inst.notes.push_back("single-basis limit: the unused basis has no sifted rounds");
  inst.rho_sim = rho;
  inst.sift = build_sift_map(alice, bob, keep, {"0", "1"});

  auto pa = [](int j) { return proj(basis_vec(4, j)); };
  Constraint mz;
  mz.label = "match(Z)";
  mz.op = hermitize(cmat(p_Z * (kron(pa(0), proj(z0)) + kron(pa(1), proj(z1)))));
  Constraint mx;
  mx.label = "match(X)";
  mx.op = hermitize(cmat(p_X * (kron(pa(2), proj(x0)) + kron(pa(3), proj(x1)))));
  Constraint ez;
  ez.label = "error(Z)";
  ez.op = hermitize(cmat(p_Z * (kron(pa(0), proj(z1)) + kron(pa(1), proj(z0)))));
  Constraint ex;
  ex.label = "error(X)";
  ex.op = hermitize(cmat(p_X * (kron(pa(2), proj(x1)) + kron(pa(3), proj(x0)))));
  inst.constraints.items = {std::move(mz), std::move(mx), std::move(ez), std::move(ex)};
  detail::stamp_expectations(inst.constraints, rho.mat());
  inst.constraints_fine = detail::fine_grained(alice, bob, keep);
  detail::stamp_expectations(inst.constraints_fine, rho.mat());

  std::vector<Constraint> omega =
      detail::source_constraints(partial_trace(rho.mat(), {4, 2}, {0}), 2, true);
  for (auto& cst : omega) {
    inst.constraints.items.push_back(cst);
    inst.constraints_fine.items.push_back(cst);
  }
  // Cross-term expectations are zero only up to the eigensolver's resolution;
  // restamp so the stored values match the simulated state exactly.
  detail::stamp_expectations(inst.constraints, rho.mat());
  detail::stamp_expectations(inst.constraints_fine, rho.mat());

  const std::vector<double> g = inst.gammas();
  inst.pass_terms.terms = {{0, 1.0}, {1, 1.0}, {2, 1.0}, {3, 1.0}};
  inst.p_pass = inst.pass_terms.eval(g);
  inst.key_error_Q = (g[2] + g[3]) / inst.p_pass;
  inst.validate();
  return inst;
}

}  // namespace qkdfk
