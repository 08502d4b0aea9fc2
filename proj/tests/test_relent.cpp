#include <catch2/catch_amalgamated.hpp>

#include <qkdfk/channels.hpp>
#include <qkdfk/relent.hpp>

#include <cmath>
#include <random>
#include <string>
#include <vector>

using namespace qkdfk;

namespace {

cmat random_density(int n, std::mt19937& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  cmat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = cplx(g(rng), g(rng));
  cmat rho = a * a.adjoint();
  return rho / rho.trace().real();
}

double h2(double q) {
  if (q <= 0.0 || q >= 1.0) return 0.0;
  return -q * std::log2(q) - (1.0 - q) * std::log2(1.0 - q);
}

// Standard four-state POVMs with basis probabilities (pz, 1-pz).
Povm bb84_povm(double pz) {
  const double px = 1.0 - pz;
  cvec plus = (basis_vec(2, 0) + basis_vec(2, 1)) / std::sqrt(2.0);
  cvec minus = (basis_vec(2, 0) - basis_vec(2, 1)) / std::sqrt(2.0);
  Povm p;
  p.elements = {{"Z", "0", pz * proj(basis_vec(2, 0))},
                {"Z", "1", pz * proj(basis_vec(2, 1))},
                {"X", "0", px * proj(plus)},
                {"X", "1", px * proj(minus)}};
  return p;
}

SiftMap bb84_map(double pz) {
  return build_sift_map(bb84_povm(pz), bb84_povm(pz), {{"Z", "Z"}, {"X", "X"}}, {"0", "1"});
}

// Error-rate windows on both coarse-grained error observables; exact rows
// when lo == hi pins the rate, else [0, scale*q].
ConstraintSet bb84_windows(double pz, double q, bool pinned) {
  ConstraintSet grain = coarse_grain(bb84_povm(pz), bb84_povm(pz), {{"Z", "Z"}, {"X", "X"}});
  ConstraintSet out;
  for (auto& c : grain.items) {
    if (c.label.rfind("error", 0) != 0) continue;
    const double scale =
        (c.label.find('Z') != std::string::npos) ? pz * pz : (1.0 - pz) * (1.0 - pz);
    c.lo = pinned ? scale * q : 0.0;
    c.hi = scale * q;
    out.items.push_back(std::move(c));
  }
  return out;
}

// One kept announcement, identity filter, key pinch on the first qubit.
SiftMap plain_key_map() {
  SiftMap map;
  map.mode = SiftMode::single_kraus;
  map.in_dim = 4;
  SiftBlock blk;
  blk.label = "all";
  blk.weight = 1.0;
  blk.kraus = identity(4);
  blk.key_projectors = {kron(proj(basis_vec(2, 0)), identity(2)),
                        kron(proj(basis_vec(2, 1)), identity(2))};
  map.blocks.push_back(std::move(blk));
  return map;
}

const cvec kBell = [] {
  cvec v = cvec::Zero(4);
  v(0) = 1.0 / std::sqrt(2.0);
  v(3) = 1.0 / std::sqrt(2.0);
  return v;
}();

// Pin every real-symmetric coordinate of rho to the target's.
ConstraintSet pin_state(const cmat& target) {
  ConstraintSet out;
  const int d = static_cast<int>(target.rows());
  const auto basis = hermitian_basis(d, false);
  for (size_t i = 0; i < basis.size(); ++i) {
    Constraint c;
    c.label = "pin" + std::to_string(i);
    c.op = basis[i];
    const double v = (basis[i] * target).trace().real();
    c.lo = v;
    c.hi = v;
    out.items.push_back(std::move(c));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// gauss_legendre_unit

TEST_CASE("one-point quadrature is the midpoint rule") {
  Quadrature q = gauss_legendre_unit(1);
  REQUIRE(q.nodes.size() == 1);
  REQUIRE(q.nodes(0) == Catch::Approx(0.5).margin(1e-14));
  REQUIRE(q.weights(0) == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("two-point nodes and weights match the closed form") {
  Quadrature q = gauss_legendre_unit(2);
  const double off = 1.0 / (2.0 * std::sqrt(3.0));
  REQUIRE(q.nodes(0) == Catch::Approx(0.5 - off).margin(1e-12));
  REQUIRE(q.nodes(1) == Catch::Approx(0.5 + off).margin(1e-12));
  REQUIRE(q.weights(0) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(q.weights(1) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("two points integrate cubics exactly") {
  Quadrature q = gauss_legendre_unit(2);
  double acc = 0.0;
  for (int j = 0; j < 2; ++j) acc += q.weights(j) * std::pow(q.nodes(j), 3);
  REQUIRE(acc == Catch::Approx(0.25).margin(1e-14));
}

TEST_CASE("quadrature nodes stay interior and weights sum to one") {
  for (int m = 1; m <= 9; ++m) {
    Quadrature q = gauss_legendre_unit(m);
    REQUIRE(q.nodes.size() == m);
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      REQUIRE(q.nodes(j) > 0.0);
      REQUIRE(q.nodes(j) < 1.0);
      if (j > 0) REQUIRE(q.nodes(j) > q.nodes(j - 1));
      REQUIRE(q.weights(j) > 0.0);
      sum += q.weights(j);
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-13));
  }
}

TEST_CASE("quadrature rejects nonpositive point counts") {
  REQUIRE_THROWS_AS(gauss_legendre_unit(0), std::invalid_argument);
  REQUIRE_THROWS_AS(gauss_legendre_unit(-3), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// build_qre_sdp

TEST_CASE("four-state program with errors pinned to zero scores half a bit") {
  QreApproxConfig cfg;
  SdpProblem prob = build_qre_sdp(bb84_windows(0.5, 0.0, true), bb84_map(0.5), cfg);
  SdpSolution sol = solve(prob);
  REQUIRE((sol.status == SdpStatus::optimal || sol.status == SdpStatus::near_optimal));
  REQUIRE(sol.primal_value == Catch::Approx(0.5).margin(1e-4));
}

TEST_CASE("pinning the maximally entangled state scores one bit under a plain key pinch") {
  QreApproxConfig cfg;
  SdpProblem prob = build_qre_sdp(pin_state(proj(kBell)), plain_key_map(), cfg);
  SdpSolution sol = solve(prob);
  REQUIRE((sol.status == SdpStatus::optimal || sol.status == SdpStatus::near_optimal));
  REQUIRE(sol.primal_value == Catch::Approx(1.0).margin(1e-4));
}

TEST_CASE("refining the quadrature moves the optimum by less than a tenth millibit") {
  const double qs[] = {0.0, 0.05, 0.10};
  for (double q : qs) {
    ConstraintSet cons = bb84_windows(0.5, q, q == 0.0);
    SiftMap map = bb84_map(0.5);
    double val[3];
    const int ms[] = {2, 4, 8}, ks[] = {2, 4, 6};
    for (int i = 0; i < 3; ++i) {
      QreApproxConfig cfg;
      cfg.m = ms[i];
      cfg.k = ks[i];
      SdpSolution sol = solve(build_qre_sdp(cons, map, cfg));
      REQUIRE((sol.status == SdpStatus::optimal || sol.status == SdpStatus::near_optimal));
      val[i] = sol.primal_value;
    }
    CAPTURE(q, val[0], val[1], val[2]);
    REQUIRE(std::abs(val[0] - val[1]) < 1e-4);
    REQUIRE(std::abs(val[1] - val[2]) < 1e-4);
    if (q == 0.05) REQUIRE(std::abs(val[1] - val[2]) < 1e-5);
  }
}

TEST_CASE("builder rejects bad inputs") {
  SiftMap map = bb84_map(0.5);
  QreApproxConfig cfg;
  ConstraintSet cons = bb84_windows(0.5, 0.05, false);

  QreApproxConfig bad_m = cfg;
  bad_m.m = 0;
  REQUIRE_THROWS_AS(build_qre_sdp(cons, map, bad_m), std::invalid_argument);
  QreApproxConfig bad_k = cfg;
  bad_k.k = -1;
  REQUIRE_THROWS_AS(build_qre_sdp(cons, map, bad_k), std::invalid_argument);

  ConstraintSet flipped = cons;
  flipped.items[0].lo = 0.5;
  flipped.items[0].hi = 0.1;
  REQUIRE_THROWS_AS(build_qre_sdp(flipped, map, cfg), std::invalid_argument);

  ConstraintSet wrong_dim = cons;
  wrong_dim.items[0].op = identity(3);
  REQUIRE_THROWS_AS(build_qre_sdp(wrong_dim, map, cfg), std::invalid_argument);

  SiftMap no_blocks = map;
  no_blocks.blocks.clear();
  no_blocks.mode = SiftMode::dilated;
  REQUIRE_THROWS_AS(build_qre_sdp(cons, no_blocks, cfg), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// objective_value / grad_objective

TEST_CASE("objective value matches the eigendecomposition formula on the entangled state") {
  // One bit for the plain key pinch, half a bit across the four-state blocks.
  REQUIRE(objective_value(proj(kBell), plain_key_map()) == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(objective_value(proj(kBell), bb84_map(0.5)) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("pinched states sit at a stationary point") {
  SiftMap map = plain_key_map();
  cmat sigma0 = 0.5 * (proj(basis_vec(2, 0)) + proj((basis_vec(2, 0) + basis_vec(2, 1)).eval()));
  cmat rho = 0.6 * kron(proj(basis_vec(2, 0)), sigma0) +
             0.4 * kron(proj(basis_vec(2, 1)), identity(2) / 2.0);
  cmat g = grad_objective(rho, map, 1e-8);
  REQUIRE(g.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("block and dilated gradients agree") {
  std::mt19937 rng(4242);
  SiftMap map = bb84_map(0.5);
  SiftMap dilated_only = map;
  dilated_only.blocks.clear();
  dilated_only.mode = SiftMode::dilated;
  for (int trial = 0; trial < 5; ++trial) {
    cmat rho = 0.5 * random_density(4, rng) + 0.5 * identity(4) / 4.0;
    cmat g_block = grad_objective(rho, map, 1e-9);
    cmat g_dilated = grad_objective(rho, dilated_only, 1e-9);
    REQUIRE((g_block - g_dilated).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("block prefactors cancel inside the logarithms") {
  std::mt19937 rng(99);
  SiftMap map = bb84_map(0.7);
  cmat rho = 0.5 * random_density(4, rng) + 0.5 * identity(4) / 4.0;
  cmat g = grad_objective(rho, map, 0.0);
  // Same gradient with each block's probability prefactor kept inside the logs.
  cmat byhand = cmat::Zero(4, 4);
  for (const auto& blk : map.blocks) {
    cmat r = hermitize(blk.weight * (blk.kraus * rho * blk.kraus.adjoint()));
    byhand += blk.weight * (blk.kraus.adjoint() *
                            (mat_log2_regularized(r, 0.0) -
                             mat_log2_regularized(pinch(r, blk.key_projectors), 0.0)) *
                            blk.kraus);
  }
  REQUIRE((g - hermitize(byhand)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("finite differences confirm the gradient") {
  std::mt19937 rng(31337);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SiftMap map = bb84_map(0.5);
  cmat rho = 0.5 * random_density(4, rng) + 0.5 * identity(4) / 4.0;
  cmat g = grad_objective(rho, map, 0.0);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    cmat delta(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) delta(i, j) = cplx(gauss(rng), gauss(rng));
    delta = hermitize(delta);
    delta -= (delta.trace().real() / 4.0) * identity(4);
    delta /= delta.norm();
    const double fd = (objective_value(cmat(rho + h * delta), map) -
                       objective_value(cmat(rho - h * delta), map)) /
                      (2.0 * h);
    const double lin = std::real((g * delta).trace());
    REQUIRE(fd == Catch::Approx(lin).epsilon(1e-5).margin(1e-9));
  }
}

TEST_CASE("gradient rejects out-of-range perturbations") {
  REQUIRE_THROWS_AS(grad_objective(identity(4) / 4.0, bb84_map(0.5), -1e-9),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(grad_objective(identity(4) / 4.0, bb84_map(0.5), 1e-3),
                    std::invalid_argument);
}

// ---------------------------------------------------------------------------
// certified_keyterm

TEST_CASE("error windows certify the binary-entropy value") {
  QreApproxConfig cfg;
  KeyTermBound kb = certified_keyterm(bb84_windows(0.5, 0.05, false), bb84_map(0.5), cfg);
  const double closed = 0.5 * (1.0 - h2(0.05));
  REQUIRE(kb.value == Catch::Approx(closed).margin(1e-3));
  REQUIRE(kb.value <= closed + 1e-9);  // a lower bound must not cross the truth
  REQUIRE(kb.certificate.status == SdpStatus::optimal);
  REQUIRE(kb.certificate.direction == CertifiedBound::Direction::lower);
  REQUIRE(kb.certificate.psd_residual <= 1e-12);
  REQUIRE(kb.certificate.linear_residual <= 1e-12);
  REQUIRE(kb.value <= objective_value(kb.rho_hat, bb84_map(0.5)) + 1e-6);
}

TEST_CASE("windows admitting a single state certify its full entropy") {
  QreApproxConfig cfg;
  SiftMap map = bb84_map(0.5);
  KeyTermBound kb = certified_keyterm(bb84_windows(0.5, 0.0, true), map, cfg);
  REQUIRE(kb.value == Catch::Approx(0.5).margin(1e-4));
  REQUIRE(kb.value <= 0.5 + 1e-9);
  // At the closed-form optimum the linear correction nearly vanishes.
  REQUIRE(std::abs(kb.value - objective_value(kb.rho_hat, map)) < 1e-6);
  // The linearization point is essentially the maximally entangled state.
  REQUIRE(std::real((kBell.adjoint() * kb.rho_hat.mat() * kBell)(0)) > 1.0 - 1e-6);
}

TEST_CASE("a coarse approximation still certifies a valid bound") {
  QreApproxConfig cfg;
  cfg.m = 1;
  cfg.k = 0;
  KeyTermBound kb = certified_keyterm(bb84_windows(0.5, 0.05, false), bb84_map(0.5), cfg);
  REQUIRE(kb.value <= 0.5 * (1.0 - h2(0.05)) + 1e-6);
  REQUIRE(kb.value > 0.0);
  REQUIRE(kb.value <= objective_value(kb.rho_hat, bb84_map(0.5)) + 1e-6);
}

TEST_CASE("certified values stay below the linearization point across error rates") {
  SiftMap map = bb84_map(0.5);
  const double qs[] = {0.02, 0.08};
  for (double q : qs) {
    QreApproxConfig cfg;
    KeyTermBound kb = certified_keyterm(bb84_windows(0.5, q, false), map, cfg);
    const double closed = 0.5 * (1.0 - h2(q));
    CAPTURE(q, kb.value, closed);
    REQUIRE(kb.value == Catch::Approx(closed).margin(1e-3));
    REQUIRE(kb.value <= closed + 1e-9);
    REQUIRE(kb.value <= objective_value(kb.rho_hat, map) + 1e-6);
  }
}

TEST_CASE("impossible windows fail with an error, not a number") {
  // Two projector masses required to sum past one: no state qualifies.
  ConstraintSet cons;
  Constraint a;
  a.label = "heavy0";
  a.op = kron(proj(basis_vec(2, 0)), identity(2));
  a.lo = 0.9;
  a.hi = 1.0;
  Constraint b;
  b.label = "heavy1";
  b.op = kron(proj(basis_vec(2, 1)), identity(2));
  b.lo = 0.9;
  b.hi = 1.0;
  cons.items = {a, b};
  QreApproxConfig cfg;
  cfg.m = 2;
  cfg.k = 2;
  REQUIRE_THROWS_AS(certified_keyterm(cons, bb84_map(0.5), cfg), std::runtime_error);
}
