#include <catch2/catch_amalgamated.hpp>

#include <qkdfk/lmi.hpp>
#include <qkdfk/sdp.hpp>

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace qkdfk;

namespace {

cmat random_density(std::mt19937& gen, int d, bool complex_field) {
  std::normal_distribution<double> n(0.0, 1.0);
  cmat a(d, d);
  for (int c = 0; c < d; ++c)
    for (int r = 0; r < d; ++r) a(r, c) = cplx(n(gen), complex_field ? n(gen) : 0.0);
  cmat rho = a * a.adjoint();
  rho /= rho.trace().real();
  // keep strictly positive so both programs have clean interiors
  rho = 0.9 * rho + 0.1 * identity(d) / static_cast<double>(d);
  return hermitize(rho);
}

// Root-fidelity program: maximize (Tr X + Tr X')/2 over [[P, X],[X', Q]] PSD,
// posed as one PSD block with its corners pinned entrywise.
SdpProblem fidelity_problem(const cmat& p, const cmat& q, bool complex_field) {
  const int d = static_cast<int>(p.rows());
  SdpProblem prob;
  prob.sense = SdpProblem::Sense::maximize;
  int w = prob.add_block("w", 2 * d);
  cmat obj = cmat::Zero(2 * d, 2 * d);
  obj.topRightCorner(d, d) = 0.5 * identity(d);
  obj.bottomLeftCorner(d, d) = 0.5 * identity(d);
  prob.set_objective(w, obj);

  auto pin_corner = [&](int off, const cmat& target) {
    for (int c = 0; c < d; ++c)
      for (int r = 0; r <= c; ++r) {
        cmat cc = cmat::Zero(2 * d, 2 * d);
        cc(off + r, off + c) += 0.5;
        cc(off + c, off + r) += 0.5;
        prob.add_row('=', target(r, c).real(), {{w, cc}});
        if (complex_field && r != c) {
          cmat ci = cmat::Zero(2 * d, 2 * d);
          ci(off + r, off + c) = cplx(0.0, 0.5);
          ci(off + c, off + r) = cplx(0.0, -0.5);
          prob.add_row('=', target(r, c).imag(), {{w, ci}});
        }
      }
  };
  pin_corner(0, p);
  pin_corner(d, q);
  return prob;
}

SdpProblem scalar_min_problem() {
  // minimize x subject to x >= 1
  SdpProblem prob;
  int x = prob.add_block("x", 1);
  prob.set_objective(x, cmat::Constant(1, 1, 1.0));
  prob.add_row('>', 1.0, {{x, cmat::Constant(1, 1, 1.0)}});
  return prob;
}

SdpProblem trace_one_min(const cmat& g) {
  SdpProblem prob;
  const int d = static_cast<int>(g.rows());
  int x = prob.add_block("x", d);
  prob.set_objective(x, g);
  prob.add_row('=', 1.0, {{x, identity(d)}}, "trace");
  return prob;
}

}  // namespace

TEST_CASE("scalar minimization meets its active bound", "[sdp]") {
  SdpProblem prob = scalar_min_problem();
  SdpSolution sol = solve(prob);
  REQUIRE(sol.status == SdpStatus::optimal);
  CHECK(sol.primal_value == Catch::Approx(1.0).margin(1e-7));
  CHECK(sol.dual_value == Catch::Approx(1.0).margin(1e-7));
  CHECK(sol.primal_blocks[0](0, 0).real() == Catch::Approx(1.0).margin(1e-6));
  CHECK(sol.dual_multipliers[0] == Catch::Approx(1.0).margin(1e-6));

  CertifiedBound cb = certify_dual(prob, sol);
  REQUIRE(cb.status == SdpStatus::optimal);
  CHECK(cb.direction == CertifiedBound::Direction::lower);
  CHECK(cb.value <= 1.0 + 1e-12);
  CHECK(cb.value == Catch::Approx(1.0).margin(1e-6));
  CHECK(cb.psd_residual == 0.0);
  CHECK(cb.linear_residual == 0.0);
}

TEST_CASE("equality-pinned scalar solves exactly", "[sdp]") {
  SdpProblem prob;
  int x = prob.add_block("x", 1);
  prob.set_objective(x, cmat::Constant(1, 1, 1.0));
  prob.add_row('=', 0.7, {{x, cmat::Constant(1, 1, 1.0)}});
  SdpSolution sol = solve(prob);
  REQUIRE(sol.status == SdpStatus::optimal);
  CHECK(sol.primal_value == Catch::Approx(0.7).margin(1e-7));
  CHECK(sol.primal_blocks[0](0, 0).real() == Catch::Approx(0.7).margin(1e-6));
}

TEST_CASE("trace-normalized cost minimization finds the bottom eigenvalue", "[sdp]") {
  cmat g = cmat::Zero(2, 2);
  g(0, 0) = 2.0;
  g(1, 1) = -1.0;
  SdpProblem prob = trace_one_min(g);
  SdpSolution sol = solve(prob);
  REQUIRE(sol.status == SdpStatus::optimal);
  CHECK(sol.primal_value == Catch::Approx(-1.0).margin(1e-7));
  CHECK(sol.dual_multipliers[0] == Catch::Approx(-1.0).margin(1e-6));
  CHECK(sol.primal_blocks[0](1, 1).real() == Catch::Approx(1.0).margin(1e-6));
  CHECK(sol.primal_blocks[0](0, 0).real() == Catch::Approx(0.0).margin(1e-6));

  SECTION("certification matches with and without a compensator hint") {
    CertifiedBound plain = certify_dual(prob, sol);
    prob.compensator_rows[0] = 0;
    CertifiedBound hinted = certify_dual(prob, sol);
    REQUIRE(plain.status == SdpStatus::optimal);
    REQUIRE(hinted.status == SdpStatus::optimal);
    CHECK(plain.value == Catch::Approx(hinted.value).margin(1e-12));
    CHECK(plain.value <= sol.primal_value + 1e-9);
    CHECK(plain.value == Catch::Approx(-1.0).margin(1e-6));
  }
}

TEST_CASE("complex cost matrices run through the doubled real embedding", "[sdp]") {
  cmat g(2, 2);
  g(0, 0) = 2.0;
  g(0, 1) = cplx(0.0, 1.0);
  g(1, 0) = cplx(0.0, -1.0);
  g(1, 1) = 3.0;
  const double lam_min = (5.0 - std::sqrt(5.0)) / 2.0;
  SdpProblem prob = trace_one_min(g);
  SdpSolution sol = solve(prob);
  REQUIRE(sol.status == SdpStatus::optimal);
  CHECK(sol.primal_value == Catch::Approx(lam_min).margin(1e-7));
  CHECK(herm_defect(sol.primal_blocks[0]) < 1e-10);
  CHECK(min_eigenvalue(sol.primal_blocks[0]) > -1e-9);
  CHECK(sol.primal_blocks[0].trace().real() == Catch::Approx(1.0).margin(1e-7));

  CertifiedBound cb = certify_dual(prob, sol);
  REQUIRE(cb.status == SdpStatus::optimal);
  CHECK(cb.value <= sol.primal_value + 1e-9);
  CHECK(cb.value == Catch::Approx(lam_min).margin(1e-6));
}

TEST_CASE("root-fidelity program matches the spectral formula for a pure/mixed pair",
          "[sdp]") {
  cmat p = cmat::Zero(2, 2);
  p(0, 0) = 1.0;
  cmat q = 0.5 * identity(2);
  SdpProblem prob = fidelity_problem(p, q, false);
  SdpSolution sol = solve(prob);
  REQUIRE(sol.status == SdpStatus::optimal);
  CHECK(sol.primal_value == Catch::Approx(std::sqrt(0.5)).margin(1e-6));
}

TEST_CASE("root-fidelity program matches the spectral oracle on random pairs", "[sdp]") {
  std::mt19937 gen(20240817);
  for (int trial = 0; trial < 50; ++trial) {
    const bool complex_field = trial >= 25;
    cmat p = random_density(gen, 4, complex_field);
    cmat q = random_density(gen, 4, complex_field);
    SdpProblem prob = fidelity_problem(p, q, complex_field);
    SdpSolution sol = solve(prob);
    INFO("trial " << trial << (complex_field ? " (complex)" : " (real)"));
    REQUIRE(sol.status == SdpStatus::optimal);
    const double target = std::sqrt(fidelity_oracle(p, q));
    CHECK(std::abs(sol.primal_value - target) <= 1e-6);
  }
}

TEST_CASE("weak duality holds across the corpus", "[sdp]") {
  std::mt19937 gen(7);
  std::vector<SdpProblem> corpus;
  corpus.push_back(scalar_min_problem());
  cmat g = cmat::Zero(2, 2);
  g(0, 0) = 2.0;
  g(1, 1) = -1.0;
  corpus.push_back(trace_one_min(g));
  corpus.push_back(fidelity_problem(random_density(gen, 3, true), random_density(gen, 3, true), true));
  corpus.push_back(fidelity_problem(random_density(gen, 4, false), random_density(gen, 4, false), false));

  for (size_t i = 0; i < corpus.size(); ++i) {
    SdpSolution sol = solve(corpus[i]);
    INFO("problem " << i);
    REQUIRE(sol.status == SdpStatus::optimal);
    const double slack = 1e-7 * (1.0 + std::abs(sol.primal_value));
    if (corpus[i].sense == SdpProblem::Sense::minimize)
      CHECK(sol.dual_value <= sol.primal_value + slack);
    else
      CHECK(sol.dual_value >= sol.primal_value - slack);
  }
}

TEST_CASE("repeat solves are bit-identical", "[sdp]") {
  std::mt19937 gen(99);
  SdpProblem prob = fidelity_problem(random_density(gen, 4, true), random_density(gen, 4, true), true);
  SdpSolution a = solve(prob);
  SdpSolution b = solve(prob);
  REQUIRE(a.status == SdpStatus::optimal);
  CHECK(a.primal_value == b.primal_value);
  CHECK(a.dual_value == b.dual_value);
  CHECK(a.iterations == b.iterations);
  for (size_t j = 0; j < a.dual_multipliers.size(); ++j)
    CHECK(a.dual_multipliers[j] == b.dual_multipliers[j]);
  CHECK((a.primal_blocks[0] - b.primal_blocks[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("early-stopped solves still certify valid bounds", "[sdp]") {
  std::mt19937 gen(5150);
  cmat p = random_density(gen, 4, false);
  cmat q = random_density(gen, 4, false);
  const double target = std::sqrt(fidelity_oracle(p, q));

  SECTION("maximization: certified upper bound brackets the optimum") {
    SdpProblem prob = fidelity_problem(p, q, false);
    SdpSolution rough = solve(prob, 1e-2);
    CertifiedBound cb = certify_dual(prob, rough);
    REQUIRE(cb.status == SdpStatus::optimal);
    CHECK(cb.direction == CertifiedBound::Direction::upper);
    CHECK(cb.value >= target - 1e-9);
    CHECK(cb.value <= target + 1e-2 * (1.0 + target));
  }

  SECTION("minimization: certified lower bound brackets the optimum") {
    cmat g = cmat::Zero(2, 2);
    g(0, 0) = 2.0;
    g(1, 1) = -1.0;
    SdpProblem prob = trace_one_min(g);
    SdpSolution rough = solve(prob, 1e-2);
    CertifiedBound cb = certify_dual(prob, rough);
    REQUIRE(cb.status == SdpStatus::optimal);
    CHECK(cb.value <= -1.0 + 1e-9);
    CHECK(cb.value >= -1.0 - 1e-2 * 2.0);
  }
}

TEST_CASE("certified bounds never cross the converged optimum", "[sdp]") {
  std::mt19937 gen(31337);
  for (int trial = 0; trial < 5; ++trial) {
    cmat p = random_density(gen, 3, trial % 2 == 1);
    cmat q = random_density(gen, 3, trial % 2 == 1);
    SdpProblem prob = fidelity_problem(p, q, trial % 2 == 1);
    SdpSolution converged = solve(prob);
    REQUIRE(converged.status == SdpStatus::optimal);
    for (double tol : {1e-2, 1e-4, 1e-8}) {
      SdpSolution sol = solve(prob, tol);
      CertifiedBound cb = certify_dual(prob, sol);
      REQUIRE(cb.status == SdpStatus::optimal);
      // maximize-sense: the certificate is an upper bound on the optimum
      CHECK(cb.value >= converged.primal_value - 1e-7);
    }
  }
}

TEST_CASE("contradictory scalar windows are reported infeasible", "[sdp]") {
  SdpProblem prob;
  int x = prob.add_block("x", 2);
  prob.set_objective(x, identity(2));
  cmat gamma = cmat::Zero(2, 2);
  gamma(0, 0) = 1.0;
  prob.add_row('=', 1.0, {{x, identity(2)}});
  prob.add_row('>', 0.7, {{x, gamma}});
  prob.add_row('<', 0.3, {{x, gamma}});
  SdpSolution sol = solve(prob);
  CHECK(sol.status == SdpStatus::infeasible);
}

TEST_CASE("unbounded objectives are flagged through the dual side", "[sdp]") {
  // minimize -x with x >= 1 has no finite optimum; the homogeneous embedding
  // reports this through the infeasibility channel.
  SdpProblem prob;
  int x = prob.add_block("x", 1);
  prob.set_objective(x, cmat::Constant(1, 1, -1.0));
  prob.add_row('>', 1.0, {{x, cmat::Constant(1, 1, 1.0)}});
  SdpSolution sol = solve(prob);
  CHECK(sol.status == SdpStatus::infeasible);
}

TEST_CASE("strict feasibility probe reports interior points", "[sdp]") {
  SECTION("trace normalization alone has the maximally mixed interior") {
    SdpProblem prob = trace_one_min(identity(3));
    SlaterReport rep = check_slater(prob);
    CHECK(rep.feasible);
    CHECK(rep.primal_strict);
    CHECK(rep.primal_margin == Catch::Approx(1.0 / 3.0).margin(1e-6));
    CHECK(rep.dual_strict);
  }

  SECTION("an open statistics window keeps both sides strict") {
    SdpProblem prob;
    int x = prob.add_block("x", 2);
    prob.set_objective(x, identity(2));
    cmat gamma = cmat::Zero(2, 2);
    gamma(0, 0) = 1.0;
    prob.add_row('=', 1.0, {{x, identity(2)}});
    prob.add_row('>', 0.2, {{x, gamma}});
    prob.add_row('<', 0.8, {{x, gamma}});
    SlaterReport rep = check_slater(prob);
    CHECK(rep.feasible);
    CHECK(rep.primal_strict);
    CHECK(rep.primal_margin > 0.05);
  }

  SECTION("crossed bounds are flagged infeasible") {
    SdpProblem prob;
    int x = prob.add_block("x", 2);
    prob.set_objective(x, identity(2));
    cmat gamma = cmat::Zero(2, 2);
    gamma(0, 0) = 1.0;
    prob.add_row('=', 1.0, {{x, identity(2)}});
    prob.add_row('>', 0.7, {{x, gamma}});
    prob.add_row('<', 0.3, {{x, gamma}});
    SlaterReport rep = check_slater(prob);
    CHECK_FALSE(rep.feasible);
  }
}

TEST_CASE("problem dump lists one nonzero per line", "[sdp]") {
  cmat g = cmat::Zero(2, 2);
  g(0, 0) = 2.0;
  g(1, 1) = -1.0;
  SdpProblem prob = trace_one_min(g);
  std::string text = dump_problem(prob);
  CHECK(text.find("# sense minimize") != std::string::npos);
  CHECK(text.find("# row 1 rel = bound 1") != std::string::npos);
  int data_lines = 0;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int cons, blk, r, c;
    double v;
    REQUIRE((ls >> cons >> blk >> r >> c >> v));
    ++data_lines;
  }
  CHECK(data_lines == 4);  // two objective diagonal entries + two identity entries
}

TEST_CASE("matrix-inequality builder reproduces the top eigenvalue", "[sdp][lmi]") {
  cmat a(2, 2);
  a(0, 0) = 1.0;
  a(0, 1) = cplx(0.0, 1.0);
  a(1, 0) = cplx(0.0, -1.0);
  a(1, 1) = 2.0;
  const double lam_max = (3.0 + std::sqrt(5.0)) / 2.0;

  LmiProgram prog;
  int t = prog.add_var("t", 'f', 1.0);
  int lmi = prog.add_lmi(a, "shift");
  prog.add_term(lmi, t, identity(2));
  prog.lmis[static_cast<size_t>(lmi)].compensator_var = t;

  LmiSolution sol = solve_lmi(prog);
  REQUIRE(sol.status == SdpStatus::optimal);
  CHECK(sol.value == Catch::Approx(lam_max).margin(1e-6));
  CHECK(sol.w[static_cast<size_t>(t)] == Catch::Approx(lam_max).margin(1e-6));
  CHECK(sol.bound <= sol.value + 1e-7 * (1.0 + std::abs(sol.value)));
}

TEST_CASE("matrix variables expand over the Hermitian basis", "[sdp][lmi]") {
  cmat g(2, 2);
  g(0, 0) = 2.0;
  g(0, 1) = cplx(0.0, 1.0);
  g(1, 0) = cplx(0.0, -1.0);
  g(1, 1) = 3.0;
  const double lam_min = (5.0 - std::sqrt(5.0)) / 2.0;

  LmiProgram prog;
  MatVarHandle y = prog.add_hermitian_var("y", 2, true);
  auto basis = hermitian_basis(2, true);
  for (int i = 0; i < y.count; ++i)
    prog.cost[static_cast<size_t>(y.first + i)] = trace_re(g * basis[static_cast<size_t>(i)]);
  int lmi = prog.add_lmi(cmat::Zero(2, 2), "psd");
  prog.add_matrix_terms(lmi, y, [](const cmat& h) { return h; });
  std::vector<std::pair<int, double>> tr_terms;
  for (int i = 0; i < y.count; ++i) {
    double tr = basis[static_cast<size_t>(i)].trace().real();
    if (tr != 0.0) tr_terms.push_back({y.first + i, tr});
  }
  prog.add_scalar_row(tr_terms, '=', 1.0, "trace");

  LmiSolution sol = solve_lmi(prog);
  REQUIRE(sol.status == SdpStatus::optimal);
  CHECK(sol.value == Catch::Approx(lam_min).margin(1e-6));
  cmat yv = prog.matrix_value(y, sol.w);
  CHECK(yv.trace().real() == Catch::Approx(1.0).margin(1e-6));
  CHECK(min_eigenvalue(yv) > -1e-7);
  CHECK(trace_re(g * yv) == Catch::Approx(lam_min).margin(1e-6));
}
