#pragma once
// Expectation-value constraint sets: observables with lower/upper bounds on
// Tr(rho Gamma). Statistical constraints get widened by finite-size deviation
// terms downstream; exact constraints (source characterization) never do.

#include <qkdfk/matqi.hpp>

#include <string>
#include <vector>

namespace qkdfk {

enum class ConstraintKind { statistical, exact };

struct Constraint {
  std::string label;
  cmat op;            // Hermitian observable Gamma
  double lo = 0.0;    // lower bound on Tr(rho Gamma)
  double hi = 0.0;    // upper bound
  ConstraintKind kind = ConstraintKind::statistical;
};

struct ConstraintSet {
  std::vector<Constraint> items;

  int count_statistical() const {
    int n = 0;
    for (const auto& c : items)
      if (c.kind == ConstraintKind::statistical) ++n;
    return n;
  }
};

}  // namespace qkdfk
