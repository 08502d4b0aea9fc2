#pragma once
// Quantum channels, POVMs, and the announcement / postselection / key-map
// machinery. A SiftMap describes the public-announcement phase of a protocol:
// parties measure, broadcast announcement tags, and keep a subset of tag
// pairs. Internally every catalog protocol reduces to a compact block
// representation (one block per kept announcement pair), which is what the
// entropy SDPs consume; a fully dilated representation with explicit
// announcement registers is kept alongside for cross-validation.

#include <qkdfk/constraints.hpp>
#include <qkdfk/matqi.hpp>

#include <algorithm>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qkdfk {

// ---------------------------------------------------------------------------
// POVMs

struct PovmElement {
  std::string announce;  // announcement tag (broadcast publicly)
  std::string value;     // value tag (kept private; Alice's defines the key)
  cmat op;
};

struct Povm {
  std::vector<PovmElement> elements;

  int dim() const { return elements.empty() ? 0 : static_cast<int>(elements[0].op.rows()); }

  void validate(double tol = 1e-10) const {
    if (elements.empty()) throw std::invalid_argument("Povm: no elements");
    cmat sum = cmat::Zero(dim(), dim());
    for (const auto& e : elements) {
      if (e.op.rows() != dim() || e.op.cols() != dim())
        throw std::invalid_argument("Povm: inconsistent element dims");
      if (herm_defect(e.op) > tol) throw std::invalid_argument("Povm: element not Hermitian");
      if (min_eigenvalue(e.op) < -tol) throw std::invalid_argument("Povm: element not PSD");
      sum += e.op;
    }
    if ((sum - identity(dim())).cwiseAbs().maxCoeff() > tol)
      throw std::invalid_argument("Povm: elements do not sum to identity");
  }

  std::vector<std::string> announcements() const {
    std::vector<std::string> out;
    for (const auto& e : elements)
      if (std::find(out.begin(), out.end(), e.announce) == out.end()) out.push_back(e.announce);
    return out;
  }

  std::vector<const PovmElement*> with_announce(const std::string& a) const {
    std::vector<const PovmElement*> out;
    for (const auto& e : elements)
      if (e.announce == a) out.push_back(&e);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Simple channels

enum class ChannelKind { depolarizing, pure_loss, composed };

struct ChannelSpec {
  ChannelKind kind = ChannelKind::depolarizing;
  double p = 0.0;         // depolarizing probability
  double sqrt_eta = 1.0;  // power transmittance of one half-link
  int target = 0;         // subsystem index the channel acts on
};

namespace detail {

// Embed a two-site unitary acting on subsystems (s1, s2) into the full space.
inline cmat embed_two_site(const cmat& u, const std::vector<int>& dims, int s1, int s2) {
  int total = 1;
  for (int d : dims) total *= d;
  const std::vector<int> strides = strides_of(dims);
  const int d1 = dims[s1], d2 = dims[s2];
  cmat full = cmat::Zero(total, total);
  std::vector<int> digits(dims.size());
  for (int row = 0; row < total; ++row) {
    int rem = row;
    for (size_t s = 0; s < dims.size(); ++s) {
      digits[s] = rem / strides[s];
      rem %= strides[s];
    }
    int r12 = digits[s1] * d2 + digits[s2];
    for (int c12 = 0; c12 < d1 * d2; ++c12) {
      cplx amp = u(r12, c12);
      if (amp == cplx(0.0, 0.0)) continue;
      int col = row + (c12 / d2 - digits[s1]) * strides[s1] + (c12 % d2 - digits[s2]) * strides[s2];
      full(row, col) = amp;
    }
  }
  return full;
}

}  // namespace detail

// (1-p) rho + p (Tr_target rho) (x) I/2, reassembled in original order.
inline DensityMatrix depolarize(const DensityMatrix& rho, double p, int target) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("depolarize: p outside [0,1]");
  if (target < 0 || target >= static_cast<int>(rho.subsystem_dims.size()))
    throw std::out_of_range("depolarize: target out of range");
  if (rho.subsystem_dims[target] != 2)
    throw std::invalid_argument("depolarize: target subsystem must be 2-dimensional");
  const std::vector<int>& dims = rho.subsystem_dims;
  std::vector<int> keep;
  for (int i = 0; i < static_cast<int>(dims.size()); ++i)
    if (i != target) keep.push_back(i);
  cmat out;
  if (keep.empty()) {
    out = (1.0 - p) * rho.mat() + p * 0.5 * identity(2);
  } else {
    cmat reduced = partial_trace(rho.mat(), dims, keep);
    const std::vector<int> strides = detail::strides_of(dims);
    out = (1.0 - p) * rho.mat();
    std::vector<int> kd;
    for (int i : keep) kd.push_back(dims[i]);
    const std::vector<int> kstr = detail::strides_of(kd);
    // Map (index over kept subsystems, target digit) to the full index.
    auto full_index = [&](int kidx, int tdigit) {
      int off = tdigit * strides[target];
      int rem = kidx;
      for (size_t s = 0; s < kd.size(); ++s) {
        off += (rem / kstr[s]) * strides[keep[s]];
        rem %= kstr[s];
      }
      return off;
    };
    const int K = rho.dim() / 2;
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j)
        for (int t = 0; t < 2; ++t)
          out(full_index(i, t), full_index(j, t)) += p * 0.5 * reduced(i, j);
  }
  return DensityMatrix(hermitize(out), dims);
}

// Pure loss on a {vacuum, single-photon} mode: dilate with an ancilla vacuum,
// apply a beamsplitter with transmission amplitude sqrt(sqrt_eta), trace out
// the ancilla. sqrt_eta is the power transmittance of the half-link.
inline DensityMatrix pure_loss_single_photon(const DensityMatrix& rho, double sqrt_eta,
                                             int target) {
  if (sqrt_eta < 0.0 || sqrt_eta > 1.0)
    throw std::invalid_argument("pure_loss_single_photon: sqrt_eta outside [0,1]");
  if (target < 0 || target >= static_cast<int>(rho.subsystem_dims.size()))
    throw std::out_of_range("pure_loss_single_photon: target out of range");
  if (rho.subsystem_dims[target] != 2)
    throw std::invalid_argument("pure_loss_single_photon: target must be a {0,1} photon mode");
  const double a = std::sqrt(sqrt_eta), b = std::sqrt(1.0 - sqrt_eta);
  // Basis (|00>,|01>,|10>,|11>) of (target, ancilla); photon number conserved.
  cmat u = cmat::Zero(4, 4);
  u(0, 0) = 1.0;
  u(2, 2) = a;  // |10> -> a|10> + b|01>
  u(1, 2) = b;
  u(1, 1) = a;  // |01> -> a|01> - b|10>
  u(2, 1) = -b;
  u(3, 3) = 1.0;
  std::vector<int> dims = rho.subsystem_dims;
  dims.push_back(2);  // ancilla appended last, starts in vacuum
  cmat ext = kron(rho.mat(), proj(basis_vec(2, 0)));
  cmat ufull = detail::embed_two_site(u, dims, target, static_cast<int>(dims.size()) - 1);
  cmat evolved = ufull * ext * ufull.adjoint();
  std::vector<int> keep;
  for (int i = 0; i + 1 < static_cast<int>(dims.size()); ++i) keep.push_back(i);
  cmat out = partial_trace(evolved, dims, keep);
  return DensityMatrix(hermitize(out), rho.subsystem_dims);
}

// ---------------------------------------------------------------------------
// Pinching channel

inline void validate_pinch_family(const std::vector<cmat>& projectors, int dim,
                                  double tol = 1e-9) {
  if (projectors.empty()) throw std::invalid_argument("pinch: empty projector family");
  cmat sum = cmat::Zero(dim, dim);
  for (size_t i = 0; i < projectors.size(); ++i) {
    const cmat& p = projectors[i];
    if (p.rows() != dim || p.cols() != dim)
      throw std::invalid_argument("pinch: projector dim mismatch");
    if (herm_defect(p) > tol || (p * p - p).cwiseAbs().maxCoeff() > tol)
      throw std::invalid_argument("pinch: element is not a projector");
    for (size_t j = 0; j < i; ++j)
      if ((p * projectors[j]).cwiseAbs().maxCoeff() > tol)
        throw std::invalid_argument("pinch: projectors not mutually orthogonal");
    sum += p;
  }
  if ((sum - identity(dim)).cwiseAbs().maxCoeff() > tol)
    throw std::invalid_argument("pinch: projectors do not sum to identity");
}

inline cmat pinch(const cmat& rho, const std::vector<cmat>& projectors) {
  validate_pinch_family(projectors, static_cast<int>(rho.rows()));
  cmat out = cmat::Zero(rho.rows(), rho.cols());
  for (const cmat& p : projectors) out += p * rho * p;
  return hermitize(out);
}

// ---------------------------------------------------------------------------
// SiftMap

enum class SiftMode { dilated, single_kraus, block_diagonal };

// One kept announcement pair in compressed form: the sifted state restricted
// to this announcement is weight * kraus rho kraus^dagger, and the key-map
// pinching acts with key_projectors on the block space.
struct SiftBlock {
  std::string label;
  double weight = 1.0;
  cmat kraus;                        // block_dim x in_dim
  std::vector<cmat> key_projectors;  // on block space; orthogonal, sum to I
};

struct SiftedState {
  std::vector<cmat> blocks;
  double p_pass = 0.0;

  cmat direct_sum() const {
    int total = 0;
    for (const auto& b : blocks) total += static_cast<int>(b.rows());
    cmat out = cmat::Zero(total, total);
    int off = 0;
    for (const auto& b : blocks) {
      out.block(off, off, b.rows(), b.cols()) = b;
      off += static_cast<int>(b.rows());
    }
    return out;
  }
};

struct SiftMap {
  SiftMode mode = SiftMode::dilated;
  int in_dim = 0;
  std::vector<SiftBlock> blocks;  // compressed representation (when available)

  // Dilated representation; registers ordered (A, A_announce, A_value, B, B_announce).
  std::vector<cmat> kraus_ops;       // one per kept announcement pair
  cmat projector;                    // onto kept announcements
  std::vector<cmat> key_projectors;  // pinching family on the dilated space
  std::vector<int> dilated_dims;

  bool has_blocks() const { return !blocks.empty(); }
  int block_total_dim() const {
    int t = 0;
    for (const auto& b : blocks) t += static_cast<int>(b.kraus.rows());
    return t;
  }
};

// Forward action through the compressed blocks (or the dilated rep if no
// block representation exists).
inline SiftedState sift_apply(const SiftMap& map, const cmat& rho) {
  if (rho.rows() != map.in_dim || rho.cols() != map.in_dim)
    throw std::invalid_argument("sift_apply: dimension mismatch");
  SiftedState out;
  if (map.has_blocks()) {
    for (const auto& b : map.blocks) {
      cmat blk = b.weight * (b.kraus * rho * b.kraus.adjoint());
      out.p_pass += blk.trace().real();
      out.blocks.push_back(hermitize(blk));
    }
  } else {
    cmat acc = cmat::Zero(map.projector.rows(), map.projector.cols());
    for (const cmat& k : map.kraus_ops) acc += k * rho * k.adjoint();
    acc = map.projector * acc * map.projector;
    out.blocks.push_back(hermitize(acc));
    out.p_pass = acc.trace().real();
  }
  return out;
}

inline SiftedState sift_apply(const SiftMap& map, const DensityMatrix& rho) {
  return sift_apply(map, rho.mat());
}

// Forward action through the dilated representation (for cross-checks).
inline SiftedState sift_apply_dilated(const SiftMap& map, const cmat& rho) {
  if (rho.rows() != map.in_dim) throw std::invalid_argument("sift_apply_dilated: dim mismatch");
  cmat acc = cmat::Zero(map.projector.rows(), map.projector.cols());
  for (const cmat& k : map.kraus_ops) acc += k * rho * k.adjoint();
  acc = map.projector * acc * map.projector;
  SiftedState out;
  out.blocks.push_back(hermitize(acc));
  out.p_pass = acc.trace().real();
  return out;
}

// Adjoint of the forward map: Tr[S(rho) sigma] = Tr[rho S^dagger(sigma)].
inline cmat sift_adjoint(const SiftMap& map, const std::vector<cmat>& sigma_blocks) {
  if (!map.has_blocks()) throw std::invalid_argument("sift_adjoint: no block representation");
  if (sigma_blocks.size() != map.blocks.size())
    throw std::invalid_argument("sift_adjoint: block count mismatch");
  cmat out = cmat::Zero(map.in_dim, map.in_dim);
  for (size_t i = 0; i < map.blocks.size(); ++i) {
    const auto& b = map.blocks[i];
    if (sigma_blocks[i].rows() != b.kraus.rows())
      throw std::invalid_argument("sift_adjoint: block dimension mismatch");
    out += b.weight * (b.kraus.adjoint() * sigma_blocks[i] * b.kraus);
  }
  return hermitize(out);
}

// Adjoint taking sigma on the sifted space as one matrix: a direct sum over
// blocks when the block representation exists (dispatch on dimension), else
// an operator on the dilated space.
inline cmat sift_adjoint(const SiftMap& map, const cmat& sigma) {
  if (map.has_blocks() && sigma.rows() == map.block_total_dim()) {
    std::vector<cmat> parts;
    int off = 0;
    for (const auto& b : map.blocks) {
      int d = static_cast<int>(b.kraus.rows());
      parts.push_back(sigma.block(off, off, d, d));
      off += d;
    }
    return sift_adjoint(map, parts);
  }
  if (sigma.rows() != map.projector.rows())
    throw std::invalid_argument("sift_adjoint: sigma dimension matches neither representation");
  cmat mid = map.projector * sigma * map.projector;
  cmat out = cmat::Zero(map.in_dim, map.in_dim);
  for (const cmat& k : map.kraus_ops) out += k.adjoint() * mid * k;
  return hermitize(out);
}

namespace detail {

// Decompose a POVM element as scale * |u><u|; empty if rank > 1.
inline std::optional<std::pair<double, cvec>> rank_one_form(const cmat& m, double tol = 1e-9) {
  Spectrum s = eig_hermitian(hermitize(m), 1e-9);
  int n = static_cast<int>(m.rows());
  double top = s.eigenvalues(n - 1);
  if (top <= tol) return std::nullopt;
  for (int i = 0; i + 1 < n; ++i)
    if (std::abs(s.eigenvalues(i)) > tol * std::max(1.0, top)) return std::nullopt;
  return std::make_pair(top, cvec(s.eigenvectors.col(n - 1)));
}

// Orthonormal basis of the range of a PSD matrix.
inline cmat psd_range_basis(const cmat& m, double tol = 1e-12) {
  Spectrum s = eig_hermitian(hermitize(m), 1e-9);
  int n = static_cast<int>(m.rows());
  double top = s.eigenvalues.maxCoeff();
  std::vector<int> cols;
  for (int i = 0; i < n; ++i)
    if (s.eigenvalues(i) > tol * std::max(1.0, top)) cols.push_back(i);
  cmat basis(n, static_cast<int>(cols.size()));
  for (size_t c = 0; c < cols.size(); ++c)
    basis.col(static_cast<Eigen::Index>(c)) = s.eigenvectors.col(cols[c]);
  return basis;
}

}  // namespace detail

// Build the sift map for the kept announcement pairs. key_values lists
// Alice's value tags in key-symbol order; her value elements define the
// key-map pinching. Bob enters through per-announcement filters (his value
// outcomes stay local, so only the announcement-conditioned filter matters
// for the secrecy analysis).
//
// The compressed block path requires Alice's kept elements to be equal-scale
// rank-one projectors onto orthonormal vectors (true for every catalog
// protocol); otherwise only the dilated representation is produced.
inline SiftMap build_sift_map(const Povm& alice, const Povm& bob,
                              const std::vector<std::pair<std::string, std::string>>& keep,
                              const std::vector<std::string>& key_values) {
  alice.validate();
  bob.validate();
  const int da = alice.dim(), db = bob.dim();
  SiftMap map;
  map.in_dim = da * db;

  const std::vector<std::string> aann = alice.announcements();
  const std::vector<std::string> bann = bob.announcements();
  for (const auto& [ka, kb] : keep) {
    if (std::find(aann.begin(), aann.end(), ka) == aann.end() ||
        std::find(bann.begin(), bann.end(), kb) == bann.end())
      throw std::invalid_argument("build_sift_map: keep references unknown announcement");
  }

  // --- Compressed blocks.
  bool blocks_ok = true;
  for (const auto& [ka, kb] : keep) {
    auto aelems = alice.with_announce(ka);
    // Order Alice's value elements by the key alphabet.
    std::vector<const PovmElement*> ordered;
    for (const auto& label : key_values)
      for (const auto* e : aelems)
        if (e->value == label) ordered.push_back(e);
    if (ordered.size() != aelems.size() || ordered.empty()) {
      blocks_ok = false;
      break;
    }

    double scale = -1.0;
    std::vector<cvec> basis;
    for (const auto* e : ordered) {
      auto r1 = detail::rank_one_form(e->op);
      if (!r1) {
        blocks_ok = false;
        break;
      }
      if (scale < 0.0)
        scale = r1->first;
      else if (std::abs(scale - r1->first) > 1e-9 * std::max(1.0, scale)) {
        blocks_ok = false;
        break;
      }
      basis.push_back(r1->second);
    }
    if (!blocks_ok) break;
    for (size_t i = 0; i < basis.size() && blocks_ok; ++i)
      for (size_t j = 0; j < i; ++j)
        if (std::abs((basis[i].adjoint() * basis[j])(0)) > 1e-9) {
          blocks_ok = false;
          break;
        }
    if (!blocks_ok) break;

    cmat range_a(da, static_cast<int>(basis.size()));
    for (size_t c = 0; c < basis.size(); ++c)
      range_a.col(static_cast<Eigen::Index>(c)) = basis[c];

    cmat bob_sum = cmat::Zero(db, db);
    for (const auto* e : bob.with_announce(kb)) bob_sum += e->op;
    cmat filter = detail::mat_sqrt_psd(bob_sum);
    cmat range_b = detail::psd_range_basis(bob_sum);
    if (range_b.cols() == 0) {
      blocks_ok = false;
      break;
    }
    // Pull the top singular value of the filter into the scalar weight.
    Eigen::JacobiSVD<cmat> svd(filter);
    const double s_top = svd.singularValues()(0);

    SiftBlock blk;
    blk.label = ka + "," + kb;
    blk.weight = scale * s_top * s_top;
    blk.kraus = kron(range_a.adjoint().eval(), (range_b.adjoint() * filter / s_top).eval());
    const int na = static_cast<int>(basis.size());
    const int rb = static_cast<int>(range_b.cols());
    for (const auto& label : key_values) {
      cmat pv = cmat::Zero(na, na);
      bool present = false;
      for (int v = 0; v < na; ++v)
        if (ordered[static_cast<size_t>(v)]->value == label) {
          pv(v, v) = 1.0;
          present = true;
        }
      if (present) blk.key_projectors.push_back(kron(pv, identity(rb)));
    }
    map.blocks.push_back(std::move(blk));
  }
  if (!blocks_ok) map.blocks.clear();

  // --- Dilated representation: registers (A, A_announce, A_value, B, B_announce).
  const int nab = static_cast<int>(aann.size());
  const int nbb = static_cast<int>(bann.size());
  int nav = static_cast<int>(key_values.size());
  for (const auto& a : aann)
    nav = std::max(nav, static_cast<int>(alice.with_announce(a).size()));
  map.dilated_dims = {da, nab, nav, db, nbb};
  auto a_index = [&](const std::string& t) {
    return static_cast<int>(std::find(aann.begin(), aann.end(), t) - aann.begin());
  };
  auto b_index = [&](const std::string& t) {
    return static_cast<int>(std::find(bann.begin(), bann.end(), t) - bann.begin());
  };
  auto value_index = [&](const std::string& v, const std::vector<const PovmElement*>& elems) {
    auto it = std::find(key_values.begin(), key_values.end(), v);
    if (it != key_values.end()) return static_cast<int>(it - key_values.begin());
    // values outside the key alphabet get slots after it, in element order
    int slot = static_cast<int>(key_values.size());
    for (const auto* e : elems) {
      if (e->value == v) return slot;
      if (std::find(key_values.begin(), key_values.end(), e->value) == key_values.end()) ++slot;
    }
    return slot;
  };

  for (const auto& [ka, kb] : keep) {
    auto aelems = alice.with_announce(ka);
    // K_A = sum_v sqrt(M_A^{(ka,v)}) tensor |ka>|v>, as a (da*nab*nav) x da map.
    cmat k_alice = cmat::Zero(da * nab * nav, da);
    for (const auto* e : aelems) {
      cmat root = detail::mat_sqrt_psd(e->op);
      const int vi = value_index(e->value, aelems);
      for (int r = 0; r < da; ++r)
        for (int c = 0; c < da; ++c) {
          if (root(r, c) == cplx(0.0, 0.0)) continue;
          k_alice((r * nab + a_index(ka)) * nav + vi, c) += root(r, c);
        }
    }
    cmat bob_sum = cmat::Zero(db, db);
    for (const auto* e : bob.with_announce(kb)) bob_sum += e->op;
    cmat froot = detail::mat_sqrt_psd(bob_sum);
    cmat k_bob = cmat::Zero(db * nbb, db);
    for (int r = 0; r < db; ++r)
      for (int c = 0; c < db; ++c) {
        if (froot(r, c) == cplx(0.0, 0.0)) continue;
        k_bob(r * nbb + b_index(kb), c) += froot(r, c);
      }
    map.kraus_ops.push_back(kron(k_alice, k_bob));
  }
  const int dil = da * nab * nav * db * nbb;
  map.projector = cmat::Zero(dil, dil);
  for (const auto& [ka, kb] : keep) {
    cmat pa = proj(basis_vec(nab, a_index(ka)));
    cmat pb = proj(basis_vec(nbb, b_index(kb)));
    map.projector += kron(kron(kron(kron(identity(da), pa), identity(nav)), identity(db)), pb);
  }
  for (int v = 0; v < nav; ++v) {
    cmat pv = proj(basis_vec(nav, v));
    map.key_projectors.push_back(
        kron(kron(kron(kron(identity(da), identity(nab)), pv), identity(db)), identity(nbb)));
  }

  if (map.has_blocks())
    map.mode = (map.blocks.size() == 1 && aann.size() == 1) ? SiftMode::single_kraus
                                                            : SiftMode::block_diagonal;
  else
    map.mode = SiftMode::dilated;
  return map;
}

// Largest eigenvalue of sum w K^dagger K minus one; at most ~0 for a
// trace-nonincreasing map.
inline double sift_trace_defect(const SiftMap& map) {
  cmat acc = cmat::Zero(map.in_dim, map.in_dim);
  if (map.has_blocks())
    for (const auto& b : map.blocks) acc += b.weight * (b.kraus.adjoint() * b.kraus);
  else
    for (const auto& k : map.kraus_ops) acc += k.adjoint() * k;
  Spectrum s = eig_hermitian(hermitize(acc), 1e-9);
  return s.eigenvalues.maxCoeff() - 1.0;
}

// ---------------------------------------------------------------------------
// Coarse-grained equal/differing-value observables per kept announcement pair.

inline ConstraintSet coarse_grain(const Povm& alice, const Povm& bob,
                                  const std::vector<std::pair<std::string, std::string>>& keep) {
  ConstraintSet out;
  for (const auto& [ka, kb] : keep) {
    const int dim = alice.dim() * bob.dim();
    cmat eq = cmat::Zero(dim, dim), neq = cmat::Zero(dim, dim);
    for (const auto* ea : alice.with_announce(ka))
      for (const auto* eb : bob.with_announce(kb)) {
        cmat prod = kron(ea->op, eb->op);
        if (ea->value == eb->value)
          eq += prod;
        else
          neq += prod;
      }
    Constraint ceq;
    ceq.label = "match(" + ka + "," + kb + ")";
    ceq.op = hermitize(eq);
    Constraint cneq;
    cneq.label = "error(" + ka + "," + kb + ")";
    cneq.op = hermitize(neq);
    out.items.push_back(std::move(ceq));
    out.items.push_back(std::move(cneq));
  }
  return out;
}

}  // namespace qkdfk
