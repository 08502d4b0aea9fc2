#pragma once
// Finite-statistics layer: everything between a certified entropy bound and a
// bit count the extractor may actually keep. Parameter estimation widens each
// observable window by a deviation term, error correction leaks a bounded
// number of bits, the smooth-entropy correction delta(n, eps) bridges von
// Neumann to smooth min-entropy, and the failure budget eps_sec is split among
// those steps. The coherent-attack reduction trades a dimension-dependent rate
// penalty for an exponential deflation of the security parameter, so every
// epsilon is also tracked in log2 space where (N+1)^(d^4-1) cannot overflow.

#include <qkdfk/minent.hpp>
#include <qkdfk/relent.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace qkdfk {

enum class EntropyPath { von_neumann, min_entropy };
enum class AttackModel { collective, coherent };

// Split of the secrecy failure budget across protocol steps. All epsilons are
// derived from one primitive eps_prime so that the total closes exactly:
//   von Neumann: eps_smooth + eps_pa + eps_ec + n_pe * (2 eps_prime) = eps_sec
//   min-entropy: same with eps_smooth = 0.
// log2_eps_deflation uniformly shrinks every derived epsilon by a power of
// two; the coherent-attack pipeline uses it to request statistically stronger
// collective bounds without representing 2^-8000 as a double.
struct SecurityProfile {
  double eps_sec = 1e-10;
  double eps_cor = 1e-15;
  EntropyPath path = EntropyPath::von_neumann;
  int n_pe = 2;                      // observables estimated statistically
  double log2_eps_deflation = 0.0;   // >= 0, subtracted from every log2 eps

  double budget_divisor() const {
    const double base = (path == EntropyPath::von_neumann) ? 3.0 : 2.0;
    return base + 2.0 * static_cast<double>(n_pe);
  }
  // log2 of the derived epsilons; exact even when the plain value underflows
  double log2_eps_prime() const {
    return std::log2(eps_sec) - std::log2(budget_divisor()) - log2_eps_deflation;
  }
  double log2_eps_pa() const { return log2_eps_prime(); }
  double log2_eps_ec() const { return log2_eps_prime(); }
  double log2_eps_pe_per_constraint() const { return 1.0 + log2_eps_prime(); }

  double eps_prime() const { return std::exp2(log2_eps_prime()); }
  double eps_pa() const { return eps_prime(); }
  double eps_ec() const { return eps_prime(); }
  double eps_smooth() const {
    return path == EntropyPath::von_neumann ? eps_prime() : 0.0;
  }
  double eps_pe_per_constraint() const { return 2.0 * eps_prime(); }
  double eps_pe_total() const {
    return static_cast<double>(n_pe) * eps_pe_per_constraint();
  }

  void validate() const {
    if (!(eps_sec > 0.0) || !(eps_sec < 1.0))
      throw std::invalid_argument("SecurityProfile: eps_sec must be in (0,1)");
    if (!(eps_cor > 0.0) || !(eps_cor < 1.0))
      throw std::invalid_argument("SecurityProfile: eps_cor must be in (0,1)");
    if (n_pe < 0)
      throw std::invalid_argument("SecurityProfile: n_pe must be nonnegative");
    if (!(log2_eps_deflation >= 0.0) || !std::isfinite(log2_eps_deflation))
      throw std::invalid_argument(
          "SecurityProfile: log2_eps_deflation must be finite and >= 0");
  }
};

// Raw signal accounting for one run: N transmissions, postselection keeps a
// p_pass fraction, and of the survivors an alpha_pe share is sacrificed for
// parameter estimation. Every statistically bounded observable is read off
// the same PE block of m_pe signals. N may be infinite, which marks the
// asymptotic regime (deviation terms vanish; key_length_* refuse it and the
// sweep layer evaluates the limiting rate formula instead).
struct TransmissionBudget {
  double n_total = 0.0;   // N, transmissions before postselection
  double p_pass = 1.0;
  double alpha_pe = 0.10;
  double n = 0.0;         // signals kept for key generation
  double m_pe = 0.0;      // parameter-estimation sample per observable
};

inline TransmissionBudget make_budget(double n_total, double p_pass,
                                      double alpha_pe = 0.10) {
  if (!(n_total > 0.0))
    throw std::invalid_argument("make_budget: N must be positive");
  if (!(p_pass > 0.0) || p_pass > 1.0 + 1e-12)
    throw std::invalid_argument("make_budget: p_pass must be in (0,1]");
  if (!(alpha_pe >= 0.0) || !(alpha_pe < 1.0))
    throw std::invalid_argument("make_budget: alpha_pe must be in [0,1)");
  TransmissionBudget b;
  b.n_total = n_total;
  b.p_pass = std::min(p_pass, 1.0);
  b.alpha_pe = alpha_pe;
  if (std::isfinite(n_total)) {
    b.n = std::round((1.0 - alpha_pe) * b.p_pass * n_total);
    b.m_pe = std::round(alpha_pe * b.p_pass * n_total);
  } else {
    b.n = std::numeric_limits<double>::infinity();
    b.m_pe = std::numeric_limits<double>::infinity();
  }
  return b;
}

// Confidence half-width for one observable estimated from m samples with d
// outcomes, failing with probability at most eps_i. The log form accepts
// ln(1/eps_i) directly so deflated budgets stay representable.
inline double deviation_from_log(double m, int d, double ln_inv_eps) {
  if (!(m >= 1.0))
    throw std::invalid_argument("deviation: need at least one sample");
  if (d < 2)
    throw std::invalid_argument("deviation: outcome count must be >= 2");
  if (!(ln_inv_eps > 0.0) || std::isinf(ln_inv_eps))
    throw std::invalid_argument("deviation: eps must be in (0,1)");
  if (std::isinf(m)) return 0.0;
  return 0.5 * std::sqrt((2.0 * ln_inv_eps + d * std::log(m + 1.0)) / m);
}

inline double deviation(double m, int d, double eps_i) {
  if (!(eps_i > 0.0) || !(eps_i < 1.0))
    throw std::invalid_argument("deviation: eps must be in (0,1)");
  return deviation_from_log(m, d, std::log(1.0 / eps_i));
}

// Two-sided window for an observed probability, clamped to [0,1].
inline std::pair<double, double> gamma_bounds_from_log(double gamma, double m,
                                                       int d,
                                                       double ln_inv_eps) {
  if (!(gamma >= 0.0) || !(gamma <= 1.0))
    throw std::invalid_argument("gamma_bounds: gamma must be in [0,1]");
  const double delta = deviation_from_log(m, d, ln_inv_eps);
  return {std::max(gamma - delta, 0.0), std::min(gamma + delta, 1.0)};
}

inline std::pair<double, double> gamma_bounds(double gamma, double m, int d,
                                              double eps_i) {
  if (!(eps_i > 0.0) || !(eps_i < 1.0))
    throw std::invalid_argument("gamma_bounds: eps must be in (0,1)");
  return gamma_bounds_from_log(gamma, m, d, std::log(1.0 / eps_i));
}

// Total bits disclosed during error correction of n signals with key alphabet
// size d: an f_ec-inefficient code at conditional entropy q_entropy bits per
// signal, plus the finite-size verification overhead. The log form takes
// log2(2/eps_ec).
inline double leak_ec_from_log(double n, int d, double q_entropy, double f_ec,
                               double log2_two_over_eps) {
  if (!(n >= 1.0))
    throw std::invalid_argument("leak_ec: need at least one signal");
  if (d < 2)
    throw std::invalid_argument("leak_ec: alphabet size must be >= 2");
  if (!(q_entropy >= 0.0))
    throw std::invalid_argument("leak_ec: entropy must be nonnegative");
  if (!(f_ec >= 1.0))
    throw std::invalid_argument("leak_ec: efficiency factor must be >= 1");
  if (!(log2_two_over_eps >= 1.0) || std::isinf(log2_two_over_eps))
    throw std::invalid_argument("leak_ec: eps must be in (0,1)");
  if (std::isinf(n)) return std::numeric_limits<double>::infinity();
  return n * (f_ec * q_entropy +
              std::log2(d + 3.0) * std::sqrt(3.0 * log2_two_over_eps / n));
}

inline double leak_ec(double n, int d, double q_entropy, double f_ec,
                      double eps_ec) {
  if (!(eps_ec > 0.0) || !(eps_ec < 1.0))
    throw std::invalid_argument("leak_ec: eps must be in (0,1)");
  return leak_ec_from_log(n, d, q_entropy, f_ec, std::log2(2.0 / eps_ec));
}

// Per-signal correction bridging the von Neumann entropy rate down to the
// eps-smooth min-entropy of n collective rounds; d is the key alphabet size.
inline double entropy_correction_from_log(double n, double log2_two_over_eps,
                                          int d) {
  if (!(n >= 1.0))
    throw std::invalid_argument("entropy_correction: need at least one signal");
  if (d < 2)
    throw std::invalid_argument("entropy_correction: alphabet must be >= 2");
  if (!(log2_two_over_eps >= 1.0) || std::isinf(log2_two_over_eps))
    throw std::invalid_argument("entropy_correction: eps must be in (0,1)");
  if (std::isinf(n)) return 0.0;
  return (2.0 * d + 3.0) * std::sqrt(log2_two_over_eps / n);
}

inline double entropy_correction(double n, double eps, int d) {
  if (!(eps > 0.0) || !(eps < 1.0))
    throw std::invalid_argument("entropy_correction: eps must be in (0,1)");
  return entropy_correction_from_log(n, std::log2(2.0 / eps), d);
}

// A finished key-length computation with every per-signal deduction kept, so
// ell can be re-derived from the pieces:
//   ell = max(0, floor(n * (entropy_per_pair - delta - leak_per_signal
//                           - pa_per_signal - cor_per_signal)))
// and, after a coherent-attack correction,
//   rate = max(0, ell/n_total - coherent_penalty).
struct KeyRateResult {
  double ell = 0.0;    // extractable key bits (integer-valued double)
  double rate = 0.0;   // secret bits per transmission
  EntropyPath path = EntropyPath::von_neumann;
  AttackModel attack = AttackModel::collective;
  double eps_sec = 0.0;        // achieved secrecy failure bound (may saturate)
  double log2_eps_sec = 0.0;   // exact log2 of the same, never saturates
  double eps_cor = 0.0;

  double entropy_per_pair = 0.0;   // certified entropy bits per kept signal
  double delta = 0.0;              // smoothing correction (0 on min path)
  double leak_per_signal = 0.0;
  double pa_per_signal = 0.0;      // privacy-amplification overhead
  double cor_per_signal = 0.0;     // correctness-verification overhead
  double n = 0.0;                  // kept signals
  double n_total = 0.0;            // transmissions
  double coherent_penalty = 0.0;   // rate deduction for coherent attacks
};

namespace detail {

inline KeyRateResult finish_key_length(double entropy_per_pair, double delta,
                                       const TransmissionBudget& budget,
                                       const SecurityProfile& profile,
                                       double leak) {
  profile.validate();
  if (!std::isfinite(budget.n) || !(budget.n >= 1.0))
    throw std::invalid_argument(
        "key_length: budget must hold at least one finite kept signal");
  if (!(budget.p_pass > 0.0))
    throw std::invalid_argument("key_length: p_pass must be positive");
  if (!(leak >= 0.0) || !std::isfinite(leak))
    throw std::invalid_argument("key_length: leak must be finite and >= 0");
  if (!std::isfinite(entropy_per_pair))
    throw std::invalid_argument("key_length: entropy bound must be finite");

  KeyRateResult out;
  out.path = profile.path;
  out.attack = AttackModel::collective;
  out.eps_sec = profile.eps_sec * std::exp2(-profile.log2_eps_deflation);
  out.log2_eps_sec = std::log2(profile.eps_sec) - profile.log2_eps_deflation;
  out.eps_cor = profile.eps_cor;
  out.n = budget.n;
  out.n_total = budget.n_total;
  out.entropy_per_pair = entropy_per_pair;
  out.delta = delta;
  out.leak_per_signal = leak / budget.n;
  // log2(1/(2 eps_pa)) = -1 - log2(eps_pa), kept in log space
  out.pa_per_signal = (2.0 / budget.n) * (-1.0 - profile.log2_eps_pa());
  out.cor_per_signal = (1.0 / budget.n) * std::log2(2.0 / profile.eps_cor);

  const double per_signal = entropy_per_pair - delta - out.leak_per_signal -
                            out.pa_per_signal - out.cor_per_signal;
  out.ell = std::max(0.0, std::floor(budget.n * per_signal));
  out.rate = out.ell / budget.n_total;
  return out;
}

}  // namespace detail

// Key length from a certified von Neumann entropy bound (value is pass
// adjusted: p_pass * H(key|E)). The smooth-entropy correction spends the
// profile's smoothing epsilon.
inline KeyRateResult key_length_vn(const KeyTermBound& keyterm,
                                   const TransmissionBudget& budget,
                                   const SecurityProfile& profile,
                                   double leak, int key_alphabet = 2) {
  if (profile.path != EntropyPath::von_neumann)
    throw std::invalid_argument("key_length_vn: profile path mismatch");
  const double h = keyterm.value / budget.p_pass;
  const double log2_two_over_eps = 1.0 - profile.log2_eps_prime();
  const double delta =
      entropy_correction_from_log(budget.n, log2_two_over_eps, key_alphabet);
  return detail::finish_key_length(h, delta, budget, profile, leak);
}

// Key length from a certified min-entropy bound: no smoothing correction and
// no smoothing epsilon in the budget.
inline KeyRateResult key_length_min(const MinEntropyBound& minent,
                                    const TransmissionBudget& budget,
                                    const SecurityProfile& profile,
                                    double leak) {
  if (profile.path != EntropyPath::min_entropy)
    throw std::invalid_argument("key_length_min: profile path mismatch");
  if (std::abs(minent.p_pass - budget.p_pass) >
      1e-6 * std::max(1.0, budget.p_pass))
    throw std::invalid_argument(
        "key_length_min: bound and budget disagree on p_pass");
  const double h = minent.hmin_value / budget.p_pass;
  return detail::finish_key_length(h, 0.0, budget, profile, leak);
}

// Lift a collective-attack result to unrestricted attacks on a signal system
// of dimension d_signal: the rate pays 2(d^4-1) log2(N+1)/N and the secrecy
// bound inflates by (N+1)^(d^4-1). Running the collective analysis under a
// matching log2_eps_deflation of (d^4-1) log2(N+1) makes the reported
// coherent epsilon land back on the originally requested eps_sec.
inline KeyRateResult coherent_correction(const KeyRateResult& result,
                                         double n_total, int d_signal) {
  if (result.attack != AttackModel::collective)
    throw std::invalid_argument(
        "coherent_correction: input must be a collective-attack result");
  if (!(n_total >= 1.0) || !std::isfinite(n_total))
    throw std::invalid_argument("coherent_correction: N must be finite, >= 1");
  if (d_signal < 2)
    throw std::invalid_argument("coherent_correction: dimension must be >= 2");

  const double dim_exponent =
      std::pow(static_cast<double>(d_signal), 4.0) - 1.0;
  KeyRateResult out = result;
  out.attack = AttackModel::coherent;
  out.coherent_penalty =
      2.0 * dim_exponent * std::log2(n_total + 1.0) / n_total;
  out.rate = std::max(0.0, result.rate - out.coherent_penalty);
  out.log2_eps_sec =
      result.log2_eps_sec + dim_exponent * std::log2(n_total + 1.0);
  out.eps_sec = std::min(1.0, std::exp2(out.log2_eps_sec));
  return out;
}

}  // namespace qkdfk
