#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "oamturb/evolve.hpp"
#include "oamturb/multiphoton.hpp"
#include "oamturb/rng.hpp"

// Erasure-based protection of an OAM qubit. A photon carries the logical
// state on the l = +n and l = -n modes; a mode sorter flags any photon found
// outside those two modes, which converts turbulence noise into located
// erasures. Seven flagged-or-not photons then feed a Steane seven-qubit
// layer whose stabilizer measurements correct the erased positions.
//
// The Monte Carlo scheme simulator works in the stabilizer frame: errors are
// tracked as X/Z bitmasks over seven qubits, erased photons are replaced by
// uniformly random Paulis, and survivors draw from the Pauli twirl of the
// single-photon conditional channel. An exact 128-dimensional density-matrix
// evaluation of the same scheme is provided for cross-checking.

namespace oamturb {

class ConditioningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Detecting code on a single photon

struct CodeSpace {
  int n_oam = 1;
  Truncation trunc;

  void validate() const {
    if (n_oam < 1 || n_oam > trunc.l_cut)
      throw std::domain_error("code index n must satisfy 1 <= n <= l_cut");
  }
  int index_plus() const { return to_index({n_oam, 0}, trunc); }
  int index_minus() const { return to_index({-n_oam, 0}, trunc); }

  Matrix projector() const {
    validate();
    const int n_dim = dimension(trunc);
    Matrix p = Matrix::Zero(n_dim, n_dim);
    p(index_plus(), index_plus()) = 1.0;
    p(index_minus(), index_minus()) = 1.0;
    return p;
  }
};

inline Matrix encode_detecting(complex_t alpha, complex_t beta, int n,
                               Truncation trunc) {
  const CodeSpace code{n, trunc};
  code.validate();
  if (std::abs(std::norm(alpha) + std::norm(beta) - 1.0) > 1e-9)
    throw std::domain_error("code amplitudes must be normalized");
  Vector psi = Vector::Zero(dimension(trunc));
  psi(code.index_plus()) = alpha;
  psi(code.index_minus()) = beta;
  return psi * psi.adjoint();
}

struct DetectResult {
  double p_noerror = 1.0;
  double p_detect = 0.0;
  std::optional<Matrix> conditional;

  const Matrix& conditional_state() const {
    if (!conditional)
      throw ConditioningError("no support left on the code space");
    return *conditional;
  }
};

// Mode-sorter measurement: project onto the two code modes. Weight outside
// the truncation counts as detected, matching the detection-probability
// convention of the evolution module.
inline DetectResult detect(const Matrix& rho, const CodeSpace& code) {
  code.validate();
  const int n_dim = dimension(code.trunc);
  if (rho.rows() != n_dim || rho.cols() != n_dim)
    throw std::domain_error("state dimension does not match the truncation");
  const int ip = code.index_plus();
  const int im = code.index_minus();

  DetectResult out;
  out.p_noerror = (rho(ip, ip) + rho(im, im)).real();
  out.p_detect = 1.0 - out.p_noerror;
  if (out.p_noerror >= 1e-12) {
    Matrix kept = Matrix::Zero(n_dim, n_dim);
    for (int a : {ip, im})
      for (int b : {ip, im}) kept(a, b) = rho(a, b);
    out.conditional = kept / out.p_noerror;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Steane layer, tracked as X/Z bitmasks (bit j is qubit j+1)

inline constexpr std::array<std::uint8_t, 3> kSteaneRows{0x71, 0x6A, 0x5C};

struct Pauli {
  std::uint8_t x = 0;
  std::uint8_t z = 0;
  friend bool operator==(const Pauli&, const Pauli&) = default;
};

struct Syndrome {
  std::uint8_t x = 0;  // parity of each check row against the X mask
  std::uint8_t z = 0;
  friend bool operator==(const Syndrome&, const Syndrome&) = default;
};

namespace detail {

inline int parity(std::uint8_t mask) {
  return std::popcount(static_cast<unsigned>(mask)) & 1;
}

inline std::uint8_t check_bits(std::uint8_t mask) {
  std::uint8_t s = 0;
  for (int i = 0; i < 3; ++i)
    s |= static_cast<std::uint8_t>(parity(kSteaneRows[i] & mask) << i);
  return s;
}

// Check-matrix column for qubit j, packed into three bits.
inline std::uint8_t check_column(int j) {
  std::uint8_t c = 0;
  for (int i = 0; i < 3; ++i)
    c |= static_cast<std::uint8_t>(((kSteaneRows[i] >> j) & 1) << i);
  return c;
}

inline bool in_row_space(std::uint8_t mask) {
  for (std::uint8_t b = 0; b < 8; ++b) {
    std::uint8_t v = 0;
    for (int i = 0; i < 3; ++i)
      if (b >> i & 1) v ^= kSteaneRows[i];
    if (v == mask) return true;
  }
  return false;
}

inline std::uint8_t single_flip_for(std::uint8_t bits) {
  if (bits == 0) return 0;
  for (int j = 0; j < 7; ++j)
    if (check_column(j) == bits) return static_cast<std::uint8_t>(1 << j);
  return 0;  // unreachable, the seven columns exhaust the nonzero patterns
}

}  // namespace detail

inline Syndrome steane_syndrome(const Pauli& p) {
  return {detail::check_bits(p.x), detail::check_bits(p.z)};
}

// True when the residual is a product of stabilizer generators and therefore
// acts as the identity on the encoded qubit.
inline bool logical_action_trivial(const Pauli& p) {
  return detail::in_row_space(p.x) && detail::in_row_space(p.z);
}

// Minimum-weight correction without erasure information. Every nonzero check
// pattern is a unique column of the check matrix, so each side of the
// syndrome points at exactly one qubit.
inline Pauli lookup_decode(const Syndrome& s) {
  return {detail::single_flip_for(s.x), detail::single_flip_for(s.z)};
}

struct ErasureDecodeResult {
  bool success = false;
  Pauli correction;
};

// Search the Pauli assignments supported on the erased qubits for one whose
// syndrome matches. The first match in enumeration order is kept; further
// matches are tolerated only if they differ by a stabilizer element. No
// match, or two logically distinct matches, reports failure.
inline ErasureDecodeResult erasure_decode(const Syndrome& target,
                                          std::uint8_t erasures) {
  std::vector<int> qubits;
  for (int j = 0; j < 7; ++j)
    if (erasures >> j & 1) qubits.push_back(j);

  long combos = 1;
  for (std::size_t i = 0; i < qubits.size(); ++i) combos *= 4;

  ErasureDecodeResult out;
  for (long c = 0; c < combos; ++c) {
    Pauli p;
    long rest = c;
    for (int q : qubits) {
      const int mu = rest & 3;
      rest >>= 2;
      if (mu == 1 || mu == 2) p.x |= static_cast<std::uint8_t>(1 << q);
      if (mu == 2 || mu == 3) p.z |= static_cast<std::uint8_t>(1 << q);
    }
    if (!(steane_syndrome(p) == target)) continue;
    if (!out.success) {
      out.success = true;
      out.correction = p;
      continue;
    }
    const Pauli diff{static_cast<std::uint8_t>(out.correction.x ^ p.x),
                     static_cast<std::uint8_t>(out.correction.z ^ p.z)};
    if (!logical_action_trivial(diff)) return {};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single-photon conditional channel on the code qubit

namespace detail {

inline std::array<Matrix, 4> pauli_matrices() {
  std::array<Matrix, 4> s;
  for (auto& m : s) m = Matrix::Zero(2, 2);
  s[0](0, 0) = 1.0;
  s[0](1, 1) = 1.0;
  s[1](0, 1) = 1.0;
  s[1](1, 0) = 1.0;
  s[2](0, 1) = complex_t{0.0, -1.0};
  s[2](1, 0) = complex_t{0.0, 1.0};
  s[3](0, 0) = 1.0;
  s[3](1, 1) = -1.0;
  return s;
}

}  // namespace detail

struct ConditionalChannel {
  double p_detect = 0.0;
  double survival = 1.0;  // kept-branch weight, averaged over the code space
  Matrix map;             // 4x4 column-stacked action on code-space operators
  std::array<double, 4> twirled{1.0, 0.0, 0.0, 0.0};  // I, X, Y, Z shares
};

// Restriction of the evolved channel to the code qubit, conditioned on the
// mode sorter not firing, together with its Pauli twirl. The map is left
// unnormalized so that its trace part carries the survival probability.
inline ConditionalChannel conditional_channel(int n, const PhysicalParams& params,
                                              Truncation trunc, double t,
                                              const EvolveOptions& opts = {}) {
  if (t < 0.0 || !std::isfinite(t))
    throw std::domain_error("propagation distance must be finite and >= 0");
  std::vector<double> grid{0.0};
  const int spans = std::max(1, static_cast<int>(std::ceil(t / 2.5)));
  if (t > 0.0)
    for (int j = 1; j <= spans; ++j) grid.push_back(t * j / spans);

  detail::FidelityForms forms{};
  detail::walk_fidelity(n, params, trunc, grid, opts,
                        [&](std::size_t j, const detail::FidelityForms& f) {
                          if (j + 1 == grid.size()) forms = f;
                        });

  ConditionalChannel out;
  out.map = Matrix::Zero(4, 4);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d)
          out.map(a + 2 * b, c + 2 * d) = forms.numer[a][b][c][d];

  const std::array<Matrix, 4> sigma = detail::pauli_matrices();
  std::array<double, 4> r{};
  for (int nu = 0; nu < 4; ++nu) {
    const Vector img = out.map * col_stack(sigma[nu]);
    r[nu] = 0.5 * (sigma[nu].adjoint() * unstack(img, 2)).trace().real();
  }

  static constexpr int kSign[4][4] = {
      {1, 1, 1, 1}, {1, 1, -1, -1}, {1, -1, 1, -1}, {1, -1, -1, 1}};
  std::array<double, 4> q{};
  for (int mu = 0; mu < 4; ++mu) {
    for (int nu = 0; nu < 4; ++nu) q[mu] += kSign[mu][nu] * r[nu];
    q[mu] *= 0.25;
  }

  out.survival = r[0];
  out.p_detect = 1.0 - out.survival;
  if (out.survival <= 1e-12)
    throw ConditioningError("no code-space support survives at this distance");

  double total = 0.0;
  for (int mu = 0; mu < 4; ++mu) {
    if (q[mu] < -1e-6 * out.survival)
      throw std::runtime_error("conditional channel is not completely positive");
    q[mu] = std::max(q[mu], 0.0);
    total += q[mu];
  }
  for (int mu = 0; mu < 4; ++mu) out.twirled[mu] = q[mu] / total;
  return out;
}

// ---------------------------------------------------------------------------
// Collective detection statistics from a genuine two-photon evolution

struct PairDetectionStats {
  double p_single = 0.0;   // marginal detection probability of one photon
  double p_joint = 0.0;    // probability that both photons flag
  double shock_weight = 0.0;  // correlation of the two flags, clamped to [0, 1]
};

// Evolves two photons under the collective dissipator and reads off how
// correlated their detection flags are. Kept at l_cut = 1, where the
// 1296-dimensional two-photon superoperator stays cheap; the resulting
// correlation feeds the common-shock flag model of the scheme simulator.
inline PairDetectionStats collective_pair_stats(int n_oam,
                                                const PhysicalParams& params,
                                                Truncation trunc, double t,
                                                const EvolveOptions& opts = {}) {
  if (trunc.l_cut != 1)
    throw std::domain_error("collective detection statistics require l_cut = 1");
  if (n_oam != 1)
    throw std::domain_error("collective detection statistics require n = 1");
  if (t < 0.0 || !std::isfinite(t))
    throw std::domain_error("propagation distance must be finite and >= 0");
  params.validate();

  const int n_dim = dimension(trunc);
  const std::int64_t dim2 = static_cast<std::int64_t>(n_dim) * n_dim;
  const double z_r = params.rayleigh_range();

  const SparseMatrix s_pair = lift(free_space_matrix(trunc, params), 2).lifted;
  SparseMatrix id2(dim2, dim2);
  id2.setIdentity();
  const SparseMatrix coherent =
      z_r * (kron_sparse(id2, s_pair) -
             kron_sparse(SparseMatrix(s_pair.transpose()), id2));

  const int ip = to_index({n_oam, 0}, trunc);
  const int im = to_index({-n_oam, 0}, trunc);
  Matrix rho1 = Matrix::Zero(n_dim, n_dim);
  rho1(ip, ip) = 0.5;
  rho1(im, im) = 0.5;
  Vector v = col_stack(kron(rho1, rho1));

  const int spans = std::max(1, static_cast<int>(std::ceil(t / 2.5)));
  for (int span = 0; span < spans && t > 0.0; ++span) {
    const double t0 = t * span / spans;
    const double t1 = t * (span + 1) / spans;
    const int sub = opts.substeps > 0 ? opts.substeps : default_substeps(t1 - t0);
    const double dt = (t1 - t0) / sub;
    for (int k = 0; k < sub; ++k) {
      const double tm = t0 + (k + 0.5) * dt;
      const LindbladSet set = extract_lindblads(
          project_traceless(choi_reshuffle(assemble_dissipator(trunc, params, tm)),
                            n_dim),
          trunc);
      const SparseMatrix gen = coherent + collective_dissipator(set, 2);
      v = apply_exponential(gen, dt, v);
    }
  }

  Matrix keep1 = Matrix::Zero(n_dim, n_dim);
  for (int sgn : {+1, -1}) {
    Vector u;
    if (opts.frame == Frame::comoving && t > 0.0) {
      u = comoving_mode(sgn * n_oam, trunc, params, t);
    } else {
      u = Vector::Zero(n_dim);
      u(to_index({sgn * n_oam, 0}, trunc)) = 1.0;
    }
    keep1 += u * u.adjoint();
  }

  const Matrix rho2 = unstack(v, static_cast<int>(dim2));
  const Matrix eye = Matrix::Identity(n_dim, n_dim);
  const double kept_one = (kron(keep1, eye) * rho2).trace().real();
  const double kept_both = (kron(keep1, keep1) * rho2).trace().real();

  PairDetectionStats out;
  out.p_single = 1.0 - kept_one;
  out.p_joint = 1.0 - 2.0 * kept_one + kept_both;
  const double var = out.p_single * (1.0 - out.p_single);
  if (var > 1e-12)
    out.shock_weight = std::clamp(
        (out.p_joint - out.p_single * out.p_single) / var, 0.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Scheme simulation

enum class NoiseModel { independent, collective };

struct SchemeOptions {
  NoiseModel noise = NoiseModel::independent;
  EvolveOptions evolve;
  // Validation hook: use this fixed flag pattern instead of sampling flags.
  std::optional<std::uint8_t> forced_erasures;
};

struct SchemeResult {
  double logical_error_rate = 0.0;
  double heralded_failure_rate = 0.0;
  std::array<std::int64_t, 8> erasure_histogram{};
  double p_detect = 0.0;
  std::array<double, 4> twirled{};
  double shock_weight = 0.0;
  std::int64_t trials = 0;
  std::uint64_t seed = 0;
};

// Monte Carlo run of the full scheme. Each trial draws its own RNG
// substream, so results are reproducible for a fixed seed regardless of
// batching. Three or more flagged photons exceed the erasure distance of the
// Steane layer and are reported as heralded failures, not logical errors.
inline SchemeResult scheme_simulate(const PhysicalParams& params, Truncation trunc,
                                    int n_oam, double t, std::int64_t trials,
                                    std::uint64_t seed,
                                    const SchemeOptions& opts = {}) {
  if (trials < 1) throw std::domain_error("trial count must be positive");
  const ConditionalChannel cond =
      conditional_channel(n_oam, params, trunc, t, opts.evolve);

  double shock = 0.0;
  if (opts.noise == NoiseModel::collective)
    shock = collective_pair_stats(n_oam, params, trunc, t, opts.evolve)
                .shock_weight;

  std::array<double, 4> cum{};
  double acc = 0.0;
  for (int mu = 0; mu < 4; ++mu) {
    acc += cond.twirled[mu];
    cum[mu] = acc;
  }
  cum[3] = 1.0;

  SchemeResult out;
  out.p_detect = cond.p_detect;
  out.twirled = cond.twirled;
  out.shock_weight = shock;
  out.trials = trials;
  out.seed = seed;

  std::int64_t logical = 0;
  std::int64_t heralded = 0;
  for (std::int64_t trial = 0; trial < trials; ++trial) {
    SplitMix64 rng = substream(seed, static_cast<std::uint64_t>(trial));

    std::uint8_t erased = 0;
    if (opts.forced_erasures) {
      erased = static_cast<std::uint8_t>(*opts.forced_erasures & 0x7F);
    } else if (opts.noise == NoiseModel::collective && rng.uniform() < shock) {
      erased = rng.uniform() < cond.p_detect ? 0x7F : 0;
    } else {
      for (int q = 0; q < 7; ++q)
        if (rng.uniform() < cond.p_detect)
          erased |= static_cast<std::uint8_t>(1 << q);
    }
    const int n_erased = std::popcount(static_cast<unsigned>(erased));
    ++out.erasure_histogram[n_erased];

    Pauli error;
    for (int q = 0; q < 7; ++q) {
      int mu;
      if (erased >> q & 1) {
        mu = static_cast<int>(rng.below(4));
      } else {
        const double u = rng.uniform();
        mu = 0;
        while (mu < 3 && u >= cum[mu]) ++mu;
      }
      if (mu == 1 || mu == 2) error.x |= static_cast<std::uint8_t>(1 << q);
      if (mu == 2 || mu == 3) error.z |= static_cast<std::uint8_t>(1 << q);
    }

    if (n_erased > 2) {
      ++heralded;
      continue;
    }

    const Syndrome syn = steane_syndrome(error);
    Pauli corr;
    if (n_erased > 0) {
      const ErasureDecodeResult dec = erasure_decode(syn, erased);
      corr = dec.success ? dec.correction : lookup_decode(syn);
    } else {
      corr = lookup_decode(syn);
    }
    const Pauli residual{static_cast<std::uint8_t>(error.x ^ corr.x),
                         static_cast<std::uint8_t>(error.z ^ corr.z)};
    if (!logical_action_trivial(residual)) ++logical;
  }

  out.logical_error_rate = static_cast<double>(logical) / static_cast<double>(trials);
  out.heralded_failure_rate =
      static_cast<double>(heralded) / static_cast<double>(trials);
  return out;
}

// ---------------------------------------------------------------------------
// Exact seven-qubit cross-check

namespace detail {

// X^x Z^z on a 128-component state vector.
inline Vector pauli_apply(std::uint8_t x, std::uint8_t z, const Vector& v) {
  Vector out(v.size());
  for (int b = 0; b < 128; ++b) {
    const double sign = parity(static_cast<std::uint8_t>(z & b)) ? -1.0 : 1.0;
    out(b ^ x) = sign * v(b);
  }
  return out;
}

inline Vector logical_basis(int k) {
  Vector v = Vector::Zero(128);
  for (std::uint8_t b = 0; b < 8; ++b) {
    std::uint8_t c = 0;
    for (int i = 0; i < 3; ++i)
      if (b >> i & 1) c ^= kSteaneRows[i];
    v(k == 0 ? c : c ^ 0x7F) = 1.0 / std::sqrt(8.0);
  }
  return v;
}

// w = Pi_s C |k>, the syndrome-s stabilizer projector applied to a corrected
// logical basis vector, with the projector expanded as a group average over
// the 64 stabilizer elements.
inline Vector projected_corrected(const Syndrome& s, const Pauli& corr,
                                  const Vector& logical) {
  const Vector base = pauli_apply(corr.x, corr.z, logical);
  Vector out = Vector::Zero(128);
  for (int b = 0; b < 64; ++b) {
    std::uint8_t xm = 0;
    std::uint8_t zm = 0;
    for (int i = 0; i < 3; ++i) {
      if (b >> i & 1) xm ^= kSteaneRows[i];
      if (b >> (3 + i) & 1) zm ^= kSteaneRows[i];
    }
    // X-type generators pick up the z checks of the syndrome and vice versa.
    const int flips = parity(static_cast<std::uint8_t>((b & 7) & s.z)) ^
                      parity(static_cast<std::uint8_t>(((b >> 3) & 7) & s.x));
    out += (flips ? -1.0 : 1.0) * pauli_apply(xm, zm, base);
  }
  return out / 64.0;
}

inline Matrix apply_left_qubit(const Matrix& a, int bit, const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  const int mask = 1 << bit;
  for (int r = 0; r < m.rows(); ++r) {
    const int r0 = r & ~mask;
    const int rb = (r & mask) ? 1 : 0;
    out.row(r) = a(rb, 0) * m.row(r0) + a(rb, 1) * m.row(r0 | mask);
  }
  return out;
}

inline Matrix apply_qubit_channel(const std::vector<Matrix>& kraus, int bit,
                                  const Matrix& rho) {
  Matrix out = Matrix::Zero(rho.rows(), rho.cols());
  for (const Matrix& a : kraus) {
    const Matrix left = apply_left_qubit(a, bit, rho);
    out += apply_left_qubit(a, bit, left.adjoint()).adjoint();
  }
  return out;
}

inline std::vector<Matrix> kraus_from_map(const Matrix& map4) {
  Matrix choi = choi_reshuffle(map4);
  choi = 0.5 * (choi + choi.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(choi);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("qubit Choi eigensolve failed");
  const double top = es.eigenvalues().cwiseAbs().maxCoeff();
  std::vector<Matrix> kraus;
  for (int k = 0; k < 4; ++k) {
    const double lam = es.eigenvalues()(k);
    if (lam < -1e-6 * top)
      throw std::runtime_error("qubit map is not completely positive");
    if (lam <= 1e-14 * top) continue;
    kraus.push_back(std::sqrt(lam) * unstack(es.eigenvectors().col(k), 2));
  }
  return kraus;
}

}  // namespace detail

struct ExactSchemeResult {
  double logical_error_rate = 0.0;
  double heralded_failure_rate = 0.0;
};

// Exact density-matrix evaluation of the scheme for independent photons.
// Every flag pattern with at most two erasures is pushed through the
// untwirled conditional channel, the stabilizer projectors, and the same
// decoder the sampler uses; patterns beyond the erasure distance contribute
// to the heralded rate. The logical error rate is one minus the
// entanglement fidelity of the decoded logical channel, averaged over
// patterns.
inline ExactSchemeResult exact_scheme_rate(const ConditionalChannel& cond) {
  const double p = cond.p_detect;
  const std::vector<Matrix> survive =
      detail::kraus_from_map(cond.map / cond.survival);
  std::vector<Matrix> erase;
  for (const Matrix& s : detail::pauli_matrices()) erase.push_back(0.5 * s);

  const Vector basis[2] = {detail::logical_basis(0), detail::logical_basis(1)};

  ExactSchemeResult out;
  double prob_small = 0.0;
  for (int pattern = 0; pattern < 128; ++pattern) {
    const int ne = std::popcount(static_cast<unsigned>(pattern));
    if (ne > 2) continue;
    const double weight = std::pow(p, ne) * std::pow(1.0 - p, 7 - ne);
    prob_small += weight;
    if (weight == 0.0) continue;

    // Corrections and projected code bases for all 64 syndromes.
    std::vector<Vector> w(64 * 2);
    for (int sx = 0; sx < 8; ++sx)
      for (int sz = 0; sz < 8; ++sz) {
        const Syndrome s{static_cast<std::uint8_t>(sx),
                         static_cast<std::uint8_t>(sz)};
        Pauli corr;
        if (ne > 0) {
          const ErasureDecodeResult dec =
              erasure_decode(s, static_cast<std::uint8_t>(pattern));
          corr = dec.success ? dec.correction : lookup_decode(s);
        } else {
          corr = lookup_decode(s);
        }
        for (int k = 0; k < 2; ++k)
          w[2 * (sx + 8 * sz) + k] =
              detail::projected_corrected(s, corr, basis[k]);
      }

    complex_t fid{0.0, 0.0};
    double tnorm = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        Matrix rho = basis[i] * basis[j].adjoint();
        for (int q = 0; q < 7; ++q)
          rho = detail::apply_qubit_channel(pattern >> q & 1 ? erase : survive,
                                            q, rho);
        if (i == j) tnorm += 0.5 * rho.trace().real();
        complex_t elem{0.0, 0.0};
        for (int s = 0; s < 64; ++s)
          elem += w[2 * s + i].dot(rho * w[2 * s + j]);
        fid += 0.25 * elem;
      }

    const double fhat = std::clamp(fid.real() / tnorm, 0.0, 1.0);
    out.logical_error_rate += weight * (1.0 - fhat);
  }
  out.heralded_failure_rate = 1.0 - prob_small;
  return out;
}

}  // namespace oamturb
