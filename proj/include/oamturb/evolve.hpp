#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "oamturb/ipe.hpp"
#include "oamturb/modes.hpp"
#include "oamturb/vectorize.hpp"

// Evolution of modal density matrices under d/dt col(rho) = (C + D(t)) col(rho)
// and the derived observables: trace decay, detectable-error probability, and
// the worst-case code-state fidelity.
//
// The generator preserves the coherence grading delta = l_row - l_col, so
// observables that only read one sector are evolved inside that sector's
// block. Time dependence of D is handled by midpoint freezing: each grid
// interval is split into substeps, and within a substep the generator is
// frozen at the substep midpoint and exponentiated.
//
// Observables are evaluated in the frame that follows free diffraction by
// default (the F comoving choice below): the reference modes are propagated
// with the turbulence switched off, and errors are measured against those.
// Without this, free-space spreading alone would register as an error even
// at zero turbulence strength.

namespace oamturb {

enum class Frame { comoving, fixed };

struct EvolveOptions {
  Frame frame = Frame::comoving;
  // Substeps per grid interval; 0 picks a span-dependent default.
  int substeps = 0;
  // Renormalize fidelity by the code-space weight instead of the full trace.
  bool condition_on_code = false;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<Matrix> states;  // filled by propagate
  std::vector<double> values;  // filled by the observable curves
};

// Superposition alpha |n,0> + beta |-n,0> of the detecting-code basis modes.
struct CodeState {
  int n = 1;
  complex_t alpha{1.0, 0.0};
  complex_t beta{0.0, 0.0};
};

inline int default_substeps(double span) {
  return std::clamp(static_cast<int>(std::ceil(span / 0.5)), 2, 16);
}

namespace detail {

inline void validate_grid(const std::vector<double>& t_grid) {
  if (t_grid.empty()) throw std::domain_error("time grid is empty");
  if (t_grid.front() != 0.0) throw std::domain_error("time grid must start at 0");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    if (!(t_grid[i] > t_grid[i - 1]))
      throw std::domain_error("time grid must be strictly increasing");
}

inline void validate_code_state(const CodeState& psi, Truncation trunc) {
  if (psi.n < 1 || psi.n > trunc.l_cut)
    throw std::domain_error("code index n must satisfy 1 <= n <= l_cut");
  if (std::abs(psi.alpha) == 0.0 && std::abs(psi.beta) == 0.0)
    throw std::domain_error("code state has zero amplitude");
}

inline std::vector<double> uniform_grid(double t_max, int steps) {
  if (!(t_max > 0.0) || steps < 1)
    throw std::domain_error("curve needs t_max > 0 and at least one step");
  std::vector<double> grid(steps + 1);
  for (int j = 0; j <= steps; ++j) grid[j] = t_max * j / steps;
  return grid;
}

}  // namespace detail

inline Vector code_state_vector(const CodeState& psi, Truncation trunc) {
  detail::validate_code_state(psi, trunc);
  const double norm = std::sqrt(std::norm(psi.alpha) + std::norm(psi.beta));
  Vector v = Vector::Zero(dimension(trunc));
  v(to_index({psi.n, 0}, trunc)) = psi.alpha / norm;
  v(to_index({-psi.n, 0}, trunc)) = psi.beta / norm;
  return v;
}

// Frozen-generator evolution: col(rho(t_j)) = expm((C+D) t_j) col(rho0).
inline Trajectory propagate(const Matrix& rho0, const Matrix& c, const Matrix& d,
                            const std::vector<double>& t_grid) {
  detail::validate_grid(t_grid);
  const Eigen::Index n = rho0.rows();
  if (rho0.cols() != n || c.rows() != n * n || c.cols() != n * n ||
      d.rows() != n * n || d.cols() != n * n)
    throw std::domain_error("superoperator size does not match the state dimension");

  const Matrix gen = c + d;
  Trajectory out;
  out.t = t_grid;
  out.states.reserve(t_grid.size());
  out.states.push_back(rho0);

  std::map<double, Matrix> step_cache;
  Vector v = col_stack(rho0);
  for (std::size_t j = 1; j < t_grid.size(); ++j) {
    const double dt = t_grid[j] - t_grid[j - 1];
    auto it = step_cache.find(dt);
    if (it == step_cache.end())
      it = step_cache.emplace(dt, Matrix((gen * dt).exp())).first;
    v = it->second * v;
    out.states.push_back(unstack(v, static_cast<int>(n)));
  }
  return out;
}

struct StateCheck {
  double hermiticity_defect = 0.0;
  double min_eigenvalue = 0.0;
  double trace = 0.0;
};

inline StateCheck check_density_matrix(const Matrix& rho) {
  StateCheck c;
  c.hermiticity_defect = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  c.trace = rho.trace().real();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (rho + rho.adjoint()));
  c.min_eigenvalue = es.eigenvalues().minCoeff();
  return c;
}

// Midpoint-frozen evolution restricted to one coherence sector. States are
// carried as columns over the sector's pair basis (order of sector_pairs).
class SectorEvolver {
 public:
  SectorEvolver(Truncation trunc, const PhysicalParams& params, int delta)
      : trunc_(trunc),
        params_(params),
        delta_(delta),
        pairs_(sector_pairs(trunc, delta)),
        coherent_(assemble_coherent_sector(trunc, params, delta)) {
    position_.assign(static_cast<std::size_t>(dimension(trunc)) * dimension(trunc), -1);
    for (std::size_t i = 0; i < pairs_.size(); ++i)
      position_[pairs_[i]] = static_cast<int>(i);
  }

  int size() const { return static_cast<int>(pairs_.size()); }
  const std::vector<int>& pairs() const { return pairs_; }

  // Position of global pair index (m + N*n) inside the sector, -1 if outside.
  int position(int pair) const { return position_[pair]; }

  // Advances all columns of `states` from t0 to t1.
  void advance(Matrix& states, double t0, double t1, int substeps) const {
    if (!(t1 > t0)) throw std::domain_error("sector advance needs t1 > t0");
    const int steps = substeps > 0 ? substeps : default_substeps(t1 - t0);
    const double dt = (t1 - t0) / steps;
    for (int j = 0; j < steps; ++j) {
      const double tm = t0 + (j + 0.5) * dt;
      const Matrix gen =
          coherent_ + assemble_dissipator_sector(trunc_, params_, tm, delta_);
      const Matrix step = (gen * dt).exp();
      states = step * states;
    }
  }

  // Scatters one sector column into a full N x N matrix.
  Matrix expand(const Vector& state) const {
    const int n = dimension(trunc_);
    Matrix full = Matrix::Zero(n, n);
    for (std::size_t i = 0; i < pairs_.size(); ++i)
      full(pairs_[i] % n, pairs_[i] / n) = state(i);
    return full;
  }

 private:
  Truncation trunc_;
  PhysicalParams params_;
  int delta_;
  std::vector<int> pairs_;
  Matrix coherent_;
  std::vector<int> position_;
};

// Reference mode (l, r=0) propagated by free diffraction only: the first
// column of expm(S_l z) on the radial ladder of azimuthal index l, embedded
// into the N-dimensional basis.
inline Vector comoving_mode(int l, Truncation trunc, const PhysicalParams& params,
                            double t) {
  const int nr = trunc.l_cut + 1;
  Matrix s_block(nr, nr);
  for (int r = 0; r < nr; ++r)
    for (int rp = 0; rp < nr; ++rp)
      s_block(r, rp) = free_space_element({l, r}, {l, rp}, params);
  const Matrix u = (s_block * (params.rayleigh_range() * t)).exp();
  Vector mode = Vector::Zero(dimension(trunc));
  for (int r = 0; r < nr; ++r) mode(to_index({l, r}, trunc)) = u(r, 0);
  return mode;
}

namespace detail {

// Shared walker: evolves the delta = 0 component of |psi><psi| along a grid
// and reports the sector state at every grid point.
template <typename Visitor>
void walk_population_sector(const CodeState& psi, const PhysicalParams& params,
                            Truncation trunc, const std::vector<double>& grid,
                            const EvolveOptions& opts, Visitor&& visit) {
  validate_code_state(psi, trunc);
  params.validate();
  const SectorEvolver sector(trunc, params, 0);
  const int n_dim = dimension(trunc);
  const double norm2 = std::norm(psi.alpha) + std::norm(psi.beta);

  Matrix state = Matrix::Zero(sector.size(), 1);
  const int ip = to_index({psi.n, 0}, trunc);
  const int im = to_index({-psi.n, 0}, trunc);
  state(sector.position(pair_index(ip, ip, n_dim)), 0) = std::norm(psi.alpha) / norm2;
  state(sector.position(pair_index(im, im, n_dim)), 0) = std::norm(psi.beta) / norm2;

  visit(0, sector, state.col(0));
  for (std::size_t j = 1; j < grid.size(); ++j) {
    sector.advance(state, grid[j - 1], grid[j], opts.substeps);
    visit(j, sector, state.col(0));
  }
}

inline double sector_trace(const SectorEvolver& sector, const Vector& state,
                           Truncation trunc) {
  const int n_dim = dimension(trunc);
  double tr = 0.0;
  for (int i = 0; i < n_dim; ++i)
    tr += state(sector.position(pair_index(i, i, n_dim))).real();
  return tr;
}

// 1 - sum over the two reference modes of <u| rho |u>, read off the
// delta = 0 sector state.
inline double sector_detect(const SectorEvolver& sector, const Vector& state,
                            int n, Truncation trunc, const PhysicalParams& params,
                            double t, Frame frame) {
  const int n_dim = dimension(trunc);
  double kept = 0.0;
  for (int sgn : {+1, -1}) {
    const int l = sgn * n;
    Vector u;
    if (frame == Frame::comoving) {
      u = comoving_mode(l, trunc, params, t);
    } else {
      u = Vector::Zero(n_dim);
      u(to_index({l, 0}, trunc)) = 1.0;
    }
    complex_t q{0.0, 0.0};
    for (int r = 0; r <= trunc.l_cut; ++r)
      for (int rp = 0; rp <= trunc.l_cut; ++rp) {
        const int a = to_index({l, r}, trunc);
        const int b = to_index({l, rp}, trunc);
        q += std::conj(u(a)) * state(sector.position(pair_index(a, b, n_dim))) * u(b);
      }
    kept += q.real();
  }
  return 1.0 - kept;
}

}  // namespace detail

// Trace of the evolved code state on a uniform grid over [0, t_max].
inline Trajectory trace_curve(const CodeState& psi, const PhysicalParams& params,
                              Truncation trunc, double t_max, int steps,
                              const EvolveOptions& opts = {}) {
  Trajectory out;
  out.t = detail::uniform_grid(t_max, steps);
  out.values.resize(out.t.size());
  detail::walk_population_sector(
      psi, params, trunc, out.t, opts,
      [&](std::size_t j, const SectorEvolver& sector, const Vector& state) {
        out.values[j] = detail::sector_trace(sector, state, trunc);
      });
  return out;
}

// Probability that the error-detection measurement flags the state at t:
// everything outside the two reference modes, including truncation loss.
inline double detect_probability(const CodeState& psi, const PhysicalParams& params,
                                 Truncation trunc, double t,
                                 const EvolveOptions& opts = {}) {
  if (t < 0.0 || !std::isfinite(t))
    throw std::domain_error("propagation distance must be finite and >= 0");
  double result = 0.0;
  std::vector<double> grid{0.0};
  if (t > 0.0) {
    const int spans = std::max(1, static_cast<int>(std::ceil(t / 2.5)));
    for (int j = 1; j <= spans; ++j) grid.push_back(t * j / spans);
  }
  detail::walk_population_sector(
      psi, params, trunc, grid, opts,
      [&](std::size_t j, const SectorEvolver& sector, const Vector& state) {
        if (j + 1 == grid.size())
          result = detail::sector_detect(sector, state, psi.n, trunc, params,
                                         grid[j], opts.frame);
      });
  return result;
}

inline Trajectory detect_curve(const CodeState& psi, const PhysicalParams& params,
                               Truncation trunc, double t_max, int steps,
                               const EvolveOptions& opts = {}) {
  Trajectory out;
  out.t = detail::uniform_grid(t_max, steps);
  out.values.resize(out.t.size());
  detail::walk_population_sector(
      psi, params, trunc, out.t, opts,
      [&](std::size_t j, const SectorEvolver& sector, const Vector& state) {
        out.values[j] = detail::sector_detect(sector, state, psi.n, trunc, params,
                                              out.t[j], opts.frame);
      });
  return out;
}

struct SearchSpec {
  int theta_points = 64;
  int phi_points = 64;
  int refine_iterations = 60;
};

struct FidelityResult {
  double f_min = 1.0;
  complex_t alpha{1.0, 0.0};
  complex_t beta{0.0, 0.0};
};

namespace detail {

// Quadratic forms behind F(alpha, beta). Index 0 = +n, 1 = -n. With
// T the evolution map and E_cd = |c><d| on the reference modes,
//   numer[a][b][c][d] = <u_a| T(E_cd) |u_b>,  denom[c][d] = tr T(E_cd),
// so both numerator and denominator of F are sesquilinear in (alpha, beta).
struct FidelityForms {
  complex_t numer[2][2][2][2];
  complex_t denom[2][2];

  double evaluate(complex_t alpha, complex_t beta) const {
    const complex_t w[2] = {alpha, beta};
    complex_t num{0.0, 0.0}, den{0.0, 0.0};
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c)
          for (int d = 0; d < 2; ++d)
            num += std::conj(w[a]) * w[b] * w[c] * std::conj(w[d]) *
                   numer[a][b][c][d];
    for (int c = 0; c < 2; ++c)
      for (int d = 0; d < 2; ++d) den += w[c] * std::conj(w[d]) * denom[c][d];
    if (den.real() <= 0.0) return 0.0;
    return num.real() / den.real();
  }
};

inline FidelityForms fidelity_forms(int n, const PhysicalParams& params,
                                    Truncation trunc, double t,
                                    const EvolveOptions& opts,
                                    const Matrix& resp_pp, const Matrix& resp_mm,
                                    const Matrix& resp_pm) {
  const int n_dim = dimension(trunc);
  Vector u[2];
  for (int a = 0; a < 2; ++a) {
    const int l = (a == 0 ? n : -n);
    if (opts.frame == Frame::comoving && t > 0.0)
      u[a] = comoving_mode(l, trunc, params, t);
    else {
      u[a] = Vector::Zero(n_dim);
      u[a](to_index({l, 0}, trunc)) = 1.0;
    }
  }

  const Matrix resp[2][2] = {{resp_pp, resp_pm},
                             {resp_pm.adjoint(), resp_mm}};
  FidelityForms forms;
  for (int c = 0; c < 2; ++c)
    for (int d = 0; d < 2; ++d) {
      forms.denom[c][d] = resp[c][d].trace();
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          forms.numer[a][b][c][d] = u[a].dot(resp[c][d] * u[b]);
      if (opts.condition_on_code)
        forms.denom[c][d] =
            forms.numer[0][0][c][d] + forms.numer[1][1][c][d];
    }
  return forms;
}

struct BlochPoint {
  double theta, phi, f;
};

inline FidelityResult minimize_forms(const FidelityForms& forms,
                                     const SearchSpec& search) {
  if (search.theta_points < 1 || search.phi_points < 1)
    throw std::domain_error("fidelity search grid is empty");

  auto eval = [&](double theta, double phi) {
    const complex_t alpha{std::cos(0.5 * theta), 0.0};
    const complex_t beta =
        std::sin(0.5 * theta) * complex_t{std::cos(phi), std::sin(phi)};
    return forms.evaluate(alpha, beta);
  };

  BlochPoint best{0.0, 0.0, eval(0.0, 0.0)};
  for (int i = 0; i < search.theta_points; ++i) {
    const double theta =
        std::numbers::pi * i / std::max(search.theta_points - 1, 1);
    for (int j = 0; j < search.phi_points; ++j) {
      const double phi = 2.0 * std::numbers::pi * j / search.phi_points;
      const double f = eval(theta, phi);
      if (f < best.f) best = {theta, phi, f};
    }
  }

  // Deterministic Nelder-Mead refinement around the best grid point.
  const double dt0 = std::numbers::pi / std::max(search.theta_points, 2);
  const double dp0 = 2.0 * std::numbers::pi / std::max(search.phi_points, 2);
  BlochPoint simplex[3] = {
      best,
      {best.theta + dt0, best.phi, eval(best.theta + dt0, best.phi)},
      {best.theta, best.phi + dp0, eval(best.theta, best.phi + dp0)}};
  for (int it = 0; it < search.refine_iterations; ++it) {
    std::sort(std::begin(simplex), std::end(simplex),
              [](const BlochPoint& a, const BlochPoint& b) { return a.f < b.f; });
    const double ct = 0.5 * (simplex[0].theta + simplex[1].theta);
    const double cp = 0.5 * (simplex[0].phi + simplex[1].phi);
    const double rt = ct + (ct - simplex[2].theta);
    const double rp = cp + (cp - simplex[2].phi);
    const double fr = eval(rt, rp);
    if (fr < simplex[0].f) {
      const double et = ct + 2.0 * (ct - simplex[2].theta);
      const double ep = cp + 2.0 * (cp - simplex[2].phi);
      const double fe = eval(et, ep);
      simplex[2] = fe < fr ? BlochPoint{et, ep, fe} : BlochPoint{rt, rp, fr};
    } else if (fr < simplex[1].f) {
      simplex[2] = {rt, rp, fr};
    } else {
      const double kt = ct + 0.5 * (simplex[2].theta - ct);
      const double kp = cp + 0.5 * (simplex[2].phi - cp);
      const double fk = eval(kt, kp);
      if (fk < simplex[2].f) {
        simplex[2] = {kt, kp, fk};
      } else {
        for (int k = 1; k < 3; ++k) {
          simplex[k].theta = 0.5 * (simplex[k].theta + simplex[0].theta);
          simplex[k].phi = 0.5 * (simplex[k].phi + simplex[0].phi);
          simplex[k].f = eval(simplex[k].theta, simplex[k].phi);
        }
      }
    }
  }
  std::sort(std::begin(simplex), std::end(simplex),
            [](const BlochPoint& a, const BlochPoint& b) { return a.f < b.f; });

  FidelityResult result;
  result.f_min = std::clamp(simplex[0].f, 0.0, 1.0);
  result.alpha = complex_t{std::cos(0.5 * simplex[0].theta), 0.0};
  result.beta = std::sin(0.5 * simplex[0].theta) *
                complex_t{std::cos(simplex[0].phi), std::sin(simplex[0].phi)};
  return result;
}

// Evolves the three independent responses and reports fidelity forms at each
// grid point.
template <typename Visitor>
void walk_fidelity(int n, const PhysicalParams& params, Truncation trunc,
                   const std::vector<double>& grid, const EvolveOptions& opts,
                   Visitor&& visit) {
  if (n < 1 || n > trunc.l_cut)
    throw std::domain_error("code index n must satisfy 1 <= n <= l_cut");
  params.validate();
  const int n_dim = dimension(trunc);
  const SectorEvolver pop(trunc, params, 0);
  const SectorEvolver coh(trunc, params, 2 * n);

  const int ip = to_index({n, 0}, trunc);
  const int im = to_index({-n, 0}, trunc);
  Matrix pop_state = Matrix::Zero(pop.size(), 2);
  pop_state(pop.position(pair_index(ip, ip, n_dim)), 0) = 1.0;
  pop_state(pop.position(pair_index(im, im, n_dim)), 1) = 1.0;
  Matrix coh_state = Matrix::Zero(coh.size(), 1);
  coh_state(coh.position(pair_index(ip, im, n_dim)), 0) = 1.0;

  auto report = [&](std::size_t j, double t) {
    const FidelityForms forms = fidelity_forms(
        n, params, trunc, t, opts, pop.expand(pop_state.col(0)),
        pop.expand(pop_state.col(1)), coh.expand(coh_state.col(0)));
    visit(j, forms);
  };

  report(0, grid[0]);
  for (std::size_t j = 1; j < grid.size(); ++j) {
    pop.advance(pop_state, grid[j - 1], grid[j], opts.substeps);
    coh.advance(coh_state, grid[j - 1], grid[j], opts.substeps);
    report(j, grid[j]);
  }
}

}  // namespace detail

// Worst-case fidelity over the code-state sphere at propagation distance t,
// with the renormalized-final-state convention.
inline FidelityResult min_fidelity(int n, const PhysicalParams& params,
                                   Truncation trunc, double t,
                                   const SearchSpec& search = {},
                                   const EvolveOptions& opts = {}) {
  if (t < 0.0 || !std::isfinite(t))
    throw std::domain_error("propagation distance must be finite and >= 0");
  if (search.theta_points < 1 || search.phi_points < 1)
    throw std::domain_error("fidelity search grid is empty");
  std::vector<double> grid{0.0};
  const int spans = std::max(1, static_cast<int>(std::ceil(t / 2.5)));
  if (t > 0.0)
    for (int j = 1; j <= spans; ++j) grid.push_back(t * j / spans);
  FidelityResult result;
  detail::walk_fidelity(n, params, trunc, grid, opts,
                        [&](std::size_t j, const detail::FidelityForms& forms) {
                          if (j + 1 == grid.size())
                            result = detail::minimize_forms(forms, search);
                        });
  return result;
}

inline Trajectory min_fidelity_curve(int n, const PhysicalParams& params,
                                     Truncation trunc, double t_max, int steps,
                                     const SearchSpec& search = {},
                                     const EvolveOptions& opts = {}) {
  if (search.theta_points < 1 || search.phi_points < 1)
    throw std::domain_error("fidelity search grid is empty");
  Trajectory out;
  out.t = detail::uniform_grid(t_max, steps);
  out.values.resize(out.t.size());
  detail::walk_fidelity(n, params, trunc, out.t, opts,
                        [&](std::size_t j, const detail::FidelityForms& forms) {
                          out.values[j] = detail::minimize_forms(forms, search).f_min;
                        });
  return out;
}

}  // namespace oamturb
