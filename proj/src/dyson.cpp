#include "espectra/dyson.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

namespace espectra {

std::size_t a_prime(std::size_t a, std::size_t m) {
  if (m < 2) throw SpecError("a_prime: requires m >= 2");
  if (a >= 2 * m) throw SpecError("a_prime: index out of range");
  // Row a < m of X has its block at column (a + 1) mod m, which sits at
  // column m + that in H. Row m + r of X^* has its block at column r - 1 mod m.
  if (a < m) return m + (a + 1) % m;
  return (a - m + m - 1) % m;
}

SigmaSpec make_sigma_spec(std::span<const double> rhos) {
  SigmaSpec spec;
  spec.m = rhos.size();
  if (spec.m < 2) throw SpecError("sigma spec: requires m >= 2 correlations");
  for (double r : rhos)
    if (!std::isfinite(r) || std::abs(r) > 1.0) throw SpecError("sigma spec: correlations must lie in [-1, 1]");
  spec.rhos.assign(rhos.begin(), rhos.end());
  for (std::size_t a = 0; a < 2 * spec.m; ++a) spec.aprime.push_back(a_prime(a, spec.m));
  return spec;
}

ComplexMatrix sigma_op(const ComplexMatrix& a, const SigmaSpec& spec) {
  const auto dim = static_cast<Eigen::Index>(2 * spec.m);
  if (a.rows() != dim || a.cols() != dim) throw SpecError("sigma_op: argument must be 2m x 2m");
  ComplexMatrix out = ComplexMatrix::Zero(dim, dim);
  for (Eigen::Index r = 0; r < dim; ++r) {
    const auto p = static_cast<Eigen::Index>(spec.aprime[static_cast<std::size_t>(r)]);
    out(r, r) += a(p, p);
    out(r, p) += spec.rho(static_cast<std::size_t>(r)) * a(p, r);
  }
  return out;
}

double sigma_kernel(const SigmaSpec& spec, std::size_t a, std::size_t c, std::size_t d, std::size_t b) {
  const std::size_t p = spec.aprime.at(a);
  double value = 0.0;
  if (c == p && d == p && b == a) value += 1.0;
  if (c == p && d == a && b == p) value += spec.rho(a);
  return value;
}

namespace {

// Monic cubic in w = a + eta: w^3 - eta w^2 + (1 - |z|^2) w + eta |z|^2.
struct Cubic {
  Complex c2, c1, c0;

  Complex operator()(Complex w) const { return ((w + c2) * w + c1) * w + c0; }
  Complex derivative(Complex w) const { return (3.0 * w + 2.0 * c2) * w + c1; }
};

Cubic make_cubic(Complex z, Complex eta) {
  const double z2 = std::norm(z);
  return {-eta, Complex(1.0 - z2, 0.0), eta * z2};
}

Complex newton(const Cubic& p, Complex w, int steps) {
  for (int i = 0; i < steps; ++i) {
    const Complex d = p.derivative(w);
    if (d == Complex(0.0, 0.0)) break;
    const Complex step = p(w) / d;
    w -= step;
    if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(w))) break;
  }
  return w;
}

// All three roots in w: Newton from a guess, deflation, then the quadratic.
std::array<Complex, 3> cubic_roots(const Cubic& p, Complex guess) {
  const Complex r1 = newton(p, guess, 100);
  const Complex b1 = p.c2 + r1;
  const Complex b0 = p.c1 + r1 * b1;
  const Complex disc = std::sqrt(b1 * b1 - 4.0 * b0);
  // Stable quadratic formula.
  const Complex big = (std::real(std::conj(b1) * disc) >= 0.0) ? -0.5 * (b1 + disc) : -0.5 * (b1 - disc);
  Complex r2 = big;
  Complex r3 = big == Complex(0.0, 0.0) ? Complex(0.0, 0.0) : b0 / big;
  r2 = newton(p, r2, 3);
  r3 = newton(p, r3, 3);
  return {r1, r2, r3};
}

Complex log_interp(Complex from, Complex to, double t) {
  return std::exp(std::log(from) + t * (std::log(to) - std::log(from)));
}

// Follows the root `prev` (in w) along eta: from -> to, bisecting the step
// whenever the nearest root is not clearly separated from the next one.
Complex track(Complex z, Complex prev_w, Complex from, Complex to, int depth) {
  const Cubic p = make_cubic(z, to);
  const Complex shift = to - from;
  const auto roots = cubic_roots(p, prev_w + shift);
  std::array<double, 3> dist{};
  for (int i = 0; i < 3; ++i) dist[i] = std::abs(roots[i] - prev_w);
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return dist[i] < dist[j]; });
  const bool clear = dist[order[0]] < 0.25 * dist[order[1]];
  if (clear || depth >= 30) return roots[order[0]];
  const Complex mid = log_interp(from, to, 0.5);
  const Complex w_mid = track(z, prev_w, from, mid, depth + 1);
  return track(z, w_mid, mid, to, depth + 1);
}

}  // namespace

Complex scalar_a(Complex z, Complex eta) {
  if (!(eta.imag() > 0.0)) throw SpecError("scalar_a: Im(eta) must be > 0");
  const Complex eta0(0.0, 10.0 * (1.0 + std::abs(z)));
  // Near eta0 the Stieltjes root is isolated at a ~ -1/eta0.
  const auto start = cubic_roots(make_cubic(z, eta0), -1.0 / eta0 + eta0);
  Complex w = start[0];
  const Complex target = -1.0 / eta0 + eta0;
  for (const Complex& r : start)
    if (std::abs(r - target) < std::abs(w - target)) w = r;

  constexpr int steps = 50;
  Complex from = eta0;
  for (int k = 1; k <= steps; ++k) {
    const Complex to = k == steps ? eta : log_interp(eta0, eta, static_cast<double>(k) / steps);
    w = track(z, w, from, to, 0);
    from = to;
  }
  const Complex a = w - eta;
  if (!(a.imag() > 0.0))
    throw NumericalError("scalar_a: branch tracking lost Im(a) > 0 at z = (" + std::to_string(z.real()) + ", " +
                         std::to_string(z.imag()) + ")");
  return a;
}

double scalar_a_residual(Complex a, Complex z, Complex eta) {
  const Complex w = a + eta;
  return std::abs(a * (std::norm(z) - w * w) - w);
}

MatrixStieltjes gamma_closed(const QPoint& q) {
  validate(q);
  if (q.m < 2) throw SpecError("gamma_closed: requires m >= 2");
  const Complex a = scalar_a(q.z, q.eta);
  const Complex w = a + q.eta;
  const Complex denom = w * w - std::norm(q.z);
  const auto m = static_cast<Eigen::Index>(q.m);
  MatrixStieltjes g;
  g.entries = ComplexMatrix::Zero(2 * m, 2 * m);
  g.entries.diagonal().setConstant(a);
  g.entries.topRightCorner(m, m).diagonal().setConstant(q.z / denom);
  g.entries.bottomLeftCorner(m, m).diagonal().setConstant(std::conj(q.z) / denom);
  return g;
}

double fixed_point_residual(const ComplexMatrix& gamma, const QPoint& q, const SigmaSpec& spec) {
  const ComplexMatrix inv = (q.matrix() + sigma_op(gamma, spec)).inverse();
  return (gamma + inv).cwiseAbs().maxCoeff();
}

FixedPointResult solve_fixed_point(const QPoint& q, const SigmaSpec& spec, const FixedPointOptions& opts) {
  validate(q);
  if (q.m != spec.m) throw SpecError("solve_fixed_point: q and Sigma disagree on m");
  if (!(opts.damping > 0.0 && opts.damping <= 1.0)) throw SpecError("solve_fixed_point: damping must be in (0, 1]");
  const ComplexMatrix qm = q.matrix();
  ComplexMatrix gamma = -qm.inverse();
  double omega = opts.damping;

  FixedPointResult result;
  for (int it = 0; it < opts.max_iterations; ++it) {
    const ComplexMatrix image = -(qm + sigma_op(gamma, spec)).inverse();
    const double residual = (gamma - image).cwiseAbs().maxCoeff();
    result.residual = residual;
    result.iterations = it;
    if (residual <= opts.tol) {
      result.converged = true;
      break;
    }
    ComplexMatrix next = (1.0 - omega) * gamma + omega * image;
    if (MatrixStieltjes{next}.min_imaginary_eigenvalue() < -1e-12) {
      omega *= 0.5;
      if (omega < 1e-12) break;
      continue;
    }
    gamma = std::move(next);
    result.iterations = it + 1;
  }
  if (!result.converged) result.residual = fixed_point_residual(gamma, q, spec);
  result.gamma.entries = std::move(gamma);
  result.damping_final = omega;
  return result;
}

void to_json(nlohmann::json& j, const FixedPointResult& r) {
  j = nlohmann::json{{"residual", r.residual},
                     {"iterations", r.iterations},
                     {"damping_final", r.damping_final},
                     {"converged", r.converged}};
}

double support_radius(Complex z) { return 2.0 + 2.0 * std::abs(z); }

DensityCurve invert_stieltjes(Complex z, const RealVector& grid, double eps) {
  if (!(eps > 0.0)) throw SpecError("invert_stieltjes: eps must be > 0");
  DensityCurve curve;
  curve.x = grid;
  curve.rho.resize(grid.size());
  curve.z = z;
  curve.eps = eps;
#pragma omp parallel for schedule(dynamic, 16)
  for (Eigen::Index i = 0; i < grid.size(); ++i)
    curve.rho(i) = scalar_a(z, Complex(grid(i), eps)).imag() / std::numbers::pi;
  return curve;
}

DensityCurve invert_stieltjes(Complex z, double eps, std::size_t points) {
  if (points < 2) throw SpecError("invert_stieltjes: need at least two grid points");
  const double beta = support_radius(z);
  return invert_stieltjes(z, RealVector::LinSpaced(static_cast<Eigen::Index>(points), -beta, beta), eps);
}

void write_density_csv(const std::filesystem::path& path, const DensityCurve& curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "x,rho\n";
  char buf[64];
  for (Eigen::Index i = 0; i < curve.x.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", curve.x(i), curve.rho(i));
    out << buf;
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

double f_m_density(Complex z, int m) {
  if (m < 1) throw SpecError("f_m_density: m must be >= 1");
  const double r = std::abs(z);
  if (r > 1.0) return 0.0;
  if (m == 1) return 1.0 / std::numbers::pi;
  if (r == 0.0) return std::numeric_limits<double>::infinity();
  return std::pow(r, 2.0 / m - 2.0) / (m * std::numbers::pi);
}

double radial_cdf(double r, int m) {
  if (m < 1) throw SpecError("radial_cdf: m must be >= 1");
  if (r <= 0.0) return 0.0;
  return std::min(1.0, std::pow(r, 2.0 / m));
}

double elliptic_density(Complex z, double rho) {
  if (!(std::abs(rho) < 1.0)) throw SpecError("elliptic_density: requires |rho| < 1 (degenerate ellipse)");
  return elliptic_contains(z, rho) ? 1.0 / (std::numbers::pi * (1.0 + rho) * (1.0 - rho)) : 0.0;
}

bool elliptic_contains(Complex z, double rho, double slack) {
  if (!(std::abs(rho) < 1.0)) throw SpecError("elliptic_contains: requires |rho| < 1 (degenerate ellipse)");
  const double ax = (1.0 + rho) * slack;
  const double ay = (1.0 - rho) * slack;
  return (z.real() * z.real()) / (ax * ax) + (z.imag() * z.imag()) / (ay * ay) < 1.0;
}

double LimitLaw::density(Complex z) const {
  switch (kind) {
    case LimitLawKind::ProductFm:
      return f_m_density(z, m);
    case LimitLawKind::Circular:
      return f_m_density(z, 1);
    case LimitLawKind::Elliptic:
      return elliptic_density(z, rho);
  }
  return 0.0;
}

double g_exact(double s, double t) {
  const double r2 = s * s + t * t;
  return r2 > 1.0 ? 2.0 * s / r2 : 2.0 * s;
}

}  // namespace espectra
