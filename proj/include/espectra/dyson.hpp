#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "espectra/spectral.hpp"
#include "espectra/types.hpp"

namespace espectra {

/// Index map of the block-cyclic Hermitization (zero-based): for block row a
/// of H, the unique block column holding a nonzero block. An involution with
/// a' != a and a' != a +- m. Requires m >= 2.
std::size_t a_prime(std::size_t a, std::size_t m);

/// Covariance structure of the Hermitized linearization: one correlation per
/// factor plus the cached index map.
struct SigmaSpec {
  std::size_t m = 2;
  std::vector<double> rhos;
  std::vector<std::size_t> aprime;

  /// rho_a for a < m, rho_{a'} for a >= m.
  double rho(std::size_t a) const { return a < m ? rhos[a] : rhos[aprime[a]]; }
};

SigmaSpec make_sigma_spec(std::span<const double> rhos);

/// Sigma(A)_{ab} = A_{a'a'} delta_{ab} + rho_a A_{a'a} delta_{a'b}.
ComplexMatrix sigma_op(const ComplexMatrix& a, const SigmaSpec& spec);

/// The covariance kernel sigma(a, c; d, b) = N E[H^{ac}_{12} H^{db}_{21}] for
/// which Sigma(A)_{ab} = sum_{c,d} sigma(a, c; d, b) A_{cd}.
double sigma_kernel(const SigmaSpec& spec, std::size_t a, std::size_t c, std::size_t d, std::size_t b);

/// Stieltjes transform a(q) of nu_z: the root of a = (a + eta) / (|z|^2 - (a + eta)^2)
/// followed by homotopy from eta_0 = 10i (1 + |z|) down to eta.
Complex scalar_a(Complex z, Complex eta);

/// Residual |a (|z|^2 - (a + eta)^2) - (a + eta)| of the defining cubic.
double scalar_a_residual(Complex a, Complex z, Complex eta);

/// Closed-form solution of Gamma = -(q + Sigma(Gamma))^{-1}:
/// a(q) on the diagonal, z / ((a + eta)^2 - |z|^2) at (a, a + m) and
/// conj(z) / ((a + eta)^2 - |z|^2) at (a + m, a).
MatrixStieltjes gamma_closed(const QPoint& q);

struct FixedPointOptions {
  double damping = 0.5;
  double tol = 1e-12;
  int max_iterations = 10000;
};

struct FixedPointResult {
  MatrixStieltjes gamma;
  double residual = 0.0;
  int iterations = 0;
  double damping_final = 0.0;
  bool converged = false;
};

void to_json(nlohmann::json& j, const FixedPointResult& r);

/// max-norm of Gamma + (q + Sigma(Gamma))^{-1}.
double fixed_point_residual(const ComplexMatrix& gamma, const QPoint& q, const SigmaSpec& spec);

/// Damped iteration Gamma <- (1 - w) Gamma - w (q + Sigma(Gamma))^{-1} from
/// Gamma_0 = -q^{-1}. An iterate whose imaginary part is not positive
/// semidefinite is rejected and the damping halved. Stops once the residual
/// is below tol; `converged` is false when the iteration cap is hit.
FixedPointResult solve_fixed_point(const QPoint& q, const SigmaSpec& spec, const FixedPointOptions& opts = {});

/// Smoothed density of nu_z on a real grid.
struct DensityCurve {
  RealVector x;
  RealVector rho;
  Complex z{};
  double eps = 1e-4;
};

/// Support half-width used for the density grid: 2 + 2|z|.
double support_radius(Complex z);

/// rho_z(x) ~ Im a(x + i eps) / pi on the given grid.
DensityCurve invert_stieltjes(Complex z, const RealVector& grid, double eps = 1e-4);

/// Same on `points` equispaced abscissae covering [-beta, beta].
DensityCurve invert_stieltjes(Complex z, double eps = 1e-4, std::size_t points = 4001);

void write_density_csv(const std::filesystem::path& path, const DensityCurve& curve);

// Limit laws.

/// Density of F_m: |z|^{2/m - 2} / (m pi) on the closed unit disk, 0 outside.
double f_m_density(Complex z, int m);

/// P(|w| <= r) under F_m, i.e. r^{2/m} clamped to [0, 1].
double radial_cdf(double r, int m);

/// Uniform density on the ellipse with semi-axes 1 + rho and 1 - rho.
double elliptic_density(Complex z, double rho);

/// Membership in the ellipse dilated by `slack`.
bool elliptic_contains(Complex z, double rho, double slack = 1.0);

enum class LimitLawKind { ProductFm, Circular, Elliptic };

struct LimitLaw {
  LimitLawKind kind = LimitLawKind::Circular;
  int m = 1;
  double rho = 0.0;

  double density(Complex z) const;
};

/// g(s, t) = 2s / (s^2 + t^2) outside the unit disk, 2s inside.
double g_exact(double s, double t);

}  // namespace espectra
