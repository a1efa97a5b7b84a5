#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "espectra/dyson.hpp"
#include "espectra/ensembles.hpp"
#include "espectra/spectral.hpp"

using namespace espectra;

namespace {

const double kPi = std::numbers::pi;

double max_abs(const ComplexMatrix& m) { return m.cwiseAbs().maxCoeff(); }

ComplexMatrix random_complex(Eigen::Index n, std::mt19937_64& gen) {
  std::normal_distribution<double> d;
  ComplexMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = Complex(d(gen), d(gen));
  return m;
}

// Stieltjes transform of the semicircle law: the root of a^2 + eta a + 1 = 0
// with positive imaginary part.
Complex semicircle_transform(Complex eta) {
  const Complex disc = std::sqrt(eta * eta - 4.0);
  const Complex r1 = (-eta + disc) / 2.0;
  const Complex r2 = (-eta - disc) / 2.0;
  return r1.imag() > 0 ? r1 : r2;
}

}  // namespace

TEST_CASE("index map a'") {
  const std::vector<std::size_t> m2 = {3, 2, 1, 0};
  for (std::size_t a = 0; a < 4; ++a) CHECK(a_prime(a, 2) == m2[a]);

  for (std::size_t m = 2; m <= 5; ++m) {
    // Scan the nonzero block in each block row of the Hermitized cyclic layout.
    std::vector<RealMatrix> ones(m, RealMatrix::Ones(1, 1));
    const RealMatrix pattern = hermitize(block_cyclic(ones));
    for (std::size_t a = 0; a < 2 * m; ++a) {
      std::size_t found = 2 * m;
      int count = 0;
      for (std::size_t b = 0; b < 2 * m; ++b)
        if (pattern(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) != 0.0) {
          found = b;
          ++count;
        }
      CHECK(count == 1);
      CHECK(a_prime(a, m) == found);
      CHECK(a_prime(a_prime(a, m), m) == a);
      CHECK(a_prime(a, m) != a);
      CHECK(a_prime(a, m) != a + m);
      CHECK(a_prime(a, m) + m != a);
    }
  }
  CHECK_THROWS_AS(a_prime(0, 1), SpecError);
  CHECK_THROWS_AS(a_prime(4, 2), SpecError);
}

TEST_CASE("sigma operator") {
  std::mt19937_64 gen(3);
  for (std::size_t m : {2, 3, 4}) {
    std::vector<double> rhos;
    for (std::size_t k = 0; k < m; ++k) rhos.push_back(0.9 - 0.4 * k);
    const SigmaSpec spec = make_sigma_spec(rhos);
    const auto d = static_cast<Eigen::Index>(2 * m);

    CHECK(sigma_op(ComplexMatrix::Identity(d, d), spec) == ComplexMatrix::Identity(d, d));

    ComplexMatrix diag = ComplexMatrix::Zero(d, d);
    for (Eigen::Index i = 0; i < d; ++i) diag(i, i) = Complex(i + 1.0, -0.5 * i);
    const ComplexMatrix sd = sigma_op(diag, spec);
    CHECK(ComplexMatrix(sd.diagonal().asDiagonal()) == sd);

    const ComplexMatrix a = random_complex(d, gen);
    const ComplexMatrix b = random_complex(d, gen);
    const Complex alpha(0.7, -1.3), beta(-2.1, 0.4);
    CHECK(max_abs(sigma_op(alpha * a + beta * b, spec) - (alpha * sigma_op(a, spec) + beta * sigma_op(b, spec))) <=
          1e-14 * max_abs(alpha * a + beta * b));

    // Sigma(A)_ab = sum_{c,d} sigma(a,c;d,b) A_cd.
    const ComplexMatrix s = sigma_op(a, spec);
    for (std::size_t i = 0; i < 2 * m; ++i)
      for (std::size_t j = 0; j < 2 * m; ++j) {
        Complex acc = 0;
        for (std::size_t c = 0; c < 2 * m; ++c)
          for (std::size_t e = 0; e < 2 * m; ++e)
            acc += sigma_kernel(spec, i, c, e, j) * a(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(e));
        CHECK(std::abs(acc - s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) <= 1e-14);
      }
    CHECK_THROWS_AS(sigma_op(ComplexMatrix::Zero(d + 1, d + 1), spec), SpecError);
  }
  CHECK_THROWS_AS(make_sigma_spec(std::vector<double>{0.5}), SpecError);
}

TEST_CASE("scalar transform a(q)") {
  CHECK(std::abs(scalar_a(0, Complex(0, 1)) - Complex(0, (std::sqrt(5.0) - 1) / 2)) <= 1e-14);

  for (Complex eta : {Complex(0, 1), Complex(0.5, 0.1), Complex(-1.5, 0.01), Complex(3, 2), Complex(0, 1e-3)}) {
    CAPTURE(eta);
    CHECK(std::abs(scalar_a(0, eta) - semicircle_transform(eta)) <= 1e-10);
  }

  for (double r : {0.0, 0.3, 0.7, 1.0}) {
    const Complex eta(0, 100);
    CHECK(std::abs(scalar_a(std::polar(r, 1.1), eta) + 1.0 / eta) <= 1e-3);
  }

  double worst = 0;
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) {
      const Complex z = std::polar(0.1 * i, 0.7 * j);
      const Complex eta(-2.0 + 0.2 * j, std::pow(10.0, -3.0 + 4.0 * i / 19.0));
      const Complex a = scalar_a(z, eta);
      CHECK(a.imag() > 0);
      worst = std::max(worst, scalar_a_residual(a, z, eta));
    }
  CHECK(worst <= 1e-12);
  CHECK_THROWS_AS(scalar_a(0, Complex(1, 0)), SpecError);
}

TEST_CASE("closed-form Gamma") {
  SUBCASE("solves the fixed-point equation for any rhos") {
    const QPoint q{Complex(0, 0.2), Complex(0.3, 0.1), 2};
    const auto g = gamma_closed(q);
    for (auto rhos : {std::vector<double>{0.5, 0.7}, std::vector<double>{0, 0}, std::vector<double>{-0.9, 0.2}})
      CHECK(fixed_point_residual(g.entries, q, make_sigma_spec(rhos)) <= 1e-12);
  }
  SUBCASE("z = 0 gives a(q) I") {
    const QPoint q{Complex(0.2, 0.9), Complex(0, 0), 3};
    const auto g = gamma_closed(q);
    CHECK(max_abs(g.entries - scalar_a(0, q.eta) * ComplexMatrix::Identity(6, 6)) <= 1e-15);
  }
  SUBCASE("imaginary part is positive definite") {
    const auto g = gamma_closed(QPoint{Complex(0, 0.5), Complex(0.4, 0), 2});
    CHECK(g.min_imaginary_eigenvalue() > 0);
  }
  CHECK_THROWS_AS(gamma_closed(QPoint{Complex(0, 1), Complex(0, 0), 1}), SpecError);
}

TEST_CASE("damped fixed-point solver") {
  SUBCASE("matches the closed form") {
    const QPoint q{Complex(0, 0.2), Complex(0.3, 0.1), 2};
    const auto r = solve_fixed_point(q, make_sigma_spec(std::vector<double>{0.5, 0.7}));
    CHECK(r.converged);
    CHECK(max_abs(r.gamma.entries - gamma_closed(q).entries) <= 1e-10);
    CHECK(r.residual <= 1e-12);
    const auto r0 = solve_fixed_point(q, make_sigma_spec(std::vector<double>{0, 0}));
    CHECK(max_abs(r.gamma.entries - r0.gamma.entries) <= 1e-10);
  }
  SUBCASE("large eta converges fast") {
    const auto r = solve_fixed_point(QPoint{Complex(0, 2), Complex(0, 0), 2}, make_sigma_spec(std::vector<double>{0.3, 0.3}));
    CHECK(r.converged);
    CHECK(r.iterations <= 50);
  }
  SUBCASE("random tuples") {
    std::mt19937_64 gen(12);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t m = 2 + trial % 3;
      std::vector<double> rhos;
      for (std::size_t k = 0; k < m; ++k) rhos.push_back(1.98 * u(gen) - 0.99);
      const QPoint q{Complex(2 * u(gen) - 1, 0.05 + 4.95 * u(gen)), std::polar(2 * u(gen), 2 * kPi * u(gen)), m};
      FixedPointOptions opts;
      const auto r = solve_fixed_point(q, make_sigma_spec(rhos), opts);
      CHECK(r.converged);
      CHECK(r.residual <= opts.tol);
      CHECK(r.gamma.min_imaginary_eigenvalue() >= -1e-12);
      CHECK(max_abs(r.gamma.entries - gamma_closed(q).entries) <= 1e-10);
    }
  }
  SUBCASE("iteration cap is reported") {
    FixedPointOptions opts;
    opts.max_iterations = 2;
    const auto r = solve_fixed_point(QPoint{Complex(0, 0.1), Complex(0.9, 0), 2}, make_sigma_spec(std::vector<double>{0, 0}), opts);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 2);
    CHECK(r.residual > opts.tol);
    const nlohmann::json j = r;
    CHECK(j.contains("residual"));
    CHECK(j.contains("iterations"));
    CHECK(j.contains("damping_final"));
  }
  SUBCASE("option checks") {
    FixedPointOptions opts;
    opts.damping = 0;
    CHECK_THROWS_AS(solve_fixed_point(QPoint{Complex(0, 1), Complex(0, 0), 2}, make_sigma_spec(std::vector<double>{0, 0}), opts),
                    SpecError);
    CHECK_THROWS_AS(solve_fixed_point(QPoint{Complex(0, 1), Complex(0, 0), 3}, make_sigma_spec(std::vector<double>{0, 0})),
                    SpecError);
  }
}

TEST_CASE("Stieltjes inversion") {
  SUBCASE("semicircle at z = 0") {
    const auto c = invert_stieltjes(0, 1e-4);
    double worst = 0;
    for (Eigen::Index i = 0; i < c.x.size(); ++i) {
      const double x = c.x(i);
      const double exact = std::abs(x) < 2 ? std::sqrt(4 - x * x) / (2 * kPi) : 0.0;
      worst = std::max(worst, std::abs(c.rho(i) - exact));
    }
    CHECK(worst <= 5e-3);
    Eigen::Index mid = 0;
    c.x.cwiseAbs().minCoeff(&mid);
    CHECK(std::abs(c.x(mid)) <= 1e-12);
    CHECK(c.rho(mid) == doctest::Approx(1 / kPi).epsilon(1e-3));
  }
  for (Complex z : {Complex(0, 0), Complex(0.5, 0), Complex(1.2, 0), Complex(0.3, 0.4)}) {
    CAPTURE(z);
    const double eps = 1e-4;
    const auto c = invert_stieltjes(z, eps);
    CHECK(c.x(0) == doctest::Approx(-support_radius(z)));
    CHECK(c.rho.minCoeff() >= 0.0);
    CHECK(c.rho.maxCoeff() <= 1 + 5 * eps);
    const Eigen::Index n = c.x.size();
    for (Eigen::Index i = 0; i < n; ++i) CHECK(std::abs(c.rho(i) - c.rho(n - 1 - i)) <= 1e-10);
    double integral = 0;
    for (Eigen::Index i = 1; i < n; ++i) integral += 0.5 * (c.rho(i) + c.rho(i - 1)) * (c.x(i) - c.x(i - 1));
    CHECK(std::abs(integral - 1.0) <= 1e-3);
  }
  CHECK_THROWS_AS(invert_stieltjes(0, 0.0), SpecError);
}

TEST_CASE("limit-law densities") {
  CHECK(f_m_density(Complex(0.3, 0.2), 1) == doctest::Approx(1 / kPi));
  CHECK(f_m_density(Complex(1.0, 0.0), 1) == doctest::Approx(1 / kPi));
  for (int m : {1, 2, 3}) CHECK(f_m_density(Complex(0.8, 0.7), m) == 0.0);
  CHECK(radial_cdf(-1, 2) == 0.0);
  CHECK(radial_cdf(2, 2) == 1.0);
  CHECK(radial_cdf(0.25, 1) == doctest::Approx(0.0625));

  using TS = boost::math::quadrature::tanh_sinh<double>;
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  // 2D quadrature of f_2 over the disk of radius 0.25 in polar coordinates.
  const double mass = TS().integrate([](double r) {
    if (r < 1e-200) return 0.0;
    return GK::integrate([r](double t) { return f_m_density(std::polar(r, t), 2) * r; }, 0.0, 2 * kPi, 5, 1e-12);
  }, 0.0, 0.25);
  CHECK(mass == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(radial_cdf(0.25, 2) == doctest::Approx(mass).epsilon(1e-9));
  CHECK(radial_cdf(0.0625, 4) == doctest::Approx(0.25));

  for (int m : {1, 2, 3, 4}) {
    CAPTURE(m);
    const LimitLaw law{m == 1 ? LimitLawKind::Circular : LimitLawKind::ProductFm, m, 0.0};
    const double total = TS().integrate([&](double r) {
      if (r < 1e-200) return 0.0;
      return GK::integrate([&](double t) { return law.density(std::polar(r, t)) * r; }, 0.0, 2 * kPi, 5, 1e-12);
    }, 0.0, 1.0);
    CHECK(std::abs(total - 1.0) <= 1e-6);
  }
  for (double rho : {-0.6, 0.0, 0.5}) {
    CAPTURE(rho);
    const LimitLaw law{LimitLawKind::Elliptic, 1, rho};
    const double ax = 1 + rho, ay = 1 - rho;
    // Elliptic polar coordinates: x = ax r cos t, y = ay r sin t.
    const double total = TS().integrate([&](double r) {
      return GK::integrate(
          [&](double t) { return law.density(Complex(ax * r * std::cos(t), ay * r * std::sin(t))) * ax * ay * r; }, 0.0,
          2 * kPi, 5, 1e-12);
    }, 0.0, 1.0);
    CHECK(std::abs(total - 1.0) <= 1e-6);
    CHECK(elliptic_contains(Complex(0.99 * ax, 0), rho));
    CHECK_FALSE(elliptic_contains(Complex(1.01 * ax, 0), rho));
    CHECK(elliptic_contains(Complex(1.01 * ax, 0), rho, 1.05));
    CHECK(elliptic_density(Complex(0, 1.01 * ay), rho) == 0.0);
  }
  CHECK_THROWS_AS(elliptic_density(0, 1.0), SpecError);
  CHECK_THROWS_AS(elliptic_contains(0, -1.0), SpecError);
  CHECK_THROWS_AS(radial_cdf(0.5, 0), SpecError);
}

TEST_CASE("g(s, t)") {
  CHECK(g_exact(2, 0) == doctest::Approx(1.0));
  CHECK(g_exact(0.5, 0) == doctest::Approx(1.0));
  for (double theta = 0; theta < 2 * kPi; theta += 0.3) {
    const double s = std::cos(theta), t = std::sin(theta);
    CHECK(g_exact(s, t) == doctest::Approx(2 * s));
  }
  CHECK(g_exact(1.5, 1.0) == doctest::Approx(3.0 / 3.25));
}
