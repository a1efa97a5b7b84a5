#include "espectra/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <vector>

namespace espectra {

namespace {

void require_square(Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (rows != cols || rows == 0) throw SpecError(std::string(what) + ": matrix must be square and non-empty");
}

// Givens rotation G = [[c, s], [-conj(s), c]] with G [x; y] = [r; 0].
struct Givens {
  double c = 1.0;
  Complex s{0.0, 0.0};
};

Givens make_givens(Complex x, Complex y) {
  const double ax = std::abs(x);
  const double norm = std::hypot(ax, std::abs(y));
  if (norm == 0.0) return {};
  if (ax == 0.0) return {0.0, std::conj(y) / std::abs(y)};
  return {ax / norm, (x / ax) * std::conj(y) / norm};
}

void reduce_to_hessenberg(ComplexMatrix& a) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index k = 0; k + 2 < n; ++k) {
    ComplexVector v = a.col(k).tail(n - k - 1);
    const double xnorm = v.norm();
    if (xnorm == 0.0) continue;
    const Complex phase = std::abs(v(0)) == 0.0 ? Complex(1.0, 0.0) : v(0) / std::abs(v(0));
    v(0) += phase * xnorm;
    const double vnorm = v.norm();
    if (vnorm == 0.0) continue;
    v /= vnorm;
    auto rows = a.bottomRows(n - k - 1);
    rows -= 2.0 * v * (v.adjoint() * rows);
    auto cols = a.rightCols(n - k - 1);
    cols -= 2.0 * (cols * v) * v.adjoint();
    a.col(k).tail(n - k - 2).setZero();
  }
}

Complex wilkinson_shift(Complex a, Complex b, Complex c, Complex d) {
  const Complex half_diff = 0.5 * (a - d);
  const Complex disc = std::sqrt(half_diff * half_diff + b * c);
  const Complex mid = 0.5 * (a + d);
  const Complex mu1 = mid + disc;
  const Complex mu2 = mid - disc;
  return std::abs(mu1 - d) < std::abs(mu2 - d) ? mu1 : mu2;
}

}  // namespace

SpectralSample eigenvalues(const RealMatrix& m) {
  require_square(m.rows(), m.cols(), "eigenvalues");
  if (!m.allFinite()) throw SpecError("eigenvalues: matrix has non-finite entries");
  Eigen::EigenSolver<RealMatrix> solver(m, false);
  if (solver.info() != Eigen::Success) throw NumericalError("eigenvalues: real Schur iteration did not converge");
  SpectralSample s;
  s.values = solver.eigenvalues();
  s.kind = SampleKind::Eigenvalues;
  s.n = static_cast<std::size_t>(m.rows());
  return s;
}

SpectralSample eigenvalues(const ComplexMatrix& m) {
  require_square(m.rows(), m.cols(), "eigenvalues");
  if (!m.allFinite()) throw SpecError("eigenvalues: matrix has non-finite entries");
  Eigen::ComplexEigenSolver<ComplexMatrix> solver(m, false);
  if (solver.info() != Eigen::Success) throw NumericalError("eigenvalues: complex Schur iteration did not converge");
  SpectralSample s;
  s.values = solver.eigenvalues();
  s.kind = SampleKind::Eigenvalues;
  s.n = static_cast<std::size_t>(m.rows());
  return s;
}

ComplexVector reference_eigenvalues(const ComplexMatrix& m) {
  require_square(m.rows(), m.cols(), "reference_eigenvalues");
  const Eigen::Index n = m.rows();
  ComplexMatrix h = m;
  reduce_to_hessenberg(h);

  const double eps = std::numeric_limits<double>::epsilon();
  const double scale = std::max(h.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  ComplexVector out(n);
  Eigen::Index hi = n - 1;
  int iterations = 0;
  const int max_iterations = 30 * static_cast<int>(n);

  while (hi >= 0) {
    // Find the start of the unreduced block ending at hi.
    Eigen::Index lo = hi;
    while (lo > 0) {
      const double local = std::abs(h(lo, lo)) + std::abs(h(lo - 1, lo - 1));
      if (std::abs(h(lo, lo - 1)) <= eps * (local == 0.0 ? scale : local)) {
        h(lo, lo - 1) = 0.0;
        break;
      }
      --lo;
    }
    if (lo == hi) {
      out(hi) = h(hi, hi);
      --hi;
      iterations = 0;
      continue;
    }
    if (++iterations > max_iterations)
      throw NumericalError("reference_eigenvalues: shifted QR did not converge");

    Complex mu = wilkinson_shift(h(hi - 1, hi - 1), h(hi - 1, hi), h(hi, hi - 1), h(hi, hi));
    if (iterations % 10 == 0) mu = h(hi, hi) + 0.75 * std::abs(h(hi, hi - 1));  // exceptional shift

    for (Eigen::Index k = lo; k <= hi; ++k) h(k, k) -= mu;
    std::vector<Givens> rotations;
    rotations.reserve(static_cast<std::size_t>(hi - lo));
    for (Eigen::Index k = lo; k < hi; ++k) {
      const Givens g = make_givens(h(k, k), h(k + 1, k));
      for (Eigen::Index j = k; j <= hi; ++j) {
        const Complex top = h(k, j);
        const Complex bottom = h(k + 1, j);
        h(k, j) = g.c * top + g.s * bottom;
        h(k + 1, j) = -std::conj(g.s) * top + g.c * bottom;
      }
      rotations.push_back(g);
    }
    for (Eigen::Index k = lo; k < hi; ++k) {
      const Givens& g = rotations[static_cast<std::size_t>(k - lo)];
      for (Eigen::Index i = lo; i <= std::min(k + 1, hi); ++i) {
        const Complex left = h(i, k);
        const Complex right = h(i, k + 1);
        h(i, k) = g.c * left + std::conj(g.s) * right;
        h(i, k + 1) = -g.s * left + g.c * right;
      }
    }
    for (Eigen::Index k = lo; k <= hi; ++k) h(k, k) += mu;
  }
  return out;
}

RealVector singular_values(const RealMatrix& m) {
  if (m.size() == 0) throw SpecError("singular_values: empty matrix");
  if (!m.allFinite()) throw SpecError("singular_values: matrix has non-finite entries");
  Eigen::BDCSVD<RealMatrix> svd(m);
  if (svd.info() != Eigen::Success) throw NumericalError("singular_values: SVD did not converge");
  return svd.singularValues();
}

RealVector singular_values(const ComplexMatrix& m) {
  if (m.size() == 0) throw SpecError("singular_values: empty matrix");
  if (!m.allFinite()) throw SpecError("singular_values: matrix has non-finite entries");
  Eigen::BDCSVD<ComplexMatrix> svd(m);
  if (svd.info() != Eigen::Success) throw NumericalError("singular_values: SVD did not converge");
  return svd.singularValues();
}

SpectralSample nu_measure(const RealMatrix& m, Complex z) {
  require_square(m.rows(), m.cols(), "nu_measure");
  RealVector sigma;
  if (z.imag() == 0.0) {
    sigma = singular_values(RealMatrix(m - z.real() * RealMatrix::Identity(m.rows(), m.cols())));
  } else {
    ComplexMatrix shifted = m.cast<Complex>();
    shifted.diagonal().array() -= z;
    sigma = singular_values(shifted);
  }
  const Eigen::Index n = sigma.size();
  SpectralSample s;
  s.kind = SampleKind::SymmetrizedSingular;
  s.n = static_cast<std::size_t>(n);
  s.values.resize(2 * n);
  s.values.head(n) = sigma.cast<Complex>();
  s.values.tail(n) = -sigma.cast<Complex>();
  return s;
}

ComplexMatrix QPoint::matrix() const {
  const auto k = static_cast<Eigen::Index>(m);
  ComplexMatrix q = ComplexMatrix::Zero(2 * k, 2 * k);
  q.topLeftCorner(k, k).diagonal().setConstant(eta);
  q.bottomRightCorner(k, k).diagonal().setConstant(eta);
  q.topRightCorner(k, k).diagonal().setConstant(z);
  q.bottomLeftCorner(k, k).diagonal().setConstant(std::conj(z));
  return q;
}

void validate(const QPoint& q) {
  if (!(q.eta.imag() > 0.0) || !std::isfinite(q.eta.real()) || !std::isfinite(q.eta.imag()))
    throw SpecError("spectral parameter: Im(eta) must be > 0");
  if (!std::isfinite(q.z.real()) || !std::isfinite(q.z.imag())) throw SpecError("spectral parameter: z not finite");
  if (q.m < 1) throw SpecError("spectral parameter: m must be >= 1");
}

ComplexMatrix MatrixStieltjes::imaginary_part() const {
  return (entries - entries.adjoint()) / Complex(0.0, 2.0);
}

double MatrixStieltjes::min_imaginary_eigenvalue() const {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(imaginary_part(), Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

namespace {

// H - q (x) I_N in the 2m x 2m block layout.
ComplexMatrix shifted_hermitization(const ComplexMatrix& h, const QPoint& q) {
  validate(q);
  const auto blocks = static_cast<Eigen::Index>(2 * q.m);
  require_square(h.rows(), h.cols(), "gamma_n");
  if (h.rows() % blocks != 0) throw SpecError("gamma_n: H dimension must be a multiple of 2m");
  const Eigen::Index n = h.rows() / blocks;
  const ComplexMatrix qm = q.matrix();
  ComplexMatrix shifted = h;
  for (Eigen::Index a = 0; a < blocks; ++a)
    for (Eigen::Index b = 0; b < blocks; ++b)
      if (qm(a, b) != Complex(0.0, 0.0)) shifted.block(a * n, b * n, n, n).diagonal().array() -= qm(a, b);
  return shifted;
}

PartialTrace finish(ComplexMatrix gamma) {
  PartialTrace out;
  out.a = gamma.trace() / static_cast<double>(gamma.rows());
  out.gamma.entries = std::move(gamma);
  return out;
}

// (a, b) entry: (1/N) sum_j w_j sum_k P(aN + k, j) conj(Q(bN + k, j)), i.e. the
// normalized block traces of P diag(w) Q^*.
template <typename Scalar>
ComplexMatrix block_traces(const Matrix<Scalar>& p, const Matrix<Scalar>& q, const ComplexVector& w,
                           Eigen::Index m, Eigen::Index n) {
  ComplexMatrix out(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      const Vector<Scalar> overlaps =
          p.middleRows(a * n, n).cwiseProduct(q.middleRows(b * n, n).conjugate()).colwise().sum().transpose();
      out(a, b) = overlaps.template cast<Complex>().cwiseProduct(w).sum() / static_cast<double>(n);
    }
  }
  return out;
}

template <typename Scalar>
ComplexMatrix gamma_from_svd(const Matrix<Scalar>& w, const QPoint& q) {
  Eigen::BDCSVD<Matrix<Scalar>> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.info() != Eigen::Success) throw NumericalError("gamma_n: SVD did not converge");
  const auto m = static_cast<Eigen::Index>(q.m);
  const Eigen::Index n = w.rows() / m;
  const RealVector& s = svd.singularValues();
  const Complex eta = q.eta;
  // R = [[U D_eta U^*, U D_s V^*], [V D_s U^*, V D_eta V^*]] with
  // D_eta = eta / (s^2 - eta^2) and D_s = s / (s^2 - eta^2).
  const ComplexVector denom = (s.array().square().cast<Complex>() - eta * eta).matrix();
  const ComplexVector w_eta = (eta / denom.array()).matrix();
  const ComplexVector w_s = (s.cast<Complex>().array() / denom.array()).matrix();
  const Matrix<Scalar>& u = svd.matrixU();
  const Matrix<Scalar>& v = svd.matrixV();
  ComplexMatrix gamma(2 * m, 2 * m);
  gamma.topLeftCorner(m, m) = block_traces<Scalar>(u, u, w_eta, m, n);
  gamma.topRightCorner(m, m) = block_traces<Scalar>(u, v, w_s, m, n);
  gamma.bottomLeftCorner(m, m) = block_traces<Scalar>(v, u, w_s, m, n);
  gamma.bottomRightCorner(m, m) = block_traces<Scalar>(v, v, w_eta, m, n);
  return gamma;
}

}  // namespace

PartialTrace gamma_n(const ComplexMatrix& h, const QPoint& q) {
  const ComplexMatrix shifted = shifted_hermitization(h, q);
  const auto blocks = static_cast<Eigen::Index>(2 * q.m);
  const Eigen::Index n = h.rows() / blocks;
  const Eigen::Index dim = h.rows();
  Eigen::PartialPivLU<ComplexMatrix> lu(shifted);
  ComplexMatrix gamma(blocks, blocks);
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const ComplexMatrix rhs = ComplexMatrix::Identity(dim, dim).middleCols(b * n, n);
    const ComplexMatrix cols = lu.solve(rhs);
    if (!cols.allFinite()) throw NumericalError("gamma_n: linear solve broke down");
    for (Eigen::Index a = 0; a < blocks; ++a) gamma(a, b) = cols.block(a * n, 0, n, n).trace() / static_cast<double>(n);
  }
  return finish(std::move(gamma));
}

PartialTrace gamma_n_linearized(const RealMatrix& x, const QPoint& q) {
  validate(q);
  require_square(x.rows(), x.cols(), "gamma_n_linearized");
  if (x.rows() % static_cast<Eigen::Index>(q.m) != 0)
    throw SpecError("gamma_n_linearized: X dimension must be a multiple of m");
  if (q.z.imag() == 0.0) {
    RealMatrix w = x;
    w.diagonal().array() -= q.z.real();
    return finish(gamma_from_svd<double>(w, q));
  }
  ComplexMatrix w = x.cast<Complex>();
  w.diagonal().array() -= q.z;
  return finish(gamma_from_svd<Complex>(w, q));
}

ComplexMatrix resolvent(const ComplexMatrix& h, const QPoint& q) {
  return shifted_hermitization(h, q).inverse();
}

double multiset_distance(const ComplexVector& a, const ComplexVector& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  auto lex = [](Complex x, Complex y) { return x.real() < y.real() || (x.real() == y.real() && x.imag() < y.imag()); };
  std::vector<Complex> sa(a.data(), a.data() + a.size());
  std::vector<Complex> sb(b.data(), b.data() + b.size());
  std::sort(sa.begin(), sa.end(), lex);
  std::sort(sb.begin(), sb.end(), lex);
  std::vector<bool> used(sb.size(), false);
  double worst = 0.0;
  for (const Complex& x : sa) {
    std::size_t best = sb.size();
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < sb.size(); ++j) {
      if (used[j]) continue;
      const double d = std::abs(x - sb[j]);
      if (d < best_dist) {
        best_dist = d;
        best = j;
      }
    }
    used[best] = true;
    worst = std::max(worst, best_dist);
  }
  return worst;
}

void write_sample_csv(const std::filesystem::path& path, const SpectralSample& sample) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  char buf[64];
  if (sample.kind == SampleKind::Eigenvalues) {
    out << "re,im\n";
    for (const Complex& v : sample.values) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", v.real(), v.imag());
      out << buf;
    }
  } else {
    out << "sigma\n";
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(sample.n); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g\n", sample.values(i).real());
      out << buf;
    }
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace espectra
