#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "espectra/types.hpp"

namespace espectra {

enum class SampleKind { Eigenvalues, SymmetrizedSingular };

struct Provenance {
  std::uint64_t spec_hash = 0;
  std::uint64_t seed = 0;
};

/// Multiset of eigenvalues (N values) or of +-singular values (2N values,
/// symmetric under negation, imaginary parts zero).
struct SpectralSample {
  ComplexVector values;
  SampleKind kind = SampleKind::Eigenvalues;
  std::size_t n = 0;
  Provenance provenance{};
};

/// All eigenvalues with multiplicity, from Eigen's real Schur / complex Schur
/// solvers. Throws NumericalError on non-convergence, SpecError on bad input.
SpectralSample eigenvalues(const RealMatrix& m);
SpectralSample eigenvalues(const ComplexMatrix& m);

/// Independent reference eigensolver: Householder reduction to upper
/// Hessenberg form followed by single-shift complex QR with Wilkinson shifts
/// and deflation. Intended as a test oracle for small matrices (N <= 64).
ComplexVector reference_eigenvalues(const ComplexMatrix& m);

template <typename Derived>
ComplexVector reference_eigenvalues(const Eigen::MatrixBase<Derived>& m) {
  return reference_eigenvalues(ComplexMatrix(m.template cast<Complex>()));
}

/// Singular values sigma_1 >= ... >= sigma_N >= 0.
RealVector singular_values(const RealMatrix& m);
RealVector singular_values(const ComplexMatrix& m);

/// Symmetrized singular-value measure of M - z I: the 2N points +-sigma_i,
/// each with mass 1 / 2N.
SpectralSample nu_measure(const RealMatrix& m, Complex z);

/// Hermitization [[0, X], [X^*, 0]].
template <typename Derived>
Matrix<typename Derived::Scalar> hermitize(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index r = x.rows();
  const Eigen::Index c = x.cols();
  Matrix<Scalar> h = Matrix<Scalar>::Zero(r + c, r + c);
  h.topRightCorner(r, c) = x;
  h.bottomLeftCorner(c, r) = x.adjoint();
  return h;
}

/// Spectral parameter q = [[eta I_m, z I_m], [conj(z) I_m, eta I_m]], Im(eta) > 0.
struct QPoint {
  Complex eta{0.0, 1.0};
  Complex z{0.0, 0.0};
  std::size_t m = 1;

  ComplexMatrix matrix() const;
};

void validate(const QPoint& q);

/// A 2m x 2m matrix-valued Stieltjes transform.
struct MatrixStieltjes {
  ComplexMatrix entries;

  /// (M - M^*) / 2i, Hermitian.
  ComplexMatrix imaginary_part() const;
  /// Smallest eigenvalue of the imaginary part.
  double min_imaginary_eigenvalue() const;
};

/// Partial trace Gamma_N of the resolvent R = (H - q (x) I_N)^{-1} and the
/// scalar a_N = tr(Gamma_N) / 2m.
struct PartialTrace {
  MatrixStieltjes gamma;
  Complex a{};
};

/// Gamma_N for an arbitrary Hermitian H of size 2mN: one LU factorization of
/// H - q (x) I_N, back-solved block column by block column.
PartialTrace gamma_n(const ComplexMatrix& h, const QPoint& q);

/// Gamma_N for H = hermitize(X) with X of size mN, via the SVD of X - zI.
/// Same result as gamma_n(hermitize(x), q) at a fraction of the cost.
PartialTrace gamma_n_linearized(const RealMatrix& x, const QPoint& q);

/// Explicit resolvent (H - q (x) I_N)^{-1}. Test oracle for small sizes.
ComplexMatrix resolvent(const ComplexMatrix& h, const QPoint& q);

/// Largest distance between matched elements of two multisets after sorting
/// lexicographically by (Re, Im) and pairing each value with its nearest
/// unmatched partner. Infinity when the sizes differ.
double multiset_distance(const ComplexVector& a, const ComplexVector& b);

/// CSV export: "re,im" for eigenvalues, "sigma" for singular samples.
void write_sample_csv(const std::filesystem::path& path, const SpectralSample& sample);

}  // namespace espectra
