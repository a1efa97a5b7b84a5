#pragma once

#include <cstddef>
#include <string>
#include <utility>

#include <json.hpp>

#include "espectra/rng.hpp"
#include "espectra/types.hpp"

namespace espectra {

/// Joint law of the mirror pair (xi_1, xi_2).
///  - GaussianPair: xi_2 = rho xi_1 + sqrt(1 - rho^2) g, both standard normal.
///  - RademacherMix: symmetric signs; with probability |rho| xi_2 = sgn(rho) xi_1,
///    otherwise an independent sign.
///  - ParetoSymmetrized: random sign times a Pareto(2.5 + tau) magnitude,
///    rescaled to unit variance; coupled by the same mixture as RademacherMix.
enum class AtomFamily { GaussianPair, RademacherMix, ParetoSymmetrized };

enum class DiagonalFamily { Gaussian, Rademacher, Zero };

struct DiagonalLaw {
  DiagonalFamily family = DiagonalFamily::Gaussian;
  double variance = 1.0;

  friend bool operator==(const DiagonalLaw&, const DiagonalLaw&) = default;
};

struct AtomParams {
  double tau = 1.0;
  bool wigner = false;
  DiagonalLaw diag{};
};

/// Validated atom-variable law. Construct through make_atom_pair_spec.
struct AtomPairSpec {
  AtomFamily family = AtomFamily::GaussianPair;
  double rho = 0.0;
  double tau = 1.0;
  bool wigner = false;
  DiagonalLaw diag{};

  friend bool operator==(const AtomPairSpec&, const AtomPairSpec&) = default;
};

/// Validates and builds a spec. Throws SpecError when |rho| >= 1 without the
/// Wigner flag (the pair correlation must satisfy |rho| < 1), when the Wigner
/// flag is used with rho outside {-1, 0, 1}, or when tau <= 0.
AtomPairSpec make_atom_pair_spec(AtomFamily family, double rho, const AtomParams& params = {});

/// Draws one mirror pair. Marginals have mean 0, variance 1 and E[xi_1 xi_2] = rho.
std::pair<double, double> sample_pair(const AtomPairSpec& spec, CounterStream& gen);

/// Draws one diagonal entry zeta.
double sample_diagonal(const AtomPairSpec& spec, CounterStream& gen);

/// Tail exponent of the Pareto family for a given moment surplus tau.
inline double pareto_exponent(double tau) { return 2.5 + tau; }

/// E|xi_1|^{2+tau} + E|xi_2|^{2+tau}, in closed form.
double moment_sum(const AtomPairSpec& spec);

/// Constants of the truncate-center-rescale transform
///   xi_hat = (xi 1{|xi| <= N^delta} - center) / scale.
struct TruncationConstants {
  std::size_t n = 0;
  double delta = 0.1;
  double threshold = 1.0;  // N^delta
  double center_1 = 0.0;
  double center_2 = 0.0;
  double scale_1 = 1.0;
  double scale_2 = 1.0;
  double rho_hat = 0.0;    // E[xi_hat_1 xi_hat_2]

  double apply_1(double x) const { return ((std::abs(x) <= threshold ? x : 0.0) - center_1) / scale_1; }
  double apply_2(double x) const { return ((std::abs(x) <= threshold ? x : 0.0) - center_2) / scale_2; }
};

/// Computes the truncation constants at dimension n. Throws SpecError when
/// delta <= 0, delta * tau >= 1, n == 0, or when the truncated variance falls
/// below 1/2 (n is too small for this law; raise n or delta).
TruncationConstants truncate_spec(const AtomPairSpec& spec, std::size_t n, double delta = 0.1);

/// Draws a pair and applies the truncation transform to each component.
std::pair<double, double> sample_truncated_pair(const AtomPairSpec& spec, const TruncationConstants& tc,
                                                CounterStream& gen);

std::string to_string(AtomFamily family);
std::string to_string(DiagonalFamily family);
AtomFamily parse_atom_family(const std::string& name);
DiagonalFamily parse_diagonal_family(const std::string& name);

void to_json(nlohmann::json& j, const AtomPairSpec& spec);
void from_json(const nlohmann::json& j, AtomPairSpec& spec);

}  // namespace espectra
