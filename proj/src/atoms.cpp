#include "espectra/atoms.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace espectra {

namespace {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double pareto_scale(double tau) {
  const double alpha = pareto_exponent(tau);
  return std::sqrt((alpha - 2.0) / alpha);
}

// Unit-variance marginal draw (no coupling).
double sample_marginal(const AtomPairSpec& spec, CounterStream& gen) {
  switch (spec.family) {
    case AtomFamily::GaussianPair:
      return gen.normal();
    case AtomFamily::RademacherMix:
      return gen.sign();
    case AtomFamily::ParetoSymmetrized: {
      const double alpha = pareto_exponent(spec.tau);
      const double magnitude = std::pow(gen.uniform(), -1.0 / alpha);
      return gen.sign() * pareto_scale(spec.tau) * magnitude;
    }
  }
  return 0.0;
}

// E|xi|^p of one marginal.
double absolute_moment(const AtomPairSpec& spec, double p) {
  switch (spec.family) {
    case AtomFamily::GaussianPair:
      return std::pow(2.0, p / 2.0) * std::tgamma((p + 1.0) / 2.0) / std::sqrt(std::numbers::pi);
    case AtomFamily::RademacherMix:
      return 1.0;
    case AtomFamily::ParetoSymmetrized: {
      const double alpha = pareto_exponent(spec.tau);
      return std::pow(pareto_scale(spec.tau), p) * alpha / (alpha - p);
    }
  }
  return 0.0;
}

// E[xi^2 1{|xi| <= t}] of one marginal. All marginals are symmetric, so the
// truncated mean E[xi 1{|xi| <= t}] vanishes.
double truncated_second_moment(const AtomPairSpec& spec, double t) {
  switch (spec.family) {
    case AtomFamily::GaussianPair:
      return std::erf(t / std::numbers::sqrt2) - 2.0 * t * normal_pdf(t);
    case AtomFamily::RademacherMix:
      return t >= 1.0 ? 1.0 : 0.0;
    case AtomFamily::ParetoSymmetrized: {
      const double u = t / pareto_scale(spec.tau);
      return u <= 1.0 ? 0.0 : 1.0 - std::pow(u, 2.0 - pareto_exponent(spec.tau));
    }
  }
  return 0.0;
}

// E[xi_1 xi_2 1{|xi_1| <= t} 1{|xi_2| <= t}].
double truncated_cross_moment(const AtomPairSpec& spec, double t) {
  if (spec.family != AtomFamily::GaussianPair || std::abs(spec.rho) == 1.0) {
    // Mixture couplings (and the degenerate Gaussian): the independent branch
    // contributes E[xi 1]^2 = 0, the copied branch contributes sgn(rho) m2.
    return spec.rho * truncated_second_moment(spec, t);
  }
  // Condition on xi_1 = x: xi_2 ~ N(rho x, 1 - rho^2).
  const double s = std::sqrt(1.0 - spec.rho * spec.rho);
  auto integrand = [&](double x) {
    const double mu = spec.rho * x;
    const double lo = (-t - mu) / s;
    const double hi = (t - mu) / s;
    const double inner = mu * (normal_cdf(hi) - normal_cdf(lo)) - s * (normal_pdf(hi) - normal_pdf(lo));
    return x * normal_pdf(x) * inner;
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -t, t, 15, 1e-14);
}

}  // namespace

AtomPairSpec make_atom_pair_spec(AtomFamily family, double rho, const AtomParams& params) {
  if (!std::isfinite(rho)) throw SpecError("atom spec: rho must be finite");
  if (params.wigner) {
    if (rho != -1.0 && rho != 0.0 && rho != 1.0)
      throw SpecError("atom spec: the Wigner path only allows rho in {-1, 0, 1}");
  } else if (std::abs(rho) >= 1.0) {
    throw SpecError("atom spec: pair correlation must satisfy |rho| < 1 (got " + std::to_string(rho) +
                    "); pass the Wigner flag for the symmetric rho = 1 path");
  }
  if (!(params.tau > 0.0) || !std::isfinite(params.tau)) throw SpecError("atom spec: tau must be > 0");
  if (!(params.diag.variance >= 0.0) || !std::isfinite(params.diag.variance))
    throw SpecError("atom spec: diagonal variance must be finite and >= 0");

  AtomPairSpec spec;
  spec.family = family;
  spec.rho = rho;
  spec.tau = params.tau;
  spec.wigner = params.wigner;
  spec.diag = params.diag;
  return spec;
}

std::pair<double, double> sample_pair(const AtomPairSpec& spec, CounterStream& gen) {
  if (spec.family == AtomFamily::GaussianPair) {
    const double g1 = gen.normal();
    const double g2 = gen.normal();
    if (spec.rho == 1.0) return {g1, g1};
    if (spec.rho == -1.0) return {g1, -g1};
    return {g1, spec.rho * g1 + std::sqrt(1.0 - spec.rho * spec.rho) * g2};
  }
  const double x1 = sample_marginal(spec, gen);
  const double coupling = gen.uniform();
  if (coupling < std::abs(spec.rho)) return {x1, spec.rho > 0.0 ? x1 : -x1};
  return {x1, sample_marginal(spec, gen)};
}

double sample_diagonal(const AtomPairSpec& spec, CounterStream& gen) {
  const double sd = std::sqrt(spec.diag.variance);
  switch (spec.diag.family) {
    case DiagonalFamily::Gaussian:
      return sd * gen.normal();
    case DiagonalFamily::Rademacher:
      return sd * gen.sign();
    case DiagonalFamily::Zero:
      return 0.0;
  }
  return 0.0;
}

double moment_sum(const AtomPairSpec& spec) { return 2.0 * absolute_moment(spec, 2.0 + spec.tau); }

TruncationConstants truncate_spec(const AtomPairSpec& spec, std::size_t n, double delta) {
  if (n == 0) throw SpecError("truncation: N must be >= 1");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw SpecError("truncation: delta must be > 0");
  if (delta * spec.tau >= 1.0) throw SpecError("truncation: delta * tau must be < 1");

  TruncationConstants tc;
  tc.n = n;
  tc.delta = delta;
  tc.threshold = std::pow(static_cast<double>(n), delta);
  const double second = truncated_second_moment(spec, tc.threshold);
  tc.center_1 = tc.center_2 = 0.0;
  const double variance = second - tc.center_1 * tc.center_1;
  if (!(variance >= 0.5)) {
    throw SpecError("truncation: truncated variance " + std::to_string(variance) + " < 1/2 at N = " +
                    std::to_string(n) + "; N is below the admissible range for this law (raise N or delta)");
  }
  tc.scale_1 = tc.scale_2 = std::sqrt(variance);
  const double cross = truncated_cross_moment(spec, tc.threshold) - tc.center_1 * tc.center_2;
  tc.rho_hat = cross / (tc.scale_1 * tc.scale_2);
  return tc;
}

std::pair<double, double> sample_truncated_pair(const AtomPairSpec& spec, const TruncationConstants& tc,
                                                CounterStream& gen) {
  const auto [x1, x2] = sample_pair(spec, gen);
  return {tc.apply_1(x1), tc.apply_2(x2)};
}

std::string to_string(AtomFamily family) {
  switch (family) {
    case AtomFamily::GaussianPair:
      return "gaussian-pair";
    case AtomFamily::RademacherMix:
      return "rademacher-mix";
    case AtomFamily::ParetoSymmetrized:
      return "pareto-symmetrized";
  }
  return "unknown";
}

std::string to_string(DiagonalFamily family) {
  switch (family) {
    case DiagonalFamily::Gaussian:
      return "gaussian";
    case DiagonalFamily::Rademacher:
      return "rademacher";
    case DiagonalFamily::Zero:
      return "zero";
  }
  return "unknown";
}

AtomFamily parse_atom_family(const std::string& name) {
  if (name == "gaussian" || name == "gaussian-pair") return AtomFamily::GaussianPair;
  if (name == "rademacher" || name == "rademacher-mix") return AtomFamily::RademacherMix;
  if (name == "pareto" || name == "pareto-symmetrized") return AtomFamily::ParetoSymmetrized;
  throw SpecError("unknown atom family '" + name + "'");
}

DiagonalFamily parse_diagonal_family(const std::string& name) {
  if (name == "gaussian") return DiagonalFamily::Gaussian;
  if (name == "rademacher") return DiagonalFamily::Rademacher;
  if (name == "zero") return DiagonalFamily::Zero;
  throw SpecError("unknown diagonal family '" + name + "'");
}

void to_json(nlohmann::json& j, const AtomPairSpec& spec) {
  j = nlohmann::json{{"family", to_string(spec.family)},
                     {"rho", spec.rho},
                     {"tau", spec.tau},
                     {"wigner", spec.wigner},
                     {"diag", {{"family", to_string(spec.diag.family)}, {"variance", spec.diag.variance}}}};
}

void from_json(const nlohmann::json& j, AtomPairSpec& spec) {
  static const std::set<std::string> keys{"family", "rho", "tau", "wigner", "diag"};
  if (!j.is_object()) throw SpecError("atom spec: expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!keys.contains(key)) throw SpecError("atom spec: unknown key '" + key + "'");
  try {
    AtomParams params;
    params.tau = j.value("tau", 1.0);
    params.wigner = j.value("wigner", false);
    if (j.contains("diag")) {
      const auto& d = j.at("diag");
      for (const auto& [key, value] : d.items())
        if (key != "family" && key != "variance") throw SpecError("atom spec: unknown diag key '" + key + "'");
      params.diag.family = parse_diagonal_family(d.value("family", std::string("gaussian")));
      params.diag.variance = d.value("variance", 1.0);
    }
    spec = make_atom_pair_spec(parse_atom_family(j.at("family").get<std::string>()), j.value("rho", 0.0),
                               params);
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("atom spec: ") + e.what());
  }
}

}  // namespace espectra
