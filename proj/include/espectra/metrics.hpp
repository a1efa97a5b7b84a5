#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "espectra/dyson.hpp"
#include "espectra/ensembles.hpp"
#include "espectra/spectral.hpp"
#include "espectra/types.hpp"

namespace espectra {

/// Right-continuous empirical distribution function of a finite sample.
class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(std::vector<double> samples);

  /// Fraction of samples <= x.
  double operator()(double x) const;
  /// Fraction of samples < x.
  double left_limit(double x) const;

  std::span<const double> sorted() const { return sorted_; }
  std::size_t size() const { return sorted_.size(); }

 private:
  std::vector<double> sorted_;
};

/// A continuous distribution function.
using CdfFunction = std::function<double(double)>;

/// sup_x |F(x) - G(x)|, evaluated exactly at the jump points.
double ks_distance(const EmpiricalCdf& f, const CdfFunction& g);
double ks_distance(const EmpiricalCdf& f, const EmpiricalCdf& g);

/// Levy distance inf{eps : F(x - eps) - eps <= G(x) <= F(x + eps) + eps}.
/// The defining inequalities are checked exactly at the jump corners of F and
/// eps is bisected to 1e-15.
double levy_distance(const EmpiricalCdf& f, const CdfFunction& g);
double levy_distance(const EmpiricalCdf& f, const EmpiricalCdf& g);

enum class Comparison { AtMost, AtLeast, Below };

struct ReportEntry {
  std::size_t n = 0;
  std::string metric;
  double stat = 0.0;
  double threshold = 0.0;
  Comparison comparison = Comparison::AtMost;
  bool pass = false;
};

/// Outcome of one Monte Carlo experiment. Every statistic is a deterministic
/// function of (params, seeds); only wall_time_ms varies between runs.
struct ExperimentReport {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
  std::vector<ReportEntry> per_n;
  std::vector<std::uint64_t> seeds;
  nlohmann::json extra = nlohmann::json::object();
  double wall_time_ms = 0.0;

  void add(std::size_t n, std::string metric, double stat, double threshold,
           Comparison comparison = Comparison::AtMost);
  bool pass() const;
};

void to_json(nlohmann::json& j, const ExperimentReport& report);
void write_report(const std::filesystem::path& path, const ExperimentReport& report);

// Statistics on pooled eigenvalues.

/// KS distance between the empirical CDF of |lambda| and r^{2/m}.
double radial_ks(const ComplexVector& values, int m);

/// Chi-square uniformity statistic of arg(lambda) over `bins` equal sectors
/// of the upper half plane. Real spectra are conjugate-symmetric, so each
/// conjugate pair is counted once; a real eigenvalue is counted with weight
/// 1/2 in the sector adjacent to its ray.
double angular_chi_square(const ComplexVector& values, int bins = 16);

/// 0.999 quantile of the chi-square law with bins - 1 degrees of freedom.
double angular_threshold(int bins = 16);

struct LawThresholds {
  double radial_ks = 0.05;
  int angular_bins = 16;
  bool check_angles = true;
};

/// Eigenvalues of P_N pooled over trials against F_m. For m = 1 the single
/// factor is checked against the elliptic law instead.
ExperimentReport product_law_report(const ProductSpec& spec, std::size_t trials, const LawThresholds& th = {});

/// Eigenvalues of the linearization Z_N pooled over trials against the
/// circular law. Requires m >= 2.
ExperimentReport circular_law_report(const ProductSpec& spec, std::size_t trials, const LawThresholds& th = {});

struct EllipticThresholds {
  double slack = 1.05;
  double inside_fraction = 0.98;
  double moment_tolerance = 0.03;
};

/// Eigenvalues of Y_N / sqrt(N) for one elliptic matrix against the uniform
/// law on the ellipse with semi-axes 1 + rho, 1 - rho.
ExperimentReport elliptic_law_report(const EnsembleSpec& spec, std::size_t trials,
                                     const EllipticThresholds& th = {});
/// Same for (Y + A) / sqrt(N) of a one-factor product.
ExperimentReport elliptic_law_report(const ProductSpec& spec, std::size_t trials,
                                     const EllipticThresholds& th = {});

/// Produces the mN x mN matrix for trial t.
using MatrixSampler = std::function<RealMatrix(std::uint64_t trial)>;

/// Fraction of trials with sigma_min(M - zI) <= N^{-A}, with the smallest
/// observed sigma_min. `n` is the factor dimension entering N^{-A}.
ExperimentReport lsv_experiment(const MatrixSampler& sampler, std::size_t n, Complex z, double exponent,
                                std::size_t trials);
/// Same on the linearization Z_N of `spec`.
ExperimentReport lsv_experiment(const ProductSpec& spec, Complex z, double exponent, std::size_t trials);

/// Produces X (the mN x mN block-cyclic matrix scaled by 1/sqrt(N)) for
/// dimension N and replicate r.
using LinearizationSampler = std::function<RealMatrix(std::size_t n, std::uint64_t rep)>;

/// Per-N entrywise standard deviation of Gamma_N(q) over replicates; passes
/// when every entry's std shrinks by at least `max_ratio` from the first to
/// the last N.
ExperimentReport concentration_experiment(const LinearizationSampler& sampler, const QPoint& q,
                                          std::span<const std::size_t> n_list, std::size_t reps,
                                          double max_ratio = 0.7);
ExperimentReport concentration_experiment(const ProductSpec& spec, const QPoint& q,
                                          std::span<const std::size_t> n_list, std::size_t reps,
                                          double max_ratio = 0.7);

/// Per-N gap ||mean Gamma_N(q) - Gamma(q)||_max; passes when the gap at the
/// last N is below the gap at the first N.
ExperimentReport expectation_gap_experiment(const LinearizationSampler& sampler, const QPoint& q,
                                            std::span<const std::size_t> n_list, std::size_t reps);
ExperimentReport expectation_gap_experiment(const ProductSpec& spec, const QPoint& q,
                                            std::span<const std::size_t> n_list, std::size_t reps);

struct ScalingReports {
  ExperimentReport concentration;
  ExperimentReport gap;
};

/// Both of the above from one set of replicates.
ScalingReports scaling_experiments(const LinearizationSampler& sampler, const QPoint& q,
                                   std::span<const std::size_t> n_list, std::size_t reps,
                                   double max_ratio = 0.7);
ScalingReports scaling_experiments(const ProductSpec& spec, const QPoint& q,
                                   std::span<const std::size_t> n_list, std::size_t reps,
                                   double max_ratio = 0.7);

/// Sampler for the unperturbed linearization Y_N / sqrt(N) of `spec` rebuilt
/// at dimension N with replicate-specific seeds.
LinearizationSampler linearization_sampler(const ProductSpec& spec);

/// Central difference in s of (1/N) sum_i log sigma_i(M - zI)^2, i.e. of
/// the integral of log x^2 against the symmetrized measure nu_{M - zI}.
/// Throws NumericalError if a singular value vanishes inside the stencil.
double g_empirical(const RealMatrix& m, double s, double t, double h = 1e-4);

/// Monte Carlo estimate of N E[H^{ac}_{12} H^{db}_{21}] for every index
/// tuple, compared against sigma_kernel within `z_max` standard errors.
struct SigmaTuple {
  std::size_t a, c, d, b;
  double mean;
  double standard_error;
  double kernel;
  bool pass;
};

struct SigmaCheck {
  std::vector<SigmaTuple> tuples;
  double max_deviation = 0.0;  // max |mean - kernel| / se over tuples with se > 0
  bool pass = false;
};

SigmaCheck sigma_kernel_check(const ProductSpec& spec, std::size_t samples, double z_max = 5.0);

}  // namespace espectra
