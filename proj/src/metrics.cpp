#include "espectra/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <boost/math/distributions/chi_squared.hpp>

#include "espectra/rng.hpp"
#include "parallel.hpp"

namespace espectra {

using nlohmann::json;

EmpiricalCdf::EmpiricalCdf(std::vector<double> samples) : sorted_(std::move(samples)) {
  if (sorted_.empty()) throw SpecError("empirical cdf: empty sample");
  for (double v : sorted_)
    if (!std::isfinite(v)) throw SpecError("empirical cdf: non-finite sample");
  std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalCdf::operator()(double x) const {
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
  return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

double EmpiricalCdf::left_limit(double x) const {
  const auto it = std::lower_bound(sorted_.begin(), sorted_.end(), x);
  return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

namespace {

using Cdf = std::function<double(double)>;

double sup_difference(const EmpiricalCdf& f, const Cdf& g, const Cdf& g_left, std::span<const double> g_jumps) {
  double d = 0.0;
  auto probe = [&](double x) {
    d = std::max(d, std::abs(f(x) - g(x)));
    d = std::max(d, std::abs(f.left_limit(x) - g_left(x)));
  };
  for (double x : f.sorted()) probe(x);
  for (double x : g_jumps) probe(x);
  return d;
}

// F(x - eps) - eps <= G(x) <= F(x + eps) + eps for all x. Between jumps of F
// both sides are constant, so the extreme cases sit at the jump corners:
// sup of G just left of s_i - eps and G at s_i + eps.
bool levy_holds(const EmpiricalCdf& f, const Cdf& g, const Cdf& g_left, double eps) {
  const auto s = f.sorted();
  const double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (g_left(s[i] - eps) > static_cast<double>(i) / n + eps) return false;
    if (static_cast<double>(i + 1) / n - eps > g(s[i] + eps)) return false;
  }
  return true;
}

double levy_bisect(const EmpiricalCdf& f, const Cdf& g, const Cdf& g_left) {
  if (levy_holds(f, g, g_left, 0.0)) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-15) {
    const double mid = 0.5 * (lo + hi);
    (levy_holds(f, g, g_left, mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

double ks_distance(const EmpiricalCdf& f, const CdfFunction& g) { return sup_difference(f, g, g, {}); }

double ks_distance(const EmpiricalCdf& f, const EmpiricalCdf& g) {
  return sup_difference(
      f, [&](double x) { return g(x); }, [&](double x) { return g.left_limit(x); }, g.sorted());
}

double levy_distance(const EmpiricalCdf& f, const CdfFunction& g) { return levy_bisect(f, g, g); }

double levy_distance(const EmpiricalCdf& f, const EmpiricalCdf& g) {
  return levy_bisect(
      f, [&](double x) { return g(x); }, [&](double x) { return g.left_limit(x); });
}

void ExperimentReport::add(std::size_t n, std::string metric, double stat, double threshold, Comparison comparison) {
  bool ok = false;
  switch (comparison) {
    case Comparison::AtMost: ok = stat <= threshold; break;
    case Comparison::AtLeast: ok = stat >= threshold; break;
    case Comparison::Below: ok = stat < threshold; break;
  }
  per_n.push_back({n, std::move(metric), stat, threshold, comparison, ok});
}

bool ExperimentReport::pass() const {
  return !per_n.empty() && std::all_of(per_n.begin(), per_n.end(), [](const ReportEntry& e) { return e.pass; });
}

namespace {

const char* comparison_name(Comparison c) {
  switch (c) {
    case Comparison::AtMost: return "<=";
    case Comparison::AtLeast: return ">=";
    case Comparison::Below: return "<";
  }
  return "?";
}

}  // namespace

void to_json(json& j, const ExperimentReport& report) {
  json rows = json::array();
  for (const auto& e : report.per_n)
    rows.push_back({{"N", e.n},
                    {"metric", e.metric},
                    {"stat", e.stat},
                    {"threshold", e.threshold},
                    {"comparison", comparison_name(e.comparison)},
                    {"pass", e.pass}});
  j = json{{"name", report.name},     {"params", report.params},
           {"per_N", rows},           {"seeds", report.seeds},
           {"extra", report.extra},   {"wall_time_ms", report.wall_time_ms},
           {"pass", report.pass()}};
}

void write_report(const std::filesystem::path& path, const ExperimentReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << json(report).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

double radial_ks(const ComplexVector& values, int m) {
  std::vector<double> r(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) r[static_cast<std::size_t>(i)] = std::abs(values(i));
  return ks_distance(EmpiricalCdf(std::move(r)), [m](double x) { return radial_cdf(x, m); });
}

double angular_chi_square(const ComplexVector& values, int bins) {
  if (bins < 2) throw SpecError("angular_chi_square: need at least 2 bins");
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  const double width = std::numbers::pi / bins;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const Complex v = values(i);
    if (v.imag() > 0.0) {
      const int k = std::min(bins - 1, static_cast<int>(std::arg(v) / width));
      counts[static_cast<std::size_t>(k)] += 1.0;
    } else if (v.imag() == 0.0) {
      counts[v.real() >= 0.0 ? 0 : static_cast<std::size_t>(bins - 1)] += 0.5;
    }
  }
  double total = 0.0;
  for (double c : counts) total += c;
  if (total == 0.0) throw SpecError("angular_chi_square: no eigenvalues");
  const double expected = total / bins;
  double chi = 0.0;
  for (double c : counts) chi += (c - expected) * (c - expected) / expected;
  return chi;
}

double angular_threshold(int bins) {
  if (bins < 2) throw SpecError("angular_threshold: need at least 2 bins");
  return boost::math::quantile(boost::math::chi_squared(bins - 1), 0.999);
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::vector<std::uint64_t> trial_seeds(const ProductSpec& spec, std::size_t trials) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t t = 0; t < trials; ++t) seeds.push_back(for_trial(spec, t).factors.front().ensemble.seed);
  return seeds;
}

ComplexVector pool(const std::vector<ComplexVector>& parts) {
  Eigen::Index total = 0;
  for (const auto& p : parts) total += p.size();
  ComplexVector out(total);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

template <typename Build>
ExperimentReport law_report(std::string name, const ProductSpec& spec, std::size_t trials, const LawThresholds& th,
                            int radial_m, Build&& build) {
  const auto start = Clock::now();
  validate(spec);
  if (trials == 0) throw SpecError(name + ": trials must be >= 1");
  const auto parts = detail::parallel_map<ComplexVector>(
      trials, [&](std::size_t t) { return eigenvalues(build(for_trial(spec, t))).values; });
  const ComplexVector values = pool(parts);

  ExperimentReport report;
  report.name = std::move(name);
  report.params = {{"spec", spec}, {"trials", trials}, {"radial_exponent_m", radial_m}};
  report.seeds = trial_seeds(spec, trials);
  report.add(spec.n(), "radial_ks", radial_ks(values, radial_m), th.radial_ks);
  if (th.check_angles)
    report.add(spec.n(), "angular_chi_square", angular_chi_square(values, th.angular_bins),
               angular_threshold(th.angular_bins));
  report.extra["eigenvalue_count"] = values.size();
  report.wall_time_ms = elapsed_ms(start);
  return report;
}

}  // namespace

ExperimentReport product_law_report(const ProductSpec& spec, std::size_t trials, const LawThresholds& th) {
  if (spec.m() == 1) return elliptic_law_report(spec, trials);
  return law_report("product-law", spec, trials, th, static_cast<int>(spec.m()),
                    [](const ProductSpec& s) { return build_product(s); });
}

ExperimentReport circular_law_report(const ProductSpec& spec, std::size_t trials, const LawThresholds& th) {
  if (spec.m() < 2) throw SpecError("circular-law: requires m >= 2");
  return law_report("circular-law", spec, trials, th, 1,
                    [](const ProductSpec& s) { return build_block_linearization(s).z; });
}

ExperimentReport elliptic_law_report(const ProductSpec& spec, std::size_t trials, const EllipticThresholds& th) {
  const auto start = Clock::now();
  validate(spec);
  if (spec.m() != 1) throw SpecError("elliptic-law: requires a single factor");
  if (trials == 0) throw SpecError("elliptic-law: trials must be >= 1");
  const double rho = spec.factors.front().ensemble.atom.rho;
  if (!(std::abs(rho) < 1.0)) throw SpecError("elliptic-law: requires |rho| < 1");

  const auto parts = detail::parallel_map<ComplexVector>(
      trials, [&](std::size_t t) { return eigenvalues(build_product(for_trial(spec, t))).values; });
  const ComplexVector values = pool(parts);

  double inside = 0.0, re2 = 0.0, im2 = 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const Complex v = values(i);
    if (elliptic_contains(v, rho, th.slack)) inside += 1.0;
    re2 += v.real() * v.real();
    im2 += v.imag() * v.imag();
  }
  const double count = static_cast<double>(values.size());
  inside /= count;
  re2 /= count;
  im2 /= count;
  const double re2_target = (1.0 + rho) * (1.0 + rho) / 4.0;
  const double im2_target = (1.0 - rho) * (1.0 - rho) / 4.0;

  ExperimentReport report;
  report.name = "elliptic-law";
  report.params = {{"spec", spec}, {"trials", trials}, {"slack", th.slack}};
  report.seeds = trial_seeds(spec, trials);
  report.add(spec.n(), "inside_fraction", inside, th.inside_fraction, Comparison::AtLeast);
  report.add(spec.n(), "re2_error", std::abs(re2 - re2_target), th.moment_tolerance);
  report.add(spec.n(), "im2_error", std::abs(im2 - im2_target), th.moment_tolerance);
  report.extra = {{"mean_re2", re2}, {"mean_im2", im2}, {"re2_target", re2_target}, {"im2_target", im2_target}};
  report.wall_time_ms = elapsed_ms(start);
  return report;
}

ExperimentReport elliptic_law_report(const EnsembleSpec& spec, std::size_t trials, const EllipticThresholds& th) {
  ProductSpec p;
  p.factors.push_back({spec, {}});
  return elliptic_law_report(p, trials, th);
}

namespace {

double sigma_min(const RealMatrix& m, Complex z) {
  if (z.imag() == 0.0) {
    RealMatrix w = m;
    w.diagonal().array() -= z.real();
    return singular_values(w).minCoeff();
  }
  ComplexMatrix w = m.cast<Complex>();
  w.diagonal().array() -= z;
  return singular_values(w).minCoeff();
}

}  // namespace

ExperimentReport lsv_experiment(const MatrixSampler& sampler, std::size_t n, Complex z, double exponent,
                                std::size_t trials) {
  const auto start = Clock::now();
  if (trials == 0) throw SpecError("lsv: trials must be >= 1");
  if (n == 0) throw SpecError("lsv: n must be >= 1");
  const auto sigmas = detail::parallel_map<double>(trials, [&](std::size_t t) { return sigma_min(sampler(t), z); });
  const double bound = std::pow(static_cast<double>(n), -exponent);
  double below = 0.0;
  double smallest = std::numeric_limits<double>::infinity();
  for (double s : sigmas) {
    if (s <= bound) below += 1.0;
    smallest = std::min(smallest, s);
  }

  ExperimentReport report;
  report.name = "lsv";
  report.params = {{"n", n}, {"z", {z.real(), z.imag()}}, {"A", exponent}, {"trials", trials}};
  report.add(n, "fraction_below", below / static_cast<double>(trials), 0.0);
  report.add(n, "min_sigma", smallest, bound, Comparison::AtLeast);
  report.wall_time_ms = elapsed_ms(start);
  return report;
}

ExperimentReport lsv_experiment(const ProductSpec& spec, Complex z, double exponent, std::size_t trials) {
  validate(spec);
  if (spec.m() < 2) throw SpecError("lsv: requires m >= 2");
  auto report = lsv_experiment(
      [&](std::uint64_t t) { return build_block_linearization(for_trial(spec, t)).z; }, spec.n(), z, exponent,
      trials);
  report.params["spec"] = spec;
  report.seeds = trial_seeds(spec, trials);
  return report;
}

LinearizationSampler linearization_sampler(const ProductSpec& spec) {
  validate(spec);
  if (spec.m() < 2) throw SpecError("linearization sampler: requires m >= 2");
  return [spec](std::size_t n, std::uint64_t rep) {
    ProductSpec s = spec;
    for (auto& f : s.factors) {
      f.ensemble.n = n;
      f.perturbation = {};
    }
    s = for_trial(s, hash_combine(n, rep));
    const auto lin = build_block_linearization(s);
    return RealMatrix(lin.y / std::sqrt(static_cast<double>(n)));
  };
}

namespace {

struct GammaMoments {
  ComplexMatrix mean;
  RealMatrix std;
};

GammaMoments gamma_moments(const LinearizationSampler& sampler, const QPoint& q, std::size_t n, std::size_t reps) {
  const auto samples = detail::parallel_map<ComplexMatrix>(reps, [&](std::size_t r) {
    const RealMatrix x = sampler(n, r);
    if (x.rows() != static_cast<Eigen::Index>(q.m * n) || x.cols() != x.rows())
      throw SpecError("scaling: sampler returned a matrix of the wrong size");
    return gamma_n_linearized(x, q).gamma.entries;
  });
  const Eigen::Index d = static_cast<Eigen::Index>(2 * q.m);
  GammaMoments out{ComplexMatrix::Zero(d, d), RealMatrix::Zero(d, d)};
  for (const auto& s : samples) out.mean += s;
  out.mean /= static_cast<double>(reps);
  for (const auto& s : samples) out.std += (s - out.mean).cwiseAbs2();
  out.std = (out.std / static_cast<double>(reps - 1)).cwiseSqrt();
  return out;
}

// Largest entrywise std(N) / std(first) over entries that fluctuate at the
// first N; entries at round-off level there carry no scaling information.
double std_ratio(const RealMatrix& first, const RealMatrix& later) {
  const double floor = 1e-10 * first.maxCoeff();
  double ratio = 0.0;
  for (Eigen::Index i = 0; i < first.size(); ++i) {
    if (first(i) <= floor || first(i) == 0.0) continue;
    ratio = std::max(ratio, later(i) / first(i));
  }
  return ratio;
}

}  // namespace

ScalingReports scaling_experiments(const LinearizationSampler& sampler, const QPoint& q,
                                   std::span<const std::size_t> n_list, std::size_t reps, double max_ratio) {
  const auto start = Clock::now();
  validate(q);
  if (q.m < 2) throw SpecError("scaling: requires m >= 2");
  if (q.eta.imag() < 0.1) throw SpecError("scaling: requires Im(eta) >= 0.1");
  if (n_list.empty()) throw SpecError("scaling: empty N list");
  if (reps < 2) throw SpecError("scaling: reps must be >= 2");
  const ComplexMatrix limit = gamma_closed(q).entries;

  std::vector<GammaMoments> moments;
  for (std::size_t n : n_list) moments.push_back(gamma_moments(sampler, q, n, reps));

  json params = {{"m", q.m},
                 {"eta", {q.eta.real(), q.eta.imag()}},
                 {"z", {q.z.real(), q.z.imag()}},
                 {"N_list", std::vector<std::size_t>(n_list.begin(), n_list.end())},
                 {"reps", reps}};
  ScalingReports out;
  out.concentration.name = "concentration";
  out.gap.name = "gap";
  out.concentration.params = params;
  out.gap.params = params;

  std::vector<double> max_std, gaps, std_steps, gap_steps;
  for (const auto& mo : moments) {
    max_std.push_back(mo.std.maxCoeff());
    gaps.push_back((mo.mean - limit).cwiseAbs().maxCoeff());
  }
  for (std::size_t i = 0; i < moments.size(); ++i) {
    const bool last = i + 1 == moments.size();
    const double ratio = std_ratio(moments.front().std, moments[i].std);
    out.concentration.add(n_list[i], "std_ratio_vs_first", ratio, last ? max_ratio : 1.0);
    out.gap.add(n_list[i], "gap", gaps[i], gaps.front(), i == 0 ? Comparison::AtMost : Comparison::Below);
    if (i > 0) {
      std_steps.push_back(std_ratio(moments[i - 1].std, moments[i].std));
      gap_steps.push_back(gaps[i - 1] > 0.0 ? gaps[i] / gaps[i - 1] : 0.0);
    }
  }
  out.concentration.extra = {{"max_entry_std", max_std}, {"decay_ratios", std_steps}};
  out.gap.extra = {{"gap", gaps}, {"decay_ratios", gap_steps}};
  out.concentration.wall_time_ms = out.gap.wall_time_ms = elapsed_ms(start);
  return out;
}

ScalingReports scaling_experiments(const ProductSpec& spec, const QPoint& q, std::span<const std::size_t> n_list,
                                   std::size_t reps, double max_ratio) {
  if (spec.m() != q.m) throw SpecError("scaling: q.m must equal the number of factors");
  auto out = scaling_experiments(linearization_sampler(spec), q, n_list, reps, max_ratio);
  for (auto* r : {&out.concentration, &out.gap}) {
    r->params["spec"] = spec;
    r->seeds = {spec.factors.front().ensemble.seed};
  }
  return out;
}

ExperimentReport concentration_experiment(const LinearizationSampler& sampler, const QPoint& q,
                                          std::span<const std::size_t> n_list, std::size_t reps, double max_ratio) {
  return scaling_experiments(sampler, q, n_list, reps, max_ratio).concentration;
}

ExperimentReport concentration_experiment(const ProductSpec& spec, const QPoint& q,
                                          std::span<const std::size_t> n_list, std::size_t reps, double max_ratio) {
  return scaling_experiments(spec, q, n_list, reps, max_ratio).concentration;
}

ExperimentReport expectation_gap_experiment(const LinearizationSampler& sampler, const QPoint& q,
                                            std::span<const std::size_t> n_list, std::size_t reps) {
  return scaling_experiments(sampler, q, n_list, reps).gap;
}

ExperimentReport expectation_gap_experiment(const ProductSpec& spec, const QPoint& q,
                                            std::span<const std::size_t> n_list, std::size_t reps) {
  return scaling_experiments(spec, q, n_list, reps).gap;
}

namespace {

double log_det_gram(const RealMatrix& m, double s, double t) {
  RealVector sv;
  if (t == 0.0) {
    RealMatrix w = m;
    w.diagonal().array() -= s;
    sv = singular_values(w);
  } else {
    ComplexMatrix w = m.cast<Complex>();
    w.diagonal().array() -= Complex(s, t);
    sv = singular_values(w);
  }
  const double cutoff = std::numeric_limits<double>::epsilon() * static_cast<double>(m.rows()) *
                        std::max(sv.maxCoeff(), std::numeric_limits<double>::min());
  if (!(sv.minCoeff() > cutoff))
    throw NumericalError("g_empirical: M - zI is singular at z = " + std::to_string(s) + "+" + std::to_string(t) +
                         "i; perturb z");
  return 2.0 * sv.array().log().sum() / static_cast<double>(m.rows());
}

}  // namespace

double g_empirical(const RealMatrix& m, double s, double t, double h) {
  if (m.rows() != m.cols() || m.rows() == 0) throw SpecError("g_empirical: matrix must be square and non-empty");
  if (!(h > 0.0) || !std::isfinite(h)) throw SpecError("g_empirical: step h must be positive and finite");
  return (log_det_gram(m, s + h, t) - log_det_gram(m, s - h, t)) / (2.0 * h);
}

SigmaCheck sigma_kernel_check(const ProductSpec& spec, std::size_t samples, double z_max) {
  validate(spec);
  if (spec.m() < 2) throw SpecError("sigma check: requires m >= 2");
  if (spec.n() < 2) throw SpecError("sigma check: requires N >= 2");
  if (samples < 2) throw SpecError("sigma check: samples must be >= 2");
  std::vector<double> rhos;
  for (const auto& f : spec.factors) rhos.push_back(f.ensemble.atom.rho);
  const SigmaSpec sigma = make_sigma_spec(rhos);
  const std::size_t blocks = 2 * spec.m();
  const std::size_t tuples = blocks * blocks * blocks * blocks;
  const Eigen::Index n = static_cast<Eigen::Index>(spec.n());
  const double scale = static_cast<double>(n);

  const auto draws = detail::parallel_map<std::vector<double>>(samples, [&](std::size_t s) {
    ProductSpec unperturbed = for_trial(spec, s);
    for (auto& f : unperturbed.factors) f.perturbation = {};
    const auto lin = build_block_linearization(unperturbed);
    const RealMatrix h = hermitize(RealMatrix(lin.y / std::sqrt(scale)));
    std::vector<double> v(tuples);
    std::size_t k = 0;
    for (std::size_t a = 0; a < blocks; ++a)
      for (std::size_t c = 0; c < blocks; ++c)
        for (std::size_t d = 0; d < blocks; ++d)
          for (std::size_t b = 0; b < blocks; ++b)
            v[k++] = scale * h(static_cast<Eigen::Index>(a) * n, static_cast<Eigen::Index>(c) * n + 1) *
                     h(static_cast<Eigen::Index>(d) * n + 1, static_cast<Eigen::Index>(b) * n);
    return v;
  });

  SigmaCheck out;
  out.pass = true;
  std::size_t k = 0;
  const double count = static_cast<double>(samples);
  for (std::size_t a = 0; a < blocks; ++a)
    for (std::size_t c = 0; c < blocks; ++c)
      for (std::size_t d = 0; d < blocks; ++d)
        for (std::size_t b = 0; b < blocks; ++b, ++k) {
          double mean = 0.0;
          for (const auto& v : draws) mean += v[k];
          mean /= count;
          double var = 0.0;
          for (const auto& v : draws) var += (v[k] - mean) * (v[k] - mean);
          const double se = std::sqrt(var / (count - 1.0) / count);
          const double kernel = sigma_kernel(sigma, a, c, d, b);
          const double dev = std::abs(mean - kernel);
          bool ok;
          if (se > 0.0) {
            out.max_deviation = std::max(out.max_deviation, dev / se);
            ok = dev <= z_max * se;
          } else {
            ok = dev <= 1e-12;
          }
          out.pass = out.pass && ok;
          out.tuples.push_back({a, c, d, b, mean, se, kernel, ok});
        }
  return out;
}

}  // namespace espectra
