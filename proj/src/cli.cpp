#include "espectra/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <list>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "espectra/dyson.hpp"
#include "espectra/ensembles.hpp"
#include "espectra/metrics.hpp"
#include "espectra/spectral.hpp"

namespace espectra {

using nlohmann::json;

namespace {

double parse_real(std::string_view text, const std::string& whole) {
  double v = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last || !std::isfinite(v))
    throw SpecError("cannot parse number '" + whole + "'");
  return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

}  // namespace

Complex parse_complex(const std::string& text) {
  std::string s;
  for (char c : text)
    if (c != ' ') s.push_back(c);
  if (s.empty()) throw SpecError("cannot parse complex number ''");
  if (s.back() != 'i') return {parse_real(s, text), 0.0};
  s.pop_back();
  // Split before the last sign that is not a leading sign or an exponent sign.
  std::size_t cut = std::string::npos;
  for (std::size_t k = s.size(); k-- > 1;) {
    if ((s[k] == '+' || s[k] == '-') && s[k - 1] != 'e' && s[k - 1] != 'E') {
      cut = k;
      break;
    }
  }
  const std::string re = cut == std::string::npos ? "" : s.substr(0, cut);
  std::string im = cut == std::string::npos ? s : s.substr(cut);
  if (im.empty() || im == "+") im = "1";
  if (im == "-") im = "-1";
  return {re.empty() ? 0.0 : parse_real(re, text), parse_real(im, text)};
}

std::uint64_t parse_seed(const std::string& text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw SpecError("seed must be a decimal 64-bit unsigned integer (got '" + text + "')");
  return v;
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) out.push_back(parse_real(part, text));
  if (out.empty()) throw SpecError("empty list");
  return out;
}

namespace {

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& part : split(text, ',')) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (part.empty() || ec != std::errc() || ptr != part.data() + part.size())
      throw SpecError("cannot parse size list '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) throw SpecError("empty list");
  return out;
}

template <typename T>
std::vector<T> broadcast(std::vector<T> values, std::size_t m, const char* what) {
  if (values.size() == 1) values.resize(m, values.front());
  if (values.size() != m)
    throw SpecError(std::string(what) + ": expected 1 or " + std::to_string(m) + " values, got " +
                    std::to_string(values.size()));
  return values;
}

// Flags describing a product of m elliptic factors.
struct ProductFlags {
  std::size_t m = 1;
  std::size_t n = 256;
  std::string atoms = "gaussian";
  std::string rho = "0";
  std::string mean = "0";
  std::string diag = "gaussian";
  double diag_variance = 1.0;
  double tau = 1.0;
  bool wigner = false;
  bool truncated = false;
  double delta = 0.1;
  std::string seed = "0";

  void add_to(CLI::App* app, std::size_t default_m) {
    m = default_m;
    app->add_option("--m", m, "number of factors")->capture_default_str();
    app->add_option("--n", n, "factor dimension N")->capture_default_str();
    app->add_option("--atoms", atoms, "atom family per factor: gaussian, rademacher, pareto (comma list)")
        ->capture_default_str();
    app->add_option("--rho", rho, "pair correlation per factor (comma list)")->capture_default_str();
    app->add_option("--mean", mean, "constant-mean perturbation per factor (comma list)")->capture_default_str();
    app->add_option("--diag", diag, "diagonal law: gaussian, rademacher, zero")->capture_default_str();
    app->add_option("--diag-variance", diag_variance, "diagonal variance")->capture_default_str();
    app->add_option("--tau", tau, "moment surplus tau > 0")->capture_default_str();
    app->add_flag("--wigner", wigner, "use the symmetric path for factors with |rho| = 1");
    app->add_flag("--truncated", truncated, "truncate entries at N^delta and zero the diagonal");
    app->add_option("--delta", delta, "truncation exponent")->capture_default_str();
    app->add_option("--seed", seed, "master seed (decimal u64)")->capture_default_str();
  }

  ProductSpec spec() const {
    if (m == 0) throw SpecError("--m must be >= 1");
    const auto families = broadcast(split(atoms, ','), m, "--atoms");
    const auto rhos = broadcast(parse_real_list(rho), m, "--rho");
    const auto means = broadcast(parse_real_list(mean), m, "--mean");
    AtomParams params;
    params.tau = tau;
    params.diag = {parse_diagonal_family(diag), diag_variance};
    std::vector<AtomPairSpec> pairs;
    for (std::size_t k = 0; k < m; ++k) {
      AtomParams p = params;
      p.wigner = wigner && std::abs(rhos[k]) == 1.0;
      pairs.push_back(make_atom_pair_spec(parse_atom_family(families[k]), rhos[k], p));
    }
    ProductSpec s = make_product_spec(pairs, n, parse_seed(seed));
    for (std::size_t k = 0; k < m; ++k) {
      s.factors[k].ensemble.truncated = truncated;
      s.factors[k].ensemble.delta = delta;
      if (means[k] != 0.0) {
        s.factors[k].perturbation.kind = PerturbationKind::ConstantMean;
        s.factors[k].perturbation.mean = means[k];
      }
    }
    validate(s);
    return s;
  }
};

void print_provenance(std::ostream& out, std::uint64_t hash, std::uint64_t seed) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "provenance spec_hash=%016llx seed=%llu", static_cast<unsigned long long>(hash),
                static_cast<unsigned long long>(seed));
  out << buf << '\n';
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

bool wants_json(const std::string& format, const std::filesystem::path& path) {
  if (format == "json") return true;
  if (format == "csv") return false;
  if (!format.empty()) throw SpecError("--format must be csv or json");
  return path.extension() == ".json";
}

int report_exit(const ExperimentReport& report, const std::string& path, std::ostream& out) {
  if (!path.empty()) write_report(path, report);
  for (const auto& e : report.per_n) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s N=%zu %s=%.6g threshold=%.6g %s", report.name.c_str(), e.n, e.metric.c_str(),
                  e.stat, e.threshold, e.pass ? "pass" : "FAIL");
    out << buf << '\n';
  }
  return report.pass() ? kExitOk : kExitThreshold;
}

// One parse of the command line. Options bind to members, so a session must
// stay alive while its action runs.
struct Session {
  CLI::App app{"Spectra of products of elliptic random matrices", "espectra"};
  std::function<int()> action;
  std::ostream* out = nullptr;

  int threads = 0;
  std::string config;

  std::list<ProductFlags> products;  // one block per subcommand, stable addresses
  std::list<std::size_t> trial_counts;
  std::string ensemble = "elliptic";
  std::string output;
  std::string input;
  std::string format;
  std::string kind = "eigen";
  std::string z = "0";
  std::string eta = "1i";
  std::string rhos = "0";
  std::string report;
  double ks_threshold = 0.05;
  std::string n_list = "128,256,512";
  std::size_t reps = 50;
  double max_ratio = 0.7;
  double exponent = 10.0;
  double eps = 1e-4;
  std::size_t points = 4001;
  double damping = 0.5;
  double tol = 1e-12;
  std::size_t max_iter = 10000;

  explicit Session(std::ostream& o) : out(&o) {
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--threads", threads, "worker threads (default: ESPECTRA_THREADS or all cores)");
    app.add_option("--config", config, "JSON file with flag values; command-line flags win");
    add_generate();
    add_spectrum();
    add_verify();
    add_dyson();
    add_density();
    add_lsv();
  }

  void add_generate() {
    auto* c = app.add_subcommand("generate", "sample a matrix and write it to a file");
    auto& product = products.emplace_back();
    product.add_to(c, 1);
    c->add_option("--ensemble", ensemble, "elliptic (Y + A), product (P_N) or linearization (Z_N)")
        ->capture_default_str();
    c->add_option("--out", output, "output file (.csv, or .bin/.espm for binary)")->required();
    c->callback([this, &product] {
      action = [this, &product] {
        const ProductSpec spec = product.spec();
        const RealMatrix m = sample(spec);
        write_matrix(output, m);
        print_provenance(*out, spec_hash(json{{"ensemble", ensemble}, {"spec", spec}}),
                         spec.factors.front().ensemble.seed);
        return int{kExitOk};
      };
    });
  }

  RealMatrix sample(const ProductSpec& spec) const {
    if (ensemble == "elliptic") {
      if (spec.m() != 1) throw SpecError("--ensemble elliptic takes a single factor (--m 1)");
      const Factors f = sample_factors(spec);
      return f.y.front() + f.a.front();
    }
    if (ensemble == "product") return build_product(spec);
    if (ensemble == "linearization") return build_block_linearization(spec).z;
    throw SpecError("--ensemble must be elliptic, product or linearization");
  }

  void add_spectrum() {
    auto* c = app.add_subcommand("spectrum", "eigenvalues or singular values of a matrix");
    auto& product = products.emplace_back();
    product.add_to(c, 1);
    c->add_option("--ensemble", ensemble, "matrix to sample when --in is absent")->capture_default_str();
    c->add_option("--in", input, "read the matrix from a file instead of sampling");
    c->add_option("--kind", kind, "eigen or singular")->capture_default_str();
    c->add_option("--z", z, "shift for singular values of M - zI, as a+bi")->capture_default_str();
    c->add_option("--out", output, "output file")->required();
    c->add_option("--format", format, "csv or json (default: from extension)");
    c->callback([this, &product] {
      action = [this, &product] {
        SpectralSample s;
        if (kind != "eigen" && kind != "singular") throw SpecError("--kind must be eigen or singular");
        const bool as_json = wants_json(format, output);
        RealMatrix m;
        if (input.empty()) {
          const ProductSpec spec = product.spec();
          m = sample(spec);
          const std::uint64_t hash = spec_hash(json{{"ensemble", ensemble}, {"spec", spec}});
          print_provenance(*out, hash, spec.factors.front().ensemble.seed);
          s = kind == "eigen" ? eigenvalues(m) : nu_measure(m, parse_complex(z));
          s.provenance = {hash, spec.factors.front().ensemble.seed};
        } else {
          m = read_matrix(input);
          s = kind == "eigen" ? eigenvalues(m) : nu_measure(m, parse_complex(z));
        }
        if (as_json) {
          json values = json::array();
          for (Eigen::Index i = 0; i < s.values.size(); ++i)
            values.push_back({s.values(i).real(), s.values(i).imag()});
          write_text(output, json{{"kind", kind}, {"n", s.n}, {"values", values}}.dump() + "\n");
        } else {
          write_sample_csv(output, s);
        }
        return int{kExitOk};
      };
    });
  }

  void add_verify() {
    auto* v = app.add_subcommand("verify", "Monte Carlo checks against the limit laws");
    v->require_subcommand(1);
    auto common = [this](CLI::App* c, std::size_t default_m, std::size_t default_trials) -> ProductFlags& {
      auto& product = products.emplace_back();
      product.add_to(c, default_m);
      auto& trials = trial_counts.emplace_back(default_trials);
      c->add_option("--trials", trials, "independent trials")->capture_default_str();
      c->add_option("--report", report, "write the JSON report here");
      return product;
    };
    auto* prod = v->add_subcommand("product-law", "pooled eigenvalues of P_N against F_m");
    auto& prod_flags = common(prod, 2, 20);
    auto& prod_trials = trial_counts.back();
    prod->add_option("--ks-threshold", ks_threshold, "radial KS threshold")->capture_default_str();
    prod->callback([this, &product = prod_flags, &trials = prod_trials] {
      action = [this, &product, &trials] {
        return report_exit(product_law_report(product.spec(), trials, {ks_threshold, 16, true}), report, *out);
      };
    });
    auto* circ = v->add_subcommand("circular-law", "pooled eigenvalues of Z_N against the circular law");
    auto& circ_flags = common(circ, 3, 10);
    auto& circ_trials = trial_counts.back();
    circ->add_option("--ks-threshold", ks_threshold, "radial KS threshold")->capture_default_str();
    circ->callback([this, &product = circ_flags, &trials = circ_trials] {
      action = [this, &product, &trials] {
        return report_exit(circular_law_report(product.spec(), trials, {ks_threshold, 16, true}), report, *out);
      };
    });
    auto* ell = v->add_subcommand("elliptic-law", "eigenvalues of one elliptic matrix against the ellipse law");
    auto& ell_flags = common(ell, 1, 5);
    auto& ell_trials = trial_counts.back();
    ell->callback([this, &product = ell_flags, &trials = ell_trials] {
      action = [this, &product, &trials] { return report_exit(elliptic_law_report(product.spec(), trials), report, *out); };
    });
    for (const char* name : {"concentration", "gap"}) {
      const bool conc = std::string(name) == "concentration";
      auto* c = v->add_subcommand(name, conc ? "fluctuation decay of Gamma_N" : "decay of |E Gamma_N - Gamma|");
      auto& product = common(c, 2, 0);
      c->remove_option(c->get_option("--trials"));
      c->add_option("--z", z, "spectral parameter z, as a+bi")->capture_default_str();
      c->add_option("--eta", eta, "spectral parameter eta, as a+bi")->capture_default_str();
      c->add_option("--n-list", n_list, "comma-separated N values")->capture_default_str();
      c->add_option("--reps", reps, "replicates per N")->capture_default_str();
      if (conc) c->add_option("--max-ratio", max_ratio, "std ratio threshold")->capture_default_str();
      c->callback([this, conc, &product] {
        action = [this, conc, &product] {
          const ProductSpec spec = product.spec();
          const QPoint q{parse_complex(eta), parse_complex(z), spec.m()};
          const auto ns = parse_size_list(n_list);
          const auto r = scaling_experiments(spec, q, ns, reps, max_ratio);
          return report_exit(conc ? r.concentration : r.gap, report, *out);
        };
      });
    }
  }

  void add_dyson() {
    auto* d = app.add_subcommand("dyson", "deterministic equations for Gamma(q)");
    d->require_subcommand(1);
    auto* s = d->add_subcommand("solve", "solve the matrix fixed-point equation");
    auto& product = products.emplace_back();
    product.m = 2;
    s->add_option("--m", product.m, "number of factors")->capture_default_str();
    s->add_option("--z", z, "spectral parameter z, as a+bi")->capture_default_str();
    s->add_option("--eta", eta, "spectral parameter eta, as a+bi")->capture_default_str();
    s->add_option("--rho", rhos, "pair correlations (comma list, 1 or m values)")->capture_default_str();
    s->add_option("--damping", damping, "initial damping")->capture_default_str();
    s->add_option("--tol", tol, "residual tolerance")->capture_default_str();
    s->add_option("--max-iter", max_iter, "iteration cap")->capture_default_str();
    s->add_option("--format", format, "csv or json")->capture_default_str();
    s->add_option("--out", output, "also write the result as JSON");
    s->callback([this, &product] {
      action = [this, &product] {
        const std::size_t m = product.m;
        const QPoint q{parse_complex(eta), parse_complex(z), m};
        validate(q);
        const SigmaSpec sigma = make_sigma_spec(broadcast(parse_real_list(rhos), m, "--rho"));
        const FixedPointResult r = solve_fixed_point(q, sigma, {damping, tol, static_cast<int>(max_iter)});
        if (!output.empty()) write_text(output, json(r).dump(2) + "\n");
        if (format == "json") {
          *out << json(r).dump(2) << '\n';
        } else if (format.empty() || format == "csv") {
          char buf[128];
          std::snprintf(buf, sizeof buf, "converged=%s iterations=%d residual=%.3e", r.converged ? "true" : "false",
                        r.iterations, r.residual);
          *out << buf << "\na,b,re,im\n";
          const auto& g = r.gamma.entries;
          for (Eigen::Index a = 0; a < g.rows(); ++a)
            for (Eigen::Index b = 0; b < g.cols(); ++b) {
              std::snprintf(buf, sizeof buf, "%td,%td,%.17g,%.17g", a, b, g(a, b).real() + 0.0, g(a, b).imag() + 0.0);
              *out << buf << '\n';
            }
        } else {
          throw SpecError("--format must be csv or json");
        }
        if (!r.converged)
          throw NumericalError("dyson solve: no convergence within " + std::to_string(max_iter) + " iterations");
        return int{kExitOk};
      };
    });
  }

  void add_density() {
    auto* c = app.add_subcommand("density", "density of nu_z by Stieltjes inversion");
    c->add_option("--z", z, "spectral parameter z, as a+bi")->capture_default_str();
    c->add_option("--eps", eps, "distance above the real axis")->capture_default_str();
    c->add_option("--points", points, "grid points on [-(2+2|z|), 2+2|z|]")->capture_default_str();
    c->add_option("--out", output, "output file (stdout when absent)");
    c->add_option("--format", format, "csv or json (default: from extension)");
    c->callback([this] {
      action = [this] {
        const DensityCurve curve = invert_stieltjes(parse_complex(z), eps, points);
        if (output.empty()) {
          *out << "x,rho\n";
          char buf[80];
          for (Eigen::Index i = 0; i < curve.x.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g", curve.x(i), curve.rho(i));
            *out << buf << '\n';
          }
          return int{kExitOk};
        }
        if (wants_json(format, output)) {
          const std::vector<double> x(curve.x.data(), curve.x.data() + curve.x.size());
          const std::vector<double> rho(curve.rho.data(), curve.rho.data() + curve.rho.size());
          write_text(output, json{{"z", {curve.z.real(), curve.z.imag()}}, {"eps", curve.eps}, {"x", x}, {"rho", rho}}
                                     .dump() +
                                 "\n");
        } else {
          write_density_csv(output, curve);
        }
        Eigen::Index mid = 0;
        curve.x.cwiseAbs().minCoeff(&mid);
        char buf[96];
        std::snprintf(buf, sizeof buf, "rho(%.6g)=%.6f", curve.x(mid), curve.rho(mid));
        *out << buf << '\n';
        return int{kExitOk};
      };
    });
  }

  void add_lsv() {
    auto* c = app.add_subcommand("lsv", "least singular value of Z_N - zI over trials");
    auto& product = products.emplace_back();
    product.add_to(c, 2);
    auto& trials = trial_counts.emplace_back(100);
    c->add_option("--trials", trials, "independent trials")->capture_default_str();
    c->add_option("--z", z, "shift, as a+bi")->capture_default_str();
    c->add_option("--A", exponent, "threshold exponent: counts sigma_min <= N^-A")->capture_default_str();
    c->add_option("--report", report, "write the JSON report here");
    c->callback([this, &product, &trials] {
      action = [this, &product, &trials] {
        return report_exit(lsv_experiment(product.spec(), parse_complex(z), exponent, trials), report, *out);
      };
    });
  }
};

CLI::App* leaf_subcommand(CLI::App* app) {
  for (;;) {
    const auto subs = app->get_subcommands();
    if (subs.empty()) return app;
    app = subs.front();
  }
}

CLI::Option* find_option(CLI::App* leaf, const std::string& key) {
  for (CLI::App* a = leaf; a != nullptr; a = a->get_parent()) {
    if (auto* opt = a->get_option_no_throw("--" + key)) return opt;
  }
  return nullptr;
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_float()) return v.dump();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  throw SpecError("config: unsupported value " + v.dump());
}

// Command-line tokens for config keys the command line left unset.
std::vector<std::string> config_tokens(Session& first) {
  std::ifstream f(first.config);
  if (!f) throw IoError("cannot open config " + first.config);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw SpecError("config: invalid JSON in " + first.config + ": " + e.what());
  }
  if (!j.is_object()) throw SpecError("config: top level must be an object");
  CLI::App* leaf = leaf_subcommand(&first.app);
  std::vector<std::string> tokens;
  for (const auto& [key, value] : j.items()) {
    CLI::Option* opt = key == "config" ? nullptr : find_option(leaf, key);
    if (opt == nullptr) throw SpecError("config: unknown key '" + key + "' for " + leaf->get_name());
    if (opt->count() > 0) continue;
    if (opt->get_expected_max() == 0) {
      if (!value.is_boolean()) throw SpecError("config: '" + key + "' must be true or false");
      if (value.get<bool>()) tokens.push_back("--" + key);
      continue;
    }
    std::string text;
    if (value.is_array()) {
      for (const auto& item : value) text += (text.empty() ? "" : ",") + scalar_text(item);
    } else {
      text = scalar_text(value);
    }
    tokens.push_back("--" + key);
    tokens.push_back(text);
  }
  return tokens;
}

void parse(Session& s, std::vector<std::string> args) {
  std::reverse(args.begin(), args.end());
  s.app.parse(args);
}

void apply_threads(const Session& s) {
  int threads = s.threads;
  if (s.app.get_option("--threads")->count() == 0) {
    if (const char* env = std::getenv("ESPECTRA_THREADS"); env != nullptr && *env != '\0') {
      const std::string text(env);
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), threads);
      if (ec != std::errc() || ptr != text.data() + text.size())
        throw SpecError("ESPECTRA_THREADS must be a positive integer");
      if (threads < 1) throw SpecError("ESPECTRA_THREADS must be a positive integer");
    }
  } else if (threads < 1) {
    throw SpecError("--threads must be >= 1");
  }
  if (threads >= 1) set_thread_count(threads);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto session = std::make_unique<Session>(out);
  try {
    try {
      parse(*session, args);
      if (!session->config.empty()) {
        auto extra = config_tokens(*session);
        if (!extra.empty()) {
          std::vector<std::string> merged = args;
          merged.insert(merged.end(), extra.begin(), extra.end());
          session = std::make_unique<Session>(out);
          parse(*session, merged);
        }
      }
    } catch (const CLI::ParseError& e) {
      const int code = session->app.exit(e, out, err);
      return code == 0 ? kExitOk : kExitConfig;
    }
    apply_threads(*session);
    return session->action();
  } catch (const SpecError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace espectra
