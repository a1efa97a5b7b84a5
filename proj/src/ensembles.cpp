#include "espectra/ensembles.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "espectra/rng.hpp"

namespace espectra {

void validate(const EnsembleSpec& spec) {
  if (spec.n < 2) throw SpecError("ensemble: N must be >= 2");
  // Re-run the atom validation in case the spec was assembled by hand.
  AtomParams params{spec.atom.tau, spec.atom.wigner, spec.atom.diag};
  make_atom_pair_spec(spec.atom.family, spec.atom.rho, params);
  if (spec.truncated) truncate_spec(spec.atom, spec.n, spec.delta);
}

RealMatrix build_elliptic(const EnsembleSpec& spec) {
  validate(spec);
  const auto n = static_cast<Eigen::Index>(spec.n);
  RealMatrix y(n, n);

  TruncationConstants tc;
  if (spec.truncated) tc = truncate_spec(spec.atom, spec.n, spec.delta);

#pragma omp parallel for schedule(dynamic, 8)
  for (Eigen::Index i = 0; i < n; ++i) {
    CounterStream diag(entry_stream_key(spec.seed, spec.factor, i, i));
    y(i, i) = spec.truncated ? 0.0 : sample_diagonal(spec.atom, diag);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      CounterStream gen(entry_stream_key(spec.seed, spec.factor, i, j));
      const auto [x1, x2] =
          spec.truncated ? sample_truncated_pair(spec.atom, tc, gen) : sample_pair(spec.atom, gen);
      y(i, j) = x1;
      y(j, i) = x2;
    }
  }
  return y;
}

RealMatrix build_perturbation(const PerturbationSpec& spec, std::size_t n) {
  if (!(spec.epsilon > 0.0)) throw SpecError("perturbation: epsilon must be > 0");
  const auto dim = static_cast<Eigen::Index>(n);
  RealMatrix a;
  Eigen::Index rank = 0;
  switch (spec.kind) {
    case PerturbationKind::Zero:
      a = RealMatrix::Zero(dim, dim);
      break;
    case PerturbationKind::ConstantMean:
      if (!std::isfinite(spec.mean)) throw SpecError("perturbation: mean must be finite");
      a = RealMatrix::Constant(dim, dim, spec.mean);
      rank = spec.mean == 0.0 ? 0 : 1;
      break;
    case PerturbationKind::Explicit:
      if (spec.entries.rows() != dim || spec.entries.cols() != dim)
        throw SpecError("perturbation: explicit entries must be N x N");
      if (!spec.entries.allFinite()) throw SpecError("perturbation: explicit entries must be finite");
      a = spec.entries;
      rank = Eigen::ColPivHouseholderQR<RealMatrix>(a).rank();
      break;
  }

  const double nd = static_cast<double>(n);
  const double rank_limit = spec.rank_bound * std::pow(nd, 1.0 - spec.epsilon);
  if (static_cast<double>(rank) > rank_limit) {
    throw SpecError("perturbation: rank " + std::to_string(rank) + " exceeds the O(N^(1-epsilon)) budget " +
                    std::to_string(rank_limit));
  }
  const double hs2 = a.squaredNorm();
  if (hs2 > spec.hs_norm_bound * nd * nd) {
    throw SpecError("perturbation: squared Hilbert-Schmidt norm " + std::to_string(hs2) +
                    " exceeds the O(N^2) budget " + std::to_string(spec.hs_norm_bound * nd * nd));
  }
  return a;
}

ProductSpec make_product_spec(std::span<const AtomPairSpec> atoms, std::size_t n, std::uint64_t seed) {
  ProductSpec spec;
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    FactorSpec f;
    f.ensemble.n = n;
    f.ensemble.atom = atoms[k];
    f.ensemble.seed = seed;
    f.ensemble.factor = k;
    spec.factors.push_back(f);
  }
  validate(spec);
  return spec;
}

ProductSpec for_trial(const ProductSpec& spec, std::uint64_t trial) {
  ProductSpec out = spec;
  for (auto& f : out.factors) f.ensemble.seed = hash_combine(f.ensemble.seed, trial);
  return out;
}

void validate(const ProductSpec& spec) {
  if (spec.factors.empty()) throw SpecError("product: needs at least one factor");
  std::set<std::pair<std::uint64_t, std::uint64_t>> streams;
  for (const auto& f : spec.factors) {
    validate(f.ensemble);
    if (f.ensemble.n != spec.n()) throw SpecError("product: all factors must share N");
    if (!streams.emplace(f.ensemble.seed, f.ensemble.factor).second)
      throw SpecError("product: factor streams (seed, index) must be pairwise distinct");
  }
}

Factors sample_factors(const ProductSpec& spec) {
  validate(spec);
  Factors out;
  for (const auto& f : spec.factors) {
    out.y.push_back(build_elliptic(f.ensemble));
    out.a.push_back(build_perturbation(f.perturbation, f.ensemble.n));
  }
  return out;
}

RealMatrix block_cyclic(std::span<const RealMatrix> blocks) {
  const auto m = static_cast<Eigen::Index>(blocks.size());
  if (m < 2) throw SpecError("linearization: requires m >= 2 factors");
  const Eigen::Index n = blocks.front().rows();
  RealMatrix out = RealMatrix::Zero(m * n, m * n);
  for (Eigen::Index k = 0; k < m; ++k) {
    if (blocks[k].rows() != n || blocks[k].cols() != n) throw SpecError("linearization: factor dimension mismatch");
    out.block(k * n, ((k + 1) % m) * n, n, n) = blocks[k];
  }
  return out;
}

BlockLinearization build_block_linearization(const Factors& factors) {
  if (factors.m() < 2) throw SpecError("linearization: requires m >= 2 factors");
  BlockLinearization lin;
  lin.m = factors.m();
  lin.n = static_cast<std::size_t>(factors.y.front().rows());
  lin.y = block_cyclic(factors.y);
  lin.a = block_cyclic(factors.a);
  lin.z = (lin.y + lin.a) / std::sqrt(static_cast<double>(lin.n));
  return lin;
}

BlockLinearization build_block_linearization(const ProductSpec& spec) {
  if (spec.m() < 2) throw SpecError("linearization: requires m >= 2 factors");
  return build_block_linearization(sample_factors(spec));
}

RealMatrix build_product(const Factors& factors) {
  if (factors.m() == 0 || factors.a.size() != factors.m()) throw SpecError("product: needs matching Y and A lists");
  const Eigen::Index n = factors.y.front().rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  RealMatrix p;
  for (std::size_t k = 0; k < factors.m(); ++k) {
    const auto& y = factors.y[k];
    const auto& a = factors.a[k];
    if (y.rows() != n || y.cols() != n || a.rows() != n || a.cols() != n)
      throw SpecError("product: factor dimension mismatch");
    if (k == 0) {
      p = scale * (y + a);
    } else {
      RealMatrix next = p * (y + a);
      p = scale * next;
    }
  }
  return p;
}

RealMatrix build_product(const ProductSpec& spec) { return build_product(sample_factors(spec)); }

void to_json(nlohmann::json& j, const EnsembleSpec& spec) {
  j = nlohmann::json{{"n", spec.n},           {"atom", spec.atom},         {"seed", spec.seed},
                     {"factor", spec.factor}, {"truncated", spec.truncated}, {"delta", spec.delta}};
}

namespace {

const char* kind_name(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::Zero: return "zero";
    case PerturbationKind::ConstantMean: return "constant-mean";
    case PerturbationKind::Explicit: return "explicit";
  }
  return "?";
}

}  // namespace

void to_json(nlohmann::json& j, const ProductSpec& spec) {
  j = nlohmann::json::array();
  for (const auto& f : spec.factors) {
    nlohmann::json pert{{"kind", kind_name(f.perturbation.kind)}, {"mean", f.perturbation.mean}};
    if (f.perturbation.kind == PerturbationKind::Explicit)
      pert["entries_hs2"] = f.perturbation.entries.squaredNorm();
    j.push_back({{"ensemble", f.ensemble}, {"perturbation", pert}});
  }
}

std::uint64_t spec_hash(const nlohmann::json& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

static_assert(std::endian::native == std::endian::little, "binary matrix I/O assumes a little-endian host");

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool has_binary_extension(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return ext == ".bin" || ext == ".espm";
}

}  // namespace

void write_matrix_csv(const std::filesystem::path& path, const RealMatrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "i,j,value\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << i << ',' << j << ',' << format_double(m(i, j)) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_matrix_binary(const std::filesystem::path& path, const RealMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  out.write("ESPM", 4);
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = m;
  out.write(reinterpret_cast<const char*>(row_major.data()),
            static_cast<std::streamsize>(sizeof(double) * row_major.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

RealMatrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "i,j,value") throw IoError("'" + path.string() + "': bad CSV header");
  std::vector<std::tuple<long long, long long, double>> triples;
  long long rows = 0, cols = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    long long i = 0, j = 0;
    double v = 0.0;
    char c1 = 0, c2 = 0;
    if (!(ss >> i >> c1 >> j >> c2 >> v) || c1 != ',' || c2 != ',' || i < 0 || j < 0)
      throw IoError("'" + path.string() + "': malformed row '" + line + "'");
    triples.emplace_back(i, j, v);
    rows = std::max(rows, i + 1);
    cols = std::max(cols, j + 1);
  }
  RealMatrix m = RealMatrix::Zero(rows, cols);
  for (const auto& [i, j, v] : triples) m(i, j) = v;
  return m;
}

RealMatrix read_matrix_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  char magic[4];
  std::uint64_t rows = 0, cols = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in || std::memcmp(magic, "ESPM", 4) != 0) throw IoError("'" + path.string() + "': not an ESPM file");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major(rows, cols);
  in.read(reinterpret_cast<char*>(row_major.data()), static_cast<std::streamsize>(sizeof(double) * rows * cols));
  if (!in) throw IoError("'" + path.string() + "': truncated data");
  return row_major;
}

void write_matrix(const std::filesystem::path& path, const RealMatrix& m) {
  has_binary_extension(path) ? write_matrix_binary(path, m) : write_matrix_csv(path, m);
}

RealMatrix read_matrix(const std::filesystem::path& path) {
  return has_binary_extension(path) ? read_matrix_binary(path) : read_matrix_csv(path);
}

}  // namespace espectra
