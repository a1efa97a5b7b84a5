#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "espectra/atoms.hpp"
#include "espectra/types.hpp"

namespace espectra {

/// Recipe for one N x N real elliptic matrix Y. Entry (i, j) is a pure
/// function of (seed, factor, i, j), so a spec always rebuilds the same
/// matrix bit for bit.
struct EnsembleSpec {
  std::size_t n = 2;
  AtomPairSpec atom{};
  std::uint64_t seed = 0;
  std::uint64_t factor = 0;  // stream index inside a product
  bool truncated = false;    // apply the N^delta truncation and zero the diagonal
  double delta = 0.1;
};

void validate(const EnsembleSpec& spec);

/// Samples Y: for i < j the pair (y_ij, y_ji) is one draw of the atom pair,
/// y_ii is a draw of the diagonal law (zero when truncated).
RealMatrix build_elliptic(const EnsembleSpec& spec);

enum class PerturbationKind { Zero, ConstantMean, Explicit };

/// Deterministic low-rank perturbation A with rank <= rank_bound * N^(1 - epsilon)
/// and ||A||_HS^2 <= hs_norm_bound * N^2.
struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::Zero;
  double mean = 0.0;        // ConstantMean: every entry equals this value
  RealMatrix entries;       // Explicit
  double rank_bound = 1.0;
  double hs_norm_bound = 1.0;
  double epsilon = 0.5;
};

/// Builds and validates A. Throws SpecError when the rank or Hilbert-Schmidt
/// budget is exceeded.
RealMatrix build_perturbation(const PerturbationSpec& spec, std::size_t n);

struct FactorSpec {
  EnsembleSpec ensemble;
  PerturbationSpec perturbation;
};

/// The m-fold product N^{-m/2} (Y_1 + A_1) ... (Y_m + A_m).
struct ProductSpec {
  std::vector<FactorSpec> factors;

  std::size_t m() const { return factors.size(); }
  std::size_t n() const { return factors.empty() ? 0 : factors.front().ensemble.n; }
};

/// One factor per atom law, all sharing `seed`, factor k reading stream k.
ProductSpec make_product_spec(std::span<const AtomPairSpec> atoms, std::size_t n, std::uint64_t seed);

/// Same recipe with the seed of every factor replaced by hash(seed, trial).
ProductSpec for_trial(const ProductSpec& spec, std::uint64_t trial);

void validate(const ProductSpec& spec);

/// Sampled factors Y_k and perturbations A_k.
struct Factors {
  std::vector<RealMatrix> y;
  std::vector<RealMatrix> a;

  std::size_t m() const { return y.size(); }
};

Factors sample_factors(const ProductSpec& spec);

/// Block-cyclic mN x mN linearization: block (k, k+1) holds factor k and
/// block (m, 1) holds factor m; Z = (Y + A) / sqrt(N).
struct BlockLinearization {
  RealMatrix y;
  RealMatrix a;
  RealMatrix z;
  std::size_t m = 0;
  std::size_t n = 0;
};

/// Places `blocks[k]` at block position (k, k+1 mod m). Requires m >= 2.
RealMatrix block_cyclic(std::span<const RealMatrix> blocks);

BlockLinearization build_block_linearization(const Factors& factors);
BlockLinearization build_block_linearization(const ProductSpec& spec);

/// N^{-m/2} prod_k (Y_k + A_k). Throws SpecError on dimension mismatch.
RealMatrix build_product(const Factors& factors);
RealMatrix build_product(const ProductSpec& spec);

void to_json(nlohmann::json& j, const EnsembleSpec& spec);
void to_json(nlohmann::json& j, const ProductSpec& spec);

/// FNV-1a hash of the canonical JSON form; used as provenance.
std::uint64_t spec_hash(const nlohmann::json& canonical);

// Matrix files. CSV has header "i,j,value" with zero-based indices; the binary
// format is "ESPM", u64 rows, u64 cols, then f64 data row-major, little endian.
void write_matrix_csv(const std::filesystem::path& path, const RealMatrix& m);
void write_matrix_binary(const std::filesystem::path& path, const RealMatrix& m);
RealMatrix read_matrix_csv(const std::filesystem::path& path);
RealMatrix read_matrix_binary(const std::filesystem::path& path);

/// Dispatches on extension: ".bin"/".espm" binary, anything else CSV.
void write_matrix(const std::filesystem::path& path, const RealMatrix& m);
RealMatrix read_matrix(const std::filesystem::path& path);

}  // namespace espectra
