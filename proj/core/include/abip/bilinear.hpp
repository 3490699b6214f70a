#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "abip/matrix.hpp"

namespace abip {

/// The N x N x N coefficient array of a bilinear product: coeffs(m, n, k)
/// is the k-th component of the product of basis vectors e_m and e_n.
/// A product is fully determined by this tensor.
struct StructureTensor {
  int dim = 0;
  Tensor3 coeffs;  // dim x dim x dim, all finite

  /// Validates dim >= 1, the N^3 shape, and finiteness of every entry.
  static StructureTensor make(int dim, Tensor3 coeffs);
};

/// A named bilinear product R^N x R^N -> R^N.
class BilinearProduct {
 public:
  BilinearProduct() = default;  // empty placeholder; dim() == 0
  BilinearProduct(std::string name, StructureTensor structure);

  const std::string& name() const { return name_; }
  int dim() const { return structure_.dim; }
  const StructureTensor& structure() const { return structure_; }

 private:
  std::string name_;
  StructureTensor structure_;
};

enum class ProductKind {
  scalar,
  circular,
  skew_circular,
  reverse_time_circular,
  vector3,
  quaternion,
  seven_dim_vector,
};

const char* product_kind_name(ProductKind kind);
std::optional<ProductKind> parse_product_kind(std::string_view name);

/// True for kinds whose dimension is a free parameter (the convolutions).
bool kind_has_free_dim(ProductKind kind);

/// Natural dimension of a fixed-dimension kind (scalar 1, vector3 3,
/// quaternion 4, seven_dim_vector 7); 0 for the convolution kinds.
int kind_fixed_dim(ProductKind kind);

/// Builds a builtin product. `dim` is required for the convolution kinds
/// and must be >= 1; for fixed-dimension kinds it may be 0 (meaning the
/// natural dimension) or must equal the natural dimension.
/// Throws DimensionError otherwise.
BilinearProduct builtin_product(ProductKind kind, int dim = 0);

/// p (bullet) q, computed as the double contraction
/// out[k] = sum_m sum_n p[m] q[n] coeffs(m, n, k).
std::vector<double> product(std::span<const double> p, std::span<const double> q,
                            const BilinearProduct& b);

/// Matrix representation [p]: column n is the product of p with e_n, so
/// matrix_rep(p) * q == product(p, q).
Matrix matrix_rep(std::span<const double> p, const BilinearProduct& b);

/// Transmuted representation [q]+: column n is the product of e_n with q,
/// so transmuted_rep(q) * p == product(p, q).
Matrix transmuted_rep(std::span<const double> q, const BilinearProduct& b);

/// Registers a custom product under `name` and returns it. Rejects
/// non-finite coefficients and duplicate names (including builtin kind
/// names). The registered product is usable everywhere a builtin is.
BilinearProduct custom_product(std::string name, Tensor3 coeffs);

/// Loads {"name": str, "dim": int, "coeffs": [N][N][N]} and registers it.
BilinearProduct load_product_json(const std::filesystem::path& path);

/// Process-wide registry of custom products. Builtin kinds are constructed
/// on demand and never stored here; their names are reserved.
class ProductRegistry {
 public:
  static ProductRegistry& instance();

  void register_custom(BilinearProduct p);
  std::optional<BilinearProduct> find(const std::string& name) const;
  std::vector<BilinearProduct> customs() const;

 private:
  ProductRegistry() = default;
};

/// Resolves a name to a product: builtin kind names first (instantiated at
/// `dim`), then registered customs (whose dim must match `dim` when dim is
/// nonzero). Throws ConfigError for unknown names.
BilinearProduct resolve_product(const std::string& name, int dim = 0);

enum class Symmetry { commutative, anticommutative, noncommutative };

const char* symmetry_name(Symmetry s);

/// Classifies the product by comparing coeffs(m, n, :) against
/// coeffs(n, m, :) over all basis pairs.
Symmetry product_symmetry(const BilinearProduct& b);

/// Searches basis candidates e_1..e_N for one whose matrix representation
/// is the identity (a left identity element). Returns the 1-based basis
/// index, or nullopt when no basis vector qualifies.
std::optional<int> identity_basis_index(const BilinearProduct& b);

}  // namespace abip
