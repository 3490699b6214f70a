#include "abip/bilinear.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>

#include <nlohmann/json.hpp>

#include "abip/error.hpp"

namespace abip {
namespace {

void require_dim(std::span<const double> v, int n, const char* what) {
  if (static_cast<int>(v.size()) != n)
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) +
                         ", got " + std::to_string(v.size()));
}

int wrap(int x, int n) { return ((x % n) + n) % n; }

// Circulant: e_m * e_n = e_k with k = m + n (mod N), zero-based.
Tensor3 circular_coeffs(int n) {
  Tensor3 c(n, n, n);
  for (int m = 0; m < n; ++m)
    for (int j = 0; j < n; ++j) c(m, j, wrap(m + j, n)) = 1.0;
  return c;
}

// Skew-circulant: wrapped entries change sign.
Tensor3 skew_circular_coeffs(int n) {
  Tensor3 c(n, n, n);
  for (int m = 0; m < n; ++m)
    for (int j = 0; j < n; ++j) {
      int s = m + j;
      c(m, j, wrap(s, n)) = s < n ? 1.0 : -1.0;
    }
  return c;
}

// Circulant flipped upside down: the output index runs backwards.
Tensor3 reverse_time_coeffs(int n) {
  Tensor3 c(n, n, n);
  for (int m = 0; m < n; ++m)
    for (int j = 0; j < n; ++j) c(m, j, n - 1 - wrap(m + j, n)) = 1.0;
  return c;
}

Tensor3 vector3_coeffs() {
  Tensor3 c(3, 3, 3);
  // Levi-Civita signs of the cross product.
  c(0, 1, 2) = 1.0;
  c(1, 2, 0) = 1.0;
  c(2, 0, 1) = 1.0;
  c(1, 0, 2) = -1.0;
  c(2, 1, 0) = -1.0;
  c(0, 2, 1) = -1.0;
  return c;
}

Tensor3 quaternion_coeffs() {
  // Basis (1, i, j, k). Entries are {m, n, k, sign} with e_m * e_n = sign e_k.
  static constexpr int table[16][4] = {
      {0, 0, 0, +1}, {0, 1, 1, +1}, {0, 2, 2, +1}, {0, 3, 3, +1},
      {1, 0, 1, +1}, {1, 1, 0, -1}, {1, 2, 3, +1}, {1, 3, 2, -1},
      {2, 0, 2, +1}, {2, 1, 3, -1}, {2, 2, 0, -1}, {2, 3, 1, +1},
      {3, 0, 3, +1}, {3, 1, 2, +1}, {3, 2, 1, -1}, {3, 3, 0, -1},
  };
  Tensor3 c(4, 4, 4);
  for (const auto& e : table) c(e[0], e[1], e[2]) = e[3];
  return c;
}

Tensor3 seven_dim_coeffs() {
  // Seven-dimensional vector product. signed_index[k][n] = +-m (1-based)
  // means component k of e_m * e_n is +-1; 0 means the column has no m term
  // in that row. Transcription of the product's matrix representation,
  // columns n, rows k.
  static constexpr int signed_index[7][7] = {
      {0, -4, -7, +2, -6, +5, +3},
      {+4, 0, -5, -1, +3, -7, +6},
      {+7, +5, 0, -6, -2, +4, -1},
      {-2, +1, +6, 0, -7, -3, +5},
      {+6, -3, +2, +7, 0, -1, -4},
      {-5, +7, -4, +3, +1, 0, -2},
      {-3, -6, +1, -5, +4, +2, 0},
  };
  Tensor3 c(7, 7, 7);
  for (int k = 0; k < 7; ++k)
    for (int n = 0; n < 7; ++n) {
      int s = signed_index[k][n];
      if (s != 0) c(std::abs(s) - 1, n, k) = s > 0 ? 1.0 : -1.0;
    }
  return c;
}

struct RegistryState {
  mutable std::mutex mutex;
  std::map<std::string, BilinearProduct> customs;
};

RegistryState& registry_state() {
  static RegistryState state;
  return state;
}

}  // namespace

StructureTensor StructureTensor::make(int dim, Tensor3 coeffs) {
  if (dim < 1) throw DimensionError("structure tensor dim must be >= 1");
  if (coeffs.dim0() != static_cast<std::size_t>(dim) || coeffs.dim1() != coeffs.dim0() ||
      coeffs.dim2() != coeffs.dim0())
    throw DimensionError("structure tensor must be N x N x N with N = " + std::to_string(dim));
  for (double v : coeffs.flat())
    if (!std::isfinite(v)) throw DimensionError("structure tensor entries must be finite");
  return StructureTensor{dim, std::move(coeffs)};
}

BilinearProduct::BilinearProduct(std::string name, StructureTensor structure)
    : name_(std::move(name)), structure_(std::move(structure)) {}

const char* product_kind_name(ProductKind kind) {
  switch (kind) {
    case ProductKind::scalar: return "scalar";
    case ProductKind::circular: return "circular";
    case ProductKind::skew_circular: return "skew_circular";
    case ProductKind::reverse_time_circular: return "reverse_time_circular";
    case ProductKind::vector3: return "vector3";
    case ProductKind::quaternion: return "quaternion";
    case ProductKind::seven_dim_vector: return "seven_dim_vector";
  }
  return "?";
}

std::optional<ProductKind> parse_product_kind(std::string_view name) {
  for (ProductKind k : {ProductKind::scalar, ProductKind::circular, ProductKind::skew_circular,
                        ProductKind::reverse_time_circular, ProductKind::vector3,
                        ProductKind::quaternion, ProductKind::seven_dim_vector})
    if (name == product_kind_name(k)) return k;
  return std::nullopt;
}

bool kind_has_free_dim(ProductKind kind) {
  return kind == ProductKind::circular || kind == ProductKind::skew_circular ||
         kind == ProductKind::reverse_time_circular;
}

int kind_fixed_dim(ProductKind kind) {
  switch (kind) {
    case ProductKind::scalar: return 1;
    case ProductKind::vector3: return 3;
    case ProductKind::quaternion: return 4;
    case ProductKind::seven_dim_vector: return 7;
    default: return 0;
  }
}

BilinearProduct builtin_product(ProductKind kind, int dim) {
  if (kind_has_free_dim(kind)) {
    if (dim < 1)
      throw DimensionError(std::string(product_kind_name(kind)) +
                           " requires an explicit dimension >= 1");
  } else {
    int fixed = kind_fixed_dim(kind);
    if (dim == 0) dim = fixed;
    if (dim != fixed)
      throw DimensionError(std::string(product_kind_name(kind)) + " has fixed dimension " +
                           std::to_string(fixed) + ", got " + std::to_string(dim));
  }

  Tensor3 coeffs;
  switch (kind) {
    case ProductKind::scalar: coeffs = circular_coeffs(1); break;
    case ProductKind::circular: coeffs = circular_coeffs(dim); break;
    case ProductKind::skew_circular: coeffs = skew_circular_coeffs(dim); break;
    case ProductKind::reverse_time_circular: coeffs = reverse_time_coeffs(dim); break;
    case ProductKind::vector3: coeffs = vector3_coeffs(); break;
    case ProductKind::quaternion: coeffs = quaternion_coeffs(); break;
    case ProductKind::seven_dim_vector: coeffs = seven_dim_coeffs(); break;
  }
  return BilinearProduct(product_kind_name(kind), StructureTensor::make(dim, std::move(coeffs)));
}

std::vector<double> product(std::span<const double> p, std::span<const double> q,
                            const BilinearProduct& b) {
  const int n = b.dim();
  require_dim(p, n, "product: p");
  require_dim(q, n, "product: q");
  const Tensor3& c = b.structure().coeffs;
  std::vector<double> out(n, 0.0);
  for (int m = 0; m < n; ++m) {
    if (p[m] == 0.0) continue;
    for (int j = 0; j < n; ++j) {
      double w = p[m] * q[j];
      if (w == 0.0) continue;
      std::span<const double> fiber = c.fiber(m, j);
      for (int k = 0; k < n; ++k) out[k] += w * fiber[k];
    }
  }
  return out;
}

Matrix matrix_rep(std::span<const double> p, const BilinearProduct& b) {
  const int n = b.dim();
  require_dim(p, n, "matrix_rep: p");
  const Tensor3& c = b.structure().coeffs;
  Matrix rep(n, n);
  for (int k = 0; k < n; ++k)
    for (int col = 0; col < n; ++col) {
      double acc = 0.0;
      for (int m = 0; m < n; ++m) acc += c(m, col, k) * p[m];
      rep(k, col) = acc;
    }
  return rep;
}

Matrix transmuted_rep(std::span<const double> q, const BilinearProduct& b) {
  const int n = b.dim();
  require_dim(q, n, "transmuted_rep: q");
  const Tensor3& c = b.structure().coeffs;
  Matrix rep(n, n);
  for (int k = 0; k < n; ++k)
    for (int col = 0; col < n; ++col) {
      double acc = 0.0;
      for (int h = 0; h < n; ++h) acc += c(col, h, k) * q[h];
      rep(k, col) = acc;
    }
  return rep;
}

BilinearProduct custom_product(std::string name, Tensor3 coeffs) {
  int dim = static_cast<int>(coeffs.dim0());
  BilinearProduct p(std::move(name), StructureTensor::make(dim, std::move(coeffs)));
  ProductRegistry::instance().register_custom(p);
  return p;
}

BilinearProduct load_product_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open product file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad product JSON in " + path.string() + ": " + e.what());
  }
  if (!j.contains("name") || !j.contains("dim") || !j.contains("coeffs"))
    throw ConfigError("product JSON requires name, dim, coeffs: " + path.string());
  std::string name = j.at("name").get<std::string>();
  int dim = j.at("dim").get<int>();
  if (dim < 1) throw ConfigError("product dim must be >= 1: " + path.string());
  const auto& arr = j.at("coeffs");
  Tensor3 coeffs(dim, dim, dim);
  try {
    for (int m = 0; m < dim; ++m)
      for (int n = 0; n < dim; ++n)
        for (int k = 0; k < dim; ++k) coeffs(m, n, k) = arr.at(m).at(n).at(k).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("product coeffs must be a [N][N][N] array: " + std::string(e.what()));
  }
  return custom_product(std::move(name), std::move(coeffs));
}

ProductRegistry& ProductRegistry::instance() {
  static ProductRegistry registry;
  return registry;
}

void ProductRegistry::register_custom(BilinearProduct p) {
  if (parse_product_kind(p.name()))
    throw ConfigError("product name collides with a builtin: " + p.name());
  auto& state = registry_state();
  std::lock_guard lock(state.mutex);
  if (!state.customs.emplace(p.name(), p).second)
    throw ConfigError("product already registered: " + p.name());
}

std::optional<BilinearProduct> ProductRegistry::find(const std::string& name) const {
  auto& state = registry_state();
  std::lock_guard lock(state.mutex);
  auto it = state.customs.find(name);
  if (it == state.customs.end()) return std::nullopt;
  return it->second;
}

std::vector<BilinearProduct> ProductRegistry::customs() const {
  auto& state = registry_state();
  std::lock_guard lock(state.mutex);
  std::vector<BilinearProduct> out;
  out.reserve(state.customs.size());
  for (const auto& [_, p] : state.customs) out.push_back(p);
  return out;
}

BilinearProduct resolve_product(const std::string& name, int dim) {
  if (auto kind = parse_product_kind(name)) return builtin_product(*kind, dim);
  if (auto custom = ProductRegistry::instance().find(name)) {
    if (dim != 0 && custom->dim() != dim)
      throw DimensionError("custom product " + name + " has dimension " +
                           std::to_string(custom->dim()) + ", requested " + std::to_string(dim));
    return *custom;
  }
  throw ConfigError("unknown product: " + name);
}

const char* symmetry_name(Symmetry s) {
  switch (s) {
    case Symmetry::commutative: return "commutative";
    case Symmetry::anticommutative: return "anticommutative";
    case Symmetry::noncommutative: return "noncommutative";
  }
  return "?";
}

Symmetry product_symmetry(const BilinearProduct& b) {
  const Tensor3& c = b.structure().coeffs;
  const int n = b.dim();
  bool commutes = true, anticommutes = true;
  for (int m = 0; m < n && (commutes || anticommutes); ++m)
    for (int j = 0; j < n && (commutes || anticommutes); ++j)
      for (int k = 0; k < n; ++k) {
        if (c(m, j, k) != c(j, m, k)) commutes = false;
        if (c(m, j, k) != -c(j, m, k)) anticommutes = false;
      }
  if (commutes) return Symmetry::commutative;
  if (anticommutes) return Symmetry::anticommutative;
  return Symmetry::noncommutative;
}

std::optional<int> identity_basis_index(const BilinearProduct& b) {
  const int n = b.dim();
  std::vector<double> e(n, 0.0);
  for (int cand = 0; cand < n; ++cand) {
    e.assign(n, 0.0);
    e[cand] = 1.0;
    Matrix rep = matrix_rep(e, b);
    bool is_identity = true;
    for (int r = 0; r < n && is_identity; ++r)
      for (int col = 0; col < n; ++col)
        if (rep(r, col) != (r == col ? 1.0 : 0.0)) {
          is_identity = false;
          break;
        }
    if (is_identity) return cand + 1;
  }
  return std::nullopt;
}

}  // namespace abip
