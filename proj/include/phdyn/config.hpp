#pragma once

// Strict JSON experiment configuration: schema validation with defaults,
// system construction from specs, and the canonical config hash.

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "phdyn/systems.hpp"

namespace phdyn {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads fields of a JSON object, filling defaults into a resolved copy and
/// rejecting keys that were never read.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  template <typename T>
  T get(const std::string& k, const T& def) {
    seen_.insert(k);
    if (!j_.contains(k)) {
      out_[k] = def;
      return def;
    }
    return read<T>(k);
  }

  template <typename T>
  T require(const std::string& k) {
    seen_.insert(k);
    if (!j_.contains(k)) throw ConfigError(where_ + ": missing required key '" + k + "'");
    return read<T>(k);
  }

  /// Raw sub-value; marks the key as known.
  const json& raw(const std::string& k) {
    seen_.insert(k);
    if (!j_.contains(k)) throw ConfigError(where_ + ": missing required key '" + k + "'");
    return j_.at(k);
  }
  void set_resolved(const std::string& k, json v) { out_[k] = std::move(v); }

  /// Throws on keys that were not consumed; returns the resolved object.
  json finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    return out_;
  }

  const std::string& where() const { return where_; }

 private:
  template <typename T>
  T read(const std::string& k) {
    try {
      T v = j_.at(k).get<T>();
      out_[k] = j_.at(k);
      return v;
    } catch (const json::exception&) {
      throw ConfigError(where_ + ": key '" + k + "' has the wrong type");
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
  json out_ = json::object();
};

template <int D>
IntMat<D> parse_int_matrix(const json& j, const std::string& where) {
  IntMat<D> m;
  if (!j.is_array() || j.size() != static_cast<std::size_t>(D))
    throw ConfigError(where + ": expected a " + std::to_string(D) + "x" + std::to_string(D) + " integer matrix");
  for (int i = 0; i < D; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || row.size() != static_cast<std::size_t>(D))
      throw ConfigError(where + ": bad matrix row");
    for (int k = 0; k < D; ++k) {
      if (!row[static_cast<std::size_t>(k)].is_number_integer()) throw ConfigError(where + ": non-integer entry");
      m(i, k) = row[static_cast<std::size_t>(k)].get<long long>();
    }
  }
  return m;
}

template <int D>
json int_matrix_json(const IntMat<D>& m) {
  json rows = json::array();
  for (int i = 0; i < D; ++i) {
    json r = json::array();
    for (int k = 0; k < D; ++k) r.push_back(m(i, k));
    rows.push_back(r);
  }
  return rows;
}

/// A constructed system plus its resolved spec and optional typed views.
struct BuiltSystem {
  std::string kind;
  json spec;  // resolved
  SystemPtr<3> sys3;
  SystemPtr<4> sys4;
  std::shared_ptr<const DAMap> da;
  std::shared_ptr<const GluedMap> glued;
  std::shared_ptr<const BlockMap> block;        // surrogate block, or the block used by glued / f_epsilon
  std::optional<LinearAnosovSpec<3>> linear3;
  std::optional<ProductAnosov> product;
  double epsilon = 0.0;                          // f_epsilon only

  int dim() const { return sys4 ? 4 : 3; }
};

inline std::shared_ptr<const SurrogateBlock> build_block(const json& j, const std::string& where, json& resolved) {
  Fields f(j, where);
  const double kappa = f.get<double>("kappa", 0.05);
  const double bias = f.get<double>("bias", 0.5);
  const bool reversed = f.get<bool>("reversed", false);
  IntMat<2> a = cat_matrix();
  if (f.has("matrix"))
    a = parse_int_matrix<2>(f.raw("matrix"), where + ".matrix");
  f.set_resolved("matrix", int_matrix_json<2>(a));
  resolved = f.finish();
  try {
    return std::make_shared<const SurrogateBlock>(kappa, a, bias, reversed);
  } catch (const InvalidArgument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline BuiltSystem build_system(const json& j, const std::string& where = "system") {
  Fields f(j, where);
  BuiltSystem b;
  b.kind = f.require<std::string>("kind");
  try {
    if (b.kind == "linear_anosov_t3") {
      IntMat<3> m = da_seed_matrix();
      if (f.has("matrix")) m = parse_int_matrix<3>(f.raw("matrix"), where + ".matrix");
      f.set_resolved("matrix", int_matrix_json<3>(m));
      auto lin = make_linear_anosov_T3(m);
      b.sys3 = lin.system;
      b.linear3 = lin.spec;
    } else if (b.kind == "da") {
      DAParams p;
      if (f.has("t") && f.has("t_offset")) throw ConfigError(where + ": give either 't' or 't_offset'");
      if (f.has("t"))
        p.t = f.require<double>("t");
      else
        p.t = p.pitchfork_t() + f.get<double>("t_offset", 0.2);
      p.delta = f.get<double>("delta", p.delta);
      p.aspect = f.get<double>("aspect", p.aspect);
      p.beta = f.get<double>("beta", p.beta);
      p.alpha = f.get<double>("alpha", p.alpha);
      p.eta_c = f.get<double>("eta_c", p.eta_c);
      p.L = f.get<double>("L", 2.0 * p.delta);
      p.tau0 = f.get<double>("tau0", p.tau0);
      if (f.has("p0")) {
        const auto v = f.require<std::vector<double>>("p0");
        p.p0 = TorusPoint<3>::wrap(std::span<const double>(v));
      }
      f.set_resolved("t_resolved", p.t);
      b.da = make_da(p);
      b.sys3 = b.da;
      b.linear3 = p.base;
    } else if (b.kind == "surrogate_block") {
      json r;
      // The block spec is the system spec itself minus "kind".
      json inner = j;
      inner.erase("kind");
      for (const auto& [k, v] : inner.items()) (void)f.raw(k);
      b.block = build_block(inner, where, r);
      for (const auto& [k, v] : r.items()) f.set_resolved(k, v);
      b.sys3 = b.block;
    } else if (b.kind == "glued") {
      std::vector<BlockSpec> blocks;
      if (f.has("blocks") && f.has("k")) throw ConfigError(where + ": give either 'blocks' or 'k'");
      if (f.has("blocks")) {
        const json& arr = f.raw("blocks");
        if (!arr.is_array() || arr.empty()) throw ConfigError(where + ".blocks: expected a non-empty array");
        json resolved = json::array();
        for (std::size_t i = 0; i < arr.size(); ++i) {
          const std::string w = where + ".blocks[" + std::to_string(i) + "]";
          Fields bf(arr[i], w);
          BlockSpec s;
          s.lambda = bf.require<double>("lambda");
          s.tau = bf.require<double>("tau");
          s.inverted = bf.get<bool>("inverted", false);
          json rb;
          s.block_map = build_block(bf.has("block") ? bf.raw("block") : json::object(), w + ".block", rb);
          bf.set_resolved("block", rb);
          blocks.push_back(s);
          resolved.push_back(bf.finish());
          if (!b.block) b.block = s.block_map;
        }
        f.set_resolved("blocks", resolved);
        b.glued = make_glued(blocks);
      } else {
        const int k = f.get<int>("k", 1);
        json rb;
        auto blk = build_block(f.has("block") ? f.raw("block") : json::object(), where + ".block", rb);
        f.set_resolved("block", rb);
        b.block = blk;
        b.glued = make_glued_equal(blk, k);
      }
      b.sys3 = b.glued;
    } else if (b.kind == "f_epsilon") {
      b.epsilon = f.require<double>("epsilon");
      const std::string variant = f.get<std::string>("variant", "single");
      EpsilonVariant v;
      if (variant == "single")
        v = EpsilonVariant::single;
      else if (variant == "two_blocks")
        v = EpsilonVariant::two_blocks;
      else
        throw ConfigError(where + ".variant: expected 'single' or 'two_blocks'");
      json rb;
      auto blk = build_block(f.has("block") ? f.raw("block") : json::object(), where + ".block", rb);
      f.set_resolved("block", rb);
      b.block = blk;
      b.glued = make_f_epsilon(b.epsilon, blk, v);
      b.sys3 = b.glued;
    } else if (b.kind == "product_anosov") {
      IntMat<2> a1, a2;
      a1 << 3, 2, 1, 1;
      a2 = cat_matrix();
      if (f.has("a1")) a1 = parse_int_matrix<2>(f.raw("a1"), where + ".a1");
      if (f.has("a2")) a2 = parse_int_matrix<2>(f.raw("a2"), where + ".a2");
      f.set_resolved("a1", int_matrix_json<2>(a1));
      f.set_resolved("a2", int_matrix_json<2>(a2));
      b.product = make_product_anosov(a1, a2);
      b.sys4 = b.product->system;
    } else {
      throw ConfigError(where + ".kind: unknown system kind '" + b.kind +
                        "' (expected linear_anosov_t3, da, surrogate_block, glued, f_epsilon, product_anosov)");
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  b.spec = f.finish();
  return b;
}

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Hash of the canonical (sorted-key, compact) dump of a resolved config.
inline std::uint64_t config_hash(const json& resolved) { return fnv1a64(resolved.dump()); }

inline std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return s;
}

}  // namespace phdyn
