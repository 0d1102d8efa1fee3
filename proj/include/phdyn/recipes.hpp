#pragma once

// Named experiment presets, one per acceptance criterion AC1..AC10. Each is
// an ordinary config and runs through the same path as a user config file.

#include <string>
#include <utility>
#include <vector>

#include "phdyn/config.hpp"

namespace phdyn {

struct Recipe {
  std::string name;
  std::string description;
  json config;
};

inline const std::vector<Recipe>& recipes() {
  static const std::vector<Recipe> all = [] {
    const json linear = {{"kind", "linear_anosov_t3"}};
    const json da = {{"kind", "da"}, {"t_offset", 0.2}};
    std::vector<Recipe> r;
    r.push_back({"AC1", "linear Anosov spectrum: QR exponents at n=1e4 and the bisection eigen-chain",
                 {{"task", "exponents"},
                  {"system", linear},
                  {"seed", 1},
                  {"params", {{"points", 10}, {"horizon", 200}, {"qr_horizon", 10000}}}}});
    r.push_back({"AC2", "partially hyperbolic certificate for the DA map on a 30^3 grid, n=20",
                 {{"task", "certify"}, {"system", da}, {"seed", 2}, {"params", {{"grid", 30}, {"n", 20}}}}});
    r.push_back({"AC3", "fixed points of the DA map on the center leaf through p0",
                 {{"task", "exponents"},
                  {"system", da},
                  {"seed", 3},
                  {"params", {{"points", 10}, {"horizon", 200}, {"fixed_points", true}}}}});
    r.push_back({"AC4", "DA occupation of V and center exponents along a u-segment",
                 {{"task", "occupation"},
                  {"system", da},
                  {"seed", 4},
                  {"params", {{"points", 10000}, {"horizon", 2000}, {"k_min", 1000}}}}});
    r.push_back({"AC5", "Pesin-Sinai averages on linear Anosov, n=200 on a 20^3 grid",
                 {{"task", "gibbs"},
                  {"system", linear},
                  {"seed", 5},
                  {"params", {{"n", 200}, {"grid", 20}, {"budget", 1000}, {"segment", {{"length", 4.0}}}}}}});
    {
      json systems = json::array();
      for (double eps : {0.2, 0.1, 0.05})
        systems.push_back({{"kind", "f_epsilon"}, {"epsilon", eps}, {"variant", "single"}});
      r.push_back({"AC6", "f_epsilon (single variant) fails NUE on the product region",
                   {{"task", "nue"},
                    {"systems", systems},
                    {"seed", 6},
                    {"params",
                     {{"points", 100},
                      {"horizon", 1000},
                      {"region", "product_region"},
                      {"c0", 0.05},
                      {"compare_block", true},
                      {"compare_grid", 20}}}}});
    }
    {
      json systems = json::array();
      for (int k : {1, 2, 3}) systems.push_back({{"kind", "glued"}, {"k", k}});
      for (double eps : {0.2, 0.1, 0.05})
        systems.push_back({{"kind", "f_epsilon"}, {"epsilon", eps}, {"variant", "two_blocks"}});
      r.push_back({"AC7", "physical-measure counting on glued maps and the two-block family",
                   {{"task", "basins"},
                    {"systems", systems},
                    {"seed", 7},
                    {"params", {{"nx", 64}, {"ny", 64}, {"horizon", 100000}, {"openness_samples", 3}}}}});
    }
    r.push_back({"AC8", "sequence lemma on random and adversarial sequences",
                 {{"task", "seqlemma"},
                  {"seed", 8},
                  {"params", {{"sequences", 1000}, {"max_length", 600}, {"Ns", {2, 3, 5}}}}}});
    r.push_back({"AC9", "super-additivity of L_n on linear Anosov (Lebesgue) and DA (approximate Gibbs u-state)",
                 {{"task", "ln"},
                  {"systems", {linear, da}},
                  {"seed", 9},
                  {"params", {{"grid", 16}, {"nmax", 20}, {"limit", 10}, {"measure", "auto"}}}}});
    r.push_back({"AC10", "product Anosov: center exponent and the periodic-fiber measure",
                 {{"task", "exponents"},
                  {"system", {{"kind", "product_anosov"}}},
                  {"seed", 10},
                  {"params",
                   {{"points", 100},
                    {"horizon", 1000},
                    {"periodic_fiber", {{"fiber_point", {0.5, 0.0}}, {"period", 3}, {"n", 100000}, {"grid", 8}}}}}}});
    return r;
  }();
  return all;
}

inline const Recipe* find_recipe(const std::string& name) {
  for (const auto& r : recipes())
    if (r.name == name) return &r;
  return nullptr;
}

}  // namespace phdyn
