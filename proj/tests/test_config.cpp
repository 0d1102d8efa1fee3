#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "phdyn/experiment.hpp"
#include "phdyn/recipes.hpp"

using namespace phdyn;
namespace fs = std::filesystem;

namespace {

json parse(const std::string& s) { return json::parse(s); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("phdyn_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, RejectsUnknownKeysAtEveryLevel) {
  EXPECT_THROW(parse_experiment(parse(R"({"task":"seqlemma","bogus":1})")), ConfigError);
  EXPECT_THROW(parse_experiment(parse(R"({"task":"seqlemma","params":{"bogus":1}})")), ConfigError);
  EXPECT_THROW(parse_experiment(parse(R"({"task":"exponents","system":{"kind":"da","bogus":1}})")), ConfigError);
  EXPECT_THROW(parse_experiment(parse(R"({"task":"basins","system":{"kind":"glued","k":2,"block":{"kapa":0.1}}})")),
               ConfigError);
}

TEST(Config, RejectsWrongTypesAndMissingFields) {
  EXPECT_THROW(parse_experiment(parse(R"({"system":{"kind":"da"}})")), ConfigError);
  EXPECT_THROW(parse_experiment(parse(R"({"task":"exponents"})")), ConfigError);
  EXPECT_THROW(parse_experiment(parse(R"({"task":"exponents","system":{"kind":"da","t":"big"}})")), ConfigError);
  EXPECT_THROW(parse_experiment(parse(R"({"task":"nope","system":{"kind":"da"}})")), ConfigError);
  EXPECT_THROW(parse_experiment(parse(R"({"task":"exponents","system":{"kind":"tent"}})")), ConfigError);
  EXPECT_THROW(parse_experiment(parse(R"([1,2])")), ConfigError);
}

TEST(Config, RejectsOutOfRangeSystemParameters) {
  EXPECT_THROW(parse_experiment(parse(R"({"task":"exponents","system":{"kind":"da","t_offset":5}})")), ConfigError);
  EXPECT_THROW(parse_experiment(parse(R"({"task":"exponents","system":{"kind":"f_epsilon","epsilon":1.5}})")),
               ConfigError);
  EXPECT_THROW(
      parse_experiment(parse(R"({"task":"exponents","system":{"kind":"linear_anosov_t3","matrix":[[2,1,0],[1,1,0],[0,0,1]]}})")),
      ConfigError);
  EXPECT_THROW(parse_experiment(parse(R"({"task":"gibbs","system":{"kind":"linear_anosov_t3"},"params":{"grid":4}})")),
               ConfigError);
  EXPECT_THROW(parse_experiment(parse(R"({"task":"basins","system":{"kind":"glued"},"params":{"tol":0.005}})")),
               ConfigError);
}

TEST(Config, TaskSystemCompatibility) {
  EXPECT_THROW(parse_experiment(parse(R"({"task":"occupation","system":{"kind":"linear_anosov_t3"}})")), ConfigError);
  EXPECT_THROW(parse_experiment(parse(R"({"task":"seqlemma","system":{"kind":"da"}})")), ConfigError);
  EXPECT_THROW(parse_experiment(parse(R"({"task":"nue","system":{"kind":"glued"}})")), ConfigError);  // no c0
}

TEST(Config, HashIgnoresKeyOrderWorkersAndOutput) {
  const auto a = parse_experiment(parse(R"({"task":"seqlemma","seed":3,"params":{"sequences":5}})"));
  const auto b = parse_experiment(parse(R"({"params":{"sequences":5},"workers":7,"output":"x","seed":3,"task":"seqlemma"})"));
  EXPECT_EQ(a.hash, b.hash);
  const auto c = parse_experiment(parse(R"({"task":"seqlemma","seed":4,"params":{"sequences":5}})"));
  EXPECT_NE(a.hash, c.hash);
  // Defaults are resolved into the hashed config.
  const auto d = parse_experiment(parse(R"({"task":"seqlemma","seed":3,"params":{"sequences":5,"Ns":[2,3,5]}})"));
  EXPECT_EQ(a.hash, d.hash);
}

TEST(Config, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hash_hex(0xabcULL), "0000000000000abc");
}

TEST(Config, ResolvedDAIncludesParameter) {
  const auto e = parse_experiment(parse(R"({"task":"exponents","system":{"kind":"da"}})"));
  const double t = e.resolved["system"]["t_resolved"];
  EXPECT_NEAR(t, e.systems[0].da->params_struct().pitchfork_t() + 0.2, 1e-15);
}

TEST(Recipes, AllPresetsParse) {
  ASSERT_EQ(recipes().size(), 10u);
  for (const auto& r : recipes()) EXPECT_NO_THROW(parse_experiment(r.config)) << r.name;
  EXPECT_EQ(find_recipe("nope"), nullptr);
  EXPECT_EQ(find_recipe("AC4")->config["task"], "occupation");
}

TEST(Experiment, ArtifactsCarryTheConfigHash) {
  const auto e = parse_experiment(parse(R"({"task":"seqlemma","params":{"sequences":20}})"));
  const auto dir = scratch("hash");
  const auto res = run_experiment(e, dir);
  const std::string hex = hash_hex(e.hash);
  EXPECT_EQ(res.summary["config_hash"], hex);
  EXPECT_EQ(res.summary["result"]["violations"], 0);
  EXPECT_NE(slurp(dir / "seqlemma.csv").find(hex), std::string::npos);
  EXPECT_EQ(json::parse(slurp(dir / "config.json")), e.resolved);
  fs::remove_all(dir);
}

TEST(Experiment, OutputsIndependentOfWorkerCount) {
  const json cfg = parse(R"({"task":"nue","systems":[{"kind":"f_epsilon","epsilon":0.1}],
    "params":{"points":12,"horizon":60,"c0":0.05}})");
  const auto d1 = scratch("w1"), d3 = scratch("w3");
  const auto r1 = run_experiment(parse_experiment(cfg, 1), d1);
  const auto r3 = run_experiment(parse_experiment(cfg, 3), d3);
  ASSERT_EQ(r1.files, r3.files);
  for (const auto& f : r1.files) EXPECT_EQ(slurp(d1 / f), slurp(d3 / f)) << f;
  fs::remove_all(d1);
  fs::remove_all(d3);
}

TEST(Experiment, OutputDirDefaultsToTaskAndHash) {
  const auto e = parse_experiment(parse(R"({"task":"seqlemma"})"));
  EXPECT_EQ(output_dir(e, "/r"), fs::path("/r") / ("seqlemma-" + hash_hex(e.hash)));
  const auto f = parse_experiment(parse(R"({"task":"seqlemma","output":"mine"})"));
  EXPECT_EQ(output_dir(f, "/r"), fs::path("/r/mine"));
}
