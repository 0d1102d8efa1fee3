// Command-line front end: run a config file, run a named recipe, or list recipes.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "phdyn/experiment.hpp"
#include "phdyn/recipes.hpp"

namespace {

using phdyn::json;

std::filesystem::path output_root() {
  const char* env = std::getenv("PHDYN_OUTPUT_ROOT");
  return env && *env ? std::filesystem::path(env) : std::filesystem::path("phdyn-out");
}

int report_error(const std::string& kind, const std::string& message, int code, const json& extra = json::object()) {
  json err = {{"error", kind}, {"message", message}};
  for (const auto& [k, v] : extra.items()) err[k] = v;
  std::cerr << err.dump() << '\n';
  return code;
}

int execute(json config, std::optional<int> workers, std::optional<std::uint64_t> seed) {
  if (seed && config.is_object()) config["seed"] = *seed;
  phdyn::Experiment e;
  try {
    e = phdyn::parse_experiment(config, workers);
  } catch (const phdyn::ConfigError& ex) {
    return report_error("config", ex.what(), 2);
  }
  const auto dir = phdyn::output_dir(e, output_root());
  try {
    const auto res = phdyn::run_experiment(e, dir);
    std::cout << res.summary.dump(2) << '\n';
    std::cerr << "wrote " << res.files.size() << " files to " << dir.string() << '\n';
  } catch (const phdyn::NumericalError& ex) {
    return report_error("numerical", ex.what(), 3, {{"residual", ex.residual()}, {"config_hash", phdyn::hash_hex(e.hash)}});
  } catch (const phdyn::InvalidArgument& ex) {
    return report_error("invalid_argument", ex.what(), 2);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partially hyperbolic dynamics experiments"};
  app.require_subcommand(1);
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "run an experiment from a JSON config file");
  std::string path;
  run->add_option("config", path, "config file")->required()->check(CLI::ExistingFile);
  run->add_option("-w,--workers", workers, "worker threads (results do not depend on it)");
  run->add_option("-s,--seed", seed, "override the config seed");

  auto* rec = app.add_subcommand("recipe", "run a named preset (see 'list')");
  std::string name;
  rec->add_option("name", name, "recipe name")->required();
  rec->add_option("-w,--workers", workers, "worker threads (results do not depend on it)");
  rec->add_option("-s,--seed", seed, "override the recipe seed");
  bool print_only = false;
  rec->add_flag("--print", print_only, "print the recipe config instead of running it");

  app.add_subcommand("list", "list the available recipes");

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand("list")) {
    for (const auto& r : phdyn::recipes()) std::cout << r.name << "\t" << r.description << '\n';
    return 0;
  }
  if (app.got_subcommand("recipe")) {
    const auto* r = phdyn::find_recipe(name);
    if (!r) return report_error("config", "unknown recipe '" + name + "'", 2);
    if (print_only) {
      std::cout << r->config.dump(2) << '\n';
      return 0;
    }
    return execute(r->config, workers, seed);
  }
  json config;
  try {
    std::ifstream in(path);
    config = json::parse(in);
  } catch (const json::parse_error& ex) {
    return report_error("config", std::string("malformed JSON: ") + ex.what(), 2);
  }
  return execute(config, workers, seed);
}
