// Acceptance suite: one criterion per invocation (or "all"), one PASS/FAIL
// line per criterion. Each criterion runs its recipe through the same path as
// the CLI, with one worker; AC11 reruns every recipe with three workers and
// compares the artifacts byte for byte.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "phdyn/experiment.hpp"
#include "phdyn/recipes.hpp"

namespace fs = std::filesystem;
using phdyn::json;

namespace {

fs::path out_root() {
  const char* env = std::getenv("PHDYN_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::current_path() / "acceptance-out";
}

struct Run {
  json result;
  double seconds = 0.0;
};

Run run_recipe(const std::string& name, int workers, const fs::path& dir) {
  const auto* r = phdyn::find_recipe(name);
  if (!r) throw std::runtime_error("missing recipe " + name);
  const auto e = phdyn::parse_experiment(r->config, workers);
  fs::remove_all(dir);
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = phdyn::run_experiment(e, dir);
  Run out;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.result = res.summary.at("result");
  return out;
}

/// Collects named checks; the criterion passes when all of them hold.
class Verdict {
 public:
  void check(bool ok, const std::string& what) {
    ok_ = ok_ && ok;
    notes_ << (notes_.tellp() > 0 ? "; " : "") << (ok ? "" : "NOT ") << what;
  }
  void info(const std::string& what) { notes_ << (notes_.tellp() > 0 ? "; " : "") << what; }
  bool ok() const { return ok_; }
  std::string notes() const { return notes_.str(); }

 private:
  bool ok_ = true;
  std::ostringstream notes_;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

void runtime(Verdict& v, const Run& r, double limit) {
  v.check(r.seconds < limit, "runtime " + fmt(r.seconds) + " s < " + fmt(limit) + " s");
}

Verdict ac1(const Run& r) {
  Verdict v;
  const auto& s = r.result["systems"][0];
  v.check(s["da_chain_by_bisection"].get<bool>(), "chain lambda_s < 1/3 < 1 < lambda_c < 3 < lambda_u by bisection");
  const auto roots = s["bisection_roots"].get<std::vector<double>>();
  const auto qr = s["qr_spectrum"].get<std::vector<double>>();  // descending
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(qr[static_cast<std::size_t>(i)] - std::log(roots[static_cast<std::size_t>(2 - i)])));
  v.check(worst < 1e-6, "max |QR exponent - log root| = " + fmt(worst) + " < 1e-6");
  runtime(v, r, 5.0);
  return v;
}

Verdict ac2(const Run& r) {
  Verdict v;
  const auto& res = r.result;
  v.check(res["chain_holds"].get<bool>(), "rate chain holds on 30^3 grid");
  if (res.contains("certificate")) {
    const auto& c = res["certificate"];
    v.check(c["mu1"].get<double>() < 1.0 / 3.0, "mu1 = " + fmt(c["mu1"]) + " < 1/3");
    v.check(c["lambda3"].get<double>() > 3.0, "lambda3 = " + fmt(c["lambda3"]) + " > 3");
  }
  const auto& cf = res["center_floor"];
  const double floor = 1.0 - cf["beta"].get<double>();
  v.check(cf["inside_min"].get<double>() > floor,
          "center floor in V " + fmt(cf["inside_min"]) + " > 1 - beta = " + fmt(floor));
  runtime(v, r, 120.0);
  return v;
}

Verdict ac3(const Run& r) {
  Verdict v;
  const auto& fps = r.result["systems"][0]["center_leaf_fixed_points"];
  v.check(fps.size() == 3, "exactly three fixed points on the center leaf (found " + std::to_string(fps.size()) + ")");
  int below = 0, above = 0;
  bool located = true, in_v = true;
  for (const auto& fp : fps) {
    const double d = fp["center_derivative"];
    (d < 1.0 ? below : above) += 1;
    located = located && fp["residual"].get<double>() < 1e-8 && fp["map_residual"].get<double>() < 1e-8;
    in_v = in_v && fp["in_V"].get<bool>();
  }
  v.check(in_v, "all in V");
  v.check(below == 1 && above == 2, "center derivatives straddle 1 (one contracting, two expanding)");
  v.check(located, "located to 1e-8");
  runtime(v, r, 10.0);
  return v;
}

Verdict ac4(const Run& r) {
  Verdict v;
  const auto& res = r.result;
  v.check(res["in_union_fraction"].get<double>() < 0.01,
          "fraction in union of M(k, alpha), k >= 1000: " + fmt(res["in_union_fraction"]) + " < 0.01");
  v.check(res["truncated"].get<int>() == 0, "no truncated orbits");
  v.check(res["bound_log3"]["violations"].get<int>() == 0,
          "literal log 3 bound: " + std::to_string(res["bound_log3"]["violations"].get<int>()) + " of " +
              std::to_string(res["outside"].get<int>()) + " points violate (worst margin " +
              fmt(res["bound_log3"]["worst_margin"]) + ")");
  v.check(res["lambda_c_tail_vs_log_lambda"]["violations"].get<int>() == 0,
          "lambda^c_n >= log lambda = " + fmt(res["log_lambda"]) + " for n in [1000, 2000] (min " +
              fmt(res["lambda_c_tail_vs_log_lambda"]["worst_min_lambda"]) + ")");
  v.info("eta_c-corrected bound violations: " + std::to_string(res["bound_eta_c"]["violations"].get<int>()));
  runtime(v, r, 300.0);
  return v;
}

Verdict ac5(const Run& r) {
  Verdict v;
  v.check(r.result["tv_to_uniform"].get<double>() < 0.05, "TV(mu_200, Leb) = " + fmt(r.result["tv_to_uniform"]) + " < 0.05");
  v.check(r.result["cesaro_defect"].get<double>() < 0.05,
          "TV(mu_200, f_* mu_200) = " + fmt(r.result["cesaro_defect"]) + " < 0.05");
  runtime(v, r, 120.0);
  return v;
}

Verdict ac6(const Run& r) {
  Verdict v;
  for (const auto& s : r.result["systems"]) {
    const int pts = s["verdicts"]["fail"].get<int>() + s["verdicts"]["NUE-pass"].get<int>() +
                    s["verdicts"]["wNUE-pass-only"].get<int>();
    v.check(s["verdicts"]["fail"].get<int>() == pts && s["max_abs_S"].get<double>() <= 1e-9 &&
                s["truncated"].get<int>() == 0,
            "eps " + fmt(s["epsilon"]) + ": fails on all " + std::to_string(pts) + " points, max |S_n| " +
                fmt(s["max_abs_S"]) + ", sup-distance " + fmt(s["sup_distance_to_block"]));
  }
  v.check(r.result["sup_distance_decreasing"].get<bool>(), "sup-distance to the block decreases with eps");
  runtime(v, r, 60.0);
  return v;
}

Verdict ac7(const Run& r) {
  Verdict v;
  const auto& sys = r.result["systems"];
  for (int k = 1; k <= 3; ++k) {
    const int ell = sys[static_cast<std::size_t>(k - 1)]["ell"];
    v.check(ell == k, "glued k=" + std::to_string(k) + ": ell=" + std::to_string(ell));
  }
  // The family starts at the single block (eps = 0, the k=1 map) and jumps to two measures for eps > 0.
  for (std::size_t i = 3; i < sys.size(); ++i) {
    const int ell = sys[i]["ell"];
    v.check(ell == 2, "two-block eps=" + fmt(sys[i]["system"]["epsilon"]) + ": ell=" + std::to_string(ell));
  }
  runtime(v, r, 600.0);
  return v;
}

Verdict ac8(const Run& r) {
  Verdict v;
  v.check(r.result["violations"].get<int>() == 0,
          std::to_string(r.result["violations"].get<int>()) + " violations on " +
              std::to_string(r.result["sequences"].get<int>()) + " sequences");
  v.check(r.result["alternating"]["holds"].get<bool>(), "alternating example holds");
  runtime(v, r, 5.0);
  return v;
}

Verdict ac9(const Run& r) {
  Verdict v;
  for (const auto& s : r.result["systems"]) {
    v.check(s["violations"].get<int>() == 0,
            s["system"]["kind"].get<std::string>() + " (" + s["measure"]["kind"].get<std::string>() + "): " +
                std::to_string(s["violations"].get<int>()) + " violations of " + std::to_string(s["checked"].get<int>()) +
                ", worst margin " + fmt(s["worst_margin"]));
  }
  runtime(v, r, 120.0);
  return v;
}

Verdict ac10(const Run& r) {
  Verdict v;
  const auto& s = r.result["systems"][0];
  const double ref = s["reference_center"];
  const double err = std::max(std::abs(s["center_exponent"]["min_last"].get<double>() - ref),
                              std::abs(s["center_exponent"]["max_last"].get<double>() - ref));
  v.check(err < 1e-6, "center exponent on 100 points within " + fmt(err) + " of log lambda2");
  const auto& pf = s["periodic_fiber"];
  v.check(pf["fiber_periodic"].get<bool>() && pf["support_in_fiber_cells"].get<bool>(),
          "periodic-fiber measure supported on the expected cells");
  v.check(pf["center_exponent"].get<double>() > 0.0, "its center exponent " + fmt(pf["center_exponent"]) + " > 0");
  v.info("Gibbs cu-state candidate: no (descriptive)");
  runtime(v, r, 60.0);
  return v;
}

const std::map<std::string, std::function<Verdict(const Run&)>>& criteria() {
  static const std::map<std::string, std::function<Verdict(const Run&)>> m = {
      {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4}, {"AC5", ac5},
      {"AC6", ac6}, {"AC7", ac7}, {"AC8", ac8}, {"AC9", ac9}, {"AC10", ac10}};
  return m;
}

bool report(const std::string& name, const Verdict& v) {
  std::cout << name << ' ' << (v.ok() ? "PASS" : "FAIL") << ": " << v.notes() << std::endl;
  return v.ok();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool run_criterion(const std::string& name) {
  const Run r = run_recipe(name, 1, out_root() / name / "w1");
  return report(name, criteria().at(name)(r));
}

/// Rerun every recipe with three workers and compare against the one-worker
/// artifacts, regenerating those first when absent or stale.
bool run_determinism() {
  Verdict v;
  for (const auto& rec : phdyn::recipes()) {
    const fs::path w1 = out_root() / rec.name / "w1";
    const fs::path w3 = out_root() / rec.name / "w3";
    const auto e = phdyn::parse_experiment(rec.config, 1);
    bool fresh = fs::exists(w1 / "summary.json");
    if (fresh) {
      const auto s = json::parse(slurp(w1 / "summary.json"));
      fresh = s.value("config_hash", "") == phdyn::hash_hex(e.hash);
    }
    if (!fresh) run_recipe(rec.name, 1, w1);
    run_recipe(rec.name, 3, w3);
    std::vector<std::string> a, b;
    for (const auto& f : fs::directory_iterator(w1)) a.push_back(f.path().filename().string());
    for (const auto& f : fs::directory_iterator(w3)) b.push_back(f.path().filename().string());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    bool same = a == b;
    for (std::size_t i = 0; same && i < a.size(); ++i) same = slurp(w1 / a[i]) == slurp(w3 / a[i]);
    v.check(same, rec.name + " (" + std::to_string(a.size()) + " files)");
  }
  return report("AC11", v);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> which;
  for (int i = 1; i < argc; ++i) which.emplace_back(argv[i]);
  if (which.empty() || (which.size() == 1 && which[0] == "all")) {
    which.clear();
    for (int i = 1; i <= 11; ++i) which.push_back("AC" + std::to_string(i));
  }
  bool all = true;
  for (const auto& name : which) {
    try {
      if (name == "AC11")
        all = run_determinism() && all;
      else if (criteria().count(name))
        all = run_criterion(name) && all;
      else {
        std::cerr << "unknown criterion " << name << '\n';
        all = false;
      }
    } catch (const std::exception& ex) {
      std::cout << name << " FAIL: " << ex.what() << std::endl;
      all = false;
    }
  }
  return all ? 0 : 1;
}
