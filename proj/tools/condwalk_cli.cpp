// condwalk: command-line runner for the conditioned-walk experiments.
//
//   condwalk potential --x 1 --y 0
//   condwalk couple --h 8 --levels 2000 --replicas 100 --seed 7 --out runs/c8
//   condwalk run --manifest runs/c8/manifest.json --out runs/c8b
//   condwalk validate --manifest m.json
//
// Thread count: CONDWALK_THREADS (default: hardware concurrency).

#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "condwalk/runner.hpp"

using nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::uint64_t replicas = 1;
  std::string out;
  bool force = false;
  bool dry_run = false;
};

void add_common(CLI::App* sub, Common& c, bool needs_out) {
  sub->add_option("--seed", c.seed, "master seed");
  sub->add_option("--replicas", c.replicas, "number of replicas")->check(CLI::PositiveNumber);
  auto* o = sub->add_option("--out", c.out, "output directory");
  if (needs_out) o->required();
  sub->add_flag("--force", c.force, "replace a previous run in --out");
  sub->add_flag("--dry-run", c.dry_run, "print the manifest and exit");
}

// Options whose values go into params verbatim (parsed as JSON when given).
class ParamOptions {
 public:
  template <class T>
  void add(CLI::App* sub, const std::string& flag, const std::string& key,
           const std::string& help) {
    auto& slot = values_[key];
    opts_[key] = sub->add_option(flag, slot, help);
    is_string_[key] = std::is_same_v<T, std::string>;
  }

  json collect() const {
    json p = json::object();
    for (const auto& [key, opt] : opts_) {
      if (opt->count() == 0) continue;
      const std::string& v = values_.at(key);
      json value = is_string_.at(key) ? json(v) : json::parse(v);
      // dotted keys address nested objects
      const auto dot = key.find('.');
      if (dot == std::string::npos) {
        p[key] = value;
      } else {
        p[key.substr(0, dot)][key.substr(dot + 1)] = value;
      }
    }
    return p;
  }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, CLI::Option*> opts_;
  std::map<std::string, bool> is_string_;
};

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  return json::parse(f);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation runner for random walks and Brownian motion conditioned to avoid a set"};
  app.require_subcommand(1);

  Common common;
  std::map<std::string, ParamOptions> params;

  auto* potential = app.add_subcommand("potential", "a(x), q_A(x) and cap(A) as JSON");
  add_common(potential, common, false);
  params["potential"].add<long>(potential, "--x", "x", "site x coordinate");
  params["potential"].add<long>(potential, "--y", "y", "site y coordinate");
  params["potential"].add<json>(potential, "--avoid", "avoid", "avoided set, JSON [[x,y],...]");
  params["potential"].add<long>(potential, "--avoid-radius", "avoid_radius", "solve radius for q_A");

  auto* walk = app.add_subcommand("walk", "sample SRW, S-hat or S-hat^A paths");
  add_common(walk, common, true);
  params["walk"].add<std::string>(walk, "--chain", "chain", "srw | hatS | hatSA");
  params["walk"].add<json>(walk, "--avoid", "avoid", "avoided set, JSON [[x,y],...]");
  params["walk"].add<long>(walk, "--avoid-radius", "avoid_radius", "solve radius for q_A");
  params["walk"].add<json>(walk, "--start", "start", "start site, JSON [x,y]");
  params["walk"].add<std::string>(walk, "--stop", "stop.kind", "steps | exit_radius");
  params["walk"].add<double>(walk, "--stop-value", "stop.value", "step count or radius");
  params["walk"].add<bool>(walk, "--write-paths", "write_paths", "true | false");

  auto* bm = app.add_subcommand("bm", "sample planar BM or W-hat paths and excursions");
  add_common(bm, common, true);
  params["bm"].add<std::string>(bm, "--process", "process", "hatW | bm");
  params["bm"].add<double>(bm, "--rho", "rho", "conditioning radius");
  params["bm"].add<double>(bm, "--variance", "variance", "per-coordinate variance (1 or 0.5)");
  params["bm"].add<double>(bm, "--dt", "dt", "base time step");
  params["bm"].add<json>(bm, "--start", "start", "start point, JSON [x,y]");
  params["bm"].add<std::string>(bm, "--stop", "stop.kind", "time | exit_radius");
  params["bm"].add<double>(bm, "--stop-value", "stop.value", "time or radius");
  params["bm"].add<bool>(bm, "--write-paths", "write_paths", "true | false");
  params["bm"].add<long>(bm, "--excursions", "excursions", "chained W-hat excursions per replica");
  params["bm"].add<long>(bm, "--excursion-level", "excursion_level", "starting level of the excursions");

  auto* couple = app.add_subcommand("couple", "coupled S-hat / W-hat excursion construction");
  add_common(couple, common, true);
  couple->set_help_flag("--help", "print this help message and exit");  // frees -h
  params["couple"].add<long>(couple, "--h", "h", "starting level");
  params["couple"].add<long>(couple, "--levels", "levels", "cap on excursions per run");
  params["couple"].add<double>(couple, "--D", "D", "KMT discrepancy constant");
  params["couple"].add<double>(couple, "--beta", "beta", "time-gap exponent");
  params["couple"].add<double>(couple, "--alpha", "alpha", "modulus-bound exponent");
  params["couple"].add<double>(couple, "--epsilon", "epsilon", "decision margin");
  params["couple"].add<long>(couple, "--max-level", "max_level", "stop level (0: h+1)");
  params["couple"].add<long>(couple, "--max-tries", "max_tries", "tries per excursion");
  params["couple"].add<bool>(couple, "--stop-at-catastrophe", "stop_at_catastrophe", "true | false");

  auto* kmt = app.add_subcommand("kmt", "dyadic KMT coupling discrepancy study");
  add_common(kmt, common, true);
  params["kmt"].add<json>(kmt, "--log2-n", "log2_n", "JSON list of log2 lengths");
  params["kmt"].add<bool>(kmt, "--write-paths", "write_paths", "true | false");
  params["kmt"].add<long>(kmt, "--path-log2-n", "path_log2_n", "log2 length of written paths");

  auto* escape = app.add_subcommand("escape-stats", "future minima, integral test and LIL statistics");
  add_common(escape, common, true);
  params["escape-stats"].add<std::string>(escape, "--process", "process", "hatS | hatSA | hatW");
  params["escape-stats"].add<double>(escape, "--horizon", "horizon", "steps (time for hatW)");
  params["escape-stats"].add<long>(escape, "--per-doubling", "per_doubling", "grid points per doubling");
  params["escape-stats"].add<json>(escape, "--avoid", "avoid", "avoided set for hatSA");
  params["escape-stats"].add<long>(escape, "--avoid-radius", "avoid_radius", "solve radius for q_A");
  params["escape-stats"].add<double>(escape, "--rho", "rho", "conditioning radius for hatW");
  params["escape-stats"].add<std::string>(escape, "--test-function", "test_function.kind", "constant | exp_half");
  params["escape-stats"].add<double>(escape, "--delta", "test_function.delta", "exponent of the constant test function");
  params["escape-stats"].add<double>(escape, "--envelope-delta", "envelope_delta", "log power of the envelope");
  params["escape-stats"].add<double>(escape, "--lil-n-min", "lil_n_min", "first n of the LIL statistic");
  params["escape-stats"].add<bool>(escape, "--write-curves", "write_curves", "true | false");

  std::string manifest_path;
  auto* run = app.add_subcommand("run", "execute a manifest file");
  run->add_option("--manifest", manifest_path, "manifest JSON")->required()->check(CLI::ExistingFile);
  std::string run_out;
  run->add_option("--out", run_out, "override the output directory");
  run->add_flag("--force", common.force, "replace a previous run in --out");

  auto* validate = app.add_subcommand("validate", "check a manifest and print diagnostics");
  validate->add_option("--manifest", manifest_path, "manifest JSON")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      const auto diag = condwalk::validate(read_json(manifest_path));
      std::cout << condwalk::to_json(diag).dump(2) << "\n";
      return condwalk::has_errors(diag) ? 2 : 0;
    }
    condwalk::RunManifest m;
    if (run->parsed()) {
      m = condwalk::manifest_from_json(read_json(manifest_path));
      if (!run_out.empty()) m.out = run_out;
    } else {
      const auto* sub = app.get_subcommands().front();
      m.subcommand = sub->get_name();
      m.seed = common.seed;
      m.replicas = common.replicas;
      m.out = common.out;
      m.params = params.at(m.subcommand).collect();
      if (common.dry_run) {
        const auto diag = condwalk::validate(condwalk::to_json(m));
        if (condwalk::has_errors(diag)) {
          std::cout << condwalk::to_json(diag).dump(2) << "\n";
          return 2;
        }
        std::cout << condwalk::to_json(condwalk::with_defaults(m)).dump(2) << "\n";
        return 0;
      }
    }
    return condwalk::run(m, common.force, std::cout);
  } catch (const condwalk::ManifestError& e) {
    std::cout << condwalk::to_json(e.diagnostics()).dump(2) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
