#include "condwalk/runner.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "condwalk/chain.hpp"
#include "condwalk/coupling.hpp"
#include "condwalk/diffusion.hpp"
#include "condwalk/escape.hpp"
#include "condwalk/excursion.hpp"
#include "condwalk/kmt.hpp"
#include "condwalk/levels.hpp"
#include "condwalk/parallel.hpp"
#include "condwalk/potential.hpp"

namespace condwalk {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- manifest

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"potential", "walk", "bm",
                                              "couple", "kmt", "escape-stats"};
  return names;
}

json default_params(const std::string& sub) {
  if (sub == "potential") {
    return {{"x", 1}, {"y", 0}, {"avoid", json::array({json::array({0, 0})})},
            {"avoid_radius", 100}};
  }
  if (sub == "walk") {
    return {{"chain", "hatS"},
            {"avoid", json::array({json::array({0, 0}), json::array({1, 0})})},
            {"avoid_radius", 100},
            {"start", json::array({1, 0})},
            {"stop", {{"kind", "steps"}, {"value", 1000}}},
            {"write_paths", true}};
  }
  if (sub == "bm") {
    return {{"process", "hatW"},
            {"rho", rho0()},
            {"variance", 0.5},
            {"dt", 1e-3 * rho0() * rho0()},
            {"start", json::array({2.0, 0.0})},
            {"stop", {{"kind", "time"}, {"value", 100.0}}},
            {"write_paths", true},
            {"excursions", 0},
            {"excursion_level", 3}};
  }
  if (sub == "couple") {
    const CouplingParams p;
    return {{"h", p.h},
            {"levels", p.max_excursions},
            {"D", p.D},
            {"beta", p.beta},
            {"alpha", p.alpha},
            {"epsilon", p.epsilon},
            {"max_level", p.max_level},
            {"max_tries", p.max_tries},
            {"stop_at_catastrophe", p.stop_at_catastrophe}};
  }
  if (sub == "kmt") {
    return {{"log2_n", json::array({10, 12, 14, 16})},
            {"write_paths", false},
            {"path_log2_n", 10}};
  }
  if (sub == "escape-stats") {
    return {{"process", "hatS"},
            {"horizon", 1e6},
            {"per_doubling", 1},
            {"avoid", json::array({json::array({0, 0}), json::array({1, 0})})},
            {"avoid_radius", 100},
            {"rho", rho0()},
            {"test_function", {{"kind", "constant"}, {"delta", 0.45}}},
            {"envelope_delta", 0.45},
            {"lil_n_min", 1e7},
            {"write_curves", true}};
  }
  throw std::invalid_argument("unknown subcommand: " + sub);
}

json to_json(const RunManifest& m) {
  return {{"schema_version", m.schema_version},
          {"subcommand", m.subcommand},
          {"seed", m.seed},
          {"replicas", m.replicas},
          {"out", m.out},
          {"params", m.params}};
}

RunManifest with_defaults(RunManifest m) {
  json p = default_params(m.subcommand);
  for (auto& [key, value] : m.params.items()) {
    if (p.contains(key) && p[key].is_object() && value.is_object()) {
      p[key].update(value);
    } else {
      p[key] = value;
    }
  }
  m.params = std::move(p);
  return m;
}

ManifestError::ManifestError(std::vector<Diagnostic> d)
    : std::runtime_error([&] {
        std::string s = "invalid manifest:";
        for (const auto& x : d) {
          if (x.severity == "error") s += " " + x.field + ": " + x.message + ";";
        }
        return s;
      }()),
      diagnostics_(std::move(d)) {}

RunManifest manifest_from_json(const json& j) {
  auto diag = validate(j);
  if (has_errors(diag)) throw ManifestError(std::move(diag));
  RunManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  m.subcommand = j.at("subcommand").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.replicas = j.value("replicas", std::uint64_t{1});
  m.out = j.value("out", std::string{});
  m.params = j.value("params", json::object());
  return m;
}

json to_json(const std::vector<Diagnostic>& d) {
  json a = json::array();
  for (const auto& x : d) {
    a.push_back({{"field", x.field}, {"severity", x.severity}, {"message", x.message}});
  }
  return a;
}

bool has_errors(const std::vector<Diagnostic>& d) {
  for (const auto& x : d) {
    if (x.severity == "error") return true;
  }
  return false;
}

// ---------------------------------------------------------------- validate

namespace {

struct Checker {
  std::vector<Diagnostic> out;
  void error(std::string f, std::string m) { out.push_back({std::move(f), "error", std::move(m)}); }
  void warn(std::string f, std::string m) { out.push_back({std::move(f), "warning", std::move(m)}); }
};

bool same_kind(const json& def, const json& v) {
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return true;
}

// Structural check of params against the defaults; integers must stay
// integers.
void check_shape(Checker& c, const json& def, const json& v, const std::string& path) {
  for (auto& [key, value] : v.items()) {
    const std::string f = path + "." + key;
    if (!def.contains(key)) {
      // test_function.delta is optional, test_function may omit it
      c.error(f, "unknown parameter");
      continue;
    }
    const json& d = def[key];
    if (!same_kind(d, value)) {
      c.error(f, std::string("expected ") + d.type_name() + ", got " + value.type_name());
      continue;
    }
    if (d.is_number_integer() && !value.is_number_integer()) {
      c.error(f, "must be an integer");
    } else if (d.is_number_unsigned() && value.is_number_integer() && value.get<std::int64_t>() < 0) {
      c.error(f, "must be non-negative");
    } else if (d.is_object()) {
      check_shape(c, d, value, f);
    }
  }
}

bool site_list(Checker& c, const json& v, const std::string& f, std::size_t min_size) {
  if (!v.is_array() || v.size() < min_size) {
    c.error(f, "expected a list of at least " + std::to_string(min_size) + " [x, y] sites");
    return false;
  }
  for (const auto& s : v) {
    if (!s.is_array() || s.size() != 2 || !s[0].is_number_integer() || !s[1].is_number_integer()) {
      c.error(f, "sites must be integer pairs [x, y]");
      return false;
    }
  }
  return true;
}

bool point(Checker& c, const json& v, const std::string& f, bool integer) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number() ||
      (integer && (!v[0].is_number_integer() || !v[1].is_number_integer()))) {
    c.error(f, integer ? "expected an integer pair [x, y]" : "expected a pair [x, y]");
    return false;
  }
  return true;
}

bool contains_origin(const json& sites) {
  for (const auto& s : sites) {
    if (s[0].get<std::int64_t>() == 0 && s[1].get<std::int64_t>() == 0) return true;
  }
  return false;
}

void check_params(Checker& c, const std::string& sub, const json& p) {
  const std::string f = "params";
  auto num = [&](const char* k) { return p.at(k).get<double>(); };
  if (sub == "potential" || sub == "walk" || sub == "escape-stats") {
    if (site_list(c, p.at("avoid"), f + ".avoid", 1) && !contains_origin(p.at("avoid"))) {
      c.error(f + ".avoid", "the avoided set must contain the origin");
    }
    if (p.at("avoid_radius").get<std::int64_t>() < 8) {
      c.error(f + ".avoid_radius", "must be at least 8");
    }
  }
  if (sub == "walk") {
    const auto chain = p.at("chain").get<std::string>();
    if (chain != "srw" && chain != "hatS" && chain != "hatSA") {
      c.error(f + ".chain", "one of srw, hatS, hatSA");
    }
    point(c, p.at("start"), f + ".start", true);
    const auto kind = p.at("stop").value("kind", std::string{});
    if (kind != "steps" && kind != "exit_radius") {
      c.error(f + ".stop.kind", "one of steps, exit_radius");
    }
    if (!(p.at("stop").at("value").get<double>() > 0.0)) {
      c.error(f + ".stop.value", "must be positive");
    }
  }
  if (sub == "bm") {
    const auto proc = p.at("process").get<std::string>();
    if (proc != "hatW" && proc != "bm") c.error(f + ".process", "one of hatW, bm");
    const double rho = num("rho");
    const double dt = num("dt");
    if (!(rho > 0.0)) c.error(f + ".rho", "must be positive");
    if (!(num("variance") > 0.0)) c.error(f + ".variance", "must be positive");
    if (!(dt > 0.0)) {
      c.error(f + ".dt", "must be positive");
    } else if (proc == "hatW" && dt > 1e-3 * rho * rho) {
      c.error(f + ".dt", "must not exceed 1e-3 rho^2 for the conditioned process");
    }
    if (point(c, p.at("start"), f + ".start", false) && proc == "hatW") {
      const double r = std::hypot(p["start"][0].get<double>(), p["start"][1].get<double>());
      if (!(r > rho)) c.error(f + ".start", "must lie outside the disk of radius rho");
    }
    const auto kind = p.at("stop").value("kind", std::string{});
    if (kind != "time" && kind != "exit_radius") {
      c.error(f + ".stop.kind", "one of time, exit_radius");
    }
    if (!(p.at("stop").at("value").get<double>() > 0.0)) {
      c.error(f + ".stop.value", "must be positive");
    }
    if (p.at("excursions").get<std::int64_t>() < 0) {
      c.error(f + ".excursions", "must be non-negative");
    }
    if (p.at("excursion_level").get<std::int64_t>() < 2) {
      c.error(f + ".excursion_level", "must be at least 2");
    }
  }
  if (sub == "couple") {
    const double beta = num("beta");
    const double alpha = num("alpha");
    if (p.at("h").get<std::int64_t>() < 3) c.error(f + ".h", "must be at least 3");
    if (!(num("D") > 0.0)) c.error(f + ".D", "must be positive");
    if (!(beta > 0.0)) c.error(f + ".beta", "must be positive");
    if (!(num("epsilon") > 0.0)) c.error(f + ".epsilon", "must be positive");
    if (p.at("levels").get<std::int64_t>() < 1) c.error(f + ".levels", "must be positive");
    if (p.at("max_tries").get<std::int64_t>() < 1) c.error(f + ".max_tries", "must be positive");
    if (beta <= 8.0) {
      c.warn(f + ".beta",
             "beta <= 8: the catastrophe probabilities are only summable "
             "\"when D>3C and beta>8\"");
    }
    if (alpha <= 3.0 * (beta + 1.0)) {
      c.warn(f + ".alpha",
             "alpha <= 3(beta+1): the modulus bound holds \"for any "
             "alpha>3(beta+1)\"");
    }
  }
  if (sub == "kmt") {
    const auto& l = p.at("log2_n");
    if (l.empty()) c.error(f + ".log2_n", "must not be empty");
    for (const auto& j : l) {
      if (!j.is_number_integer() || j.get<std::int64_t>() < 1 || j.get<std::int64_t>() > 26) {
        c.error(f + ".log2_n", "entries must be integers in [1, 26]");
        break;
      }
    }
    const auto pl = p.at("path_log2_n").get<std::int64_t>();
    if (pl < 1 || pl > 26) c.error(f + ".path_log2_n", "must be in [1, 26]");
  }
  if (sub == "escape-stats") {
    const auto proc = p.at("process").get<std::string>();
    if (proc != "hatS" && proc != "hatSA" && proc != "hatW") {
      c.error(f + ".process", "one of hatS, hatSA, hatW");
    }
    const double horizon = num("horizon");
    const double n_min = num("lil_n_min");
    if (!(horizon >= 16.0)) c.error(f + ".horizon", "must be at least 16");
    if (p.at("per_doubling").get<std::int64_t>() < 1) c.error(f + ".per_doubling", "must be positive");
    if (!(num("rho") > 0.0)) c.error(f + ".rho", "must be positive");
    const auto& tf = p.at("test_function");
    const auto kind = tf.value("kind", std::string{});
    if (kind != "constant" && kind != "exp_half") {
      c.error(f + ".test_function.kind", "one of constant, exp_half");
    }
    if (!(n_min > std::exp(std::numbers::e))) {
      c.error(f + ".lil_n_min", "ln ln ln n must be positive: need n_min > e^e");
    } else if (n_min < 1e7) {
      c.warn(f + ".lil_n_min", "the triple-log statistic is meant for n >= 1e7");
    }
    if (horizon < 4.0 * n_min) {
      c.warn(f + ".horizon",
             "horizon below 4 * lil_n_min: the running-max statistic is "
             "outside the triple-log domain and will be skipped");
    }
  }
}

}  // namespace

std::vector<Diagnostic> validate(const json& j) {
  Checker c;
  if (!j.is_object()) {
    c.error("", "manifest must be a JSON object");
    return c.out;
  }
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer()) {
    c.error("schema_version", "missing or not an integer");
  } else if (j["schema_version"].get<int>() != kSchemaVersion) {
    c.error("schema_version", "expected " + std::to_string(kSchemaVersion));
  }
  std::string sub;
  if (!j.contains("subcommand") || !j["subcommand"].is_string()) {
    c.error("subcommand", "missing or not a string");
  } else {
    sub = j["subcommand"].get<std::string>();
    bool known = false;
    for (const auto& s : subcommands()) known = known || s == sub;
    if (!known) {
      c.error("subcommand", "unknown subcommand '" + sub + "'");
      sub.clear();
    }
  }
  if (!j.contains("seed") || !j["seed"].is_number_integer() ||
      (j["seed"].is_number_integer() && !j["seed"].is_number_unsigned() &&
       j["seed"].get<std::int64_t>() < 0)) {
    c.error("seed", "missing or not a non-negative 64-bit integer");
  }
  if (j.contains("replicas") &&
      (!j["replicas"].is_number_integer() || j["replicas"].get<std::int64_t>() < 1)) {
    c.error("replicas", "must be a positive integer");
  }
  if (j.contains("out") && !j["out"].is_string()) c.error("out", "must be a string");
  if (!sub.empty() && sub != "potential" &&
      (!j.contains("out") || !j["out"].is_string() || j["out"].get<std::string>().empty())) {
    c.error("out", "an output directory is required");
  }
  for (auto& [key, value] : j.items()) {
    if (key != "schema_version" && key != "subcommand" && key != "seed" &&
        key != "replicas" && key != "out" && key != "params") {
      c.error(key, "unknown field");
    }
  }
  if (j.contains("params") && !j["params"].is_object()) {
    c.error("params", "must be an object");
    return c.out;
  }
  if (sub.empty() || has_errors(c.out)) return c.out;

  const json def = default_params(sub);
  const json given = j.value("params", json::object());
  check_shape(c, def, given, "params");
  if (has_errors(c.out)) return c.out;
  RunManifest m;
  m.subcommand = sub;
  m.params = given;
  try {
    check_params(c, sub, with_defaults(m).params);
  } catch (const json::exception& e) {
    c.error("params", e.what());
  }
  return c.out;
}

// ---------------------------------------------------------------- output

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::vector<std::string>& header) {
  for (const auto& h : header) cell(h);
  end_row();
}

void CsvWriter::sep() {
  if (row_open_) buf_ += ',';
  row_open_ = true;
}

CsvWriter& CsvWriter::cell(double v) {
  sep();
  buf_ += format_double(v);
  return *this;
}

CsvWriter& CsvWriter::cell(std::int64_t v) {
  sep();
  buf_ += std::to_string(v);
  return *this;
}

CsvWriter& CsvWriter::cell(std::uint64_t v) {
  sep();
  buf_ += std::to_string(v);
  return *this;
}

CsvWriter& CsvWriter::cell(const std::string& v) {
  sep();
  buf_ += v;
  return *this;
}

CsvWriter& CsvWriter::empty() {
  sep();
  return *this;
}

void CsvWriter::end_row() {
  buf_ += '\n';
  row_open_ = false;
}

namespace {
constexpr const char* kPartialMarker = ".partial";

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw std::runtime_error("write failed: " + p.string());
}
}  // namespace

OutputDir::OutputDir(fs::path dir, bool force) : dir_(std::move(dir)) {
  if (fs::exists(dir_)) {
    if (!fs::is_directory(dir_)) {
      throw std::runtime_error(dir_.string() + " exists and is not a directory");
    }
    if (!fs::is_empty(dir_)) {
      if (!force) {
        throw std::runtime_error("output directory " + dir_.string() +
                                 " is not empty (use --force to replace a previous run)");
      }
      if (!fs::exists(dir_ / "manifest.json") && !fs::exists(dir_ / kPartialMarker)) {
        throw std::runtime_error("refusing to replace " + dir_.string() +
                                 ": it does not hold a previous run");
      }
      fs::remove_all(dir_);
    }
  }
  fs::create_directories(dir_);
  write_file(dir_ / kPartialMarker, "run in progress\n");
}

void OutputDir::write(const std::string& name, const std::string& content) {
  const fs::path target = dir_ / name;
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  write_file(tmp, content);
  fs::rename(tmp, target);
}

void OutputDir::log(const std::string& line) { log_ += line + '\n'; }

void OutputDir::commit() {
  write("run.log", log_);
  fs::remove(dir_ / kPartialMarker);
}

// ---------------------------------------------------------------- subcommands

namespace {

std::vector<LatticeSite> sites_of(const json& a) {
  std::vector<LatticeSite> s;
  for (const auto& p : a) s.push_back({p[0].get<std::int64_t>(), p[1].get<std::int64_t>()});
  return s;
}

std::shared_ptr<const AvoidSet> avoid_of(const json& p) {
  auto sites = sites_of(p.at("avoid"));
  if (sites.size() == 1) return AvoidSet::origin_only();
  return std::make_shared<const AvoidSet>(
      AvoidSet::build(std::move(sites), p.at("avoid_radius").get<int>()));
}

json avoid_json(const AvoidSet& a) {
  json sites = json::array();
  for (const auto& s : a.sites()) sites.push_back({s.x, s.y});
  return {{"sites", sites}, {"radius", a.radius()}, {"capacity", a.capacity()}};
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string replica_name(const std::string& stem, std::uint64_t r, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%05" PRIu64, r);
  return stem + buf + ext;
}

json run_potential(const RunManifest& m, std::ostream& console) {
  const auto& p = m.params;
  const LatticeSite x{p.at("x").get<std::int64_t>(), p.at("y").get<std::int64_t>()};
  const auto pot = PotentialTable::shared();
  const auto avoid = avoid_of(p);
  json r = {{"x", {x.x, x.y}},
            {"a", pot->a(x)},
            {"q_A", avoid->q(x)},
            {"cap", avoid->capacity()},
            {"avoid", avoid_json(*avoid)}};
  if (!avoid->contains(x)) r["escape_probability"] = escape_probability(x, *avoid);
  console << r.dump(2) << "\n";
  return r;
}

json run_walk(const RunManifest& m, OutputDir& out) {
  const auto& p = m.params;
  const auto chain = p.at("chain").get<std::string>();
  ChainSpec spec = chain == "srw"   ? ChainSpec::srw()
                   : chain == "hatS" ? ChainSpec::hat_s()
                                     : ChainSpec::hat_s_a(avoid_of(p));
  const LatticeSite start{p["start"][0].get<std::int64_t>(), p["start"][1].get<std::int64_t>()};
  if (spec.forbidden(start)) throw std::invalid_argument("params.start is a forbidden site");
  const auto& stop = p.at("stop");
  const StopRule rule =
      stop.at("kind") == "steps"
          ? StopRule::fixed_steps(static_cast<std::uint64_t>(stop.at("value").get<double>()))
          : StopRule::exit_radius(stop.at("value").get<double>());
  const bool paths = p.at("write_paths").get<bool>();

  struct Summary {
    std::uint64_t steps = 0;
    LatticeSite final_site;
    double min_radius = 0.0, max_radius = 0.0;
    std::string csv;
  };
  auto results = parallel_map<Summary>(m.replicas, [&](std::size_t r) {
    const auto tr = sample_path(spec, start, rule, StreamId{m.seed, StreamTag::kWalk, r});
    Summary s;
    s.steps = tr.sites.size() - 1;
    s.final_site = tr.sites.back();
    s.min_radius = std::numeric_limits<double>::infinity();
    for (const auto& x : tr.sites) {
      const double rr = std::sqrt(static_cast<double>(x.norm2()));
      s.min_radius = std::min(s.min_radius, rr);
      s.max_radius = std::max(s.max_radius, rr);
    }
    if (paths) {
      CsvWriter csv({"n", "x", "y"});
      for (std::size_t n = 0; n < tr.sites.size(); ++n) {
        csv.cell(static_cast<std::uint64_t>(n)).cell(tr.sites[n].x).cell(tr.sites[n].y).end_row();
      }
      s.csv = csv.str();
    }
    return s;
  });
  json reps = json::array();
  for (std::size_t r = 0; r < results.size(); ++r) {
    const auto& s = results[r];
    if (paths) out.write("paths/" + replica_name("walk", r, ".csv"), s.csv);
    reps.push_back({{"replica", r},
                    {"steps", s.steps},
                    {"final", {s.final_site.x, s.final_site.y}},
                    {"min_radius", s.min_radius},
                    {"max_radius", s.max_radius}});
  }
  return {{"chain", chain}, {"replicas", reps}};
}

json run_bm(const RunManifest& m, OutputDir& out) {
  const auto& p = m.params;
  const auto proc = p.at("process").get<std::string>();
  DiffusionSpec spec{p.at("rho").get<double>(), p.at("dt").get<double>(),
                     p.at("variance").get<double>()};
  const PlanePoint start{p["start"][0].get<double>(), p["start"][1].get<double>()};
  const auto& stop = p.at("stop");
  const bool by_time = stop.at("kind") == "time";
  const double limit = stop.at("value").get<double>();
  const bool paths = p.at("write_paths").get<bool>();
  const auto excursions = p.at("excursions").get<std::uint64_t>();
  const int level = p.at("excursion_level").get<int>();

  struct Summary {
    TimedPath path;
    std::uint64_t reflections = 0;
    std::vector<ExcursionRecord> exc;
  };
  auto results = parallel_map<Summary>(m.replicas, [&](std::size_t r) {
    Summary s;
    const StreamId id{m.seed, proc == "hatW" ? StreamTag::kHatW : StreamTag::kBrownian, r};
    if (proc == "bm") {
      s.path = sample_bm_path(start, spec, by_time ? BmStopRule::at_time(limit)
                                                   : BmStopRule::exit_radius(limit),
                              id);
    } else {
      spec.validate();
      HatWProcess w(spec, start, id);
      s.path.times.push_back(0.0);
      s.path.points.push_back(w.position());
      const double t_limit = by_time ? limit : std::numeric_limits<double>::infinity();
      while (by_time ? w.time() < limit : w.radius() < limit) {
        if (w.steps() >= spec.max_steps) throw std::runtime_error("bm: step cap exceeded");
        w.step(t_limit);
        s.path.times.push_back(w.time());
        s.path.points.push_back(w.position());
      }
      s.reflections = w.reflections();
    }
    if (excursions > 0) {
      BmExcursionParams ep{spec.rho, spec.per_coordinate_variance};
      s.exc = chain_hatW_excursions(level, 0.0, excursions,
                                    ExcursionStreams{m.seed, r}, ep);
    }
    return s;
  });
  json reps = json::array();
  std::map<std::pair<int, int>, std::uint64_t> transitions;
  for (std::size_t r = 0; r < results.size(); ++r) {
    const auto& s = results[r];
    if (paths) {
      CsvWriter csv({"t", "x", "y"});
      for (std::size_t i = 0; i < s.path.times.size(); ++i) {
        csv.cell(s.path.times[i]).cell(s.path.points[i].x).cell(s.path.points[i].y).end_row();
      }
      out.write("paths/" + replica_name("bm", r, ".csv"), csv.str());
    }
    json e = json::array();
    if (!s.exc.empty()) {
      CsvWriter csv({"k", "m_from", "m_to", "duration", "tries"});
      for (const auto& x : s.exc) {
        csv.cell(x.k).cell(x.level_from).cell(x.level_to).cell(x.duration).cell(x.tries).end_row();
        ++transitions[{x.level_from, x.level_to}];
      }
      out.write("excursions/" + replica_name("excursions", r, ".csv"), csv.str());
    }
    const auto& last = s.path.points.back();
    reps.push_back({{"replica", r},
                    {"steps", s.path.times.size() - 1},
                    {"final_time", s.path.times.back()},
                    {"final", {last.x, last.y}},
                    {"reflections", s.reflections},
                    {"excursions", s.exc.size()}});
  }
  json tr = json::array();
  for (const auto& [k, n] : transitions) {
    tr.push_back({{"from", k.first}, {"to", k.second}, {"count", n}});
  }
  return {{"process", proc}, {"replicas", reps}, {"level_transitions", tr}};
}

const char* step_status(const CouplingTranscript& tr, std::size_t k) {
  if (k == 0) return "start";
  if (k - 1 < tr.steps.size()) return to_string(tr.steps[k - 1].outcome);
  return "independent";
}

json run_couple(const RunManifest& m, OutputDir& out) {
  const auto& p = m.params;
  CouplingParams cp;
  cp.h = p.at("h").get<int>();
  cp.max_excursions = p.at("levels").get<std::uint64_t>();
  cp.D = p.at("D").get<double>();
  cp.beta = p.at("beta").get<double>();
  cp.alpha = p.at("alpha").get<double>();
  cp.epsilon = p.at("epsilon").get<double>();
  cp.max_level = p.at("max_level").get<int>();
  cp.max_tries = p.at("max_tries").get<std::uint64_t>();
  cp.stop_at_catastrophe = p.at("stop_at_catastrophe").get<bool>();
  cp.validate();
  const PiWeights pi(cp.level_cap() + 1);
  const auto ex = coupling_experiment(cp, pi, m.replicas, m.seed, true);

  json runs = json::array();
  for (std::size_t r = 0; r < ex.runs.size(); ++r) {
    const auto& tr = ex.runs[r].transcript;
    CsvWriter csv({"k", "m_k", "mu_k", "t_k", "tau_k", "status", "tries"});
    const std::size_t rows = std::max(tr.m.size(), tr.mu.size());
    for (std::size_t k = 0; k < rows; ++k) {
      csv.cell(static_cast<std::uint64_t>(k));
      if (k < tr.m.size()) csv.cell(tr.m[k]); else csv.empty();
      if (k < tr.mu.size()) csv.cell(tr.mu[k]); else csv.empty();
      if (k < tr.t.size()) csv.cell(tr.t[k]); else csv.empty();
      if (k < tr.tau.size()) csv.cell(tr.tau[k]); else csv.empty();
      csv.cell(std::string(step_status(tr, k)));
      if (k >= 1 && k - 1 < tr.steps.size()) csv.cell(tr.steps[k - 1].tries); else csv.cell(std::uint64_t{0});
      csv.end_row();
    }
    out.write("transcripts/" + replica_name("transcript", r, ".csv"), csv.str());
    const auto check = transcript_bound_check(tr);
    json run = {{"replica", r},
                {"coupled_steps", tr.steps.size()},
                {"catastrophe_step", tr.catastrophe_step ? json(*tr.catastrophe_step) : json(nullptr)},
                {"catastrophe_cause", to_string(tr.catastrophe_cause)},
                {"hard_bounds_ok", check.hard_ok},
                {"violations", check.violations},
                {"max_gap_ratio", check.max_gap_ratio},
                {"max_cumulative_ratio", check.max_cumulative_ratio},
                {"growth_checked", check.growth_checked},
                {"growth_violations", check.growth_violations}};
    runs.push_back(run);
  }
  json levels = json::array();
  for (std::size_t lv = 0; lv < ex.visits.size(); ++lv) {
    if (ex.visits[lv] == 0) continue;
    json causes = json::object();
    for (int a = 1; a <= 4; ++a) {
      causes[to_string(static_cast<Assumption>(a))] = ex.causes[lv][static_cast<std::size_t>(a)];
    }
    levels.push_back({{"level", lv},
                      {"visits", ex.visits[lv]},
                      {"catastrophes", ex.catastrophes[lv]},
                      {"p_hat", static_cast<double>(ex.catastrophes[lv]) / ex.visits[lv]},
                      {"causes", causes}});
  }
  const auto tail = level_tail_report(ex.visits, ex.catastrophes, 1);
  return {{"h", cp.h},
          {"replicas", ex.replicas},
          {"runs_with_catastrophe", ex.runs_with_catastrophe},
          {"catastrophe_probability", ex.catastrophe_probability},
          {"catastrophe_stderr", ex.catastrophe_stderr},
          {"bounds_ok", ex.bounds_ok},
          {"kmt_steps", ex.kmt_steps},
          {"total_tries", ex.total_tries},
          {"coupled_steps", ex.coupled_steps},
          {"levels", levels},
          {"weighted_tail", {{"levels", tail.levels},
                             {"weighted", tail.weighted},
                             {"partial", tail.partial},
                             {"tail_fraction", tail.tail_fraction}}},
          {"runs", runs}};
}

json run_kmt(const RunManifest& m, OutputDir& out) {
  const auto& p = m.params;
  const auto log2_n = p.at("log2_n").get<std::vector<int>>();
  const auto rep = kmt_discrepancy_study(log2_n, m.replicas, StreamId{m.seed, StreamTag::kKmt});
  if (p.at("write_paths").get<bool>()) {
    const std::uint64_t n = 1ULL << p.at("path_log2_n").get<int>();
    for (std::uint64_t r = 0; r < m.replicas; ++r) {
      const StreamId id{m.seed, StreamTag::kKmt, r, 1};
      const auto pair = lift_to_2d(dyadic_couple_1d(n, id.sub(0)), dyadic_couple_1d(n, id.sub(1)));
      CsvWriter csv({"k", "S1", "S2", "W1", "W2"});
      for (std::size_t k = 0; k < pair.S.size(); ++k) {
        csv.cell(static_cast<std::uint64_t>(k))
            .cell(pair.S[k].x)
            .cell(pair.S[k].y)
            .cell(pair.W[k].x)
            .cell(pair.W[k].y)
            .end_row();
      }
      out.write("paths/" + replica_name("coupled", r, ".csv"), csv.str());
    }
  }
  return {{"log2_n", rep.log2_n},
          {"median", rep.median},
          {"slope", rep.slope},
          {"intercept", rep.intercept},
          {"r2", rep.r2},
          {"lambda", rep.lambda},
          {"tail_r2", rep.tail_r2},
          {"tail_x", rep.tail_x},
          {"tail_prob", rep.tail_prob}};
}

json crossing_json(const CrossingReport& c) {
  return {{"name", c.name},
          {"mode", to_string(c.mode)},
          {"mean_upper_crossings", c.mean_upper_crossings},
          {"late_fraction", c.late_fraction},
          {"horizon", c.horizon},
          {"replicas", c.replicas},
          {"crossings", c.crossings},
          {"upper_crossings", c.upper_crossings},
          {"upper_fraction", c.upper_fraction},
          {"caveat", c.caveat}};
}

json run_escape(const RunManifest& m, OutputDir& out) {
  const auto& p = m.params;
  EscapeRunConfig cfg;
  const auto proc = p.at("process").get<std::string>();
  cfg.process = proc == "hatS"    ? EscapeProcess::kHatS
                : proc == "hatSA" ? EscapeProcess::kHatSA
                                  : EscapeProcess::kHatW;
  cfg.horizon = p.at("horizon").get<double>();
  cfg.per_doubling = p.at("per_doubling").get<int>();
  if (cfg.process == EscapeProcess::kHatSA) cfg.avoid = avoid_of(p);
  cfg.diffusion = DiffusionSpec::srw_matched(p.at("rho").get<double>());
  const auto& tfj = p.at("test_function");
  const TestFunction tf = tfj.at("kind") == "exp_half"
                              ? TestFunction::exp_half()
                              : TestFunction::constant(tfj.value("delta", 0.45));
  if (!test_function_valid(tf, cfg.horizon)) {
    throw std::invalid_argument("params.test_function violates the monotonicity conditions");
  }
  const auto runs = escape_trajectories(cfg, m.replicas, m.seed);
  const double env_delta = p.at("envelope_delta").get<double>();
  const double n_min = p.at("lil_n_min").get<double>();
  json report = {{"process", proc},
                 {"horizon", cfg.horizon},
                 {"per_doubling", cfg.per_doubling},
                 {"test_function", tf.name},
                 {"integral_finite", tf.integral_finite}};
  for (const auto mode : {MinimaMode::kWindow, MinimaMode::kTailClosure}) {
    json section = {{"integral_test", crossing_json(integral_test(tf, runs, mode))},
                    {"envelope_test", crossing_json(envelope_test(env_delta, runs, mode))}};
    if (cfg.horizon >= 4.0 * n_min) {
      const auto lil = lil_report(runs, n_min, mode);
      json finals = json::array(), stab = json::array();
      for (const auto& s : lil.series) {
        finals.push_back(s.final_value);
        stab.push_back(s.stability);
      }
      section["lil"] = {{"n_min", n_min},
                        {"mean_final", lil.mean_final},
                        {"median_final", lil.median_final},
                        {"stderr_final", lil.stderr_final},
                        {"mean_stability", lil.mean_stability},
                        {"final", finals},
                        {"stability", stab},
                        {"caveat", lil.caveat}};
    } else {
      section["lil"] = nullptr;
    }
    report[to_string(mode)] = section;
  }
  if (p.at("write_curves").get<bool>()) {
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const auto fm = runs[r].minima();
      CsvWriter csv({"n", "M_n", "threshold", "ratio"});
      for (std::size_t j = 0; j < fm.n.size(); ++j) {
        if (fm.n[j] < 3.0) continue;
        const double th = tf.threshold(fm.n[j]);
        csv.cell(fm.n[j]).cell(fm.values[j]).cell(th).cell(fm.values[j] / th).end_row();
      }
      out.write("curves/" + replica_name("curve", r, ".csv"), csv.str());
    }
  }
  return report;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace

int run(const RunManifest& manifest, bool force, std::ostream& console) {
  const auto diag = validate(to_json(manifest));
  for (const auto& d : diag) {
    if (d.severity == "warning") console << "warning: " << d.field << ": " << d.message << "\n";
  }
  if (has_errors(diag)) {
    console << to_json(diag).dump(2) << "\n";
    return 2;
  }
  const RunManifest m = with_defaults(manifest);
  if (m.subcommand == "potential" && m.out.empty()) {
    run_potential(m, console);
    return 0;
  }
  OutputDir out(m.out, force);
  const auto t0 = std::chrono::steady_clock::now();
  out.log(timestamp() + " start " + m.subcommand + " seed=" + std::to_string(m.seed) +
          " replicas=" + std::to_string(m.replicas) + " threads=" + std::to_string(thread_count()));
  for (const auto& d : diag) out.log("warning " + d.field + ": " + d.message);
  json summary;
  if (m.subcommand == "potential") {
    summary = run_potential(m, console);
  } else if (m.subcommand == "walk") {
    summary = run_walk(m, out);
  } else if (m.subcommand == "bm") {
    summary = run_bm(m, out);
  } else if (m.subcommand == "couple") {
    summary = run_couple(m, out);
  } else if (m.subcommand == "kmt") {
    summary = run_kmt(m, out);
  } else {
    summary = run_escape(m, out);
  }
  summary["schema_version"] = kSchemaVersion;
  out.write("summary.json", dump(summary));
  out.write("manifest.json", dump(to_json(m)));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.log(timestamp() + " done in " + format_double(secs) + " s");
  out.commit();
  return 0;
}

}  // namespace condwalk
