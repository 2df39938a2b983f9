#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "condwalk/runner.hpp"

using namespace condwalk;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("condwalk_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

json manifest(const std::string& sub, json params, const std::string& out = "") {
  return {{"schema_version", kSchemaVersion}, {"subcommand", sub}, {"seed", 7},
          {"replicas", 3}, {"out", out}, {"params", std::move(params)}};
}

bool has_field(const std::vector<Diagnostic>& d, const std::string& field, const std::string& severity) {
  for (const auto& x : d) {
    if (x.field == field && x.severity == severity) return true;
  }
  return false;
}

std::string capture(const std::string& cmd) {
  std::string out;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  pclose(p);
  return out;
}

}  // namespace

TEST_SUITE("runner") {

TEST_CASE("manifest round trip") {
  RunManifest m;
  m.subcommand = "couple";
  m.seed = 123456789012345ULL;
  m.replicas = 10;
  m.out = "runs/a";
  m.params = {{"h", 8}, {"beta", 9.5}};
  m = with_defaults(m);
  const auto back = manifest_from_json(json::parse(to_json(m).dump()));
  CHECK(back == m);
  CHECK(back.params.at("alpha") == 30.0);
}

TEST_CASE("validation") {
  SUBCASE("well-formed manifests give no diagnostics") {
    CHECK(validate(manifest("potential", {{"x", 3}, {"y", -2}})).empty());
    CHECK(validate(manifest("couple", {{"alpha", 31.0}}, "o")).empty());
    CHECK(validate(manifest("kmt", json::object(), "o")).empty());
  }
  SUBCASE("beta = 5 warns") {
    const auto d = validate(manifest("couple", {{"beta", 5.0}, {"alpha", 31.0}}, "o"));
    CHECK(has_field(d, "params.beta", "warning"));
    CHECK(!has_errors(d));
    CHECK(d[0].message.find("when D>3C and beta>8") != std::string::npos);
  }
  SUBCASE("alpha = 20 with beta = 9 warns") {
    const auto d = validate(manifest("couple", {{"beta", 9.0}, {"alpha", 20.0}}, "o"));
    REQUIRE(d.size() == 1);
    CHECK(has_field(d, "params.alpha", "warning"));
    CHECK(d[0].message.find("for any alpha>3(beta+1)") != std::string::npos);
  }
  SUBCASE("errors") {
    auto j = manifest("walk", json::object(), "o");
    j["schema_version"] = 99;
    CHECK(has_field(validate(j), "schema_version", "error"));
    j = manifest("walk", {{"bogus", 1}}, "o");
    CHECK(has_errors(validate(j)));
    j = manifest("walk", {{"avoid", {{1, 0}}}}, "o");
    CHECK(has_field(validate(j), "params.avoid", "error"));
    j = manifest("couple", {{"h", 6.5}}, "o");
    CHECK(has_errors(validate(j)));
    j = manifest("walk", json::object());
    CHECK(has_field(validate(j), "out", "error"));
    j = manifest("nope", json::object(), "o");
    CHECK(has_field(validate(j), "subcommand", "error"));
    j.erase("seed");
    CHECK(has_field(validate(j), "seed", "error"));
    CHECK(has_errors(validate(json::array())));
    CHECK_THROWS_AS(manifest_from_json(j), ManifestError);
  }
}

TEST_CASE("CSV formatting") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CsvWriter w({"k", "x"});
  w.cell(1).cell(0.5);
  w.end_row();
  w.cell(std::string("a")).empty();
  w.end_row();
  CHECK(w.str() == "k,x\n1,0.5\na,\n");
}

TEST_CASE("output directories") {
  const auto dir = scratch("outdir");
  {
    OutputDir out(dir, false);
    CHECK(fs::exists(dir / ".partial"));
    out.write("sub/file.csv", "x\n");
    CHECK(slurp(dir / "sub/file.csv") == "x\n");
    CHECK(!fs::exists(dir / "sub/file.csv.tmp"));
    out.write("manifest.json", "{}\n");
    out.log("line");
    out.commit();
  }
  CHECK(!fs::exists(dir / ".partial"));
  CHECK(slurp(dir / "run.log") == "line\n");
  CHECK_THROWS_AS(OutputDir(dir, false), std::runtime_error);
  CHECK_NOTHROW(OutputDir(dir, true));
  const auto other = scratch("foreign");
  fs::create_directories(other);
  std::ofstream(other / "keep.txt") << "mine";
  CHECK_THROWS_AS(OutputDir(other, true), std::runtime_error);
  CHECK(fs::exists(other / "keep.txt"));
  fs::remove_all(dir);
  fs::remove_all(other);
}

TEST_CASE("potential subcommand prints a") {
  std::ostringstream console;
  RunManifest m;
  m.subcommand = "potential";
  m.params = {{"x", 1}, {"y", 0}};
  CHECK(run(m, false, console) == 0);
  const auto j = json::parse(console.str());
  CHECK(std::abs(j.at("a").get<double>() - 1.0) < 1e-9);
}

TEST_CASE("invalid manifests return 2") {
  std::ostringstream console;
  RunManifest m;
  m.subcommand = "walk";
  CHECK(run(m, false, console) == 2);
}

TEST_CASE("identical manifests give byte-identical outputs") {
  struct Case {
    std::string sub;
    json params;
    std::vector<std::string> files;
  };
  const std::vector<Case> cases{
      {"couple", {{"h", 4}, {"alpha", 31.0}}, {"transcripts/transcript_00000.csv", "transcripts/transcript_00002.csv"}},
      {"walk", {{"stop", {{"kind", "steps"}, {"value", 200}}}}, {"paths/walk_00001.csv"}},
      {"bm", {{"stop", {{"kind", "time"}, {"value", 1.0}}}, {"excursions", 5}},
       {"paths/bm_00000.csv", "excursions/excursions_00000.csv"}},
      {"kmt", {{"log2_n", {6, 8}}, {"write_paths", true}, {"path_log2_n", 6}}, {"paths/coupled_00000.csv"}},
      {"escape-stats", {{"horizon", 4096}, {"lil_n_min", 1000}}, {"curves/curve_00000.csv"}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.sub);
    const auto a = scratch("det_a_" + c.sub);
    const auto b = scratch("det_b_" + c.sub);
    std::ostringstream console;
    auto m = manifest_from_json(manifest(c.sub, c.params, a.string()));
    REQUIRE(run(m, false, console) == 0);
    m.out = b.string();
    REQUIRE(run(m, false, console) == 0);
    for (const auto& f : c.files) {
      REQUIRE(fs::exists(a / f));
      const auto text = slurp(a / f);
      CHECK(text == slurp(b / f));
      CHECK(text.find('\r') == std::string::npos);
    }
    CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
    const auto saved = json::parse(slurp(a / "manifest.json"));
    CHECK(saved.at("params") == with_defaults(m).params);
    CHECK(!fs::exists(a / ".partial"));
    CHECK(fs::exists(a / "run.log"));
    // a second run into the same directory needs force
    m.out = a.string();
    CHECK_THROWS_AS(run(m, false, console), std::runtime_error);
    CHECK(run(m, true, console) == 0);
    fs::remove_all(a);
    fs::remove_all(b);
  }
}

TEST_CASE("escape-stats report carries both minima modes") {
  const auto dir = scratch("escape_report");
  std::ostringstream console;
  const auto m = manifest_from_json(manifest("escape-stats", {{"horizon", 1e5}, {"lil_n_min", 1e4}}, dir.string()));
  REQUIRE(run(m, false, console) == 0);
  const auto s = json::parse(slurp(dir / "summary.json"));
  for (const char* mode : {"window", "tail_closure"}) {
    REQUIRE(s.contains(mode));
    CHECK(s[mode].contains("integral_test"));
    CHECK(s[mode].contains("envelope_test"));
    CHECK(s[mode].contains("lil"));
  }
  const auto curve = slurp(dir / "curves/curve_00000.csv");
  CHECK(curve.rfind("n,M_n,threshold,ratio\n", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("command line") {
  const char* cli = std::getenv("CONDWALK_CLI");
  if (cli == nullptr) return;
  const auto out = capture(std::string(cli) + " potential --x 1 --y 0");
  const auto j = json::parse(out);
  CHECK(std::abs(j.at("a").get<double>() - 1.0) < 1e-9);

  const auto dir = scratch("cli_couple");
  const std::string base = std::string(cli) + " couple --h 4 --alpha 31 --replicas 3 --seed 7 --out " + dir.string();
  CHECK(std::system((base + " > /dev/null 2>&1").c_str()) == 0);
  CHECK(std::system((base + " > /dev/null 2>&1").c_str()) != 0);  // collision
  const auto first = slurp(dir / "transcripts/transcript_00001.csv");
  const auto again = scratch("cli_again");
  const std::string rerun = std::string(cli) + " run --manifest " + (dir / "manifest.json").string() +
                            " --out " + again.string() + " > /dev/null 2>&1";
  CHECK(std::system(rerun.c_str()) == 0);
  CHECK(slurp(again / "transcripts/transcript_00001.csv") == first);

  const auto bad = scratch("cli_bad.json");
  std::ofstream(bad) << manifest("couple", {{"beta", 5.0}}, "x").dump();
  const auto diag = capture(std::string(cli) + " validate --manifest " + bad.string());
  CHECK(diag.find("params.beta") != std::string::npos);
  fs::remove_all(dir);
  fs::remove_all(again);
  fs::remove(bad);
}

}
