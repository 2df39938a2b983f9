#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace condwalk {

inline constexpr int kSchemaVersion = 1;

/// Everything needed to reproduce a run. params holds the module parameters
/// of the subcommand, with every default filled in by with_defaults.
struct RunManifest {
  int schema_version = kSchemaVersion;
  std::string subcommand;
  std::uint64_t seed = 0;
  std::uint64_t replicas = 1;
  std::string out;
  nlohmann::json params = nlohmann::json::object();

  bool operator==(const RunManifest&) const = default;
};

nlohmann::json to_json(const RunManifest& m);
/// Throws ManifestError when the document has errors.
RunManifest manifest_from_json(const nlohmann::json& j);

const std::vector<std::string>& subcommands();
/// Default parameter object of a subcommand; throws std::invalid_argument for
/// an unknown one.
nlohmann::json default_params(const std::string& subcommand);
/// Missing parameters replaced by their defaults; nested objects merged.
RunManifest with_defaults(RunManifest m);

struct Diagnostic {
  std::string field;
  std::string severity;  // "error" or "warning"
  std::string message;
};
nlohmann::json to_json(const std::vector<Diagnostic>& d);
bool has_errors(const std::vector<Diagnostic>& d);

/// Schema and parameter checks. Never throws.
std::vector<Diagnostic> validate(const nlohmann::json& manifest);

class ManifestError : public std::runtime_error {
 public:
  explicit ManifestError(std::vector<Diagnostic> d);
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

/// printf %.17g.
std::string format_double(double v);

/// Comma-separated rows with a header, LF line endings.
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header);
  CsvWriter& cell(double v);
  CsvWriter& cell(std::int64_t v);
  CsvWriter& cell(std::uint64_t v);
  CsvWriter& cell(int v) { return cell(static_cast<std::int64_t>(v)); }
  CsvWriter& cell(const std::string& v);
  CsvWriter& empty();
  void end_row();
  const std::string& str() const { return buf_; }

 private:
  void sep();
  std::string buf_;
  bool row_open_ = false;
};

/// Run directory. A ".partial" marker exists from construction until
/// commit(); every file is written to a temporary name and renamed.
class OutputDir {
 public:
  /// Throws std::runtime_error if the directory exists and is not empty,
  /// unless force is set and it holds a previous run (manifest.json), which
  /// is then removed.
  OutputDir(std::filesystem::path dir, bool force);

  void write(const std::string& name, const std::string& content);
  void log(const std::string& line);
  void commit();
  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::string log_;
};

/// Executes the manifest. JSON results of `potential` and `validate` go to
/// console as well. Returns 0 on success, 2 on invalid manifests.
int run(const RunManifest& manifest, bool force, std::ostream& console);

}  // namespace condwalk
