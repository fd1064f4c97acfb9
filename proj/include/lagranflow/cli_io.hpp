#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lagranflow/control.hpp"
#include "lagranflow/coupling.hpp"
#include "lagranflow/dynamics.hpp"
#include "lagranflow/ldp.hpp"
#include "lagranflow/measures.hpp"

namespace lagranflow {

using json = nlohmann::json;

inline constexpr const char* kCodeVersion = "lagranflow 0.1.0";
inline constexpr const char* kSeedVariable = "LAGRANFLOW_SEED";

// Configuration problem; `line` is the 1-based config line, 0 for command-line
// overrides, -1 for the environment and -2 when the key is absent.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, int line, const std::string& message);
  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

class IoError : public std::runtime_error {
 public:
  IoError(std::string path, const std::string& message);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class KeyType { kInt, kSeed, kDouble, kBool, kString, kStringList, kDoubleList, kIntList };

struct KeySpec {
  std::string key;  // "section.name"
  KeyType type;
  bool required;
  std::string default_value;
  // Numeric range [lo, hi] (open at lo when lo_open) for numbers and list items.
  double lo;
  double hi;
  bool lo_open;
  std::vector<std::string> choices;  // strings and string-list items
  std::string doc;
};

// Every accepted key. Keys outside this table are rejected.
const std::vector<KeySpec>& config_schema();

// "[section]" headers, "key = value" lines, '#' or ';' comments.
struct RawEntry {
  std::string value;
  int line = 0;
};
using RawConfig = std::map<std::string, RawEntry>;
RawConfig parse_config_text(const std::string& text);

struct ConfigValue {
  KeyType type = KeyType::kString;
  std::string text;  // canonical form
  double number = 0.0;
  std::uint64_t seed = 0;
  bool flag = false;
  std::vector<double> list;
  std::vector<std::string> items;
  std::string source;  // "default", "file", "override" or "environment"
};

class ExperimentConfig {
 public:
  // Validates every entry and fills defaults; overrides are "section.key=value".
  static ExperimentConfig from_text(const std::string& text, const std::vector<std::string>& overrides = {},
                                    const char* seed_env = nullptr);

  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;
  const std::vector<std::string>& get_strings(const std::string& key) const;
  std::uint64_t seed() const;
  const ConfigValue& value(const std::string& key) const;

  NoiseSpec noise() const;
  FlowParams flow() const;
  SystemState initial_state() const;
  bool has_format(const std::string& f) const;

  // Sectioned text with every key in sorted order; parses back to the
  // same configuration.
  std::string canonical_text() const;
  std::string content_hash() const;

 private:
  std::map<std::string, ConfigValue> values_;
};

// 17 significant digits; non-finite values as nan, inf and -inf.
std::string format_number(double v);

// Registered CSV schemas and their header rows.
const std::map<std::string, std::vector<std::string>>& csv_schemas();

class CsvTable {
 public:
  explicit CsvTable(const std::string& schema);
  CsvTable& row(const std::vector<double>& values);
  const std::vector<std::string>& header() const { return header_; }
  std::string text() const;
  size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::string> rows_;
};

void write_text_file(const std::string& path, const std::string& text);
void write_json_file(const std::string& path, const json& j);

// Rows of numbers under a header; inverse of CsvTable::text.
struct ParsedCsv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
ParsedCsv parse_csv(const std::string& text);

// "d" then d*d row-major entries; commas, whitespace and newlines separate.
FiniteChain read_chain_text(const std::string& text);

struct StreamUse {
  std::string stage;
  StreamTag tag = StreamTag::kKicks;
  std::uint64_t first = 0;
  std::uint64_t count = 0;
};

struct RunManifest {
  std::string subcommand;
  std::string config_hash;
  std::string config_text;
  std::uint64_t master_seed = 0;
  std::string seed_source;
  std::string code_version = kCodeVersion;
  std::string spec_hash;
  std::string started_at;
  double elapsed_seconds = -1.0;  // negative until the run finishes
  std::vector<StreamUse> streams;
  std::vector<std::string> outputs;
};

// Report and manifest schemas. Non-finite numbers are encoded as the strings
// "nan", "inf" and "-inf" so that every report parses back exactly.
void to_json(json& j, const RunManifest& m);
void from_json(const json& j, RunManifest& m);
void to_json(json& j, const StationarityReport& r);
void from_json(const json& j, StationarityReport& r);
void to_json(json& j, const ConvergenceReport& r);
void from_json(const json& j, ConvergenceReport& r);
void to_json(json& j, const MixingReport& r);
void from_json(const json& j, MixingReport& r);
void to_json(json& j, const CouplingExperiment& r);
void from_json(const json& j, CouplingExperiment& r);
void to_json(json& j, const CouplingReport& r);
void from_json(const json& j, CouplingReport& r);
void to_json(json& j, const EpBoundCheck& r);
void from_json(const json& j, EpBoundCheck& r);
void to_json(json& j, const DensityExtrema& r);
void from_json(const json& j, DensityExtrema& r);
void to_json(json& j, const SteeringReport& r);
void from_json(const json& j, SteeringReport& r);
void to_json(json& j, const RateFunctionReport& r);
void from_json(const json& j, RateFunctionReport& r);
void to_json(json& j, const GcReport& r);
void from_json(const json& j, GcReport& r);

// Density sidecar: method metadata without the grid values.
json density_sidecar(const DensityEstimate& e);

}  // namespace lagranflow
