#include "lagranflow/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>

namespace lagranflow {

namespace {

std::string line_prefix(int line) {
  if (line > 0) return "line " + std::to_string(line) + ": ";
  if (line == 0) return "override: ";
  if (line == -1) return std::string("environment ") + kSeedVariable + ": ";
  return "";
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

KeySpec K(std::string key, KeyType type, bool required, std::string def, double lo, double hi, bool lo_open,
          std::string doc, std::vector<std::string> choices = {}) {
  return {std::move(key), type, required, std::move(def), lo, hi, lo_open, std::move(choices), std::move(doc)};
}

constexpr double kBig = 1e9;

}  // namespace

ConfigError::ConfigError(std::string key, int line, const std::string& message)
    : std::runtime_error(line_prefix(line) + key + ": " + message), key_(std::move(key)), line_(line) {}

IoError::IoError(std::string path, const std::string& message)
    : std::runtime_error(path + ": " + message), path_(std::move(path)) {}

const std::vector<KeySpec>& config_schema() {
  using T = KeyType;
  static const std::vector<KeySpec> schema = {
      K("physics.nu", T::kDouble, true, "", 0, 1e3, true, "viscosity"),
      K("grid.spatial_cutoff", T::kInt, true, "", 1, 32, false, "Galerkin cutoff N"),
      K("grid.substeps", T::kInt, true, "", 1, 1e6, false, "RK4 substeps per unit interval"),
      K("noise.spatial_cutoff", T::kInt, false, "0", 0, 32, false, "0 or equal to grid.spatial_cutoff"),
      K("noise.time_modes", T::kInt, false, "16", 1, 4096, false, "time modes L"),
      K("noise.kappa", T::kDouble, false, "0.5", 0, 100, true, "spatial decay of b_j"),
      K("noise.beta", T::kDouble, false, "1", 0.5, 100, true, "temporal decay of c_l"),
      K("noise.c0", T::kDouble, false, "1", 0, 1e6, true, "temporal amplitude"),
      K("noise.delta", T::kDouble, false, "0.5", 0, 1, true, "positivity radius factor"),
      K("noise.amplification", T::kDouble, false, "1", 1, kBig, false, "amplification a of low modes"),
      K("noise.sobolev_s", T::kInt, false, "3", 0, 16, false, "Sobolev index s"),
      K("noise.density", T::kString, false, "bump", 0, 0, false, "kick coordinate density", {"bump"}),
      K("run.seed", T::kSeed, false, "1", 0, 0, false, "master seed"),
      K("run.trajectories", T::kInt, false, "1000", 1, 1e8, false, "ensemble size or sample count"),
      K("run.kicks", T::kInt, false, "100", 0, 1e8, false, "chain length"),
      K("run.burn_in", T::kInt, false, "50", 0, 1e8, false, "discarded initial kicks"),
      K("run.workers", T::kInt, false, "0", 0, 1024, false, "worker threads, 0 for all cores"),
      K("run.y1", T::kDouble, false, "1", -1e6, 1e6, false, "initial particle, first coordinate"),
      K("run.y2", T::kDouble, false, "2", -1e6, 1e6, false, "initial particle, second coordinate"),
      K("output.directory", T::kString, false, "out", 0, 0, false, "output directory"),
      K("output.formats", T::kStringList, false, "csv,json", 0, 0, false, "data formats", {"csv", "json"}),
      K("output.plots", T::kBool, false, "true", 0, 0, false, "emit plotting scripts"),
      K("simulate.coefficients", T::kBool, false, "false", 0, 0, false, "dump field coefficients per kick"),
      K("steer.method", T::kString, false, "exact", 0, 0, false, "exact two-phase or transport only",
        {"exact", "transport"}),
      K("steer.target_y1", T::kDouble, false, "1.24", -1e6, 1e6, false, "target particle, first coordinate"),
      K("steer.target_y2", T::kDouble, false, "1.18", -1e6, 1e6, false, "target particle, second coordinate"),
      K("steer.kappa", T::kDouble, false, "0.05", 0, 1, true, "damping target"),
      K("steer.max_iterations", T::kInt, false, "100", 1, 10000, false, "fixed-point iterations"),
      K("steer.tolerance", T::kDouble, false, "1e-8", 0, 1, true, "fixed-point tolerance"),
      K("linctl.delta", T::kDouble, false, "0.1", 0, 1, true, "particle window parameter"),
      K("linctl.q1", T::kDouble, false, "0.5", -10, 10, false, "particle target, first coordinate"),
      K("linctl.q2", T::kDouble, false, "-0.3", -10, 10, false, "particle target, second coordinate"),
      K("linctl.v_scale", T::kDouble, false, "0.01", 0, 100, false, "norm of the field target"),
      K("couple.kind", T::kString, false, "synchronous", 0, 0, false, "coupling of the kicks",
        {"synchronous", "maximal"}),
      K("couple.d0", T::kDoubleList, false, "0.001,0.0005,0.00025", 0, 1, true, "initial distances"),
      K("couple.pairs", T::kInt, false, "100", 1, 1e7, false, "pairs per distance"),
      K("couple.steps", T::kInt, false, "20", 1, 1e6, false, "coupled kicks per pair"),
      K("couple.q", T::kDouble, false, "0.7", 0, 1, true, "contraction factor"),
      K("couple.control_time_modes", T::kInt, false, "4", 1, 4096, false, "time modes M of the control family"),
      K("couple.gamma", T::kDouble, false, "1e-8", 0, 1, true, "Tikhonov parameter"),
      K("couple.locality_radius", T::kDouble, false, "0.01", 0, 10, true, "largest distance squeezed"),
      K("density.t", T::kInt, false, "1", 1, 3, false, "path length"),
      K("density.method", T::kString, false, "histogram", 0, 0, false, "estimator", {"histogram", "kde"}),
      K("density.bins", T::kInt, false, "8", 1, 16, false, "histogram cells per coordinate"),
      K("density.grid", T::kInt, false, "16", 2, 64, false, "KDE grid points per coordinate"),
      K("density.bandwidth", T::kDouble, false, "0", 0, 10, false, "KDE bandwidth, 0 for n^(-1/(2t+4))"),
      K("density.states", T::kDoubleList, false, "", -1e6, 1e6, false, "initial particles y1,y2,y1,y2,..."),
      K("density.alpha", T::kDouble, false, "0.05", 0, 1, true, "confidence level complement"),
      K("ep.t", T::kInt, false, "2", 1, 3, false, "path length"),
      K("ep.method", T::kString, false, "histogram", 0, 0, false, "estimator of rho_t", {"histogram", "kde"}),
      K("ep.bins", T::kInt, false, "4", 1, 16, false, "histogram cells per coordinate of rho_t"),
      K("ep.grid", T::kInt, false, "8", 2, 64, false, "KDE grid points per coordinate of rho_t"),
      K("ep.extrema_bins", T::kInt, false, "8", 1, 16, false, "grid of the one-step density extrema"),
      K("ep.extrema_samples", T::kInt, false, "2000", 1, 1e8, false, "one-step samples per state"),
      K("ep.paths", T::kInt, false, "10000", 1, 1e8, false, "stationary paths checked"),
      K("ep.slack", T::kDouble, false, "0.1", 0, 100, false, "additive slack on the bound"),
      K("ep.states", T::kDoubleList, false, "", -1e6, 1e6, false, "extrema initial particles y1,y2,..."),
      K("stationarity.bins", T::kInt, false, "8", 1, 64, false, "cells per coordinate"),
      K("stationarity.harmonic_radius", T::kInt, false, "3", 1, 32, false, "largest |m|_inf"),
      K("stationarity.batches", T::kInt, false, "100", 2, 1e6, false, "batch-means batches"),
      K("converge.t", T::kInt, false, "1", 1, 2, false, "path length"),
      K("converge.windows", T::kIntList, false, "1,2,4,8", 0, 1e6, false, "windows n"),
      K("converge.reference_window", T::kInt, false, "30", 0, 1e6, false, "long-run reference window"),
      K("converge.bins", T::kInt, false, "8", 1, 16, false, "histogram cells per coordinate"),
      K("converge.states", T::kDoubleList, false, "", -1e6, 1e6, false, "initial particles y1,y2,..."),
      K("converge.mixing_steps", T::kInt, false, "10", 1, 10000, false, "kicks of the mixing estimate"),
      K("converge.fourier_radius", T::kInt, false, "3", 1, 16, false, "particle harmonics radius"),
      K("converge.tv_bins", T::kInt, false, "8", 1, 64, false, "particle TV cells per coordinate"),
      K("oracle.chain", T::kString, false, "", 0, 0, false, "chain CSV path"),
      K("oracle.points", T::kInt, false, "10", 1, 100000, false, "random measures evaluated"),
      K("gc_check.chain", T::kString, false, "", 0, 0, false, "chain CSV path"),
      K("gc_check.r_points", T::kInt, false, "21", 2, 100000, false, "r-grid size"),
      K("gc_check.r_max", T::kDouble, false, "0", 0, 1e6, false, "r-grid half width, 0 for 0.95 r_max"),
      K("gc_check.level3_samples", T::kInt, false, "20", 0, 100000, false, "random Markov measures"),
  };
  return schema;
}

RawConfig parse_config_text(const std::string& text) {
  RawConfig out;
  std::istringstream is(text);
  std::string raw, section;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    std::string s = raw;
    const auto c = s.find_first_of("#;");
    if (c != std::string::npos) s = s.substr(0, c);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) throw ConfigError(s, line, "malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(s, line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) throw ConfigError(s, line, "empty key");
    if (section.empty()) throw ConfigError(key, line, "key outside any section");
    const std::string full = section + "." + key;
    if (out.count(full)) throw ConfigError(full, line, "duplicate key (first on line " +
                                                          std::to_string(out[full].line) + ")");
    out[full] = {trim(s.substr(eq + 1)), line};
  }
  return out;
}

namespace {

const KeySpec* find_key(const std::string& key) {
  for (const KeySpec& k : config_schema())
    if (k.key == key) return &k;
  return nullptr;
}

std::string range_text(const KeySpec& k) {
  return std::string(k.lo_open ? "(" : "[") + format_number(k.lo) + ", " + format_number(k.hi) + "]";
}

double parse_number(const KeySpec& k, const std::string& v, int line, bool integer) {
  if (v.empty()) throw ConfigError(k.key, line, "empty value");
  double x = 0.0;
  if (integer) {
    long long i = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), i);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size())
      throw ConfigError(k.key, line, "expected an integer, got '" + v + "'");
    x = static_cast<double>(i);
  } else {
    char* end = nullptr;
    x = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || !std::isfinite(x))
      throw ConfigError(k.key, line, "expected a finite number, got '" + v + "'");
  }
  if (x > k.hi || x < k.lo || (k.lo_open && x == k.lo))
    throw ConfigError(k.key, line, "value " + v + " outside " + range_text(k));
  return x;
}

ConfigValue parse_value(const KeySpec& k, const std::string& v, int line, const std::string& source) {
  ConfigValue out;
  out.type = k.type;
  out.source = source;
  switch (k.type) {
    case KeyType::kInt:
      out.number = parse_number(k, v, line, true);
      out.text = std::to_string(static_cast<long long>(out.number));
      break;
    case KeyType::kDouble:
      out.number = parse_number(k, v, line, false);
      out.text = format_number(out.number);
      break;
    case KeyType::kSeed: {
      const auto r = std::from_chars(v.data(), v.data() + v.size(), out.seed);
      if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
        throw ConfigError(k.key, line, "expected an unsigned 64-bit integer, got '" + v + "'");
      out.text = std::to_string(out.seed);
      break;
    }
    case KeyType::kBool:
      if (v == "true" || v == "1" || v == "yes") out.flag = true;
      else if (v == "false" || v == "0" || v == "no") out.flag = false;
      else throw ConfigError(k.key, line, "expected true or false, got '" + v + "'");
      out.text = out.flag ? "true" : "false";
      break;
    case KeyType::kString:
      if (!k.choices.empty() && std::find(k.choices.begin(), k.choices.end(), v) == k.choices.end())
        throw ConfigError(k.key, line, "unsupported value '" + v + "'");
      out.text = v;
      break;
    case KeyType::kStringList:
      for (const std::string& item : split(v, ',')) {
        if (item.empty()) continue;
        if (!k.choices.empty() && std::find(k.choices.begin(), k.choices.end(), item) == k.choices.end())
          throw ConfigError(k.key, line, "unsupported item '" + item + "'");
        out.items.push_back(item);
        out.text += (out.text.empty() ? "" : ",") + item;
      }
      break;
    case KeyType::kDoubleList:
    case KeyType::kIntList:
      for (const std::string& item : split(v, ',')) {
        if (item.empty()) throw ConfigError(k.key, line, "empty list item");
        out.list.push_back(parse_number(k, item, line, k.type == KeyType::kIntList));
        out.text += (out.text.empty() ? "" : ",") +
                    (k.type == KeyType::kIntList ? std::to_string(static_cast<long long>(out.list.back()))
                                                 : format_number(out.list.back()));
      }
      break;
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_text(const std::string& text, const std::vector<std::string>& overrides,
                                             const char* seed_env) {
  RawConfig raw = parse_config_text(text);
  std::map<std::string, std::string> source;
  for (const auto& [key, e] : raw) {
    if (!find_key(key)) throw ConfigError(key, e.line, "unknown key");
    source[key] = "file";
  }
  if (seed_env) {
    raw["run.seed"] = {seed_env, -1};
    source["run.seed"] = "environment";
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    const std::string key = trim(o.substr(0, eq));
    if (eq == std::string::npos) throw ConfigError(key, 0, "expected section.key=value");
    if (!find_key(key)) throw ConfigError(key, 0, "unknown key");
    raw[key] = {trim(o.substr(eq + 1)), 0};
    source[key] = "override";
  }
  ExperimentConfig cfg;
  for (const KeySpec& k : config_schema()) {
    const auto it = raw.find(k.key);
    if (it == raw.end()) {
      if (k.required) throw ConfigError(k.key, -2, "required key is missing");
      cfg.values_[k.key] = parse_value(k, k.default_value, -2, "default");
    } else {
      cfg.values_[k.key] = parse_value(k, it->second.value, it->second.line, source[k.key]);
    }
  }
  const int nc = cfg.get_int("noise.spatial_cutoff");
  if (nc != 0 && nc != cfg.get_int("grid.spatial_cutoff")) {
    const auto it = raw.find("noise.spatial_cutoff");
    throw ConfigError("noise.spatial_cutoff", it == raw.end() ? -2 : it->second.line,
                      "must equal grid.spatial_cutoff");
  }
  for (const char* key : {"density.states", "ep.states", "converge.states"})
    if (cfg.get_doubles(key).size() % 2 != 0) {
      const auto it = raw.find(key);
      throw ConfigError(key, it == raw.end() ? -2 : it->second.line, "needs an even number of coordinates");
    }
  try {
    cfg.noise().validate();
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    const std::string key = what.substr(0, what.find(':'));
    const auto it = raw.find(key);
    throw ConfigError(key, it == raw.end() ? -2 : it->second.line, what.substr(what.find(':') + 2));
  }
  return cfg;
}

const ConfigValue& ExperimentConfig::value(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::out_of_range("unknown configuration key " + key);
  return it->second;
}

int ExperimentConfig::get_int(const std::string& key) const { return static_cast<int>(value(key).number); }
double ExperimentConfig::get_double(const std::string& key) const { return value(key).number; }
bool ExperimentConfig::get_bool(const std::string& key) const { return value(key).flag; }
const std::string& ExperimentConfig::get_string(const std::string& key) const { return value(key).text; }
std::vector<double> ExperimentConfig::get_doubles(const std::string& key) const { return value(key).list; }
std::vector<int> ExperimentConfig::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (double v : value(key).list) out.push_back(static_cast<int>(v));
  return out;
}
const std::vector<std::string>& ExperimentConfig::get_strings(const std::string& key) const {
  return value(key).items;
}
std::uint64_t ExperimentConfig::seed() const { return value("run.seed").seed; }

NoiseSpec ExperimentConfig::noise() const {
  NoiseSpec s;
  s.spatial_cutoff = get_int("grid.spatial_cutoff");
  s.time_modes = get_int("noise.time_modes");
  s.kappa = get_double("noise.kappa");
  s.beta = get_double("noise.beta");
  s.c0 = get_double("noise.c0");
  s.delta = get_double("noise.delta");
  s.amplification = get_double("noise.amplification");
  s.sobolev_s = get_int("noise.sobolev_s");
  s.density = get_string("noise.density");
  return s;
}

FlowParams ExperimentConfig::flow() const {
  FlowParams fp;
  fp.nu = get_double("physics.nu");
  fp.substeps = get_int("grid.substeps");
  return fp;
}

SystemState ExperimentConfig::initial_state() const {
  return SystemState::rest(get_int("grid.spatial_cutoff"), Vec2(get_double("run.y1"), get_double("run.y2")));
}

bool ExperimentConfig::has_format(const std::string& f) const {
  const auto& items = get_strings("output.formats");
  return std::find(items.begin(), items.end(), f) != items.end();
}

std::string ExperimentConfig::canonical_text() const {
  std::string out, section;
  for (const auto& [key, v] : values_) {
    const auto dot = key.find('.');
    if (key.substr(0, dot) != section) {
      section = key.substr(0, dot);
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += key.substr(dot + 1) + " = " + v.text + "\n";
  }
  return out;
}

std::string ExperimentConfig::content_hash() const { return hex64(fnv1a(canonical_text())); }

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::map<std::string, std::vector<std::string>>& csv_schemas() {
  static const std::map<std::string, std::vector<std::string>> s = {
      {"trajectory", {"k", "y1", "y2", "energy", "enstrophy", "sobolev3"}},
      {"control", {"j1", "j2", "l", "alpha"}},
      {"coupling_pairs", {"pair_id", "k", "d_k", "contraction_flag"}},
      {"density1", {"cell", "x1", "x2", "value", "std_error", "count"}},
      {"density2", {"cell", "x1", "x2", "x3", "x4", "value", "std_error", "count"}},
      {"density3", {"cell", "x1", "x2", "x3", "x4", "x5", "x6", "value", "std_error", "count"}},
      {"sigma", {"path_id", "sigma"}},
      {"stationarity_counts", {"cell", "i1", "i2", "count"}},
      {"harmonics", {"m1", "m2", "abs_mean"}},
      {"convergence", {"window", "discrepancy", "noise_floor"}},
      {"mixing", {"k", "discrepancy", "noise_floor", "particle_tv"}},
      {"rate_function", {"point_id", "value_a", "value_b"}},
      {"gc", {"r", "rate_pos", "rate_neg", "residual"}},
  };
  return s;
}

CsvTable::CsvTable(const std::string& schema) {
  const auto it = csv_schemas().find(schema);
  if (it == csv_schemas().end()) throw std::invalid_argument("unregistered CSV schema " + schema);
  header_ = it->second;
}

CsvTable& CsvTable::row(const std::vector<double>& values) {
  if (values.size() != header_.size()) throw std::invalid_argument("CSV row width does not match the header");
  std::string r;
  for (size_t i = 0; i < values.size(); ++i) r += (i ? "," : "") + format_number(values[i]);
  rows_.push_back(std::move(r));
  return *this;
}

std::string CsvTable::text() const {
  std::string out;
  for (size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + header_[i];
  out += "\n";
  for (const std::string& r : rows_) out += r + "\n";
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  if (ec) throw IoError(p.parent_path().string(), ec.message());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(path, "cannot open for writing");
  os << text;
  os.flush();
  if (!os) throw IoError(path, "write failed");
}

void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

ParsedCsv parse_csv(const std::string& text) {
  ParsedCsv out;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("empty CSV");
  out.header = split(line, ',');
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    std::vector<double> row;
    for (const std::string& cell : split(line, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size()) throw std::invalid_argument("bad CSV cell '" + cell + "'");
      row.push_back(v);
    }
    if (row.size() != out.header.size()) throw std::invalid_argument("CSV row width does not match the header");
    out.rows.push_back(std::move(row));
  }
  return out;
}

FiniteChain read_chain_text(const std::string& text) {
  std::string s = text;
  for (char& c : s)
    if (c == ',' || c == ';') c = ' ';
  std::istringstream is(s);
  long long d = 0;
  if (!(is >> d) || d < 1 || d > 4096) throw ChainError("chain file must start with the state count d");
  Eigen::MatrixXd P(d, d);
  for (long long i = 0; i < d * d; ++i) {
    std::string tok;
    if (!(is >> tok)) throw ChainError("chain file holds fewer than d*d entries");
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) throw ChainError("bad chain entry '" + tok + "'");
    P(i / d, i % d) = v;
  }
  std::string extra;
  if (is >> extra) throw ChainError("chain file holds more than d*d entries");
  return FiniteChain(P);
}

// JSON encoding.
namespace jsonio {

json enc(double v);
json enc(int v);
json enc(std::uint64_t v);
json enc(bool v);
json enc(const std::string& v);
json enc(const Eigen::VectorXd& v);
json enc(const Eigen::VectorXi& v);
json enc(const Eigen::MatrixXd& m);
json enc(const Mode& m);
json enc(StreamTag t);
json enc(const std::vector<bool>& v);
template <class T>
json enc(const std::vector<T>& v);
template <class T>
json enc(const std::optional<T>& v);
template <class T>
json enc(const T& v);

void dec(const json& j, double& v);
void dec(const json& j, int& v);
void dec(const json& j, std::uint64_t& v);
void dec(const json& j, bool& v);
void dec(const json& j, std::string& v);
void dec(const json& j, Eigen::VectorXd& v);
void dec(const json& j, Eigen::VectorXi& v);
void dec(const json& j, Eigen::MatrixXd& m);
void dec(const json& j, Mode& m);
void dec(const json& j, StreamTag& t);
void dec(const json& j, std::vector<bool>& v);
template <class T>
void dec(const json& j, std::vector<T>& v);
template <class T>
void dec(const json& j, std::optional<T>& v);
template <class T>
void dec(const json& j, T& v);

json enc(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}
json enc(int v) { return v; }
json enc(std::uint64_t v) { return v; }
json enc(bool v) { return v; }
json enc(const std::string& v) { return v; }
json enc(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(enc(v[i]));
  return a;
}
json enc(const Eigen::VectorXi& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}
json enc(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(enc(Eigen::VectorXd(m.row(i).transpose())));
  return a;
}
json enc(const Mode& m) { return json::array({m.j1, m.j2}); }
json enc(StreamTag t) { return static_cast<std::uint64_t>(t); }
json enc(const std::vector<bool>& v) {
  json a = json::array();
  for (bool b : v) a.push_back(b);
  return a;
}
template <class T>
json enc(const std::vector<T>& v) {
  json a = json::array();
  for (const T& x : v) a.push_back(enc(x));
  return a;
}
template <class T>
json enc(const std::optional<T>& v) {
  return v ? enc(*v) : json(nullptr);
}
template <class T>
json enc(const T& v) {
  json j;
  to_json(j, v);
  return j;
}

void dec(const json& j, double& v) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "nan") v = std::numeric_limits<double>::quiet_NaN();
    else if (s == "inf") v = std::numeric_limits<double>::infinity();
    else if (s == "-inf") v = -std::numeric_limits<double>::infinity();
    else throw std::invalid_argument("bad number '" + s + "'");
  } else {
    v = j.get<double>();
  }
}
void dec(const json& j, int& v) { v = j.get<int>(); }
void dec(const json& j, std::uint64_t& v) { v = j.get<std::uint64_t>(); }
void dec(const json& j, bool& v) { v = j.get<bool>(); }
void dec(const json& j, std::string& v) { v = j.get<std::string>(); }
void dec(const json& j, Eigen::VectorXd& v) {
  v.resize(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) dec(j[i], v[static_cast<Eigen::Index>(i)]);
}
void dec(const json& j, Eigen::VectorXi& v) {
  v.resize(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<int>();
}
void dec(const json& j, Eigen::MatrixXd& m) {
  const Eigen::Index r = static_cast<Eigen::Index>(j.size());
  const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  m.resize(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    Eigen::VectorXd row;
    dec(j[static_cast<size_t>(i)], row);
    if (row.size() != c) throw std::invalid_argument("ragged matrix");
    m.row(i) = row.transpose();
  }
}
void dec(const json& j, Mode& m) { m = Mode{j.at(0).get<int>(), j.at(1).get<int>()}; }
void dec(const json& j, StreamTag& t) { t = static_cast<StreamTag>(j.get<std::uint64_t>()); }
void dec(const json& j, std::vector<bool>& v) {
  v.clear();
  for (const json& x : j) v.push_back(x.get<bool>());
}
template <class T>
void dec(const json& j, std::vector<T>& v) {
  v.assign(j.size(), T{});
  for (size_t i = 0; i < j.size(); ++i) dec(j[i], v[i]);
}
template <class T>
void dec(const json& j, std::optional<T>& v) {
  if (j.is_null()) {
    v.reset();
  } else {
    T x{};
    dec(j, x);
    v = x;
  }
}
template <class T>
void dec(const json& j, T& v) {
  from_json(j, v);
}

struct Writer {
  json& j;
  template <class T>
  void operator()(const char* k, const T& v) {
    j[k] = enc(v);
  }
};

struct Reader {
  const json& j;
  template <class T>
  void operator()(const char* k, T& v) {
    dec(j.at(k), v);
  }
};

}  // namespace jsonio

#define LF_F(x) f(#x, r.x);
#define LF_JSON(T, ...)                          \
  template <class F, class R>                    \
  void fields_##T(F& f, R& r) {                  \
    __VA_ARGS__                                  \
  }                                              \
  void to_json(json& j, const T& r) {            \
    j = json::object();                          \
    jsonio::Writer w{j};                         \
    fields_##T(w, r);                            \
  }                                              \
  void from_json(const json& j, T& r) {          \
    jsonio::Reader rd{j};                        \
    fields_##T(rd, r);                           \
  }

void to_json(json& j, const DecayFit& r);
void from_json(const json& j, DecayFit& r);
void to_json(json& j, const SupportMargins& r);
void from_json(const json& j, SupportMargins& r);
void to_json(json& j, const CouplingFailure& r);
void from_json(const json& j, CouplingFailure& r);
void to_json(json& j, const StreamUse& r);
void from_json(const json& j, StreamUse& r);

LF_JSON(DecayFit, LF_F(exponent) LF_F(l_min) LF_F(l_max))
LF_JSON(SupportMargins,
        LF_F(margins) LF_F(min_margin) LF_F(remainder_norm) LF_F(membership) LF_F(required_amplification))
LF_JSON(CouplingFailure, LF_F(step) LF_F(reason))
LF_JSON(StreamUse, LF_F(stage) LF_F(tag) LF_F(first) LF_F(count))
LF_JSON(RunManifest, LF_F(subcommand) LF_F(config_hash) LF_F(config_text) LF_F(master_seed) LF_F(seed_source)
                         LF_F(code_version) LF_F(spec_hash) LF_F(started_at) LF_F(elapsed_seconds) LF_F(streams)
                             LF_F(outputs))
LF_JSON(StationarityReport, LF_F(n) LF_F(counts) LF_F(chi_square) LF_F(dof) LF_F(p_value) LF_F(inflation)
                                LF_F(p_value_corrected) LF_F(harmonics) LF_F(harmonic_abs) LF_F(harmonic_bound)
                                    LF_F(max_harmonic) LF_F(energy_correlation) LF_F(correlation_bound)
                                        LF_F(max_correlation))
LF_JSON(ConvergenceReport, LF_F(windows) LF_F(discrepancy) LF_F(noise_floor) LF_F(fit_windows) LF_F(rate)
                               LF_F(rate_lower) LF_F(rate_upper) LF_F(inconclusive) LF_F(message))
LF_JSON(MixingReport, LF_F(observables) LF_F(means) LF_F(std_errors) LF_F(discrepancy) LF_F(noise_floor)
                          LF_F(particle_tv) LF_F(fit_steps) LF_F(gamma_mix) LF_F(gamma_lower) LF_F(gamma_upper)
                              LF_F(mixing_detected) LF_F(message))
LF_JSON(CouplingExperiment, LF_F(d0) LF_F(frequency) LF_F(events) LF_F(tested) LF_F(support_failures)
                                LF_F(coupling_failures) LF_F(slope) LF_F(intercept) LF_F(r_squared) LF_F(fitted_c))
LF_JSON(CouplingReport, LF_F(distances) LF_F(squeeze_factors) LF_F(contraction) LF_F(failures) LF_F(first_energy)
                            LF_F(tested_steps) LF_F(non_contraction_events) LF_F(gamma_mix) LF_F(q))
LF_JSON(EpBoundCheck,
        LF_F(bound) LF_F(slack) LF_F(paths) LF_F(within) LF_F(undefined) LF_F(max_abs) LF_F(sigma))
LF_JSON(DensityExtrema, LF_F(m_hat) LF_F(M_hat) LF_F(m_lower) LF_F(m_upper) LF_F(M_lower) LF_F(M_upper)
                            LF_F(argmin_state) LF_F(argmin_cell) LF_F(argmax_state) LF_F(argmax_cell)
                                LF_F(confidence) LF_F(under_resolved))
LF_JSON(SteeringReport, LF_F(endpoint_error) LF_F(endpoint_field_norm) LF_F(max_off_support) LF_F(decay)
                            LF_F(margins) LF_F(iterations) LF_F(converged) LF_F(status) LF_F(kappa_used)
                                LF_F(ansatz_remainder))
LF_JSON(RateFunctionReport, LF_F(points) LF_F(values_a) LF_F(values_b) LF_F(max_discrepancy))
LF_JSON(GcReport, LF_F(r) LF_F(rate_pos) LF_F(rate_neg) LF_F(max_residual) LF_F(finite_points) LF_F(mean_ep)
                      LF_F(mean_ep_derivative) LF_F(r_min) LF_F(r_max) LF_F(level3_max_residual)
                          LF_F(level3_samples))

#undef LF_JSON
#undef LF_F

json density_sidecar(const DensityEstimate& e) {
  json j;
  j["method"] = e.method == DensityMethod::kHistogram ? "histogram" : "kde";
  j["t"] = e.t;
  j["dimension"] = e.dimension();
  j["resolution"] = e.resolution;
  j["cells"] = e.cells();
  j["n"] = e.n;
  j["bandwidth"] = jsonio::enc(e.bandwidth);
  j["normalization"] = jsonio::enc(e.normalization);
  j["integral"] = jsonio::enc(e.integral());
  j["under_resolved"] = e.under_resolved;
  j["layout"] = "row-major, first coordinate slowest";
  j["measure"] = "normalized Lebesgue measure on the torus";
  return j;
}

}  // namespace lagranflow
