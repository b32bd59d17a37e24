#pragma once

// Experiment plumbing: JSON specs validated against a per-kind schema, runners
// that write one CSV per table or figure, a checksummed run manifest, and tidy
// (series, x, y) plot data derived from a finished run.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "pluralis/dynamics.hpp"
#include "pluralis/gmm.hpp"
#include "pluralis/landscape.hpp"

namespace pluralis {

enum class ExperimentKind {
  kExactDynamics,
  kGmm,
  kLeakageSweep,
  kDecaySweep,
  kNashSweep,
  kConcentration,
  kQSweep,
  kKAblation,
};

std::string to_string(ExperimentKind kind);
/// Throws ConfigError listing the valid kinds.
ExperimentKind parse_kind(std::string_view name);
const std::vector<ExperimentKind>& all_kinds();

enum class ParamType { kNumber, kInteger, kBool, kNumberList, kIntegerList, kPoint };

struct ParamSpec {
  std::string key;
  ParamType type = ParamType::kNumber;
  nlohmann::json default_value;
  std::optional<double> min;  // applies to every element of a list
  std::optional<double> max;
  bool min_exclusive = false;
  bool max_exclusive = false;
  std::string help;
};

/// Parameters accepted by a kind, excluding the top-level kind/seed/out/threads.
const std::vector<ParamSpec>& schema(ExperimentKind kind);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::kExactDynamics;
  /// Every schema key, defaults filled in.
  nlohmann::json params;
  std::filesystem::path out_dir = "out";
  std::uint64_t seed = 0;
  int threads = 1;

  [[nodiscard]] double number(const std::string& key) const;
  [[nodiscard]] int integer(const std::string& key) const;
  [[nodiscard]] bool flag(const std::string& key) const;
  [[nodiscard]] std::vector<double> numbers(const std::string& key) const;
  [[nodiscard]] std::vector<int> integers(const std::string& key) const;
  [[nodiscard]] Eigen::Vector2d point(const std::string& key) const;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// All defaults for `kind`.
ExperimentSpec default_spec(ExperimentKind kind);

/// Parses a JSON document. Throws ConfigError naming the offending key and the
/// expected type or range; unknown keys are rejected.
ExperimentSpec parse_config(std::string_view text);
ExperimentSpec parse_config_file(const std::filesystem::path& path);

/// Builds and validates the spec from an already parsed JSON object.
ExperimentSpec spec_from_json(const nlohmann::json& doc);

// Engine configurations derived from a spec.
GmmExperimentConfig gmm_config_from(const ExperimentSpec& spec);

struct ExactSetup {
  double distance = 0.0;
  LineGridOptions grid;
  DynamicsConfig dynamics;  // rewards left empty; filled per landscape
  double q = 0.5;
  std::size_t limit_window = 10;
  double limit_tolerance = 1e-4;
  double decay_floor = 1e-12;
  bool require_outside_domination = true;
};

ExactSetup exact_setup_from(const ExperimentSpec& spec);

/// Independent 64-bit stream for sweep cell `index`.
std::uint64_t cell_seed(std::uint64_t seed, std::uint64_t index);

struct OutputFile {
  std::string name;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  nlohmann::json spec;
  std::string artifact_version;
  std::string started_at;
  std::string finished_at;
  std::uint64_t seed = 0;
  std::vector<OutputFile> files;
  std::filesystem::path directory;

  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] ExperimentKind kind() const;
};

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kArtifactVersion = "0.1.0";

/// Runs the experiment, writes its CSVs into spec.out_dir and then the
/// manifest (atomically, last). Every file written by a failing run is
/// removed before the exception propagates.
RunManifest run_experiment(const ExperimentSpec& spec);

/// Reads `dir/manifest.json` (or a manifest path directly).
RunManifest read_manifest(const std::filesystem::path& path);

/// Writes tidy (series, x, y) CSVs next to the run outputs and returns their
/// paths. Throws InvalidInput naming any missing input file.
std::vector<std::filesystem::path> emit_plot_data(const RunManifest& manifest);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// 2 for configuration and input errors, 3 for assumption violations, 4 for
/// numerical failures, 1 otherwise.
int exit_code_for(const std::exception& error);

}  // namespace pluralis
