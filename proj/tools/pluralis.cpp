// Command-line front end: one subcommand per experiment kind, plus `plot` to
// derive tidy plot data from a finished run and `schema` to print a kind's
// parameters with their defaults.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "pluralis/errors.hpp"
#include "pluralis/harness.hpp"

namespace {

using pluralis::ExperimentKind;

struct RunOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

pluralis::ExperimentSpec load_spec(ExperimentKind kind, const RunOptions& opts) {
  nlohmann::json doc = nlohmann::json::object();
  if (!opts.config.empty()) {
    std::ifstream in(opts.config, std::ios::binary);
    if (!in) throw pluralis::ConfigError("cannot read config file " + opts.config);
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw pluralis::ConfigError(std::string("malformed JSON in ") + opts.config + ": " + e.what());
    }
    if (!doc.is_object()) throw pluralis::ConfigError("config must be a JSON object");
  }
  const std::string name = pluralis::to_string(kind);
  if (!doc.contains("kind")) {
    doc["kind"] = name;
  } else if (doc["kind"] != name) {
    throw pluralis::ConfigError("config kind " + doc["kind"].dump() + " does not match subcommand '" + name + "'");
  }
  pluralis::ExperimentSpec spec = pluralis::spec_from_json(doc);
  if (!opts.out.empty()) spec.out_dir = opts.out;
  if (opts.seed) spec.seed = *opts.seed;
  if (opts.threads) spec.threads = *opts.threads;
  return spec;
}

void print_schema(ExperimentKind kind) {
  const auto spec = pluralis::default_spec(kind);
  std::cout << spec.to_json().dump(2) << '\n';
  for (const auto& p : pluralis::schema(kind)) std::cout << "  " << p.key << ": " << p.help << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pluralistic curation experiments"};
  app.require_subcommand(1);

  RunOptions opts;
  std::optional<ExperimentKind> chosen;
  for (ExperimentKind kind : pluralis::all_kinds()) {
    auto* sub = app.add_subcommand(pluralis::to_string(kind), "run the " + pluralis::to_string(kind) + " experiment");
    sub->add_option("--config", opts.config, "JSON spec")->check(CLI::ExistingFile);
    sub->add_option("--out", opts.out, "output directory (overrides the spec)");
    sub->add_option("--seed", opts.seed, "seed (overrides the spec)");
    sub->add_option("--threads", opts.threads, "parallel sweep cells")->check(CLI::PositiveNumber);
    sub->callback([&chosen, kind] { chosen = kind; });
  }

  std::string plot_dir;
  auto* plot = app.add_subcommand("plot", "write tidy (series,x,y) CSVs for a finished run");
  plot->add_option("--out", plot_dir, "run directory holding manifest.json")->required();

  std::string schema_kind;
  auto* schema = app.add_subcommand("schema", "print a kind's parameters and defaults");
  schema->add_option("kind", schema_kind, "experiment kind")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (plot->parsed()) {
      for (const auto& path : pluralis::emit_plot_data(pluralis::read_manifest(plot_dir))) {
        std::cout << path.string() << '\n';
      }
      return 0;
    }
    if (schema->parsed()) {
      print_schema(pluralis::parse_kind(schema_kind));
      return 0;
    }
    const auto spec = load_spec(*chosen, opts);
    const auto manifest = pluralis::run_experiment(spec);
    for (const auto& f : manifest.files) std::cout << (spec.out_dir / f.name).string() << '\n';
    std::cout << (spec.out_dir / pluralis::kManifestName).string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pluralis::exit_code_for(e);
  }
}
