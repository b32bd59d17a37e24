#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "pluralis/errors.hpp"
#include "pluralis/harness.hpp"

namespace pluralis {
namespace {

using nlohmann::json;

std::string format_number(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

constexpr std::array<std::pair<ExperimentKind, const char*>, 8> kKindNames{{
    {ExperimentKind::kExactDynamics, "exact-dynamics"},
    {ExperimentKind::kGmm, "gmm"},
    {ExperimentKind::kLeakageSweep, "leakage-sweep"},
    {ExperimentKind::kDecaySweep, "decay-sweep"},
    {ExperimentKind::kNashSweep, "nash-sweep"},
    {ExperimentKind::kConcentration, "concentration"},
    {ExperimentKind::kQSweep, "q-sweep"},
    {ExperimentKind::kKAblation, "k-ablation"},
}};

ParamSpec number(std::string key, double def, std::optional<double> min, std::optional<double> max,
                 bool min_exclusive, bool max_exclusive, std::string help) {
  return {std::move(key), ParamType::kNumber, def, min, max, min_exclusive, max_exclusive, std::move(help)};
}

ParamSpec positive(std::string key, double def, std::string help) {
  return number(std::move(key), def, 0.0, std::nullopt, true, false, std::move(help));
}

ParamSpec integer(std::string key, long long def, double min, std::string help) {
  return {std::move(key), ParamType::kInteger, def, min, std::nullopt, false, false, std::move(help)};
}

ParamSpec probability(std::string key, double def, bool allow_one, std::string help) {
  return number(std::move(key), def, 0.0, 1.0, true, !allow_one, std::move(help));
}

// Shared by every kind that runs grid dynamics.
std::vector<ParamSpec> grid_params(long long points) {
  return {
      integer("steps", 50, 1, "retraining iterations T"),
      positive("epsilon", 0.1, "basin tolerance"),
      integer("grid_points", points, 3, "line grid size"),
      positive("target_spacing", 0.75, "requested grid spacing; realised spacing divides D"),
      number("midpoint", 5.0, std::nullopt, std::nullopt, false, false, "midpoint of the two modes"),
  };
}

std::vector<ParamSpec> limit_params() {
  return {
      integer("limit_window", 10, 2, "trailing steps averaged for a_inf"),
      positive("limit_tolerance", 1e-4, "a_inf is unconverged when the window range exceeds this"),
  };
}

std::vector<ParamSpec> gmm_params(bool with_q) {
  std::vector<ParamSpec> p;
  if (with_q) p.push_back(probability("q", 0.5, true, "probability a draw is curated by r1; 1 is the single-reward baseline"));
  auto more = std::vector<ParamSpec>{
      integer("K", 100, 2, "candidate pool size"),
      integer("n_curated", 500, 20, "curated draws per iteration"),
      integer("T", 50, 1, "retraining iterations"),
      integer("low_capacity_until", 10, 0, "one component for t below this, two after"),
      positive("temperature", 1.0, "BT temperature"),
      integer("eval_samples", 1000, 2, "fresh samples for reward statistics"),
      integer("init_samples", 1000, 10, "samples for the initial fit"),
      positive("init_variance", 3.0, "isotropic variance of the initial sampler"),
      {"mu1", ParamType::kPoint, json::array({2.0, 2.0}), std::nullopt, std::nullopt, false, false, "centre of r1"},
      {"mu2", ParamType::kPoint, json::array({8.0, 8.0}), std::nullopt, std::nullopt, false, false, "centre of r2"},
      integer("em_restarts", 3, 1, "EM restarts"),
      integer("em_max_iterations", 200, 1, "EM iteration cap"),
      positive("em_tolerance", 1e-6, "EM log-likelihood tolerance"),
      number("covariance_floor", 1e-6, 0.0, std::nullopt, false, false, "added to every fitted covariance"),
      integer("seeds", with_q ? 1 : 5, 1, "independent runs per cell"),
  };
  p.insert(p.end(), more.begin(), more.end());
  return p;
}

std::vector<ParamSpec> make_schema(ExperimentKind kind) {
  auto join = [](std::vector<ParamSpec> a, const std::vector<ParamSpec>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  const ParamSpec distance = number("distance", 4.0, 0.0, std::nullopt, true, false, "mode distance D");
  const ParamSpec q = probability("q", 0.5, false, "preference weight of r1");
  const ParamSpec n_mc = integer("n_mc", 10'000, 100, "Monte-Carlo opponent pools");
  const ParamSpec state_cap = integer("state_cap", 1'000'000, 1, "exact convolution state budget");
  const ParamSpec decay_floor = positive("decay_floor", 1e-12, "masses below this are left out of the decay fit");

  switch (kind) {
    case ExperimentKind::kExactDynamics:
      return join(join(grid_params(401), limit_params()),
                  {distance, q,
                   integer("pool_size", 0, 0, "0 for the infinite-K tilt, otherwise K >= 2"),
                   n_mc, state_cap,
                   {"snapshots", ParamType::kIntegerList, json::array({0, 10, 50}), 0.0, std::nullopt,
                    false, false, "steps whose full density is saved"},
                   {"require_outside_domination", ParamType::kBool, true, std::nullopt, std::nullopt,
                    false, false, "fail with an assumption violation when the final rho_sup >= 1"},
                   decay_floor});
    case ExperimentKind::kLeakageSweep:
      return join(join(grid_params(401), limit_params()),
                  {{"qs", ParamType::kNumberList, json::array({0.1, 0.2, 0.4, 0.6, 0.8, 0.9}), 0.0, 1.0,
                    true, true, "preference weights"},
                   {"distances", ParamType::kNumberList, json::array({2.0, 4.0, 6.0}), 0.0, std::nullopt,
                    true, false, "mode distances"}});
    case ExperimentKind::kDecaySweep:
      return join(grid_params(401),
                  {q,
                   {"distances", ParamType::kNumberList, json::array({2.0, 4.0, 6.0, 8.0}), 0.0,
                    std::nullopt, true, false, "mode distances"},
                   decay_floor});
    case ExperimentKind::kNashSweep:
      return join(join(grid_params(401), limit_params()),
                  {{"qs", ParamType::kNumberList, json::array({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}),
                    0.0, 1.0, true, true, "preference weights"},
                   {"distances", ParamType::kNumberList, json::array({1.0, 2.0, 3.0, 5.0}), 0.0,
                    std::nullopt, true, false, "mode distances"},
                   integer("nash_grid", 10'001, 3, "alpha grid size")});
    case ExperimentKind::kConcentration:
      return {integer("support_points", 10, 2, "points with e^r = 1..n"),
              {"k_list", ParamType::kIntegerList, json::array({4, 8, 16, 32, 64}), 2.0, std::nullopt,
               false, false, "ascending pool sizes"},
              n_mc,
              positive("epsilon", 0.1, "deviation is measured on the epsilon basin"),
              state_cap,
              {"mc_check", ParamType::kBool, true, std::nullopt, std::nullopt, false, false,
               "also run the Monte-Carlo estimator and report z-scores against exact"}};
    case ExperimentKind::kGmm:
      return join(gmm_params(true),
                  {{"distances", ParamType::kNumberList, json::array(), 0.0, std::nullopt, false, false,
                    "if set, one run per distance along the diagonal through the midpoint of mu1, mu2"}});
    case ExperimentKind::kQSweep:
      return join(gmm_params(false),
                  {{"qs", ParamType::kNumberList, json::array({0.1, 0.3, 0.5, 0.7, 0.9}), 0.0, 1.0, true,
                    false, "preference weights"}});
    case ExperimentKind::kKAblation:
      return join(grid_params(41),
                  {distance, q,
                   {"k_list", ParamType::kIntegerList, json::array({16, 32, 256, 512, 1024}), 2.0,
                    std::nullopt, false, false, "pool sizes"},
                   integer("n_mc", 2'000, 100, "Monte-Carlo opponent pools"), state_cap});
  }
  throw ConfigError("unknown experiment kind");
}

std::string type_name(ParamType t) {
  switch (t) {
    case ParamType::kNumber: return "a number";
    case ParamType::kInteger: return "an integer";
    case ParamType::kBool: return "a boolean";
    case ParamType::kNumberList: return "an array of numbers";
    case ParamType::kIntegerList: return "an array of integers";
    case ParamType::kPoint: return "an array of two numbers";
  }
  return "?";
}

std::string range_text(const ParamSpec& p) {
  std::string s;
  if (p.min) s += (p.min_exclusive ? " > " : " >= ") + format_number(*p.min);
  if (p.max) s += std::string(s.empty() ? "" : " and") + (p.max_exclusive ? " < " : " <= ") + format_number(*p.max);
  return s;
}

bool is_integer(const json& v) {
  if (v.is_number_integer()) return true;
  return false;
}

void check_range(const ParamSpec& p, double v, const std::string& where) {
  const bool low = p.min && (p.min_exclusive ? !(v > *p.min) : !(v >= *p.min));
  const bool high = p.max && (p.max_exclusive ? !(v < *p.max) : !(v <= *p.max));
  if (low || high || std::isnan(v)) {
    throw ConfigError("parameter '" + where + "' must be" + range_text(p) + " (got " + format_number(v) + ")");
  }
}

void check_value(const ParamSpec& p, const json& v) {
  const auto type_error = [&] {
    throw ConfigError("parameter '" + p.key + "' must be " + type_name(p.type) + " (got " + v.dump() + ")");
  };
  switch (p.type) {
    case ParamType::kNumber:
      if (!v.is_number()) type_error();
      check_range(p, v.get<double>(), p.key);
      break;
    case ParamType::kInteger:
      if (!is_integer(v)) type_error();
      check_range(p, v.get<double>(), p.key);
      break;
    case ParamType::kBool:
      if (!v.is_boolean()) type_error();
      break;
    case ParamType::kNumberList:
    case ParamType::kIntegerList:
      if (!v.is_array()) type_error();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const bool ok = p.type == ParamType::kNumberList ? v[i].is_number() : is_integer(v[i]);
        if (!ok) type_error();
        check_range(p, v[i].get<double>(), p.key + "[" + std::to_string(i) + "]");
      }
      break;
    case ParamType::kPoint:
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) type_error();
      break;
  }
}

// Constraints that involve more than one key or a non-interval range.
void check_cross_field(const ExperimentSpec& spec) {
  const auto non_empty = [&](const char* key) {
    if (spec.params.at(key).empty()) throw ConfigError(std::string("parameter '") + key + "' must not be empty");
  };
  switch (spec.kind) {
    case ExperimentKind::kExactDynamics: {
      const int k = spec.integer("pool_size");
      if (k == 1) throw ConfigError("parameter 'pool_size' must be 0 (infinite K) or >= 2 (got 1)");
      for (int s : spec.integers("snapshots")) {
        if (s > spec.integer("steps")) {
          throw ConfigError("parameter 'snapshots' entries must be <= steps (got " + std::to_string(s) + ")");
        }
      }
      break;
    }
    case ExperimentKind::kLeakageSweep:
    case ExperimentKind::kNashSweep:
      non_empty("qs");
      non_empty("distances");
      break;
    case ExperimentKind::kDecaySweep:
      non_empty("distances");
      break;
    case ExperimentKind::kConcentration:
    case ExperimentKind::kKAblation: {
      non_empty("k_list");
      const auto ks = spec.integers("k_list");
      if (spec.kind == ExperimentKind::kConcentration) {
        for (std::size_t i = 1; i < ks.size(); ++i) {
          if (ks[i] <= ks[i - 1]) throw ConfigError("parameter 'k_list' must be strictly ascending");
        }
      }
      break;
    }
    case ExperimentKind::kQSweep:
      non_empty("qs");
      [[fallthrough]];
    case ExperimentKind::kGmm:
      if (spec.integer("n_curated") < 20) throw ConfigError("parameter 'n_curated' must be >= 20");
      break;
  }
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

ExperimentKind parse_kind(std::string_view name) {
  std::string valid;
  for (const auto& [k, n] : kKindNames) {
    if (name == n) return k;
    valid += valid.empty() ? "" : ", ";
    valid += n;
  }
  throw ConfigError("unknown kind '" + std::string(name) + "'; expected one of: " + valid);
}

const std::vector<ExperimentKind>& all_kinds() {
  static const std::vector<ExperimentKind> kinds = [] {
    std::vector<ExperimentKind> v;
    for (const auto& [k, n] : kKindNames) v.push_back(k);
    return v;
  }();
  return kinds;
}

const std::vector<ParamSpec>& schema(ExperimentKind kind) {
  static const std::map<ExperimentKind, std::vector<ParamSpec>> cache = [] {
    std::map<ExperimentKind, std::vector<ParamSpec>> m;
    for (const auto& [k, n] : kKindNames) m.emplace(k, make_schema(k));
    return m;
  }();
  return cache.at(kind);
}

double ExperimentSpec::number(const std::string& key) const { return params.at(key).get<double>(); }
int ExperimentSpec::integer(const std::string& key) const { return params.at(key).get<int>(); }
bool ExperimentSpec::flag(const std::string& key) const { return params.at(key).get<bool>(); }
std::vector<double> ExperimentSpec::numbers(const std::string& key) const {
  return params.at(key).get<std::vector<double>>();
}
std::vector<int> ExperimentSpec::integers(const std::string& key) const {
  return params.at(key).get<std::vector<int>>();
}
Eigen::Vector2d ExperimentSpec::point(const std::string& key) const {
  const auto& v = params.at(key);
  return {v[0].get<double>(), v[1].get<double>()};
}

nlohmann::json ExperimentSpec::to_json() const {
  json doc = params;
  doc["kind"] = to_string(kind);
  doc["seed"] = seed;
  doc["out"] = out_dir.string();
  doc["threads"] = threads;
  return doc;
}

ExperimentSpec default_spec(ExperimentKind kind) {
  ExperimentSpec spec;
  spec.kind = kind;
  spec.params = json::object();
  for (const auto& p : schema(kind)) spec.params[p.key] = p.default_value;
  return spec;
}

ExperimentSpec spec_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  if (!doc.contains("kind")) throw ConfigError("missing key 'kind'");
  if (!doc["kind"].is_string()) throw ConfigError("key 'kind' must be a string");
  ExperimentSpec spec = default_spec(parse_kind(doc["kind"].get<std::string>()));

  for (const auto& [key, value] : doc.items()) {
    if (key == "kind") continue;
    if (key == "seed") {
      if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<long long>() >= 0)) {
        throw ConfigError("key 'seed' must be an unsigned 64-bit integer (got " + value.dump() + ")");
      }
      spec.seed = value.get<std::uint64_t>();
      continue;
    }
    if (key == "out") {
      if (!value.is_string() || value.get<std::string>().empty()) {
        throw ConfigError("key 'out' must be a non-empty path string");
      }
      spec.out_dir = value.get<std::string>();
      continue;
    }
    if (key == "threads") {
      if (!value.is_number_integer() || value.get<long long>() < 1) {
        throw ConfigError("key 'threads' must be an integer >= 1 (got " + value.dump() + ")");
      }
      spec.threads = value.get<int>();
      continue;
    }
    const auto& sch = schema(spec.kind);
    const auto it = std::find_if(sch.begin(), sch.end(), [&](const ParamSpec& p) { return p.key == key; });
    if (it == sch.end()) {
      throw ConfigError("unknown key '" + key + "' for kind '" + to_string(spec.kind) + "'");
    }
    check_value(*it, value);
    spec.params[key] = value;
  }
  check_cross_field(spec);
  return spec;
}

ExperimentSpec parse_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  return spec_from_json(doc);
}

ExperimentSpec parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

GmmExperimentConfig gmm_config_from(const ExperimentSpec& spec) {
  if (spec.kind != ExperimentKind::kGmm && spec.kind != ExperimentKind::kQSweep) {
    throw ConfigError("not a GMM spec");
  }
  GmmExperimentConfig c;
  c.mu1 = spec.point("mu1");
  c.mu2 = spec.point("mu2");
  if (spec.kind == ExperimentKind::kGmm) c.q = spec.number("q");
  c.K = spec.integer("K");
  c.n_curated = spec.integer("n_curated");
  c.T = spec.integer("T");
  c.low_capacity_until = spec.integer("low_capacity_until");
  c.temperature = spec.number("temperature");
  c.eval_samples = spec.integer("eval_samples");
  c.init_samples = spec.integer("init_samples");
  c.init_variance = spec.number("init_variance");
  c.em.restarts = spec.integer("em_restarts");
  c.em.max_iterations = spec.integer("em_max_iterations");
  c.em.tolerance = spec.number("em_tolerance");
  c.em.covariance_floor = spec.number("covariance_floor");
  c.seed = spec.seed;
  return c;
}

ExactSetup exact_setup_from(const ExperimentSpec& spec) {
  ExactSetup s;
  const auto has = [&](const char* key) { return spec.params.contains(key); };
  if (!has("grid_points")) throw ConfigError("not a grid-dynamics spec");
  s.grid.points = spec.integer("grid_points");
  s.grid.target_spacing = spec.number("target_spacing");
  s.grid.midpoint = spec.number("midpoint");
  s.dynamics.steps = spec.integer("steps");
  s.dynamics.epsilon = spec.number("epsilon");
  s.dynamics.seed = spec.seed;
  if (has("distance")) s.distance = spec.number("distance");
  if (has("q")) s.q = spec.number("q");
  if (has("limit_window")) s.limit_window = static_cast<std::size_t>(spec.integer("limit_window"));
  if (has("limit_tolerance")) s.limit_tolerance = spec.number("limit_tolerance");
  if (has("decay_floor")) s.decay_floor = spec.number("decay_floor");
  if (has("require_outside_domination")) s.require_outside_domination = spec.flag("require_outside_domination");
  if (has("snapshots")) s.dynamics.snapshots = spec.integers("snapshots");
  const std::size_t cap = has("state_cap") ? static_cast<std::size_t>(spec.integer("state_cap")) : kDefaultStateCap;
  const int n_mc = has("n_mc") ? spec.integer("n_mc") : 10'000;
  if (has("pool_size") && spec.integer("pool_size") >= 2) {
    s.dynamics.mode = FinitePool{spec.integer("pool_size"), n_mc, cap};
  } else if (spec.kind == ExperimentKind::kKAblation) {
    s.dynamics.mode = FinitePool{2, n_mc, cap};  // K set per cell
  }
  return s;
}

std::uint64_t cell_seed(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x9e37u};
  std::array<std::uint32_t, 2> w{};
  seq.generate(w.begin(), w.end());
  return (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
}

}  // namespace pluralis
