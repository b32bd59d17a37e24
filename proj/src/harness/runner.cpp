#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "experiments.hpp"
#include "pluralis/errors.hpp"

namespace pluralis {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::array<char, 32> buf{};
  std::strftime(buf.data(), buf.size(), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf.data();
}

void remove_quietly(const fs::path& p) {
  std::error_code ec;
  fs::remove(p, ec);
}

void cleanup(const detail::OutputSink& sink, bool created_dir) {
  for (const auto& name : sink.written) remove_quietly(sink.dir / name);
  remove_quietly(sink.dir / (std::string(kManifestName) + ".tmp"));
  if (created_dir) {
    std::error_code ec;
    if (fs::is_empty(sink.dir, ec)) fs::remove(sink.dir, ec);
  }
}

std::string label(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("missing input file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

json RunManifest::to_json() const {
  json files_json = json::array();
  for (const auto& f : files) files_json.push_back({{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return {{"artifact", "pluralis"},       {"artifact_version", artifact_version},
          {"spec", spec},                 {"seed", seed},
          {"started_at", started_at},     {"finished_at", finished_at},
          {"files", files_json}};
}

ExperimentKind RunManifest::kind() const { return parse_kind(spec.at("kind").get<std::string>()); }

RunManifest run_experiment(const ExperimentSpec& spec) {
  const bool created_dir = !fs::exists(spec.out_dir);
  fs::create_directories(spec.out_dir);
  // A stale manifest would vouch for files this run is about to replace.
  remove_quietly(spec.out_dir / kManifestName);

  detail::OutputSink sink{spec.out_dir, {}};
  RunManifest manifest;
  manifest.spec = spec.to_json();
  manifest.artifact_version = kArtifactVersion;
  manifest.seed = spec.seed;
  manifest.directory = spec.out_dir;
  manifest.started_at = utc_now();
  try {
    detail::run_kind(spec, sink);
    for (const auto& name : sink.written) {
      const fs::path p = spec.out_dir / name;
      manifest.files.push_back({name, sha256_file(p), fs::file_size(p)});
    }
    manifest.finished_at = utc_now();

    const fs::path tmp = spec.out_dir / (std::string(kManifestName) + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << manifest.to_json().dump(2) << '\n';
      if (!out) throw Error("failed writing " + tmp.string());
    }
    fs::rename(tmp, spec.out_dir / kManifestName);
  } catch (...) {
    cleanup(sink, created_dir);
    throw;
  }
  return manifest;
}

RunManifest read_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / kManifestName : path;
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InvalidInput("missing input file: " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput("unreadable manifest " + file.string() + ": " + e.what());
  }
  RunManifest m;
  try {
    m.spec = doc.at("spec");
    m.artifact_version = doc.at("artifact_version").get<std::string>();
    m.started_at = doc.at("started_at").get<std::string>();
    m.finished_at = doc.at("finished_at").get<std::string>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& f : doc.at("files")) {
      m.files.push_back({f.at("name").get<std::string>(), f.at("sha256").get<std::string>(),
                         f.at("bytes").get<std::uintmax_t>()});
    }
  } catch (const json::exception& e) {
    throw InvalidInput("malformed manifest " + file.string() + ": " + e.what());
  }
  m.directory = file.parent_path();
  return m;
}

std::vector<fs::path> emit_plot_data(const RunManifest& manifest) {
  const fs::path dir = manifest.directory;
  for (const auto& f : manifest.files) {
    if (!fs::exists(dir / f.name)) throw InvalidInput("missing input file: " + (dir / f.name).string());
  }
  std::vector<fs::path> out;
  auto save = [&](const std::string& name, const CsvWriter& csv) {
    csv.save(dir / name);
    out.push_back(dir / name);
  };
  auto tidy = [] { return CsvWriter({"series", "x", "y"}); };

  // GMM runs: one series per (cell, seed) unless there is a single run.
  auto gmm_variances = [&](const std::string& file, const std::string& key) {
    const CsvTable t = read_csv(dir / file);
    const auto keys = t.numbers(key);
    const auto seeds = t.numbers("seed_index");
    const auto iters = t.numbers("iteration");
    const auto v1 = t.numbers("var_r1");
    const auto v2 = t.numbers("var_r2");
    bool single = true;
    for (std::size_t i = 0; i < keys.size(); ++i) single = single && keys[i] == keys[0] && seeds[i] == seeds[0];
    CsvWriter csv = tidy();
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const std::string suffix =
          single ? "" : " " + key + "=" + label(keys[i]) + " seed=" + label(seeds[i]);
      csv.add_row({"r1" + suffix, iters[i], v1[i]});
      csv.add_row({"r2" + suffix, iters[i], v2[i]});
    }
    save("variance_trajectories.csv", csv);
  };

  switch (manifest.kind()) {
    case ExperimentKind::kExactDynamics: {
      const CsvTable t = read_csv(dir / "trajectory.csv");
      const auto step = t.numbers("step");
      CsvWriter var = tidy(), ent = tidy(), mass = tidy();
      const auto v1 = t.numbers("var_r1"), v2 = t.numbers("var_r2"), h = t.numbers("entropy");
      const auto a = t.numbers("a"), b = t.numbers("b"), m = t.numbers("outside");
      for (std::size_t i = 0; i < step.size(); ++i) {
        var.add_row({"r1", step[i], v1[i]});
        var.add_row({"r2", step[i], v2[i]});
        ent.add_row({"entropy", step[i], h[i]});
        mass.add_row({"a", step[i], a[i]});
        mass.add_row({"b", step[i], b[i]});
        mass.add_row({"outside", step[i], m[i]});
      }
      save("variance_trajectories.csv", var);
      save("entropy_vs_iter.csv", ent);
      save("basin_mass_vs_iter.csv", mass);

      const CsvTable s = read_csv(dir / "snapshots.csv");
      const auto ss = s.numbers("step"), xs = s.numbers("x"), ps = s.numbers("mass");
      std::map<long long, CsvWriter> per_step;
      for (std::size_t i = 0; i < ss.size(); ++i) {
        const auto key = static_cast<long long>(ss[i]);
        auto it = per_step.try_emplace(key, tidy()).first;
        it->second.add_row({"p", xs[i], ps[i]});
      }
      for (const auto& [step_n, csv] : per_step) save("density_t" + std::to_string(step_n) + ".csv", csv);
      break;
    }
    case ExperimentKind::kGmm: {
      gmm_variances("gmm_trajectory.csv", "distance");
      const CsvTable f = read_csv(dir / "gmm_final.csv");
      const auto d = f.numbers("distance"), mv = f.numbers("min_var");
      CsvWriter phase = tidy();
      for (std::size_t i = 0; i < d.size(); ++i) phase.add_row({"min_var", d[i], mv[i]});
      save("min_variance_vs_distance.csv", phase);
      break;
    }
    case ExperimentKind::kQSweep: {
      gmm_variances("q_sweep_trajectory.csv", "q");
      const CsvTable f = read_csv(dir / "q_sweep_final.csv");
      const auto q = f.numbers("q"), s = f.numbers("seed_index"), w = f.numbers("weight_near_mu1");
      CsvWriter csv = tidy();
      for (std::size_t i = 0; i < q.size(); ++i) csv.add_row({"seed " + label(s[i]), q[i], w[i]});
      const CsvTable m = read_csv(dir / "q_sweep_summary.csv");
      const auto mq = m.numbers("q"), mw = m.numbers("median_weight_near_mu1");
      for (std::size_t i = 0; i < mq.size(); ++i) csv.add_row({"median", mq[i], mw[i]});
      save("weight_vs_q.csv", csv);
      break;
    }
    case ExperimentKind::kLeakageSweep: {
      const CsvTable t = read_csv(dir / "leakage.csv");
      const auto q = t.numbers("q"), d = t.numbers("D");
      const auto lo = t.numbers("lower"), emp = t.numbers("empirical"), up = t.numbers("upper");
      CsvWriter csv = tidy();
      for (std::size_t i = 0; i < q.size(); ++i) {
        const std::string tag = "D=" + label(d[i]) + " ";
        csv.add_row({tag + "lower", q[i], lo[i]});
        csv.add_row({tag + "empirical", q[i], emp[i]});
        csv.add_row({tag + "upper", q[i], up[i]});
      }
      save("leakage_bounds.csv", csv);
      break;
    }
    case ExperimentKind::kDecaySweep: {
      const CsvTable t = read_csv(dir / "outside_mass.csv");
      const auto d = t.numbers("distance"), step = t.numbers("step"), m = t.numbers("outside");
      CsvWriter csv = tidy();
      for (std::size_t i = 0; i < d.size(); ++i) csv.add_row({"D=" + label(d[i]), step[i], m[i]});
      save("outside_mass_vs_iter.csv", csv);
      break;
    }
    case ExperimentKind::kNashSweep: {
      const CsvTable t = read_csv(dir / "nash.csv");
      const auto d = t.numbers("distance"), mse = t.numbers("mse");
      CsvWriter csv = tidy();
      for (std::size_t i = 0; i < d.size(); ++i) csv.add_row({"mse", d[i], mse[i]});
      save("nash_mse_vs_distance.csv", csv);
      break;
    }
    case ExperimentKind::kConcentration: {
      const CsvTable t = read_csv(dir / "concentration.csv");
      const auto k = t.numbers("K"), dev = t.numbers("deviation"), bound = t.numbers("bound");
      CsvWriter csv = tidy();
      for (std::size_t i = 0; i < k.size(); ++i) {
        csv.add_row({"deviation", k[i], dev[i]});
        csv.add_row({"bound", k[i], bound[i]});
      }
      save("deviation_vs_k.csv", csv);
      break;
    }
    case ExperimentKind::kKAblation: {
      const CsvTable t = read_csv(dir / "k_ablation.csv");
      const auto k = t.numbers("K"), step = t.numbers("step"), al = t.numbers("alignment");
      CsvWriter csv = tidy();
      for (std::size_t i = 0; i < k.size(); ++i) csv.add_row({"K=" + label(k[i]), step[i], al[i]});
      save("alignment_vs_iter.csv", csv);
      break;
    }
  }
  return out;
}

int exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error) || dynamic_cast<const InvalidInput*>(&error)) return 2;
  if (dynamic_cast<const AssumptionViolation*>(&error)) return 3;
  if (dynamic_cast<const NumericalFailure*>(&error) || dynamic_cast<const StateCapExceeded*>(&error)) return 4;
  return 1;
}

}  // namespace pluralis
