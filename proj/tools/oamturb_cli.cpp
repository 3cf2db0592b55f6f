// Command line front end for the oamturb library.
//
// Five subcommands cover the pipeline end to end: superop assembles and
// caches the generator matrices, lindblads exports the discrete operator
// spectrum, evolve produces observable curves over distance, codesim runs
// the error-correction Monte Carlo, and multiphoton materializes lifted
// collective operators. All artifacts embed the generating parameters, and
// a fixed config plus seed reproduces every output byte for byte.

#include <CLI11.hpp>
#include <json.hpp>

#include <oamturb/channel.hpp>
#include <oamturb/codes.hpp>
#include <oamturb/evolve.hpp>
#include <oamturb/io.hpp>
#include <oamturb/ipe.hpp>
#include <oamturb/modes.hpp>
#include <oamturb/multiphoton.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;

struct RunConfig {
  oamturb::PhysicalParams params;
  int l_cut = 4;
  double t = 1.0;
  double t_max = 100.0;
  int steps = 20;
  std::string n_spec = "1";
  std::string observable = "trace";
  std::int64_t trials = 10000;
  std::uint64_t seed = 1;
  std::string noise = "independent";
  std::string frame = "comoving";
  int substeps = 0;
  bool condition_on_code = false;
  int n_photons = 2;
  double tolerance = 1e-10;
  int count = 4;
  std::string output;
  std::string cache_dir;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double as_number(const json& v, const std::string& key) {
  if (!v.is_number())
    throw ConfigError("config key \"" + key + "\" must be a number");
  return v.get<double>();
}

template <typename T>
T as_integer(const json& v, const std::string& key) {
  if (!v.is_number_integer())
    throw ConfigError("config key \"" + key + "\" must be an integer");
  return v.get<T>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string())
    throw ConfigError("config key \"" + key + "\" must be a string");
  return v.get<std::string>();
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object())
    throw ConfigError("config file " + path + " must hold a flat JSON object");

  for (const auto& [key, value] : j.items()) {
    if (key == "lambda") cfg.params.wavelength = as_number(value, key);
    else if (key == "omega0") cfg.params.waist = as_number(value, key);
    else if (key == "cn2") cfg.params.cn2 = as_number(value, key);
    else if (key == "l_cut") cfg.l_cut = as_integer<int>(value, key);
    else if (key == "t") cfg.t = as_number(value, key);
    else if (key == "t_max") cfg.t_max = as_number(value, key);
    else if (key == "steps") cfg.steps = as_integer<int>(value, key);
    else if (key == "n") {
      if (value.is_number_integer())
        cfg.n_spec = std::to_string(value.get<long long>());
      else
        cfg.n_spec = as_string(value, key);
    } else if (key == "observable") cfg.observable = as_string(value, key);
    else if (key == "trials") cfg.trials = as_integer<std::int64_t>(value, key);
    else if (key == "seed") {
      if (!value.is_number_integer() || value.get<double>() < 0)
        throw ConfigError("config key \"seed\" must be a non-negative integer");
      cfg.seed = value.get<std::uint64_t>();
    } else if (key == "noise") cfg.noise = as_string(value, key);
    else if (key == "frame") cfg.frame = as_string(value, key);
    else if (key == "substeps") cfg.substeps = as_integer<int>(value, key);
    else if (key == "condition_on_code") {
      if (!value.is_boolean())
        throw ConfigError("config key \"condition_on_code\" must be a boolean");
      cfg.condition_on_code = value.get<bool>();
    } else if (key == "n_photons") cfg.n_photons = as_integer<int>(value, key);
    else if (key == "tolerance") cfg.tolerance = as_number(value, key);
    else if (key == "count") cfg.count = as_integer<int>(value, key);
    else if (key == "output") cfg.output = as_string(value, key);
    else if (key == "cache_dir") cfg.cache_dir = as_string(value, key);
    else throw ConfigError("unknown config key \"" + key + "\"");
  }
}

std::vector<int> parse_n_list(const std::string& spec, int l_cut) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string token;
  while (std::getline(ss, token, ',')) {
    std::size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(token, &used);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse code index \"" + token + "\"");
    }
    if (used != token.size())
      throw ConfigError("cannot parse code index \"" + token + "\"");
    if (n < 1 || n > l_cut)
      throw ConfigError("code index " + std::to_string(n) +
                        " must satisfy 1 <= n <= l_cut");
    out.push_back(n);
  }
  if (out.empty()) throw ConfigError("the n list is empty");
  return out;
}

void require_finite_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw ConfigError(std::string(what) + " must be positive and finite");
}

void validate_config(const RunConfig& cfg) {
  cfg.params.validate();
  if (cfg.l_cut < 1 || cfg.l_cut > 64)
    throw ConfigError("l_cut must lie in [1, 64]");
  if (cfg.t < 0.0 || !std::isfinite(cfg.t))
    throw ConfigError("t must be non-negative and finite");
  require_finite_positive(cfg.t_max, "t_max");
  if (cfg.steps < 1 || cfg.steps > 200000)
    throw ConfigError("steps must lie in [1, 200000]");
  if (cfg.trials < 1)
    throw ConfigError("trials must be positive");
  if (cfg.observable != "trace" && cfg.observable != "detect" &&
      cfg.observable != "fidelity")
    throw ConfigError("observable must be one of trace, detect, fidelity");
  if (cfg.noise != "independent" && cfg.noise != "collective")
    throw ConfigError("noise must be independent or collective");
  if (cfg.frame != "comoving" && cfg.frame != "fixed")
    throw ConfigError("frame must be comoving or fixed");
  if (cfg.substeps < 0 || cfg.substeps > 100000)
    throw ConfigError("substeps must lie in [0, 100000]");
  if (cfg.n_photons < 1 || cfg.n_photons > 16)
    throw ConfigError("n_photons must lie in [1, 16]");
  require_finite_positive(cfg.tolerance, "tolerance");
  if (cfg.count < 1 || cfg.count > 10000)
    throw ConfigError("count must lie in [1, 10000]");
}

oamturb::EvolveOptions evolve_options(const RunConfig& cfg) {
  oamturb::EvolveOptions opts;
  opts.frame = (cfg.frame == "fixed") ? oamturb::Frame::fixed
                                      : oamturb::Frame::comoving;
  opts.substeps = cfg.substeps;
  opts.condition_on_code = cfg.condition_on_code;
  return opts;
}

// Dense generators above this truncation need gigabytes; refuse early with a
// clear message instead of thrashing.
void require_dense_feasible(int l_cut) {
  if (l_cut > 5)
    throw ConfigError(
        "the dense superoperator at l_cut > 5 exceeds a gigabyte; "
        "rerun with l_cut <= 5");
}

struct CacheOutcome {
  std::filesystem::path path;
  bool from_cache = false;
  oamturb::Matrix matrix;
};

template <typename Compute>
CacheOutcome cached_matrix(const RunConfig& cfg, const std::string& kind,
                           double t, Compute compute) {
  namespace fs = std::filesystem;
  const fs::path dir =
      cfg.cache_dir.empty() ? oamturb::cache_dir() : fs::path(cfg.cache_dir);
  fs::create_directories(dir);
  const std::string key = oamturb::cache_key(
      kind, cfg.params, oamturb::Truncation{cfg.l_cut}, t);
  const fs::path path = dir / (key + ".oamt");

  if (fs::exists(path)) {
    try {
      auto [header, m] = oamturb::read_matrix(path);
      (void)header;
      return {path, true, std::move(m)};
    } catch (const oamturb::FormatError& e) {
      std::cerr << "oamturb: warning: cache entry " << path.string()
                << " cannot be used (" << e.what() << "); recomputing\n";
    }
  }

  oamturb::Matrix m = compute();
  oamturb::ContainerHeader header;
  header.l_cut = cfg.l_cut;
  header.n_photons = 1;
  header.wavelength = cfg.params.wavelength;
  header.waist = cfg.params.waist;
  header.cn2 = cfg.params.cn2;
  header.t = t;
  header.rows = m.rows();
  header.cols = m.cols();
  oamturb::write_matrix(path, header, m);
  return {path, false, std::move(m)};
}

std::vector<double> provenance(const RunConfig& cfg) {
  return {static_cast<double>(cfg.l_cut), cfg.params.wavelength,
          cfg.params.waist, cfg.params.cn2};
}

int cmd_superop(const RunConfig& cfg) {
  require_dense_feasible(cfg.l_cut);
  const oamturb::Truncation trunc{cfg.l_cut};

  const CacheOutcome coherent =
      cached_matrix(cfg, "coherent", 0.0, [&] {
        return oamturb::assemble_coherent(trunc, cfg.params);
      });
  std::cout << "coherent   " << coherent.path.string()
            << (coherent.from_cache ? "  cached" : "  computed") << "\n";

  const CacheOutcome dissipator =
      cached_matrix(cfg, "dissipator", cfg.t, [&] {
        return oamturb::assemble_dissipator(trunc, cfg.params, cfg.t);
      });
  std::cout << "dissipator " << dissipator.path.string()
            << (dissipator.from_cache ? "  cached" : "  computed") << "\n";
  return 0;
}

int cmd_lindblads(const RunConfig& cfg) {
  require_dense_feasible(cfg.l_cut);
  const oamturb::Truncation trunc{cfg.l_cut};
  const int n_dim = oamturb::dimension(trunc);

  const CacheOutcome dissipator =
      cached_matrix(cfg, "dissipator", cfg.t, [&] {
        return oamturb::assemble_dissipator(trunc, cfg.params, cfg.t);
      });
  const oamturb::Matrix choi = oamturb::choi_reshuffle(dissipator.matrix);
  const oamturb::Matrix dtilde = oamturb::project_traceless(choi, n_dim);
  const oamturb::LindbladSet set =
      oamturb::extract_lindblads(dtilde, trunc, cfg.tolerance);

  const std::filesystem::path out =
      cfg.output.empty() ? "lindblads.csv" : cfg.output;
  std::vector<std::vector<double>> rows;
  rows.reserve(set.terms.size());
  for (std::size_t k = 0; k < set.terms.size(); ++k) {
    std::vector<double> row{static_cast<double>(k), set.terms[k].eigenvalue,
                            std::abs(set.terms[k].eigenvalue)};
    const std::vector<double> prov = provenance(cfg);
    row.insert(row.end(), prov.begin(), prov.end());
    row.push_back(cfg.t);
    rows.push_back(std::move(row));
  }
  oamturb::emit_csv(out,
                    {"index", "eigenvalue", "magnitude", "l_cut", "lambda",
                     "omega0", "cn2", "t"},
                    rows);

  std::cout << "wrote " << out.string() << " (" << set.terms.size()
            << " operators, tolerance " << oamturb::format_full(cfg.tolerance)
            << ")\n";
  const std::size_t shown = std::min<std::size_t>(set.terms.size(), 8);
  for (std::size_t k = 0; k < shown; ++k)
    std::cout << "  " << k << "  "
              << oamturb::format_full(set.terms[k].eigenvalue) << "\n";
  if (set.negative_count > 0)
    std::cout << "  (" << set.negative_count
              << " negative-weight terms, total magnitude "
              << oamturb::format_full(set.negative_magnitude) << ")\n";
  return 0;
}

int cmd_evolve(const RunConfig& cfg) {
  const oamturb::Truncation trunc{cfg.l_cut};
  const std::vector<int> ns = parse_n_list(cfg.n_spec, cfg.l_cut);
  const oamturb::EvolveOptions opts = evolve_options(cfg);
  const double amp = 1.0 / std::numbers::sqrt2;

  std::vector<std::vector<double>> rows;
  for (int n : ns) {
    oamturb::Trajectory traj;
    if (cfg.observable == "trace") {
      traj = oamturb::trace_curve({n, amp, amp}, cfg.params, trunc, cfg.t_max,
                                  cfg.steps, opts);
    } else if (cfg.observable == "detect") {
      traj = oamturb::detect_curve({n, amp, amp}, cfg.params, trunc, cfg.t_max,
                                   cfg.steps, opts);
    } else {
      traj = oamturb::min_fidelity_curve(n, cfg.params, trunc, cfg.t_max,
                                         cfg.steps, {}, opts);
    }
    for (std::size_t j = 0; j < traj.t.size(); ++j) {
      std::vector<double> row{traj.t[j], traj.values[j],
                              static_cast<double>(n)};
      const std::vector<double> prov = provenance(cfg);
      row.insert(row.end(), prov.begin(), prov.end());
      rows.push_back(std::move(row));
    }
  }

  const std::filesystem::path out =
      cfg.output.empty() ? "evolve.csv" : cfg.output;
  const std::string value_name =
      cfg.observable == "fidelity" ? "min_fidelity" : cfg.observable;
  oamturb::emit_csv(
      out, {"t", value_name, "n", "l_cut", "lambda", "omega0", "cn2"}, rows);
  std::cout << "wrote " << out.string() << " (" << value_name << ", "
            << ns.size() << " curves, " << cfg.steps + 1 << " points each)\n";
  return 0;
}

int cmd_codesim(const RunConfig& cfg) {
  const std::vector<int> ns = parse_n_list(cfg.n_spec, cfg.l_cut);
  if (ns.size() != 1)
    throw ConfigError("codesim takes a single code index n");

  oamturb::SchemeOptions opts;
  opts.noise = (cfg.noise == "collective") ? oamturb::NoiseModel::collective
                                           : oamturb::NoiseModel::independent;
  opts.evolve = evolve_options(cfg);
  const oamturb::SchemeResult res =
      oamturb::scheme_simulate(cfg.params, oamturb::Truncation{cfg.l_cut},
                               ns[0], cfg.t, cfg.trials, cfg.seed, opts);

  json j;
  j["lambda"] = cfg.params.wavelength;
  j["omega0"] = cfg.params.waist;
  j["cn2"] = cfg.params.cn2;
  j["l_cut"] = cfg.l_cut;
  j["n"] = ns[0];
  j["t"] = cfg.t;
  j["frame"] = cfg.frame;
  j["substeps"] = cfg.substeps;
  j["noise"] = cfg.noise;
  j["trials"] = res.trials;
  j["seed"] = res.seed;
  j["p_detect"] = res.p_detect;
  j["twirled"] = res.twirled;
  j["shock_weight"] = res.shock_weight;
  j["logical_error_rate"] = res.logical_error_rate;
  j["heralded_failure_rate"] = res.heralded_failure_rate;
  j["erasure_histogram"] = res.erasure_histogram;

  const std::filesystem::path out =
      cfg.output.empty() ? "codesim.json" : cfg.output;
  std::ofstream file(out, std::ios::binary | std::ios::trunc);
  if (!file)
    throw oamturb::FormatError("cannot open " + out.string() + " for writing");
  file << j.dump(2) << "\n";
  if (!file) throw oamturb::FormatError("write failed for " + out.string());

  std::cout << "wrote " << out.string() << "\n"
            << "p_detect              "
            << oamturb::format_full(res.p_detect) << "\n"
            << "logical_error_rate    "
            << oamturb::format_full(res.logical_error_rate) << "\n"
            << "heralded_failure_rate "
            << oamturb::format_full(res.heralded_failure_rate) << "\n";
  return 0;
}

int cmd_multiphoton(const RunConfig& cfg) {
  require_dense_feasible(cfg.l_cut);
  const oamturb::Truncation trunc{cfg.l_cut};
  const int n_dim = oamturb::dimension(trunc);

  const CacheOutcome dissipator =
      cached_matrix(cfg, "dissipator", cfg.t, [&] {
        return oamturb::assemble_dissipator(trunc, cfg.params, cfg.t);
      });
  const oamturb::Matrix choi = oamturb::choi_reshuffle(dissipator.matrix);
  const oamturb::Matrix dtilde = oamturb::project_traceless(choi, n_dim);
  const oamturb::LindbladSet set =
      oamturb::extract_lindblads(dtilde, trunc, cfg.tolerance);
  if (set.terms.empty())
    throw ConfigError("no operators above tolerance; nothing to lift");

  const std::string prefix = cfg.output.empty() ? "lifted" : cfg.output;
  const std::size_t wanted =
      std::min<std::size_t>(set.terms.size(), static_cast<std::size_t>(cfg.count));
  for (std::size_t k = 0; k < wanted; ++k) {
    const oamturb::CollectiveOperator lifted =
        oamturb::lift(set.terms[k].op, cfg.n_photons);
    const oamturb::Matrix dense = lifted.dense();

    char suffix[32];
    std::snprintf(suffix, sizeof(suffix), "-%02zu.oamt", k);
    const std::filesystem::path path = prefix + suffix;
    oamturb::ContainerHeader header;
    header.l_cut = cfg.l_cut;
    header.n_photons = cfg.n_photons;
    header.wavelength = cfg.params.wavelength;
    header.waist = cfg.params.waist;
    header.cn2 = cfg.params.cn2;
    header.t = cfg.t;
    header.rows = dense.rows();
    header.cols = dense.cols();
    oamturb::write_matrix(path, header, dense);
    std::cout << path.string() << "  (" << dense.rows() << "x" << dense.cols()
              << ", weight " << oamturb::format_full(set.terms[k].eigenvalue)
              << ")\n";
  }
  std::cout << "wrote " << wanted << " lifted operators\n";
  return 0;
}

// The config file must land in cfg before CLI11 writes flag values on top,
// so the path is pulled out of argv ahead of the regular parse.
std::optional<std::string> prescan_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config") {
      if (i + 1 >= argc) throw ConfigError("--config needs a file path");
      return std::string(argv[i + 1]);
    }
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  try {
    if (const auto path = prescan_config_path(argc, argv))
      apply_config_file(cfg, *path);
  } catch (const std::exception& e) {
    std::cerr << "oamturb: error: " << e.what() << "\n";
    return 1;
  }

  CLI::App app{"Orbital-angular-momentum turbulence channel toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path,
                 "flat JSON config file; command-line flags override it");
  app.add_option("--lambda", cfg.params.wavelength, "wavelength in meters")
      ->capture_default_str();
  app.add_option("--omega0", cfg.params.waist, "beam waist in meters")
      ->capture_default_str();
  app.add_option("--cn2", cfg.params.cn2, "index structure constant")
      ->capture_default_str();
  app.add_option("--l-cut", cfg.l_cut, "azimuthal and radial truncation")
      ->capture_default_str();
  app.add_option("--t", cfg.t, "propagation distance in Rayleigh ranges")
      ->capture_default_str();
  app.add_option("--t-max", cfg.t_max, "curve endpoint for evolve")
      ->capture_default_str();
  app.add_option("--steps", cfg.steps, "grid intervals for evolve")
      ->capture_default_str();
  app.add_option("--n", cfg.n_spec, "code index, or a comma list for evolve")
      ->capture_default_str();
  app.add_option("--observable", cfg.observable,
                 "evolve quantity: trace, detect, or fidelity")
      ->capture_default_str();
  app.add_option("--trials", cfg.trials, "Monte Carlo trials for codesim")
      ->capture_default_str();
  app.add_option("--seed", cfg.seed, "Monte Carlo seed for codesim")
      ->capture_default_str();
  app.add_option("--noise", cfg.noise,
                 "codesim noise model: independent or collective")
      ->capture_default_str();
  app.add_option("--frame", cfg.frame,
                 "reference frame: comoving or fixed")
      ->capture_default_str();
  app.add_option("--substeps", cfg.substeps,
                 "integrator substeps per interval; 0 picks automatically")
      ->capture_default_str();
  app.add_flag("--condition-on-code", cfg.condition_on_code,
               "renormalize fidelity by the code-space weight");
  app.add_option("--n-photons", cfg.n_photons,
                 "photon count for multiphoton lifting")
      ->capture_default_str();
  app.add_option("--tolerance", cfg.tolerance,
                 "eigenvalue cutoff for operator extraction")
      ->capture_default_str();
  app.add_option("--count", cfg.count,
                 "how many operators multiphoton exports")
      ->capture_default_str();
  app.add_option("--output", cfg.output,
                 "output file (or file prefix for multiphoton)");
  app.add_option("--cache-dir", cfg.cache_dir,
                 "cache directory; OAMTURB_CACHE or ./oamturb-cache otherwise");

  CLI::App* superop =
      app.add_subcommand("superop", "assemble and cache the generator matrices");
  superop->fallthrough();
  CLI::App* lindblads = app.add_subcommand(
      "lindblads", "export the discrete operator spectrum as CSV");
  lindblads->fallthrough();
  CLI::App* evolve = app.add_subcommand(
      "evolve", "write observable curves over distance as CSV");
  evolve->fallthrough();
  CLI::App* codesim = app.add_subcommand(
      "codesim", "run the error-correction Monte Carlo and write JSON");
  codesim->fallthrough();
  CLI::App* multiphoton = app.add_subcommand(
      "multiphoton", "export lifted collective operators as binary containers");
  multiphoton->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    validate_config(cfg);
    if (superop->parsed()) return cmd_superop(cfg);
    if (lindblads->parsed()) return cmd_lindblads(cfg);
    if (evolve->parsed()) return cmd_evolve(cfg);
    if (codesim->parsed()) return cmd_codesim(cfg);
    if (multiphoton->parsed()) return cmd_multiphoton(cfg);
  } catch (const std::exception& e) {
    std::cerr << "oamturb: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
