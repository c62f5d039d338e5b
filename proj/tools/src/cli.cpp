#include "deconfound_cli/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "deconfound/dataset_io.hpp"
#include "deconfound/datagen.hpp"
#include "deconfound/deconfound.hpp"
#include "deconfound/errors.hpp"
#include "deconfound/harness.hpp"
#include "deconfound/oracle.hpp"
#include "deconfound/regress.hpp"

namespace deconfound::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Keys a --config file may carry; each mirrors a flag of the same name
// (dashes become underscores). "spec" holds ScenarioSpec field overrides.
const std::vector<std::string> kConfigKeys = {
    "scenario", "n1",   "reps",   "seed",    "workers", "grid",       "mode",  "f_basis",
    "g_basis",  "out",  "dump",   "signal",  "obs",     "rct",        "trial", "omega_basis",
    "n",        "spec", "propensity", "brute_force"};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError("config '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw ParseError("config '" + path + "' must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(kConfigKeys.begin(), kConfigKeys.end(), key) == kConfigKeys.end()) {
      throw ParseError("config '" + path + "': unknown key '" + key + "'");
    }
  }
  return j;
}

// Flag value if the flag was given, else the config value, else nothing.
template <class T>
std::optional<T> pick(const CLI::Option* flag, const T& value, const json& config,
                      const char* key) {
  if (flag != nullptr && flag->count() > 0) return value;
  if (config.contains(key)) {
    try {
      return config.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("config key '") + key + "': " + e.what());
    }
  }
  return std::nullopt;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &pos);
    } catch (const std::exception&) {
      throw ValidationError("bad list entry '" + item + "'");
    }
    if (pos != item.size() || v < 1) throw ValidationError("bad list entry '" + item + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ValidationError("empty list");
  return out;
}

std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t value, const json& config,
                           std::uint64_t fallback) {
  if (auto s = pick<std::uint64_t>(flag, value, config, "seed")) return *s;
  if (const char* env = std::getenv("DECONFOUND_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(env, &pos);
      if (pos == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError(std::string("DECONFOUND_SEED is not an unsigned integer: ") + env);
  }
  return fallback;
}

std::vector<Shape> parse_scenarios(const std::string& name) {
  if (name == "both") return {Shape::Linear, Shape::Quadratic};
  return {parse_shape(name)};
}

ScenarioSpec scenario_with_overrides(Shape shape, const json& config) {
  if (!config.contains("spec")) return ScenarioSpec::defaults(shape);
  json j = json::parse(ScenarioSpec::defaults(shape).to_json());
  for (const auto& [key, value] : config.at("spec").items()) j[key] = value;
  j["shape"] = std::string(to_string(shape));
  auto spec = ScenarioSpec::from_json(j.dump());
  spec.validate();
  return spec;
}

fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir + "'");
  return fs::path(dir);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

void close_out(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::size_t default_workers() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void print_region_table(std::ostream& out, const SummaryTable& table) {
  out << std::left << std::setw(10) << "scenario" << std::right << std::setw(6) << "n1" << "  "
      << std::left << std::setw(13) << "method" << std::right;
  for (Region r : kAllRegions) out << std::setw(18) << to_string(r);
  out << std::setw(10) << "failures" << '\n';
  const std::string* last_scenario = nullptr;
  std::size_t last_n1 = 0;
  for (std::size_t i = 0; i < table.regions.size(); i += std::size(kAllRegions)) {
    const auto& first = table.regions[i];
    if (last_scenario != nullptr && (*last_scenario != first.scenario || last_n1 != first.n1)) {
      out << '\n';
    }
    last_scenario = &first.scenario;
    last_n1 = first.n1;
    out << std::left << std::setw(10) << first.scenario << std::right << std::setw(6) << first.n1
        << "  " << std::left << std::setw(13) << to_string(first.method) << std::right;
    for (std::size_t j = 0; j < std::size(kAllRegions); ++j) {
      const auto& r = table.regions[i + j];
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", r.rmse);
      out << std::setw(18) << buf;
    }
    out << std::setw(10) << first.failures << '\n';
  }
  out << "(RMSE of tau1-hat against the oracle, pooled over replications)\n";
}

// ---- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::string config, scenario = "both", n1, grid, mode = "both", f_basis, g_basis, out = ".",
                      dump, signal = "transformed";
  long long reps = 200;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  CLI::Option *o_scenario, *o_n1, *o_reps, *o_seed, *o_workers, *o_grid, *o_mode, *o_f, *o_g,
      *o_out, *o_dump, *o_signal;
};

void dump_datasets(const ExperimentPlan& plan, const fs::path& dir) {
  for (const auto& spec : plan.scenarios) {
    const auto id = static_cast<std::uint64_t>(spec.shape);
    const std::string name(to_string(spec.shape));
    const auto obs = gen_observational(spec, {plan.master_seed, id, kRoleObservational, 0});
    write_observational_csv((dir / ("obs_" + name + ".csv")).string(), obs);
    write_rct_csv((dir / ("rct2_" + name + ".csv")).string(),
                  gen_rct(2, spec, {plan.master_seed, id, role_trial(2), 0}));
    for (std::size_t n1 : plan.n1_values) {
      auto sized = spec;
      sized.rct_sizes[0] = n1;
      write_rct_csv((dir / ("rct1_" + name + "_n" + std::to_string(n1) + ".csv")).string(),
                    gen_rct(1, sized, {plan.master_seed, id, role_trial(1), 0}));
    }
  }
}

int simulate(const SimulateArgs& a, std::ostream& out) {
  const json config = load_config(a.config);
  auto plan = ExperimentPlan::defaults();

  plan.scenarios.clear();
  for (Shape shape :
       parse_scenarios(pick(a.o_scenario, a.scenario, config, "scenario").value_or("both"))) {
    plan.scenarios.push_back(scenario_with_overrides(shape, config));
  }
  if (a.o_n1->count() > 0) {
    plan.n1_values = parse_size_list(a.n1);
  } else if (config.contains("n1")) {
    plan.n1_values = config.at("n1").get<std::vector<std::size_t>>();
  }
  if (auto reps = pick(a.o_reps, a.reps, config, "reps")) {
    if (*reps < 0) throw ValidationError("reps must be >= 1");
    plan.replications = static_cast<std::size_t>(*reps);
  }
  plan.master_seed = resolve_seed(a.o_seed, a.seed, config, plan.master_seed);
  if (auto g = pick(a.o_grid, a.grid, config, "grid")) plan.grid = EvalGrid::parse(*g);
  const std::string mode = pick(a.o_mode, a.mode, config, "mode").value_or("both");
  if (mode == "both") {
    plan.methods = {Method::Rct1Only, Method::Hierarchical};
  } else {
    plan.methods = {parse_method(mode)};
  }
  if (auto f = pick(a.o_f, a.f_basis, config, "f_basis")) plan.estimator.f_basis = Basis::parse(*f);
  if (auto g = pick(a.o_g, a.g_basis, config, "g_basis")) plan.estimator.g_basis = Basis::parse(*g);
  if (auto s = pick(a.o_signal, a.signal, config, "signal")) {
    plan.estimator.signal.kind = parse_signal_kind(*s);
  }
  const std::size_t workers =
      pick(a.o_workers, a.workers, config, "workers").value_or(default_workers());
  plan.validate();

  const fs::path dir = prepare_dir(pick(a.o_out, a.out, config, "out").value_or("."));
  const fs::path results_path = dir / "results.csv";
  const fs::path summary_path = dir / "summary.csv";
  auto results_out = open_out(results_path);
  auto summary_out = open_out(summary_path);
  if (auto d = pick(a.o_dump, a.dump, config, "dump")) dump_datasets(plan, prepare_dir(*d));

  const auto set = run_plan(plan, std::max<std::size_t>(1, workers));
  const auto table = summarize(set);
  write_results_csv(results_out, set);
  close_out(results_out, results_path);
  write_summary_csv(summary_out, table, set.truth);
  close_out(summary_out, summary_path);

  print_region_table(out, table);
  out << "wrote " << results_path.string() << " and " << summary_path.string() << '\n';
  return kOk;
}

// ---- fit ------------------------------------------------------------------

struct FitArgs {
  std::string config, obs, mode = "hierarchical", omega_basis = "0,1,2", f_basis = "0,1,2",
                          g_basis = "0,1", grid = "-3:3:0.05", out = ".", signal = "transformed";
  std::vector<std::string> rct;
  std::size_t trial = 1;
  double propensity = 0.5;
  CLI::Option *o_obs, *o_rct, *o_mode, *o_trial, *o_omega, *o_f, *o_g, *o_grid, *o_out,
      *o_signal, *o_propensity;
};

int fit(const FitArgs& a, std::ostream& out) {
  const json config = load_config(a.config);
  const auto obs_path = pick(a.o_obs, a.obs, config, "obs");
  if (!obs_path) throw ValidationError("fit needs --obs");
  const auto rct_paths = pick(a.o_rct, a.rct, config, "rct").value_or(std::vector<std::string>{});
  if (rct_paths.empty()) throw ValidationError("fit needs at least one --rct");
  const std::string mode = pick(a.o_mode, a.mode, config, "mode").value_or("hierarchical");
  const std::size_t target = pick(a.o_trial, a.trial, config, "trial").value_or(1);
  const Basis omega_basis =
      Basis::parse(pick(a.o_omega, a.omega_basis, config, "omega_basis").value_or("0,1,2"));
  const Basis f = Basis::parse(pick(a.o_f, a.f_basis, config, "f_basis").value_or("0,1,2"));
  const Basis g = Basis::parse(pick(a.o_g, a.g_basis, config, "g_basis").value_or("0,1"));
  const EvalGrid grid = EvalGrid::parse(pick(a.o_grid, a.grid, config, "grid").value_or("-3:3:0.05"));
  SignalOptions signal;
  signal.kind = parse_signal_kind(pick(a.o_signal, a.signal, config, "signal").value_or("transformed"));
  signal.propensity = pick(a.o_propensity, a.propensity, config, "propensity").value_or(0.5);

  const bool hierarchical = mode == "hierarchical";
  if (!hierarchical && mode != "single") {
    throw ValidationError("fit --mode must be single or hierarchical");
  }
  if (hierarchical && rct_paths.size() < 2) {
    throw ValidationError("hierarchical mode needs at least two --rct files");
  }
  if (target < 1 || target > rct_paths.size()) {
    throw ValidationError("--trial " + std::to_string(target) + " has no --rct file");
  }

  const auto obs = read_observational_csv(*obs_path);
  if (obs.k_trials() < rct_paths.size()) {
    throw ValidationError("observational file has " + std::to_string(obs.k_trials()) +
                          " treatments but " + std::to_string(rct_paths.size()) +
                          " trials were given");
  }

  std::vector<CateModel> omegas;
  std::vector<PseudoOutcome> pseudo;
  for (std::size_t k = 1; k <= rct_paths.size(); ++k) {
    omegas.push_back(fit_cate_regression(obs.slice(k), omega_basis));
    if (!hierarchical && k != target) continue;
    const auto rct = read_rct_csv(rct_paths[k - 1], k);
    const auto d = eta_pseudo_outcomes(rct, omegas.back(), signal);
    pseudo.insert(pseudo.end(), d.begin(), d.end());
  }

  const EtaModel eta = hierarchical ? fit_eta_hierarchical(pseudo, f, g)
                                    : fit_eta_single(pseudo, Basis::merge(f, g));
  const auto curve = debias_cate(omegas[target - 1], eta, target, grid);

  const fs::path dir = prepare_dir(pick(a.o_out, a.out, config, "out").value_or("."));
  const fs::path model_path = dir / "eta_model.json";
  const fs::path curve_path = dir / ("tau" + std::to_string(target) + "_curve.csv");
  auto model_out = open_out(model_path);
  model_out << eta.to_json() << '\n';
  close_out(model_out, model_path);
  auto curve_out = open_out(curve_path);
  curve_out << "# " << kFormatVersion << "\nx,omega,eta,tau\n";
  for (const auto& p : curve) {
    curve_out << format_double(p.x) << ',' << format_double(p.omega) << ','
              << format_double(p.eta) << ',' << format_double(p.tau) << '\n';
  }
  close_out(curve_out, curve_path);

  out << "mode " << to_string(eta.mode()) << ", trials";
  for (auto k : eta.trials()) out << ' ' << k;
  out << ", " << pseudo.size() << " pseudo-outcomes\n";
  out << "wrote " << model_path.string() << " and " << curve_path.string() << '\n';
  return kOk;
}

// ---- oracle ---------------------------------------------------------------

struct OracleArgs {
  std::string config, scenario = "both", out;
  bool brute_force = false;
  std::size_t n = 1'000'000;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  CLI::Option *o_scenario, *o_brute, *o_n, *o_seed, *o_workers, *o_out;
};

int oracle(const OracleArgs& a, std::ostream& out) {
  const json config = load_config(a.config);
  const auto shapes =
      parse_scenarios(pick(a.o_scenario, a.scenario, config, "scenario").value_or("both"));
  const bool brute = pick(a.o_brute, a.brute_force, config, "brute_force").value_or(false);
  const std::size_t n = pick(a.o_n, a.n, config, "n").value_or(1'000'000);
  const std::uint64_t seed = resolve_seed(a.o_seed, a.seed, config, 1);
  BruteForceOptions options;
  options.workers = pick(a.o_workers, a.workers, config, "workers").value_or(default_workers());

  json doc = json::object();
  for (Shape shape : shapes) {
    const auto spec = scenario_with_overrides(shape, config);
    json entry;
    entry["curves"] = json::parse(to_json(oracle_curves(spec)));
    if (brute) {
      if (n < 100'000) throw ValidationError("--n must be at least 100000");
      entry["brute_force"] = json::parse(to_json(brute_force_check(spec, n, seed, options)));
    }
    doc[std::string(to_string(shape))] = std::move(entry);
  }
  const std::string text = doc.dump(2);
  out << text << '\n';
  if (auto dir = pick(a.o_out, a.out, config, "out")) {
    const fs::path path = prepare_dir(*dir) / "oracle.json";
    auto file = open_out(path);
    file << text << '\n';
    close_out(file, path);
  }
  return kOk;
}

// ---- summarize ------------------------------------------------------------

struct SummarizeArgs {
  std::string results, out = ".";
};

int summarize_cmd(const SummarizeArgs& a, std::ostream& out) {
  std::ifstream in(a.results, std::ios::binary);
  if (!in) throw IoError("cannot read '" + a.results + "'");
  const auto set = read_results_csv(in);
  const auto table = summarize(set);
  const fs::path path = prepare_dir(a.out) / "summary.csv";
  auto file = open_out(path);
  write_summary_csv(file, table, set.truth);
  close_out(file, path);
  print_region_table(out, table);
  out << "wrote " << path.string() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Debiased CATE estimation with deconfounding functions learned from trials",
               "deconfound-lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kFormatVersion));

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run the Monte Carlo study and write results/summary CSVs");
  s->add_option("--config", sim.config, "JSON config; flags override its keys");
  sim.o_scenario = s->add_option("--scenario", sim.scenario, "linear, quadratic or both")
                       ->check(CLI::IsMember({"linear", "quadratic", "both"}));
  sim.o_n1 = s->add_option("--n1", sim.n1, "comma-separated RCT1 sizes (default 100,1000,2000)");
  sim.o_reps = s->add_option("--reps", sim.reps, "replications per cell (default 200)");
  sim.o_seed = s->add_option("--seed", sim.seed, "master seed (fallback: $DECONFOUND_SEED)");
  sim.o_workers = s->add_option("--workers", sim.workers, "worker threads; output is unaffected");
  sim.o_grid = s->add_option("--grid", sim.grid, "evaluation grid lo:hi:step (default -3:3:0.05)");
  sim.o_mode = s->add_option("--mode", sim.mode, "single, hierarchical or both")
                   ->check(CLI::IsMember({"single", "hierarchical", "both"}));
  sim.o_f = s->add_option("--f-basis", sim.f_basis, "fixed-effect degrees, e.g. 0,1,2");
  sim.o_g = s->add_option("--g-basis", sim.g_basis, "random-effect degrees, e.g. 0,1");
  sim.o_signal = s->add_option("--signal", sim.signal, "trial signal: transformed or arm")
                     ->check(CLI::IsMember({"transformed", "arm"}));
  sim.o_out = s->add_option("--out", sim.out, "output directory (default .)");
  sim.o_dump = s->add_option("--dump", sim.dump, "also write replication-0 datasets here");

  FitArgs fa;
  auto* f = app.add_subcommand("fit", "Fit omega, eta and the debiased CATE on CSV datasets");
  f->add_option("--config", fa.config, "JSON config; flags override its keys");
  fa.o_obs = f->add_option("--obs", fa.obs, "observational CSV (x,[u],t1..tK,y1..yK)");
  fa.o_rct = f->add_option("--rct", fa.rct, "trial CSV (x,t,y); repeat in trial order");
  fa.o_mode = f->add_option("--mode", fa.mode, "single or hierarchical")
                  ->check(CLI::IsMember({"single", "hierarchical"}));
  fa.o_trial = f->add_option("--trial", fa.trial, "trial whose CATE is reported (default 1)");
  fa.o_omega = f->add_option("--omega-basis", fa.omega_basis, "degrees of the omega regression");
  fa.o_f = f->add_option("--f-basis", fa.f_basis, "fixed-effect degrees (default 0,1,2)");
  fa.o_g = f->add_option("--g-basis", fa.g_basis, "random-effect degrees (default 0,1)");
  fa.o_grid = f->add_option("--grid", fa.grid, "output grid lo:hi:step");
  fa.o_signal = f->add_option("--signal", fa.signal, "trial signal: transformed or arm")
                    ->check(CLI::IsMember({"transformed", "arm"}));
  fa.o_propensity = f->add_option("--propensity", fa.propensity, "trial randomization probability");
  fa.o_out = f->add_option("--out", fa.out, "output directory (default .)");

  OracleArgs oa;
  auto* o = app.add_subcommand("oracle", "Print closed-form tau, omega and eta as JSON");
  o->add_option("--config", oa.config, "JSON config; flags override its keys");
  oa.o_scenario = o->add_option("--scenario", oa.scenario, "linear, quadratic or both")
                      ->check(CLI::IsMember({"linear", "quadratic", "both"}));
  oa.o_brute = o->add_flag("--brute-force", oa.brute_force, "add a Monte Carlo cross-check");
  oa.o_n = o->add_option("--n", oa.n, "brute-force sample size (default 1000000)");
  oa.o_seed = o->add_option("--seed", oa.seed, "brute-force seed (fallback: $DECONFOUND_SEED)");
  oa.o_workers = o->add_option("--workers", oa.workers, "worker threads; output is unaffected");
  oa.o_out = o->add_option("--out", oa.out, "also write oracle.json into this directory");

  SummarizeArgs su;
  auto* m = app.add_subcommand("summarize", "Recompute summary.csv from results.csv");
  m->add_option("results", su.results, "results.csv from simulate")->required();
  m->add_option("--out", su.out, "output directory (default .)");

  std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kFormatVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }

  try {
    if (*s) return simulate(sim, out);
    if (*f) return fit(fa, out);
    if (*o) return oracle(oa, out);
    return summarize_cmd(su, out);
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const RankDeficient& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }
}

}  // namespace deconfound::cli
