#include "deconfound/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "deconfound/dataset_io.hpp"
#include "deconfound/datagen.hpp"
#include "deconfound/errors.hpp"

namespace deconfound {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string_view to_string(Method method) {
  return method == Method::Rct1Only ? "rct1_only" : "hierarchical";
}

Method parse_method(std::string_view name) {
  if (name == "rct1_only" || name == "single") return Method::Rct1Only;
  if (name == "hierarchical") return Method::Hierarchical;
  throw ValidationError("unknown method '" + std::string(name) + "'");
}

EstimatorBases default_bases(Shape shape) {
  const Basis line = Basis::polynomial(1);
  if (shape == Shape::Linear) return {line, line, line};
  const Basis quad = Basis::polynomial(2);
  return {quad, quad, line};
}

EstimatorBases EstimatorConfig::bases_for(Shape shape) const {
  EstimatorBases out = default_bases(shape);
  if (f_basis) out.f = *f_basis;
  if (g_basis) out.g = *g_basis;
  // The single-trial fit gets the same function class as the hierarchical one.
  out.single = single_basis ? *single_basis : Basis::merge(out.f, out.g);
  return out;
}

ExperimentPlan ExperimentPlan::defaults() {
  ExperimentPlan plan;
  plan.scenarios = {ScenarioSpec::defaults(Shape::Linear),
                    ScenarioSpec::defaults(Shape::Quadratic)};
  return plan;
}

void ExperimentPlan::validate() const {
  if (scenarios.empty()) throw ValidationError("plan needs at least one scenario");
  if (n1_values.empty()) throw ValidationError("plan needs at least one n1 value");
  if (methods.empty()) throw ValidationError("plan needs at least one method");
  if (replications < 1) throw ValidationError("replications must be >= 1");
  std::set<Shape> shapes;
  for (const auto& s : scenarios) {
    s.validate();
    if (s.k_trials < 2) throw ValidationError("harness scenarios need two trials");
    SupportRegion::from_scenario(s).validate();
    if (!shapes.insert(s.shape).second) {
      throw ValidationError("plan lists scenario '" + std::string(to_string(s.shape)) + "' twice");
    }
  }
  for (auto n1 : n1_values) {
    if (n1 < 1) throw ValidationError("n1 values must be >= 1");
  }
  if (std::set<Method>(methods.begin(), methods.end()).size() != methods.size()) {
    throw ValidationError("duplicate method in plan");
  }
}

namespace {

struct TaskOutput {
  // [n1 index][method index]
  std::vector<std::vector<ReplicationResult>> cells;
};

ReplicationResult make_failed(ReplicationResult r, std::size_t grid_size, std::string why) {
  r.tau_hat.assign(grid_size, kNaN);
  r.eta_hat.assign(grid_size, kNaN);
  r.failed = true;
  r.failure = std::move(why);
  r.converged = false;
  return r;
}

TaskOutput run_task(const ExperimentPlan& plan, std::size_t scenario_index, std::size_t rep) {
  const ScenarioSpec& spec = plan.scenarios[scenario_index];
  const std::string name(to_string(spec.shape));
  const auto scenario_id = static_cast<std::uint64_t>(spec.shape);
  const EstimatorBases bases = plan.estimator.bases_for(spec.shape);
  const auto& grid = plan.grid;
  const bool hierarchical = std::ranges::count(plan.methods, Method::Hierarchical) > 0;

  TaskOutput out;
  out.cells.resize(plan.n1_values.size());

  auto blank = [&](std::size_t n1, Method method) {
    ReplicationResult r;
    r.scenario = name;
    r.n1 = n1;
    r.method = method;
    r.rep = rep;
    r.x = grid.points();
    return r;
  };

  // Shared by every n1 and method of this replication.
  std::optional<CateModel> omega1, omega2;
  std::vector<PseudoOutcome> pseudo2;
  std::string shared_failure;
  try {
    const auto obs = gen_observational(spec, {plan.master_seed, scenario_id, kRoleObservational, rep});
    omega1 = fit_cate_regression(obs.slice(1), plan.estimator.omega_basis);
    if (hierarchical) {
      omega2 = fit_cate_regression(obs.slice(2), plan.estimator.omega_basis);
      const auto rct2 = gen_rct(2, spec, {plan.master_seed, scenario_id, role_trial(2), rep});
      pseudo2 = eta_pseudo_outcomes(rct2, *omega2, plan.estimator.signal);
    }
  } catch (const Error& e) {
    shared_failure = e.what();
  }

  for (std::size_t ni = 0; ni < plan.n1_values.size(); ++ni) {
    const std::size_t n1 = plan.n1_values[ni];
    std::vector<PseudoOutcome> pseudo1;
    std::string failure = shared_failure;
    if (failure.empty()) {
      try {
        ScenarioSpec sized = spec;
        sized.rct_sizes[0] = n1;
        const auto rct1 = gen_rct(1, sized, {plan.master_seed, scenario_id, role_trial(1), rep});
        pseudo1 = eta_pseudo_outcomes(rct1, *omega1, plan.estimator.signal);
      } catch (const Error& e) {
        failure = e.what();
      }
    }

    for (Method method : plan.methods) {
      ReplicationResult r = blank(n1, method);
      if (!failure.empty()) {
        out.cells[ni].push_back(make_failed(std::move(r), grid.size(), failure));
        continue;
      }
      try {
        std::optional<EtaModel> eta;
        if (method == Method::Rct1Only) {
          eta = fit_eta_single(pseudo1, bases.single);
          r.rank = eta->single().fit.rank;
        } else {
          std::vector<PseudoOutcome> both = pseudo1;
          both.insert(both.end(), pseudo2.begin(), pseudo2.end());
          eta = fit_eta_hierarchical(both, bases.f, bases.g, plan.estimator.reml);
          r.converged = eta->mixed().converged;
          r.rank = bases.f.dim();
        }
        for (const auto& pt : debias_cate(*omega1, *eta, 1, grid)) {
          r.tau_hat.push_back(pt.tau);
          r.eta_hat.push_back(pt.eta);
        }
        if (!std::ranges::all_of(r.tau_hat, [](double v) { return std::isfinite(v); })) {
          r = make_failed(std::move(r), grid.size(), "non-finite curve");
        }
      } catch (const Error& e) {
        r = make_failed(std::move(r), grid.size(), e.what());
      }
      out.cells[ni].push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace

ResultSet run_plan(const ExperimentPlan& plan, std::size_t workers) {
  plan.validate();
  const std::size_t scenario_count = plan.scenarios.size();
  const std::size_t reps = plan.replications;
  const std::size_t task_count = scenario_count * reps;

  std::vector<TaskOutput> outputs(task_count);
  auto run_one = [&](std::size_t task) {
    outputs[task] = run_task(plan, task / reps, task % reps);
  };
  workers = std::clamp<std::size_t>(workers, 1, task_count);
  if (workers == 1) {
    for (std::size_t t = 0; t < task_count; ++t) run_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < task_count; t = next++) run_one(t);
      });
    }
  }

  // Deterministic (scenario, n1, method, rep) order regardless of completion order.
  ResultSet set;
  for (const auto& spec : plan.scenarios) {
    set.truth[std::string(to_string(spec.shape))] = {true_tau_poly(1, spec),
                                                     SupportRegion::from_scenario(spec)};
  }
  for (std::size_t s = 0; s < scenario_count; ++s) {
    for (std::size_t ni = 0; ni < plan.n1_values.size(); ++ni) {
      for (std::size_t mi = 0; mi < plan.methods.size(); ++mi) {
        for (std::size_t rep = 0; rep < reps; ++rep) {
          set.results.push_back(std::move(outputs[s * reps + rep].cells[ni][mi]));
        }
      }
    }
  }
  return set;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return kNaN;
  std::ranges::sort(values);
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

struct CellKey {
  std::string scenario;
  std::size_t n1;
  Method method;
  bool operator==(const CellKey&) const = default;
};

}  // namespace

SummaryTable summarize(const ResultSet& set) {
  // Cells in order of first appearance.
  std::vector<CellKey> keys;
  std::vector<std::vector<const ReplicationResult*>> members;
  for (const auto& r : set.results) {
    CellKey key{r.scenario, r.n1, r.method};
    auto it = std::ranges::find(keys, key);
    if (it == keys.end()) {
      keys.push_back(key);
      members.emplace_back();
      it = keys.end() - 1;
    }
    members[static_cast<std::size_t>(it - keys.begin())].push_back(&r);
  }

  SummaryTable table;
  for (std::size_t c = 0; c < keys.size(); ++c) {
    const auto& key = keys[c];
    const auto truth_it = set.truth.find(key.scenario);
    if (truth_it == set.truth.end()) {
      throw ValidationError("no oracle for scenario '" + key.scenario + "'");
    }
    const auto& truth = truth_it->second;
    const auto& xs = members[c].front()->x;

    std::vector<const ReplicationResult*> ok;
    std::size_t failures = 0;
    for (const auto* r : members[c]) {
      if (r->x != xs) throw ValidationError("replications of one cell use different grids");
      if (r->failed) {
        ++failures;
      } else {
        ok.push_back(r);
      }
    }

    std::vector<double> mean(xs.size(), kNaN);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      std::vector<double> column;
      column.reserve(ok.size());
      for (const auto* r : ok) column.push_back(r->tau_hat[i]);
      PointSummary p{key.scenario, key.n1, key.method, xs[i], kNaN, kNaN, kNaN};
      if (!column.empty()) {
        double sum = 0.0;
        for (double v : column) sum += v;
        mean[i] = sum / static_cast<double>(column.size());
        p.mean = mean[i];
        p.p025 = quantile(column, 0.025);
        p.p975 = quantile(column, 0.975);
      }
      table.points.push_back(p);
    }

    for (Region region : kAllRegions) {
      RegionSummary rs{key.scenario, key.n1, key.method, region, kNaN, kNaN, failures, kNaN,
                       ok.empty()};
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (truth.support.target.contains(xs[i]) && region_of(xs[i], truth.support) == region) {
          idx.push_back(i);
        }
      }
      if (!ok.empty() && !idx.empty()) {
        double bias = 0.0;
        for (auto i : idx) bias += mean[i] - truth.tau1(xs[i]);
        rs.bias = bias / static_cast<double>(idx.size());

        double pooled = 0.0;
        std::vector<double> per_rep;
        per_rep.reserve(ok.size());
        for (const auto* r : ok) {
          double sq = 0.0;
          for (auto i : idx) {
            const double err = r->tau_hat[i] - truth.tau1(xs[i]);
            sq += err * err;
          }
          pooled += sq;
          per_rep.push_back(std::sqrt(sq / static_cast<double>(idx.size())));
        }
        rs.rmse = std::sqrt(pooled / static_cast<double>(idx.size() * ok.size()));
        rs.median_rmse = quantile(std::move(per_rep), 0.5);
      }
      table.regions.push_back(rs);
    }
  }
  return table;
}

const RegionSummary& SummaryTable::region(std::string_view scenario, std::size_t n1, Method method,
                                          Region region) const {
  for (const auto& r : regions) {
    if (r.scenario == scenario && r.n1 == n1 && r.method == method && r.region == region) return r;
  }
  throw std::out_of_range("no summary cell for " + std::string(scenario) + "/" +
                          std::to_string(n1) + "/" + std::string(to_string(method)));
}

std::vector<PointSummary> SummaryTable::curve(std::string_view scenario, std::size_t n1,
                                              Method method) const {
  std::vector<PointSummary> out;
  for (const auto& p : points) {
    if (p.scenario == scenario && p.n1 == n1 && p.method == method) out.push_back(p);
  }
  return out;
}

double mean_curve_max_error(const SummaryTable& table, std::string_view scenario, std::size_t n1,
                            Method method, const Polynomial& tau, const Interval& within) {
  double worst = 0.0;
  for (const auto& p : table.curve(scenario, n1, method)) {
    if (!within.contains(p.x)) continue;
    const double err = std::abs(p.mean - tau(p.x));
    if (std::isnan(err)) return kNaN;
    worst = std::max(worst, err);
  }
  return worst;
}

namespace {

void write_header(std::ostream& out, const std::map<std::string, ScenarioTruth>& truth) {
  out << "# " << kFormatVersion << '\n';
  for (const auto& [name, t] : truth) {
    out << "# oracle_tau1," << name;
    for (double c : t.tau1.coefs) out << ',' << format_double(c);
    out << '\n';
  }
  for (const auto& [name, t] : truth) {
    const auto& s = t.support;
    out << "# support," << name << ',' << format_double(s.rct1.lo) << ','
        << format_double(s.rct1.hi) << ',' << format_double(s.rct2.lo) << ','
        << format_double(s.rct2.hi) << ',' << format_double(s.target.lo) << ','
        << format_double(s.target.hi) << '\n';
  }
}

void parse_header_line(std::string_view line, std::size_t row,
                       std::map<std::string, ScenarioTruth>& truth) {
  line.remove_prefix(1);
  while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
  auto fields = split_csv_line(line);
  if (fields.empty()) return;
  if (fields[0] == "oracle_tau1") {
    if (fields.size() < 3) throw ParseError("oracle line needs coefficients", row);
    Polynomial p;
    for (std::size_t i = 2; i < fields.size(); ++i) p.coefs.push_back(parse_double(fields[i], row, i + 1));
    truth[std::string(fields[1])].tau1 = std::move(p);
  } else if (fields[0] == "support") {
    if (fields.size() != 8) throw ParseError("support line needs six bounds", row);
    double b[6];
    for (std::size_t i = 0; i < 6; ++i) b[i] = parse_double(fields[i + 2], row, i + 3);
    truth[std::string(fields[1])].support = {{b[0], b[1]}, {b[2], b[3]}, {b[4], b[5]}};
  }
}

}  // namespace

void write_results_csv(std::ostream& out, const ResultSet& set) {
  write_header(out, set.truth);
  out << "scenario,n1,method,rep,x,tau_hat,eta_hat\n";
  for (const auto& r : set.results) {
    const std::string prefix = r.scenario + ',' + std::to_string(r.n1) + ',' +
                               std::string(to_string(r.method)) + ',' + std::to_string(r.rep) + ',';
    for (std::size_t i = 0; i < r.x.size(); ++i) {
      out << prefix << format_double(r.x[i]) << ',' << format_double(r.tau_hat[i]) << ','
          << format_double(r.eta_hat[i]) << '\n';
    }
  }
}

ResultSet read_results_csv(std::istream& in) {
  ResultSet set;
  std::string line;
  std::size_t row = 0;
  bool version_seen = false;
  bool header_seen = false;
  ReplicationResult* current = nullptr;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (line.find(kFormatVersion) != std::string::npos) {
        version_seen = true;
      } else {
        parse_header_line(line, row, set.truth);
      }
      continue;
    }
    if (!header_seen) {
      if (!version_seen) throw ParseError("missing '# " + std::string(kFormatVersion) + "' line", row);
      if (line != "scenario,n1,method,rep,x,tau_hat,eta_hat") {
        throw ParseError("unexpected results header '" + line + "'", row);
      }
      header_seen = true;
      continue;
    }
    auto f = split_csv_line(line);
    if (f.size() != 7) throw ParseError("expected 7 fields", row);
    const std::string scenario(f[0]);
    const double n1 = parse_double(f[1], row, 2);
    const double rep = parse_double(f[3], row, 4);
    if (n1 < 0 || rep < 0 || n1 != std::floor(n1) || rep != std::floor(rep)) {
      throw ParseError("n1 and rep must be nonnegative integers", row);
    }
    Method method;
    try {
      method = parse_method(f[2]);
    } catch (const ValidationError&) {
      throw ParseError("unknown method '" + std::string(f[2]) + "'", row, 3);
    }
    const auto n1v = static_cast<std::size_t>(n1);
    const auto repv = static_cast<std::size_t>(rep);
    if (current == nullptr || current->scenario != scenario || current->n1 != n1v ||
        current->method != method || current->rep != repv) {
      ReplicationResult r;
      r.scenario = scenario;
      r.n1 = n1v;
      r.method = method;
      r.rep = repv;
      set.results.push_back(std::move(r));
      current = &set.results.back();
    }
    current->x.push_back(parse_double(f[4], row, 5));
    current->tau_hat.push_back(parse_double(f[5], row, 6));
    current->eta_hat.push_back(parse_double(f[6], row, 7));
  }
  if (!header_seen) throw ParseError("results file has no header");
  for (auto& r : set.results) {
    r.failed = std::ranges::any_of(r.tau_hat, [](double v) { return std::isnan(v); });
    if (r.failed) r.failure = "failed";
    if (!set.truth.count(r.scenario)) {
      throw ParseError("results mention scenario '" + r.scenario + "' without oracle header");
    }
  }
  return set;
}

void write_summary_csv(std::ostream& out, const SummaryTable& table,
                       const std::map<std::string, ScenarioTruth>& truth) {
  write_header(out, truth);
  out << "# block,pointwise\n";
  out << "scenario,n1,method,x,mean,p2.5,p97.5\n";
  for (const auto& p : table.points) {
    out << p.scenario << ',' << p.n1 << ',' << to_string(p.method) << ',' << format_double(p.x)
        << ',' << format_double(p.mean) << ',' << format_double(p.p025) << ','
        << format_double(p.p975) << '\n';
  }
  out << "# block,regional\n";
  out << "scenario,n1,method,region,bias,rmse,failures,median_rmse\n";
  for (const auto& r : table.regions) {
    out << r.scenario << ',' << r.n1 << ',' << to_string(r.method) << ',' << to_string(r.region)
        << ',' << format_double(r.bias) << ',' << format_double(r.rmse) << ',' << r.failures << ','
        << format_double(r.median_rmse) << '\n';
  }
}

}  // namespace deconfound
