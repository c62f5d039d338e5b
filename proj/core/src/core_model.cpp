#include "deconfound/core_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "deconfound/errors.hpp"
#include "json.hpp"

namespace deconfound {

using nlohmann::json;

std::string_view to_string(Shape shape) {
  switch (shape) {
    case Shape::Linear:
      return "linear";
    case Shape::Quadratic:
      return "quadratic";
  }
  return "unknown";
}

Shape parse_shape(std::string_view name) {
  if (name == "linear") return Shape::Linear;
  if (name == "quadratic") return Shape::Quadratic;
  throw ValidationError("unknown scenario shape '" + std::string(name) + "'");
}

ScenarioSpec ScenarioSpec::defaults(Shape shape) {
  ScenarioSpec spec;
  spec.shape = shape;
  spec.k_trials = 2;
  spec.obs_size = 50'000;
  spec.rct_sizes = {1000, 5000};
  spec.obs_x_range = {-3.0, 3.0};
  spec.rct_x_ranges = {{1.5, 2.0}, {0.0, 2.5}};
  spec.u_prob = 0.5;
  spec.treat_probs = {{0.7, 0.3}, {0.25, 0.75}};
  spec.rct_propensity = 0.5;
  spec.noise_sd = 1.0;

  // E[Y | k=1] = 1 + 2X + 2T + TX + 0.75TX^2 - 10UT + 5UTX (+ 3.75UTX^2)
  std::vector<OutcomeTerm> first = {
      {1.0, 0, false, false}, {2.0, 1, false, false}, {2.0, 0, true, false},
      {1.0, 1, true, false},  {0.75, 2, true, false}, {-10.0, 0, true, true},
      {5.0, 1, true, true},
  };
  // E[Y | k=2] = 2 + X + T + 1.5TX + TX^2 + 4UT - 8UTX (- 3UTX^2)
  std::vector<OutcomeTerm> second = {
      {2.0, 0, false, false}, {1.0, 1, false, false}, {1.0, 0, true, false},
      {1.5, 1, true, false},  {1.0, 2, true, false},  {4.0, 0, true, true},
      {-8.0, 1, true, true},
  };
  if (shape == Shape::Quadratic) {
    first.push_back({3.75, 2, true, true});
    second.push_back({-3.0, 2, true, true});
  }
  spec.outcome_coefs = {std::move(first), std::move(second)};
  return spec;
}

namespace {

bool is_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError("invalid scenario: " + message);
}

}  // namespace

void ScenarioSpec::validate() const {
  require(k_trials >= 1, "k_trials must be >= 1");
  require(obs_size >= 1, "obs_size must be >= 1");
  require(rct_sizes.size() == k_trials, "rct_sizes must have k_trials entries");
  require(rct_x_ranges.size() == k_trials, "rct_x_ranges must have k_trials entries");
  require(treat_probs.size() == k_trials, "treat_probs must have k_trials entries");
  require(outcome_coefs.size() == k_trials, "outcome_coefs must have k_trials entries");
  require(std::ranges::all_of(rct_sizes, [](std::size_t n) { return n >= 1; }),
          "every trial size must be >= 1");
  require(std::isfinite(obs_x_range.lo) && std::isfinite(obs_x_range.hi) &&
              obs_x_range.lo < obs_x_range.hi,
          "obs_x_range must be a non-degenerate interval");
  for (const auto& r : rct_x_ranges) {
    require(std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo < r.hi,
            "trial x ranges must be non-degenerate");
    require(obs_x_range.lo <= r.lo && r.hi <= obs_x_range.hi,
            "trial x ranges must lie inside obs_x_range");
  }
  require(is_probability(u_prob), "u_prob must be in [0,1]");
  for (const auto& p : treat_probs) {
    require(is_probability(p.given_u1) && is_probability(p.given_u0),
            "treat_probs must be in [0,1]");
  }
  require(std::isfinite(rct_propensity) && rct_propensity > 0.0 && rct_propensity < 1.0,
          "rct_propensity must be in (0,1)");
  for (const auto& terms : outcome_coefs) {
    for (const auto& term : terms) {
      require(std::isfinite(term.coef) && term.x_pow >= 0 && term.x_pow <= 16,
              "outcome terms need finite coefficients and x powers in [0,16]");
    }
  }
  // Zero noise is accepted as a degenerate deterministic mode.
  require(std::isfinite(noise_sd) && noise_sd >= 0.0, "noise_sd must be >= 0");
}

namespace {

json interval_to_json(const Interval& r) { return json::array({r.lo, r.hi}); }

Interval interval_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ParseError("interval must be [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

std::string ScenarioSpec::to_json() const {
  json j;
  j["shape"] = std::string(deconfound::to_string(shape));
  j["k_trials"] = k_trials;
  j["obs_size"] = obs_size;
  j["rct_sizes"] = rct_sizes;
  j["obs_x_range"] = interval_to_json(obs_x_range);
  j["rct_x_ranges"] = json::array();
  for (const auto& r : rct_x_ranges) j["rct_x_ranges"].push_back(interval_to_json(r));
  j["u_prob"] = u_prob;
  j["treat_probs"] = json::array();
  for (const auto& p : treat_probs) {
    j["treat_probs"].push_back(json::array({p.given_u1, p.given_u0}));
  }
  j["rct_propensity"] = rct_propensity;
  j["outcome_coefs"] = json::array();
  for (const auto& terms : outcome_coefs) {
    json arr = json::array();
    for (const auto& term : terms) {
      arr.push_back({{"coef", term.coef}, {"x", term.x_pow}, {"t", term.t ? 1 : 0},
                     {"u", term.u ? 1 : 0}});
    }
    j["outcome_coefs"].push_back(std::move(arr));
  }
  j["noise_sd"] = noise_sd;
  return j.dump(2);
}

ScenarioSpec ScenarioSpec::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("scenario JSON must be an object");

  // Fields absent from the document keep the defaults of the named shape.
  Shape shape = Shape::Linear;
  if (j.contains("shape")) shape = parse_shape(j["shape"].get<std::string>());
  ScenarioSpec spec = defaults(shape);

  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "shape") {
        continue;
      } else if (key == "k_trials") {
        spec.k_trials = value.get<std::size_t>();
      } else if (key == "obs_size") {
        spec.obs_size = value.get<std::size_t>();
      } else if (key == "rct_sizes") {
        spec.rct_sizes = value.get<std::vector<std::size_t>>();
      } else if (key == "obs_x_range") {
        spec.obs_x_range = interval_from_json(value);
      } else if (key == "rct_x_ranges") {
        spec.rct_x_ranges.clear();
        for (const auto& r : value) spec.rct_x_ranges.push_back(interval_from_json(r));
      } else if (key == "u_prob") {
        spec.u_prob = value.get<double>();
      } else if (key == "treat_probs") {
        spec.treat_probs.clear();
        for (const auto& p : value) {
          if (!p.is_array() || p.size() != 2) throw ParseError("treat_probs entries are pairs");
          spec.treat_probs.push_back({p[0].get<double>(), p[1].get<double>()});
        }
      } else if (key == "rct_propensity") {
        spec.rct_propensity = value.get<double>();
      } else if (key == "outcome_coefs") {
        spec.outcome_coefs.clear();
        for (const auto& terms : value) {
          std::vector<OutcomeTerm> parsed;
          for (const auto& term : terms) {
            parsed.push_back({term.at("coef").get<double>(), term.value("x", 0),
                              term.value("t", 0) != 0, term.value("u", 0) != 0});
          }
          spec.outcome_coefs.push_back(std::move(parsed));
        }
      } else if (key == "noise_sd") {
        spec.noise_sd = value.get<double>();
      } else {
        throw ParseError("unknown scenario field '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario JSON: ") + e.what());
  }
  return spec;
}

Basis::Basis(std::vector<int> degrees) : degrees_(std::move(degrees)) {
  if (degrees_.empty()) throw ValidationError("basis must have at least one degree");
  for (std::size_t i = 0; i < degrees_.size(); ++i) {
    if (degrees_[i] < 0) throw ValidationError("basis degrees must be nonnegative");
    if (i > 0 && degrees_[i] <= degrees_[i - 1]) {
      throw ValidationError("basis degrees must be strictly increasing");
    }
  }
}

Basis Basis::polynomial(int max_degree) {
  std::vector<int> degrees(static_cast<std::size_t>(max_degree + 1));
  for (int d = 0; d <= max_degree; ++d) degrees[static_cast<std::size_t>(d)] = d;
  return Basis(std::move(degrees));
}

Basis Basis::merge(const Basis& a, const Basis& b) {
  std::vector<int> out;
  std::ranges::set_union(a.degrees_, b.degrees_, std::back_inserter(out));
  return Basis(std::move(out));
}

Basis Basis::parse(std::string_view list) {
  std::vector<int> degrees;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    std::size_t comma = list.find(',', pos);
    if (comma == std::string_view::npos) comma = list.size();
    std::string_view token = list.substr(pos, comma - pos);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    int value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (token.empty() || ec != std::errc() || ptr != token.data() + token.size()) {
      throw ValidationError("bad basis degree list '" + std::string(list) + "'");
    }
    degrees.push_back(value);
    pos = comma + 1;
  }
  return Basis(std::move(degrees));
}

void Basis::expand_into(double x, Eigen::Ref<Eigen::VectorXd> out) const {
  if (!std::isfinite(x)) throw std::domain_error("basis expansion of non-finite x");
  // Degrees are increasing, so powers can be accumulated incrementally.
  double power = 1.0;
  int current = 0;
  for (std::size_t i = 0; i < degrees_.size(); ++i) {
    while (current < degrees_[i]) {
      power *= x;
      ++current;
    }
    out[static_cast<Eigen::Index>(i)] = power;
  }
}

Eigen::VectorXd Basis::expand(double x) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(dim()));
  expand_into(x, out);
  return out;
}

Eigen::MatrixXd Basis::design(std::span<const double> xs) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(dim()));
  Eigen::VectorXd row(static_cast<Eigen::Index>(dim()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    expand_into(xs[i], row);
    out.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return out;
}

std::string Basis::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < degrees_.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(degrees_[i]);
  }
  return out;
}

EvalGrid::EvalGrid(double lo, double hi, double step) : lo_(lo), hi_(hi), step_(step) {
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi)) {
    throw ValidationError("grid requires finite lo < hi");
  }
  if (!(std::isfinite(step) && step > 0.0)) throw ValidationError("grid step must be > 0");
  // Points are lo + i*step (no accumulated rounding); hi is included when
  // it is reached up to a relative slack of 1e-9 steps.
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  points_.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    points_.push_back(lo + static_cast<double>(i) * step);
  }
}

EvalGrid EvalGrid::parse(std::string_view text) {
  double parts[3];
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    std::size_t colon = text.find(':', pos);
    if ((i < 2) == (colon == std::string_view::npos)) {
      throw ValidationError("grid must be lo:hi:step, got '" + std::string(text) + "'");
    }
    std::string_view token = text.substr(pos, i < 2 ? colon - pos : std::string_view::npos);
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), parts[i]);
    if (token.empty() || ec != std::errc() || ptr != token.data() + token.size()) {
      throw ValidationError("grid must be lo:hi:step, got '" + std::string(text) + "'");
    }
    pos = colon + 1;
  }
  return EvalGrid(parts[0], parts[1], parts[2]);
}

std::string_view to_string(Region region) {
  switch (region) {
    case Region::InsideRct1:
      return "inside_rct1";
    case Region::InsideRct2Only:
      return "inside_rct2_only";
    case Region::OutsideBoth:
      return "outside_both";
  }
  return "unknown";
}

Region parse_region(std::string_view name) {
  for (Region r : kAllRegions) {
    if (to_string(r) == name) return r;
  }
  throw ParseError("unknown region '" + std::string(name) + "'");
}

SupportRegion SupportRegion::from_scenario(const ScenarioSpec& spec) {
  if (spec.rct_x_ranges.size() < 2) {
    throw ValidationError("support regions need at least two trial ranges");
  }
  return {spec.rct_x_ranges[0], spec.rct_x_ranges[1], spec.obs_x_range};
}

void SupportRegion::validate() const {
  const auto inside = [](const Interval& inner, const Interval& outer) {
    return outer.lo <= inner.lo && inner.hi <= outer.hi;
  };
  if (!(rct1.lo < rct1.hi && rct2.lo < rct2.hi && target.lo < target.hi)) {
    throw ValidationError("support intervals must be non-degenerate");
  }
  if (!inside(rct1, target) || !inside(rct2, target)) {
    throw ValidationError("trial supports must lie inside the target interval");
  }
}

Region region_of(double x, const SupportRegion& support) {
  if (!support.target.contains(x)) {
    std::ostringstream msg;
    msg << "x = " << x << " outside target [" << support.target.lo << ", " << support.target.hi
        << "]";
    throw std::out_of_range(msg.str());
  }
  if (support.rct1.contains(x)) return Region::InsideRct1;
  if (support.rct2.contains(x)) return Region::InsideRct2Only;
  return Region::OutsideBoth;
}

ObservationalDataset::ObservationalDataset(std::vector<double> x,
                                           std::vector<std::vector<std::uint8_t>> t,
                                           std::vector<std::vector<double>> y,
                                           std::optional<std::vector<std::uint8_t>> oracle_u)
    : x_(std::move(x)), t_(std::move(t)), y_(std::move(y)), u_(std::move(oracle_u)) {
  if (t_.size() != y_.size() || t_.empty()) {
    throw ValidationError("observational data needs matching t and y columns per treatment");
  }
  const auto n = x_.size();
  for (std::size_t k = 0; k < t_.size(); ++k) {
    if (t_[k].size() != n || y_[k].size() != n) {
      throw ValidationError("observational columns must have equal length");
    }
    if (std::ranges::any_of(t_[k], [](std::uint8_t v) { return v > 1; })) {
      throw ValidationError("treatment indicators must be 0 or 1");
    }
  }
  if (u_) {
    if (u_->size() != n) throw ValidationError("confounder column length mismatch");
    if (std::ranges::any_of(*u_, [](std::uint8_t v) { return v > 1; })) {
      throw ValidationError("confounder must be 0 or 1");
    }
  }
}

std::span<const std::uint8_t> ObservationalDataset::t(std::size_t k) const {
  if (k < 1 || k > t_.size()) throw std::out_of_range("treatment index out of range");
  return t_[k - 1];
}

std::span<const double> ObservationalDataset::y(std::size_t k) const {
  if (k < 1 || k > y_.size()) throw std::out_of_range("treatment index out of range");
  return y_[k - 1];
}

std::span<const std::uint8_t> ObservationalDataset::oracle_u() const {
  if (!u_) throw std::logic_error("dataset carries no confounder column");
  return *u_;
}

TreatmentSlice ObservationalDataset::slice(std::size_t k) const { return {x_, t(k), y(k)}; }

}  // namespace deconfound
