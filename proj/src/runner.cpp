#include "mfje/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mfje/config.hpp"
#include "mfje/csv.hpp"
#include "mfje/error.hpp"
#include "mfje/forward.hpp"
#include "mfje/insurance_life.hpp"
#include "mfje/insurance_nonlife.hpp"
#include "mfje/meanfield.hpp"
#include "mfje/stats.hpp"

namespace mfje {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- config access ----------------------------------------------------------

// One config table. Every key read is remembered so finish() can reject the
// rest with a field-level message.
class Section {
 public:
  Section(const json* table, std::string path) : t_(table), path_(std::move(path)) {
    if (t_ && !t_->is_object()) throw ConfigError("[" + path_ + "] must be a table");
  }

  bool present() const { return t_ != nullptr; }
  bool has(const std::string& key) const { return t_ && t_->contains(key); }

  const json* raw(const std::string& key) {
    used_.insert(key);
    if (!t_ || !t_->contains(key)) return nullptr;
    return &t_->at(key);
  }

  double number(const std::string& key, double fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    return as_number(*v, key);
  }

  std::size_t count(const std::string& key, std::size_t fallback, std::size_t min = 0) {
    const json* v = raw(key);
    if (!v) return fallback;
    return as_count(*v, key, min);
  }

  std::optional<std::uint64_t> seed(const std::string& key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    if (!v->is_number_integer() || v->get<long long>() < 0) fail(key, "expected a nonnegative integer");
    return static_cast<std::uint64_t>(v->get<long long>());
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_string()) fail(key, "expected a string");
    return v->get<std::string>();
  }

  bool flag(const std::string& key, bool fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(key, "expected true or false");
    return v->get<bool>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback = {}) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_array()) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : *v) out.push_back(as_number(e, key));
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> fallback = {},
                                  std::size_t min = 1) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_array()) fail(key, "expected an array of integers");
    std::vector<std::size_t> out;
    for (const auto& e : *v) out.push_back(as_count(e, key, min));
    return out;
  }

  // A number (constant) or an array of [t, value] knots.
  PiecewiseLinear function(const std::string& key, PiecewiseLinear fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    return as_function(*v, key);
  }

  PiecewiseLinear as_function(const json& v, const std::string& key) const {
    if (v.is_number()) return PiecewiseLinear(v.get<double>());
    if (!v.is_array() || v.empty()) fail(key, "expected a number or an array of [t, value] knots");
    std::vector<double> ts, vs;
    for (const auto& knot : v) {
      if (!knot.is_array() || knot.size() != 2 || !knot[0].is_number() || !knot[1].is_number())
        fail(key, "each knot must be [t, value]");
      ts.push_back(knot[0].get<double>());
      vs.push_back(knot[1].get<double>());
    }
    try {
      return PiecewiseLinear(std::move(ts), std::move(vs));
    } catch (const Error& e) {
      fail(key, e.what());
    }
  }

  Horizon horizon() {
    const auto h = numbers("horizon", {0.0, 1.0});
    if (h.size() != 2) fail("horizon", "expected [start, end]");
    if (!(h[1] > h[0])) fail("horizon", "end must exceed start");
    return {h[0], h[1]};
  }

  Section sub(const std::string& key) {
    const json* v = raw(key);
    return Section(v, path_ + "." + key);
  }

  void finish() const {
    if (!t_) return;
    for (const auto& [k, v] : t_->items())
      if (!used_.count(k)) throw ConfigError("[" + path_ + "]: unknown key '" + k + "'");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("[" + path_ + "]." + key + ": " + what);
  }

 private:
  double as_number(const json& v, const std::string& key) const {
    if (!v.is_number()) fail(key, "expected a number");
    const double x = v.get<double>();
    if (std::isnan(x)) fail(key, "must not be nan");
    return x;
  }
  std::size_t as_count(const json& v, const std::string& key, std::size_t min) const {
    if (!v.is_number_integer()) fail(key, "expected an integer");
    const long long x = v.get<long long>();
    if (x < static_cast<long long>(min)) fail(key, "must be at least " + std::to_string(min));
    return static_cast<std::size_t>(x);
  }

  const json* t_;
  std::string path_;
  std::set<std::string> used_;
};

// ---- model presets ----------------------------------------------------------

struct Model {
  std::string preset;
  IntensityKernel kernel;
  MeasureSnapshot initial_law = MeasureSnapshot::dirac(Point{0.0});
  Horizon horizon;
  std::optional<SirdSpec> sird;
  std::optional<GammaClaimsSpec> gamma;
  std::optional<PaymentStream> payments;
};

PaymentStream parse_payments(Section s, std::size_t m) {
  const bool simple = s.has("pi") || s.has("b");
  const bool general = s.has("sojourn") || s.has("transition");
  if (simple && general) throw ConfigError("[model.payments]: give either pi/b or sojourn/transition, not both");
  PaymentStream p;
  if (general) {
    p = PaymentStream::zero(m);
    if (const json* so = s.raw("sojourn")) {
      if (!so->is_array() || so->size() != m) s.fail("sojourn", "expected " + std::to_string(m) + " entries");
      for (std::size_t i = 0; i < m; ++i) p.sojourn[i] = s.as_function((*so)[i], "sojourn");
    }
    if (const json* tr = s.raw("transition")) {
      if (!tr->is_array() || tr->size() != m) s.fail("transition", "expected " + std::to_string(m) + " rows");
      for (std::size_t i = 0; i < m; ++i) {
        const json& row = (*tr)[i];
        if (!row.is_array() || row.size() != m) s.fail("transition", "each row needs " + std::to_string(m) + " entries");
        for (std::size_t j = 0; j < m; ++j) p.transition[i][j] = s.as_function(row[j], "transition");
      }
    }
  } else {
    p = PaymentStream::premium_benefit(s.number("pi", 1.0), s.number("b", 1.0));
  }
  p.discount = s.function("discount", PiecewiseLinear(0.0));
  s.finish();
  p.validate(m);
  return p;
}

Model build_model(const std::string& preset, Section s) {
  Model m;
  m.preset = preset;
  if (preset == "sird") {
    SirdSpec spec;
    spec.beta1 = s.function("beta1", spec.beta1);
    spec.recovery_rate = s.function("recovery_rate", spec.recovery_rate);
    if (const json* d = s.raw("death_rates")) {
      if (!d->is_array() || d->size() != 3) s.fail("death_rates", "expected 3 entries (states 1, 2, 3)");
      for (std::size_t i = 0; i < 3; ++i) spec.death_rates[i] = s.as_function((*d)[i], "death_rates");
    }
    const auto pmf = s.numbers("initial_pmf", {spec.initial_pmf.begin(), spec.initial_pmf.end()});
    if (pmf.size() != 4) s.fail("initial_pmf", "expected 4 probabilities");
    std::copy(pmf.begin(), pmf.end(), spec.initial_pmf.begin());
    spec.horizon = s.horizon();
    m.payments = parse_payments(s.sub("payments"), 4);
    s.finish();
    spec.validate();
    m.kernel = sird_kernel(spec);
    m.initial_law = sird_initial_law(spec);
    m.horizon = spec.horizon;
    m.sird = spec;
  } else if (preset == "gamma-claims") {
    GammaClaimsSpec spec;
    spec.alpha = s.number("alpha", spec.alpha);
    spec.theta_star = s.number("theta_star", spec.theta_star);
    spec.theta_min = s.number("theta_min", spec.theta_min);
    spec.theta_max = s.number("theta_max", spec.theta_max);
    spec.cap_K = s.number("cap_K", spec.cap_K);
    spec.claim_rate = s.number("claim_rate", spec.claim_rate);
    spec.weight_fn = s.function("weight_fn", spec.weight_fn);
    if (const json* c = s.raw("covariates")) {
      if (!c->is_array()) s.fail("covariates", "expected an array of [value, weight]");
      for (const auto& atom : *c) {
        if (!atom.is_array() || atom.size() != 2 || !atom[0].is_number() || !atom[1].is_number())
          s.fail("covariates", "each atom must be [value, weight]");
        spec.covariates.push_back({atom[0].get<double>(), atom[1].get<double>()});
      }
    }
    spec.horizon = s.horizon();
    s.finish();
    spec.validate();
    m.kernel = gamma_claims_kernel(spec);
    m.initial_law = claims_initial_law(spec);
    m.horizon = spec.horizon;
    m.gamma = spec;
  } else if (preset == "constant-rate") {
    const double rate = s.number("rate", 2.0);
    if (!(rate >= 0.0)) s.fail("rate", "must be nonnegative");
    m.horizon = s.horizon();
    s.finish();
    m.kernel = poisson_counting_kernel(rate);
    m.initial_law = MeasureSnapshot::dirac(Point{0.0});
  } else if (preset == "two-state") {
    const double fwd = s.number("forward_rate", 0.5);
    const double bwd = s.number("backward_rate", 0.0);
    if (!(fwd >= 0.0)) s.fail("forward_rate", "must be nonnegative");
    if (!(bwd >= 0.0)) s.fail("backward_rate", "must be nonnegative");
    auto pmf = s.numbers("initial_pmf", {1.0, 0.0});
    if (pmf.size() != 2) s.fail("initial_pmf", "expected 2 probabilities");
    m.horizon = s.horizon();
    s.finish();
    m.kernel = two_state_kernel(fwd, bwd);
    m.initial_law = MeasureSnapshot::pmf(pmf);
    try {
      m.initial_law.validate();
    } catch (const Error& e) {
      throw ConfigError("[model].initial_pmf: " + std::string(e.what()));
    }
  } else {
    throw ConfigError("[experiment].preset: unknown preset '" + preset +
                      "' (expected sird, gamma-claims, constant-rate or two-state)");
  }
  return m;
}

// ---- outputs ----------------------------------------------------------------

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  void create() const {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) throw Error("cli", "cannot create output directory '" + dir_.string() + "'");
  }

  void write(const std::string& name, const std::string& content, std::vector<std::string> masked = {}) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cli", "cannot write '" + (dir_ / name).string() + "'");
    out << content;
    if (!out) throw Error("cli", "write failed for '" + (dir_ / name).string() + "'");
    const std::string hashed = masked.empty() ? content : mask_csv_columns(content, masked);
    files_.push_back({name, fnv1a_hex(hashed)});
    masked_[name] = std::move(masked);
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  const std::vector<OutputFile>& files() const { return files_; }
  const std::map<std::string, std::vector<std::string>>& masked() const { return masked_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<OutputFile> files_;
  std::map<std::string, std::vector<std::string>> masked_;
};

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json report_json(const ReserveReport& r) {
  json j;
  j["method"] = r.method;
  j["cohort"] = r.cohort;
  j["cohort_std_error"] = r.cohort_se;
  json states = json::array();
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    states.push_back({{"state", r.labels[i]},
                      {"value", optional_json(r.statewise[i])},
                      {"std_error", optional_json(r.statewise_se[i])},
                      {"count", r.stratum_counts.empty() ? 0 : r.stratum_counts[i]}});
  }
  j["statewise"] = states;
  j["mixing_residual"] = r.mixing_residual;
  j["grid_points"] = r.grid_points;
  j["n"] = r.n;
  j["replications"] = r.replications;
  j["seed"] = r.seed;
  j["renormalized_steps"] = r.renormalized_steps;
  return j;
}

void reserve_rows(std::ostream& os, const ReserveReport& r) {
  const std::size_t count_all = r.method == "monte-carlo" ? r.replications : 0;
  CsvRow(os) << r.method << r.n << "cohort" << r.cohort << r.cohort_se << count_all;
  for (std::size_t i = 0; i < r.labels.size(); ++i) {
    CsvRow row(os);
    row << r.method << r.n << r.labels[i];
    if (r.statewise[i]) {
      row << *r.statewise[i] << r.statewise_se[i].value_or(0.0);
    } else {
      row << "" << "";
    }
    row << (r.stratum_counts.empty() ? std::size_t{0} : r.stratum_counts[i]);
  }
}

std::string point_text(PointView x) {
  std::string s;
  for (std::size_t k = 0; k < x.size(); ++k) s += (k ? ";" : "") + format_real(x[k]);
  return s;
}

// ---- experiments ------------------------------------------------------------

struct Context {
  Model model;
  Section numerics;
  Section mc;
  Section output;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  bool quiet = true;
  Outputs* out = nullptr;

  // Called once an experiment has read all its keys, before any work.
  void seal() const {
    numerics.finish();
    mc.finish();
    output.finish();
    out->create();
  }

  void note(const std::string& msg) const {
    if (!quiet) std::cerr << "mfje: " << msg << "\n";
  }
};

void require_finite(const Context& c, const std::string& experiment) {
  if (!c.model.kernel.space.is_finite())
    throw ConfigError("[experiment].preset: " + experiment + " needs a finite-state preset (sird or two-state), got '" +
                      c.model.preset + "'");
}

void require_preset(const Context& c, const std::string& experiment, const std::string& preset) {
  if (c.model.preset != preset)
    throw ConfigError("[experiment].preset: " + experiment + " needs preset '" + preset + "', got '" + c.model.preset +
                      "'");
}

std::vector<double> probabilities(const MeasureSnapshot& s) {
  const auto p = s.probabilities();
  return {p.begin(), p.end()};
}

void run_simulate(Context& c) {
  const std::size_t n = c.mc.count("n", 100, 1);
  const std::size_t reps = c.mc.count("replications", 10, 1);
  const bool export_paths = c.output.flag("export_paths", true);
  const std::size_t export_reps = c.output.count("max_export_replications", reps);
  c.seal();
  const auto& model = c.model;
  std::vector<std::optional<Ensemble>> runs(reps);
  parallel_for(reps, c.workers, [&](std::size_t r) {
    runs[r].emplace(simulate_interacting(model.kernel, model.initial_law, n, model.horizon, {c.seed, r}));
    for (const auto& p : runs[r]->paths()) p.validate(model.kernel.space);
  });
  c.note("simulated " + std::to_string(reps) + " replications of n=" + std::to_string(n));

  const std::size_t dim = model.kernel.space.dim();
  if (export_paths) {
    std::ostringstream os;
    write_paths_csv_header(os, dim);
    for (std::size_t r = 0; r < std::min(reps, export_reps); ++r) write_paths_csv(os, r, *runs[r]);
    c.out->write("paths.csv", os.str());
  }
  std::ostringstream os;
  const double T = model.horizon.end;
  if (model.kernel.space.is_finite()) {
    CsvRow(os) << "replication" << "state_label" << "fraction";
    for (std::size_t r = 0; r < reps; ++r) {
      const auto snap = runs[r]->empirical_snapshot(T);
      for (std::size_t i = 0; i < model.kernel.space.size(); ++i)
        CsvRow(os) << r << model.kernel.space.label(i) << snap.probability(i);
    }
  } else {
    CsvRow(os) << "replication" << "coordinate" << "mean";
    for (std::size_t r = 0; r < reps; ++r) {
      for (std::size_t k = 0; k < dim; ++k) {
        std::vector<double> xs;
        for (const auto& p : runs[r]->paths()) xs.push_back(p.final_state()[k]);
        CsvRow(os) << r << k << stable_sum(xs) / static_cast<double>(xs.size());
      }
    }
  }
  c.out->write("terminal.csv", os.str());

  std::vector<double> jumps;
  for (const auto& e : runs)
    for (const auto& p : e->paths()) jumps.push_back(static_cast<double>(p.jump_count()));
  const auto je = mean_estimate(jumps);
  c.out->write_json("simulate.json", {{"n", n},
                                      {"replications", reps},
                                      {"mean_jumps_per_path", je.mean},
                                      {"mean_jumps_std_error", je.std_error}});
}

PicardOptions picard_options(Context& c) {
  PicardOptions po;
  po.tol = c.numerics.number("tol", 1e-6);
  if (!(po.tol > 0.0)) c.numerics.fail("tol", "must be positive");
  po.max_iter = c.numerics.count("max_iter", 100, 1);
  po.particles = c.numerics.count("particles", 100000, 2);
  po.transport_cap = c.numerics.count("transport_cap", 512, 2);
  po.seed = c.seed;
  po.workers = c.workers;
  return po;
}

std::vector<double> model_grid(Context& c, std::size_t fallback) {
  const std::size_t points = c.numerics.count("grid_points", fallback, 2);
  return uniform_grid(c.model.horizon.start, c.model.horizon.end, points);
}

void write_picard_log(Context& c, std::span<const PicardIteration> log) {
  std::ostringstream os;
  write_picard_log_csv(os, log);
  c.out->write("picard_log.csv", os.str(), {"wall_time_ms"});
}

void run_meanfield(Context& c) {
  const auto& model = c.model;
  if (model.gamma) {
    const auto grid = model_grid(c, 201);
    const auto po = picard_options(c);
    c.seal();
    const auto fp = scalar_fixed_point_gamma(*model.gamma, grid, po.tol, po.max_iter, po.particles, c.seed, c.workers);
    std::ostringstream os;
    CsvRow(os) << "t" << "mbar" << "theta";
    for (std::size_t k = 0; k < fp.grid.size(); ++k) CsvRow(os) << fp.grid[k] << fp.mbar[k] << fp.theta[k];
    c.out->write("meanfield_curve.csv", os.str());
    write_picard_log(c, fp.log);
    std::vector<double> w;
    for (const auto& p : fp.paths) w.push_back(p.final_state()[0]);
    const auto we = mean_estimate(w);
    c.out->write_json("meanfield.json", {{"converged", fp.converged},
                                         {"iterations", fp.log.size()},
                                         {"expected_claim", we.mean},
                                         {"expected_claim_std_error", we.std_error}});
    return;
  }

  const auto splits = c.numerics.numbers("chain_splits");
  if (model.kernel.space.is_finite()) {
    const auto grid = model_grid(c, 201);
    const auto po = picard_options(c);
    c.seal();
    const auto pr = splits.empty() ? picard_solve(model.kernel, model.initial_law, grid, po)
                                   : picard_solve_chained(model.kernel, model.initial_law, grid, splits, po);
    std::ostringstream os;
    write_flow_csv(os, model.kernel.space, pr.flow);
    c.out->write("flow.csv", os.str());
    write_picard_log(c, pr.log);
    const auto direct = solve_nonlinear_forward(model.kernel, probabilities(model.initial_law), grid);
    double sup_diff = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k)
      for (std::size_t i = 0; i < model.kernel.space.size(); ++i)
        sup_diff = std::max(sup_diff, std::abs(pr.flow[k].probability(i) - direct.flow[k].probability(i)));
    json j{{"converged", pr.converged},
           {"iterations", pr.log.size()},
           {"renormalized_steps", pr.renormalized_steps},
           {"sup_difference_vs_nonlinear_forward", sup_diff}};
    if (model.kernel.bounds.c_mu)
      j["contraction_bound"] =
          picard_contraction_bound(*model.kernel.bounds.c_mu, model.horizon.end - model.horizon.start);
    c.out->write_json("meanfield.json", j);
    return;
  }

  const auto grid = model_grid(c, 201);
  const auto po = picard_options(c);
  c.seal();
  const auto pr = splits.empty() ? picard_solve(model.kernel, model.initial_law, grid, po)
                                 : picard_solve_chained(model.kernel, model.initial_law, grid, splits, po);
  std::ostringstream os;
  CsvRow(os) << "t" << "coordinate" << "mean" << "variance";
  const std::size_t dim = model.kernel.space.dim();
  for (std::size_t k = 0; k < pr.flow.size(); ++k) {
    const auto& s = pr.flow[k];
    for (std::size_t d = 0; d < dim; ++d) {
      std::vector<double> xs(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) xs[i] = s.particle(i)[d];
      const double mean = stable_sum(xs) / static_cast<double>(xs.size());
      for (auto& x : xs) x = (x - mean) * (x - mean);
      CsvRow(os) << pr.flow.grid()[k] << d << mean << stable_sum(xs) / static_cast<double>(xs.size());
    }
  }
  c.out->write("flow_moments.csv", os.str());
  write_picard_log(c, pr.log);
  c.out->write_json("meanfield.json", {{"converged", pr.converged}, {"iterations", pr.log.size()}});
}

void run_chaos(Context& c) {
  require_finite(c, "chaos-convergence");
  const auto n_list = c.mc.counts("n_list", {10, 100, 1000});
  const std::size_t reps = c.mc.count("replications", 100, 2);
  const std::size_t points = c.numerics.count("grid_points", 2001, 2);
  const double q = c.numerics.number("fournier_q", 3.0);
  c.seal();
  const auto res = chaos_convergence(c.model.kernel, c.model.initial_law, c.model.horizon, n_list, reps, points, q,
                                     c.seed, c.workers);
  std::ostringstream os;
  CsvRow(os) << "n" << "gap_mean" << "ci_low" << "ci_high" << "std_error" << "replications" << "pairs"
             << "fournier_beta" << "crn_fallback";
  for (const auto& r : res.rows)
    CsvRow(os) << r.n << r.gap.mean << r.gap.ci_low << r.gap.ci_high << r.gap.std_error << r.replications
               << r.gap.pairs << r.fournier_beta << (r.crn_fallback ? 1 : 0);
  c.out->write("chaos.csv", os.str());
  c.out->write_json("chaos.json", {{"slope", optional_json(res.slope)},
                                   {"r2", optional_json(res.r2)},
                                   {"strictly_decreasing", res.strictly_decreasing},
                                   {"fournier_q", q},
                                   {"gap_is_upper_bound", true}});
}

void run_reserves(Context& c) {
  require_preset(c, "sird-reserves", "sird");
  const auto grid = model_grid(c, 1001);
  const auto n_list = c.mc.counts("n_list");
  const std::size_t reps = c.mc.count("replications", 1000, 1);
  c.seal();
  const auto& spec = *c.model.sird;
  const auto& pay = *c.model.payments;

  const auto mf = meanfield_reserves(spec, pay, grid);
  std::ostringstream flow;
  write_flow_csv(flow, c.model.kernel.space, mf.flow);
  c.out->write("sird_flow.csv", flow.str());

  std::ostringstream os;
  CsvRow(os) << "method" << "n" << "state" << "value" << "std_error" << "count";
  reserve_rows(os, mf.report);
  json reports = json::array({report_json(mf.report)});
  std::ostringstream conv;
  CsvRow(conv) << "n" << "monte_carlo" << "std_error" << "meanfield" << "abs_difference";
  for (std::size_t n : n_list) {
    const auto r = n_individual_reserves(spec, pay, n, reps, c.seed, c.workers);
    c.note("reserves at n=" + std::to_string(n) + ": " + format_real(r.cohort));
    reserve_rows(os, r);
    reports.push_back(report_json(r));
    CsvRow(conv) << n << r.cohort << r.cohort_se << mf.report.cohort << std::abs(r.cohort - mf.report.cohort);
  }
  c.out->write("reserves.csv", os.str());
  c.out->write_json("reserves.json", reports);
  if (!n_list.empty()) c.out->write("reserve_convergence.csv", conv.str());
}

void run_claims(Context& c) {
  require_preset(c, "gamma-claims", "gamma-claims");
  const auto grid = model_grid(c, 201);
  const auto po = picard_options(c);
  const auto n_list = c.mc.counts("n_list", {10, 100, 1000});
  const std::size_t total = c.mc.count("total_paths", 100000, 1);
  // Zero: derive replications from total_paths.
  const std::size_t fixed_reps = c.mc.count("replications", 0, 2);
  c.seal();
  const auto& spec = *c.model.gamma;

  const auto mf = meanfield_expected_claim(spec, grid, po.tol, po.max_iter, po.particles, c.seed, c.workers);
  c.note("mean-field expected claim " + format_real(mf.total.value));

  std::ostringstream os;
  CsvRow(os) << "n" << "replications" << "estimate" << "std_error" << "meanfield" << "meanfield_std_error"
             << "abs_difference";
  json rows = json::array();
  for (std::size_t n : n_list) {
    const std::size_t reps = fixed_reps ? fixed_reps : std::max<std::size_t>(2, total / n);
    const auto e = expected_claim_amount_n(spec, n, reps, c.seed, c.workers);
    CsvRow(os) << n << reps << e.value << e.std_error << mf.total.value << mf.total.std_error
               << std::abs(e.value - mf.total.value);
    rows.push_back({{"n", n}, {"replications", reps}, {"estimate", e.value}, {"std_error", e.std_error}});
  }
  c.out->write("claims.csv", os.str());

  std::ostringstream curve;
  CsvRow(curve) << "t" << "mbar" << "theta";
  const auto& fp = mf.fixed_point;
  for (std::size_t k = 0; k < fp.grid.size(); ++k) CsvRow(curve) << fp.grid[k] << fp.mbar[k] << fp.theta[k];
  c.out->write("claims_meanfield.csv", curve.str());

  std::ostringstream cov;
  CsvRow(cov) << "covariate" << "value" << "std_error" << "count";
  json covs = json::array();
  for (const auto& cc : mf.by_covariate) {
    CsvRow row(cov);
    row << cc.covariate;
    if (cc.estimate) {
      row << cc.estimate->value << cc.estimate->std_error << cc.estimate->samples;
      covs.push_back({{"covariate", cc.covariate}, {"value", cc.estimate->value}, {"std_error", cc.estimate->std_error}});
    } else {
      row << "" << "" << 0;
      covs.push_back({{"covariate", cc.covariate}, {"value", nullptr}, {"std_error", nullptr}});
    }
  }
  c.out->write("claims_covariates.csv", cov.str());
  write_picard_log(c, fp.log);
  c.out->write_json("claims.json", {{"meanfield", mf.total.value},
                                    {"meanfield_std_error", mf.total.std_error},
                                    {"fixed_point_converged", fp.converged},
                                    {"fixed_point_iterations", fp.log.size()},
                                    {"by_n", rows},
                                    {"by_covariate", covs}});
}

ReserveStats reserve_stats(Context& c, std::span<const std::size_t> n_list, std::size_t default_reps) {
  require_preset(c, "lln/clt", "sird");
  ReserveStatsOptions opt;
  opt.replications = c.mc.count("replications", default_reps, 2);
  opt.sigma_paths = c.mc.count("sigma_paths", opt.sigma_paths, 2);
  opt.grid_points = c.numerics.count("grid_points", opt.grid_points, 2);
  opt.thresholds.skewness = c.numerics.number("clt_skewness", opt.thresholds.skewness);
  opt.thresholds.excess_kurtosis = c.numerics.number("clt_excess_kurtosis", opt.thresholds.excess_kurtosis);
  opt.thresholds.ks_coefficient = c.numerics.number("clt_ks_coefficient", opt.thresholds.ks_coefficient);
  opt.thresholds.z = c.numerics.number("clt_z", opt.thresholds.z);
  c.seal();
  return reserve_lln_clt(*c.model.sird, *c.model.payments, n_list, opt, c.seed, c.workers);
}

json clt_json(const CltReport& r) {
  return {{"samples", r.samples},     {"mean", r.mean},
          {"variance", r.variance},   {"skewness", r.skewness},
          {"excess_kurtosis", r.excess_kurtosis},
          {"ks", r.ks},               {"degenerate", r.degenerate},
          {"mean_ok", r.mean_ok},     {"variance_ok", r.variance_ok},
          {"skewness_ok", r.skewness_ok},
          {"kurtosis_ok", r.kurtosis_ok},
          {"ks_ok", r.ks_ok},         {"passed", r.passed()}};
}

void run_lln(Context& c) {
  auto n_list = c.mc.counts("n_list", {10, 100, 1000});
  std::sort(n_list.begin(), n_list.end());
  const auto st = reserve_stats(c, n_list, 1000);
  std::ostringstream os;
  CsvRow(os) << "n" << "replications" << "l2_error" << "ci_low" << "ci_high" << "n_cov";
  for (const auto& r : st.rows)
    CsvRow(os) << r.n << (st.lln.rows.empty() ? 0 : st.lln.rows.front().samples) << r.l2_error << r.l2_ci_low
               << r.l2_ci_high << r.n_cov;
  c.out->write("lln.csv", os.str());
  std::ostringstream sw;
  CsvRow(sw) << "n" << "state" << "l2_error";
  const auto space = sird_space();
  for (const auto& r : st.rows)
    for (std::size_t i = 0; i < r.statewise_l2.size(); ++i) {
      CsvRow row(sw);
      row << r.n << space.label(i);
      if (r.statewise_l2[i])
        row << *r.statewise_l2[i];
      else
        row << "";
    }
  c.out->write("lln_statewise.csv", sw.str());
  json j{{"vbar", st.vbar}, {"sigma", st.sigma}, {"sigma_std_error", st.sigma_se}, {"degenerate", st.degenerate}};
  if (st.lln.fit) {
    j["slope"] = st.lln.fit->slope;
    j["intercept"] = st.lln.fit->intercept;
    j["r2"] = st.lln.fit->r2;
  } else {
    j["slope"] = nullptr;
  }
  c.out->write_json("lln.json", j);
}

void run_clt(Context& c) {
  const std::size_t n = c.mc.count("n", 1000, 1);
  const std::vector<std::size_t> n_list{n};
  const auto st = reserve_stats(c, n_list, 10000);
  const auto& row = st.rows.front();
  std::ostringstream os;
  CsvRow(os) << "replication" << "standardized";
  for (std::size_t r = 0; r < row.standardized.size(); ++r) CsvRow(os) << r << row.standardized[r];
  c.out->write("clt.csv", os.str());
  json j{{"n", n},
         {"vbar", st.vbar},
         {"sigma", st.sigma},
         {"sigma_std_error", st.sigma_se},
         {"degenerate", st.degenerate},
         {"n_cov", row.n_cov}};
  j["report"] = row.clt ? clt_json(*row.clt) : json(nullptr);
  c.out->write_json("clt.json", j);
}

// Default probes: every state (or a few representative points) at three times,
// plus pairs that differ only in the measure argument.
void default_probes(const Model& m, std::vector<Probe>& probes, std::vector<ProbePair>& pairs) {
  const double t0 = m.horizon.start, t1 = m.horizon.end, tm = 0.5 * (t0 + t1);
  const auto& space = m.kernel.space;
  if (space.is_finite()) {
    const std::size_t k = space.size();
    std::vector<MeasureSnapshot> laws{m.initial_law};
    for (std::size_t i = 0; i < k; ++i) laws.push_back(MeasureSnapshot::dirac_pmf(k, i));
    for (double t : {t0, tm, t1})
      for (std::size_t i = 0; i < k; ++i)
        for (const auto& rho : laws) probes.push_back({t, space.point(i), rho});
    if (k >= 2) {
      std::vector<double> mixed(k, 0.0);
      mixed[0] = 0.9;
      mixed[1] = 0.1;
      for (std::size_t i = 0; i < k; ++i)
        pairs.push_back({{tm, space.point(i), MeasureSnapshot::dirac_pmf(k, 0)},
                         {tm, space.point(i), MeasureSnapshot::pmf(mixed)}});
    }
    return;
  }
  if (m.gamma) {
    const std::vector<Point> xs{{0.0, 0.0, 0.0}, {1.0, 1.0, 0.0}, {5.0, 2.0, 0.0}};
    const std::vector<MeasureSnapshot> laws{MeasureSnapshot::dirac(Point{0.0, 0.0, 0.0}),
                                            MeasureSnapshot::dirac(Point{1.0, 1.0, 0.0}),
                                            MeasureSnapshot::dirac(Point{30.0, 2.0, 0.0})};
    for (double t : {t0, tm, t1})
      for (const auto& x : xs)
        for (const auto& rho : laws) probes.push_back({t, x, rho});
    for (const auto& x : xs) pairs.push_back({{tm, x, laws[0]}, {tm, x, laws[1]}});
    return;
  }
  for (double t : {t0, tm, t1})
    for (double x : {0.0, 1.0, 5.0}) probes.push_back({t, Point{x}, MeasureSnapshot::dirac(Point{0.0})});
  pairs.push_back({{tm, Point{0.0}, MeasureSnapshot::dirac(Point{0.0})},
                   {tm, Point{1.0}, MeasureSnapshot::dirac(Point{0.0})}});
}

void run_audit(Context& c) {
  AuditOptions ao;
  ao.samples_per_probe = c.numerics.count("samples_per_probe", ao.samples_per_probe, 1);
  ao.moment_slack = c.numerics.number("moment_slack", ao.moment_slack);
  ao.transport_cap = c.numerics.count("transport_cap", ao.transport_cap, 2);
  ao.seed = c.seed;
  c.seal();
  std::vector<Probe> probes;
  std::vector<ProbePair> pairs;
  default_probes(c.model, probes, pairs);
  const auto rep = audit_regularity(c.model.kernel, probes, pairs, ao);

  std::ostringstream os;
  CsvRow(os) << "probe" << "t" << "x" << "rate" << "moment";
  for (std::size_t i = 0; i < probes.size(); ++i)
    CsvRow(os) << i << probes[i].t << point_text(probes[i].x) << rep.rates[i] << rep.moments[i];
  c.out->write("audit.csv", os.str());
  std::ostringstream ps;
  CsvRow(ps) << "pair" << "x_a" << "x_b" << "lipschitz_ratio";
  for (std::size_t i = 0; i < pairs.size(); ++i)
    CsvRow(ps) << i << point_text(pairs[i].a.x) << point_text(pairs[i].b.x) << rep.lipschitz_ratios[i];
  c.out->write("audit_pairs.csv", ps.str());

  const auto& b = c.model.kernel.bounds;
  json v = json::array();
  for (const auto& x : rep.violations)
    v.push_back({{"kind", to_string(x.kind)},
                 {"index", x.probe},
                 {"observed", x.observed},
                 {"declared", x.declared},
                 {"detail", x.detail}});
  c.out->write_json("audit.json", {{"kernel", c.model.kernel.name},
                                   {"c_lambda", b.c_lambda},
                                   {"c_r", b.c_r},
                                   {"q", b.q},
                                   {"c_mu", b.c_mu ? json(*b.c_mu) : json(nullptr)},
                                   {"max_rate", rep.max_rate},
                                   {"max_moment", rep.max_moment},
                                   {"max_lipschitz_ratio", rep.max_lipschitz_ratio},
                                   {"escaping_jumps", rep.escaping_jumps},
                                   {"ok", rep.ok()},
                                   {"violations", v}});
}

std::string default_preset(const std::string& experiment) {
  if (experiment == "sird-reserves" || experiment == "lln" || experiment == "clt") return "sird";
  if (experiment == "gamma-claims") return "gamma-claims";
  return "";
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("MFJE_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const std::string str(s);
    if (str.find_first_not_of("0123456789") != std::string::npos) throw std::invalid_argument(str);
    const unsigned long long v = std::stoull(str, &used, 10);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("MFJE_SEED: expected an unsigned 64-bit integer, got '" + std::string(s) + "'");
  }
}

}  // namespace

std::vector<std::string> experiment_names() {
  return {"simulate", "meanfield", "chaos-convergence", "sird-reserves", "gamma-claims", "lln", "clt", "audit"};
}

std::string canonical_experiment(const std::string& name) {
  if (name == "converge") return "chaos-convergence";
  if (name == "reserve-sird") return "sird-reserves";
  if (name == "claims-gamma") return "gamma-claims";
  for (const auto& n : experiment_names())
    if (n == name) return n;
  return "";
}

std::string mask_csv_columns(const std::string& csv, std::span<const std::string> columns) {
  std::istringstream in(csv);
  std::string line;
  std::vector<bool> mask;
  std::string out;
  bool header = true;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::string f;
    std::istringstream ls(line);
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (header) {
      for (const auto& name : fields)
        mask.push_back(std::find(columns.begin(), columns.end(), name) != columns.end());
    } else {
      for (std::size_t i = 0; i < fields.size() && i < mask.size(); ++i)
        if (mask[i]) fields[i].clear();
    }
    header = false;
    for (std::size_t i = 0; i < fields.size(); ++i) out += (i ? "," : "") + fields[i];
    out += '\n';
  }
  return out;
}

ChaosResult chaos_convergence(const IntensityKernel& kernel, const MeasureSnapshot& initial_law, Horizon horizon,
                              std::span<const std::size_t> n_list, std::size_t replications, std::size_t grid_points,
                              double fournier_q, std::uint64_t seed, unsigned workers) {
  if (!kernel.space.is_finite()) throw InvalidArgument("cli", "chaos_convergence needs a finite state space");
  if (replications < 2) throw InvalidArgument("cli", "chaos_convergence needs at least 2 replications");
  const auto grid = uniform_grid(horizon.start, horizon.end, grid_points);
  const auto flow = solve_nonlinear_forward(kernel, initial_law.probabilities(), grid).flow;
  const auto initials = identical_initials(kernel.space, initial_law);
  ChaosResult out;
  std::vector<double> xs, ys;
  for (std::size_t n : n_list) {
    std::vector<double> per_rep(replications);
    std::vector<char> fallback(replications, 0);
    parallel_for(replications, workers, [&](std::size_t r) {
      const auto run = simulate_coupled(kernel, flow, n, initials, horizon, {seed, r});
      std::vector<double> d;
      d.reserve(run.pairs.size());
      for (const auto& p : run.pairs) d.push_back(p.sup_distance);
      per_rep[r] = stable_sum(d) / static_cast<double>(d.size());
      fallback[r] = run.crn_fallback;
    });
    ChaosRow row;
    row.n = n;
    row.replications = replications;
    row.gap = chaos_gap(std::span<const double>(per_rep));
    row.gap.pairs = n * replications;
    row.fournier_beta = fournier_rate(static_cast<double>(n), static_cast<unsigned>(kernel.space.dim()), fournier_q);
    row.crn_fallback = std::any_of(fallback.begin(), fallback.end(), [](char f) { return f != 0; });
    out.rows.push_back(row);
    xs.push_back(static_cast<double>(n));
    ys.push_back(row.gap.mean);
  }
  out.strictly_decreasing = out.rows.size() >= 2;
  for (std::size_t i = 1; i < out.rows.size(); ++i)
    if (!(out.rows[i].gap.mean < out.rows[i - 1].gap.mean)) out.strictly_decreasing = false;
  if (xs.size() >= 3 && std::all_of(ys.begin(), ys.end(), [](double y) { return y > 0.0; })) {
    const auto fit = rate_fit(xs, ys);
    out.slope = fit.slope;
    out.r2 = fit.r2;
  }
  return out;
}

RunResult run_experiment(const RunOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const json root = parse_toml(options.config_text);
  for (const auto& [k, v] : root.items()) {
    static const std::set<std::string> known{"experiment", "model", "numerics", "mc", "output"};
    if (!known.count(k)) throw ConfigError("unknown section [" + k + "]");
    if (!v.is_object()) throw ConfigError("'" + k + "' must be a table");
  }
  auto table = [&](const char* k) { return root.contains(k) ? &root.at(k) : nullptr; };
  Section exp(table("experiment"), "experiment");

  std::string name = exp.text("name", "");
  if (!name.empty()) {
    const auto canon = canonical_experiment(name);
    if (canon.empty()) exp.fail("name", "unknown experiment '" + name + "'");
    name = canon;
  }
  if (options.experiment) {
    const auto sub = canonical_experiment(*options.experiment);
    if (sub.empty()) throw ConfigError("unknown experiment '" + *options.experiment + "'");
    if (!name.empty() && name != sub)
      throw ConfigError("[experiment].name: config names '" + name + "' but the command asks for '" + sub + "'");
    name = sub;
  }
  if (name.empty()) throw ConfigError("[experiment].name: required (or give a subcommand)");
  const std::string preset = exp.text("preset", default_preset(name));
  if (preset.empty()) throw ConfigError("[experiment].preset: required for experiment '" + name + "'");
  exp.text("description", "");
  exp.finish();

  Section model_section(table("model"), "model");
  Context c{build_model(preset, model_section), Section(table("numerics"), "numerics"), Section(table("mc"), "mc"),
            Section(table("output"), "output")};

  const auto config_seed = c.mc.seed("seed");
  std::optional<std::uint64_t> env = options.use_env_seed ? env_seed() : std::nullopt;
  c.seed = options.seed ? *options.seed : env ? *env : config_seed.value_or(0);
  c.workers = std::max(1u, options.workers);
  c.quiet = options.quiet;

  if (options.out_dir.empty()) throw ConfigError("output directory is required");
  const fs::path dir(options.out_dir);
  Outputs out(dir);
  c.out = &out;
  c.note("running " + name + " (preset " + preset + ", seed " + std::to_string(c.seed) + ")");

  if (name == "simulate") run_simulate(c);
  else if (name == "meanfield") run_meanfield(c);
  else if (name == "chaos-convergence") run_chaos(c);
  else if (name == "sird-reserves") run_reserves(c);
  else if (name == "gamma-claims") run_claims(c);
  else if (name == "lln") run_lln(c);
  else if (name == "clt") run_clt(c);
  else run_audit(c);
  out.create();

  RunResult res;
  res.experiment = name;
  res.preset = preset;
  res.seed = c.seed;
  res.files = out.files();
  res.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

  json files = json::array();
  for (const auto& f : res.files) {
    json masked = out.masked().at(f.name);
    files.push_back({{"name", f.name}, {"fnv1a", f.hash}, {"masked_columns", masked}});
  }
  json manifest{{"engine", "mfje"},
                {"version", MFJE_VERSION},
                {"experiment", name},
                {"preset", preset},
                {"seed", c.seed},
                {"workers", c.workers},
                {"config_hash", fnv1a_hex(options.config_text)},
                {"config_text", options.config_text},
                {"wall_time_ms", res.wall_time_ms},
                {"files", files}};
  std::ofstream mf(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  mf << manifest.dump(2) << "\n";
  if (!mf) throw Error("cli", "cannot write manifest.json");
  c.note("wrote " + std::to_string(res.files.size()) + " files to " + dir.string());
  return res;
}

RerunResult rerun_from_manifest(const std::string& manifest_path, const std::string& out_dir, unsigned workers,
                                bool quiet) {
  json m;
  try {
    m = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    throw ConfigError("manifest '" + manifest_path + "': " + e.what());
  }
  auto field = [&](const char* k) -> const json& {
    if (!m.is_object() || !m.contains(k)) throw ConfigError("manifest: missing field '" + std::string(k) + "'");
    return m.at(k);
  };
  const std::string text = field("config_text").get<std::string>();
  if (fnv1a_hex(text) != field("config_hash").get<std::string>())
    throw ConfigError("manifest: config_hash does not match config_text");
  RunOptions opt;
  opt.config_text = text;
  opt.out_dir = out_dir;
  opt.experiment = field("experiment").get<std::string>();
  opt.seed = field("seed").get<std::uint64_t>();
  opt.workers = workers;
  opt.quiet = quiet;
  opt.use_env_seed = false;
  RerunResult rr;
  rr.run = run_experiment(opt);
  std::map<std::string, std::string> fresh;
  for (const auto& f : rr.run.files) fresh[f.name] = f.hash;
  for (const auto& f : field("files")) {
    const auto name = f.at("name").get<std::string>();
    auto it = fresh.find(name);
    if (it == fresh.end() || it->second != f.at("fnv1a").get<std::string>()) rr.mismatched.push_back(name);
  }
  return rr;
}

}  // namespace mfje
