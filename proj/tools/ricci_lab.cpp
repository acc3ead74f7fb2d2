// ricci_lab: batch front-end for the flow library.
//
//   ricci_lab homog   --geometry su2 --init 1,1,1 --t-end 1 --out run/
//   ricci_lab surface --background sphere --grid 64 --init "0.05*cos(theta)" --checks all
//   ricci_lab symbol  --n 3 --trials 100
//   ricci_lab pinch   --trials 100000 --eps 0.1
//   ricci_lab kahler  --dim 1 --grid 64 --f "0.2*cos(x)" --mode negative
//   ricci_lab verify  run/diagnostics.csv --check gauss-bonnet
//
// Exit codes: 0 pass, 1 check violation, 2 invalid input, 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ricci/flow.hpp"
#include "ricci/init_spec.hpp"
#include "ricci/io.hpp"
#include "ricci/kahler.hpp"
#include "ricci/max_principle.hpp"
#include "ricci/parallel.hpp"
#include "ricci/random.hpp"
#include "ricci/surface.hpp"
#include "ricci/symbol.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "1.0.0";

enum Exit { kPass = 0, kViolation = 1, kBadInput = 2, kNumerical = 3 };

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void require_file(std::ifstream& in, const fs::path& p) {
  if (!in) throw ricci::Error(ricci::ErrorKind::InvalidInput, "cannot read " + p.string());
}

std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require_file(in, p);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Run bookkeeping: resolved config, emitted files, check results, manifest.

namespace {

struct Run {
  std::string command;
  fs::path out = ".";
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string config_file;
  std::string started = now_utc();
  json config = json::object();
  json inputs = json::object();
  json outputs = json::array();
  json checks = json::object();
  json notes = json::object();
  std::vector<std::string> plot_lines;

  fs::path file(const std::string& name) {
    fs::create_directories(out);
    outputs.push_back(name);
    return out / name;
  }

  void check(const std::string& name, bool pass, json detail = json::object()) {
    detail["status"] = pass ? "pass" : "fail";
    checks[name] = detail;
    std::cout << (pass ? "PASS " : "FAIL ") << name << '\n';
  }

  void skip(const std::string& name, const std::string& why) {
    checks[name] = json{{"status", "skipped"}, {"reason", why}};
    std::cout << "SKIP " << name << " (" << why << ")\n";
  }

  bool all_pass() const {
    for (const auto& [k, v] : checks.items())
      if (v["status"] == "fail") return false;
    return true;
  }

  void write_plot() {
    if (plot_lines.empty()) return;
    std::ofstream os(file("plot.gp"));
    os << "# gnuplot script\nset datafile separator ','\nset key autotitle columnhead\n";
    for (const auto& l : plot_lines) os << l << '\n';
  }

  void write_manifest(int code, const std::string& error = "") {
    try {
      fs::create_directories(out);
      json m;
      m["tool"] = "ricci_lab";
      m["version"] = kVersion;
      m["command"] = command;
      m["seed"] = seed;
      m["threads"] = threads;
      m["config"] = config;
      if (!config_file.empty()) m["config_file"] = config_file;
      m["inputs"] = inputs;
      m["started"] = started;
      m["finished"] = now_utc();
      m["outputs"] = outputs;
      m["checks"] = checks;
      if (!notes.empty()) m["notes"] = notes;
      m["exit_code"] = code;
      if (!error.empty()) m["error"] = error;
      std::ofstream os(out / "manifest.json");
      os << m.dump(2) << '\n';
    } catch (const std::exception& e) {
      std::cerr << "could not write manifest: " << e.what() << '\n';
    }
  }
};

std::vector<double> parse_list(const std::string& s, std::size_t n, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      ricci::require(tok.find_first_not_of(" \t", used) == std::string::npos, "");
    } catch (const std::exception&) {
      throw ricci::Error(ricci::ErrorKind::InvalidInput, what + ": bad number '" + tok + "'");
    }
  }
  ricci::require(out.size() == n, what + " needs " + std::to_string(n) + " comma-separated values");
  return out;
}

/// Numbers from a text file separated by whitespace or commas.
std::vector<double> read_numbers(const fs::path& p) {
  std::ifstream in(p);
  require_file(in, p);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    std::stringstream ss(tok);
    std::string piece;
    while (std::getline(ss, piece, ',')) {
      if (piece.empty()) continue;
      try {
        out.push_back(std::stod(piece));
      } catch (const std::exception&) {
        throw ricci::Error(ricci::ErrorKind::InvalidInput, "non-numeric entry in " + p.string());
      }
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// homog

namespace {

struct HomogArgs {
  std::string geometry = "su2";
  std::string signature;
  std::string init = "1,1,1";
  double t_end = 1.0;
  bool normalized = false;
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
};

int cmd_homog(const HomogArgs& a, Run& run) {
  using namespace ricci::homogeneous;
  run.config = {{"geometry", a.geometry}, {"signature", a.signature}, {"init", a.init},  {"t_end", a.t_end},
                {"normalized", a.normalized}, {"rel_tol", a.rel_tol},  {"abs_tol", a.abs_tol}};
  MilnorSignature sig;
  if (a.geometry == "su2") sig = MilnorSignature::su2();
  else if (a.geometry == "nil") sig = MilnorSignature::nil();
  else if (a.geometry == "sol") sig = MilnorSignature::sol();
  else if (a.geometry == "abelian") sig = MilnorSignature::abelian();
  else {
    ricci::require(!a.signature.empty(), "custom geometry needs --signature l,m,n");
    const auto s = parse_list(a.signature, 3, "--signature");
    for (double v : s) ricci::require(v == std::round(v), "signature entries must be integers");
    sig = MilnorSignature::make(static_cast<int>(s[0]), static_cast<int>(s[1]), static_cast<int>(s[2]));
  }
  const auto v = parse_list(a.init, 3, "--init");
  const auto g0 = DiagonalMetric::make(v[0], v[1], v[2]);
  IntegratorConfig cfg;
  cfg.t_end = a.t_end;
  cfg.rel_tol = a.rel_tol;
  cfg.abs_tol = a.abs_tol;
  cfg.validate();
  const auto mode = a.normalized ? FlowMode::Normalized : FlowMode::Unnormalized;
  const auto traj = integrate(sig, g0, cfg, mode);

  {
    std::ofstream os(run.file("trajectory.csv"));
    ricci::io::write_header(os, {"t", "A", "B", "C", "R"});
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const auto& g = traj.states[k];
      ricci::io::write_row(os, {traj.times[k], g.A, g.B, g.C, ricci_diagonal(sig, g).scalar});
    }
  }
  run.plot_lines.push_back("set logscale y\nplot 'trajectory.csv' using 1:2 with lines, '' using 1:3 with lines, "
                           "'' using 1:4 with lines");
  if (traj.event) {
    std::cout << "singularity (" << traj.event->reason << ") at t = " << ricci::io::format_double(traj.event->time)
              << '\n';
    run.notes["singularity"] = {{"time", traj.event->time}, {"reason", traj.event->reason}};
  } else {
    std::cout << "reached t = " << ricci::io::format_double(traj.times.back()) << '\n';
  }

  if (sig == MilnorSignature::nil() && mode == FlowMode::Unnormalized) {
    double worst = 0;
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const auto exact = nil_closed_form(g0, traj.times[k]);
      for (int i = 0; i < 3; ++i)
        worst = std::max(worst, std::abs(traj.states[k][i] - exact[i]) / exact[i]);
    }
    run.check("nil_closed_form", worst <= 1e-6, {{"max_rel_error", worst}});
  }
  if (sig == MilnorSignature::sol() && mode == FlowMode::Unnormalized) {
    const auto red = sol_reduced(traj);
    const double ac0 = g0.A * g0.C;
    run.check("sol_ac_conserved", red.max_ac_drift / ac0 <= 1e-9, {{"max_rel_drift", red.max_ac_drift / ac0}});
  }
  if (sig == MilnorSignature::su2() && g0.A <= g0.C && g0.C <= g0.B) {
    const auto rep = su2_monotonicity(traj);
    run.check("su2_monotonicity", rep.pass(),
              {{"ordering_violations", rep.ordering_violations}, {"ratio_violations", rep.ratio_violations}});
  }
  if (sig == MilnorSignature::abelian()) {
    bool constant = true;
    for (const auto& g : traj.states) constant = constant && g.A == g0.A && g.B == g0.B && g.C == g0.C;
    run.check("abelian_constant", constant);
  }
  return run.all_pass() ? kPass : kViolation;
}

}  // namespace

// ---------------------------------------------------------------------------
// surface

namespace {

struct SurfaceArgs {
  std::string background = "sphere";
  int grid = 64;
  std::string init = "0";
  std::string init_file;
  double t_end = 5.0;
  double output_interval = 0.05;
  std::string checks = "gauss-bonnet,max-principle";
  int harnack_pairs = 100;
};

std::vector<std::string> split_checks(const std::string& s) {
  static const std::vector<std::string> all{"gauss-bonnet", "entropy", "harnack", "max-principle", "soliton"};
  if (s == "all") return all;
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    ricci::require(std::find(all.begin(), all.end(), tok) != all.end(), "unknown check '" + tok + "'");
    out.push_back(tok);
  }
  return out;
}

int cmd_surface(const SurfaceArgs& a, Run& run) {
  using namespace ricci::surface;
  run.config = {{"background", a.background}, {"grid", a.grid},       {"init", a.init},
                {"init_file", a.init_file},   {"t_end", a.t_end},     {"output_interval", a.output_interval},
                {"checks", a.checks},         {"harnack_pairs", a.harnack_pairs}};
  const auto checks = split_checks(a.checks);
  ricci::require(a.background == "torus" || a.background == "sphere", "background must be torus or sphere");
  const bool torus = a.background == "torus";
  const auto bg = torus ? Background::flat_torus(a.grid) : Background::round_sphere_zonal(a.grid);
  ConformalState s0;
  if (!a.init_file.empty()) {
    run.inputs[a.init_file] = sha256_file(a.init_file);
    s0 = ConformalState::make(bg, read_numbers(a.init_file));
  } else if (a.init == "0") {
    s0 = ConformalState::make(bg, Field(bg->size(), 0.0));
  } else {
    const auto expr = ricci::init::parse(a.init, torus ? std::vector<std::string>{"x", "y"}
                                                       : std::vector<std::string>{"theta"});
    for (const auto& v : expr.variables())
      ricci::require(torus ? (v == "x" || v == "y") : v == "theta", "variable '" + v + "' is not defined here");
    s0 = ConformalState::from_function(bg, [&](double p, double q) {
      return torus ? expr({{"x", p}, {"y", q}}) : expr({{"theta", p}});
    });
  }
  SurfaceFlowConfig cfg;
  cfg.t_end = a.t_end;
  cfg.output_interval = a.output_interval;
  cfg.validate();
  const auto traj = evolve(s0, cfg);

  {
    std::ofstream os(run.file("diagnostics.csv"));
    write_diagnostics_csv(os, traj);
  }
  {
    std::ofstream os(run.file("snapshot_initial.csv"));
    write_snapshot_csv(os, traj.state(0));
  }
  {
    std::ofstream os(run.file("snapshot_final.csv"));
    write_snapshot_csv(os, traj.state(traj.size() - 1));
  }
  run.plot_lines.push_back("plot 'diagnostics.csv' using 1:4 with lines, '' using 1:5 with lines");

  const auto& diag = traj.diagnostics;
  const double chi = bg->euler_characteristic();
  for (const auto& c : checks) {
    if (c == "gauss-bonnet") {
      const double tol = torus ? 1e-8 : 1e-6;
      double gb = 0, drift = 0;
      for (const auto& d : diag) {
        gb = std::max(gb, std::abs(d.gauss_bonnet - 4 * M_PI * chi));
        drift = std::max(drift, std::abs(d.area - diag.front().area) / diag.front().area);
      }
      run.check("gauss_bonnet", gb <= tol && drift <= 1e-6, {{"max_error", gb}, {"max_area_drift", drift}});
    } else if (c == "entropy") {
      bool ok = true;
      for (const auto& d : diag) ok = ok && d.entropy.has_value();
      if (!ok) {
        run.skip("entropy", "R is not positive at every sample");
        continue;
      }
      double worst = 0;
      for (std::size_t k = 1; k < diag.size(); ++k) worst = std::max(worst, *diag[k].entropy - *diag[k - 1].entropy);
      run.check("entropy_monotone", worst <= 1e-8, {{"max_increase", worst}});
    } else if (c == "harnack") {
      if (torus || !(diag.front().r > 0)) {
        run.skip("harnack", "needs the sphere");
        continue;
      }
      std::vector<HarnackPair> pairs;
      const double t0 = traj.times.front(), t1 = traj.times.back();
      for (int i = 0; i < a.harnack_pairs; ++i) {
        ricci::rng::Stream s(ricci::rng::derive_seed(ricci::rng::derive_seed(run.seed, 1), static_cast<std::uint64_t>(i)));
        const double tau = s.uniform(t0 + 0.01 * (t1 - t0), t1 - 0.01 * (t1 - t0));
        const double T = s.uniform(tau + 1e-3 * (t1 - t0), t1);
        pairs.push_back({{s.uniform(0, M_PI), tau}, {s.uniform(0, M_PI), T}});
      }
      try {
        const auto rep = harnack_check(traj, pairs);
        std::ofstream os(run.file("harnack.csv"));
        ricci::io::write_header(os, {"xi", "tau", "X", "T", "distance", "slack"});
        for (std::size_t i = 0; i < pairs.size(); ++i)
          ricci::io::write_row(os, {pairs[i].early.x, pairs[i].early.t, pairs[i].late.x, pairs[i].late.t,
                                    rep.distance[i], rep.slack[i]});
        run.check("harnack", rep.violations == 0, {{"pairs", pairs.size()}, {"worst_slack", rep.worst_slack}});
      } catch (const ricci::Error& e) {
        if (e.kind() != ricci::ErrorKind::Inapplicable) throw;
        run.skip("harnack", e.what());
      }
    } else if (c == "max-principle") {
      std::vector<double> t, lo, hi;
      for (const auto& d : diag) {
        t.push_back(d.t);
        lo.push_back(d.Rmin);
        hi.push_back(d.Rmax);
      }
      const double r = diag.front().r;
      const auto lower = ricci::maxp::verify_scalar_bound(t, lo, ricci::maxp::logistic_comparison(r, lo.front()),
                                                          ricci::maxp::BoundDirection::Lower);
      const auto upper = ricci::maxp::verify_scalar_bound(t, hi, ricci::maxp::logistic_comparison(r, hi.front()),
                                                          ricci::maxp::BoundDirection::Upper);
      run.check("max_principle", lower.pass && upper.pass,
                {{"lower_violations", lower.violations}, {"upper_violations", upper.violations},
                 {"lower_worst", lower.worst_violation}, {"upper_worst", upper.worst_violation}});
    } else if (c == "soliton") {
      run.check("soliton", diag.back().M_norm <= 1e-3, {{"final_M_norm", diag.back().M_norm}});
    }
  }
  return run.all_pass() ? kPass : kViolation;
}

}  // namespace

// ---------------------------------------------------------------------------
// symbol, pinch

namespace {

struct SymbolArgs {
  std::vector<int> n{2, 3, 4, 5};
  int trials = 100;
};

int cmd_symbol(const SymbolArgs& a, Run& run) {
  run.config = {{"n", a.n}, {"trials", a.trials}};
  for (int n : a.n) ricci::require(n >= 2 && n <= 5, "--n must lie in 2..5");
  ricci::require(a.trials > 0, "--trials must be positive");
  std::vector<ricci::symbol::SymbolSuiteReport> reps;
  for (int n : a.n) reps.push_back(ricci::symbol::symbol_suite(n, a.trials, ricci::rng::derive_seed(run.seed, n)));
  {
    std::ofstream os(run.file("symbol_suite.csv"));
    ricci::symbol::write_suite_csv(os, reps);
  }
  for (const auto& r : reps) {
    std::cout << "n = " << r.n << ": kernel_dim_mode = " << r.kernel_dim_mode << '\n';
    run.check("symbol_n" + std::to_string(r.n), r.pass(),
              {{"kernel_dim_mode", r.kernel_dim_mode},
               {"kernel_dim_mismatches", r.kernel_dim_mismatches},
               {"max_composition_residual", r.max_composition_residual},
               {"max_deturck_residual", r.max_deturck_residual},
               {"max_lichnerowicz_residual", r.max_lichnerowicz_residual}});
  }
  return run.all_pass() ? kPass : kViolation;
}

struct PinchArgs {
  int trials = 100000;
  double eps = 0.1;
};

int cmd_pinch(const PinchArgs& a, Run& run) {
  using namespace ricci::maxp;
  run.config = {{"trials", a.trials}, {"eps", a.eps}};
  ricci::require(a.trials > 0, "--trials must be positive");
  ricci::require(a.eps > 0 && a.eps <= 1.0 / 3.0, "--eps must lie in (0, 1/3]");
  const auto n = static_cast<std::size_t>(a.trials);
  std::vector<CheckReport> reps{
      p_identity_check(uniform_triples(n, 10.0, ricci::rng::derive_seed(run.seed, 1))),
      p_lower_bound_check(pinched_triples(n, a.eps, ricci::rng::derive_seed(run.seed, 2)), a.eps),
      null_vector_condition_check(null_vector_samples(n, a.eps, ricci::rng::derive_seed(run.seed, 3)), a.eps)};
  {
    std::ofstream os(run.file("pinch_reports.csv"));
    write_reports_csv(os, reps);
  }
  for (const auto& r : reps)
    run.check(r.check, r.pass(), {{"samples", r.samples}, {"violations", r.violations}, {"worst_slack", r.worst_slack}});
  return run.all_pass() ? kPass : kViolation;
}

}  // namespace

// ---------------------------------------------------------------------------
// kahler

namespace {

struct KahlerArgs {
  int dim = 1;
  int grid = 64;
  std::string f = "0.2*cos(x)";
  std::string mode = "ricci-flat";
  double t_end = 60.0;
  double output_interval = 0.5;
  double steady_tol = 0.0;
};

int cmd_kahler(const KahlerArgs& a, Run& run) {
  using namespace ricci::kahler;
  run.config = {{"dim", a.dim},   {"grid", a.grid},   {"f", a.f},
                {"mode", a.mode}, {"t_end", a.t_end}, {"output_interval", a.output_interval},
                {"steady_tol", a.steady_tol}};
  ricci::require(a.mode == "ricci-flat" || a.mode == "negative", "--mode must be ricci-flat or negative");
  const auto mode = a.mode == "ricci-flat" ? KahlerMode::RicciFlat : KahlerMode::Negative;
  auto grid = std::make_shared<const ComplexTorusGrid>(a.dim, a.grid);
  const auto vars = a.dim == 1 ? std::vector<std::string>{"x", "y"}
                               : std::vector<std::string>{"x1", "y1", "x2", "y2"};
  const auto expr = ricci::init::parse(a.f, vars);
  for (const auto& v : expr.variables()) {
    const bool ok = a.dim == 1 ? (v == "x" || v == "y") : (v != "theta");
    ricci::require(ok, "variable '" + v + "' is not defined for this dimension");
  }
  const Field f = grid->real().sample([&](const std::array<double, 4>& x) {
    if (a.dim == 1) return expr({{"x", x[0]}, {"y", x[1]}});
    // x and y alias the first complex coordinate.
    return expr({{"x", x[0]}, {"y", x[1]}, {"x1", x[0]}, {"y1", x[1]}, {"x2", x[2]}, {"y2", x[3]}});
  });
  const auto s0 = PotentialState::make(grid, Eigen::MatrixXcd::Identity(a.dim, a.dim), f, {}, mode);
  KahlerFlowConfig cfg;
  cfg.t_end = a.t_end;
  cfg.output_interval = a.output_interval;
  cfg.steady_tol = a.steady_tol;
  const auto traj = evolve(s0, cfg);
  const auto newton = stationary_newton(grid, s0.g0, s0.f, mode);
  const std::size_t last = traj.size() - 1;

  {
    std::ofstream os(run.file("monitors.csv"));
    write_monitors_csv(os, traj);
  }
  {
    std::ofstream os(run.file("potential_final.csv"));
    write_potential_csv(os, *grid, traj.v(last));
  }
  {
    std::ofstream os(run.file("potential_newton.csv"));
    Field u = newton.u;
    const double m = grid->real().mean(u);
    for (double& x : u) x -= m;
    write_potential_csv(os, *grid, u);
  }
  run.plot_lines.push_back("set logscale y\nplot 'monitors.csv' using 1:3 with lines, '' using 1:4 with lines");

  const auto& mon = traj.monitors;
  double fmax = 0;
  for (double x : s0.f) fmax = std::max(fmax, std::abs(x));
  double dudt = 0, trace_min = INFINITY, osc_inc = 0, e_inc = 0, vol = 0;
  for (std::size_t k = 0; k < mon.size(); ++k) {
    dudt = std::max(dudt, mon[k].max_dudt);
    trace_min = std::min(trace_min, mon[k].trace_min);
    vol = std::max(vol, mon[k].volume_identity);
    if (k > 0 && mon[k - 1].t >= 1.0) {
      osc_inc = std::max(osc_inc, mon[k].osc - mon[k - 1].osc);
      e_inc = std::max(e_inc, mon[k].energy - mon[k - 1].energy * (1 + 1e-9));
    }
  }
  const Field vf = traj.v(last);
  const double mn = grid->real().mean(newton.u);
  double agree = 0;
  for (std::size_t p = 0; p < vf.size(); ++p) {
    // Negative mode fixes the constant, so no mean alignment there.
    const double un = mode == KahlerMode::RicciFlat ? newton.u[p] - mn : newton.u[p];
    const double uf = mode == KahlerMode::RicciFlat ? vf[p] : traj.u[last][p];
    agree = std::max(agree, std::abs(uf - un));
  }
  const double residual = ricci_form_residual(traj.state(last));
  const double residual_bar = a.dim == 1 ? 1e-6 : 1e-5;
  std::cout << "flow/newton agreement " << ricci::io::format_double(agree) << '\n';
  run.notes["flow_newton_agreement"] = agree;
  run.notes["newton_residual"] = newton.residual;
  run.notes["final_time"] = traj.times.back();
  run.notes["stopped_steady"] = traj.stopped_steady;
  if (mode == KahlerMode::RicciFlat) run.check("max_dudt_bound", dudt <= fmax + 1e-10, {{"max_dudt", dudt}, {"max_f", fmax}});
  run.check("trace_positive", trace_min > 0, {{"min", trace_min}});
  run.check("volume_identity", vol <= 1e-10, {{"max", vol}});
  run.check("osc_energy_monotone", osc_inc <= 1e-12 && e_inc <= 1e-24,
            {{"max_osc_increase", osc_inc}, {"max_energy_increase", e_inc}});
  run.check("flow_newton_agreement", agree <= 1e-6, {{"sup_distance", agree}});
  run.check("ricci_form_residual", residual <= residual_bar, {{"residual", residual}, {"bar", residual_bar}});
  return run.all_pass() ? kPass : kViolation;
}

}  // namespace

// ---------------------------------------------------------------------------
// verify

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  const std::vector<double> column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    ricci::require(it != header.end(), "CSV has no column '" + name + "'");
    const auto j = static_cast<std::size_t>(it - header.begin());
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r.at(j));
    return out;
  }
};

Table read_csv(const fs::path& p) {
  std::ifstream in(p);
  require_file(in, p);
  Table t;
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  ricci::require(static_cast<bool>(std::getline(in, line)), "empty CSV");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& c : split(line)) {
      try {
        row.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw ricci::Error(ricci::ErrorKind::InvalidInput, "non-numeric CSV cell '" + c + "'");
      }
    }
    ricci::require(row.size() == t.header.size(), "ragged CSV row");
    t.rows.push_back(std::move(row));
  }
  ricci::require(!t.rows.empty(), "CSV has no data rows");
  return t;
}

double max_increase(const std::vector<double>& v, const std::vector<double>& t, double t_from) {
  double worst = -INFINITY;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (t[k - 1] >= t_from) worst = std::max(worst, v[k] - v[k - 1]);
  return worst;
}

int cmd_verify(const std::string& csv, const std::string& check, Run& run) {
  run.config = {{"csv", csv}, {"check", check}};
  run.inputs[csv] = sha256_file(csv);
  const auto t = read_csv(csv);
  const auto time = t.column("t");
  if (check == "gauss-bonnet") {
    const auto gb = t.column("gauss_bonnet"), r = t.column("r"), area = t.column("area");
    double worst = 0;
    for (std::size_t k = 0; k < gb.size(); ++k) worst = std::max(worst, std::abs(gb[k] - r[k] * area[k]));
    run.check(check, worst <= 1e-6, {{"max_error", worst}});
  } else if (check == "area") {
    const auto area = t.column("area");
    double worst = 0;
    for (double x : area) worst = std::max(worst, std::abs(x - area.front()) / area.front());
    run.check(check, worst <= 1e-6, {{"max_drift", worst}});
  } else if (check == "entropy") {
    const double inc = max_increase(t.column("entropy"), time, -INFINITY);
    run.check(check, inc <= 1e-8, {{"max_increase", inc}});
  } else if (check == "osc") {
    const double inc = max_increase(t.column("osc"), time, 1.0);
    run.check(check, inc <= 1e-12, {{"max_increase", inc}});
  } else if (check == "energy") {
    const auto e = t.column("E");
    double inc = -INFINITY;
    for (std::size_t k = 1; k < e.size(); ++k)
      if (time[k - 1] >= 1.0) inc = std::max(inc, e[k] - e[k - 1] * (1 + 1e-9));
    run.check(check, inc <= 1e-24, {{"max_increase", inc}});
  } else if (check == "trace-positive") {
    const auto tr = t.column("trace_min");
    run.check(check, *std::min_element(tr.begin(), tr.end()) > 0);
  } else if (check == "nil-closed-form") {
    const auto A = t.column("A"), B = t.column("B"), C = t.column("C");
    const ricci::homogeneous::DiagonalMetric g0{A[0], B[0], C[0]};
    double worst = 0;
    for (std::size_t k = 0; k < A.size(); ++k) {
      const auto e = ricci::homogeneous::nil_closed_form(g0, time[k]);
      worst = std::max({worst, std::abs(A[k] - e.A) / e.A, std::abs(B[k] - e.B) / e.B, std::abs(C[k] - e.C) / e.C});
    }
    run.check(check, worst <= 1e-6, {{"max_rel_error", worst}});
  } else {
    throw ricci::Error(ricci::ErrorKind::InvalidInput, "unknown check '" + check + "'");
  }
  return run.all_pass() ? kPass : kViolation;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config files: "key = value" lines with '#' comments, read as if the
// corresponding --key flags had been written right after the subcommand.

namespace {

std::vector<std::string> config_tokens(const fs::path& p) {
  std::ifstream in(p);
  require_file(in, p);
  std::vector<std::string> out;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ricci::Error(ricci::ErrorKind::InvalidInput,
                         p.string() + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (value == "true") {
      out.push_back("--" + key);
    } else if (value != "false") {
      out.push_back("--" + key);
      out.push_back(value);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ricci flow laboratory"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Run run;
  auto common = [&](CLI::App* sub) {
    sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    sub->add_option("--out", run.out, "output directory");
    sub->add_option("--seed", run.seed, "64-bit seed");
    sub->add_option("--threads", run.threads, "worker threads (0 = all)");
    sub->add_option("--config", run.config_file, "key = value config file");
  };

  HomogArgs ha;
  auto* homog = app.add_subcommand("homog", "homogeneous 3-geometries");
  common(homog);
  homog->add_option("--geometry", ha.geometry)->check(CLI::IsMember({"su2", "nil", "sol", "abelian", "custom"}));
  homog->add_option("--signature", ha.signature, "l,m,n for custom geometry");
  homog->add_option("--init", ha.init, "A,B,C");
  homog->add_option("--t-end", ha.t_end)->check(CLI::PositiveNumber);
  homog->add_flag("--normalized", ha.normalized);
  homog->add_option("--rel-tol", ha.rel_tol)->check(CLI::PositiveNumber);
  homog->add_option("--abs-tol", ha.abs_tol)->check(CLI::PositiveNumber);

  SurfaceArgs sa;
  auto* surface = app.add_subcommand("surface", "conformal flow on the torus or the sphere");
  common(surface);
  surface->add_option("--background", sa.background)->check(CLI::IsMember({"torus", "sphere"}));
  surface->add_option("--grid", sa.grid);
  surface->add_option("--init", sa.init, "expression or a,k[,l] list");
  surface->add_option("--init-file", sa.init_file, "one value per grid node");
  surface->add_option("--t-end", sa.t_end)->check(CLI::PositiveNumber);
  surface->add_option("--output-interval", sa.output_interval)->check(CLI::PositiveNumber);
  surface->add_option("--checks", sa.checks, "comma list or 'all'");
  surface->add_option("--harnack-pairs", sa.harnack_pairs)->check(CLI::PositiveNumber);

  SymbolArgs ya;
  auto* symbol = app.add_subcommand("symbol", "principal symbol suite");
  common(symbol);
  symbol->add_option("--n", ya.n)->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  symbol->add_option("--trials", ya.trials);

  PinchArgs pa;
  auto* pinch = app.add_subcommand("pinch", "eigenvalue algebra for pinching");
  common(pinch);
  pinch->add_option("--trials", pa.trials);
  pinch->add_option("--eps", pa.eps);

  KahlerArgs ka;
  auto* kahler = app.add_subcommand("kahler", "Kahler-Ricci flow on flat complex tori");
  common(kahler);
  kahler->add_option("--dim", ka.dim)->check(CLI::IsMember({1, 2}));
  kahler->add_option("--grid", ka.grid);
  kahler->add_option("--f", ka.f, "data expression");
  kahler->add_option("--mode", ka.mode)->check(CLI::IsMember({"ricci-flat", "negative"}));
  kahler->add_option("--t-end", ka.t_end)->check(CLI::PositiveNumber);
  kahler->add_option("--output-interval", ka.output_interval)->check(CLI::PositiveNumber);
  kahler->add_option("--steady-tol", ka.steady_tol)->check(CLI::NonNegativeNumber);

  std::string verify_csv, verify_check;
  auto* verify = app.add_subcommand("verify", "re-check a CSV written by an earlier run");
  common(verify);
  verify->add_option("csv", verify_csv)->required();
  verify->add_option("--check", verify_check)->required();

  // Splice config-file entries in front of the command-line flags so that flags win.
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config_path;
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--config") config_path = args[i + 1];
  // A run that dies in argument parsing still leaves a manifest when --out was given.
  auto record_early_failure = [&](const std::string& error) {
    const std::vector<std::string> raw(argv + 1, argv + argc);
    for (std::size_t i = 0; i + 1 < raw.size(); ++i)
      if (raw[i] == "--out") run.out = raw[i + 1];
    if (run.out == fs::path(".")) return;
    if (!raw.empty()) run.command = raw.front();
    run.write_manifest(kBadInput, error);
  };
  try {
    if (!config_path.empty() && !args.empty()) {
      run.inputs[config_path] = sha256_file(config_path);
      const auto extra = config_tokens(config_path);
      args.insert(args.begin() + 1, extra.begin(), extra.end());
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return kPass;
    record_early_failure(e.what());
    return kBadInput;
  } catch (const ricci::Error& e) {
    std::cerr << e.what() << '\n';
    record_early_failure(e.what());
    return kBadInput;
  }

  CLI::App* sub = app.get_subcommands().front();
  run.command = sub->get_name();
  ricci::default_thread_count() = run.threads;
  int code = kPass;
  std::string error;
  try {
    if (sub == homog) code = cmd_homog(ha, run);
    else if (sub == surface) code = cmd_surface(sa, run);
    else if (sub == symbol) code = cmd_symbol(ya, run);
    else if (sub == pinch) code = cmd_pinch(pa, run);
    else if (sub == kahler) code = cmd_kahler(ka, run);
    else code = cmd_verify(verify_csv, verify_check, run);
  } catch (const ricci::Error& e) {
    error = e.what();
    code = e.kind() == ricci::ErrorKind::InvalidInput ? kBadInput : kNumerical;
    std::cerr << error << '\n';
  } catch (const std::exception& e) {
    error = e.what();
    code = kNumerical;
    std::cerr << error << '\n';
  }
  run.write_plot();
  run.write_manifest(code, error);
  return code;
}
