// Command-line front end. Results go to stdout as JSON unless --out is given;
// every file output is accompanied by <out>.manifest.json.
//
// Exit codes: 0 success, 2 invalid input, 3 numerical failure (no convergence,
// singular best-response row, no stable starting gain).

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oligo/l2_analysis.hpp"
#include "oligo/l2_closed_form.hpp"
#include "oligo/lti_core.hpp"
#include "oligo/matrix_io.hpp"
#include "oligo/mc_simulator.hpp"
#include "oligo/mpe_fixed_point.hpp"
#include "oligo/operator_opt.hpp"
#include "oligo/pareto_synthesis.hpp"
#include "oligo/version.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace oligo;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitNumerical = 3;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::NotConverged:
    case ErrorKind::SingularRow:
    case ErrorKind::NoStableInit:
      return kExitNumerical;
    default:
      return kExitInvalid;
  }
}

[[noreturn]] void invalid(const std::string& what) { fail(ErrorKind::InvalidParams, what); }

// ---------------------------------------------------------------- json input

json load_json(const std::string& arg, const std::string& what) {
  const auto first = arg.find_first_not_of(" \t\r\n");
  try {
    if (first != std::string::npos && (arg[first] == '{' || arg[first] == '[')) return json::parse(arg);
    std::ifstream in(arg);
    if (!in) invalid(what + ": '" + arg + "' is neither inline JSON nor a readable file");
    return json::parse(in);
  } catch (const json::exception& e) {
    invalid(what + ": " + e.what());
  }
}

void check_keys(const json& j, const std::string& what, const std::set<std::string>& allowed,
                const std::set<std::string>& required) {
  if (!j.is_object()) invalid(what + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) invalid(what + ": unknown key '" + k + "'");
  for (const auto& k : required)
    if (!j.contains(k)) invalid(what + ": missing key '" + k + "'");
}

template <class T>
T get(const json& j, const std::string& key, const std::string& what) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    invalid(what + ": key '" + key + "' has the wrong type");
  }
}

MarketParamsL2 parse_params(const std::string& arg) {
  const json j = load_json(arg, "params");
  const std::set<std::string> keys{"q1", "q2", "mu1", "mu2", "sigma1", "sigma2"};
  check_keys(j, "params", keys, keys);
  MarketParamsL2 p;
  p.q1 = get<double>(j, "q1", "params");
  p.q2 = get<double>(j, "q2", "params");
  p.mu1 = get<double>(j, "mu1", "params");
  p.mu2 = get<double>(j, "mu2", "params");
  p.sigma1 = get<double>(j, "sigma1", "params");
  p.sigma2 = get<double>(j, "sigma2", "params");
  p.validate();
  return p;
}

Eigen::VectorXd to_vector(const json& j, const std::string& what) {
  if (!j.is_array()) invalid(what + " must be an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) invalid(what + " must be an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

double parse_number(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    invalid(what + ": '" + s + "' is not a number");
  }
  if (used != s.size()) invalid(what + ": '" + s + "' is not a number");
  return v;
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(parse_number(cell, what));
  return out;
}

int infer_L(Eigen::Index Dc) {
  for (int L = 1; L * (L + 1) / 2 <= Dc; ++L)
    if (L * (L + 1) / 2 == Dc) return L;
  invalid("dimension " + std::to_string(Dc) + " is not L(L+1)/2 for any L");
}

std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t flag_value, std::uint64_t config_value) {
  if (flag->count()) return flag_value;
  if (const char* env = std::getenv("OLIGO_SEED")) {
    const std::string s(env);
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::exception&) {
      invalid("OLIGO_SEED='" + s + "' is not an unsigned integer");
    }
    if (used != s.size() || s.front() == '-') invalid("OLIGO_SEED='" + s + "' is not an unsigned integer");
    return v;
  }
  return config_value;
}

// --------------------------------------------------------------- json output

json matrix_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(r);
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json strategy_json(const LinearStrategyL2& s) { return {{"a", s.a}, {"b", s.b}, {"g", s.g}}; }

json estimate_json(const Estimate& e) { return {{"value", e.value}, {"se", e.se}}; }

json cell_json(const ConditionalCell& c) {
  return {{"count", c.count}, {"spikes", c.spikes}, {"prob", c.prob}, {"se", c.se}};
}

json path_stats_json(const PathStats& st) {
  json j{{"samples", st.samples},
         {"mean_u", estimate_json(st.mean_u)},
         {"second_u", estimate_json(st.second_u)},
         {"var_u", estimate_json(st.var_u)},
         {"mean_x", estimate_json(st.mean_x)},
         {"second_x", estimate_json(st.second_x)},
         {"var_x", estimate_json(st.var_x)},
         {"max_conservation_error", st.max_conservation_error}};
  json q = json::array(), t = json::array();
  for (const auto& [lv, e] : st.quantiles) q.push_back({{"level", lv}, {"value", e.value}, {"se", e.se}});
  for (const auto& [M, e] : st.tail_probs) t.push_back({{"threshold", M}, {"value", e.value}, {"se", e.se}});
  j["quantiles"] = q;
  j["tail_probs"] = t;
  if (st.conditional) {
    const auto& c = *st.conditional;
    j["conditional"] = {{"threshold", c.threshold}, {"x_median", c.x_median}, {"absent", cell_json(c.absent)},
                        {"present", cell_json(c.present)}, {"x_high", cell_json(c.x_high)},
                        {"x_low", cell_json(c.x_low)}};
  }
  return j;
}

// ------------------------------------------------------------------ outputs

struct Run {
  std::vector<std::string> argv;
  json config = json::object();
  std::optional<std::uint64_t> seed;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

void write_output(Run& run, const std::string& path, const std::string& content) {
  write_file_atomic(path, content);
  run.outputs.push_back(path);
}

void write_manifest(const Run& run, const std::string& base) {
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - run.start).count();
  json m{{"command", run.argv},
         {"config", run.config},
         {"version", kVersion},
         {"seed", run.seed ? json(*run.seed) : json(nullptr)},
         {"wall_clock_seconds", wall},
         {"outputs", run.outputs}};
  write_file_atomic(base + ".manifest.json", m.dump(2) + "\n");
}

void emit(Run& run, const json& result, const std::string& out) {
  if (out.empty()) {
    std::cout << result.dump(2) << "\n";
    return;
  }
  write_output(run, out, result.dump(2) + "\n");
  write_manifest(run, out);
}

// --------------------------------------------------------------- strategies

struct ArchSpec {
  std::string name;
  LinearStrategyL2 strategy;
};

ArchSpec resolve_arch(const std::string& arch, const MarketParamsL2& p, const std::string& rs_constant) {
  const auto colon = arch.find(':');
  const std::string head = arch.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : arch.substr(colon + 1);
  auto no_arg = [&] {
    if (colon != std::string::npos) invalid("--arch " + head + " takes no argument");
  };
  if (head == "nc") return no_arg(), ArchSpec{arch, mpe_strategy(p)};
  if (head == "coop") return no_arg(), ArchSpec{arch, coop_strategy(p)};
  if (head == "naive") return no_arg(), ArchSpec{arch, baseline_strategies()[0]};
  if (head == "none") return no_arg(), ArchSpec{arch, baseline_strategies()[1]};
  if (head == "k") {
    const double K = parse_number(arg, "--arch k:<K>");
    if (K < 1 || K != std::floor(K) || K > 9e18) invalid("--arch k:<K> needs an integer K >= 1");
    return {arch, k_agent_strategy(p, static_cast<long long>(K))};
  }
  if (head == "rs") {
    const auto v = parse_list(arg, "--arch rs:<theta>,<beta>");
    if (v.size() != 2) invalid("--arch rs:<theta>,<beta> needs two numbers");
    if (rs_constant != "single" && rs_constant != "doubled") invalid("--rs-constant must be single or doubled");
    const auto variant = rs_constant == "single" ? RiskConstantTerm::SingleMean : RiskConstantTerm::DoubledMean;
    return {arch, risk_sensitive_strategy(p, {v[0], v[1]}, variant)};
  }
  if (head == "cong") return {arch, congestion_strategy(p, parse_number(arg, "--arch cong:<gamma>"))};
  invalid("unknown --arch '" + arch + "' (nc|coop|k:<K>|rs:<theta>,<beta>|cong:<gamma>|naive|none)");
}

SimConfig parse_sim_config(const std::string& arg, json& resolved) {
  SimConfig c;
  if (!arg.empty()) {
    const json j = load_json(arg, "config");
    check_keys(j, "config",
               {"horizon", "burn_in", "replications", "seed", "nonneg_demand", "tail_thresholds", "quantile_levels",
                "batches", "spike_sd", "spike_threshold"},
               {});
    if (j.contains("horizon")) c.horizon = get<long long>(j, "horizon", "config");
    if (j.contains("burn_in")) c.burn_in = get<long long>(j, "burn_in", "config");
    if (j.contains("replications")) c.replications = get<int>(j, "replications", "config");
    if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed", "config");
    if (j.contains("nonneg_demand")) c.nonneg_demand = get<bool>(j, "nonneg_demand", "config");
    if (j.contains("tail_thresholds")) c.tail_thresholds = get<std::vector<double>>(j, "tail_thresholds", "config");
    if (j.contains("quantile_levels")) c.quantile_levels = get<std::vector<double>>(j, "quantile_levels", "config");
    if (j.contains("batches")) c.batches = get<int>(j, "batches", "config");
    if (j.contains("spike_sd") && j.contains("spike_threshold"))
      invalid("config: spike_sd and spike_threshold are mutually exclusive");
    if (j.contains("spike_sd")) c.spike_policy = ThresholdPolicy::sd_multiple(get<double>(j, "spike_sd", "config"));
    if (j.contains("spike_threshold"))
      c.spike_policy = ThresholdPolicy::absolute(get<double>(j, "spike_threshold", "config"));
  }
  resolved = {{"horizon", c.horizon},
              {"burn_in", c.burn_in},
              {"replications", c.replications},
              {"nonneg_demand", c.nonneg_demand},
              {"tail_thresholds", c.tail_thresholds},
              {"quantile_levels", c.quantile_levels},
              {"batches", c.batches}};
  if (c.spike_policy) {
    const bool sd = c.spike_policy->kind == ThresholdPolicy::Kind::SdMultiple;
    resolved[sd ? "spike_sd" : "spike_threshold"] = c.spike_policy->value;
  }
  return c;
}

std::vector<OutputWeights> parse_grid(const std::string& arg) {
  const json j = load_json(arg, "grid");
  if (!j.is_array() || j.empty()) invalid("grid must be a non-empty array of [alpha1, alpha2, alpha3] triples");
  std::vector<OutputWeights> grid;
  for (const auto& t : j) {
    if (!t.is_array() || t.size() != 3 || !t[0].is_number() || !t[1].is_number() || !t[2].is_number())
      invalid("grid must be a non-empty array of [alpha1, alpha2, alpha3] triples");
    grid.push_back(OutputWeights::normalized(t[0].get<double>(), t[1].get<double>(), t[2].get<double>()));
  }
  return grid;
}

SweepMode parse_mode(const std::string& s) {
  if (s == "jacobi") return SweepMode::Jacobi;
  if (s == "gs" || s == "gauss-seidel") return SweepMode::GaussSeidel;
  invalid("--mode must be jacobi or gs");
}

}  // namespace

int main(int argc, char** argv) {
  Run run;
  run.argv.assign(argv, argv + argc);

  CLI::App app{"Dynamic oligopoly demand scheduling: closed forms, simulation and synthesis"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "parallelism cap; results do not depend on it")->check(CLI::PositiveNumber);

  auto* l2 = app.add_subcommand("l2", "two-type market");
  auto* lti = app.add_subcommand("lti", "general-L linear surrogate");
  l2->require_subcommand(1);
  lti->require_subcommand(1);
  for (auto* s : {l2, lti}) s->fallthrough();

  std::string arch = "nc", params, rs_constant = "single", out, config, series, gain, alpha, pricing, grid,
              mode = "jacobi", init = "even", gain_out;
  double threshold = 0.0;
  int L = 0, max_iter = 0, budget = 0, restarts = -1;
  double tol = 0.0, damping = 0.0, tol_grad = 0.0, alpha1 = 1.0, alpha2 = 1.0;
  std::uint64_t seed = 1;

  auto add_strategy_opts = [&](CLI::App* c) {
    c->add_option("--arch", arch, "nc|coop|k:<K>|rs:<theta>,<beta>|cong:<gamma>|naive|none")->required();
    c->add_option("--params", params, "params JSON (inline or file)")->required();
    c->add_option("--rs-constant", rs_constant, "risk-sensitive constant term: single|doubled");
    c->fallthrough();
  };

  auto* strategy = l2->add_subcommand("strategy", "print the linear strategy {a, b, g}");
  add_strategy_opts(strategy);
  strategy->add_option("--out", out);

  auto* metrics = l2->add_subcommand("metrics", "stationary moments, efficiency and risk bound");
  add_strategy_opts(metrics);
  auto* threshold_opt = metrics->add_option("--threshold", threshold, "demand level M for the risk bound");
  metrics->add_option("--out", out);

  auto* simulate = l2->add_subcommand("simulate", "Monte Carlo path statistics");
  add_strategy_opts(simulate);
  simulate->add_option("--config", config, "simulation config JSON (inline or file)");
  auto* sim_seed = simulate->add_option("--seed", seed);
  simulate->add_option("--out", out, "PathStats JSON");
  simulate->add_option("--series", series, "per-period series CSV");

  auto* build = lti->add_subcommand("build", "state-space matrices R1, R2");
  build->add_option("--L", L)->required()->check(CLI::PositiveNumber);
  build->add_option("--out", out, "prefix for <out>.R1.csv and <out>.R2.csv");

  auto* h2 = lti->add_subcommand("h2", "H2 report of a gain");
  h2->add_option("--gain", gain, "gain matrix CSV")->required();
  h2->add_option("--alpha", alpha, "a1,a2,a3 (normalized to unit length)")->required();
  h2->add_option("--out", out);

  auto* mpe = lti->add_subcommand("mpe", "Markov perfect equilibrium by fixed-point iteration");
  mpe->add_option("--pricing", pricing, "{\"q1\": [...], \"q2\": [...]} or 'marginal-cost' with --L")->required();
  mpe->add_option("--L", L)->check(CLI::PositiveNumber);
  auto* tol_opt = mpe->add_option("--tol", tol);
  auto* iter_opt = mpe->add_option("--max-iter", max_iter);
  auto* damp_opt = mpe->add_option("--damping", damping);
  mpe->add_option("--mode", mode, "jacobi|gs");
  mpe->add_option("--init", init, "even|br");
  mpe->add_option("--out", out);
  mpe->add_option("--gain-out", gain_out, "gain matrix CSV");

  auto* pareto = lti->add_subcommand("pareto", "H2 Pareto front over a weight grid");
  pareto->add_option("--L", L)->required()->check(CLI::PositiveNumber);
  pareto->add_option("--grid", grid, "JSON array of [alpha1, alpha2, alpha3] (inline or file)")->required();
  pareto->add_option("--out", out, "front CSV")->required();
  auto* pareto_iter = pareto->add_option("--max-iter", max_iter);
  auto* pareto_tol = pareto->add_option("--tol-grad", tol_grad);
  auto* pareto_restarts = pareto->add_option("--restarts", restarts);

  auto* op = lti->add_subcommand("operator", "optimize the pricing rule");
  op->add_option("--L", L)->required()->check(CLI::PositiveNumber);
  op->add_option("--alpha1", alpha1);
  op->add_option("--alpha2", alpha2);
  op->add_option("--budget", budget)->required();
  auto* op_seed = op->add_option("--seed", seed);
  auto* op_restarts = op->add_option("--restarts", restarts);
  op->add_option("--out", out);
  op->add_option("--gain-out", gain_out, "gain matrix CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*strategy || *metrics || *simulate) {
      const MarketParamsL2 p = parse_params(params);
      const ArchSpec a = resolve_arch(arch, p, rs_constant);
      run.config = {{"arch", arch},
                    {"params",
                     {{"q1", p.q1}, {"q2", p.q2}, {"mu1", p.mu1}, {"mu2", p.mu2}, {"sigma1", p.sigma1},
                      {"sigma2", p.sigma2}}}};
      if (arch.rfind("rs:", 0) == 0) run.config["rs_constant"] = rs_constant;

      if (*strategy) {
        json r = strategy_json(a.strategy);
        r["arch"] = arch;
        emit(run, r, out);
      } else if (*metrics) {
        const auto m = stationary_moments(a.strategy, p);
        json r{{"arch", arch},
               {"strategy", strategy_json(a.strategy)},
               {"moments",
                {{"mean_x", m.mean_x}, {"second_x", m.second_x}, {"var_x", m.var_x()}, {"mean_u", m.mean_u},
                 {"second_u", m.second_u}, {"var_u", m.var_u()}}},
               {"efficiency", efficiency(a.strategy, p)}};
        if (threshold_opt->count()) {
          run.config["threshold"] = threshold;
          const auto rb = risk_upper_bound(a.strategy, p, threshold);
          r["risk_bound"] = {{"threshold", threshold},
                             {"m1", rb.m1},
                             {"x_tail_bound", rb.x_tail_bound},
                             {"condition_holds", rb.condition_holds},
                             {"demand_risk_bound", rb.demand_risk_bound ? json(*rb.demand_risk_bound) : json()}};
        }
        emit(run, r, out);
      } else {
        json resolved;
        SimConfig c = parse_sim_config(config, resolved);
        c.seed = resolve_seed(sim_seed, seed, c.seed);
        c.threads = threads;
        c.keep_series = !series.empty();
        run.seed = c.seed;
        resolved["seed"] = c.seed;
        run.config["sim"] = resolved;
        const PathStats st = simulate_l2(a.strategy, p, c);
        json r = path_stats_json(st);
        r["arch"] = arch;
        r["strategy"] = strategy_json(a.strategy);
        r["seed"] = c.seed;
        if (!series.empty()) {
          std::ostringstream os;
          write_series_csv(os, st.series);
          write_output(run, series, os.str());
        }
        if (out.empty()) {
          std::cout << r.dump(2) << "\n";
          if (!series.empty()) write_manifest(run, series);
        } else {
          emit(run, r, out);
        }
      }
      return 0;
    }

    if (*build) {
      const auto ss = build_state_space(L);
      run.config = {{"L", L}};
      if (out.empty()) {
        json idx = json::array();
        for (int pos = 0; pos < ss.Dc; ++pos) {
          const auto [l, tau] = ss.agent(pos);
          idx.push_back({{"position", pos}, {"l", l}, {"tau", tau}});
        }
        std::cout << json{{"L", L}, {"Dc", ss.Dc}, {"positions", idx}, {"R1", matrix_json(ss.R1)},
                          {"R2", matrix_json(ss.R2)}}
                         .dump(2)
                  << "\n";
      } else {
        write_output(run, out + ".R1.csv", matrix_csv(ss.R1));
        write_output(run, out + ".R2.csv", matrix_csv(ss.R2));
        write_manifest(run, out);
      }
      return 0;
    }

    if (*h2) {
      const Eigen::MatrixXd F = read_matrix_csv(fs::path(gain));
      if (F.rows() != F.cols()) invalid("gain matrix must be square");
      const auto ss = build_state_space(infer_L(F.rows()));
      const auto a = parse_list(alpha, "--alpha");
      if (a.size() != 3) invalid("--alpha needs three comma-separated weights");
      const auto w = OutputWeights::normalized(a[0], a[1], a[2]);
      run.config = {{"gain", gain}, {"alpha", a}};
      const auto rep = h2_norms(F, ss);
      emit(run,
           {{"L", ss.L},
            {"z1sq", rep.z1sq},
            {"z2sq", rep.z2sq},
            {"z3sq", rep.z3sq},
            {"weights", {w.alpha1, w.alpha2, w.alpha3}},
            {"objective", rep.weighted(w)},
            {"spectral_radius", FeedbackGain{F}.spectral_radius(ss)}},
           out);
      return 0;
    }

    if (*mpe) {
      PricingRule pr;
      StateSpace ss;
      if (pricing == "marginal-cost") {
        if (L < 1) invalid("--pricing marginal-cost needs --L");
        ss = build_state_space(L);
        pr = PricingRule::marginal_cost(ss);
      } else {
        const json j = load_json(pricing, "pricing");
        check_keys(j, "pricing", {"q1", "q2"}, {"q1", "q2"});
        pr = {to_vector(j["q1"], "pricing q1"), to_vector(j["q2"], "pricing q2")};
        ss = build_state_space(infer_L(pr.q1.size()));
        if (L > 0 && L != ss.L) invalid("--L disagrees with the pricing vector length");
      }
      FixedPointConfig cfg;
      if (tol_opt->count()) cfg.tol = tol;
      if (iter_opt->count()) cfg.max_iter = max_iter;
      if (damp_opt->count()) cfg.damping = damping;
      cfg.mode = parse_mode(mode);
      if (init != "even" && init != "br") invalid("--init must be even or br");
      cfg.init = init == "even" ? InitialGain::EvenSplit : InitialGain::BoundedlyRational;
      run.config = {{"L", ss.L}, {"q1", vector_json(pr.q1)}, {"q2", vector_json(pr.q2)}, {"tol", cfg.tol},
                    {"max_iter", cfg.max_iter}, {"damping", cfg.damping}, {"mode", to_string(cfg.mode)},
                    {"init", init}};
      const MpeResult res = solve_mpe(pr, ss, cfg);
      const auto& d = res.diagnostics;
      json r{{"L", ss.L},
             {"gain", matrix_json(res.gain.F)},
             {"diagnostics",
              {{"iterations", d.iterations}, {"attempts", d.attempts}, {"damping_used", d.damping_used},
               {"residual", d.residual}, {"spectral_radius", d.spectral_radius},
               {"stability_margin", d.stability_margin}, {"mode", to_string(d.mode)}}}};
      if (!gain_out.empty()) write_output(run, gain_out, matrix_csv(res.gain.F));
      if (out.empty() && !gain_out.empty()) {
        std::cout << r.dump(2) << "\n";
        write_manifest(run, gain_out);
      } else {
        emit(run, r, out);
      }
      return 0;
    }

    if (*pareto) {
      const auto ss = build_state_space(L);
      const auto weights = parse_grid(grid);
      SynthesisConfig cfg;
      cfg.threads = threads;
      if (pareto_iter->count()) cfg.max_iter = max_iter;
      if (pareto_tol->count()) cfg.tol_grad = tol_grad;
      if (pareto_restarts->count()) cfg.restarts = restarts;
      json wj = json::array();
      for (const auto& w : weights) wj.push_back({w.alpha1, w.alpha2, w.alpha3});
      run.config = {{"L", L}, {"grid", wj}, {"max_iter", cfg.max_iter}, {"tol_grad", cfg.tol_grad},
                    {"restarts", cfg.restarts}};
      const FrontResult front = trace_front(weights, ss, cfg);
      std::ostringstream csv;
      csv << std::setprecision(kCsvDigits);
      csv << "alpha1,alpha2,alpha3,z1sq,z2sq,z3sq,objective,iterations,grad_norm,converged\n";
      for (const auto& p : front.points)
        csv << p.weights.alpha1 << ',' << p.weights.alpha2 << ',' << p.weights.alpha3 << ',' << p.report.z1sq << ','
            << p.report.z2sq << ',' << p.report.z3sq << ',' << p.objective << ',' << p.diagnostics.iterations << ','
            << p.diagnostics.grad_norm << ',' << (p.diagnostics.converged ? 1 : 0) << '\n';
      write_output(run, out, csv.str());
      write_manifest(run, out);
      for (const auto& w : front.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << json{{"points", front.points.size()}, {"grid", weights.size()}, {"warnings", front.warnings}}.dump(2)
                << "\n";
      return 0;
    }

    if (*op) {
      const auto ss = build_state_space(L);
      OperatorOptions opt;
      if (op_restarts->count()) opt.restarts = restarts;
      const std::uint64_t s = resolve_seed(op_seed, seed, 1);
      run.seed = s;
      run.config = {{"L", L}, {"alpha1", alpha1}, {"alpha2", alpha2}, {"budget", budget}, {"seed", s},
                    {"restarts", opt.restarts}};
      const OperatorResult res = optimize_pricing({alpha1, alpha2}, ss, budget, s, opt);
      json r{{"L", L},
             {"pricing", {{"q1", vector_json(res.pricing.q1)}, {"q2", vector_json(res.pricing.q2)}}},
             {"gain", matrix_json(res.gain.F)},
             {"objective", res.objective},
             {"baseline_objective", res.baseline_objective},
             {"evaluations", res.evaluations},
             {"seed", s}};
      if (!gain_out.empty()) write_output(run, gain_out, matrix_csv(res.gain.F));
      if (out.empty() && !gain_out.empty()) {
        std::cout << r.dump(2) << "\n";
        write_manifest(run, gain_out);
      } else {
        emit(run, r, out);
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
